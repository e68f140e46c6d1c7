"""Lossless speculative decoding for masked-diffusion text generation.

The model drafts every masked position in one forward pass, a verification
tree re-checks the most confident candidates in one batched forward, and the
accepted prefix is guaranteed token-identical to plain stepwise decoding.
"""

from .analyzer import (
    ReductionGrid,
    RoundWindow,
    exact_reduction_at_full_match,
    format_grid,
    kary_tree_size,
    reduction_grid,
    topk_match_reduction,
    trace_windows,
    upper_bound,
)
from .models import (
    FixtureMissError,
    LogitsBatch,
    MaskedModel,
    RecordingModel,
    SynthModelConfig,
    SyntheticModel,
    TableModel,
    dump_table_fixture,
    load_table_fixture,
    predict_with_confidence,
    softmax_matrix,
    softmax_row,
    synth_model,
    table_model,
    topk_candidates,
)
from .reporting import (
    CompareReport,
    Report,
    RunConfig,
    read_report,
    render_report,
    report_from_lines,
    report_to_lines,
    write_report,
)
from .sequence import (
    BlockSchedule,
    IllegalWriteError,
    SequenceState,
    block_partition,
    current_block,
    initial_state,
    place_token,
    schedule_for,
    state_from_line,
    state_to_line,
)
from .ssd import (
    CandidateList,
    Draft,
    DraftSet,
    RoundStats,
    SsdResult,
    TreeNode,
    VerificationTree,
    VerifyResult,
    batch_verify,
    build_tree,
    drafts_from_logits,
    select_candidates,
    self_draft,
    ssd_decode,
)
from .stepwise import (
    DecodeTrace,
    StepRecord,
    read_trace,
    stepwise_decode,
    trace_from_lines,
    trace_to_lines,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BlockSchedule",
    "CandidateList",
    "CompareReport",
    "DecodeTrace",
    "Draft",
    "DraftSet",
    "FixtureMissError",
    "IllegalWriteError",
    "LogitsBatch",
    "MaskedModel",
    "RecordingModel",
    "ReductionGrid",
    "Report",
    "RoundStats",
    "RoundWindow",
    "RunConfig",
    "SequenceState",
    "SsdResult",
    "StepRecord",
    "SynthModelConfig",
    "SyntheticModel",
    "TableModel",
    "TreeNode",
    "VerificationTree",
    "VerifyResult",
    "batch_verify",
    "block_partition",
    "build_tree",
    "current_block",
    "drafts_from_logits",
    "dump_table_fixture",
    "exact_reduction_at_full_match",
    "format_grid",
    "initial_state",
    "kary_tree_size",
    "load_table_fixture",
    "place_token",
    "predict_with_confidence",
    "read_report",
    "read_trace",
    "reduction_grid",
    "render_report",
    "report_from_lines",
    "report_to_lines",
    "schedule_for",
    "select_candidates",
    "self_draft",
    "softmax_matrix",
    "softmax_row",
    "ssd_decode",
    "state_from_line",
    "state_to_line",
    "stepwise_decode",
    "synth_model",
    "table_model",
    "topk_candidates",
    "topk_match_reduction",
    "trace_from_lines",
    "trace_to_lines",
    "trace_windows",
    "upper_bound",
    "write_report",
    "write_trace",
]
