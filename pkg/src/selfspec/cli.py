"""Command-line surface: decode, compare, analyze, sweep.

Exit codes: 0 success, 1 usage or configuration error, 2 losslessness
violation (speculative output differed from stepwise output, which indicates
a bug rather than an expected condition).
"""

from __future__ import annotations

import argparse
import json
import sys

from .analyzer import format_grid, reduction_grid
from .models import (
    FixtureMissError,
    MaskedModel,
    SynthModelConfig,
    synth_model,
    table_model,
)
from .reporting import (
    CompareReport,
    Report,
    RunConfig,
    merge_config,
    render_report,
)
from .sequence import SequenceState, initial_state
from .ssd import ssd_decode
from .stepwise import DecodeTrace, read_trace, stepwise_decode, write_trace


class LosslessnessError(Exception):
    """Speculative decode produced different tokens than stepwise decode."""


def build_model(config: RunConfig) -> MaskedModel:
    if config.backend == "synthetic":
        return synth_model(
            SynthModelConfig(
                seed=config.seed,
                vocab_size=config.vocab_size,
                sharpness=config.sharpness,
                context_window=config.context_window,
            )
        )
    model = table_model(config.table_path)
    if model.vocab_size != config.vocab_size:
        raise ValueError(
            f"table fixture has vocab_size {model.vocab_size}, "
            f"config says {config.vocab_size}"
        )
    return model


def start_state(config: RunConfig) -> SequenceState:
    # mask id sits one past the vocabulary so predictions can never emit it
    return initial_state(
        prompt=config.prompt,
        gen_len=config.gen_len,
        mask_id=config.vocab_size,
        block_len=config.block_len,
    )


def run_decode(config: RunConfig) -> tuple[Report, DecodeTrace]:
    config.validate()
    model = build_model(config)
    state = start_state(config)
    if config.strategy == "stepwise":
        final, trace = stepwise_decode(model, state, topk=config.topk)
        report = Report(
            config=config,
            tokens=final.tokens,
            baseline_forwards=config.gen_len,
            actual_forwards=config.gen_len,
            fallback_steps=0,
            rounds=(),
        )
        return report, trace
    result = ssd_decode(
        model, state, n=config.draft_len, shape=config.strategy, topk=config.topk
    )
    report = Report(
        config=config,
        tokens=result.state.tokens,
        baseline_forwards=config.gen_len,
        actual_forwards=result.forward_count,
        fallback_steps=result.fallback_steps,
        rounds=result.rounds,
    )
    return report, result.trace


def run_compare(config: RunConfig) -> CompareReport:
    """Run stepwise and the configured speculative strategy on the same
    model and prompt; raise LosslessnessError when outputs differ."""
    config.validate()
    if config.strategy == "stepwise":
        raise ValueError("compare needs a speculative strategy (greedy or mix_order)")
    model = build_model(config)
    state = start_state(config)
    baseline, _ = stepwise_decode(model, state, topk=0)
    result = ssd_decode(
        model, state, n=config.draft_len, shape=config.strategy, topk=config.topk
    )
    identical = baseline.tokens == result.state.tokens
    report = CompareReport(
        config=config,
        tokens=result.state.tokens,
        stepwise_forwards=config.gen_len,
        ssd_forwards=result.forward_count,
        identical=identical,
        fallback_steps=result.fallback_steps,
        rounds=result.rounds,
    )
    if not identical:
        raise LosslessnessError(
            f"{config.strategy} output diverged from stepwise output "
            f"(seed={config.seed}, gen_len={config.gen_len}, "
            f"block_len={config.block_len}, draft_len={config.draft_len})"
        )
    return report


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_ints(text: str) -> tuple[int, ...]:
    items = [piece for piece in text.replace(",", " ").split() if piece]
    return tuple(int(piece) for piece in items)


def _add_config_flags(sub: argparse.ArgumentParser, with_strategy: bool = True) -> None:
    sub.add_argument("--config", help="JSON file with run-config fields")
    sub.add_argument("--backend", choices=("synthetic", "table"))
    sub.add_argument("--seed", type=int)
    sub.add_argument("--vocab-size", type=int, dest="vocab_size")
    sub.add_argument("--sharpness", type=float)
    sub.add_argument("--context-window", type=int, dest="context_window")
    sub.add_argument("--table", dest="table_path", help="table-model fixture path")
    prompt = sub.add_mutually_exclusive_group()
    prompt.add_argument("--prompt", help="comma-separated prompt token ids")
    prompt.add_argument("--prompt-file", help="file of whitespace-separated ids")
    sub.add_argument("--gen-length", type=int, dest="gen_len")
    sub.add_argument("--block-length", type=int, dest="block_len")
    sub.add_argument("--draft-length", type=int, dest="draft_len")
    if with_strategy:
        sub.add_argument("--strategy", choices=("stepwise", "greedy", "mix_order"))
    sub.add_argument("--topk", type=int)
    sub.add_argument("--out", help="write the report here instead of stdout")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        base = RunConfig.from_dict(data)
    else:
        base = RunConfig()
    prompt = None
    if getattr(args, "prompt", None) is not None:
        prompt = _parse_ints(args.prompt)
    elif getattr(args, "prompt_file", None):
        with open(args.prompt_file, "r", encoding="utf-8") as fh:
            prompt = _parse_ints(fh.read())
    overrides = {
        "backend": args.backend,
        "seed": args.seed,
        "vocab_size": args.vocab_size,
        "sharpness": args.sharpness,
        "context_window": args.context_window,
        "table_path": args.table_path,
        "prompt": prompt,
        "gen_len": args.gen_len,
        "block_len": args.block_len,
        "draft_len": args.draft_len,
        "strategy": getattr(args, "strategy", None),
        "topk": args.topk,
    }
    return merge_config(base, overrides)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_decode(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report, trace = run_decode(config)
    if args.trace_out:
        write_trace(trace, args.trace_out)
    _emit(render_report(report), args.out)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report = run_compare(config)
    _emit(render_report(report), args.out)
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    trace = read_trace(args.trace)
    draft_lengths = _parse_ints(args.draft_length)
    topk_values = _parse_ints(args.topk)
    grid = reduction_grid(trace, draft_lengths, topk_values)
    _emit(format_grid(grid) + "\n", args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    draft_lengths = _parse_ints(args.draft_lengths)
    strategies = tuple(s for s in args.strategies.split(",") if s)
    if not draft_lengths or not strategies:
        raise ValueError("sweep needs at least one draft length and one strategy")
    for strategy in strategies:
        if strategy not in ("greedy", "mix_order"):
            raise ValueError(f"sweep strategies must be speculative, got {strategy!r}")
    lines = [json.dumps({"kind": "sweep", "version": 1}, sort_keys=True)]
    lines.append(json.dumps({"config": config.to_dict()}, sort_keys=True))
    for strategy in strategies:
        for n in draft_lengths:
            combo = merge_config(config, {"strategy": strategy, "draft_len": n})
            report = run_compare(combo)
            lines.append(
                json.dumps(
                    {
                        "sweep": {
                            "strategy": strategy,
                            "draft_len": n,
                            "stepwise_forwards": report.stepwise_forwards,
                            "ssd_forwards": report.ssd_forwards,
                            "fallback_steps": report.fallback_steps,
                            "reduction": report.reduction,
                            "speedup": report.speedup,
                            "identical": report.identical,
                        }
                    },
                    sort_keys=True,
                )
            )
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="selfspec",
        description="Speculative decoding for masked-diffusion text generation.",
    )
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)

    decode = subparsers.add_parser("decode", help="run one decoder, emit a report")
    _add_config_flags(decode)
    decode.add_argument("--trace-out", dest="trace_out", help="write the step trace here")
    decode.set_defaults(func=_cmd_decode)

    compare = subparsers.add_parser(
        "compare", help="run stepwise and a speculative strategy, check identity"
    )
    _add_config_flags(compare)
    compare.set_defaults(func=_cmd_compare)

    analyze = subparsers.add_parser(
        "analyze", help="idealized acceptance analysis over a recorded trace"
    )
    analyze.add_argument("--trace", required=True, help="trace file from decode")
    analyze.add_argument(
        "--draft-length", default="3,4,5", dest="draft_length",
        help="comma-separated draft lengths",
    )
    analyze.add_argument(
        "--topk", default="1,2,3,5", help="comma-separated candidate counts"
    )
    analyze.add_argument("--out", help="write the table here instead of stdout")
    analyze.set_defaults(func=_cmd_analyze)

    sweep = subparsers.add_parser(
        "sweep", help="compare strategies across draft lengths on one model"
    )
    _add_config_flags(sweep, with_strategy=False)
    sweep.add_argument(
        "--draft-lengths", default="3,4,5", dest="draft_lengths",
        help="comma-separated draft lengths",
    )
    sweep.add_argument(
        "--strategies", default="greedy,mix_order",
        help="comma-separated speculative strategies",
    )
    sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except LosslessnessError as exc:
        print(f"selfspec: losslessness violation: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FixtureMissError) as exc:
        print(f"selfspec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
