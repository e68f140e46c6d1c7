"""Self-speculative decoding: draft, verify in a tree, accept multiple tokens.

One forward pass drafts a greedy (token, confidence) pair for every masked
position.  The highest-confidence positions of the current block become an
ordered candidate list, and a verification tree materializes the states that
would exist if successive candidates were accepted.  A single batched
forward then scores every node, and a walk from the root accepts a candidate
exactly when the parent node's own stepwise choice matches it.  The deepest
validated node contributes one further token (its own stepwise choice), so a
draft of length N can yield N+1 tokens per round while the output stays
token-identical to plain stepwise decoding.

Tree shapes:

* greedy: a linear chain, N+1 nodes.  Fails as soon as stepwise order
  deviates from draft-confidence order.
* mix_order: the chain plus one skip-ahead branch leaf per chain node that
  has a grandchild (2N nodes total).  A branch absorbs the common failure
  where stepwise picks candidate d+2 before candidate d+1; branches get no
  children of their own.
* kary: every candidate position expands into its top-k draft tokens,
  sum(k^i, i=0..N) nodes.  Supported for analysis; too large to batch
  profitably, so the decode loop never builds one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import MaskedModel, softmax_matrix
from .sequence import (
    BlockSchedule,
    SequenceState,
    current_block,
    place_token,
    schedule_for,
)
from .stepwise import (
    Candidates,
    DecodeTrace,
    StepRecord,
    choose_step,
    decode_remaining,
)

TREE_SHAPES = ("greedy", "mix_order", "kary")


@dataclass(frozen=True)
class Draft:
    """Greedy prediction for one masked position."""

    token: int
    confidence: float
    candidates: Candidates  # top-k (token, probability), highest first


@dataclass(frozen=True)
class DraftSet:
    """Per-position drafts; the domain is the masked positions of the state
    the drafts were taken from."""

    drafts: dict[int, Draft]

    def __len__(self) -> int:
        return len(self.drafts)

    def __contains__(self, pos: int) -> bool:
        return pos in self.drafts

    def __getitem__(self, pos: int) -> Draft:
        return self.drafts[pos]

    def positions(self) -> tuple[int, ...]:
        return tuple(sorted(self.drafts))


def drafts_from_logits(
    state: SequenceState, logits: np.ndarray, topk: int = 5
) -> DraftSet:
    """Extract drafts for every masked position of state from a logit matrix.

    Used both for fresh drafting (logits from a forward on state itself) and
    for the free refresh after a verification round, where the logits come
    from the deepest accepted node and may be slightly stale; staleness only
    costs acceptance rate because every draft is re-verified before use.
    """
    masked = state.masked_positions()
    if not masked:
        raise ValueError("state has no masked positions to draft for")
    k = max(1, topk)
    rows = softmax_matrix(np.asarray(logits, dtype=np.float64)[np.asarray(masked)])
    drafts: dict[int, Draft] = {}
    if k == 1:
        toks = np.argmax(rows, axis=1)  # first max, lowest-id tie-break
        confs = rows[np.arange(len(masked)), toks]
        for pos, tok, conf in zip(masked, toks, confs):
            cands = ((int(tok), float(conf)),)
            drafts[pos] = Draft(token=cands[0][0], confidence=cands[0][1],
                                candidates=cands)
        return DraftSet(drafts=drafts)
    order = np.argsort(-rows, axis=1, kind="stable")[:, :k]
    for i, pos in enumerate(masked):
        cands = tuple((int(t), float(rows[i, t])) for t in order[i])
        drafts[pos] = Draft(token=cands[0][0], confidence=cands[0][1],
                            candidates=cands)
    return DraftSet(drafts=drafts)


def self_draft(model: MaskedModel, state: SequenceState, topk: int = 5) -> DraftSet:
    """One forward pass; greedy draft for every masked position."""
    logits = model.forward([state])[0]
    return drafts_from_logits(state, logits, topk)


@dataclass(frozen=True)
class CandidateList:
    """Verification order: current-block positions by descending confidence,
    then (only if the block ran short) next-block positions by the same rule."""

    entries: tuple[tuple[int, int], ...]  # (position, draft token)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int) -> tuple[int, int]:
        return self.entries[idx]

    def positions(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.entries)


def select_candidates(
    state: SequenceState, drafts: DraftSet, n: int
) -> CandidateList:
    """Choose up to n (position, draft token) pairs for verification.

    May return fewer than n entries when the current and next block together
    hold fewer masked positions; the decode loop treats that as the signal
    to fall back to stepwise decoding.
    """
    if n < 1:
        raise ValueError("candidate count must be >= 1")
    schedule = schedule_for(state)
    block_idx = current_block(state, schedule)
    if block_idx is None:
        return CandidateList(entries=())

    def ranked(block: range) -> list[int]:
        positions = [p for p in block if state.is_masked(p)]
        for p in positions:
            if p not in drafts:
                raise ValueError(f"drafts do not cover masked position {p}")
        return sorted(positions, key=lambda p: (-drafts[p].confidence, p))

    chosen = ranked(schedule[block_idx])[:n]
    if len(chosen) < n and block_idx + 1 < len(schedule):
        chosen += ranked(schedule[block_idx + 1])[: n - len(chosen)]
    return CandidateList(entries=tuple((p, drafts[p].token) for p in chosen))


# ---------------------------------------------------------------------------
# Verification trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeNode:
    index: int
    parent: int | None
    depth: int
    state: SequenceState
    # The (position, token) the parent's stepwise choice must equal for this
    # node to be validated; None for the root.
    expectation: tuple[int, int] | None
    is_branch: bool = False


@dataclass(frozen=True)
class VerificationTree:
    shape: str
    nodes: tuple[TreeNode, ...]
    children: dict[int, tuple[int, ...]]  # node index -> child indices

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]


def build_tree(
    base: SequenceState,
    candidates: CandidateList,
    drafts: DraftSet,
    shape: str = "greedy",
    k: int = 2,
) -> VerificationTree:
    """Materialize the verification tree for one round.

    Node counts are exact laws of the shape: N+1 for greedy, 2N for
    mix_order, and sum(k^i for i in 0..N) for kary.  Chain node at depth d
    holds the first d candidate tokens; a mix_order branch under depth d
    holds candidates 1..d plus candidate d+2's token, skipping d+1.
    """
    n = len(candidates)
    if n < 1:
        raise ValueError("cannot build a verification tree from zero candidates")
    if shape not in TREE_SHAPES:
        raise ValueError(f"unknown tree shape {shape!r}")

    if shape == "kary":
        return _build_kary(base, candidates, drafts, k)

    nodes = [TreeNode(index=0, parent=None, depth=0, state=base, expectation=None)]
    children: dict[int, list[int]] = {}
    state = base
    for d in range(1, n + 1):
        pos, tok = candidates[d - 1]
        state = place_token(state, pos, tok)
        nodes.append(
            TreeNode(index=d, parent=d - 1, depth=d, state=state,
                     expectation=(pos, tok))
        )
        children.setdefault(d - 1, []).append(d)

    if shape == "mix_order":
        # One skip-ahead leaf per chain node that has a grandchild: the
        # parent at depth d may validate candidate d+2 directly when
        # stepwise passes over candidate d+1.
        for d in range(0, n - 1):
            pos, tok = candidates[d + 1]
            branch_state = place_token(nodes[d].state, pos, tok)
            idx = len(nodes)
            nodes.append(
                TreeNode(index=idx, parent=d, depth=d + 1, state=branch_state,
                         expectation=(pos, tok), is_branch=True)
            )
            children.setdefault(d, []).append(idx)

    return VerificationTree(
        shape=shape,
        nodes=tuple(nodes),
        children={p: tuple(c) for p, c in children.items()},
    )


def _build_kary(
    base: SequenceState, candidates: CandidateList, drafts: DraftSet, k: int
) -> VerificationTree:
    if k < 1:
        raise ValueError("kary arity must be >= 1")
    for pos, _ in candidates.entries:
        if len(drafts[pos].candidates) < k:
            raise ValueError(
                f"kary tree needs {k} candidate tokens at position {pos}, "
                f"drafts record only {len(drafts[pos].candidates)}"
            )
    nodes = [TreeNode(index=0, parent=None, depth=0, state=base, expectation=None)]
    children: dict[int, list[int]] = {}
    frontier = [0]
    for d in range(len(candidates)):
        pos, _ = candidates[d]
        next_frontier = []
        for parent_idx in frontier:
            parent = nodes[parent_idx]
            for tok, _prob in drafts[pos].candidates[:k]:
                idx = len(nodes)
                nodes.append(
                    TreeNode(index=idx, parent=parent_idx, depth=d + 1,
                             state=place_token(parent.state, pos, tok),
                             expectation=(pos, tok))
                )
                children.setdefault(parent_idx, []).append(idx)
                next_frontier.append(idx)
        frontier = next_frontier
    return VerificationTree(
        shape="kary",
        nodes=tuple(nodes),
        children={p: tuple(c) for p, c in children.items()},
    )


# ---------------------------------------------------------------------------
# Batch verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyResult:
    """Outcome of one verification round."""

    accepted: tuple[tuple[int, int, float], ...]  # (position, token, confidence)
    leaf_logits: np.ndarray  # logits of the deepest validated node
    leaf_index: int
    batch_size: int


def batch_verify(model: MaskedModel, tree: VerificationTree) -> VerifyResult:
    """Score every node in one batched forward and walk the tree.

    At each validated node the stepwise choice is computed from that node's
    own logits; a child whose expectation equals the choice is validated in
    turn.  When no child matches (or none exists), the node's own choice is
    accepted as the final token of the round, which guarantees progress of
    at least one token.
    """
    batch = model.forward([node.state for node in tree.nodes])
    schedule = schedule_for(tree.root.state)

    accepted: list[tuple[int, int, float]] = []
    cur = 0
    while True:
        node = tree.nodes[cur]
        if current_block(node.state, schedule) is None:
            break  # every position decoded; nothing further to choose
        probs = softmax_matrix(batch[cur])
        pos, tok, conf = choose_step(node.state, schedule, probs)
        matched = None
        for child_idx in tree.children.get(cur, ()):
            if tree.nodes[child_idx].expectation == (pos, tok):
                matched = child_idx
                break
        if matched is None:
            accepted.append((pos, tok, conf))
            break
        accepted.append((pos, tok, conf))
        cur = matched
    return VerifyResult(
        accepted=tuple(accepted),
        leaf_logits=batch[cur],
        leaf_index=cur,
        batch_size=len(tree.nodes),
    )


# ---------------------------------------------------------------------------
# Full decode loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundStats:
    iteration: int
    batch_size: int
    accepted: int
    cumulative_forwards: int


@dataclass(frozen=True)
class SsdResult:
    state: SequenceState
    rounds: tuple[RoundStats, ...]
    trace: DecodeTrace
    forward_count: int
    fallback_steps: int


def ssd_decode(
    model: MaskedModel,
    state: SequenceState,
    n: int,
    shape: str = "greedy",
    topk: int = 5,
) -> SsdResult:
    """Decode with self-speculation: draft once, then verify rounds.

    Each round costs one batched forward pass and accepts between 1 and n+1
    tokens.  When fewer than n candidate positions remain in scope the loop
    falls back to plain stepwise decoding for the remainder.  Draft refresh
    after a round reuses the deepest accepted node's logits, so no extra
    forward is spent on drafting after the first.
    """
    if n < 1:
        raise ValueError("draft length must be >= 1")
    if shape not in ("greedy", "mix_order"):
        raise ValueError(f"decode supports shapes 'greedy' and 'mix_order', not {shape!r}")
    if not state.masked_positions():
        raise ValueError("state has no masked positions to decode")

    start = state
    schedule = schedule_for(state)
    drafts = self_draft(model, state, topk)
    forwards = 1
    records: list[StepRecord] = []
    rounds: list[RoundStats] = []
    fallback_steps = 0

    while current_block(state, schedule) is not None:
        candidates = select_candidates(state, drafts, n)
        if len(candidates) < n:
            state, tail = decode_remaining(model, state, schedule, topk=0)
            records.extend(tail)
            forwards += len(tail)
            fallback_steps = len(tail)
            break
        tree = build_tree(state, candidates, drafts, shape)
        result = batch_verify(model, tree)
        forwards += 1
        for pos, tok, conf in result.accepted:
            state = place_token(state, pos, tok)
            records.append(StepRecord(position=pos, token=tok, confidence=conf))
        rounds.append(
            RoundStats(
                iteration=len(rounds),
                batch_size=result.batch_size,
                accepted=len(result.accepted),
                cumulative_forwards=forwards,
            )
        )
        if current_block(state, schedule) is not None:
            drafts = drafts_from_logits(state, result.leaf_logits, topk)

    trace = DecodeTrace(
        decoder="ssd",
        prompt_len=start.prompt_len,
        gen_len=start.gen_len,
        block_len=start.block_len,
        mask_id=start.mask_id,
        topk=0,
        records=tuple(records),
    )
    return SsdResult(
        state=state,
        rounds=tuple(rounds),
        trace=trace,
        forward_count=forwards,
        fallback_steps=fallback_steps,
    )
