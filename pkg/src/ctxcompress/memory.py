"""Retained / summarized / dropped partition of scored history.

Thresholds are empirical quantiles of the selection scores, so region sizes
track the history as it grows. Turns in the middle band are condensed per
contiguous block by an extractive TF-IDF summarizer.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import GatewayError, InputError
from .model import Conversation, Turn
from .scoring import ScoredTurn
from .text import content_counts, content_tokens, count_tokens, truncate_to_tokens

logger = logging.getLogger(__name__)

SUMMARY_MARKER = "[SUMMARY] "
MIN_SUMMARY_CAP = 10
Q_S_STEP = 0.05
Q_S_CEILING = 0.95

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class Thresholds:
    tau_s: float
    tau_l: float
    q_s: float
    q_l: float

    def __post_init__(self) -> None:
        if self.tau_l > self.tau_s:
            raise InputError("tau_l must not exceed tau_s")
        if not self.q_l < self.q_s:
            raise InputError("q_l must be below q_s")


@dataclass(frozen=True)
class SummarySegment:
    member_turn_ids: tuple[str, ...]
    first_index: int
    summary_text: str
    z_max: float
    token_count: int
    source: str = "extractive"

    def to_dict(self) -> dict:
        return {
            "member_turn_ids": list(self.member_turn_ids),
            "first_index": self.first_index,
            "summary_text": self.summary_text,
            "z_max": self.z_max,
            "token_count": self.token_count,
            "source": self.source,
        }


@dataclass(frozen=True)
class MemoryState:
    """Partition of history. ``band`` holds the turns routed to summarization."""

    retained: tuple[str, ...]
    band: tuple[str, ...]
    dropped: frozenset[str]
    summaries: tuple[SummarySegment, ...] = ()
    flags: frozenset[str] = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        return {
            "retained": list(self.retained),
            "summaries": [s.to_dict() for s in self.summaries],
            "dropped": sorted(self.dropped),
            "flags": sorted(self.flags),
        }


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Value at position ``ceil(q * n) - 1`` of the ascending sort."""
    ordered = sorted(values)
    # 1e-9 absorbs products like 0.3 * 10 == 3.0000000000000004
    k = max(1, math.ceil(q * len(ordered) - 1e-9))
    return ordered[min(k, len(ordered)) - 1]


def compute_thresholds(z_scores: Sequence[float], q_s: float, q_l: float) -> Thresholds:
    if not z_scores:
        raise InputError("compute_thresholds needs at least one score")
    if not 0.0 < q_l < q_s < 1.0:
        raise InputError(f"need 0 < q_l < q_s < 1 (got q_l={q_l}, q_s={q_s})")
    return Thresholds(nearest_rank(z_scores, q_s), nearest_rank(z_scores, q_l), q_s, q_l)


def partition(scored: Sequence[ScoredTurn], th: Thresholds) -> MemoryState:
    ordered = sorted(scored, key=lambda st: st.index)
    retained = tuple(st.turn_id for st in ordered if st.z > th.tau_s)
    band = tuple(st.turn_id for st in ordered if th.tau_l < st.z <= th.tau_s)
    dropped = frozenset(st.turn_id for st in ordered if st.z <= th.tau_l)
    return MemoryState(retained, band, dropped)


def adapt_retained_fit(
    state: MemoryState,
    budget: int,
    phi: float,
    th: Thresholds,
    scored: Sequence[ScoredTurn],
    token_counts: Mapping[str, int],
) -> tuple[MemoryState, Thresholds]:
    """Raise ``q_s`` in 0.05 steps until retained turns use at most ``phi * budget``.

    Stops at ``q_s = 0.95``. ``tau_l`` is untouched, so demoted turns land in
    the summarization band.
    """
    if budget <= 0:
        raise InputError("budget must be positive")
    if not 0.0 < phi <= 1.0:
        raise InputError("phi must be in (0, 1]")
    z = [st.z for st in scored]
    q_s = th.q_s
    while sum(token_counts[t] for t in state.retained) > phi * budget and q_s < Q_S_CEILING - 1e-9:
        q_s = round(min(Q_S_CEILING, q_s + Q_S_STEP), 10)
        th = Thresholds(nearest_rank(z, q_s), th.tau_l, q_s, th.q_l)
        state = partition(scored, th)
    return state, th


# extractive summarizer ------------------------------------------------------


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT.split(text.strip()) if s]


def contiguous_blocks(turns: Sequence[Turn]) -> list[list[Turn]]:
    blocks: list[list[Turn]] = []
    for turn in sorted(turns, key=lambda t: t.index):
        if blocks and blocks[-1][-1].index + 1 == turn.index:
            blocks[-1].append(turn)
        else:
            blocks.append([turn])
    return blocks


def idf_table(conversation: Conversation | Sequence[Turn]) -> dict[str, float]:
    """``ln(N / df)`` over the turns of one conversation."""
    turns = conversation.turns if isinstance(conversation, Conversation) else conversation
    df: dict[str, int] = {}
    for turn in turns:
        for tok in content_tokens(turn.text):
            df[tok] = df.get(tok, 0) + 1
    n = len(turns)
    return {tok: math.log(n / d) for tok, d in df.items()}


def sentence_weight(sentence: str, idf: Mapping[str, float]) -> float:
    """Mean of ``tf * idf`` over the sentence's distinct content tokens."""
    counts = content_counts(sentence)
    if not counts:
        return 0.0
    return sum(n * idf.get(tok, 0.0) for tok, n in counts.items()) / len(counts)


def summary_cap(block_tokens: int, cap_fraction: float) -> int:
    return max(MIN_SUMMARY_CAP, int(cap_fraction * block_tokens))


def extract_summary(sentences: Sequence[str], idf: Mapping[str, float], body_budget: int) -> str:
    ranked = sorted(range(len(sentences)), key=lambda k: (-sentence_weight(sentences[k], idf), k))
    chosen: list[int] = []
    used = 0
    for k in ranked:
        n = count_tokens(sentences[k])
        if n == 0:
            continue
        if used + n <= body_budget:
            chosen.append(k)
            used += n
    if not chosen and ranked:
        # no whole sentence fits: keep the head of the best one
        return truncate_to_tokens(sentences[ranked[0]], body_budget)
    return " ".join(sentences[k] for k in sorted(chosen))


def summarize_band(
    band_turns: Sequence[Turn],
    conversation: Conversation | Sequence[Turn],
    cap_fraction: float = 0.25,
    z_of: Mapping[str, float] | None = None,
    remote: Callable[[str, int], str] | None = None,
    flags: set[str] | None = None,
    idf: Mapping[str, float] | None = None,
) -> list[SummarySegment]:
    """Condense each maximal contiguous block of ``band_turns``.

    ``remote`` is an optional abstractive summarizer ``(block_text, cap) ->
    text``; its output is re-truncated locally and any :class:`GatewayError`
    falls back to the extractive path with a ``summary-fallback`` flag.
    """
    if not band_turns:
        return []
    if idf is None:
        idf = idf_table(conversation)
    z_of = z_of or {}
    marker_tokens = count_tokens(SUMMARY_MARKER)
    segments = []
    for block in contiguous_blocks(band_turns):
        block_tokens = sum(t.token_count for t in block)
        cap = summary_cap(block_tokens, cap_fraction)
        body_budget = cap - marker_tokens
        body = None
        source = "extractive"
        if remote is not None:
            try:
                raw = remote(" ".join(t.text for t in block), cap)
                body = truncate_to_tokens(strip_marker(raw).strip(), body_budget)
                source = "remote"
            except GatewayError as exc:
                logger.warning("remote summarizer failed, using extractive path: %s", exc)
                if flags is not None:
                    flags.add("summary-fallback")
        if body is None:
            sentences = [s for t in block for s in split_sentences(t.text)]
            body = extract_summary(sentences, idf, body_budget)
        text = SUMMARY_MARKER + body
        ids = tuple(t.turn_id for t in block)
        segments.append(
            SummarySegment(
                member_turn_ids=ids,
                first_index=block[0].index,
                summary_text=text,
                z_max=max((z_of.get(i, 0.0) for i in ids), default=0.0),
                token_count=count_tokens(text),
                source=source,
            )
        )
    return segments


def strip_marker(text: str) -> str:
    return text[len(SUMMARY_MARKER):] if text.startswith(SUMMARY_MARKER) else text
