"""Dialogue entropy, dynamic token budget and greedy selection under it."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InputError
from .model import Turn
from .text import content_token_list

logger = logging.getLogger(__name__)

ORIENTATIONS = ("prose", "literal")


@dataclass(frozen=True)
class BudgetConfig:
    b_max: int = 1536
    b_min: int = 512
    lam: float = 768.0
    window: int = 10

    def __post_init__(self) -> None:
        if self.b_max <= 0:
            raise InputError("b_max must be > 0")
        if not 0 <= self.b_min <= self.b_max:
            raise InputError("need 0 <= b_min <= b_max")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise InputError("lambda must be a finite real >= 0")
        if self.lam > self.b_max - self.b_min:
            raise InputError("lambda must not exceed b_max - b_min")
        if self.window <= 0:
            raise InputError("entropy window must be > 0")


@dataclass(frozen=True)
class Segment:
    """A candidate or admitted piece of context."""

    kind: str  # "retained" | "summary"
    text: str
    token_count: int
    z: float
    index: int
    turn_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "index": self.index,
            "turn_ids": list(self.turn_ids),
            "text": self.text,
            "token_count": self.token_count,
            "z": self.z,
        }


@dataclass(frozen=True)
class CompressedContext:
    segments: tuple[Segment, ...]
    total_tokens: int
    budget: int
    ratio: float = 0.0
    flags: frozenset[str] = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        return {
            "segments": [s.to_dict() for s in self.segments],
            "total_tokens": self.total_tokens,
            "budget": self.budget,
            "ratio": self.ratio,
            "flags": sorted(self.flags),
        }


def dialogue_entropy(recent_turns: Sequence[Turn], w: int = 10) -> float:
    """Normalized Shannon entropy of content-token frequencies in the last ``w`` turns."""
    if w <= 0:
        raise InputError("entropy window must be > 0")
    counts: Counter[str] = Counter()
    for turn in list(recent_turns)[-w:]:
        counts.update(content_token_list(turn.text))
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = -sum((n / total) * math.log(n / total) for n in counts.values())
    h_hat = h / math.log(max(len(counts), 2))
    return min(1.0, max(0.0, h_hat))


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def dynamic_budget(h_hat: float, cfg: BudgetConfig, orientation: str = "prose") -> int:
    """Token budget for one step.

    ``prose``: ``b_max - lam * (1 - h_hat)``; more uncertainty, more room.
    ``literal``: ``b_max - lam * h_hat``.
    """
    if not 0.0 <= h_hat <= 1.0:
        raise InputError(f"h_hat must be in [0, 1] (got {h_hat})")
    if orientation == "prose":
        raw = cfg.b_max - cfg.lam * (1.0 - h_hat)
    elif orientation == "literal":
        raw = cfg.b_max - cfg.lam * h_hat
    else:
        raise InputError(f"unknown budget orientation {orientation!r}")
    return min(cfg.b_max, max(cfg.b_min, _round_half_up(raw)))


def select_under_budget(candidates: Sequence[Segment], b_t: int, history_tokens: int | None = None) -> CompressedContext:
    """Greedy admission by descending z, skipping anything that would overflow.

    Equal scores go to the chronologically earlier segment. The admitted set is
    returned in chronological order.
    """
    flags: set[str] = set()
    if b_t <= 0:
        logger.warning("non-positive budget %d; returning empty context", b_t)
        return CompressedContext((), 0, b_t, 0.0, frozenset({"non-positive-budget"}))
    admitted = []
    used = 0
    for seg in sorted(candidates, key=lambda s: (-s.z, s.index)):
        if seg.token_count < 1:
            raise InputError("candidate segments need token_count >= 1")
        if used + seg.token_count <= b_t:
            admitted.append(seg)
            used += seg.token_count
    if candidates and not admitted:
        logger.warning("budget %d admits no candidate", b_t)
        flags.add("starved")
    admitted.sort(key=lambda s: s.index)
    ratio = compression_ratio(used, history_tokens) if history_tokens else 0.0
    return CompressedContext(tuple(admitted), used, b_t, ratio, frozenset(flags))


def compression_ratio(context_tokens: int, history_tokens: int) -> float:
    if history_tokens <= 0:
        raise InputError("history_tokens must be > 0")
    return context_tokens / history_tokens
