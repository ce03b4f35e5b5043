"""BLEU, loss terms and the composite objectives used for evaluation and tuning."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InputError
from .text import content_token_list, tokenize

MAX_ORDER = 4


@dataclass(frozen=True)
class ObjectiveWeights:
    eta1: float = 1.0
    eta2: float = 0.5
    eta3: float = 1.0

    def __post_init__(self) -> None:
        for name in ("eta1", "eta2", "eta3"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{name} must be a finite real >= 0")


@dataclass(frozen=True)
class ObjectiveReport:
    l_task: float
    l_coh: float
    l_token: float
    l_rec: float
    l_comp: float
    l_final: float
    flags: frozenset[str] = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        return {
            "l_task": self.l_task,
            "l_coh": self.l_coh,
            "l_token": self.l_token,
            "l_rec": self.l_rec,
            "l_comp": self.l_comp,
            "l_final": self.l_final,
            "flags": sorted(self.flags),
        }


def _ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_tokens(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence BLEU-4 on pre-tokenized input.

    Clipped n-gram precisions; for n >= 2 a zero match count with a non-empty
    candidate order becomes (0 + 1) / (total + 1). Orders the candidate is too
    short to have are left out of the geometric mean. A zero unigram
    precision is never smoothed.
    """
    c, r = len(candidate), len(reference)
    if c == 0 or r == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, MAX_ORDER + 1):
        cand = _ngrams(candidate, n)
        total = sum(cand.values())
        if total == 0:
            continue
        ref = _ngrams(reference, n)
        matched = sum(min(k, ref[g]) for g, k in cand.items() if g in ref)
        if matched == 0:
            if n == 1:
                return 0.0
            matched, total = 1, total + 1
        log_sum += math.log(matched / total)
        orders += 1
    bp = math.exp(1.0 - r / c) if c < r else 1.0
    return min(1.0, bp * math.exp(log_sum / orders))


def bleu(candidate: str, reference: str, flags: set[str] | None = None) -> float:
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        if flags is not None:
            flags.add("bleu-empty-input")
        return 0.0
    return bleu_tokens(cand, ref)


def reconstruction_loss(history_text: str, context_text: str, flags: set[str] | None = None) -> float:
    """``1 - BLEU(candidate=expanded context, reference=original history)``.

    Callers strip summary markers before passing ``context_text``.
    """
    if not tokenize(history_text):
        raise InputError("reconstruction_loss needs a non-empty history")
    return 1.0 - bleu(context_text, history_text, flags)


def token_f1(generated: str, gold: str) -> float:
    g = Counter(content_token_list(generated))
    r = Counter(content_token_list(gold))
    common = sum((g & r).values())
    if common == 0:
        return 0.0
    precision = common / sum(g.values())
    recall = common / sum(r.values())
    return 2 * precision * recall / (precision + recall)


def task_loss(generated_answer: str | None, gold_answer: str | None, flags: set[str] | None = None) -> float:
    if generated_answer is None or gold_answer is None:
        if flags is not None:
            flags.add("no-qa-pairs")
        return 0.0
    return 1.0 - token_f1(generated_answer, gold_answer)


def coherence_loss(dropped: Sequence) -> float:
    """Mean ``s * (1 - c)`` over discarded turns (objects with ``s`` and ``c``)."""
    if not dropped:
        return 0.0
    return sum(d.s * (1.0 - d.c) for d in dropped) / len(dropped)


def token_loss(ratio: float) -> float:
    if not 0.0 <= ratio <= 1.0:
        raise InputError(f"ratio must be in [0, 1] (got {ratio})")
    return ratio


def compose(
    l_task: float,
    l_coh: float,
    l_token: float,
    l_rec: float,
    w: ObjectiveWeights,
    flags: frozenset[str] | set[str] = frozenset(),
) -> ObjectiveReport:
    for name, v in (("l_task", l_task), ("l_coh", l_coh), ("l_token", l_token), ("l_rec", l_rec)):
        if not math.isfinite(v):
            raise InputError(f"{name} is not finite")
        if v < 0:
            raise InputError(f"{name} must be >= 0")
    l_comp = l_task + w.eta1 * l_coh + w.eta2 * l_token
    l_final = l_comp + w.eta3 * l_rec
    return ObjectiveReport(l_task, l_coh, l_token, l_rec, l_comp, l_final, frozenset(flags))
