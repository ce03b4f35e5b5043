"""Per-turn importance, coherence stability and selection scores.

Defaults are deterministic lexical proxies:

* similarity   cosine of content-token frequency vectors
* recency      ``exp(-(t - i) / rho)``
* dependency   share of a turn's content tokens that reappear later
* contradiction  Jaccard overlap x negation asymmetry

Each proxy can be swapped by name through :func:`register_scorer`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import InputError
from .model import Query, Turn
from .text import DEFAULT_SPEC, content_counts, content_tokens, tokenize

NEGATION_WORDS = frozenset({"not", "no", "never", "none", "cannot"})
# The lexical tokenizer splits "don't" into "don", "t", so the n't marker is
# matched on raw text instead.
_NT_RE = re.compile(r"[^\W_]n['’]t\b", re.IGNORECASE)


@dataclass(frozen=True)
class ScoringWeights:
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2
    rho: float = 10.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{name} must be a finite real >= 0")
        if self.alpha + self.beta + self.gamma <= 0:
            raise InputError("alpha + beta + gamma must be > 0")
        if not math.isfinite(self.rho) or self.rho <= 0:
            raise InputError("rho must be > 0")


@dataclass(frozen=True)
class ScoredTurn:
    turn_id: str
    index: int
    s: float
    c: float
    z: float


def similarity(turn_text: str, query_text: str) -> float:
    a = content_counts(turn_text)
    b = content_counts(query_text)
    if not a or not b:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(n * b[tok] for tok, n in a.items() if tok in b)
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(n * n for n in a.values())) * math.sqrt(sum(n * n for n in b.values()))
    return min(1.0, dot / norm)


def recency(i: int, t: int, rho: float) -> float:
    if i > t or i < 0:
        raise InputError(f"recency requires 0 <= i <= t (got i={i}, t={t})")
    if rho <= 0:
        raise InputError("rho must be > 0")
    return math.exp(-(t - i) / rho)


def dependency(turn: Turn, later_turns: Sequence[Turn]) -> float:
    own = content_tokens(turn.text)
    if not own or not later_turns:
        return 0.0
    later: set[str] = set()
    for other in later_turns:
        if other.index <= turn.index:
            raise InputError("dependency: later_turns must follow the scored turn")
        later |= content_tokens(other.text)
    return len(own & later) / len(own)


def dependency_scores(turns: Sequence[Turn]) -> list[float]:
    """:func:`dependency` for every turn at once, linear in total tokens."""
    last_seen: dict[str, int] = {}
    token_sets = [content_tokens(t.text) for t in turns]
    for pos, toks in enumerate(token_sets):
        for tok in toks:
            last_seen[tok] = pos
    out = []
    for pos, toks in enumerate(token_sets):
        if not toks:
            out.append(0.0)
            continue
        hits = sum(1 for tok in toks if last_seen[tok] > pos)
        out.append(hits / len(toks))
    return out


def _has_negation(text: str) -> bool:
    if _NT_RE.search(text):
        return True
    return any(tok in NEGATION_WORDS for tok in tokenize(text))


def contradiction_prob(turn_text: str, prev_response_text: str | None) -> float:
    if prev_response_text is None:
        return 0.0
    a = content_tokens(turn_text)
    b = content_tokens(prev_response_text)
    union = a | b
    if not union:
        return 0.0
    jaccard = len(a & b) / len(union)
    if jaccard == 0.0:
        return 0.0
    asymmetric = _has_negation(turn_text) != _has_negation(prev_response_text)
    return jaccard if asymmetric else 0.0


def importance(sim: float, rec: float, dep: float, w: ScoringWeights) -> float:
    total = w.alpha + w.beta + w.gamma
    return (w.alpha * sim + w.beta * rec + w.gamma * dep) / total


def importance_for(turn: Turn, query: Query, later_turns: Sequence[Turn], w: ScoringWeights) -> float:
    return importance(
        similarity(turn.text, query.text),
        recency(turn.index, query.step, w.rho),
        dependency(turn, later_turns),
        w,
    )


def coherence(turn: Turn | str, prev_response: str | None, contradiction: Callable[[str, str | None], float] | None = None) -> float:
    text = turn.text if isinstance(turn, Turn) else turn
    p = (contradiction or contradiction_prob)(text, prev_response)
    if not 0.0 <= p <= 1.0:
        raise InputError(f"contradiction probability {p} outside [0,1]")
    return 1.0 - p


def selection_score(s: float, c: float) -> float:
    if not (0.0 <= s <= 1.0 and 0.0 <= c <= 1.0):
        raise InputError(f"selection_score needs s, c in [0,1] (got {s}, {c})")
    return s * c


def rank_order(scored: Sequence[ScoredTurn]) -> list[ScoredTurn]:
    """Descending z; equal scores keep chronological order."""
    return sorted(scored, key=lambda st: (-st.z, st.index))


# name registry -------------------------------------------------------------

SCORERS: dict[str, dict[str, Callable]] = {
    "similarity": {"lexical-cosine": similarity},
    "dependency": {"forward-reference": dependency_scores},
    "contradiction": {"negation-jaccard": contradiction_prob},
}

DEFAULT_SCORERS = {
    "similarity": "lexical-cosine",
    "dependency": "forward-reference",
    "contradiction": "negation-jaccard",
}


def register_scorer(kind: str, name: str, fn: Callable) -> None:
    """Make ``fn`` selectable from config as ``scorers[kind] = name``.

    similarity/contradiction take two texts; dependency takes the full turn
    list and returns one value per turn. Outputs must lie in [0, 1].
    """
    if kind not in SCORERS:
        raise InputError(f"unknown scorer kind {kind!r}")
    SCORERS[kind][name] = fn


def get_scorer(kind: str, name: str) -> Callable:
    try:
        return SCORERS[kind][name]
    except KeyError:
        raise InputError(f"no {kind} scorer registered as {name!r}") from None


def score_turns(
    turns: Sequence[Turn],
    query: Query,
    weights: ScoringWeights,
    prev_response: str | None = None,
    *,
    sim_fn: Callable[[str, str], float] = similarity,
    dep_fn: Callable[[Sequence[Turn]], list[float]] = dependency_scores,
    contradiction_fn: Callable[[str, str | None], float] = contradiction_prob,
) -> list[ScoredTurn]:
    """Score a chronological history against ``query``."""
    deps = dep_fn(turns)
    out = []
    for turn, dep in zip(turns, deps):
        s = _unit(importance(sim_fn(turn.text, query.text), recency(turn.index, query.step, weights.rho), dep, weights))
        c = coherence(turn, prev_response, contradiction_fn)
        out.append(ScoredTurn(turn.turn_id, turn.index, s, c, selection_score(s, c)))
    return out


def _unit(x: float) -> float:
    # guards 1.0000000000000002 from float rounding in the weighted mean
    return min(1.0, max(0.0, x))
