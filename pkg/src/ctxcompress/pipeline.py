"""Per-step compression driver and whole-conversation replay."""

from __future__ import annotations

import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

from . import budget as bud
from .budget import BudgetConfig, CompressedContext, Segment
from .errors import CompressionError, GatewayError, InputError, PipelineError
from .memory import (
    MemoryState,
    SummarySegment,
    Thresholds,
    adapt_retained_fit,
    compute_thresholds,
    idf_table,
    partition,
    strip_marker,
    summarize_band,
)
from .metrics import (
    ObjectiveReport,
    ObjectiveWeights,
    coherence_loss,
    compose,
    reconstruction_loss,
    task_loss,
    token_loss,
)
from .model import Conversation, Query, Turn
from .scoring import (
    DEFAULT_SCORERS,
    ScoredTurn,
    ScoringWeights,
    contradiction_prob,
    get_scorer,
    rank_order,
    score_turns,
)

logger = logging.getLogger(__name__)

FLOAT_DIGITS = 10

Answerer = Callable[[CompressedContext, str], str]


@dataclass(frozen=True)
class ThresholdConfig:
    q_s: float = 0.7
    q_l: float = 0.3
    phi: float = 0.6
    cap_fraction: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 < self.q_l < self.q_s < 1.0:
            raise InputError("need 0 < q_l < q_s < 1")
        if not 0.0 < self.phi <= 1.0:
            raise InputError("phi must be in (0, 1]")
        if not 0.0 < self.cap_fraction <= 1.0:
            raise InputError("cap_fraction must be in (0, 1]")


@dataclass(frozen=True)
class EngineConfig:
    scoring: ScoringWeights = field(default_factory=ScoringWeights)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    objective: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    seed: int = 0
    budget_orientation: str = "prose"
    scorers: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_SCORERS))
    summarizer: str = "extractive"
    query_every: int = 5

    def __post_init__(self) -> None:
        if self.budget_orientation not in bud.ORIENTATIONS:
            raise InputError(f"budget_orientation must be one of {bud.ORIENTATIONS}")
        if self.summarizer not in ("extractive", "remote"):
            raise InputError("summarizer must be 'extractive' or 'remote'")
        if self.query_every < 1:
            raise InputError("query_every must be >= 1")
        unknown = set(self.scorers) - set(DEFAULT_SCORERS)
        if unknown:
            raise InputError(f"unknown scorer kinds: {sorted(unknown)}")

    def to_dict(self) -> dict[str, Any]:
        b = self.budget
        return {
            "scoring": {"alpha": self.scoring.alpha, "beta": self.scoring.beta, "gamma": self.scoring.gamma, "rho": self.scoring.rho},
            "budget": {"b_max": b.b_max, "b_min": b.b_min, "lambda": b.lam, "window": b.window},
            "thresholds": {
                "q_s": self.thresholds.q_s,
                "q_l": self.thresholds.q_l,
                "phi": self.thresholds.phi,
                "cap_fraction": self.thresholds.cap_fraction,
            },
            "objective": {"eta1": self.objective.eta1, "eta2": self.objective.eta2, "eta3": self.objective.eta3},
            "seed": self.seed,
            "budget_orientation": self.budget_orientation,
            "scorers": {k: self.scorers.get(k, v) for k, v in DEFAULT_SCORERS.items()},
            "summarizer": self.summarizer,
            "query_every": self.query_every,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EngineConfig:
        """Inverse of :meth:`to_dict`; missing keys take defaults, unknown keys are rejected."""
        known = {"scoring", "budget", "thresholds", "objective", "seed", "budget_orientation", "scorers", "summarizer", "query_every"}
        _reject_unknown(data, known, "config")
        kw: dict[str, Any] = {}
        try:
            if "scoring" in data:
                _reject_unknown(data["scoring"], {"alpha", "beta", "gamma", "rho"}, "scoring")
                kw["scoring"] = ScoringWeights(**{k: float(v) for k, v in data["scoring"].items()})
            if "budget" in data:
                raw = dict(data["budget"])
                _reject_unknown(raw, {"b_max", "b_min", "lambda", "window"}, "budget")
                if "lambda" in raw:
                    raw["lam"] = float(raw.pop("lambda"))
                for key in ("b_max", "b_min", "window"):
                    if key in raw:
                        raw[key] = _as_int(raw[key], key)
                kw["budget"] = BudgetConfig(**raw)
            if "thresholds" in data:
                _reject_unknown(data["thresholds"], {"q_s", "q_l", "phi", "cap_fraction"}, "thresholds")
                kw["thresholds"] = ThresholdConfig(**{k: float(v) for k, v in data["thresholds"].items()})
            if "objective" in data:
                _reject_unknown(data["objective"], {"eta1", "eta2", "eta3"}, "objective")
                kw["objective"] = ObjectiveWeights(**{k: float(v) for k, v in data["objective"].items()})
            if "scorers" in data:
                kw["scorers"] = {**DEFAULT_SCORERS, **{str(k): str(v) for k, v in data["scorers"].items()}}
            if "seed" in data:
                kw["seed"] = _as_int(data["seed"], "seed")
            if "query_every" in data:
                kw["query_every"] = _as_int(data["query_every"], "query_every")
            for key in ("budget_orientation", "summarizer"):
                if key in data:
                    kw[key] = str(data[key])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"invalid config: {exc}") from exc
        return cls(**kw)


def _as_int(v: Any, name: str) -> int:
    if isinstance(v, bool) or not float(v).is_integer():
        raise InputError(f"{name} must be an integer")
    return int(v)


def _reject_unknown(data: Any, known: set[str], where: str) -> None:
    if not isinstance(data, dict):
        raise InputError(f"{where} must be an object")
    extra = set(data) - known
    if extra:
        raise InputError(f"unknown {where} keys: {sorted(extra)}")


@dataclass
class StepResult:
    step: int
    query: str
    compressed: CompressedContext
    memory: MemoryState
    scored: list[ScoredTurn]
    ranking: list[str]
    thresholds: Thresholds | None
    h_hat: float
    b_t: int
    history_tokens: int
    objective: ObjectiveReport | None
    wall_time: float
    flags: frozenset[str] = frozenset()

    @property
    def ratio(self) -> float:
        return self.compressed.ratio

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        th = self.thresholds
        out: dict[str, Any] = {
            "step": self.step,
            "query": self.query,
            "history_tokens": self.history_tokens,
            "h_hat": self.h_hat,
            "b_t": self.b_t,
            "thresholds": None if th is None else {"tau_s": th.tau_s, "tau_l": th.tau_l, "q_s": th.q_s, "q_l": th.q_l},
            "scored": [{"turn_id": s.turn_id, "index": s.index, "s": s.s, "c": s.c, "z": s.z} for s in self.scored],
            "ranking": list(self.ranking),
            "memory": self.memory.to_dict(),
            "compressed": self.compressed.to_dict(),
            "objective": None if self.objective is None else self.objective.to_dict(),
            "flags": sorted(self.flags),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return rounded(out)


def rounded(obj: Any) -> Any:
    """Round floats for serialization so outputs are stable across platforms."""
    if isinstance(obj, float):
        r = round(obj, FLOAT_DIGITS)
        return 0.0 if r == 0 else r
    if isinstance(obj, dict):
        return {k: rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    return obj


class _Stage:
    """Context manager that re-raises component errors tagged with the stage name."""

    def __init__(self, name: str) -> None:
        self.name = name

    def __enter__(self) -> None:
        return None

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is not None and not isinstance(exc, PipelineError) and isinstance(exc, (CompressionError, ValueError, ArithmeticError, KeyError)):
            raise PipelineError(self.name, exc) from exc
        return False


def _contradiction_fn(cfg: EngineConfig, gateway, flags: set[str]) -> Callable[[str, str | None], float]:
    name = cfg.scorers.get("contradiction", DEFAULT_SCORERS["contradiction"])
    if name != "remote":
        return get_scorer("contradiction", name)
    if gateway is None:
        flags.add("contradiction-fallback")
        return contradiction_prob

    def remote(text: str, prev: str | None) -> float:
        if prev is None:
            return 0.0
        try:
            return gateway.contradiction_remote(text, prev)
        except GatewayError as exc:
            logger.warning("remote contradiction failed, using heuristic: %s", exc)
            flags.add("contradiction-fallback")
            return contradiction_prob(text, prev)

    return remote


def compress_step(
    history: Conversation | Sequence[Turn],
    query: Query,
    cfg: EngineConfig | None = None,
    prev_response: str | None = None,
    *,
    gateway=None,
    generated_answer: str | None = None,
    gold_answer: str | None = None,
) -> StepResult:
    """Compress ``history`` for ``query`` under the step's dynamic budget.

    Stages run in a fixed order: importance, coherence, selection score,
    ranking, quantile partition, entropy, budget, retained-fit, band
    summarization, greedy selection, ratio, objective. A history that already
    fits the budget passes through verbatim (flag ``within-budget``).
    """
    cfg = cfg or EngineConfig()
    started = time.perf_counter()
    turns = tuple(history.turns if isinstance(history, Conversation) else history)
    if not turns:
        raise InputError("compress_step needs a non-empty history")
    if not turns[-1].index <= query.step <= len(turns):
        raise InputError(f"query step {query.step} inconsistent with history of {len(turns)} turns")
    flags: set[str] = set()
    by_id = {t.turn_id: t for t in turns}
    history_tokens = sum(t.token_count for t in turns)

    with _Stage("score"):
        scored = score_turns(
            turns,
            query,
            cfg.scoring,
            prev_response,
            sim_fn=get_scorer("similarity", cfg.scorers.get("similarity", DEFAULT_SCORERS["similarity"])),
            dep_fn=get_scorer("dependency", cfg.scorers.get("dependency", DEFAULT_SCORERS["dependency"])),
            contradiction_fn=_contradiction_fn(cfg, gateway, flags),
        )
        ranked = rank_order(scored)
        z_of = {st.turn_id: st.z for st in scored}

    with _Stage("partition"):
        th: Thresholds | None = compute_thresholds([st.z for st in scored], cfg.thresholds.q_s, cfg.thresholds.q_l)
        state = partition(scored, th)

    with _Stage("entropy"):
        h_hat = bud.dialogue_entropy(turns, cfg.budget.window)

    with _Stage("budget"):
        b_t = bud.dynamic_budget(h_hat, cfg.budget, cfg.budget_orientation)

    with _Stage("summarize"):
        if history_tokens <= b_t:
            flags.add("within-budget")
            th = None
            state = MemoryState(tuple(t.turn_id for t in turns), (), frozenset())
            candidates = [
                Segment("retained", t.text, t.token_count, z_of[t.turn_id], t.index, (t.turn_id,))
                for t in turns
                if t.token_count > 0
            ]
        else:
            state, th = adapt_retained_fit(
                state, b_t, cfg.thresholds.phi, th, scored, {t.turn_id: t.token_count for t in turns}
            )
            remote = None
            if cfg.summarizer == "remote":
                if gateway is None:
                    flags.add("summary-fallback")
                else:
                    remote = gateway.summarize_remote
            summaries = summarize_band(
                [by_id[i] for i in state.band],
                turns,
                cfg.thresholds.cap_fraction,
                z_of=z_of,
                remote=remote,
                flags=flags,
                idf=idf_table(turns),
            )
            state = replace(state, summaries=tuple(summaries))
            candidates = [
                Segment("retained", by_id[i].text, by_id[i].token_count, z_of[i], by_id[i].index, (i,))
                for i in state.retained
                if by_id[i].token_count > 0
            ]
            candidates += [_summary_candidate(s) for s in summaries]
        state = replace(state, flags=frozenset(flags & {"summary-fallback"}))

    with _Stage("select"):
        compressed = bud.select_under_budget(candidates, b_t, history_tokens if history_tokens > 0 else None)
        if history_tokens == 0:
            compressed = replace(compressed, ratio=1.0)
        flags |= compressed.flags

    with _Stage("objective"):
        objective = _objective(turns, scored, compressed, cfg.objective, generated_answer, gold_answer, flags)

    return StepResult(
        step=query.step,
        query=query.text,
        compressed=compressed,
        memory=state,
        scored=scored,
        ranking=[st.turn_id for st in ranked],
        thresholds=th,
        h_hat=h_hat,
        b_t=b_t,
        history_tokens=history_tokens,
        objective=objective,
        wall_time=max(time.perf_counter() - started, 1e-9),
        flags=frozenset(flags),
    )


def _summary_candidate(s: SummarySegment) -> Segment:
    return Segment("summary", s.summary_text, s.token_count, s.z_max, s.first_index, s.member_turn_ids)


def _objective(
    turns: Sequence[Turn],
    scored: Sequence[ScoredTurn],
    compressed: CompressedContext,
    weights: ObjectiveWeights,
    generated: str | None,
    gold: str | None,
    flags: set[str],
) -> ObjectiveReport:
    obj_flags: set[str] = set()
    l_task = task_loss(generated, gold, obj_flags)
    kept = {tid for seg in compressed.segments for tid in seg.turn_ids}
    omitted = [st for st in scored if st.turn_id not in kept]
    l_coh = coherence_loss(omitted)
    l_token = token_loss(min(1.0, compressed.ratio))
    history_text = " ".join(t.text for t in turns)
    context_text = " ".join(strip_marker(seg.text) for seg in compressed.segments)
    if compressed.total_tokens == sum(t.token_count for t in turns) and not any(s.kind == "summary" for s in compressed.segments):
        # nothing removed or rewritten
        l_rec = 0.0
    else:
        try:
            l_rec = reconstruction_loss(history_text, context_text, obj_flags)
        except InputError:
            l_rec = 0.0
            obj_flags.add("empty-history")
    flags |= obj_flags
    return compose(l_task, l_coh, l_token, l_rec, weights, obj_flags)


# replay -----------------------------------------------------------------------


@dataclass
class StepRecord:
    """One replay step: the query point plus its result or failure."""

    step: int
    question: str
    gold_answer: str | None
    generated_answer: str | None
    result: StepResult | None
    error: str | None = None
    flags: frozenset[str] = frozenset()

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        out = {
            "step": self.step,
            "question": self.question,
            "gold_answer": self.gold_answer,
            "generated_answer": self.generated_answer,
            "error": self.error,
            "flags": sorted(self.flags),
        }
        if self.result is not None:
            r = self.result
            out.update(
                ratio=r.ratio,
                token_reduction=1.0 - r.ratio,
                b_t=r.b_t,
                total_tokens=r.compressed.total_tokens,
                history_tokens=r.history_tokens,
                objective=None if r.objective is None else r.objective.to_dict(),
            )
            if timing:
                out["wall_time"] = r.wall_time
        return rounded(out)


@dataclass
class ReplayResult:
    conversation_id: str
    steps: list[StepRecord]
    aggregate: dict[str, Any]

    def to_dict(self, timing: bool = False, include_steps: bool = False) -> dict[str, Any]:
        agg = dict(self.aggregate)
        if not timing:
            agg.pop("latency", None)
        out: dict[str, Any] = {"conversation_id": self.conversation_id, "aggregate": rounded(agg)}
        if include_steps:
            out["steps"] = [s.to_dict(timing) for s in self.steps]
        return out


def query_points(conversation: Conversation, every: int = 5) -> list[tuple[int, str, str | None]]:
    """``(t, query_text, gold_answer)`` triples; history for each is ``turns[0..t)``."""
    n = len(conversation.turns)
    if conversation.qa_pairs:
        index_of = {t.turn_id: t.index for t in conversation.turns}
        points = []
        for qa in conversation.qa_pairs:
            t = max(index_of[e] for e in qa.evidence_turn_ids) + 1 if qa.evidence_turn_ids else n
            points.append((t, qa.question, qa.answer))
        return points
    steps = list(range(every, n, every)) or ([n - 1] if n >= 2 else [])
    return [(t, conversation.turns[t].text, None) for t in steps]


def replay(
    conversation: Conversation,
    cfg: EngineConfig | None = None,
    answerer: Answerer | None = None,
    gateway=None,
) -> ReplayResult:
    cfg = cfg or EngineConfig()
    records: list[StepRecord] = []
    prev_generated: str | None = None
    for t, question, gold in query_points(conversation, cfg.query_every):
        step_flags: set[str] = set()
        history = conversation.turns[:t]
        if answerer is not None and prev_generated is not None:
            prev = prev_generated
        else:
            prev = history[-1].text if history else None
        try:
            if not history:
                raise InputError("query point has empty history")
            result = compress_step(history, Query(question, t), cfg, prev, gateway=gateway)
        except CompressionError as exc:
            logger.warning("replay %s step %d failed: %s", conversation.conversation_id, t, exc)
            records.append(StepRecord(t, question, gold, None, None, str(exc), frozenset({"failed"})))
            continue
        generated: str | None = None
        if gold is not None:
            if answerer is None:
                generated = gold
                step_flags.add("no-generation")
            else:
                try:
                    generated = answerer(result.compressed, question)
                    prev_generated = generated
                except Exception as exc:  # external generator: anything can go wrong
                    logger.warning("answer generation failed at step %d: %s", t, exc)
                    step_flags.add("failed-generation")
                    generated = gold
            obj_flags: set[str] = set()
            lt = task_loss(generated, gold, obj_flags)
            o = result.objective
            result.objective = compose(lt, o.l_coh, o.l_token, o.l_rec, cfg.objective, (o.flags - {"no-qa-pairs"}) | obj_flags)
            result.flags = result.flags - {"no-qa-pairs"}
        records.append(StepRecord(t, question, gold, generated, result, None, frozenset(step_flags | result.flags)))
    return ReplayResult(conversation.conversation_id, records, aggregate(records, conversation))


def _stats(values: Sequence[float]) -> dict[str, float]:
    if not values:
        return {"mean": 0.0, "min": 0.0, "max": 0.0}
    return {"mean": math.fsum(values) / len(values), "min": min(values), "max": max(values)}


def percentile(values: Sequence[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    k = max(1, math.ceil(q * len(ordered) - 1e-9))
    return ordered[k - 1]


def aggregate(records: Sequence[StepRecord], conversation: Conversation | None = None) -> dict[str, Any]:
    ok = [r for r in records if r.result is not None]
    ratios = [r.result.ratio for r in ok]
    objectives = [r.result.objective for r in ok if r.result.objective is not None]
    flags: set[str] = set()
    for r in records:
        flags |= r.flags
    if conversation is not None and not conversation.qa_pairs:
        flags.add("no-qa-pairs")
    lat = [r.result.wall_time for r in ok]
    out: dict[str, Any] = {
        "n_steps": len(records),
        "n_failed": len(records) - len(ok),
        "ratio": _stats(ratios),
        "token_reduction": _stats([1.0 - x for x in ratios]),
        "objective": {
            key: (math.fsum(getattr(o, key) for o in objectives) / len(objectives) if objectives else 0.0)
            for key in ("l_task", "l_coh", "l_token", "l_rec", "l_comp", "l_final")
        },
        "flags": sorted(flags - {"failed"}) + (["failed-steps"] if len(ok) < len(records) else []),
        "latency": {
            "mean": statistics.fmean(lat) if lat else 0.0,
            "p50": percentile(lat, 0.5),
            "p95": percentile(lat, 0.95),
            "max": max(lat, default=0.0),
        },
    }
    if conversation is not None:
        out["n_turns"] = len(conversation.turns)
        out["history_tokens"] = conversation.total_tokens
    return out
