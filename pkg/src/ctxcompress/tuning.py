"""Seeded random search over the engine parameters.

The default scorers are piecewise lexical heuristics with no gradient, so the
parameter update is a search: sample a candidate, replay the dataset, keep the
lowest mean ``l_final``. The objective weights (eta) are never tuned.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

from .budget import BudgetConfig
from .errors import InputError
from .model import Conversation
from .pipeline import EngineConfig, ThresholdConfig, replay
from .scoring import ScoringWeights

THETA_FIELDS = ("alpha", "beta", "gamma", "rho", "lambda", "q_s", "q_l")


@dataclass(frozen=True)
class Trial:
    trial: int
    theta: dict[str, float]
    mean_l_final: float
    best_so_far: float


@dataclass(frozen=True)
class TuneResult:
    best: EngineConfig
    best_score: float
    baseline_score: float
    trials: tuple[Trial, ...]

    def trial_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trial", *THETA_FIELDS, "mean_l_final", "best_so_far"])
        for t in self.trials:
            writer.writerow([t.trial, *(repr(round(t.theta[k], 10)) for k in THETA_FIELDS), repr(round(t.mean_l_final, 10)), repr(round(t.best_so_far, 10))])
        return buf.getvalue()


def theta_of(cfg: EngineConfig) -> dict[str, float]:
    return {
        "alpha": cfg.scoring.alpha,
        "beta": cfg.scoring.beta,
        "gamma": cfg.scoring.gamma,
        "rho": cfg.scoring.rho,
        "lambda": cfg.budget.lam,
        "q_s": cfg.thresholds.q_s,
        "q_l": cfg.thresholds.q_l,
    }


def with_theta(cfg: EngineConfig, theta: dict[str, float]) -> EngineConfig:
    return replace(
        cfg,
        scoring=ScoringWeights(theta["alpha"], theta["beta"], theta["gamma"], theta["rho"]),
        budget=BudgetConfig(cfg.budget.b_max, cfg.budget.b_min, theta["lambda"], cfg.budget.window),
        thresholds=ThresholdConfig(theta["q_s"], theta["q_l"], cfg.thresholds.phi, cfg.thresholds.cap_fraction),
    )


def sample_theta(rng: random.Random, cfg: EngineConfig) -> dict[str, float]:
    while True:
        w = [rng.random() for _ in range(3)]
        if sum(w) > 0:
            break
    total = sum(w)
    q_s = rng.uniform(0.5, 0.95)
    return {
        "alpha": w[0] / total,
        "beta": w[1] / total,
        "gamma": w[2] / total,
        "rho": rng.uniform(1.0, 50.0),
        "lambda": rng.uniform(0.0, float(cfg.budget.b_max - cfg.budget.b_min)),
        "q_s": q_s,
        "q_l": rng.uniform(0.05, q_s - 0.05),
    }


def evaluate(dataset: Sequence[Conversation], cfg: EngineConfig) -> float:
    """Mean over conversations of each replay's mean ``l_final``."""
    scores = [replay(conv, cfg).aggregate["objective"]["l_final"] for conv in dataset]
    return math.fsum(scores) / len(scores)


def tune(dataset: Sequence[Conversation], cfg0: EngineConfig, trials: int, seed: int) -> TuneResult:
    """Random search; the starting config is scored first and kept unless beaten.

    Trial 0 in the log is ``cfg0``; trials ``1..trials`` are samples.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    if not dataset:
        raise InputError("tune needs a non-empty dataset")
    rng = random.Random(seed)
    baseline = evaluate(dataset, cfg0)
    best_cfg, best = replace(cfg0, seed=seed), baseline
    log = [Trial(0, theta_of(cfg0), baseline, baseline)]
    for k in range(1, trials + 1):
        theta = sample_theta(rng, cfg0)
        cand = with_theta(cfg0, theta)
        score = evaluate(dataset, cand)
        if score < best:
            best, best_cfg = score, replace(cand, seed=seed)
        log.append(Trial(k, theta, score, best))
    return TuneResult(best_cfg, best, baseline, tuple(log))
