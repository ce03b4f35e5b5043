"""Command-line entry point: ``ctxcompress {compress,replay,tune,bleu}``.

Exit codes: 0 success, 2 input/usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .errors import CompressionError, InputError
from .ingest import AdapterSpec, load
from .metrics import bleu
from .model import Conversation, Query
from .pipeline import EngineConfig, compress_step, replay, rounded
from .tuning import tune

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3

logger = logging.getLogger("ctxcompress")


def load_config(path: str | None, seed: int | None = None) -> EngineConfig:
    if path is None:
        cfg = EngineConfig()
    else:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file not found: {path}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed JSON: {exc}") from exc
        cfg = EngineConfig.from_dict(data)
    return cfg if seed is None else replace(cfg, seed=seed)


def load_dataset(path: str) -> list[tuple[str, Conversation]]:
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.is_file() and f.suffix in (".json", ".jsonl"))
    elif p.is_file():
        files = [p]
    else:
        raise InputError(f"dataset not found: {path}")
    out = []
    for f in files:
        out.extend((f.name, conv) for conv in load(AdapterSpec("auto", str(f))))
    if not out:
        raise InputError(f"dataset is empty: {path}")
    return out


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


# commands -----------------------------------------------------------------------


def cmd_compress(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    convs = load_dataset(args.conversation)
    if len(convs) != 1:
        raise InputError(f"{args.conversation}: expected exactly one conversation, found {len(convs)}")
    conv = convs[0][1]
    result = compress_step(conv, Query(args.query, len(conv.turns)), cfg)
    sys.stdout.write(_dump(result.to_dict()))
    return EXIT_OK


def _replay_one(item: tuple[str, Conversation, EngineConfig]) -> dict[str, Any]:
    name, conv, cfg = item
    try:
        res = replay(conv, cfg)
    except CompressionError as exc:
        return {"dataset": name, "conversation_id": conv.conversation_id, "error": str(exc)}
    entry = {"dataset": name, **res.to_dict(timing=True)}
    if res.aggregate["n_steps"] and res.aggregate["n_failed"] == res.aggregate["n_steps"]:
        entry["error"] = "all steps failed"
    return entry


def build_report(entries: Sequence[dict[str, Any]], cfg: EngineConfig) -> dict[str, Any]:
    ok = [e for e in entries if "error" not in e]

    def mean(xs: list[float]) -> float:
        return sum(xs) / len(xs) if xs else 0.0

    aggs = [e["aggregate"] for e in ok]
    totals = {
        "mean_ratio": mean([a["ratio"]["mean"] for a in aggs]),
        "mean_token_reduction": mean([a["token_reduction"]["mean"] for a in aggs]),
        "mean_l_final": mean([a["objective"]["l_final"] for a in aggs]),
        "latency": {
            "p50": statistics.median([a["latency"]["p50"] for a in aggs]) if aggs else 0.0,
            "p95": max((a["latency"]["p95"] for a in aggs), default=0.0),
        },
    }
    return rounded(
        {
            "tool_version": __version__,
            "seed": cfg.seed,
            "config_snapshot": cfg.to_dict(),
            "per_conversation": list(entries),
            "totals": totals,
            "failures": [{"dataset": e["dataset"], "conversation_id": e["conversation_id"], "error": e["error"]} for e in entries if "error" in e],
        }
    )


def markdown_table(report: dict[str, Any]) -> str:
    lines = [
        "| dataset | mean r_t | token reduction % | mean l_final | p50/p95 latency (ms) |",
        "|---|---|---|---|---|",
    ]
    for e in report["per_conversation"]:
        label = f"{e['dataset']}:{e['conversation_id']}"
        if "error" in e:
            lines.append(f"| {label} | failed | failed | failed | - |")
            continue
        a = e["aggregate"]
        lines.append(
            f"| {label} | {a['ratio']['mean']:.4f} | {100 * a['token_reduction']['mean']:.1f} | "
            f"{a['objective']['l_final']:.4f} | {1000 * a['latency']['p50']:.1f}/{1000 * a['latency']['p95']:.1f} |"
        )
    t = report["totals"]
    lines.append(
        f"| **all** | {t['mean_ratio']:.4f} | {100 * t['mean_token_reduction']:.1f} | {t['mean_l_final']:.4f} | "
        f"{1000 * t['latency']['p50']:.1f}/{1000 * t['latency']['p95']:.1f} |"
    )
    return "\n".join(lines) + "\n"


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    data = load_dataset(args.dataset)
    items = [(name, conv, cfg) for name, conv in data]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(_replay_one, items))
    else:
        entries = [_replay_one(it) for it in items]
    report = build_report(entries, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_dump(report), encoding="utf-8")
    table = markdown_table(report)
    out.with_suffix(".md").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_RUNTIME if len(report["failures"]) == len(entries) else EXIT_OK


def cmd_tune(args: argparse.Namespace) -> int:
    cfg0 = load_config(args.config, args.seed)
    data = [conv for _, conv in load_dataset(args.dataset)]
    result = tune(data, cfg0, args.trials, args.seed if args.seed is not None else cfg0.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_dump(result.best.to_dict()), encoding="utf-8")
    log_path = out.with_name(out.stem + ".trials.csv")
    log_path.write_text(result.trial_csv(), encoding="utf-8")
    sys.stdout.write(
        f"baseline mean l_final {result.baseline_score:.6f}\n"
        f"best mean l_final     {result.best_score:.6f}\n"
        f"config -> {out}\ntrials -> {log_path}\n"
    )
    return EXIT_OK


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {path}")
    try:
        return p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: invalid UTF-8") from exc


def cmd_bleu(args: argparse.Namespace) -> int:
    score = bleu(_read_text(args.candidate), _read_text(args.reference))
    sys.stdout.write(f"{score:.6f}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxcompress", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress one conversation for one query")
    p.add_argument("--config", required=True)
    p.add_argument("--conversation", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("replay", help="replay a dataset and write a run report")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("tune", help="random-search engine parameters")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bleu", help="BLEU-4 of a candidate file against a reference file")
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    p.set_defaults(func=cmd_bleu)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CompressionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
