"""Corpus adapters and the deterministic synthetic conversation generator.

Field maps
----------
canonical
    ``{"conversation_id", "turns": [{"turn_id", "index", "speaker", "text"}], "qa_pairs": [...]}``
    (one object, or a list of them). Indices must already be contiguous.
generic-jsonl
    A header line ``{"conversation_id": ...}`` opens a conversation; following
    ``{"speaker", "text"[, "turn_id"]}`` lines are its turns and
    ``{"question", "answer"[, "evidence_turn_ids"]}`` lines its QA pairs.
locomo-like
    List of samples ``{"sample_id", "conversation": {"session_<n>": [{"speaker",
    "dia_id", "text"}], ...}, "qa": [{"question", "answer", "evidence": [dia_id]}]}``.
    Sessions are flattened in numeric order; speakers become
    ``"session_<n>:<speaker>"``. QA items without an ``answer`` are skipped.
locco-like
    List of ``{"id"|"dialogue_id", "sessions": [[{"speaker"|"role", "text"|"content"}]]
    | "dialogue": [...], "qa"|"questions": [{"question", "answer"}]}``.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import IngestError, InputError
from .model import Conversation, QAPair, Turn

KINDS = ("canonical", "locomo-like", "locco-like", "generic-jsonl", "synthetic", "auto")
OPTIONS: dict[str, set[str]] = {
    "canonical": set(),
    "locomo-like": {"strict_evidence"},
    "locco-like": set(),
    "generic-jsonl": {"conversation_id"},
    "synthetic": {"n_turns", "seed", "profile"},
    "auto": set(),
}
PROFILES = ("topical-drift", "qa-heavy")


@dataclass(frozen=True)
class AdapterSpec:
    kind: str
    path: str | None = None
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown adapter kind {self.kind!r} (expected one of {KINDS})")
        unknown = set(self.options) - OPTIONS[self.kind]
        if unknown:
            raise InputError(f"adapter {self.kind!r} does not accept options {sorted(unknown)}")
        if self.kind != "synthetic" and not self.path:
            raise InputError(f"adapter {self.kind!r} needs a path")


def load(spec: AdapterSpec) -> list[Conversation]:
    if spec.kind == "synthetic":
        opts = spec.options
        return [synthesize(int(opts.get("n_turns", 200)), int(opts.get("seed", 0)), str(opts.get("profile", "qa-heavy")))]
    path = Path(spec.path)  # type: ignore[arg-type]
    if not path.is_file():
        raise IngestError("file not found", str(path))
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestError(f"invalid UTF-8 at byte offset {exc.start}", str(path)) from exc
    kind = spec.kind
    if kind == "auto":
        kind = detect_kind(path, text)
    if kind == "generic-jsonl":
        return _load_jsonl(text, path, spec.options.get("conversation_id"))
    data = _parse_json(text, str(path))
    if kind == "canonical":
        return _load_canonical(data, path)
    if kind == "locomo-like":
        return _load_locomo(data, path, bool(spec.options.get("strict_evidence", True)))
    return _load_locco(data, path)


def load_path(path: str | Path) -> list[Conversation]:
    """Load a file, or every ``*.json``/``*.jsonl`` file of a directory, auto-detecting format."""
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix in (".json", ".jsonl") and f.is_file())
        out: list[Conversation] = []
        for f in files:
            out.extend(load(AdapterSpec("auto", str(f))))
        return out
    return load(AdapterSpec("auto", str(p)))


def detect_kind(path: Path, text: str) -> str:
    if path.suffix == ".jsonl":
        return "generic-jsonl"
    data = _parse_json(text, str(path))
    first = data[0] if isinstance(data, list) and data else data
    if isinstance(first, dict):
        if "turns" in first:
            return "canonical"
        if isinstance(first.get("conversation"), dict):
            return "locomo-like"
        if "sessions" in first or "dialogue" in first:
            return "locco-like"
    raise IngestError("cannot determine corpus format; pass an explicit adapter kind", str(path))


def _parse_json(text: str, locator: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise IngestError(f"malformed JSON at byte offset {offset}: {exc.msg}", locator) from exc


def _load_canonical(data: Any, path: Path) -> list[Conversation]:
    items = data if isinstance(data, list) else [data]
    out = []
    for n, item in enumerate(items):
        loc = f"{path}[{n}]" if isinstance(data, list) else str(path)
        if not isinstance(item, dict):
            raise IngestError("conversation record must be an object", loc)
        try:
            out.append(Conversation.from_dict(item))
        except InputError as exc:
            raise IngestError(str(exc), loc) from exc
    return out


def _load_jsonl(text: str, path: Path, default_id: str | None) -> list[Conversation]:
    convs: list[Conversation] = []
    cid: str | None = None
    turns: list[Turn] = []
    qas: list[QAPair] = []

    def flush(loc: str) -> None:
        if cid is None and not turns and not qas:
            return
        try:
            convs.append(Conversation(cid or default_id or path.stem, tuple(turns), tuple(qas)))
        except InputError as exc:
            raise IngestError(str(exc), loc) from exc

    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
        loc = f"{path}:{lineno}"
        stripped = line.strip()
        if stripped:
            try:
                rec = json.loads(stripped)
            except json.JSONDecodeError as exc:
                at = offset + len(line[: line.find(stripped[0]) + exc.pos].encode("utf-8"))
                raise IngestError(f"malformed JSON at byte offset {at}: {exc.msg}", loc) from exc
            if not isinstance(rec, dict):
                raise IngestError("each line must be a JSON object", loc)
            if "conversation_id" in rec and "text" not in rec:
                flush(loc)
                cid, turns, qas = str(rec["conversation_id"]), [], []
            elif "question" in rec:
                if "answer" not in rec:
                    raise IngestError("QA line missing 'answer'", loc)
                qas.append(QAPair(str(rec["question"]), str(rec["answer"]), tuple(map(str, rec.get("evidence_turn_ids") or ()))))
            else:
                missing = [k for k in ("speaker", "text") if k not in rec]
                if missing:
                    raise IngestError(f"turn line missing {missing}", loc)
                i = len(turns)
                turns.append(Turn(str(rec.get("turn_id", f"t{i:04d}")), i, str(rec["speaker"]), str(rec["text"])))
        offset += len(line.encode("utf-8"))
    flush(f"{path}:EOF")
    if not convs:
        raise IngestError("no conversations found", str(path))
    return convs


_SESSION_KEY = re.compile(r"^session_(\d+)$")


def _load_locomo(data: Any, path: Path, strict_evidence: bool) -> list[Conversation]:
    samples = data if isinstance(data, list) else [data]
    out = []
    for n, sample in enumerate(samples):
        loc = f"{path}[{n}]"
        if not isinstance(sample, dict) or not isinstance(sample.get("conversation"), dict):
            raise IngestError("sample needs a 'conversation' object", loc)
        conv = sample["conversation"]
        sessions = sorted(
            (int(m.group(1)), key) for key in conv if (m := _SESSION_KEY.match(key))
        )
        if not sessions:
            raise IngestError("no session_<n> lists found", loc)
        turns: list[Turn] = []
        for num, key in sessions:
            if not isinstance(conv[key], list):
                raise IngestError(f"{key} must be a list", loc)
            for k, utt in enumerate(conv[key]):
                if not isinstance(utt, dict) or "speaker" not in utt or "text" not in utt:
                    raise IngestError(f"{key}[{k}] needs 'speaker' and 'text'", loc)
                tid = str(utt.get("dia_id") or f"S{num}:{k + 1}")
                turns.append(Turn(tid, len(turns), f"session_{num}:{utt['speaker']}", str(utt["text"])))
        ids = {t.turn_id for t in turns}
        qas = []
        for k, qa in enumerate(sample.get("qa") or ()):
            if "answer" not in qa:
                continue
            evidence = tuple(str(e) for e in qa.get("evidence") or ())
            bad = [e for e in evidence if e not in ids]
            if bad:
                if strict_evidence:
                    raise IngestError(f"qa[{k}] evidence references unknown turns {bad}", loc)
                evidence = tuple(e for e in evidence if e in ids)
            qas.append(QAPair(str(qa["question"]), str(qa["answer"]), evidence))
        cid = str(sample.get("sample_id", f"{path.stem}-{n}"))
        try:
            out.append(Conversation(cid, tuple(turns), tuple(qas)))
        except InputError as exc:
            raise IngestError(str(exc), loc) from exc
    return out


def _load_locco(data: Any, path: Path) -> list[Conversation]:
    records = data if isinstance(data, list) else [data]
    out = []
    for n, rec in enumerate(records):
        loc = f"{path}[{n}]"
        if not isinstance(rec, dict):
            raise IngestError("record must be an object", loc)
        if "sessions" in rec:
            sessions = rec["sessions"]
        elif "dialogue" in rec:
            sessions = [rec["dialogue"]]
        else:
            raise IngestError("record needs 'sessions' or 'dialogue'", loc)
        turns: list[Turn] = []
        for s, session in enumerate(sessions, start=1):
            for k, utt in enumerate(session):
                speaker = utt.get("speaker", utt.get("role")) if isinstance(utt, dict) else None
                text = utt.get("text", utt.get("content")) if isinstance(utt, dict) else None
                if speaker is None or text is None:
                    raise IngestError(f"sessions[{s - 1}][{k}] needs speaker/role and text/content", loc)
                turns.append(Turn(f"s{s}t{k}", len(turns), f"session_{s}:{speaker}", str(text)))
        qas = tuple(
            QAPair(str(q["question"]), str(q["answer"]))
            for q in rec.get("qa", rec.get("questions")) or ()
            if "question" in q and "answer" in q
        )
        cid = str(rec.get("id", rec.get("dialogue_id", f"{path.stem}-{n}")))
        out.append(Conversation(cid, tuple(turns), qas))
    return out


# synthetic corpus ---------------------------------------------------------------

TOPICS: dict[str, list[str]] = {
    "travel": "paris flight hotel museum train luggage passport booking beach itinerary airport tickets rome visa".split(),
    "cooking": "recipe garlic oven pasta sauce basil dough spices kitchen dinner salad bread soup butter".split(),
    "project": "deadline report client budget meeting roadmap release sprint invoice slides proposal feedback launch contract".split(),
    "fitness": "running marathon gym stretching protein coach knee training bike swimming yoga sneakers workout trail".split(),
    "music": "guitar concert album piano drummer lyrics festival band vinyl chorus melody playlist studio singer".split(),
    "garden": "tomatoes seeds compost roses soil watering shovel greenhouse lettuce fence weeds harvest mulch orchard".split(),
    "finance": "savings mortgage taxes pension stocks receipts insurance loan interest account broker dividends rent payroll".split(),
    "pets": "puppy kitten vet leash aquarium parrot collar treats grooming hamster walks shelter vaccine kennel".split(),
}

_SENTENCES = [
    "I was thinking about the {a} and the {b} yesterday.",
    "Did you hear anything new about the {a}?",
    "We should sort out the {a} before the {b} gets busy.",
    "My friend keeps talking about {a}, {b} and {c}.",
    "Honestly the {a} was better than I expected.",
    "Let me check the {a} and get back to you about the {b}.",
    "Can you remind me what we decided on the {a}?",
    "The {a} might be tricky because of the {b}.",
    "I think the {a} matters more than the {b} right now.",
    "Sure, I can help you compare the {a} with the {c}.",
    "It sounds like the {a} needs more attention this week.",
    "We could combine the {a} with some {b} later.",
]
_CALLBACK = "That reminds me of the {w} we discussed earlier."
_FACT = "By the way, the {thing} code is {answer}."
_QUESTION = "What is the {thing} code?"
_THINGS = ["locker", "gate", "wifi", "door", "booking", "parcel", "safe", "garage", "alarm", "account"]
_SYLLABLES = ["zor", "kex", "vym", "qul", "jad", "wob", "pix", "fen", "tur", "dax"]


def synthesize(n_turns: int, seed: int, profile: str = "qa-heavy") -> Conversation:
    """Seeded conversation with topic drift, callbacks and planted facts.

    Every fact sentence carries a unique answer token that appears in no other
    turn; the matching QA pair lists that turn as its only evidence.
    """
    if n_turns < 2:
        raise InputError("n_turns must be >= 2")
    if profile not in PROFILES:
        raise InputError(f"unknown profile {profile!r} (expected one of {PROFILES})")
    rng = random.Random(f"{profile}:{seed}")
    fact_every = 8 if profile == "qa-heavy" else 25
    topic_names = sorted(TOPICS)
    topic = rng.choice(topic_names)
    next_switch = rng.randint(6, 14)
    seen_words: list[str] = []
    used_answers: set[str] = set()
    turns: list[Turn] = []
    qas: list[QAPair] = []
    for i in range(n_turns):
        if i == next_switch:
            topic = rng.choice([t for t in topic_names if t != topic])
            next_switch = i + rng.randint(6, 14)
        vocab = TOPICS[topic]
        parts = []
        for _ in range(rng.randint(1, 3)):
            a, b, c = rng.sample(vocab, 3)
            parts.append(rng.choice(_SENTENCES).format(a=a, b=b, c=c))
            seen_words.extend((a, b))
        if seen_words and rng.random() < 0.3:
            parts.append(_CALLBACK.format(w=rng.choice(seen_words[:-2] or seen_words)))
        turn_id = f"t{i:04d}"
        if i % fact_every == fact_every // 2:
            thing = f"{rng.choice(_THINGS)} {len(qas) + 1}"
            while True:
                answer = f"{rng.choice(_SYLLABLES)}{rng.randint(1000, 9999)}"
                if answer not in used_answers:
                    used_answers.add(answer)
                    break
            parts.insert(rng.randint(0, len(parts)), _FACT.format(thing=thing, answer=answer))
            qas.append(QAPair(_QUESTION.format(thing=thing), answer, (turn_id,)))
        speaker = "user" if i % 2 == 0 else "assistant"
        turns.append(Turn(turn_id, i, speaker, " ".join(parts)))
    return Conversation(f"synthetic-{profile}-{seed}-{n_turns}", tuple(turns), tuple(qas))


def save_jsonl(conversations: Iterable[Conversation], path: str | Path) -> None:
    lines = []
    for conv in conversations:
        lines.append(json.dumps({"conversation_id": conv.conversation_id}))
        lines.extend(json.dumps({"turn_id": t.turn_id, "speaker": t.speaker, "text": t.text}, ensure_ascii=False) for t in conv.turns)
        lines.extend(json.dumps(q.to_dict(), ensure_ascii=False) for q in conv.qa_pairs)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
