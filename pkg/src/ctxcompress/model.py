"""Dialogue data model and the canonical JSON conversation format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import InputError
from .text import DEFAULT_SPEC, count_tokens


@dataclass(frozen=True)
class Turn:
    """One indexed utterance. ``token_count`` is derived from ``text``."""

    turn_id: str
    index: int
    speaker: str
    text: str
    token_count: int = -1

    def __post_init__(self) -> None:
        if not isinstance(self.index, int) or self.index < 0:
            raise InputError(f"turn {self.turn_id!r}: index must be a non-negative int")
        if not isinstance(self.text, str):
            raise InputError(f"turn {self.turn_id!r}: text must be a string")
        counted = count_tokens(self.text, DEFAULT_SPEC)
        if self.token_count == -1:
            object.__setattr__(self, "token_count", counted)
        elif self.token_count != counted:
            raise InputError(
                f"turn {self.turn_id!r}: cached token_count {self.token_count} != {counted}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"turn_id": self.turn_id, "index": self.index, "speaker": self.speaker, "text": self.text}


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    evidence_turn_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question,
            "answer": self.answer,
            "evidence_turn_ids": list(self.evidence_turn_ids),
        }


@dataclass(frozen=True)
class Conversation:
    conversation_id: str
    turns: tuple[Turn, ...]
    qa_pairs: tuple[QAPair, ...] = ()
    _by_id: dict[str, Turn] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "qa_pairs", tuple(self.qa_pairs))
        for expected, turn in enumerate(self.turns):
            if turn.index != expected:
                raise InputError(
                    f"conversation {self.conversation_id!r}: turn indices must be contiguous from 0 "
                    f"(position {expected} has index {turn.index})"
                )
            if turn.turn_id in self._by_id:
                raise InputError(f"conversation {self.conversation_id!r}: duplicate turn_id {turn.turn_id!r}")
            self._by_id[turn.turn_id] = turn
        for n, qa in enumerate(self.qa_pairs):
            for tid in qa.evidence_turn_ids:
                if tid not in self._by_id:
                    raise InputError(
                        f"conversation {self.conversation_id!r}: qa_pairs[{n}] references unknown turn {tid!r}"
                    )

    def __len__(self) -> int:
        return len(self.turns)

    def turn(self, turn_id: str) -> Turn:
        return self._by_id[turn_id]

    @property
    def total_tokens(self) -> int:
        return sum(t.token_count for t in self.turns)

    def prefix(self, t: int) -> Conversation:
        """History ``turns[0..t)``; QA pairs whose evidence falls inside are kept."""
        turns = self.turns[:t]
        ids = {tr.turn_id for tr in turns}
        qas = tuple(q for q in self.qa_pairs if all(e in ids for e in q.evidence_turn_ids))
        return Conversation(self.conversation_id, turns, qas)

    def to_dict(self) -> dict[str, Any]:
        return {
            "conversation_id": self.conversation_id,
            "turns": [t.to_dict() for t in self.turns],
            "qa_pairs": [q.to_dict() for q in self.qa_pairs],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Conversation:
        try:
            turns = tuple(
                Turn(str(t["turn_id"]), int(t["index"]), str(t["speaker"]), str(t["text"]))
                for t in data["turns"]
            )
            qas = tuple(
                QAPair(str(q["question"]), str(q["answer"]), tuple(str(e) for e in q.get("evidence_turn_ids") or ()))
                for q in data.get("qa_pairs") or ()
            )
            return cls(str(data["conversation_id"]), turns, qas)
        except KeyError as exc:
            raise InputError(f"missing required field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed conversation record: {exc}") from exc


@dataclass(frozen=True)
class Query:
    text: str
    step: int

    def __post_init__(self) -> None:
        if self.step < 0:
            raise InputError("query step must be >= 0")


def make_turns(pairs: Iterable[tuple[str, str]], id_prefix: str = "t") -> tuple[Turn, ...]:
    """Build contiguous turns from ``(speaker, text)`` pairs."""
    return tuple(
        Turn(f"{id_prefix}{i:04d}", i, speaker, text) for i, (speaker, text) in enumerate(pairs)
    )


def dumps_conversation(conv: Conversation) -> str:
    return json.dumps(conv.to_dict(), ensure_ascii=False, indent=2) + "\n"


def save_conversation(conv: Conversation, path: str | Path) -> None:
    Path(path).write_text(dumps_conversation(conv), encoding="utf-8")
