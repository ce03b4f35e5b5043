"""Lexical tokenizer used for every token count in the engine.

A token is a lowercased run of letters/digits. Everything else (whitespace,
punctuation, underscores, symbols) is a boundary and is discarded, so
``"don't stop"`` tokenizes to ``["don", "t", "stop"]``.

Budget math, ratios and BLEU all use the same :class:`TokenizerSpec`; a run
must not mix tokenizers.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

from .errors import InputError

STOPWORDS_VERSION = "en-1"

# Negation words are deliberately stopwords: they carry no topical content,
# and the contradiction heuristic reads them from the raw token stream.
DEFAULT_STOPWORDS: frozenset[str] = frozenset(
    """
    a about above after again against all am an and any are as at be because
    been before being below between both but by can cannot could did do does
    doing down during each few for from further had has have having he her
    here hers herself him himself his how i if in into is it its itself just
    me more most my myself no nor not now of off on once only or other our
    ours ourselves out over own same she should so some such than that the
    their theirs them themselves then there these they this those through to
    too under until up very was we were what when where which while who whom
    why will with would you your yours yourself yourselves never none also
    s t d ll m re ve let lets aren couldn didn doesn don hadn hasn haven isn
    mustn shan shouldn wasn weren won wouldn
    """.split()
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class TokenizerSpec:
    """Which tokenizer to use and which stopwords to strip.

    ``kind="external"`` delegates splitting to ``external`` (any callable
    returning a list of strings); stopword handling stays local.
    """

    kind: str = "default-lexical"
    stopwords: frozenset[str] = field(default=DEFAULT_STOPWORDS)
    external: Callable[[str], list[str]] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("default-lexical", "external"):
            raise InputError(f"unknown tokenizer kind {self.kind!r}")
        if self.kind == "external" and self.external is None:
            raise InputError("external tokenizer requires a callable")


DEFAULT_SPEC = TokenizerSpec()


def _as_text(text: str | bytes) -> str:
    if isinstance(text, (bytes, bytearray)):
        try:
            return bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputError(f"invalid UTF-8 input at byte {exc.start}") from exc
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise InputError(f"text is not encodable as UTF-8 at position {exc.start}") from exc
    return text


@lru_cache(maxsize=65536)
def _lexical(text: str) -> tuple[str, ...]:
    return tuple(m.group(0).lower() for m in _TOKEN_RE.finditer(text))


def tokenize(text: str | bytes, spec: TokenizerSpec = DEFAULT_SPEC) -> list[str]:
    """Split ``text`` into lowercased tokens.

    >>> tokenize("The cat sat.")
    ['the', 'cat', 'sat']
    """
    text = _as_text(text)
    if spec.kind == "external":
        return list(spec.external(text))  # type: ignore[misc]
    return list(_lexical(text))


def content_token_list(text: str | bytes, spec: TokenizerSpec = DEFAULT_SPEC) -> list[str]:
    """Tokens minus stopwords, order and multiplicity preserved."""
    return [tok for tok in tokenize(text, spec) if tok not in spec.stopwords]


def content_tokens(text: str | bytes, spec: TokenizerSpec = DEFAULT_SPEC) -> set[str]:
    return set(content_token_list(text, spec))


def content_counts(text: str | bytes, spec: TokenizerSpec = DEFAULT_SPEC) -> Counter[str]:
    return Counter(content_token_list(text, spec))


def count_tokens(text: str | bytes, spec: TokenizerSpec = DEFAULT_SPEC) -> int:
    return len(tokenize(text, spec))


def token_spans(text: str) -> Iterable[tuple[int, int]]:
    """Character spans of default-lexical tokens, in order."""
    return ((m.start(), m.end()) for m in _TOKEN_RE.finditer(text))


def truncate_to_tokens(text: str, max_tokens: int) -> str:
    """Longest prefix of ``text`` holding at most ``max_tokens`` tokens.

    The cut falls right after the last kept token, so trailing punctuation of
    that token's clause is dropped.
    """
    if max_tokens <= 0:
        return ""
    for n, (_, stop) in enumerate(token_spans(text), start=1):
        if n == max_tokens:
            return text[:stop]
    return text
