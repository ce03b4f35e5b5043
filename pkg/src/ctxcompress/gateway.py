"""Optional chat-completions client for abstractive summaries, answers and NLI.

Wire format (POST ``endpoint_url``)::

    {"model": str, "messages": [{"role": str, "content": str}], "temperature": number}

The reply text is read from ``choices[0].message.content``. Nothing in the
core engine needs this module; every caller falls back to the local default
when a :class:`~ctxcompress.errors.GatewayError` is raised.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

from .errors import GatewayError
from .memory import SUMMARY_MARKER, strip_marker
from .text import count_tokens, truncate_to_tokens

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "CTX_LLM_ENDPOINT"
ENV_API_KEY = "CTX_LLM_API_KEY"
ENV_MODEL = "CTX_LLM_MODEL"

ANSWER_SYSTEM = "Answer the question using only the conversation context. Reply with the answer only."
ANSWER_TEMPLATE = "Context:\n{context}\n\nQuestion: {question}\nAnswer:"
SUMMARY_SYSTEM = "Summarize the dialogue excerpt faithfully. Keep names, numbers and decisions."
SUMMARY_TEMPLATE = "Summarize in at most {cap} words:\n{text}"
NLI_SYSTEM = (
    "Rate the probability that statement B contradicts statement A. "
    "Reply with a single number between 0 and 1."
)
NLI_TEMPLATE = "A: {a}\nB: {b}\nProbability:"

_NUMBER = re.compile(r"^\s*([01](?:\.\d+)?|\.\d+)\s*$")


@dataclass(frozen=True)
class GatewayConfig:
    endpoint_url: str | None = None
    api_key: str | None = None
    model_name: str = "default"
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0

    @property
    def enabled(self) -> bool:
        return bool(self.endpoint_url)

    @classmethod
    def from_env(cls, environ: dict[str, str] | None = None, **overrides) -> GatewayConfig:
        env = os.environ if environ is None else environ
        return cls(
            endpoint_url=env.get(ENV_ENDPOINT) or None,
            api_key=env.get(ENV_API_KEY) or None,
            model_name=env.get(ENV_MODEL) or "default",
            **overrides,
        )


def answer_prompt(segment_texts: Sequence[str], question: str) -> list[dict[str, str]]:
    """Messages sent for answer generation; one context segment per line."""
    return [
        {"role": "system", "content": ANSWER_SYSTEM},
        {"role": "user", "content": ANSWER_TEMPLATE.format(context="\n".join(segment_texts), question=question)},
    ]


class Gateway:
    def __init__(self, cfg: GatewayConfig, transport: httpx.BaseTransport | None = None) -> None:
        self.cfg = cfg
        self._client = httpx.Client(transport=transport, timeout=cfg.timeout) if cfg.enabled else None

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def chat(self, messages: list[dict[str, str]]) -> str:
        if self._client is None:
            raise GatewayError("gateway disabled (no endpoint configured)")
        payload = {"model": self.cfg.model_name, "messages": messages, "temperature": self.cfg.temperature}
        headers = {"Authorization": f"Bearer {self.cfg.api_key}"} if self.cfg.api_key else {}
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            try:
                resp = self._client.post(self.cfg.endpoint_url, json=payload, headers=headers)
                resp.raise_for_status()
                return str(resp.json()["choices"][0]["message"]["content"])
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last = exc
                logger.warning("gateway attempt %d failed: %s", attempt + 1, exc)
                if attempt < self.cfg.max_retries:
                    time.sleep(min(2.0, 0.1 * 2**attempt))
        raise GatewayError(f"gateway request failed after {self.cfg.max_retries + 1} attempts: {last}")

    def summarize_remote(self, block_text: str, cap_tokens: int) -> str:
        body_budget = cap_tokens - count_tokens(SUMMARY_MARKER)
        raw = self.chat(
            [
                {"role": "system", "content": SUMMARY_SYSTEM},
                {"role": "user", "content": SUMMARY_TEMPLATE.format(cap=body_budget, text=block_text)},
            ]
        )
        return SUMMARY_MARKER + truncate_to_tokens(strip_marker(raw).strip(), body_budget)

    def generate_answer(self, context, question: str) -> str:
        """``context`` is a CompressedContext or a list of segment texts."""
        texts = [seg.text for seg in context.segments] if hasattr(context, "segments") else list(context)
        return self.chat(answer_prompt(texts, question)).strip()

    def contradiction_remote(self, text_a: str, text_b: str) -> float:
        raw = self.chat(
            [
                {"role": "system", "content": NLI_SYSTEM},
                {"role": "user", "content": NLI_TEMPLATE.format(a=text_a, b=text_b)},
            ]
        )
        m = _NUMBER.match(raw)
        if not m:
            raise GatewayError(f"unparseable contradiction probability: {raw!r}")
        return min(1.0, max(0.0, float(m.group(1))))


def mock_transport(responder: Callable[[dict], str]) -> httpx.MockTransport:
    """In-process transport that answers every request with ``responder(payload)``."""

    def handle(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content)
        content = responder(payload)
        return httpx.Response(200, json={"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})

    return httpx.MockTransport(handle)


class MockGateway(Gateway):
    """Deterministic gateway: canned summary, echoed question, fixed NLI score."""

    MOCK_URL = "http://mock.invalid/v1/chat/completions"

    def __init__(self, summary: str = "summary", contradiction: str = "0.0", answer: str | None = None) -> None:
        self.canned_summary = summary
        self.canned_contradiction = contradiction
        self.canned_answer = answer
        self.requests: list[dict] = []
        super().__init__(
            GatewayConfig(endpoint_url=self.MOCK_URL, model_name="mock", max_retries=0),
            transport=mock_transport(self._respond),
        )

    def _respond(self, payload: dict) -> str:
        self.requests.append(payload)
        system = payload["messages"][0]["content"]
        user = payload["messages"][-1]["content"]
        if system == SUMMARY_SYSTEM:
            return self.canned_summary
        if system == NLI_SYSTEM:
            return self.canned_contradiction
        if self.canned_answer is not None:
            return self.canned_answer
        return user.rsplit("Question: ", 1)[-1].rsplit("\nAnswer:", 1)[0]
