import json
from dataclasses import replace

import httpx
import pytest

from ctxcompress.errors import GatewayError
from ctxcompress.gateway import (
    Gateway,
    GatewayConfig,
    MockGateway,
    answer_prompt,
    mock_transport,
)
from ctxcompress.model import Query
from ctxcompress.pipeline import EngineConfig, compress_step
from ctxcompress.text import count_tokens


def test_disabled_gateway():
    gw = Gateway(GatewayConfig())
    assert not gw.cfg.enabled
    with pytest.raises(GatewayError, match="disabled"):
        gw.chat([{"role": "user", "content": "hi"}])


def test_from_env():
    cfg = GatewayConfig.from_env({"CTX_LLM_ENDPOINT": "http://x", "CTX_LLM_API_KEY": "k", "CTX_LLM_MODEL": "m"})
    assert cfg.enabled and cfg.api_key == "k" and cfg.model_name == "m"
    assert not GatewayConfig.from_env({}).enabled


def test_answer_prompt_golden():
    msgs = answer_prompt(["[SUMMARY] Trip booked.", "Meeting moved to Thursday."], "When is the meeting?")
    assert msgs == [
        {"role": "system", "content": "Answer the question using only the conversation context. Reply with the answer only."},
        {
            "role": "user",
            "content": "Context:\n[SUMMARY] Trip booked.\nMeeting moved to Thursday.\n\nQuestion: When is the meeting?\nAnswer:",
        },
    ]


def test_mock_echoes_question():
    gw = MockGateway()
    assert gw.generate_answer(["ctx"], "What now?") == "What now?"
    assert gw.requests[0]["model"] == "mock"


def test_summary_is_marked_and_capped():
    gw = MockGateway(summary=" ".join(["word"] * 40))
    out = gw.summarize_remote("block", 10)
    assert out.startswith("[SUMMARY] ")
    assert count_tokens(out) == 10
    short = MockGateway(summary="[SUMMARY] already marked").summarize_remote("block", 10)
    assert short == "[SUMMARY] already marked"


def test_contradiction_parse():
    assert MockGateway(contradiction="0.73").contradiction_remote("a", "b") == 0.73
    assert MockGateway(contradiction=" 1 ").contradiction_remote("a", "b") == 1.0
    with pytest.raises(GatewayError, match="unparseable"):
        MockGateway(contradiction="maybe").contradiction_remote("a", "b")


def test_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(json.loads(request.content))
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = Gateway(GatewayConfig("http://llm.invalid/v1", "secret", max_retries=2), transport=httpx.MockTransport(handler))
    assert gw.chat([{"role": "user", "content": "hi"}]) == "ok"
    assert len(calls) == 3


def test_retries_exhausted():
    gw = Gateway(
        GatewayConfig("http://llm.invalid/v1", max_retries=1),
        transport=httpx.MockTransport(lambda r: httpx.Response(500)),
    )
    with pytest.raises(GatewayError, match="2 attempts"):
        gw.chat([{"role": "user", "content": "hi"}])


def test_auth_header():
    seen = {}

    def handler(request):
        seen.update(request.headers)
        return httpx.Response(200, json={"choices": [{"message": {"content": "x"}}]})

    Gateway(GatewayConfig("http://llm.invalid/v1", "abc"), transport=httpx.MockTransport(handler)).chat([])
    assert seen["authorization"] == "Bearer abc"


def test_remote_contradiction_in_pipeline(toy):
    cfg = replace(EngineConfig(), scorers={"contradiction": "remote"})
    res = compress_step(toy, Query("meeting", 8), cfg, "prev answer", gateway=MockGateway(contradiction="0.5"))
    assert all(s.c == 0.5 for s in res.scored)
    fallback = compress_step(toy, Query("meeting", 8), cfg, "prev answer")
    assert "contradiction-fallback" in fallback.flags


def test_remote_contradiction_failure_falls_back(toy):
    cfg = replace(EngineConfig(), scorers={"contradiction": "remote"})
    gw = Gateway(GatewayConfig("http://llm.invalid/v1", max_retries=0), transport=mock_transport(lambda p: "garbage"))
    res = compress_step(toy, Query("meeting", 8), cfg, "The meeting is on Friday.", gateway=gw)
    assert "contradiction-fallback" in res.flags
    assert res.scored == compress_step(toy, Query("meeting", 8), EngineConfig(), "The meeting is on Friday.").scored
