from __future__ import annotations

import json
import random

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vcexit.agents import (
    EXIT_NOW,
    HOLD,
    NO_THEORY_SENTINEL,
    AgentConfig,
    ChatClient,
    ClientConfig,
    ExitWithin,
    FirmContext,
    PromptTemplate,
    TokenBucket,
    build_agent,
    build_prompt,
    cache_key,
    decide,
    load_template,
    parse_decision,
    render_decision,
    theory_blocks,
)
from vcexit.errors import (
    AmbiguousDecision,
    CacheCorrupt,
    EmptyPacket,
    EndpointUnreachable,
    InvalidWindow,
    MissingPlaceholder,
    NonSuccessStatus,
    ScriptExhausted,
)
from vcexit.timeline import EventRecord, as_of, ingest_events


def timeline_with_prices(closes, extra=()):
    events = [EventRecord("F", m, "price", {"close": c}, "p") for m, c in enumerate(closes)]
    return ingest_events([*events, *extra], horizon=60)


class TestParseDecision:
    def test_exit_window(self):
        assert parse_decision("…analysis…\nDECISION: EXIT_WITHIN(3)") == ExitWithin(3)

    def test_hold(self):
        assert parse_decision("DECISION: HOLD") == HOLD

    def test_no_token(self):
        with pytest.raises(AmbiguousDecision):
            parse_decision("I think you should sell.")

    def test_last_line_wins(self):
        assert parse_decision("DECISION: HOLD\nOn reflection:\ndecision: exit_now") == EXIT_NOW

    def test_zero_window(self):
        with pytest.raises(InvalidWindow):
            parse_decision("DECISION: EXIT_WITHIN(0)")

    def test_exit_within_zero_not_representable(self):
        with pytest.raises(InvalidWindow):
            ExitWithin(0)

    def test_embedded_mention_is_not_a_decision(self):
        with pytest.raises(AmbiguousDecision):
            parse_decision("Reply with DECISION: HOLD if unsure")

    @given(st.text())
    def test_total(self, text):
        try:
            parse_decision(text)
        except (AmbiguousDecision, InvalidWindow):
            pass

    @given(st.sampled_from([HOLD, EXIT_NOW]) | st.integers(1, 10_000).map(ExitWithin), st.text(alphabet="abc \n"))
    def test_round_trip(self, d, preamble):
        assert parse_decision(preamble + "\n" + render_decision(d)) == d


class TestPrompt:
    @pytest.fixture
    def packet(self):
        tl = timeline_with_prices(
            [10.0, 11.0, 12.0, 12.5],
            extra=[EventRecord("F", 2, "news", {"text": "Customer win announced."}, "wire")],
        )
        return as_of(tl, "F", 2)

    def test_all_placeholders_filled(self, packet):
        text = build_prompt(packet, load_template("baseline"), theory_blocks())
        assert "{{" not in text
        assert "Customer win announced." in text
        assert "DECISION: EXIT_WITHIN(k)" in text

    def test_no_theory_sentinel(self, packet):
        text = build_prompt(packet, load_template("baseline"), [])
        assert NO_THEORY_SENTINEL in text

    def test_deterministic(self, packet):
        t = load_template("concise")
        assert build_prompt(packet, t, theory_blocks()) == build_prompt(packet, t, theory_blocks())

    def test_events_ascending(self, packet):
        text = build_prompt(packet, load_template("baseline"), [])
        positions = [text.index(f"[month {m}] price") for m in (0, 1, 2)]
        assert positions == sorted(positions)

    def test_future_price_absent(self, packet):
        assert '"close": 12.5' not in build_prompt(packet, load_template("baseline"), [])

    def test_payload_placeholder_not_expanded(self):
        tl = ingest_events(
            [EventRecord("F", 0, "price", {"close": 1.0}, "p"), EventRecord("F", 0, "news", {"text": "{{month}}"}, "w")]
        )
        text = build_prompt(as_of(tl, "F", 0), load_template("baseline"), [])
        assert "{{month}}" in text

    def test_missing_placeholder(self):
        with pytest.raises(MissingPlaceholder):
            PromptTemplate("bad", "{{month}} {{firm_facts}}")

    def test_duplicate_placeholder(self):
        body = "{{month}} {{month}} {{firm_facts}} {{market_facts}} {{theory_blocks}} {{instructions}}"
        with pytest.raises(MissingPlaceholder):
            PromptTemplate("bad", body)

    def test_empty_packet(self):
        tl = ingest_events([], firms=["F"])
        with pytest.raises(EmptyPacket):
            build_prompt(as_of(tl, "F", 0), load_template("baseline"), [])


def completion(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


class Recorder:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, request):
        self.requests.append(json.loads(request.content))
        r = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        return r


def client_for(tmp_path, handler, **kw):
    cfg = ClientConfig(model_name="m1", cache_dir=tmp_path / "cache", backoff_base=0.0, **kw)
    return ChatClient(cfg, transport=httpx.MockTransport(handler))


class TestClient:
    def test_cache_hit_skips_network(self, tmp_path):
        rec = Recorder([completion("DECISION: HOLD")])
        client = client_for(tmp_path, rec)
        first = client.complete("prompt")
        second = client.complete("prompt")
        assert first == second == "DECISION: HOLD"
        assert len(rec.requests) == 1
        assert (client.hits, client.misses) == (1, 1)

    def test_cache_survives_new_client(self, tmp_path):
        client_for(tmp_path, Recorder([completion("A")])).complete("p")

        def offline(request):
            raise AssertionError("network used")

        assert client_for(tmp_path, offline).complete("p") == "A"

    def test_wire_format(self, tmp_path):
        rec = Recorder([completion("x")])
        client_for(tmp_path, rec, temperature=0.0).complete("hello")
        assert rec.requests == [{"model": "m1", "temperature": 0.0, "messages": [{"role": "user", "content": "hello"}]}]

    def test_retry_exhaustion(self, tmp_path):
        rec = Recorder([httpx.Response(500, text="boom")])
        client = client_for(tmp_path, rec, max_retries=3)
        with pytest.raises(EndpointUnreachable):
            client.complete("p")
        assert len(rec.requests) == 3

    def test_recovers_after_transient(self, tmp_path):
        rec = Recorder([httpx.Response(503), httpx.Response(429), completion("ok")])
        assert client_for(tmp_path, rec).complete("p") == "ok"
        assert len(rec.requests) == 3

    def test_connection_errors_retried(self, tmp_path):
        calls = []

        def refuse(request):
            calls.append(1)
            raise httpx.ConnectError("refused", request=request)

        with pytest.raises(EndpointUnreachable):
            client_for(tmp_path, refuse, max_retries=2).complete("p")
        assert len(calls) == 2

    def test_non_success_not_retried(self, tmp_path):
        rec = Recorder([httpx.Response(401, text="bad key")])
        with pytest.raises(NonSuccessStatus) as info:
            client_for(tmp_path, rec).complete("p")
        assert info.value.status == 401 and "bad key" in info.value.body
        assert len(rec.requests) == 1

    def test_keys_differ_by_one_char(self):
        assert cache_key("m", 0, "abc") != cache_key("m", 0, "abd")
        assert cache_key("m", 0, "abc") != cache_key("m", 0.5, "abc")
        assert cache_key("m", 0, "abc") != cache_key("m2", 0, "abc")

    def test_corrupt_cache(self, tmp_path):
        client = client_for(tmp_path, Recorder([completion("x")]))
        path = client.cache_path("p")
        path.parent.mkdir(parents=True)
        path.write_text("not json")
        with pytest.raises(CacheCorrupt):
            client.complete("p")

    def test_api_key_from_env(self, tmp_path, monkeypatch):
        seen = []

        def handler(request):
            seen.append(request.headers.get("authorization"))
            return completion("x")

        monkeypatch.setenv("VCEXIT_API_KEY", "sekrit")
        client_for(tmp_path, handler).complete("p")
        assert seen == ["Bearer sekrit"]


def test_token_bucket_waits():
    now = [0.0]
    sleeps = []

    def sleep(dt):
        sleeps.append(dt)
        now[0] += dt

    bucket = TokenBucket(rate=2.0, capacity=1.0, clock=lambda: now[0], sleep=sleep)
    bucket.acquire()
    bucket.acquire()
    assert sleeps == [pytest.approx(0.5)]


class TestRuleAgents:
    def ctx(self):
        return FirmContext("F")

    def test_lockup_exit(self):
        tl = timeline_with_prices([10.0, 11.0])
        cfg = AgentConfig(agent_kind="lockup_exit")
        assert decide(cfg, as_of(tl, "F", 0), self.ctx()) == EXIT_NOW
        assert decide(cfg, as_of(tl, "F", 1), self.ctx()) == HOLD

    def test_hazard_peak(self):
        # peak at month 14: hold through 14, exit from 15
        cfg = AgentConfig(agent_kind="hazard_curve", hazard_curve=((0, 0.01), (14, 0.09), (30, 0.02)))
        tl = timeline_with_prices([10.0] * 20)
        assert decide(cfg, as_of(tl, "F", 14), self.ctx()) == HOLD
        assert decide(cfg, as_of(tl, "F", 15), self.ctx()) == EXIT_NOW

    def test_momentum(self):
        # 8.8 / 10 - 1 = -12% < -10%
        cfg = AgentConfig(agent_kind="momentum", momentum_lookback=3, momentum_threshold=-0.10)
        tl = timeline_with_prices([10.0, 9.5, 9.0, 8.8])
        assert decide(cfg, as_of(tl, "F", 3), self.ctx()) == EXIT_NOW
        assert decide(cfg, as_of(tl, "F", 2), self.ctx()) == HOLD

    def test_momentum_above_threshold(self):
        # 9.2 / 10 - 1 = -8%
        cfg = AgentConfig(agent_kind="momentum", momentum_lookback=3, momentum_threshold=-0.10)
        tl = timeline_with_prices([10.0, 9.5, 9.0, 9.2])
        assert decide(cfg, as_of(tl, "F", 3), self.ctx()) == HOLD

    def test_replay_actual(self):
        tl = timeline_with_prices([10.0] * 8)
        cfg = AgentConfig(agent_kind="replay_actual")
        ctx = FirmContext("F", actual_exit_month=5)
        assert [decide(cfg, as_of(tl, "F", t), ctx) for t in (4, 5)] == [HOLD, EXIT_NOW]

    def test_scripted(self):
        tl = timeline_with_prices([10.0] * 3)
        agent = build_agent(AgentConfig(agent_kind="scripted_mock", script=("HOLD", "EXIT_WITHIN(2)")))
        assert agent.decide(as_of(tl, "F", 1), self.ctx()) == ExitWithin(2)
        assert agent.decide(as_of(tl, "F", 0), self.ctx()) == HOLD
        with pytest.raises(ScriptExhausted):
            agent.decide(as_of(tl, "F", 2), self.ctx())

    def test_rule_agents_ignore_call_order(self):
        tl = timeline_with_prices([10.0, 9.0, 8.0, 7.0, 7.5, 6.0, 6.5])
        for kind in ("lockup_exit", "momentum", "hazard_curve"):
            agent = build_agent(AgentConfig(agent_kind=kind))
            months = list(range(7))
            forward = [agent.decide(as_of(tl, "F", t), self.ctx()) for t in months]
            random.Random(1).shuffle(months)
            shuffled = {t: agent.decide(as_of(tl, "F", t), self.ctx()) for t in months}
            assert forward == [shuffled[t] for t in range(7)]

    def test_llm_config_requires_model(self):
        with pytest.raises(ValueError):
            AgentConfig(agent_kind="llm", template_id="baseline")


class TestLLMAgent:
    def make(self, tmp_path, handler, fallback="hold"):
        cfg = AgentConfig(agent_kind="llm", model_name="m1", template_id="baseline", ambiguous_fallback=fallback)
        return build_agent(cfg, client_for(tmp_path, handler), load_template("baseline"))

    def test_decision_from_response(self, tmp_path):
        agent = self.make(tmp_path, Recorder([completion("Sell soon.\nDECISION: EXIT_WITHIN(3)")]))
        tl = timeline_with_prices([10.0])
        assert agent.decide(as_of(tl, "F", 0), FirmContext("F")) == ExitWithin(3)

    def test_ambiguous_treated_as_hold(self, tmp_path):
        agent = self.make(tmp_path, Recorder([completion("no idea")]))
        assert agent.decide(as_of(timeline_with_prices([10.0]), "F", 0), FirmContext("F")) == HOLD

    def test_ambiguous_fails_when_configured(self, tmp_path):
        agent = self.make(tmp_path, Recorder([completion("no idea")]), fallback="fail")
        with pytest.raises(AmbiguousDecision):
            agent.decide(as_of(timeline_with_prices([10.0]), "F", 0), FirmContext("F"))

    def test_warm_cache_is_deterministic(self, tmp_path):
        tl = timeline_with_prices([10.0, 9.0, 8.0])
        rec = Recorder([completion("DECISION: HOLD")])
        agent = self.make(tmp_path, rec)
        first = [agent.decide(as_of(tl, "F", t), FirmContext("F")) for t in range(3)]

        def offline(request):
            raise AssertionError("network used")

        again = self.make(tmp_path, offline)
        assert [again.decide(as_of(tl, "F", t), FirmContext("F")) for t in range(3)] == first
        assert len(rec.requests) == 3
