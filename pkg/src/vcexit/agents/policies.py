"""Decision agents.

Every agent maps an :class:`~vcexit.timeline.InfoPacket` to a decision for
the packet's month. Rule agents only read the packet and their config.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import AmbiguousDecision, ScriptExhausted
from ..timeline import InfoPacket
from .client import ChatClient
from .decisions import EXIT_NOW, HOLD, Decision, decision_from_label, parse_decision
from .prompts import THEORY_IDS, PromptTemplate, build_prompt, theory_blocks

logger = logging.getLogger(__name__)

# rises, peaks at two years, then declines
DEFAULT_HAZARD_CURVE = ((0, 0.010), (12, 0.030), (24, 0.050), (36, 0.035), (48, 0.020), (60, 0.010))


class AgentKind(str, Enum):
    LLM = "llm"
    LOCKUP_EXIT = "lockup_exit"
    MOMENTUM = "momentum"
    HAZARD_CURVE = "hazard_curve"
    REPLAY_ACTUAL = "replay_actual"
    SCRIPTED_MOCK = "scripted_mock"


class AmbiguousFallback(str, Enum):
    HOLD = "hold"
    FAIL = "fail"


@dataclass(frozen=True)
class AgentConfig:
    agent_kind: AgentKind = AgentKind.LOCKUP_EXIT
    model_name: str | None = None
    template_id: str | None = None
    temperature: float = 0.0
    theory_ids: tuple[str, ...] = THEORY_IDS
    momentum_lookback: int = 3
    momentum_threshold: float = -0.10
    hazard_curve: tuple[tuple[int, float], ...] = DEFAULT_HAZARD_CURVE
    # one list for every firm, or firm_id -> list; entries are decision labels such as "HOLD"
    script: Sequence[str] | Mapping[str, Sequence[str]] = ()
    ambiguous_fallback: AmbiguousFallback = AmbiguousFallback.HOLD

    def __post_init__(self):
        object.__setattr__(self, "agent_kind", AgentKind(self.agent_kind))
        object.__setattr__(self, "ambiguous_fallback", AmbiguousFallback(self.ambiguous_fallback))
        object.__setattr__(self, "theory_ids", tuple(self.theory_ids))
        object.__setattr__(self, "hazard_curve", tuple((int(m), float(h)) for m, h in self.hazard_curve))
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        unknown = set(self.theory_ids) - set(THEORY_IDS)
        if unknown:
            raise ValueError(f"unknown theory ids: {sorted(unknown)}")
        if self.agent_kind is AgentKind.LLM and not (self.model_name and self.template_id):
            raise ValueError("llm agents need model_name and template_id")
        if self.momentum_lookback < 1:
            raise ValueError("momentum_lookback must be >= 1")
        if self.agent_kind is AgentKind.HAZARD_CURVE and not self.hazard_curve:
            raise ValueError("hazard_curve agent needs curve points")


@dataclass
class FirmContext:
    """Per-firm state handed to agents alongside each packet."""

    firm_id: str
    actual_exit_month: int | None = None
    notes: dict = field(default_factory=dict)


class Agent:
    config: AgentConfig

    def decide(self, packet: InfoPacket, context: FirmContext) -> Decision:
        raise NotImplementedError

    def prompt_digest(self, packet: InfoPacket) -> str | None:
        return None


class LockupExitAgent(Agent):
    def __init__(self, config: AgentConfig):
        self.config = config

    def decide(self, packet, context):
        return EXIT_NOW if packet.as_of == 0 else HOLD


class MomentumAgent(Agent):
    """Exit once the trailing ``lookback``-month return falls below the threshold."""

    def __init__(self, config: AgentConfig):
        self.config = config

    def decide(self, packet, context):
        prices = packet.prices()
        t, lookback = packet.as_of, self.config.momentum_lookback
        if t < lookback or t not in prices or (t - lookback) not in prices:
            return HOLD
        trailing = prices[t] / prices[t - lookback] - 1.0
        return EXIT_NOW if trailing < self.config.momentum_threshold else HOLD


def hazard_peak_month(curve: Sequence[tuple[int, float]]) -> int:
    """Month of the highest hazard; the earliest one on ties."""
    return min(sorted(curve), key=lambda p: (-p[1], p[0]))[0]


class HazardCurveAgent(Agent):
    def __init__(self, config: AgentConfig):
        self.config = config
        self.peak = hazard_peak_month(config.hazard_curve)

    def decide(self, packet, context):
        return EXIT_NOW if packet.as_of > self.peak else HOLD


class ReplayActualAgent(Agent):
    def __init__(self, config: AgentConfig):
        self.config = config

    def decide(self, packet, context):
        if context.actual_exit_month is not None and packet.as_of >= context.actual_exit_month:
            return EXIT_NOW
        return HOLD


class ScriptedMockAgent(Agent):
    """Replays a fixed decision list, indexed by month so call order never matters."""

    def __init__(self, config: AgentConfig):
        self.config = config
        script = config.script
        if isinstance(script, Mapping):
            self._scripts = {k: [decision_from_label(s) for s in v] for k, v in script.items()}
            self._default = None
        else:
            self._scripts = {}
            self._default = [decision_from_label(s) for s in script]

    def decide(self, packet, context):
        script = self._scripts.get(packet.firm_id, self._default)
        if script is None or packet.as_of >= len(script):
            raise ScriptExhausted(f"no scripted decision for {packet.firm_id} at month {packet.as_of}")
        return script[packet.as_of]


class LLMAgent(Agent):
    def __init__(self, config: AgentConfig, client: ChatClient, template: PromptTemplate):
        self.config = config
        self.client = client
        self.template = template
        self.theory = theory_blocks(config.theory_ids)

    def prompt(self, packet: InfoPacket) -> str:
        return build_prompt(packet, self.template, self.theory)

    def prompt_digest(self, packet):
        return hashlib.sha256(self.prompt(packet).encode("utf-8")).hexdigest()

    def decide(self, packet, context):
        response = self.client.complete(self.prompt(packet))
        try:
            return parse_decision(response)
        except AmbiguousDecision:
            if self.config.ambiguous_fallback is AmbiguousFallback.FAIL:
                raise
            logger.warning("no decision line for %s month %d; treating as HOLD", packet.firm_id, packet.as_of)
            return HOLD


_RULE_AGENTS = {
    AgentKind.LOCKUP_EXIT: LockupExitAgent,
    AgentKind.MOMENTUM: MomentumAgent,
    AgentKind.HAZARD_CURVE: HazardCurveAgent,
    AgentKind.REPLAY_ACTUAL: ReplayActualAgent,
    AgentKind.SCRIPTED_MOCK: ScriptedMockAgent,
}


def build_agent(
    config: AgentConfig,
    client: ChatClient | None = None,
    template: PromptTemplate | None = None,
) -> Agent:
    if config.agent_kind is AgentKind.LLM:
        if client is None or template is None:
            raise ValueError("llm agent needs a client and a template")
        return LLMAgent(config, client, template)
    return _RULE_AGENTS[config.agent_kind](config)


def decide(
    config: AgentConfig,
    packet: InfoPacket,
    context: FirmContext,
    client: ChatClient | None = None,
    template: PromptTemplate | None = None,
) -> Decision:
    return build_agent(config, client, template).decide(packet, context)
