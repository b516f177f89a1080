"""Prompt templates and the theory blocks injected into them."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import EmptyPacket, InputError, MissingPlaceholder
from ..timeline import MARKET_KINDS, EventRecord, InfoPacket

PLACEHOLDERS = ("month", "firm_facts", "market_facts", "theory_blocks", "instructions")
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")

NO_THEORY_SENTINEL = "No theoretical background provided."

INSTRUCTIONS = (
    "Decide whether the investor should keep holding, exit now, or plan to exit within "
    "a specific number of months. Explain your reasoning briefly. The last line of your "
    "answer must be exactly one of:\n"
    "DECISION: HOLD\n"
    "DECISION: EXIT_NOW\n"
    "DECISION: EXIT_WITHIN(k)   where k is a whole number of months, k >= 1"
)


@dataclass(frozen=True)
class TheoryBlock:
    id: str
    text: str

    def __post_init__(self):
        if self.id not in THEORY_IDS:
            raise ValueError(f"unknown theory block {self.id!r}")
        if not self.text.strip():
            raise ValueError(f"theory block {self.id!r} has no text")


THEORY_TEXT = {
    "signaling": (
        "Signaling and information asymmetry: insiders know more about firm quality than "
        "the market. Selling early can be read as a negative signal and may force a sale "
        "at an undervalued price, while a reputable investor who keeps its stake signals "
        "confidence. Holding is more valuable when the market is still uncertain about quality."
    ),
    "survival_determinants": (
        "Survival-model determinants of exit timing: the likelihood of exiting is not constant "
        "over time. It tends to rise after the investment matures, level off and then decline. "
        "Syndicate size, milestones reached and market conditions shift the timing."
    ),
    "monitoring": (
        "Post-IPO monitoring incentives: investors with board seats or a monitoring role in "
        "high-quality firms tend to stay longer, while liquidity needs of the fund and strong "
        "stock performance after the IPO speed up exit."
    ),
    "lockup_timing_risk": (
        "Lockup constraints and timing risk: lockups prevent selling right after the IPO, so "
        "investors can miss favourable windows. Hot markets reverse quickly, and waiting after "
        "a peak can cost substantial value."
    ),
    "real_options": (
        "Real-options reasoning: a retained stake is an option on future upside that the market "
        "has not priced. Its value grows with uncertainty and with positive private information "
        "such as patents or technology news; it shrinks as that upside is realized or fades."
    ),
}
THEORY_IDS = tuple(THEORY_TEXT)


def theory_blocks(ids: Iterable[str] = THEORY_IDS) -> list[TheoryBlock]:
    return [TheoryBlock(i, THEORY_TEXT[i]) for i in ids]


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    def __post_init__(self):
        found = _PLACEHOLDER_RE.findall(self.body)
        for name in PLACEHOLDERS:
            n = found.count(name)
            if n != 1:
                raise MissingPlaceholder(
                    f"template {self.template_id!r}: placeholder {{{{{name}}}}} appears {n} times, expected once"
                )


def load_template(template_id: str, templates_dir: str | Path | None = None) -> PromptTemplate:
    """Read ``{template_id}.txt`` from ``templates_dir`` or the bundled templates."""
    if templates_dir is not None:
        path = Path(templates_dir) / f"{template_id}.txt"
        try:
            body = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise InputError(f"template not found: {path}") from None
    else:
        ref = resources.files("vcexit").joinpath("data", "templates", f"{template_id}.txt")
        if not ref.is_file():
            raise InputError(f"no bundled template named {template_id!r}")
        body = ref.read_text(encoding="utf-8")
    return PromptTemplate(template_id, body)


def _render_event(e: EventRecord) -> str:
    payload = dict(e.payload)
    text = payload.pop("text", None)
    parts = []
    if text:
        parts.append(str(text).strip())
    if payload:
        parts.append(json.dumps(payload, sort_keys=True, ensure_ascii=False))
    when = f"month {e.month}" if not e.pre_lockup else f"{e.pre_lockup} months before lockup expiration"
    return f"- [{when}] {e.kind.value} ({e.source_id}): {' '.join(parts)}"


def _render_events(events: Sequence[EventRecord]) -> str:
    if not events:
        return "None available."
    return "\n".join(_render_event(e) for e in events)


def build_prompt(packet: InfoPacket, template: PromptTemplate, theory: Sequence[TheoryBlock]) -> str:
    if not packet.events:
        raise EmptyPacket(f"no information for {packet.firm_id} at month {packet.as_of}")
    # packet events are sorted by month already; keep that order in both sections
    market = [e for e in packet.events if e.kind in MARKET_KINDS]
    firm = [e for e in packet.events if e.kind not in MARKET_KINDS]
    if theory:
        theory_text = "\n\n".join(f"{b.id.replace('_', ' ').title()}: {b.text}" for b in theory)
    else:
        theory_text = NO_THEORY_SENTINEL
    values = {
        "month": str(packet.as_of),
        "firm_facts": _render_events(firm),
        "market_facts": _render_events(market),
        "theory_blocks": theory_text,
        "instructions": INSTRUCTIONS,
    }
    # single pass so placeholder-like text inside event payloads is left alone
    return _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(1), m.group(0)), template.body)
