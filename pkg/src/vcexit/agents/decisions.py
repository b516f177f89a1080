"""Decision vocabulary and the one-line response grammar.

A model answer is free text whose last ``DECISION:`` line carries the verdict::

    DECISION: HOLD
    DECISION: EXIT_NOW
    DECISION: EXIT_WITHIN(3)
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from ..errors import AmbiguousDecision, InvalidWindow


@dataclass(frozen=True)
class Hold:
    def __str__(self) -> str:
        return "HOLD"


@dataclass(frozen=True)
class ExitNow:
    def __str__(self) -> str:
        return "EXIT_NOW"


@dataclass(frozen=True)
class ExitWithin:
    months: int

    def __post_init__(self):
        if isinstance(self.months, bool) or not isinstance(self.months, int) or self.months < 1:
            raise InvalidWindow(f"exit window must be a positive number of months, got {self.months!r}")

    def __str__(self) -> str:
        return f"EXIT_WITHIN({self.months})"


Decision = Union[Hold, ExitNow, ExitWithin]

HOLD = Hold()
EXIT_NOW = ExitNow()

_LINE_RE = re.compile(
    r"^\s*decision\s*:\s*(?:(?P<hold>hold)|(?P<now>exit_now)|exit_within\s*\(\s*(?P<k>[-+]?\d{1,9})\s*\))\s*\.?\s*$",
    re.IGNORECASE,
)


def is_exit(decision: Decision) -> bool:
    return not isinstance(decision, Hold)


def render_decision(decision: Decision) -> str:
    return f"DECISION: {decision}"


def parse_decision(response_text: str) -> Decision:
    """Return the verdict on the last line that matches the grammar."""
    for line in reversed(response_text.splitlines()):
        m = _LINE_RE.match(line)
        if m is None:
            continue
        if m.group("hold"):
            return HOLD
        if m.group("now"):
            return EXIT_NOW
        return ExitWithin(int(m.group("k")))
    raise AmbiguousDecision("no 'DECISION: HOLD | EXIT_NOW | EXIT_WITHIN(k)' line in response")


def decision_from_label(label: str) -> Decision:
    """Inverse of ``str(decision)``; also accepts a full ``DECISION:`` line."""
    text = label if label.strip().lower().startswith("decision") else f"DECISION: {label}"
    return parse_decision(text)
