"""Point-in-time event store.

Every piece of public information about a firm is an :class:`EventRecord`
stamped with a month index counted from the firm's lockup-expiration month.
:func:`as_of` is the only way agents see data, and it never returns an event
stamped after the query month.

Usage::

    firms = load_firms("firms.json")
    timeline = ingest_events(read_events("events.jsonl", firms), horizon=60)
    packet = as_of(timeline, "ACME", 12)
"""

from __future__ import annotations

import bisect
import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping

from .errors import (
    DuplicateEvent,
    InputError,
    MalformedRecord,
    MonthOutOfRange,
    NegativePrice,
    UnknownFirm,
)

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 60


class EventKind(str, Enum):
    PRICE = "price"
    FILING_10K = "filing_10K"
    FILING_10Q = "filing_10Q"
    EARNINGS_CALL = "earnings_call"
    NEWS = "news"
    INDUSTRY = "industry"
    MACRO = "macro"
    PATENT = "patent"


MARKET_KINDS = frozenset({EventKind.PRICE, EventKind.INDUSTRY, EventKind.MACRO})


@dataclass(frozen=True)
class FirmMeta:
    firm_id: str
    ipo_month: str
    lockup_expiration_month: str
    industry: str = "unknown"

    @property
    def ipo_year(self) -> int:
        return int(self.ipo_month[:4])


@dataclass(frozen=True)
class EventRecord:
    """One timestamped item of public information.

    ``month`` is the decision month the item becomes visible in. Items dated
    before lockup expiration are collapsed into month 0; ``pre_lockup`` keeps
    how many months earlier they were originally dated so that distinct
    historical items do not collide.
    """

    firm_id: str
    month: int
    kind: EventKind
    payload: Mapping[str, Any]
    source_id: str
    pre_lockup: int = 0

    def __post_init__(self):
        if not self.firm_id:
            raise MalformedRecord("empty firm_id")
        if not isinstance(self.month, int) or isinstance(self.month, bool) or self.month < 0:
            raise MalformedRecord(f"month must be a non-negative integer, got {self.month!r}")
        if self.pre_lockup < 0 or (self.pre_lockup and self.month != 0):
            raise MalformedRecord("pre_lockup history must sit at month 0")
        try:
            kind = EventKind(self.kind)
        except ValueError:
            raise MalformedRecord(f"unknown event kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if not isinstance(self.payload, Mapping):
            raise MalformedRecord("payload must be an object")
        object.__setattr__(self, "payload", MappingProxyType(dict(self.payload)))
        if kind is EventKind.PRICE:
            close = self.payload.get("close")
            if isinstance(close, bool) or not isinstance(close, (int, float)):
                raise MalformedRecord(f"price payload needs numeric close, got {close!r}")
            if close <= 0:
                raise NegativePrice(f"close must be > 0, got {close!r} ({self.firm_id}, month {self.month})")

    @property
    def key(self) -> tuple:
        return (self.firm_id, self.month, self.kind.value, self.source_id, self.pre_lockup)

    @property
    def sort_key(self) -> tuple:
        return (self.firm_id, self.month, self.kind.value, -self.pre_lockup, self.source_id)

    def to_dict(self) -> dict:
        d = {
            "firm_id": self.firm_id,
            "month": self.month,
            "kind": self.kind.value,
            "payload": dict(self.payload),
            "source_id": self.source_id,
        }
        if self.pre_lockup:
            d["pre_lockup"] = self.pre_lockup
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EventRecord:
        return cls(
            firm_id=d["firm_id"],
            month=d["month"],
            kind=d["kind"],
            payload=d["payload"],
            source_id=d["source_id"],
            pre_lockup=d.get("pre_lockup", 0),
        )


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=dict)


@dataclass(frozen=True)
class InfoPacket:
    firm_id: str
    as_of: int
    events: tuple[EventRecord, ...]
    digest: str

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: EventKind) -> list[EventRecord]:
        return [e for e in self.events if e.kind in kinds]

    def prices(self) -> dict[int, float]:
        """Month-end closes visible in this packet, keyed by month (pre-lockup history excluded)."""
        return {
            e.month: float(e.payload["close"])
            for e in self.events
            if e.kind is EventKind.PRICE and not e.pre_lockup
        }


def packet_digest(firm_id: str, t: int, events: Iterable[EventRecord]) -> str:
    body = _canonical({"firm_id": firm_id, "as_of": t, "events": [e.to_dict() for e in events]})
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Violation:
    rule: str
    firm_id: str
    month: int | None = None


@dataclass(frozen=True)
class Timeline:
    events: tuple[EventRecord, ...]
    firms: frozenset[str]
    horizon: int = DEFAULT_HORIZON
    _by_firm: Mapping[str, tuple[EventRecord, ...]] = field(
        default=MappingProxyType({}), repr=False, compare=False
    )
    _months: Mapping[str, tuple[int, ...]] = field(
        default=MappingProxyType({}), repr=False, compare=False
    )

    def __post_init__(self):
        by_firm: dict[str, list[EventRecord]] = {f: [] for f in self.firms}
        for e in self.events:
            by_firm.setdefault(e.firm_id, []).append(e)
        object.__setattr__(self, "_by_firm", MappingProxyType({f: tuple(v) for f, v in by_firm.items()}))
        object.__setattr__(
            self, "_months", MappingProxyType({f: tuple(e.month for e in v) for f, v in by_firm.items()})
        )

    def firm_events(self, firm_id: str) -> tuple[EventRecord, ...]:
        try:
            return self._by_firm[firm_id]
        except KeyError:
            raise UnknownFirm(firm_id) from None

    def price_closes(self, firm_id: str) -> dict[int, float]:
        return {
            e.month: float(e.payload["close"])
            for e in self.firm_events(firm_id)
            if e.kind is EventKind.PRICE and not e.pre_lockup
        }


def ingest_events(
    records: Iterable[EventRecord],
    horizon: int = DEFAULT_HORIZON,
    firms: Iterable[str] = (),
) -> Timeline:
    """Build an immutable, sorted timeline, rejecting duplicate keys."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    seen: set[tuple] = set()
    events: list[EventRecord] = []
    for i, rec in enumerate(records, start=1):
        if not isinstance(rec, EventRecord):
            raise MalformedRecord(f"expected EventRecord, got {type(rec).__name__}", line=i)
        if rec.key in seen:
            raise DuplicateEvent(f"record {i}: duplicate event key {rec.key}")
        seen.add(rec.key)
        events.append(rec)
    events.sort(key=lambda e: e.sort_key)
    firm_set = frozenset(firms) | {e.firm_id for e in events}
    return Timeline(events=tuple(events), firms=firm_set, horizon=horizon)


def as_of(timeline: Timeline, firm: str, t: int) -> InfoPacket:
    """Everything known about ``firm`` at the end of month ``t``, and nothing later."""
    if firm not in timeline.firms:
        raise UnknownFirm(firm)
    if not 0 <= t <= timeline.horizon:
        raise MonthOutOfRange(f"month {t} outside [0, {timeline.horizon}]")
    events = timeline.firm_events(firm)
    cut = bisect.bisect_right(timeline._months[firm], t)
    visible = events[:cut]
    return InfoPacket(firm_id=firm, as_of=t, events=visible, digest=packet_digest(firm, t, visible))


def validate_timeline(timeline: Timeline) -> list[Violation]:
    violations: list[Violation] = []
    for firm in sorted(timeline.firms):
        events = timeline.firm_events(firm)
        if not any(e.month == 0 and e.kind is EventKind.PRICE and not e.pre_lockup for e in events):
            violations.append(Violation("MissingLockupPrice", firm, 0))
        for month in sorted({e.month for e in events if e.month > timeline.horizon}):
            violations.append(Violation("BeyondHorizon", firm, month))
    return violations


# File formats


def parse_month(text: str) -> tuple[int, int]:
    try:
        year, month = text.split("-")
        y, m = int(year), int(month)
    except (AttributeError, ValueError):
        raise ValueError(f"expected YYYY-MM, got {text!r}") from None
    if not 1 <= m <= 12 or len(year) != 4:
        raise ValueError(f"expected YYYY-MM, got {text!r}")
    return y, m


def months_between(origin: str, month: str) -> int:
    """Signed number of calendar months from ``origin`` to ``month``."""
    y0, m0 = parse_month(origin)
    y1, m1 = parse_month(month)
    return (y1 - y0) * 12 + (m1 - m0)


def load_firms(path: str | Path) -> dict[str, FirmMeta]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"firms file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if isinstance(raw, Mapping):
        raw = raw.get("firms", [])
    firms: dict[str, FirmMeta] = {}
    for i, item in enumerate(raw):
        try:
            meta = FirmMeta(
                firm_id=str(item["firm_id"]),
                ipo_month=item["ipo_month"],
                lockup_expiration_month=item["lockup_expiration_month"],
                industry=item.get("industry") or "unknown",
            )
            parse_month(meta.ipo_month)
            parse_month(meta.lockup_expiration_month)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: firm entry {i}: {exc}") from None
        if meta.firm_id in firms:
            raise InputError(f"{path}: duplicate firm {meta.firm_id!r}")
        firms[meta.firm_id] = meta
    return firms


def read_events(path: str | Path, firms: Mapping[str, FirmMeta]) -> Iterator[EventRecord]:
    """Parse events.jsonl, mapping calendar months onto each firm's lockup-relative index."""
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"events file not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                firm_id = obj["firm_id"]
                offset = months_between(firms[firm_id].lockup_expiration_month, obj["month"])
                record = EventRecord(
                    firm_id=firm_id,
                    month=max(offset, 0),
                    kind=obj["kind"],
                    payload=obj.get("payload", {}),
                    source_id=str(obj["source_id"]),
                    pre_lockup=max(-offset, 0),
                )
            except NegativePrice as exc:
                raise NegativePrice(str(exc), line=lineno) from None
            except MalformedRecord as exc:
                raise MalformedRecord(str(exc), line=lineno) from None
            except KeyError as exc:
                raise MalformedRecord(f"missing or unknown key {exc}", line=lineno) from None
            except (TypeError, ValueError, UnicodeDecodeError) as exc:
                raise MalformedRecord(str(exc), line=lineno) from None
            yield record


def write_timeline(timeline: Timeline, path: str | Path) -> None:
    """Persist as JSONL: a header line then one event per line."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_canonical({"horizon": timeline.horizon, "firms": sorted(timeline.firms)}) + "\n")
        for e in timeline.events:
            fh.write(_canonical(e.to_dict()) + "\n")


def load_timeline(path: str | Path) -> Timeline:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise InputError(f"timeline store not found: {path} (run ingest first)") from None
    if not lines:
        raise InputError(f"{path}: empty timeline store")
    header = json.loads(lines[0])

    def records():
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                yield EventRecord.from_dict(json.loads(line))
            except (KeyError, ValueError) as exc:
                raise MalformedRecord(str(exc), line=lineno) from None

    return ingest_events(records(), horizon=header["horizon"], firms=header["firms"])
