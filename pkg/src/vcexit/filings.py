"""VC holder extraction from filing text and realized exit reconstruction.

Filings are treated as periodic snapshots: a holder's stake is assumed
unchanged between two observations.
"""

from __future__ import annotations

import csv
import logging
import re
import statistics
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyInput, EmptyName, EmptySeries, InputError
from .timeline import FirmMeta, months_between, parse_month

logger = logging.getLogger(__name__)

PRE_IPO = -1
"""Report month of the pre-IPO baseline observation; sorts before month 0."""

DEFAULT_THRESHOLD_PCT = 5.0
DEFAULT_MATERIALITY_PCT = 1.0

DEFAULT_SECTION_PATTERNS = (
    r"principal\s+(?:and\s+selling\s+)?(?:stock|share)holders",
    r"security\s+ownership\s+of\s+certain\s+beneficial\s+owners",
    r"security\s+ownership",
)

# names that read as investment vehicles rather than individuals
DEFAULT_VC_PATTERNS = (
    r"\b(?:capital|ventures?|partners|partnership|funds?|equity|investors?|investments?|holdings)\b",
    r"\b(?:l\.?p\.?|l\.?l\.?c\.?|llp)\s*$",
)

DEFAULT_EXCLUDE_PATTERNS = (
    r"\bas\s+a\s+group\b",
    r"^name\s+of\s+beneficial\s+owner",
    r"^total\b",
)

# ---------------------------------------------------------------------------
# extraction

_ROW_RE = re.compile(
    r"""^\s*
    (?P<name>\S.*?)
    (?:\s[\s.:…_-]*?)?
    (?:\s(?P<shares>\d{1,3}(?:,\d{3})+|\d{4,}))?
    \s+(?P<pct>\d{1,3}(?:\.\d+)?)\s*%
    (?:\s*\(\s*[0-9a-z*]{1,3}\s*\))*
    \s*$""",
    re.VERBOSE | re.IGNORECASE,
)
_NAME_FOOTNOTE_RE = re.compile(r"(?:\s*\(\s*[0-9a-z*]{1,3}\s*\)|\*+)+$", re.IGNORECASE)
_NAME_TRAIL_RE = re.compile(r"(?:\s|\.{2,}|[:…_-])+$")
_ITEM_HEADING_RE = re.compile(r"^\s*item\s+\d+[a-z]?\b", re.IGNORECASE)


def _is_heading(line: str) -> bool:
    stripped = line.strip()
    if _ITEM_HEADING_RE.match(stripped):
        return True
    letters = [c for c in stripped if c.isalpha()]
    return (
        len(letters) >= 4
        and stripped.upper() == stripped
        and not any(c.isdigit() for c in stripped)
    )


def extract_holders(
    filing_text: str,
    section_patterns: Sequence[str] = DEFAULT_SECTION_PATTERNS,
    exclude_patterns: Sequence[str] = DEFAULT_EXCLUDE_PATTERNS,
) -> list[tuple[str, float]]:
    """Pull ``(holder name, percent owned)`` rows out of a stockholders table.

    A row is a name, an optional share count and a percentage token, with
    footnote markers such as ``(3)`` allowed on either side. Only lines inside
    a section whose heading matches one of ``section_patterns`` are read; the
    section runs until an ``Item N`` line or an all-caps heading after its
    first row.
    """
    headings = [re.compile(p, re.IGNORECASE) for p in section_patterns]
    excludes = [re.compile(p, re.IGNORECASE) for p in exclude_patterns]
    holders: list[tuple[str, float]] = []
    in_section = rows_seen = False
    for line in filing_text.splitlines():
        if any(h.search(line) for h in headings):
            in_section, rows_seen = True, False
            continue
        if not in_section:
            continue
        m = _ROW_RE.match(line)
        if m is None:
            # column headers are all-caps too, so a heading only closes a section after its first row
            if _ITEM_HEADING_RE.match(line) or (rows_seen and _is_heading(line)):
                in_section = False
            continue
        rows_seen = True
        name = _NAME_TRAIL_RE.sub("", _NAME_FOOTNOTE_RE.sub("", m.group("name"))).strip()
        if not name or any(x.search(name) for x in excludes):
            continue
        pct = float(m.group("pct"))
        if pct <= 100:
            holders.append((name, pct))
    return holders


# ---------------------------------------------------------------------------
# names

_LEADING_PHRASES = (
    ("entities", "affiliated", "with"),
    ("funds", "affiliated", "with"),
    ("entities", "associated", "with"),
    ("affiliates", "of"),
    ("the",),
)
_LEGAL_SUFFIXES = frozenset(
    {"lp", "llc", "llp", "lllp", "inc", "ltd", "limited", "corp", "co", "plc", "gmbh", "sarl", "sa", "nv"}
)
_ORDINALS = frozenset(
    {"first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
     "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth"}
)
_ROMAN_RE = re.compile(r"^m{0,4}(cm|cd|d?c{0,3})(xc|xl|l?x{0,3})(ix|iv|v?i{0,3})$")
_ARABIC_ORDINAL_RE = re.compile(r"^\d+(st|nd|rd|th)?$")


def _is_numeral(token: str) -> bool:
    return bool(token) and (bool(_ROMAN_RE.match(token)) or bool(_ARABIC_ORDINAL_RE.match(token)))


def _is_ordinal(token: str) -> bool:
    return token in _ORDINALS or bool(_ARABIC_ORDINAL_RE.match(token))


def _strip_step(tokens: list[str]) -> list[str]:
    for phrase in _LEADING_PHRASES:
        n = len(phrase)
        if len(tokens) > n and tuple(tokens[:n]) == phrase:
            return tokens[n:]
    if len(tokens) < 2:
        return tokens
    last = tokens[-1]
    if last in _LEGAL_SUFFIXES:
        return tokens[:-1]
    if len(tokens) >= 3 and tokens[-2] == "fund" and _is_numeral(last):
        return tokens[:-2]
    if len(tokens) >= 3 and last == "fund" and _is_ordinal(tokens[-2]):
        return tokens[:-2]
    if _is_numeral(last) or last in _ORDINALS:
        return tokens[:-1]
    return tokens


def is_vc_name(name: str, patterns: Sequence[str] = DEFAULT_VC_PATTERNS) -> bool:
    return any(re.search(p, name, re.IGNORECASE) for p in patterns)


def normalize_name(raw: str) -> str:
    """Canonical key for an investor name as printed in a filing.

    >>> normalize_name("SEQUOIA CAPITAL XII, L.P.")
    'sequoia capital'
    """
    if raw is None or not raw.strip():
        raise EmptyName("investor name is empty")
    text = unicodedata.normalize("NFKD", raw).encode("ascii", "ignore").decode("ascii").lower()
    text = text.replace(".", "")
    text = re.sub(r"[^a-z0-9&]+", " ", text)
    tokens = text.split()
    if not tokens:
        raise EmptyName(f"investor name has no usable characters: {raw!r}")
    while True:
        stripped = _strip_step(tokens)
        if stripped == tokens or not stripped:
            break
        tokens = stripped
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# ownership data


@dataclass(frozen=True)
class OwnershipObservation:
    firm_id: str
    vc_raw_name: str
    report_month: int
    pct_owned: float

    def __post_init__(self):
        if not 0 <= self.pct_owned <= 100:
            raise ValueError(f"pct_owned must be within [0, 100], got {self.pct_owned}")
        if self.report_month < PRE_IPO:
            raise ValueError(f"report_month must be >= 0 or PRE_IPO, got {self.report_month}")


class ReputationTier(str, Enum):
    HIGH = "high"
    OTHER = "other"


@dataclass(frozen=True)
class VcEntity:
    canonical_key: str
    aliases: frozenset[str]
    reputation_tier: ReputationTier | None = None

    def __post_init__(self):
        if not self.canonical_key:
            raise ValueError("canonical_key is empty")
        if not self.aliases:
            raise ValueError("an entity needs at least one alias")


def link_aliases(
    observations: Iterable[OwnershipObservation],
    reputation: Mapping[str, str] | None = None,
) -> list[VcEntity]:
    """Group raw names by canonical key, one entity per key, sorted by key."""
    reputation = reputation or {}
    groups: dict[str, set[str]] = defaultdict(set)
    for obs in observations:
        groups[normalize_name(obs.vc_raw_name)].add(obs.vc_raw_name)
    entities = []
    for key in sorted(groups):
        tier = reputation.get(key)
        entities.append(
            VcEntity(key, frozenset(groups[key]), ReputationTier(tier) if tier else None)
        )
    return entities


@dataclass(frozen=True)
class OwnershipSeries:
    firm_id: str
    entity: VcEntity
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.points:
            raise EmptySeries(f"no ownership points for {self.firm_id}/{self.entity.canonical_key}")
        months = [m for m, _ in self.points]
        if any(b <= a for a, b in zip(months, months[1:])):
            raise ValueError("ownership months must be strictly increasing")


def build_series(
    observations: Iterable[OwnershipObservation],
    entities: Sequence[VcEntity],
) -> list[OwnershipSeries]:
    """One series per (firm, entity); a later report for the same month wins."""
    alias_to_entity = {alias: e for e in entities for alias in e.aliases}
    grouped: dict[tuple[str, str], dict[int, float]] = defaultdict(dict)
    for obs in observations:
        entity = alias_to_entity[obs.vc_raw_name]
        grouped[(obs.firm_id, entity.canonical_key)][obs.report_month] = obs.pct_owned
    by_key = {e.canonical_key: e for e in entities}
    return [
        OwnershipSeries(firm, by_key[key], tuple(sorted(points.items())))
        for (firm, key), points in sorted(grouped.items())
    ]


class ExitClass(str, Enum):
    COMPLETE = "Complete"
    PARTIAL = "Partial"
    NO_EXIT = "NoExit"


@dataclass(frozen=True)
class ActualExitRecord:
    firm_id: str
    entity: VcEntity
    first_action_month: int | None
    threshold_cross_month: int | None
    full_exit_month: int | None
    classification: ExitClass

    def __post_init__(self):
        if (
            self.threshold_cross_month is not None
            and self.full_exit_month is not None
            and self.threshold_cross_month > self.full_exit_month
        ):
            raise ValueError("threshold crossing after full exit")
        if (self.classification is ExitClass.COMPLETE) != (self.full_exit_month is not None):
            raise ValueError("Complete iff a full exit month exists")

    def exit_month(self, definition: str) -> int | None:
        if definition == "threshold":
            return self.threshold_cross_month
        if definition == "full":
            return self.full_exit_month
        raise ValueError(f"unknown exit definition {definition!r}")


def derive_actual_exit(
    series: OwnershipSeries,
    threshold_pct: float = DEFAULT_THRESHOLD_PCT,
    horizon: int = 60,
    materiality_pct: float = DEFAULT_MATERIALITY_PCT,
) -> ActualExitRecord:
    """Date a VC's realized exit from its ownership trajectory.

    The pre-IPO baseline only serves as the reference for the first decline;
    crossing and full-exit months are read from post-IPO observations within
    ``horizon``.
    """
    if not 0 < threshold_pct < 100:
        raise ValueError("threshold_pct must lie strictly between 0 and 100")
    points = [(m, p) for m, p in series.points if m <= horizon]
    if not points:
        raise EmptySeries(f"no observations within horizon for {series.firm_id}")

    first_action = cross = full = None
    prev: float | None = None
    for month, pct in points:
        if month >= 0:
            if prev is not None and first_action is None and prev - pct >= materiality_pct:
                first_action = month
            if cross is None and pct < threshold_pct:
                cross = month
            if full is None and pct == 0:
                full = month
        prev = pct

    if full is not None:
        cls = ExitClass.COMPLETE
    elif first_action is not None or cross is not None:
        cls = ExitClass.PARTIAL
    else:
        cls = ExitClass.NO_EXIT
    return ActualExitRecord(series.firm_id, series.entity, first_action, cross, full, cls)


@dataclass(frozen=True)
class ExitSummary:
    n_firms: int
    n_vcs: int
    n_pairs: int
    pct_complete: float
    pct_partial: float
    pct_no_exit: float
    median_first_action_months: float | None
    median_full_exit_months: float | None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize_exits(records: Sequence[ActualExitRecord]) -> ExitSummary:
    if not records:
        raise EmptyInput("no exit records to summarize")
    n = len(records)
    counts = {c: 0 for c in ExitClass}
    for r in records:
        counts[r.classification] += 1
    firsts = [r.first_action_month for r in records if r.first_action_month is not None]
    fulls = [r.full_exit_month for r in records if r.classification is ExitClass.COMPLETE]
    return ExitSummary(
        n_firms=len({r.firm_id for r in records}),
        n_vcs=len({r.entity.canonical_key for r in records}),
        n_pairs=n,
        pct_complete=100.0 * counts[ExitClass.COMPLETE] / n,
        pct_partial=100.0 * counts[ExitClass.PARTIAL] / n,
        pct_no_exit=100.0 * counts[ExitClass.NO_EXIT] / n,
        median_first_action_months=statistics.median(firsts) if firsts else None,
        median_full_exit_months=statistics.median(fulls) if fulls else None,
    )


# ---------------------------------------------------------------------------
# files

OWNERSHIP_COLUMNS = ("firm_id", "vc_raw_name", "report_month", "pct_owned")
_FILING_NAME_RE = re.compile(r"^(?P<firm>.+)_(?P<month>\d{4}-\d{2})_(?P<form>[^_]+)\.txt$")


def relative_report_month(meta: FirmMeta, calendar_month: str) -> int:
    """Map a filing's calendar month onto the lockup-relative index.

    Reports before the IPO month are the pre-IPO baseline; reports between
    IPO and lockup expiration collapse onto month 0.
    """
    if months_between(meta.ipo_month, calendar_month) < 0:
        return PRE_IPO
    return max(months_between(meta.lockup_expiration_month, calendar_month), 0)


def calendar_label(meta: FirmMeta, report_month: int) -> str:
    if report_month == PRE_IPO:
        return "PRE_IPO"
    y, m = parse_month(meta.lockup_expiration_month)
    total = y * 12 + (m - 1) + report_month
    return f"{total // 12:04d}-{total % 12 + 1:02d}"


@dataclass
class ExtractionResult:
    observations: list[OwnershipObservation] = field(default_factory=list)
    duplicates: int = 0
    files: list[Path] = field(default_factory=list)


def extract_directory(
    filings_dir: str | Path,
    firms: Mapping[str, FirmMeta],
    section_patterns: Sequence[str] = DEFAULT_SECTION_PATTERNS,
    vc_patterns: Sequence[str] | None = DEFAULT_VC_PATTERNS,
) -> ExtractionResult:
    """Run :func:`extract_holders` over ``{firm_id}_{YYYY-MM}_{form}.txt`` files.

    Rows whose name matches none of ``vc_patterns`` (directors, officers) are
    dropped; pass ``None`` to keep every holder.
    """
    filings_dir = Path(filings_dir)
    if not filings_dir.is_dir():
        raise InputError(f"filings directory not found: {filings_dir}")
    result = ExtractionResult()
    seen: dict[tuple[str, int, str], float] = {}
    for path in sorted(filings_dir.glob("*.txt")):
        m = _FILING_NAME_RE.match(path.name)
        if not m:
            logger.warning("skipping %s: name does not match {firm_id}_{YYYY-MM}_{form}.txt", path.name)
            continue
        firm_id = m.group("firm")
        if firm_id not in firms:
            raise InputError(f"{path.name}: firm {firm_id!r} missing from firms metadata")
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(f"unreadable filing {path.name}: {exc}") from None
        result.files.append(path)
        report_month = relative_report_month(firms[firm_id], m.group("month"))
        for name, pct in extract_holders(text, section_patterns):
            if vc_patterns is not None and not is_vc_name(name, vc_patterns):
                continue
            key = (firm_id, report_month, name)
            if key in seen:
                result.duplicates += 1
                logger.info("duplicate holder row %r in %s dropped", name, path.name)
                continue
            seen[key] = pct
            result.observations.append(OwnershipObservation(firm_id, name, report_month, pct))
    return result


def write_ownership_csv(
    observations: Iterable[OwnershipObservation],
    firms: Mapping[str, FirmMeta],
    path: str | Path,
) -> None:
    rows = sorted(observations, key=lambda o: (o.firm_id, o.report_month, o.vc_raw_name))
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OWNERSHIP_COLUMNS)
        for o in rows:
            writer.writerow(
                [o.firm_id, o.vc_raw_name, calendar_label(firms[o.firm_id], o.report_month), f"{o.pct_owned:.6f}"]
            )


def read_ownership_csv(path: str | Path, firms: Mapping[str, FirmMeta]) -> list[OwnershipObservation]:
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8", newline="")
    except FileNotFoundError:
        raise InputError(f"ownership file not found: {path}") from None
    out = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(OWNERSHIP_COLUMNS) - set(reader.fieldnames):
            raise InputError(f"{path}: expected columns {', '.join(OWNERSHIP_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                meta = firms[row["firm_id"]]
                label = row["report_month"].strip()
                month = PRE_IPO if label.upper() == "PRE_IPO" else relative_report_month(meta, label)
                out.append(OwnershipObservation(row["firm_id"], row["vc_raw_name"], month, float(row["pct_owned"])))
            except KeyError as exc:
                raise InputError(f"{path}:{lineno}: unknown firm {exc}") from None
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    return out


def actual_exits_from_observations(
    observations: Sequence[OwnershipObservation],
    threshold_pct: float = DEFAULT_THRESHOLD_PCT,
    horizon: int = 60,
    materiality_pct: float = DEFAULT_MATERIALITY_PCT,
    reputation: Mapping[str, str] | None = None,
) -> tuple[list[VcEntity], list[ActualExitRecord]]:
    entities = link_aliases(observations, reputation)
    records = []
    for series in build_series(observations, entities):
        if all(m > horizon for m, _ in series.points):
            continue
        records.append(derive_actual_exit(series, threshold_pct, horizon, materiality_pct))
    return entities, records
