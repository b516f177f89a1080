"""Implied exits, cumulative returns and the agent-vs-VC comparison.

All returns are simple price returns measured from month 0 (lockup
expiration), so the return gap between two exit months on one firm only
depends on the two exit-month closes.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
import re
import statistics
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from scipy import stats

from .agents.decisions import Decision, ExitNow, ExitWithin
from .errors import (
    DegenerateInput,
    EmptyInput,
    EmptySequence,
    InvertedRange,
    LengthMismatch,
    MissingActualExit,
    MonthOutOfRange,
)
from .filings import ActualExitRecord

logger = logging.getLogger(__name__)

EXIT_DEFINITIONS = ("threshold", "full")


@dataclass(frozen=True)
class ReturnSeries:
    firm_id: str
    prices: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if not self.prices:
            raise ValueError("a return series needs at least one price")
        if any(not p > 0 or math.isinf(p) for p in self.prices):
            raise ValueError(f"{self.firm_id}: prices must be positive and finite")

    @classmethod
    def from_closes(cls, firm_id: str, closes: Mapping[int, float], horizon: int | None = None) -> ReturnSeries:
        """Contiguous series from month 0, carrying the last close over gaps."""
        if 0 not in closes:
            raise ValueError(f"{firm_id}: no close at month 0")
        last = max(closes) if horizon is None else min(max(closes), horizon)
        prices, current = [], closes[0]
        for m in range(last + 1):
            current = closes.get(m, current)
            prices.append(current)
        return cls(firm_id, tuple(prices))

    def monthly_returns(self) -> list[float]:
        return [b / a - 1.0 for a, b in zip(self.prices, self.prices[1:])]

    def volatility(self) -> float:
        rets = self.monthly_returns()
        return statistics.pstdev(rets) if len(rets) >= 2 else 0.0


class Trigger(str, Enum):
    EXIT_NOW = "ExitNow"
    WINDOW_START = "WindowStart"
    CENSORED = "Censored"


@dataclass(frozen=True)
class ImpliedExit:
    exit_month: int
    censored: bool
    trigger: Trigger


def derive_implied_exit(decisions: Sequence[Decision], horizon: int) -> ImpliedExit:
    """Earliest month the agent recommends exiting; an exit window counts from its first month."""
    if not decisions:
        raise EmptySequence("no decisions to derive an exit from")
    if len(decisions) > horizon + 1:
        raise ValueError(f"{len(decisions)} decisions exceed horizon {horizon}")
    for t, d in enumerate(decisions):
        if isinstance(d, ExitNow):
            return ImpliedExit(t, False, Trigger.EXIT_NOW)
        if isinstance(d, ExitWithin):
            return ImpliedExit(t, False, Trigger.WINDOW_START)
    return ImpliedExit(horizon, True, Trigger.CENSORED)


def cumulative_return(series: ReturnSeries, start: int, end: int) -> float:
    if start > end:
        raise InvertedRange(f"start month {start} after end month {end}")
    n = len(series.prices)
    if start < 0 or end >= n:
        raise MonthOutOfRange(f"{series.firm_id}: months {start}..{end} outside series 0..{n - 1}")
    return series.prices[end] / series.prices[start] - 1.0


class Direction(str, Enum):
    EARLY = "Early"
    LATE = "Late"
    SAME = "Same"


@dataclass(frozen=True)
class ExitComparison:
    firm_id: str
    vc_canonical: str
    llm_exit_month: int
    vc_exit_month: int
    r_llm: float
    r_vc: float
    delta_r: float
    timing_error_months: int
    direction: Direction
    censored: bool = False


def compare_exit(
    implied: ImpliedExit,
    actual: ActualExitRecord,
    series: ReturnSeries,
    exit_definition: str = "threshold",
) -> ExitComparison:
    vc_month = actual.exit_month(exit_definition)
    if vc_month is None:
        raise MissingActualExit(
            f"{actual.firm_id}/{actual.entity.canonical_key}: no {exit_definition} exit month"
        )
    r_llm = cumulative_return(series, 0, implied.exit_month)
    r_vc = cumulative_return(series, 0, vc_month)
    err = implied.exit_month - vc_month
    direction = Direction.EARLY if err < 0 else Direction.LATE if err > 0 else Direction.SAME
    return ExitComparison(
        firm_id=actual.firm_id,
        vc_canonical=actual.entity.canonical_key,
        llm_exit_month=implied.exit_month,
        vc_exit_month=vc_month,
        r_llm=r_llm,
        r_vc=r_vc,
        delta_r=r_llm - r_vc,
        timing_error_months=err,
        direction=direction,
        censored=implied.censored,
    )


# ---------------------------------------------------------------------------
# aggregation

VOLATILITY_LABELS = ("low", "mid", "high")
UNRATED = "unrated"


def volatility_terciles(volatility: Mapping[str, float]) -> dict[str, str]:
    """Split firms into equal-count low/mid/high buckets by volatility (ties broken by firm id)."""
    ranked = sorted(volatility, key=lambda f: (volatility[f], f))
    n = len(ranked)
    return {f: VOLATILITY_LABELS[min(2, 3 * i // n)] for i, f in enumerate(ranked)}


@dataclass(frozen=True)
class GroupStats:
    n_pairs: int
    mean_delta_r: float
    median_delta_r: float
    share_positive_delta_r: float
    mean_abs_timing_error: float
    pct_early: float
    pct_late: float
    pct_same: float


def _stats(pairs: Sequence[ExitComparison]) -> GroupStats:
    n = len(pairs)
    deltas = [p.delta_r for p in pairs]
    count = lambda d: sum(p.direction is d for p in pairs)  # noqa: E731
    return GroupStats(
        n_pairs=n,
        mean_delta_r=statistics.fmean(deltas),
        median_delta_r=statistics.median(deltas),
        share_positive_delta_r=100.0 * sum(d > 0 for d in deltas) / n,
        mean_abs_timing_error=statistics.fmean(abs(p.timing_error_months) for p in pairs),
        pct_early=100.0 * count(Direction.EARLY) / n,
        pct_late=100.0 * count(Direction.LATE) / n,
        pct_same=100.0 * count(Direction.SAME) / n,
    )


@dataclass(frozen=True)
class FirmMajority:
    """Per-firm view: did the agent beat most of the firm's VCs?"""

    n_firms: int
    n_firms_majority_positive: int
    n_firms_mean_positive: int


@dataclass(frozen=True)
class SummaryReport:
    overall: GroupStats
    groups: Mapping[str, Mapping[str, GroupStats]]
    firm_majority: FirmMajority

    def __getattr__(self, name: str) -> Any:
        # expose the overall figures as top-level attributes
        if name != "overall" and name in GroupStats.__dataclass_fields__:
            return getattr(self.overall, name)
        raise AttributeError(name)

    def to_dict(self) -> dict:
        out: dict[str, Any] = _rounded(dataclasses.asdict(self.overall))
        out["groups"] = {
            key: {label: _rounded(dataclasses.asdict(g)) for label, g in sorted(rows.items())}
            for key, rows in sorted(self.groups.items())
        }
        out["firm_majority"] = dataclasses.asdict(self.firm_majority)
        return out


def _rounded(d: dict) -> dict:
    return {k: round(v, 6) if isinstance(v, float) else v for k, v in d.items()}


def summarize_comparisons(
    pairs: Sequence[ExitComparison],
    industry: Mapping[str, str] | None = None,
    volatility_tercile: Mapping[str, str] | None = None,
    reputation_tier: Mapping[str, str] | None = None,
) -> SummaryReport:
    """Aggregate pairs overall and by industry, volatility tercile and VC reputation.

    ``industry`` and ``volatility_tercile`` are keyed by firm id,
    ``reputation_tier`` by canonical VC key. Missing labels fall into an
    ``unknown``/``unrated`` row so each breakdown partitions the pairs.
    """
    if not pairs:
        raise EmptyInput("no comparisons to summarize")
    keyers: dict[str, Callable[[ExitComparison], str]] = {
        "industry": lambda p: (industry or {}).get(p.firm_id, "unknown"),
        "volatility_tercile": lambda p: (volatility_tercile or {}).get(p.firm_id, "unknown"),
        "reputation_tier": lambda p: (reputation_tier or {}).get(p.vc_canonical) or UNRATED,
    }
    groups = {}
    for name, keyer in keyers.items():
        buckets: dict[str, list[ExitComparison]] = defaultdict(list)
        for p in pairs:
            buckets[keyer(p)].append(p)
        groups[name] = {label: _stats(members) for label, members in buckets.items()}

    by_firm: dict[str, list[float]] = defaultdict(list)
    for p in pairs:
        by_firm[p.firm_id].append(p.delta_r)
    majority = FirmMajority(
        n_firms=len(by_firm),
        n_firms_majority_positive=sum(sum(d > 0 for d in ds) * 2 > len(ds) for ds in by_firm.values()),
        n_firms_mean_positive=sum(statistics.fmean(ds) > 0 for ds in by_firm.values()),
    )
    return SummaryReport(_stats(pairs), groups, majority)


def hazard_correspondence(implied_exits: Sequence[int], hazard_exits: Sequence[int]) -> float:
    """Tie-aware rank correlation between two aligned lists of exit months."""
    if len(implied_exits) != len(hazard_exits):
        raise LengthMismatch(f"{len(implied_exits)} vs {len(hazard_exits)} exit months")
    if len(implied_exits) < 2:
        raise DegenerateInput("need at least two pairs")
    if len(set(implied_exits)) == 1 or len(set(hazard_exits)) == 1:
        raise DegenerateInput("rank correlation undefined when all months are identical")
    rho = stats.spearmanr(implied_exits, hazard_exits).statistic
    return float(max(-1.0, min(1.0, rho)))


# ---------------------------------------------------------------------------
# robustness matrix


@dataclass(frozen=True)
class MatrixAxes:
    models: tuple[str | None, ...]
    templates: tuple[str | None, ...]
    exit_definitions: tuple[str, ...]
    volatility_filter: tuple[bool, ...]
    theory_subsets: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"matrix axis {f.name!r} is empty")
        for d in self.exit_definitions:
            if d not in EXIT_DEFINITIONS:
                raise ValueError(f"unknown exit definition {d!r}")

    @classmethod
    def single_point(cls, base: Any, **overrides: Sequence) -> MatrixAxes:
        """Axes pinned to ``base``'s values except for the given overrides."""
        values = {
            "models": (base.agent.model_name,),
            "templates": (base.agent.template_id,),
            "exit_definitions": (base.exit_definition,),
            "volatility_filter": (base.volatility_filter,),
            "theory_subsets": (tuple(base.agent.theory_ids),),
        }
        for k, v in overrides.items():
            values[k] = tuple(tuple(x) if k == "theory_subsets" else x for x in v)
        return cls(**values)


def _slug(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return "+".join(value) if value else "none"
    return re.sub(r"[^A-Za-z0-9._-]+", "_", str(value))


def cell_label(model, template, exit_definition, volatility_filter, theory) -> str:
    return "__".join(
        f"{name}={_slug(v)}"
        for name, v in (
            ("model", model),
            ("template", template),
            ("exit", exit_definition),
            ("volfilter", volatility_filter),
            ("theory", theory),
        )
    )


@dataclass(frozen=True)
class MatrixCell:
    label: str
    config: Any
    report: SummaryReport | None = None
    error: str | None = None


def robustness_matrix(base: Any, axes: MatrixAxes, run: Callable[[Any], SummaryReport]) -> list[MatrixCell]:
    """Run ``run`` once per cartesian-product cell; a failing cell never aborts its siblings.

    ``base`` is a run configuration dataclass with an ``agent`` field; cells
    are returned sorted by label.
    """
    cells = []
    for model, template, exit_def, vol, theory in itertools.product(
        axes.models, axes.templates, axes.exit_definitions, axes.volatility_filter, axes.theory_subsets
    ):
        agent = dataclasses.replace(base.agent, model_name=model, template_id=template, theory_ids=theory)
        config = dataclasses.replace(base, agent=agent, exit_definition=exit_def, volatility_filter=vol)
        cells.append((cell_label(model, template, exit_def, vol, theory), config))
    labels = [label for label, _ in cells]
    if len(set(labels)) != len(labels):
        raise ValueError("matrix axes contain duplicate values")

    results = []
    for label, config in sorted(cells, key=lambda c: c[0]):
        try:
            results.append(MatrixCell(label, config, report=run(config)))
        except Exception as exc:  # recorded per cell
            logger.error("matrix cell %s failed: %s", label, exc)
            results.append(MatrixCell(label, config, error=f"{type(exc).__name__}: {exc}"))
    return results
