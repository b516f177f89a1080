"""Stage orchestration: ingest, extract, backtest, evaluate, report.

Each ``run_*`` function reads its inputs, writes its artifacts into the
configured output directory, records itself in ``run_manifest.json`` and
returns a process exit code. Input problems surface as
:class:`~vcexit.errors.InputError` (exit code 2).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import httpx

from . import __version__
from .agents.client import ChatClient, ClientConfig
from .agents.decisions import Decision, decision_from_label, is_exit
from .agents.policies import Agent, AgentKind, FirmContext, build_agent
from .agents.prompts import load_template
from .config import RunConfig
from .errors import InputError, MissingActualExit, MonthOutOfRange, VcExitError
from .evaluation import (
    ExitComparison,
    SummaryReport,
    compare_exit,
    derive_implied_exit,
    robustness_matrix,
    summarize_comparisons,
    volatility_terciles,
    ReturnSeries,
)
from .filings import (
    actual_exits_from_observations,
    extract_directory,
    read_ownership_csv,
    summarize_exits,
    write_ownership_csv,
)
from .timeline import (
    FirmMeta,
    Timeline,
    as_of,
    ingest_events,
    load_firms,
    load_timeline,
    read_events,
    validate_timeline,
    write_timeline,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_VALIDATION, EXIT_PARTIAL = 0, 2, 3, 4

COMPARISON_COLUMNS = (
    "firm_id", "vc_canonical", "llm_exit_month", "vc_exit_month", "r_llm", "r_vc",
    "delta_r", "timing_error_months", "direction", "censored",
)
GROUP_COLUMNS = (
    "group", "n_pairs", "mean_delta_r", "median_delta_r", "share_positive_delta_r",
    "mean_abs_timing_error", "pct_early", "pct_late", "pct_same",
)


# ---------------------------------------------------------------------------
# io helpers


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(child.relative_to(path).as_posix().encode())
            h.update(child.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def record_manifest(
    config: RunConfig,
    stage: str,
    inputs: Iterable[Path],
    counts: Mapping[str, int],
    cache: Mapping[str, int] | None = None,
    out_dir: Path | None = None,
) -> None:
    """Add or replace ``stage``'s entry in the output directory's run manifest."""
    out_dir = out_dir or config.paths.out
    path = out_dir / "run_manifest.json"
    manifest = {"tool_version": __version__, "stages": {}}
    if path.exists():
        try:
            manifest["stages"] = json.loads(path.read_text(encoding="utf-8")).get("stages", {})
        except json.JSONDecodeError:
            logger.warning("replacing unreadable manifest %s", path)
    entry = {
        "config_digest": config.digest(),
        "inputs": {str(p): file_digest(p) for p in inputs},
        "counts": dict(counts),
    }
    if cache is not None:
        entry["cache"] = dict(cache)
    manifest["stages"][stage] = entry
    write_json(path, manifest)


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise InputError(f"no {what} path configured")
    if not path.exists():
        raise InputError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# ingest


def run_ingest(config: RunConfig) -> int:
    firms_path = _require(config.paths.firms, "firms.json")
    events_path = _require(config.paths.events, "events.jsonl")
    firms = load_firms(firms_path)
    timeline = ingest_events(read_events(events_path, firms), config.horizon, firms=firms)
    violations = validate_timeline(timeline)
    out = config.paths.out
    out.mkdir(parents=True, exist_ok=True)
    write_timeline(timeline, out / "timeline.jsonl")
    kinds = Counter(e.kind.value for e in timeline.events)
    write_json(
        out / "validation.json",
        {
            "n_events": len(timeline.events),
            "n_firms": len(timeline.firms),
            "events_by_kind": dict(sorted(kinds.items())),
            "violations": [dataclasses.asdict(v) for v in violations],
        },
    )
    record_manifest(
        config, "ingest", [firms_path, events_path],
        {"events": len(timeline.events), "firms": len(timeline.firms), "violations": len(violations)},
    )
    for v in violations:
        logger.error("timeline violation: %s firm=%s month=%s", v.rule, v.firm_id, v.month)
    return EXIT_VALIDATION if violations else EXIT_OK


# ---------------------------------------------------------------------------
# extract


def run_extract(config: RunConfig) -> int:
    firms_path = _require(config.paths.firms, "firms.json")
    filings_dir = _require(config.paths.filings, "filings directory")
    firms = load_firms(firms_path)
    result = extract_directory(filings_dir, firms)
    out = config.paths.out
    out.mkdir(parents=True, exist_ok=True)
    write_ownership_csv(result.observations, firms, out / "ownership.csv")
    entities, records = actual_exits_from_observations(
        result.observations, config.threshold_pct, config.horizon, config.materiality_pct, config.reputation
    )
    write_json(out / "entities.json", {e.canonical_key: sorted(e.aliases) for e in entities})
    if records:
        summary = {k: round(v, 6) if isinstance(v, float) else v for k, v in summarize_exits(records).to_dict().items()}
    else:
        logger.warning("no holder rows extracted from %s", filings_dir)
        summary = None
    write_json(out / "exit_summary.json", summary)
    record_manifest(
        config, "extract", [firms_path, filings_dir],
        {
            "filings": len(result.files),
            "observations": len(result.observations),
            "duplicates_dropped": result.duplicates,
            "entities": len(entities),
            "exit_records": len(records),
        },
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# backtest


@dataclass
class FirmRun:
    firm_id: str
    records: list[dict] = field(default_factory=list)
    error: str | None = None


def make_agent(
    config: RunConfig, transport: httpx.BaseTransport | None = None
) -> tuple[Agent, ChatClient | None]:
    agent_cfg = config.agent
    if agent_cfg.agent_kind is not AgentKind.LLM:
        return build_agent(agent_cfg), None
    ep = config.endpoint
    client = ChatClient(
        ClientConfig(
            model_name=agent_cfg.model_name,
            cache_dir=config.paths.cache_dir,
            base_url=ep.base_url,
            temperature=agent_cfg.temperature,
            api_key_env=ep.api_key_env,
            max_retries=ep.max_retries,
            backoff_base=ep.backoff_base,
            timeout=ep.timeout,
            max_in_flight=config.max_in_flight,
            requests_per_second=ep.requests_per_second,
        ),
        transport=transport,
    )
    template = load_template(agent_cfg.template_id, config.paths.templates)
    return build_agent(agent_cfg, client, template), client


def backtest_firm(timeline: Timeline, firm_id: str, agent: Agent, context: FirmContext) -> FirmRun:
    """Query the agent month by month until it recommends exit or the horizon is reached."""
    run = FirmRun(firm_id)
    try:
        for t in range(timeline.horizon + 1):
            packet = as_of(timeline, firm_id, t)
            decision = agent.decide(packet, context)
            run.records.append(
                {
                    "firm_id": firm_id,
                    "month": t,
                    "decision": str(decision),
                    "packet_digest": packet.digest,
                    "prompt_digest": agent.prompt_digest(packet),
                }
            )
            if is_exit(decision):
                break
    except VcExitError as exc:
        logger.error("backtest failed for %s: %s", firm_id, exc)
        run.error = f"{type(exc).__name__}: {exc}"
    return run


def _actual_exit_months(config: RunConfig, firms: Mapping[str, FirmMeta]) -> dict[str, int]:
    """Earliest recorded VC exit per firm, used by the replay_actual agent."""
    observations = read_ownership_csv(_require(config.paths.ownership_csv, "ownership.csv"), firms)
    _, records = actual_exits_from_observations(
        observations, config.threshold_pct, config.horizon, config.materiality_pct
    )
    months: dict[str, int] = {}
    for r in records:
        m = r.exit_month(config.exit_definition)
        if m is not None:
            months[r.firm_id] = min(m, months.get(r.firm_id, m))
    return months


def run_backtest_in_memory(
    config: RunConfig,
    timeline: Timeline,
    firms: Mapping[str, FirmMeta],
    transport: httpx.BaseTransport | None = None,
) -> tuple[list[FirmRun], dict[str, int]]:
    agent, client = make_agent(config, transport)
    actual = _actual_exit_months(config, firms) if config.agent.agent_kind is AgentKind.REPLAY_ACTUAL else {}
    firm_ids = sorted(timeline.firms)
    try:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            runs = list(
                pool.map(
                    lambda f: backtest_firm(timeline, f, agent, FirmContext(f, actual.get(f))),
                    firm_ids,
                )
            )
    finally:
        if client is not None:
            client.close()
    cache = {"hits": client.hits, "misses": client.misses, "requests": client.requests} if client else {}
    return runs, cache


def run_backtest(config: RunConfig, transport: httpx.BaseTransport | None = None) -> int:
    out = config.paths.out
    timeline_path = _require(out / "timeline.jsonl", "timeline store (run ingest first)")
    firms_path = _require(config.paths.firms, "firms.json")
    timeline = load_timeline(timeline_path)
    firms = load_firms(firms_path)
    runs, cache = run_backtest_in_memory(config, timeline, firms, transport)

    with (out / "decisions.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for run in runs:
            for rec in run.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    failed = [r for r in runs if r.error]
    write_csv(out / "failures.csv", ("firm_id", "error"), [(r.firm_id, r.error) for r in failed])
    inputs = [timeline_path, firms_path]
    if config.agent.agent_kind is AgentKind.REPLAY_ACTUAL:
        inputs.append(config.paths.ownership_csv)
    record_manifest(
        config, "backtest", inputs,
        {"firms": len(runs), "decisions": sum(len(r.records) for r in runs), "failed_firms": len(failed)},
        cache=cache,
    )
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def read_decisions(path: Path) -> dict[str, list[Decision]]:
    by_firm: dict[str, dict[int, Decision]] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise InputError(f"decisions file not found: {path}") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            by_firm.setdefault(rec["firm_id"], {})[int(rec["month"])] = decision_from_label(rec["decision"])
        except (ValueError, KeyError, VcExitError) as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    if not by_firm:
        raise InputError(f"{path}: no decisions")
    out = {}
    for firm, months in sorted(by_firm.items()):
        if sorted(months) != list(range(len(months))):
            raise InputError(f"{path}: decisions for {firm} are not contiguous from month 0")
        out[firm] = [months[m] for m in range(len(months))]
    return out


@dataclass
class Evaluation:
    pairs: list[ExitComparison]
    skips: list[tuple[str, str, str]]
    report: SummaryReport | None


def evaluate_decisions(
    config: RunConfig,
    timeline: Timeline,
    firms: Mapping[str, FirmMeta],
    decisions: Mapping[str, Sequence[Decision]],
    observations: Sequence,
) -> Evaluation:
    horizon = config.horizon
    entities, records = actual_exits_from_observations(
        observations, config.threshold_pct, horizon, config.materiality_pct, config.reputation
    )
    series: dict[str, ReturnSeries] = {}
    for firm in sorted(timeline.firms):
        closes = timeline.price_closes(firm)
        if 0 in closes:
            series[firm] = ReturnSeries.from_closes(firm, closes, horizon)
    terciles = volatility_terciles({f: s.volatility() for f, s in series.items()}) if series else {}

    pairs: list[ExitComparison] = []
    skips: list[tuple[str, str, str]] = []
    for rec in sorted(records, key=lambda r: (r.firm_id, r.entity.canonical_key)):
        vc = rec.entity.canonical_key
        if rec.firm_id not in decisions:
            skips.append((rec.firm_id, vc, "NoDecisions"))
            continue
        if rec.firm_id not in series:
            skips.append((rec.firm_id, vc, "NoPriceSeries"))
            continue
        if config.volatility_filter and terciles.get(rec.firm_id) == "high":
            skips.append((rec.firm_id, vc, "VolatilityFiltered"))
            continue
        implied = derive_implied_exit(decisions[rec.firm_id], horizon)
        if implied.censored and config.censored_policy == "exclude":
            skips.append((rec.firm_id, vc, "CensoredImpliedExit"))
            continue
        try:
            pairs.append(compare_exit(implied, rec, series[rec.firm_id], config.exit_definition))
        except MissingActualExit:
            skips.append((rec.firm_id, vc, "MissingActualExit"))
        except MonthOutOfRange:
            skips.append((rec.firm_id, vc, "PriceSeriesTooShort"))

    report = None
    if pairs:
        report = summarize_comparisons(
            pairs,
            industry={f: m.industry for f, m in firms.items()},
            volatility_tercile=terciles,
            reputation_tier={e.canonical_key: e.reputation_tier.value for e in entities if e.reputation_tier},
        )
    return Evaluation(pairs, skips, report)


def write_comparisons(path: Path, pairs: Sequence[ExitComparison]) -> None:
    write_csv(
        path,
        COMPARISON_COLUMNS,
        (
            (
                p.firm_id, p.vc_canonical, p.llm_exit_month, p.vc_exit_month,
                _fmt(p.r_llm), _fmt(p.r_vc), _fmt(p.delta_r),
                p.timing_error_months, p.direction.value, str(p.censored).lower(),
            )
            for p in pairs
        ),
    )


def _load_evaluation_inputs(config: RunConfig):
    out = config.paths.out
    timeline_path = _require(out / "timeline.jsonl", "timeline store (run ingest first)")
    firms_path = _require(config.paths.firms, "firms.json")
    ownership_path = _require(config.paths.ownership_csv, "ownership.csv")
    firms = load_firms(firms_path)
    return (
        load_timeline(timeline_path),
        firms,
        read_ownership_csv(ownership_path, firms),
        [timeline_path, firms_path, ownership_path],
    )


def run_cell(
    config: RunConfig,
    timeline: Timeline,
    firms: Mapping[str, FirmMeta],
    observations: Sequence,
    transport: httpx.BaseTransport | None = None,
) -> SummaryReport:
    """One full backtest + evaluation, entirely in memory."""
    runs, _ = run_backtest_in_memory(config, timeline, firms, transport)
    failed = [r.firm_id for r in runs if r.error]
    if failed:
        raise VcExitError(f"backtest failed for firms: {', '.join(failed)}")
    decisions = {r.firm_id: [decision_from_label(x["decision"]) for x in r.records] for r in runs if r.records}
    result = evaluate_decisions(config, timeline, firms, decisions, observations)
    if result.report is None:
        raise VcExitError("no evaluable VC-firm pairs")
    return result.report


def run_evaluate(config: RunConfig, transport: httpx.BaseTransport | None = None) -> int:
    out = config.paths.out
    decisions_path = out / "decisions.jsonl"
    decisions = read_decisions(decisions_path)
    timeline, firms, observations, inputs = _load_evaluation_inputs(config)
    result = evaluate_decisions(config, timeline, firms, decisions, observations)

    write_comparisons(out / "comparisons.csv", result.pairs)
    write_csv(out / "skips.csv", ("firm_id", "vc_canonical", "reason"), result.skips)
    if result.report is None:
        raise InputError("no evaluable VC-firm pairs (see skips.csv)")
    write_json(out / "summary.json", result.report.to_dict())
    counts = {"pairs": len(result.pairs), "skipped": len(result.skips)}

    code = EXIT_OK
    axes = config.matrix_axes()
    if axes is not None:
        cells = robustness_matrix(
            config, axes, lambda cfg: run_cell(cfg, timeline, firms, observations, transport)
        )
        for cell in cells:
            cell_dir = out / "matrix" / cell.label
            cell_dir.mkdir(parents=True, exist_ok=True)
            if cell.report is not None:
                write_json(cell_dir / "summary.json", cell.report.to_dict())
            else:
                (cell_dir / "error.txt").write_text(cell.error + "\n", encoding="utf-8")
                code = EXIT_PARTIAL
            record_manifest(cell.config, "matrix_cell", inputs, {"ok": int(cell.report is not None)}, out_dir=cell_dir)
        counts["matrix_cells"] = len(cells)
    record_manifest(config, "evaluate", [decisions_path, *inputs], counts)
    return code


# ---------------------------------------------------------------------------
# report


def run_report(config: RunConfig) -> int:
    firms_path = _require(config.paths.firms, "firms.json")
    firms = load_firms(firms_path)
    out = config.paths.out
    out.mkdir(parents=True, exist_ok=True)
    years = Counter(m.ipo_year for m in firms.values())
    write_csv(out / "ipo_frequency.csv", ("year", "n_ipos"), sorted(years.items()))
    inputs = [firms_path]
    counts = {"firms": len(firms), "years": len(years)}

    summary_path = out / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        inputs.append(summary_path)
        for key, rows in sorted(summary.get("groups", {}).items()):
            write_csv(
                out / f"delta_r_by_{key}.csv",
                GROUP_COLUMNS,
                (
                    [label] + [_fmt(v) if isinstance(v, float) else v for v in (row[c] for c in GROUP_COLUMNS[1:])]
                    for label, row in sorted(rows.items())
                ),
            )
            counts[f"rows_{key}"] = len(rows)
    record_manifest(config, "report", inputs, counts)
    return EXIT_OK
