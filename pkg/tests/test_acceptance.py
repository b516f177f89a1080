"""Exit criteria, one test (or group) per criterion.

Each test carries an ``acceptance`` marker; conftest prints a pass/fail
line per criterion at the end of the run.
"""

from __future__ import annotations

import json
import math
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from vcexit.agents import EXIT_NOW, HOLD, ExitWithin, parse_decision, render_decision
from vcexit.cli import main
from vcexit.errors import AmbiguousDecision
from vcexit.evaluation import ReturnSeries, compare_exit, cumulative_return, derive_implied_exit
from vcexit.filings import ActualExitRecord, ExitClass, VcEntity
from vcexit.timeline import EventKind, EventRecord, as_of, ingest_events

acceptance = pytest.mark.acceptance
STAGES = ("ingest", "extract", "backtest", "evaluate", "report")


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@acceptance(1, "reference fixture reproduces 84.8/9.1/6.1 exit mix and 48-month median")
def test_exit_mix_fixture(exit_mix_dir):
    assert invoke("extract", "--config", exit_mix_dir / "config.yaml").exit_code == 0
    s = json.loads((exit_mix_dir / "out" / "exit_summary.json").read_text())
    assert abs(round(s["pct_complete"], 1) - 84.8) <= 0.1
    assert abs(round(s["pct_partial"], 1) - 9.1) <= 0.1
    assert abs(round(s["pct_no_exit"], 1) - 6.1) <= 0.1
    assert s["median_full_exit_months"] == 48


@acceptance(2, "return gap is -0.10 / 0.00 / +0.10 on prices [10, 11, 12] within 1e-12")
@pytest.mark.parametrize(
    "llm, vc, expected",
    [(1, 2, -0.10), (1, 1, 0.0), (2, 1, 0.10)],
    ids=["early", "same", "late"],
)
def test_delta_r_examples(llm, vc, expected):
    series = ReturnSeries("F", (10.0, 11.0, 12.0))
    entity = VcEntity("vc", frozenset({"vc"}))
    record = ActualExitRecord("F", entity, vc, vc, None, ExitClass.PARTIAL)
    implied = derive_implied_exit([HOLD] * llm + [EXIT_NOW], 2)
    assert abs(compare_exit(implied, record, series).delta_r - expected) <= 1e-12


@acceptance(3, "1,000 random timelines: no look-ahead, monotone information sets")
def test_no_leakage_random_timelines():
    rng = random.Random(20240101)
    kinds = [k.value for k in EventKind if k is not EventKind.PRICE]
    for _ in range(1000):
        horizon = rng.randint(1, 60)
        firms = [f"F{i}" for i in range(rng.randint(1, 4))]
        events = [
            EventRecord(rng.choice(firms), rng.randint(0, horizon), rng.choice(kinds), {"i": i}, f"s{i}")
            for i in range(rng.randint(0, 40))
        ]
        tl = ingest_events(events, horizon=horizon, firms=firms)
        firm = rng.choice(firms)
        previous = ()
        for t in range(horizon + 1):
            packet = as_of(tl, firm, t)
            assert all(e.month <= t for e in packet.events)
            assert packet.events[: len(previous)] == previous
            assert len(packet.events) == sum(e.firm_id == firm and e.month <= t for e in events)
            previous = packet.events


@acceptance(4, "10,000 random decision sequences match the brute-force implied exit")
def test_implied_exit_oracle():
    rng = random.Random(7)
    for _ in range(10_000):
        horizon = rng.randint(1, 60)
        n = rng.randint(1, horizon + 1)
        seq = []
        for _ in range(n):
            u = rng.random()
            seq.append(HOLD if u < 0.9 else EXIT_NOW if u < 0.95 else ExitWithin(rng.randint(1, 24)))
        first = next((t for t in range(n) if seq[t] != HOLD), None)
        r = derive_implied_exit(seq, horizon)
        expected = (horizon, True) if first is None else (first, False)
        assert (r.exit_month, r.censored) == expected


@acceptance(5, "cumulative returns compose within 1e-12 relative error")
def test_return_composition():
    rng = random.Random(11)
    for _ in range(2000):
        prices = [math.exp(rng.gauss(3, 1)) for _ in range(rng.randint(2, 61))]
        s = ReturnSeries("F", prices)
        a, b, c = sorted(rng.randrange(len(prices)) for _ in range(3))
        lhs = 1 + cumulative_return(s, a, c)
        rhs = (1 + cumulative_return(s, a, b)) * (1 + cumulative_return(s, b, c))
        assert math.isclose(lhs, rhs, rel_tol=1e-12)


def near_misses(rng):
    stems = [
        "DECISION HOLD", "DECISIONS: HOLD", "DECISION: HOLDING", "DECISION: EXIT NOW",
        "DECISION: EXIT_WITHIN()", "DECISION: EXIT_WITHIN(k)", "DECISION: EXIT_WITHIN(3 months)",
        "DECISION: SELL", "DECISION:", "Final DECISION: HOLD", "DECISION: HOLD or EXIT_NOW",
        "DECISION: EXIT_WITHIN(2.5)", "DECISION = EXIT_NOW", "**DECISION: HOLD**",
    ]
    words = ["hold", "exit", "now", "sell", "within", "months", "decision", "the", "firm", "lockup", "(3)", ":"]
    out = []
    for i in range(1000):
        if i % 3 == 0:
            out.append(rng.choice(stems))
        elif i % 3 == 1:
            out.append(" ".join(rng.choice(words) for _ in range(rng.randint(0, 25))))
        else:
            out.append("".join(chr(rng.randint(1, 0x2FFF)) for _ in range(rng.randint(0, 200))))
        if rng.random() < 0.5:
            out[-1] = "Some reasoning here.\n" + out[-1]
    return out


@acceptance(6, "decision grammar round-trips for k=1..24 and 1,000 malformed replies are ambiguous")
def test_decision_grammar():
    for d in [HOLD, EXIT_NOW, *(ExitWithin(k) for k in range(1, 25))]:
        assert parse_decision("Reasoning.\n" + render_decision(d)) == d
    corpus = near_misses(random.Random(3))
    assert len(corpus) == 1000
    for text in corpus:
        with pytest.raises(AmbiguousDecision):
            parse_decision(text)


def run_pipeline(demo: Path, out: Path):
    for stage in STAGES:
        assert invoke(stage, "--config", demo / "config.yaml", "--out-dir", out).exit_code == 0


@acceptance(7, "two runs with identical inputs give byte-identical outputs")
def test_byte_identical_reruns(demo_dir, tmp_path):
    run_pipeline(demo_dir, tmp_path / "a")
    run_pipeline(demo_dir, tmp_path / "b")
    for name in ("comparisons.csv", "summary.json", "ipo_frequency.csv", "decisions.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def _with_matrix(demo: Path, matrix) -> Path:
    doc = yaml.safe_load((demo / "config.yaml").read_text())
    doc["matrix"] = matrix
    path = demo / "matrix.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@acceptance(8, "2x2x2 matrix yields 8 distinct outputs; single-point matrix equals the plain run")
def test_robustness_matrix(demo_dir):
    cfg = _with_matrix(
        demo_dir,
        {
            "exit_definitions": ["threshold", "full"],
            "volatility_filter": [False, True],
            "theory_subsets": [[], ["signaling"]],
        },
    )
    for stage in ("ingest", "extract", "backtest"):
        assert invoke(stage, "--config", cfg).exit_code == 0
    assert invoke("evaluate", "--config", cfg).exit_code == 0
    cells = sorted(p for p in (demo_dir / "out" / "matrix").iterdir() if p.is_dir())
    assert len(cells) == 8
    assert all((c / "summary.json").exists() for c in cells)

    single = _with_matrix(demo_dir, {"exit_definitions": ["threshold"]})
    assert invoke("evaluate", "--config", single).exit_code == 0
    out = demo_dir / "out"
    point = out / "matrix" / "model=none__template=none__exit=threshold__volfilter=off__theory=none"
    assert (point / "summary.json").read_bytes() == (out / "summary.json").read_bytes()


@acceptance(9, "whole suite finishes in under 60 s with network access blocked")
def test_suite_budget():
    if os.environ.get("VCEXIT_FORBID_NETWORK") == "1":
        pytest.skip("already inside the timed run")
    root = Path(__file__).resolve().parent.parent
    env = {**os.environ, "VCEXIT_FORBID_NETWORK": "1"}
    start = time.monotonic()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "tests",
         "--deselect", "tests/test_acceptance.py::test_suite_budget"],
        cwd=root, env=env, capture_output=True, text=True, timeout=120,
    )
    elapsed = time.monotonic() - start
    assert proc.returncode == 0, proc.stdout[-2000:]
    assert elapsed < 60, f"suite took {elapsed:.1f}s"
