"""Regenerate the bundled fixtures under src/vcexit/data/fixtures/.

    python scripts/build_fixtures.py

demo/    three firms, monthly prices through month 12, filings and a
         scripted-agent config; small enough to check by hand.
exit_mix/  eleven firms with three VCs each (33 VC-firm pairs) whose filing
         trajectories give 28 complete, 3 staged and 2 no-exit outcomes.
"""

from __future__ import annotations

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1] / "src" / "vcexit" / "data" / "fixtures"


def add_months(ym: str, n: int) -> str:
    y, m = map(int, ym.split("-"))
    total = y * 12 + (m - 1) + n
    return f"{total // 12:04d}-{total % 12 + 1:02d}"


def filing_text(company: str, form: str, rows: list[tuple[str, str, float]], officers: bool = True) -> str:
    lines = [
        f"{company.upper()} - FORM {form}",
        "",
        "ITEM 1. BUSINESS",
        f"{company} develops products for its customers. Revenue grew during the period.",
        "",
        "Item 12. Security Ownership of Certain Beneficial Owners and Management",
        "",
        "NAME OF BENEFICIAL OWNER                      SHARES        PERCENT",
        "5% Stockholders:",
    ]
    for i, (name, shares, pct) in enumerate(rows, start=1):
        lines.append(f"{name}({i}) .......... {shares}    {pct:.1f}%")
    if officers:
        lines += [
            "Named Executive Officers and Directors:",
            "Dana Whitfield(7)                             412,000        1.3%",
            "Morgan Ellery                                  95,500          *",
            "All executive officers and directors as a group (8 persons)   1,104,220   3.4%",
        ]
    lines += [
        "",
        "(1) Shares held by the funds listed; the general partner shares voting power.",
        "",
        "Item 13. Certain Relationships and Related Transactions",
        "None.",
        "",
    ]
    return "\n".join(lines)


def shares_for(pct: float) -> str:
    return f"{int(round(pct * 312_500)):,}" if pct else "-"


# ---------------------------------------------------------------------------


def build_demo(root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    firms = [
        {"firm_id": "ALPHA", "ipo_month": "2012-03", "lockup_expiration_month": "2012-09", "industry": "software"},
        {"firm_id": "BETA", "ipo_month": "2012-06", "lockup_expiration_month": "2012-12", "industry": "biotech"},
        {"firm_id": "GAMMA", "ipo_month": "2015-02", "lockup_expiration_month": "2015-08", "industry": "software"},
    ]
    prices = {
        "ALPHA": [20.0, 21.0, 22.0, 24.0, 25.0, 23.0, 22.0, 21.0, 20.0, 19.0, 18.0, 18.5, 19.0],
        "BETA": [8.0, 8.8, 10.0, 9.0, 8.0, 7.5, 7.0, 6.4, 6.0, 5.6, 5.0, 4.8, 4.0],
        "GAMMA": [50.0, 52.0, 55.0, 53.0, 60.0, 62.0, 58.0, 57.0, 63.0, 65.0, 66.0, 70.0, 75.0],
    }
    (root / "firms.json").write_text(json.dumps(firms, indent=2) + "\n", encoding="utf-8")

    events = []
    for f in firms:
        fid, lockup = f["firm_id"], f["lockup_expiration_month"]
        closes = prices[fid]
        events.append({
            "firm_id": fid, "month": add_months(lockup, -4), "kind": "filing_10Q",
            "payload": {"text": f"{fid} first quarterly report as a public company; revenue up 18% year over year."},
            "source_id": f"{fid}-10Q-prelockup",
        })
        for m, close in enumerate(closes):
            ret = 0.0 if m == 0 else round(close / closes[m - 1] - 1.0, 6)
            events.append({
                "firm_id": fid, "month": add_months(lockup, m), "kind": "price",
                "payload": {"close": close, "return": ret, "volatility": round(abs(ret) * 1.5, 6), "volume": 100000 + 2500 * m},
                "source_id": "prices",
            })
        events.append({
            "firm_id": fid, "month": add_months(lockup, 2), "kind": "news",
            "payload": {"text": f"Analysts raise estimates for {fid} after product launch."},
            "source_id": f"{fid}-news-1",
        })
        events.append({
            "firm_id": fid, "month": add_months(lockup, 5), "kind": "earnings_call",
            "payload": {"text": f"{fid} management guides to slower growth next year."},
            "source_id": f"{fid}-call-q3",
        })
        events.append({
            "firm_id": fid, "month": add_months(lockup, 7), "kind": "patent",
            "payload": {"text": f"{fid} granted a patent on its core platform."},
            "source_id": f"{fid}-patent-1",
        })
        events.append({
            "firm_id": fid, "month": add_months(lockup, 3), "kind": "industry",
            "payload": {"sector_return_3m": 0.04, "text": f"{f['industry']} index up 4% over the quarter."},
            "source_id": "sector-index",
        })
    events.sort(key=lambda e: (e["firm_id"], e["month"], e["kind"], e["source_id"]))
    with (root / "events.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")

    # (firm, calendar month, form) -> rows of (raw name, pct)
    filings = {
        ("ALPHA", "2012-02", "S-1"): [("Summit Ridge Capital XII, L.P.", 20.0), ("Harbor Light Partners", 10.0)],
        ("ALPHA", "2012-09", "10-Q"): [("SUMMIT RIDGE CAPITAL XII LP", 15.0), ("Harbor Light Partners", 10.0)],
        ("ALPHA", "2013-03", "10-K"): [("Entities affiliated with Summit Ridge Capital", 4.0), ("HARBOR LIGHT PARTNERS", 8.0)],
        ("ALPHA", "2013-09", "10-Q"): [("Summit Ridge Capital XII, L.P.", 0.0), ("Harbor Light Partners", 8.0)],
        ("BETA", "2012-05", "S-1"): [("Northgate Ventures IV, LP", 12.0)],
        ("BETA", "2012-12", "10-K"): [("Northgate Ventures IV, LP", 12.0)],
        ("BETA", "2013-03", "10-Q"): [("Northgate Ventures IV, LP", 4.5)],
        ("BETA", "2013-09", "10-Q"): [("Northgate Ventures IV, LP", 0.0)],
        ("GAMMA", "2015-01", "S-1"): [("Bluefield Capital Partners VII, L.P.", 9.0)],
        ("GAMMA", "2015-08", "10-Q"): [("Bluefield Capital Partners VII, L.P.", 9.0)],
        ("GAMMA", "2015-12", "10-K"): [("BLUEFIELD CAPITAL PARTNERS", 3.0)],
        ("GAMMA", "2016-08", "10-Q"): [("Bluefield Capital Partners VII, L.P.", 2.0)],
    }
    fdir = root / "filings"
    fdir.mkdir(exist_ok=True)
    for (fid, month, form), rows in filings.items():
        text = filing_text(f"{fid.title()} Inc.", form, [(n, shares_for(p), p) for n, p in rows])
        (fdir / f"{fid}_{month}_{form}.txt").write_text(text, encoding="utf-8")

    config = """\
# Demo run: three firms, scripted agent, 12-month horizon.
paths:
  events: events.jsonl
  firms: firms.json
  filings: filings
  out: out
agent:
  agent_kind: scripted_mock
  script:
    ALPHA: [HOLD, HOLD, HOLD, HOLD, EXIT_NOW]
    BETA: [HOLD, HOLD, EXIT_WITHIN(3)]
    GAMMA: [HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD, HOLD]
exit_definition: threshold
horizon: 12
threshold_pct: 5.0
reputation:
  summit ridge capital: high
"""
    (root / "config.yaml").write_text(config, encoding="utf-8")


# ---------------------------------------------------------------------------

VC_BRANDS = [
    "Redwood Peak Ventures", "Granite Bay Capital", "Lanternfish Partners", "Copperline Venture Partners",
    "Northgate Ventures", "Tidewater Capital", "Ironbridge Growth Partners", "Meridian Arc Ventures",
    "Saltmarsh Capital", "Kestrel Equity Partners", "Blue Hollow Ventures", "Foxglove Capital",
    "Orchard Street Partners", "Highline Ventures", "Silverpine Capital", "Pioneer Square Ventures",
    "Cinder Cone Partners", "Westwind Capital", "Alder Creek Ventures", "Lodestar Venture Partners",
    "Crescent Ridge Capital", "Harborview Ventures",
]
NUMERALS = ["II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"]
SUFFIXES = [", L.P.", " LP", ", LLC", " Fund II, L.P.", ""]

# full-exit months of the 28 complete exits; the 14th and 15th sorted values are 48
COMPLETE_MONTHS = [12, 12, 18, 24, 24, 30, 36, 36, 36, 42, 42, 42, 48, 48,
                   48, 48, 48, 54, 54, 54, 54, 60, 60, 60, 60, 60, 60, 60]


def trajectory(kind: str, full_month: int | None, baseline: float, acts_at_lockup: bool) -> dict[int, float]:
    """Ownership at PRE_IPO (-1) and filing months 0, 6, ..., 60."""
    points = {-1: baseline}
    if kind == "complete":
        v0 = baseline - 2.0 if acts_at_lockup else baseline
        points[0] = v0
        steps = list(range(6, full_month, 6))
        for i, m in enumerate(steps, start=1):
            # glide down to 3% by the last filing before the full exit
            points[m] = round(v0 - (v0 - 3.0) * i / len(steps), 1)
        points[full_month] = 0.0
    elif kind == "partial":
        points[0] = baseline - 2.0
        for m in range(6, 61, 6):
            points[m] = baseline - 2.0 if m < 24 else baseline - 5.0
    else:
        for m in range(0, 61, 6):
            points[m] = baseline
    return points


def build_exit_mix(root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    fdir = root / "filings"
    fdir.mkdir(exist_ok=True)
    outcomes = [("complete", m) for m in COMPLETE_MONTHS] + [("partial", None)] * 3 + [("noexit", None)] * 2
    # interleave so every firm mixes outcomes
    order = [outcomes[(i * 7) % 33] for i in range(33)]
    assert sorted(order, key=str) == sorted(outcomes, key=str)

    firms = []
    for f in range(11):
        ipo = f"{2010 + (f * 8) // 11}-{(f * 5) % 12 + 1:02d}"
        firms.append({
            "firm_id": f"T{f + 1:02d}",
            "ipo_month": ipo,
            "lockup_expiration_month": add_months(ipo, 6),
            "industry": ["software", "biotech", "hardware"][f % 3],
        })
    (root / "firms.json").write_text(json.dumps(firms, indent=2) + "\n", encoding="utf-8")

    holders: dict[tuple[str, int], list[tuple[str, float]]] = {}
    for idx, (kind, full_month) in enumerate(order):
        firm = firms[idx // 3]
        brand = VC_BRANDS[idx % len(VC_BRANDS)]
        numeral = NUMERALS[idx % len(NUMERALS)]
        baseline = 8.0 + (idx % 5) * 2.5
        acts = kind != "complete" or idx % 9 != 4
        for m, pct in trajectory(kind, full_month, baseline, acts).items():
            suffix = SUFFIXES[(idx + m) % len(SUFFIXES)]
            name = f"{brand} {numeral}{suffix}"
            if (idx + m) % 4 == 0:
                name = name.upper()
            holders.setdefault((firm["firm_id"], m), []).append((name, pct))

    for (fid, m), rows in sorted(holders.items()):
        firm = next(f for f in firms if f["firm_id"] == fid)
        if m == -1:
            month, form = add_months(firm["ipo_month"], -1), "S-1"
        else:
            month, form = add_months(firm["lockup_expiration_month"], m), "10-K" if m % 12 == 0 else "10-Q"
        text = filing_text(f"Company {fid}", form, [(n, shares_for(p), p) for n, p in rows], officers=m >= 0)
        (fdir / f"{fid}_{month}_{form}.txt").write_text(text, encoding="utf-8")

    (root / "config.yaml").write_text(
        "paths:\n  firms: firms.json\n  filings: filings\n  out: out\nhorizon: 60\nthreshold_pct: 5.0\n",
        encoding="utf-8",
    )


if __name__ == "__main__":
    build_demo(ROOT / "demo")
    build_exit_mix(ROOT / "exit_mix")
    print(f"fixtures written to {ROOT}")
