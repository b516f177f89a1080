"""Command line interface.

Exit codes: 0 success, 2 input error, 3 validation failure, 4 partial run failure.
"""

from __future__ import annotations

import functools
import logging
import sys

import click

from . import pipeline
from .config import load_config
from .errors import InputError, VcExitError

logger = logging.getLogger("vcexit")


def _common_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML/JSON run config."),
        click.option("--events", type=click.Path(), help="events.jsonl"),
        click.option("--firms", type=click.Path(), help="firms.json"),
        click.option("--ownership", type=click.Path(), help="ownership.csv (default: <out-dir>/ownership.csv)"),
        click.option("--filings", type=click.Path(), help="Directory of {firm_id}_{YYYY-MM}_{form}.txt excerpts."),
        click.option("--templates-dir", type=click.Path(), help="Directory of {template_id}.txt prompt templates."),
        click.option("--cache-dir", type=click.Path(), help="LLM response cache (default: <out-dir>/cache)."),
        click.option("--out-dir", type=click.Path(), help="Output directory."),
        click.option("--agent", type=click.Choice(
            ["llm", "lockup_exit", "momentum", "hazard_curve", "replay_actual", "scripted_mock"]
        )),
        click.option("--model", help="Model name sent to the chat-completion endpoint."),
        click.option("--template", help="Prompt template id."),
        click.option("--exit-definition", type=click.Choice(["threshold", "full"])),
        click.option("--horizon", type=int),
        click.option("--threshold-pct", type=float),
        click.option("--volatility-filter/--no-volatility-filter", default=None),
        click.option("--max-in-flight", type=int),
        click.option("--seed", type=int),
        click.option("-v", "--verbose", count=True),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _stage(run):
    """Wrap a pipeline stage as a click command body that exits with the stage's code."""

    @_common_options
    @functools.wraps(run)
    def command(config_path, verbose, **flags):
        logging.basicConfig(
            level=logging.WARNING - 10 * min(verbose, 2),
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        paths = {
            "events": flags.pop("events"),
            "firms": flags.pop("firms"),
            "ownership": flags.pop("ownership"),
            "filings": flags.pop("filings"),
            "templates": flags.pop("templates_dir"),
            "cache": flags.pop("cache_dir"),
            "out": flags.pop("out_dir"),
        }
        agent = {
            "agent_kind": flags.pop("agent"),
            "model_name": flags.pop("model"),
            "template_id": flags.pop("template"),
        }
        overrides = {"paths": paths, "agent": agent, **flags}
        try:
            config = load_config(config_path, overrides)
            code = run(config)
        except InputError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(pipeline.EXIT_INPUT)
        except VcExitError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(pipeline.EXIT_INPUT)
        sys.exit(code)

    return command


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Backtest exit-timing agents against realized VC exits after IPO lockup expiration."""


main.command("ingest", help="Build the point-in-time timeline and validate it.")(_stage(pipeline.run_ingest))
main.command("extract", help="Extract VC holdings from filings and reconstruct realized exits.")(
    _stage(pipeline.run_extract)
)
main.command("backtest", help="Query the configured agent month by month for every firm.")(
    _stage(pipeline.run_backtest)
)
main.command("evaluate", help="Compare implied and realized exits; optionally run the robustness matrix.")(
    _stage(pipeline.run_evaluate)
)
main.command("report", help="Emit IPO frequency and per-group return tables for plotting.")(
    _stage(pipeline.run_report)
)


if __name__ == "__main__":
    main()
