"""Command-line front end: one subcommand per task plus ``sweep``.

Exit status is 0 when every check passes, 1 on a task failure or failed check
and 2 when the configuration does not validate.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from paneitzlab import RunID, __version__
from paneitzlab.bootstrap import LabBootstrap, LabConfig
from paneitzlab.messages.commands import RunTaskCommand
from paneitzlab.observability.events import LogLevel
from paneitzlab.observability.handlers import PathCsvHandler
from paneitzlab.operators.paneitz import refinement_converges, roundoff_floor
from paneitzlab.ui.cli.config import (
    TASK_NAMES,
    ExperimentConfig,
    load_config_data,
    resolve_out_dir,
)
from paneitzlab.ui.cli.report import ErrorPayload, RunReport

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID_CONFIG = 2


async def run(
    config: ExperimentConfig,
    bootstrap: Optional[LabBootstrap] = None,
    out_dir: Optional[Path] = None,
) -> RunReport:
    """Run one experiment and write its JSON report (and path CSV for ``continue``)."""
    bootstrap = bootstrap or LabBootstrap(LabConfig(enable_console_handler=False))
    bus = bootstrap.bootstrap()
    target = resolve_out_dir(config, out_dir)
    run_id = RunID(config.run_name)

    csv_handler: Optional[PathCsvHandler] = None
    if config.task == "continue":
        csv_handler = PathCsvHandler(target / f"{config.run_name}_path.csv", run_id)
        bootstrap.observability.register_handler(csv_handler)
    try:
        result = await bus.execute(RunTaskCommand(config=config, run_id=run_id))
    finally:
        if csv_handler is not None:
            csv_handler.close()
            bootstrap.observability.unregister_handler(csv_handler)

    report = result.result
    if not isinstance(report, RunReport):
        report = RunReport.start(config)
        report.error = ErrorPayload(type="CommandFailed", message=result.error or "")
    report.write(target / f"{config.run_name}.json")
    return report


async def sweep(
    configs: Sequence[ExperimentConfig],
    bootstrap: Optional[LabBootstrap] = None,
    out_dir: Optional[Path] = None,
) -> List[RunReport]:
    """Independent runs executed concurrently; one failure does not affect the others."""
    if not configs:
        return []
    bootstrap = bootstrap or LabBootstrap(LabConfig(enable_console_handler=False))
    return list(await asyncio.gather(*(run(c, bootstrap, out_dir) for c in configs)))


def convergence_table(reports: Sequence[RunReport]) -> pd.DataFrame:
    """Residual per resolution, the ratio to the next coarser level and whether that step converges."""
    rows = [
        {"resolution": r.results["resolution"], "residual": r.results["covariance_residual"]}
        for r in reports
        if r.task == "covariance-test" and "covariance_residual" in r.results
    ]
    table = pd.DataFrame(rows, columns=["resolution", "residual"])
    table = table.sort_values("resolution").reset_index(drop=True)
    table["ratio"] = table["residual"].shift(1) / table["residual"]
    table["floor"] = [roundoff_floor(int(n)) for n in table["resolution"]]
    coarse = table["residual"].shift(1)
    table["converging"] = [
        bool(pd.isna(c)) or refinement_converges(float(c), float(f), int(n))
        for c, f, n in zip(coarse, table["residual"], table["resolution"])
    ]
    return table


def render_report(console: Console, report: RunReport) -> None:
    table = Table(title=f"{report.run_name} ({report.task})")
    table.add_column("check")
    table.add_column("measured", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("status")
    for c in report.checks:
        status = "[green]pass[/green]" if c.passed else "[red]FAIL[/red]"
        table.add_row(c.name, f"{c.measured:.3e}", f"{c.comparison} {c.tolerance:.1e}", status)
    console.print(table)
    if report.error is not None:
        console.print(
            Panel(report.error.message, title=f"[bold red]{report.error.type}[/bold red]")
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paneitzlab", description="Q-curvature and Paneitz operator experiments"
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level", choices=[level.value for level in LogLevel], default="warning"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*TASK_NAMES, "sweep"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=Path, help="JSON experiment config")
        cmd.add_argument("--out", type=Path, help="output directory")
        cmd.add_argument("--resolution", type=int)
        cmd.add_argument("--seed", type=int)
        if name == "sweep":
            cmd.add_argument(
                "--resolutions", type=int, nargs="+", help="expand one config over these"
            )
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    if args.resolution is not None:
        data["resolution"] = args.resolution
    if args.seed is not None:
        data["seed"] = args.seed
    return data


def configs_from_args(args: argparse.Namespace) -> List[ExperimentConfig]:
    """Raises ``ValidationError`` or ``ValueError`` for invalid input."""
    raw = load_config_data(args.config) if args.config else {}
    if args.command != "sweep":
        if isinstance(raw, list):
            raise ValueError(f"{args.command} takes a single config object, not a list")
        return [ExperimentConfig.model_validate({**raw, **_overrides(args), "task": args.command})]
    entries = raw if isinstance(raw, list) else [raw]
    if isinstance(raw, dict) and args.resolutions:
        entries = [{**raw, "resolution": n} for n in args.resolutions]
    return [ExperimentConfig.model_validate({**e, **_overrides(args)}) for e in entries]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    console = Console()
    try:
        configs = configs_from_args(args)
    except (ValidationError, ValueError, OSError) as e:
        console.print(Panel(str(e), title="[bold red]invalid configuration[/bold red]"))
        return EXIT_INVALID_CONFIG

    bootstrap = LabBootstrap(LabConfig(log_level=LogLevel(args.log_level)))
    reports = asyncio.run(sweep(configs, bootstrap, args.out))
    for report in reports:
        render_report(console, report)

    if args.command == "sweep" and configs:
        table = convergence_table(reports)
        if not table.empty:
            target = resolve_out_dir(configs[0], args.out)
            target.mkdir(parents=True, exist_ok=True)
            table.to_csv(target / "convergence.csv", index=False)
            console.print(table.to_string(index=False))
            if not table["converging"].all():
                console.print("[bold red]covariance residual stalls above roundoff[/bold red]")
    bootstrap.shutdown()
    return EXIT_OK if all(r.success for r in reports) else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
