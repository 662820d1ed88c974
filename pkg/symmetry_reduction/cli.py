"""Command-line interface for sigma-symmetry checks, reductions and DS/ODE transfer."""

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, NoReturn, Optional, Sequence

import typer
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.markdown import Markdown
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .exceptions import ExprSyntaxError, ProblemFileError, SymmetryReductionError, UnknownSymbol
from .exporters import TextExporter, create_exporter
from .expr import render
from .jet import SigmaSpec, prolongation_table, sigma_prolong
from .pipeline import STAGES, ExampleReport, PipelineConfig, run_corpus, run_files
from .problem import load_problem
from .systems import OdeSystem
from .transform import ode_to_ds

DEFAULT_FORMAT = "text"
DEFAULT_LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
FORMATS = ("text", "machine", "json")

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

PARSE_ERRORS = (ProblemFileError, ExprSyntaxError, UnknownSymbol)

COMMAND_STAGES = {
    "check": ("construct", "symmetry", "determining", "classification"),
    "construct": ("construct", "symmetry", "determining"),
    "reduce": ("construct", "symmetry", "invariants", "reduction", "constants"),
    "to-ode": ("construct", "symmetry", "invariants", "reduction", "conversion"),
    "verify": STAGES,
}


class ModernTyper(typer.Typer):
    def render_help(self) -> str:
        help_text = [
            "# symred",
            "Sigma-symmetries of dynamical systems: checks, reductions and DS/ODE transfer.\n",
            "## Usage",
            "```bash",
            "$ symred [GLOBAL OPTIONS] COMMAND [ARGS]",
            "```\n",
        ]

        table = Table(
            title="Commands and options",
            box=box.ROUNDED,
            show_header=True,
            header_style="bold cyan",
            title_style="bold blue",
        )
        table.add_column("Command / option", style="bold green")
        table.add_column("Description", style="white")
        table.add_column("Default", style="dim")

        table.add_row("", "[bold yellow]Commands[/bold yellow]", "")
        table.add_row("check FILE", "Involution and determining equations", "")
        table.add_row("prolong FILE", "Print the sigma-prolonged fields", "order 2")
        table.add_row("construct FILE", "Build a sigma-symmetric system from a base one", "")
        table.add_row("reduce FILE", "Invariants and the reduced system", "")
        table.add_row("to-ode FILE", "Convert a system to one higher-order ODE", "")
        table.add_row("to-ds FILE", "Companion system of a scalar ODE", "")
        table.add_row("verify FILE", "Full pipeline including trajectory checks", "")
        table.add_row("corpus", "Run every bundled example", "")

        table.add_row("", "[bold yellow]Sampling[/bold yellow]", "")
        table.add_row("--seed", "Random seed for sampling and initial data", "file, then 42")
        table.add_row("--trials", "Sample points per zero test", "file, then 100")
        table.add_row("--tol", "Relative zero tolerance", "file, then 1e-8")

        table.add_row("", "[bold yellow]Output[/bold yellow]", "")
        table.add_row("--format", "text, machine or json", DEFAULT_FORMAT)
        table.add_row("--report", "Write the report to a file", "None")
        table.add_row("-v, --verbose", "Debug logging", "False")
        table.add_row("--log-file", "Write logs to a file", "None")

        table.add_row("", "[bold yellow]Performance[/bold yellow]", "")
        table.add_row("-j, --jobs", "Parallel jobs for several examples (-1 for auto)", "1")
        table.add_row("--cache/--no-cache", "Reuse reports of unchanged problem files", "False")

        table.add_row("", "[bold yellow]Other[/bold yellow]", "")
        table.add_row("--version", "Show version information", "")
        table.add_row("--help", "Show this help message", "")

        examples = """
## Examples

Reduce a problem file:
```bash
$ symred reduce example3.toml
```

Reproducible corpus report:
```bash
$ symred --seed 42 --format machine corpus
```
"""

        recorder = Console(file=io.StringIO(), record=True, width=100)
        recorder.print(Markdown("\n".join(help_text)))
        recorder.print(table)
        recorder.print(Markdown(examples))
        return recorder.export_text()


app = ModernTyper(
    help="Sigma-symmetries of dynamical systems: checks, reductions and DS/ODE transfer.",
    add_completion=False,
)

console = Console()

DEFAULT_PROBLEM = typer.Argument(
    ...,
    help="Problem file (TOML)",
    exists=True,
    file_okay=True,
    dir_okay=False,
    resolve_path=True,
)


@dataclass
class CliState:
    config: PipelineConfig
    format: str = DEFAULT_FORMAT
    report: Optional[Path] = None


def version_callback(value: bool):
    """Print version information."""
    if value:
        console.print(Panel(
            "[bold blue]symred[/bold blue] "
            f"[white]version[/white] [green]{__version__}[/green]",
            subtitle="sigma-symmetry reduction toolkit",
            style="bold",
        ))
        raise typer.Exit()


def setup_logging(verbose: bool, log_file: Optional[Path]) -> None:
    logger = logging.getLogger("symmetry_reduction")
    logger.handlers.clear()
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    if log_file:
        handler: logging.Handler = logging.FileHandler(log_file, encoding="utf-8")
        handler.setFormatter(logging.Formatter(DEFAULT_LOG_FORMAT))
    else:
        handler = RichHandler(console=Console(stderr=True), show_path=False)
    logger.addHandler(handler)
    logger.propagate = False


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    trials: Optional[int] = typer.Option(
        None, "--trials", min=1, help="Sample points per zero test"
    ),
    tol: Optional[float] = typer.Option(None, "--tol", min=0.0, help="Relative zero tolerance"),
    report: Optional[Path] = typer.Option(None, "--report", help="Write the report to this file"),
    format_type: str = typer.Option(DEFAULT_FORMAT, "--format", help="text, machine or json"),
    jobs: int = typer.Option(1, "--jobs", "-j", help="Parallel jobs (-1 for auto)"),
    enable_cache: bool = typer.Option(
        False, "--cache/--no-cache", help="Enable/disable report caching"
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose output"),
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="Write logs to this file"),
    version: bool = typer.Option(
        None,
        "--version",
        callback=version_callback,
        is_eager=True,
        help="Show version information and exit",
    ),
):
    """Sigma-symmetries of dynamical systems."""
    if format_type not in FORMATS:
        choices = ", ".join(FORMATS)
        console.print(
            f"[bold red]Error: unsupported format {format_type!r} (use {choices})[/bold red]"
        )
        raise typer.Exit(EXIT_USAGE)
    setup_logging(verbose, log_file)
    config = PipelineConfig(seed=seed, trials=trials, tol=tol, n_jobs=jobs, cache=enable_cache)
    ctx.obj = CliState(config, format_type, report)
    if ctx.invoked_subcommand is None:
        typer.echo(app.render_help())


def abort(error: Exception, code: int) -> NoReturn:
    console.print(f"[bold red]Error: {escape(str(error))}[/bold red]")
    raise typer.Exit(code) from error


def emit(state: CliState, reports: Sequence[ExampleReport]) -> None:
    """Write or print the reports, then exit with the aggregate status."""
    exporter = create_exporter(state.format, reports)
    if state.report is not None:
        exporter.export(state.report)
        console.print(f"[dim]report written to {state.report}[/dim]")
    elif isinstance(exporter, TextExporter):
        exporter.print(console)
    else:
        typer.echo(exporter.render(), nl=False)
    if not all(r.ok for r in reports):
        raise typer.Exit(EXIT_CHECK_FAILED)


def run_command(ctx: typer.Context, command: str, paths: List[Path]) -> None:
    state: CliState = ctx.obj
    state.config.stages = COMMAND_STAGES[command]
    try:
        reports = run_files(paths, state.config)
    except PARSE_ERRORS as e:
        abort(e, EXIT_USAGE)
    except SymmetryReductionError as e:
        abort(e, EXIT_CHECK_FAILED)
    emit(state, reports)


@app.command()
def check(ctx: typer.Context, path: Path = DEFAULT_PROBLEM):
    """Check involution and the determining equations."""
    run_command(ctx, "check", [path])


@app.command()
def construct(ctx: typer.Context, path: Path = DEFAULT_PROBLEM):
    """Build the sigma-symmetric or orbital system declared in [construction]."""
    run_command(ctx, "construct", [path])


@app.command()
def reduce(ctx: typer.Context, path: Path = DEFAULT_PROBLEM):
    """Compute or verify invariants and the reduced system."""
    run_command(ctx, "reduce", [path])


@app.command("to-ode")
def to_ode(ctx: typer.Context, path: Path = DEFAULT_PROBLEM):
    """Convert a dynamical system into one higher-order ODE."""
    run_command(ctx, "to-ode", [path])


@app.command()
def verify(ctx: typer.Context, path: Path = DEFAULT_PROBLEM):
    """Run the full pipeline including trajectory consistency."""
    run_command(ctx, "verify", [path])


@app.command()
def corpus(
    ctx: typer.Context,
    directory: Optional[Path] = typer.Option(
        None, "--dir", help="Directory of problem files (defaults to the bundled corpus)",
        exists=True, file_okay=False, dir_okay=True, resolve_path=True,
    ),
):
    """Run every bundled example."""
    state: CliState = ctx.obj
    try:
        reports = run_corpus(state.config, directory)
    except PARSE_ERRORS as e:
        abort(e, EXIT_USAGE)
    emit(state, reports)


@app.command()
def prolong(
    ctx: typer.Context,
    path: Path = DEFAULT_PROBLEM,
    order: int = typer.Option(2, "--order", "-k", min=0, help="Prolongation order"),
):
    """Print the sigma-prolonged symmetry fields up to the given order."""
    try:
        problem = load_problem(path)
        if not problem.fields:
            raise ProblemFileError("no [symmetries] section", path, "symmetries")
        spec = problem.spec or SigmaSpec.zero(len(problem.fields))
        prolonged = sigma_prolong(problem.fields, spec, order)
    except PARSE_ERRORS as e:
        abort(e, EXIT_USAGE)
    except SymmetryReductionError as e:
        abort(e, EXIT_CHECK_FAILED)

    rows = prolongation_table(prolonged)
    state: CliState = ctx.obj
    if state.format == "text":
        table = Table(
            title=f"{problem.tag}: order {order}", box=box.ROUNDED, header_style="bold cyan"
        )
        table.add_column("field", style="bold green")
        table.add_column("k", style="dim")
        for a in range(1, problem.n + 1):
            table.add_column(f"phi^{a}_k")
        for row in rows:
            table.add_row(*row)
        console.print(table)
    else:
        for row in rows:
            alpha, k, *coefficients = row
            for a, c in enumerate(coefficients, start=1):
                typer.echo(f"Y{alpha}.order{k}.u{a}={c}")


@app.command("to-ds")
def to_ds(ctx: typer.Context, path: Path = DEFAULT_PROBLEM):
    """Print the first-order companion system of a scalar ODE."""
    try:
        problem = load_problem(path)
        ode = problem.system
        if not isinstance(ode, OdeSystem) or ode.n != 1:
            message = "to-ds needs a scalar ODE ([system] kind = \"ode\", n = 1)"
            raise ProblemFileError(message, path, "system")
        ode.require_solved()
        companion = ode_to_ds(ode)
    except PARSE_ERRORS as e:
        abort(e, EXIT_USAGE)
    except SymmetryReductionError as e:
        abort(e, EXIT_CHECK_FAILED)

    state: CliState = ctx.obj
    if state.format == "text":
        body = "\n".join(companion.render_equations())
        console.print(Panel(body, title=f"{problem.tag}: companion system"))
    else:
        for a, fa in enumerate(companion.f, start=1):
            typer.echo(f"f{a}={render(fa)}")


if __name__ == "__main__":
    app()
