"""
FOSR CLI

Command-line interface for fitting, tuning and simulating function-on-scalar
regression models.
"""

import functools
import logging
import math
from collections.abc import Callable
from pathlib import Path

import click
import numpy as np
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from fosr_cli import __version__
from fosr_cli.artifacts import (
    ArtifactWriter,
    candidate_frame,
    coefficient_frame,
    coefficient_plot,
    errors_to_frame,
    plot_frame,
    rate_frames,
    read_error_table,
    trace_frame,
)
from fosr_cli.config import RunConfig, load_config
from fosr_core import (
    ConfigError,
    Dataset,
    FosrError,
    KernelFamily,
    KernelSpec,
    NumericalError,
    SimProgress,
    SimSetting,
    TuneProgress,
    TuningMode,
    analytic_laplacian_spectrum,
    build_basis,
    decay_slope,
    diagnostics,
    fit,
    load_dataset,
    load_model,
    rate_report,
    run_grid,
    save_model,
    tune_kernel,
    tune_lambda_cyclic,
)
from fosr_core.ingest import load_covariate_table, load_probe_points
from fosr_core.solver import predict_many
from fosr_core.spectra import default_quadrature_size

console = Console()
err_console = Console(stderr=True)

logger = logging.getLogger("fosr_cli")

EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def print_banner() -> None:
    """Print the fosr banner."""
    console.print(f"[bold cyan]fosr[/bold cyan] [dim]{__version__}[/dim]", highlight=False)
    console.print("Function-on-scalar regression in an RKHS", style="dim italic")
    console.print()


def setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


def run_options(func: Callable) -> Callable:
    """Options shared by every subcommand."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path),
                  help="TOML run configuration")
    @click.option("--seed", type=int, default=None, help="Random seed")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
                  default=None, help="Output directory")
    @click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
                  help="Override one config key (repeatable)")
    @functools.wraps(func)
    def wrapper(config_path, seed, out_dir, overrides, **kwargs):
        return func(config_path=config_path, seed=seed, out_dir=out_dir, overrides=overrides, **kwargs)

    return wrapper


def _configure(command: str, config_path, seed, out_dir, overrides) -> RunConfig:
    out = str(out_dir) if out_dir is not None else None
    cfg = load_config(config_path, overrides, seed=seed, out=out).validate(command)
    logger.debug("%s config: %s", command, cfg)
    return cfg


def guarded(command: str) -> Callable:
    """Run a command body, mapping library errors to exit codes."""

    def decorate(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(**kwargs):
            ctx = click.get_current_context()
            try:
                func(**kwargs)
            except NumericalError as e:
                err_console.print(f"[bold red]fosr {command}: numerical failure:[/bold red] {e}")
                ctx.exit(EXIT_NUMERICAL)
            except FosrError as e:
                err_console.print(f"[bold red]fosr {command}:[/bold red] {e}")
                ctx.exit(EXIT_INPUT)

        return wrapper

    return decorate


@click.group()
@click.version_option(version=__version__, prog_name="fosr")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.option("--quiet", "-q", is_flag=True, help="Warnings and errors only")
def main(verbose: bool, quiet: bool) -> None:
    """
    fosr - function-on-scalar regression with RKHS penalties.

    Fits scattered functional responses on scalar covariates with a
    truncated Mercer basis, tunes penalties and kernels by GCV, and runs
    the convergence-rate simulation study.
    """
    setup_logging(verbose, quiet)


def _kernel_spec(cfg: RunConfig) -> KernelSpec:
    domain = cfg.parse_domain()
    family = KernelFamily(cfg.kernel_family)
    smoothness = cfg.kernel_r if family is KernelFamily.SOBOLEV_SPECTRAL else cfg.kernel_nu
    try:
        return KernelSpec(family, domain, float(smoothness), float(cfg.kernel_rho))
    except FosrError as e:
        raise ConfigError(f"kernel: {e}") from None


def _quad_size(cfg: RunConfig) -> int:
    return cfg.quad_size or default_quadrature_size(cfg.parse_domain())


def _print_diagnostics(data: Dataset) -> None:
    report = diagnostics(data)
    table = Table(title="Design", show_header=True, header_style="bold")
    table.add_column("Metric", style="dim")
    table.add_column("Value", justify="right")
    table.add_row("Subjects n", str(data.n))
    table.add_row("Observations N", str(data.N))
    table.add_row("Predictors P", str(data.P))
    table.add_row("Outputs L", str(data.L))
    table.add_row("Harmonic mean m", f"{report.harmonic_m:.2f}")
    table.add_row("Arithmetic mean m", f"{report.arithmetic_m:.2f}")
    table.add_row("Sigma_X condition", f"{report.condition:.3g}")
    table.add_row("max |X|", f"{report.zeta:.3g}")
    console.print(table)
    for message in report.warnings:
        console.print(f"  [yellow]⚠ {message}[/yellow]")
    console.print()


def _print_model(model, title: str) -> None:
    norms = model.rkhs_norms
    lines = [
        f"[bold]Kernel:[/bold] {model.basis.kernel.describe()}",
        f"[bold]k0:[/bold] {model.k0}",
        f"[bold]Lambda:[/bold] {', '.join(f'{v:.3g}' for v in model.penalty)}",
        f"[bold]Objective:[/bold] {model.objective_value:.6g}",
        f"[bold]GCV:[/bold] {model.gcv_score:.6g}",
        f"[bold]Effective dof:[/bold] {model.dof:.2f}",
        f"[bold]RKHS norms:[/bold] {', '.join(f'{math.sqrt(v):.3g}' for v in norms.ravel())}",
    ]
    lines.extend(f"[yellow]{note}[/yellow]" for note in model.notes)
    console.print(Panel("\n".join(lines), title=title, border_style="cyan"))


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=err_console,
        transient=True,
    )


@main.command("fit")
@run_options
@guarded("fit")
def fit_command(config_path, seed, out_dir, overrides) -> None:
    """Fit at a fixed penalty; writes the model and its coefficients."""
    cfg = _configure("fit", config_path, seed, out_dir, overrides)
    spec = _kernel_spec(cfg)
    print_banner()

    data = load_dataset(cfg.data_observations, cfg.data_covariates, spec.domain)
    _print_diagnostics(data)

    with console.status(f"Building {spec.describe()} basis..."):
        basis = build_basis(spec, _quad_size(cfg), cfg.k0)
    model = fit(data, basis, cfg.penalty)

    with ArtifactWriter(cfg.out) as writer:
        save_model(model, writer.path("model.fosr"))
        writer.write_csv("coefficients.csv", coefficient_frame(model))
        writer.write_csv("plot.csv", coefficient_plot(model))

    _print_model(model, "Fit")
    console.print(f"[dim]Wrote {', '.join(p.name for p in writer.written)} to {cfg.out}[/dim]")


@main.command("tune")
@run_options
@guarded("tune")
def tune_command(config_path, seed, out_dir, overrides) -> None:
    """Select lambda (and nu, rho for Matérn kernels) by GCV."""
    cfg = _configure("tune", config_path, seed, out_dir, overrides)
    spec = _kernel_spec(cfg)
    grid = cfg.tune_grid()
    print_banner()

    data = load_dataset(cfg.data_observations, cfg.data_covariates, spec.domain)
    _print_diagnostics(data)

    candidates = ()
    if spec.family is KernelFamily.MATERN:
        with _progress() as progress:
            task = progress.add_task("Tuning kernels...", total=len(grid.nu_grid) * len(grid.rho_grid))

            def on_progress(state: TuneProgress) -> None:
                progress.update(task, completed=state.completed,
                                description=f"Tuning: {state.current or '...'}")

            result = tune_kernel(data, grid, spec.domain, _quad_size(cfg), cfg.k0,
                                 workers=cfg.threads, progress_callback=on_progress)
        model, trace, candidates = result.model, result.trace, result.candidates
    else:
        with console.status("Tuning lambda..."):
            basis = build_basis(spec, _quad_size(cfg), cfg.k0)
            tuned = tune_lambda_cyclic(data, basis, grid)
            model = fit(data, basis, tuned.penalty)
        trace = tuned.trace

    with ArtifactWriter(cfg.out) as writer:
        save_model(model, writer.path("model.fosr"))
        writer.write_csv("trace.csv", trace_frame(trace))
        writer.write_csv("coefficients.csv", coefficient_frame(model))
        if candidates:
            writer.write_csv("candidates.csv", candidate_frame(candidates))
        steps = np.arange(len(trace))
        writer.write_csv("plot.csv", plot_frame({"gcv": (steps, [row.gcv for row in trace])}))

    if candidates:
        table = Table(title="Kernel candidates", show_header=True, header_style="bold")
        table.add_column("nu", justify="right")
        table.add_column("rho", justify="right")
        table.add_column("GCV", justify="right")
        for c in candidates:
            table.add_row(f"{c.nu:g}", f"{c.rho:g}",
                          f"{c.score:.6g}" if c.ok else "[red]failed[/red]")
        console.print(table)
    _print_model(model, "Tuned fit")
    console.print(f"[dim]Wrote {', '.join(p.name for p in writer.written)} to {cfg.out}[/dim]")


@main.command("simulate")
@run_options
@guarded("simulate")
def simulate_command(config_path, seed, out_dir, overrides) -> None:
    """
    Run the Monte-Carlo sweep of one simulation setting.

    Each replicate tunes lambda, nu and rho by GCV (sim.mode=full). Set
    sim.mode=lambda to keep the true kernel and tune lambda only, which is
    much faster, or sim.mode=fixed to fit at sim.lambda.
    """
    cfg = _configure("simulate", config_path, seed, out_dir, overrides)
    extra = {
        "seed": cfg.seed,
        "delta_var": float(cfg.sim_delta_var),
        "delta_is_variance": bool(cfg.sim_delta_is_variance),
        "process_variance_squared": cfg.sim_process_variance == "squared",
    }
    if cfg.sim_n_grid is not None:
        extra["n_grid"] = tuple(cfg.sim_n_grid)
    if cfg.sim_m_grid is not None:
        extra["m_grid"] = tuple(cfg.sim_m_grid)
    if cfg.sim_reps is not None:
        extra["reps"] = cfg.sim_reps
    setting = SimSetting.preset(cfg.sim_setting, full_grid=cfg.sim_full_grid, **extra)
    mode = TuningMode(cfg.sim_mode)
    grid = cfg.tune_grid() if mode is not TuningMode.FIXED else None
    print_banner()

    console.print(f"🎲 Setting {setting.id}: [bold]{setting.kernel.describe()}[/bold], k_s={setting.k_s}")
    console.print(f"   n ∈ {list(setting.n_grid)}, m ∈ {list(setting.m_grid)}, {setting.reps} reps, "
                  f"mode={mode.value}")
    console.print()

    with _progress() as progress:
        total = len(setting.n_grid) * len(setting.m_grid) * setting.reps
        task = progress.add_task("Simulating...", total=total)

        def on_progress(state: SimProgress) -> None:
            progress.update(task, completed=state.completed,
                            description=f"Simulating: {state.current or '...'}")

        rows = run_grid(setting, cfg.k0, mode=mode, lam=cfg.sim_lambda, grid=grid,
                        quad_size=cfg.quad_size, workers=cfg.threads,
                        progress_callback=on_progress)

    frame = errors_to_frame(rows)
    means = (
        frame[frame["cause"] == ""]
        .groupby(["n", "m"], sort=True)["sq_error"].mean()
        .reset_index()
    )
    with ArtifactWriter(cfg.out) as writer:
        writer.write_csv("errors.csv", frame)
        writer.write_csv("plot.csv", plot_frame({
            f"m={m}": (group["n"], group["sq_error"]) for m, group in means.groupby("m", sort=True)
        }))

    table = Table(title="Mean squared L2 error", show_header=True, header_style="bold")
    table.add_column("n", justify="right")
    for m in setting.m_grid:
        table.add_column(f"m={m}", justify="right")
    for n in setting.n_grid:
        cells = []
        for m in setting.m_grid:
            hit = means[(means["n"] == n) & (means["m"] == m)]["sq_error"]
            cells.append(f"{hit.iloc[0]:.4g}" if len(hit) else "-")
        table.add_row(str(n), *cells)
    console.print(table)

    failed = int((frame["cause"] != "").sum())
    if failed:
        console.print(f"[yellow]⚠ {failed} replicate(s) failed; see the cause column[/yellow]")
    console.print(f"[dim]Wrote {', '.join(p.name for p in writer.written)} to {cfg.out}[/dim]")


def _rate_h(cfg: RunConfig, table: pd.DataFrame) -> float:
    if cfg.rates_h is not None:
        return float(cfg.rates_h)
    exponents = set()
    for setting_id in table["setting"].unique():
        try:
            exponents.add(SimSetting.preset(int(setting_id)).h)
        except FosrError:
            raise ConfigError(f"rates_h: setting {setting_id} has no preset; set rates.h") from None
    if len(exponents) != 1:
        raise ConfigError("rates_h: the table mixes settings of different smoothness; set rates.h")
    return exponents.pop()


@main.command("rates")
@run_options
@guarded("rates")
def rates_command(config_path, seed, out_dir, overrides) -> None:
    """Fit error-decay slopes and check the phase transition of an error table."""
    cfg = _configure("rates", config_path, seed, out_dir, overrides)
    table = read_error_table(cfg.rates_errors)
    h = _rate_h(cfg, table)
    print_banner()

    report = rate_report(table, h)
    with ArtifactWriter(cfg.out) as writer:
        for name, frame in rate_frames(report).items():
            writer.write_csv(name, frame)

    result = Table(title=f"Error decay in n (h = {h:g})", show_header=True, header_style="bold")
    result.add_column("Setting", justify="right")
    result.add_column("m", justify="right")
    result.add_column("Slope", justify="right")
    result.add_column("Std. err.", justify="right")
    for s in report.slopes:
        result.add_row(str(s.setting), str(s.m), f"{s.fit.slope:.3f}", f"{s.fit.stderr:.3f}")
    console.print(result)

    summary = [
        f"[bold]Nonparametric regime slope:[/bold] {report.slow_exponent:.3f}",
        f"[bold]Parametric regime slope:[/bold] {report.fast_exponent:.3f}",
        f"[bold]Predicted transition exponent:[/bold] {report.transition_exponent:.3f}",
    ]
    if report.transition_fit is not None:
        summary.append(
            f"[bold]Estimated transition exponent:[/bold] {report.transition_fit.slope:.3f} "
            f"± {report.transition_fit.stderr:.3f}"
        )
    collapsed = [c for c in report.collapse if c.collapsed]
    summary.append(f"[bold]Collapsed at large m:[/bold] {len(collapsed)} of {len(report.collapse)} n values")
    console.print(Panel("\n".join(summary), title="Theory", border_style="green"))
    console.print(f"[dim]Wrote {', '.join(p.name for p in writer.written)} to {cfg.out}[/dim]")


@main.command("spectra")
@run_options
@guarded("spectra")
def spectra_command(config_path, seed, out_dir, overrides) -> None:
    """Eigenvalue tables of a kernel or of the Laplacian of the domain."""
    cfg = _configure("spectra", config_path, seed, out_dir, overrides)
    count = cfg.spectra_count
    print_banner()

    if cfg.spectra_source == "laplacian":
        spectrum = analytic_laplacian_spectrum(cfg.parse_domain(), count)
        values = spectrum.eigenvalues
        column, label = "xi", f"Laplacian on {spectrum.domain}"
        default_range = (spectrum.zero_count + 1, count)
    else:
        spec = _kernel_spec(cfg)
        with console.status(f"Decomposing {spec.describe()}..."):
            basis = build_basis(spec, _quad_size(cfg), count)
        values = basis.eigenvalues
        column, label = "tau", spec.describe()
        default_range = (1, values.size)
        for note in basis.notes:
            console.print(f"[yellow]⚠ {note}[/yellow]")

    k = np.arange(1, values.size + 1)
    frame = pd.DataFrame({"k": k, column: values, "cumulative_trace": np.cumsum(values)})
    with ArtifactWriter(cfg.out) as writer:
        writer.write_csv("spectrum.csv", frame)
        writer.write_csv("plot.csv", plot_frame({column: (k, values)}))

    fit_range = (cfg.spectra_fit_start or default_range[0], cfg.spectra_fit_stop or default_range[1])
    lines = [f"[bold]Source:[/bold] {label}", f"[bold]Eigenvalues:[/bold] {values.size}"]
    if fit_range[1] - fit_range[0] + 1 >= 3 and fit_range[1] <= values.size:
        slope = decay_slope(values, fit_range)
        lines.append(
            f"[bold]Log-log slope over k ∈ [{fit_range[0]}, {fit_range[1]}]:[/bold] "
            f"{slope.slope:.3f} ± {slope.stderr:.3f}"
        )
        if cfg.spectra_source == "kernel":
            lines.append(f"[bold]Implied decay exponent h:[/bold] {slope.h_hat:.3f}")
    console.print(Panel("\n".join(lines), title="Spectrum", border_style="cyan"))
    console.print(f"[dim]Wrote {', '.join(p.name for p in writer.written)} to {cfg.out}[/dim]")


@main.command("predict")
@run_options
@guarded("predict")
def predict_command(config_path, seed, out_dir, overrides) -> None:
    """Predict mean responses of new subjects on a probe grid."""
    cfg = _configure("predict", config_path, seed, out_dir, overrides)
    model = load_model(cfg.predict_model)
    ids, covariates = load_covariate_table(cfg.predict_covariates)
    points = load_probe_points(cfg.predict_points, model.basis.domain)
    print_banner()

    values = predict_many(model, covariates, points)  # (n, N, L)
    n, N, L = values.shape
    frame = pd.DataFrame({
        "subject_id": np.repeat(ids, N),
        "point": np.tile(np.arange(1, N + 1), n),
    })
    for j in range(points.shape[1]):
        frame[f"coord_{j + 1}"] = np.tile(points[:, j], n)
    for l in range(L):
        frame[f"y_{l + 1}"] = values[:, :, l].ravel()

    x_axis = points[:, 0] if points.shape[1] == 1 else np.arange(1, N + 1)
    with ArtifactWriter(cfg.out) as writer:
        writer.write_csv("predictions.csv", frame)
        writer.write_csv("plot.csv", plot_frame({
            f"{sid}_y{l + 1}": (x_axis, values[i, :, l])
            for i, sid in enumerate(ids)
            for l in range(L)
        }))

    console.print(f"📈 {n} subject(s) × {N} point(s) × {L} output(s) from "
                  f"[bold]{model.basis.kernel.describe()}[/bold]")
    console.print(f"[dim]Wrote {', '.join(p.name for p in writer.written)} to {cfg.out}[/dim]")


if __name__ == "__main__":
    main()
