"""
FOSR Simulation Module

Monte-Carlo study of the estimator: six preset settings (Matérn truth of
increasing smoothness on the interval and the square), data generation with
a Karhunen-Loève style functional error plus measurement noise, sweeps over
(n, m) grids, and a rate report comparing the observed error decay with the
minimax envelope and its phase transition.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import pandas as pd

from fosr_core.errors import FosrError, InputError
from fosr_core.models import Dataset, Domain, DomainKind, KernelSpec, Subject
from fosr_core.solver import FittedModel, fit
from fosr_core.spectra import (
    MercerBasis,
    SlopeFit,
    build_quadrature,
    default_quadrature_size,
    loglog_fit,
    nystrom_decompose,
)
from fosr_core.tuning import TuneGrid, tune_kernel, tune_lambda_cyclic
from fosr_core.workers import map_ordered, resolve_worker_count

logger = logging.getLogger(__name__)

TRUTH_TAIL = 60  # extra eigenpairs carried by the true beta beyond k_s
COLLAPSE_SPREAD = 0.15
COLLAPSE_WINDOW = 3

DESK_N_GRID = (10, 25, 50, 75, 100)
DESK_M_GRID = (5, 10, 25, 50, 75, 100)
DESK_REPS = 100
FULL_N_GRID = (10, 25, 50, 75, 100, 125, 150)
FULL_REPS = 1000

# id -> (intrinsic dimension, nu, k_s)
_PRESETS = {
    1: (1, 1.5, 7),
    2: (1, 3.5, 5),
    3: (1, 5.5, 3),
    4: (2, 5.5, 7),
    5: (2, 7.5, 5),
    6: (2, 9.5, 3),
}


class TuningMode(Enum):
    """How each replicate picks its penalty and kernel."""

    FIXED = "fixed"  # given lambda, true kernel
    LAMBDA = "lambda"  # GCV over lambda, true kernel
    FULL = "full"  # GCV over lambda, nu and rho


@dataclass(frozen=True)
class SimSetting:
    """One simulation design: the true kernel, sampling grids and noise model."""

    id: int
    domain: Domain
    nu: float
    k_s: int
    rho: float = 1.0
    n_grid: tuple[int, ...] = DESK_N_GRID
    m_grid: tuple[int, ...] = DESK_M_GRID
    reps: int = DESK_REPS
    delta_var: float = 0.1
    seed: int = 20240501
    # epsilon_ik ~ N(0, tau_k^2) when True, N(0, tau_k) otherwise
    process_variance_squared: bool = True
    # delta_var read as a variance when True, a standard deviation otherwise
    delta_is_variance: bool = True

    def __post_init__(self) -> None:
        if self.k_s < 0:
            raise InputError(f"k_s must be >= 0, got {self.k_s}")
        if not self.nu > 0 or not self.rho > 0:
            raise InputError("nu and rho must be positive")
        if not self.n_grid or not self.m_grid:
            raise InputError("n_grid and m_grid must be nonempty")
        if min(self.n_grid) < 1 or min(self.m_grid) < 1:
            raise InputError("n and m values must be >= 1")
        if self.reps < 1:
            raise InputError(f"reps must be >= 1, got {self.reps}")
        if self.delta_var < 0:
            raise InputError(f"delta_var must be >= 0, got {self.delta_var}")

    @classmethod
    def preset(cls, setting_id: int, full_grid: bool = False, **overrides) -> "SimSetting":
        """
        One of the six published settings.

        Settings 1-3 live on the interval, 4-6 on the unit square; ``full_grid``
        switches to the complete n grid and 1000 replicates.
        """
        if setting_id not in _PRESETS:
            raise InputError(f"unknown simulation setting {setting_id} (expected 1-6)")
        d, nu, k_s = _PRESETS[setting_id]
        domain = Domain(DomainKind.INTERVAL if d == 1 else DomainKind.SQUARE)
        setting = cls(id=setting_id, domain=domain, nu=nu, k_s=k_s)
        if full_grid:
            setting = replace(setting, n_grid=FULL_N_GRID, reps=FULL_REPS)
        return replace(setting, **overrides) if overrides else setting

    @property
    def d(self) -> int:
        return self.domain.intrinsic_dim

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec.matern(self.nu, self.rho, self.domain)

    @property
    def h(self) -> float:
        return self.kernel.decay_exponent

    @property
    def delta_sd(self) -> float:
        return math.sqrt(self.delta_var) if self.delta_is_variance else self.delta_var


def minimax_rate(n: float, m: float, h: float) -> float:
    """Excess-risk envelope (nm)^(-2h/(2h+1)) + 1/n."""
    return (n * m) ** (-2.0 * h / (2.0 * h + 1.0)) + 1.0 / n


def transition_density(n: float, h: float) -> float:
    """Sampling density n^(1/(2h)) beyond which the rate becomes parametric."""
    return n ** (1.0 / (2.0 * h))


def truth_basis(setting: SimSetting, quad_size: int | None = None) -> MercerBasis:
    """
    Mercer basis of the true kernel, carrying up to k_s + 60 eigenpairs.

    Smooth truths run into the eigenvalue floor well before that; the cut is
    kept in the basis notes and logged at debug level only.
    """
    quad = build_quadrature(setting.domain, quad_size or default_quadrature_size(setting.domain))
    k0 = min(setting.k_s + TRUTH_TAIL, quad.size)
    return nystrom_decompose(setting.kernel, quad, k0, warn_on_floor=False)


def gen_beta(setting: SimSetting, basis: MercerBasis) -> np.ndarray:
    """
    Coefficients of the true beta in ``basis``: 1 for the first k_s
    eigenfunctions, tau_k after.

    A basis cut by the eigenvalue floor drops only terms below 1e-12 tau_1,
    so a short tail is reported as a warning only when the quadrature, not
    the floor, limited it.
    """
    if basis.k0 <= setting.k_s:
        raise InputError(f"basis has k0={basis.k0}, needs more than k_s={setting.k_s}")
    if basis.k0 < setting.k_s + 20 and basis.truncated:
        logger.debug(
            "truth basis ends at the eigenvalue floor after %d terms past k_s=%d",
            basis.k0 - setting.k_s, setting.k_s,
        )
    elif basis.k0 < setting.k_s + 20:
        logger.warning(
            "truth basis carries only %d terms past k_s=%d; the tail of beta is cut short",
            basis.k0 - setting.k_s, setting.k_s,
        )
    coefficients = basis.eigenvalues.copy()
    coefficients[: setting.k_s] = 1.0
    return coefficients


def gen_dataset(
    setting: SimSetting,
    beta: np.ndarray,
    basis: MercerBasis,
    n: int,
    m: int,
    rng: np.random.Generator,
) -> Dataset:
    """
    Draw one dataset Y_ij = X_i beta(u_ij) + eps_i(u_ij) + delta_ij.

    Locations are uniform on the domain, X_i ~ N(1, 1), the functional error
    is eps_i = sum_k eps_ik v_k with independent Gaussian scores, and
    delta_ij is white measurement noise.
    """
    if n < 1 or m < 1:
        raise InputError(f"n and m must be >= 1, got n={n}, m={m}")
    tau = basis.eigenvalues
    score_sd = tau if setting.process_variance_squared else np.sqrt(tau)

    locations = setting.domain.sample_uniform(rng, n * m)
    x = rng.normal(1.0, 1.0, size=n)
    scores = rng.normal(0.0, 1.0, size=(n, basis.k0)) * score_sd[None, :]
    delta = rng.normal(0.0, 1.0, size=n * m) * setting.delta_sd

    v = basis.eigenfunctions(locations)
    subject_of = np.repeat(np.arange(n), m)
    y = x[subject_of] * (v @ beta) + np.sum(v * scores[subject_of], axis=1) + delta

    subjects = [
        Subject(
            subject_id=str(i + 1),
            covariates=np.array([x[i]]),
            locations=locations[i * m : (i + 1) * m],
            responses=y[i * m : (i + 1) * m].reshape(-1, 1),
        )
        for i in range(n)
    ]
    return Dataset(setting.domain, subjects)


def replicate_rng(setting: SimSetting, n: int, m: int, rep: int) -> np.random.Generator:
    """Independent stream for one replicate, keyed by (setting, n, m, rep)."""
    return np.random.default_rng(
        np.random.SeedSequence(setting.seed, spawn_key=(setting.id, n, m, rep))
    )


def squared_l2_error(truth: MercerBasis, beta: np.ndarray, model: FittedModel) -> float:
    """||beta_hat - beta||^2 on the quadrature of the truth basis."""
    nodes = truth.quadrature.nodes
    target = truth.eigenfunctions(nodes) @ beta
    return _squared_error_at_nodes(truth, target, model)


def _squared_error_at_nodes(truth: MercerBasis, target: np.ndarray, model: FittedModel) -> float:
    estimate = model.beta(truth.quadrature.nodes)[:, 0, 0]
    return float(truth.quadrature.integrate((estimate - target) ** 2))


@dataclass(frozen=True)
class ErrorRow:
    """One replicate of the sweep; failed replicates carry a NaN error and a cause."""

    setting: int
    n: int
    m: int
    rep: int
    sq_error: float
    cause: str = ""

    @property
    def ok(self) -> bool:
        return not self.cause


@dataclass
class SimProgress:
    """Progress of a simulation sweep."""

    total_replicates: int = 0
    completed: int = 0
    failed: int = 0
    current: str | None = None

    @property
    def progress_percent(self) -> float:
        if self.total_replicates == 0:
            return 0.0
        return (self.completed / self.total_replicates) * 100


def run_grid(
    setting: SimSetting,
    k0: int,
    mode: TuningMode = TuningMode.LAMBDA,
    lam: float | None = None,
    grid: TuneGrid | None = None,
    quad_size: int | None = None,
    workers: int | None = None,
    progress_callback: Callable[[SimProgress], None] | None = None,
) -> list[ErrorRow]:
    """
    Sweep every (n, m, rep) of a setting and record the squared L2 error.

    Args:
        setting: The simulation design.
        k0: Truncation of the fitted basis.
        mode: Penalty and kernel selection per replicate.
        lam: Penalty for ``TuningMode.FIXED``; defaults to the rate-optimal
            (nm)^(-2h/(2h+1)) of the true kernel.
        grid: Tuning grid for the GCV modes.
        quad_size: Quadrature size shared by the truth and the fits.
        workers: Thread cap for replicates.
        progress_callback: Called after each replicate.

    Returns:
        Rows ordered by n, m and rep, independent of execution order.
    """
    quad_size = quad_size or default_quadrature_size(setting.domain)
    grid = grid or TuneGrid()
    truth = truth_basis(setting, quad_size)
    beta = gen_beta(setting, truth)
    target = truth.eigenfunctions(truth.quadrature.nodes) @ beta

    fit_basis = None
    if mode is not TuningMode.FULL:
        fit_basis = nystrom_decompose(setting.kernel, truth.quadrature, k0)

    tasks = [(n, m, r) for n in setting.n_grid for m in setting.m_grid for r in range(setting.reps)]
    progress = SimProgress(total_replicates=len(tasks))
    logger.info(
        "setting %d: %s, %d replicates, mode=%s, k0=%d",
        setting.id, setting.kernel.describe(), len(tasks), mode.value, k0,
    )

    def fit_one(data: Dataset, n: int, m: int) -> FittedModel:
        if mode is TuningMode.FIXED:
            h = setting.h
            penalty = lam if lam is not None else (n * m) ** (-2.0 * h / (2.0 * h + 1.0))
            return fit(data, fit_basis, penalty)
        if mode is TuningMode.LAMBDA:
            return fit(data, fit_basis, tune_lambda_cyclic(data, fit_basis, grid).penalty)
        return tune_kernel(data, grid, setting.domain, quad_size, k0, workers=1).model

    def run(task: tuple[int, int, int]) -> ErrorRow:
        n, m, r = task
        try:
            data = gen_dataset(setting, beta, truth, n, m, replicate_rng(setting, n, m, r))
            model = fit_one(data, n, m)
            return ErrorRow(setting.id, n, m, r, _squared_error_at_nodes(truth, target, model))
        except FosrError as e:
            logger.warning("setting %d n=%d m=%d rep=%d failed: %s", setting.id, n, m, r, e)
            return ErrorRow(setting.id, n, m, r, math.nan, cause=str(e) or type(e).__name__)

    def on_done(_: int, row: ErrorRow) -> None:
        progress.completed += 1
        progress.failed += 0 if row.ok else 1
        progress.current = f"n={row.n}, m={row.m}"
        if progress_callback:
            progress_callback(progress)

    return map_ordered(run, tasks, resolve_worker_count(workers), on_done)


def error_frame(rows: list[ErrorRow]) -> pd.DataFrame:
    """Error table as a DataFrame with columns setting, n, m, rep, sq_error, cause."""
    return pd.DataFrame(
        [(r.setting, r.n, r.m, r.rep, r.sq_error, r.cause) for r in rows],
        columns=["setting", "n", "m", "rep", "sq_error", "cause"],
    )


@dataclass(frozen=True)
class RateSlope:
    setting: int
    m: int
    fit: SlopeFit


@dataclass(frozen=True)
class CollapseCheck:
    """Relative spread of mean errors across the largest m values at one n."""

    setting: int
    n: int
    m_values: tuple[int, ...]
    spread: float
    collapsed: bool


@dataclass(frozen=True)
class RateReport:
    """Observed error decay against the theoretical envelope."""

    h: float
    means: pd.DataFrame  # setting, n, m, mean_error, reps
    slopes: tuple[RateSlope, ...]
    collapse: tuple[CollapseCheck, ...]
    transition: dict[tuple[int, int], int | None] = field(default_factory=dict)
    transition_fit: SlopeFit | None = None

    @property
    def slow_exponent(self) -> float:
        """Slope of the nonparametric regime, -2h/(2h+1)."""
        return -2.0 * self.h / (2.0 * self.h + 1.0)

    @property
    def fast_exponent(self) -> float:
        return -1.0

    @property
    def transition_exponent(self) -> float:
        """Predicted growth of the transition density in n, 1/(2h)."""
        return 1.0 / (2.0 * self.h)


def _relative_spread(values: np.ndarray) -> float:
    top = float(np.max(values))
    return 0.0 if top == 0 else (top - float(np.min(values))) / top


def rate_report(table: pd.DataFrame, h: float) -> RateReport:
    """
    Summarize an error table.

    Fits log mean-error against log n for each (setting, m); checks at each n
    whether the curves for the largest m values have collapsed (spread below
    15% of the largest mean, while the full m range is wider than that); and
    locates the transition density, the smallest m from which all larger m
    agree, fitting its growth in n.

    Raises:
        InputError: if some (setting, m) has fewer than 3 distinct n.
    """
    if not h > 0:
        raise InputError(f"h must be positive, got {h}")
    required = {"setting", "n", "m", "sq_error"}
    missing = required - set(table.columns)
    if missing:
        raise InputError(f"error table lacks columns: {', '.join(sorted(missing))}")

    ok = table[np.isfinite(table["sq_error"].astype(float))]
    if ok.empty:
        raise InputError("error table has no successful replicates")
    means = (
        ok.groupby(["setting", "n", "m"], sort=True)["sq_error"]
        .agg(mean_error="mean", reps="count")
        .reset_index()
    )

    slopes = []
    for (setting, m), group in means.groupby(["setting", "m"], sort=True):
        if group["n"].nunique() < 3:
            raise InputError(f"setting {setting}, m={m}: need at least 3 distinct n for a rate fit")
        if (group["mean_error"] <= 0).any():
            raise InputError(f"setting {setting}, m={m}: mean errors must be positive")
        slopes.append(RateSlope(int(setting), int(m), loglog_fit(group["n"], group["mean_error"])))

    collapse = []
    transition: dict[tuple[int, int], int | None] = {}
    for (setting, n), group in means.groupby(["setting", "n"], sort=True):
        group = group.sort_values("m")
        ms = group["m"].to_numpy()
        errs = group["mean_error"].to_numpy()
        if ms.size < 2:
            continue
        window = min(COLLAPSE_WINDOW, ms.size)
        spread = _relative_spread(errs[-window:])
        informative = _relative_spread(errs) >= COLLAPSE_SPREAD
        collapse.append(CollapseCheck(
            int(setting), int(n), tuple(int(v) for v in ms[-window:]), spread,
            bool(informative and spread < COLLAPSE_SPREAD),
        ))

        m_star = None
        if informative:
            for j in range(1, ms.size - 1):
                if _relative_spread(errs[j:]) < COLLAPSE_SPREAD:
                    m_star = int(ms[j])
                    break
        transition[(int(setting), int(n))] = m_star

    points = [(n, m) for (_, n), m in transition.items() if m is not None]
    transition_fit = None
    if len({n for n, _ in points}) >= 3:
        transition_fit = loglog_fit([n for n, _ in points], [m for _, m in points])

    logger.info("rate report: %d slopes, h=%g", len(slopes), h)
    return RateReport(
        h=h,
        means=means,
        slopes=tuple(slopes),
        collapse=tuple(collapse),
        transition=transition,
        transition_fit=transition_fit,
    )
