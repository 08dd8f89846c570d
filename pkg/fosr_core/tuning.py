"""
FOSR Tuning

Generalized cross-validation for the ridge penalty, cyclic per-predictor
refinement of Lambda over a grid, and grid search over the Matérn
smoothness and range.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from fosr_core.errors import FosrError, InputError, NumericalError, TuningError
from fosr_core.models import Dataset, Domain, KernelSpec
from fosr_core.solver import (
    Design,
    FittedModel,
    NormalSystem,
    build_design,
    fit,
    gcv_from_system,
)
from fosr_core.spectra import MercerBasis, build_quadrature, nystrom_decompose
from fosr_core.workers import map_ordered, resolve_worker_count

logger = logging.getLogger(__name__)


def _default_lambdas() -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(-8, 2, 25))


@dataclass(frozen=True)
class TuneGrid:
    """Candidate values for lambda, nu and rho, and the number of coordinate cycles."""

    lambda_grid: tuple[float, ...] = field(default_factory=_default_lambdas)
    nu_grid: tuple[float, ...] = (1.5, 2.5, 3.5, 5.5)
    rho_grid: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    cycles: int = 3

    def __post_init__(self) -> None:
        for name in ("lambda_grid", "nu_grid", "rho_grid"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise InputError(f"{name} is empty")
            if any(not v > 0 or not math.isfinite(v) for v in values):
                raise InputError(f"{name} must be strictly positive")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise InputError(f"{name} must be sorted strictly ascending")
            object.__setattr__(self, name, values)
        if self.cycles < 1:
            raise InputError(f"cycles must be >= 1, got {self.cycles}")

    @property
    def initial_lambda(self) -> float:
        """Median grid point (the upper one for even-length grids)."""
        return self.lambda_grid[len(self.lambda_grid) // 2]


@dataclass(frozen=True)
class TraceRow:
    """One step of the cyclic tuner; cycle 0 is the starting point."""

    cycle: int
    predictor: int  # 1-based, 0 for the starting point
    lam: float
    gcv: float
    dof: float


class GcvEvaluator:
    """
    GCV of one design over many penalties.

    The design and its weighted Gram are built once; scores are memoized by
    penalty vector so coordinate sweeps never refactor the same system twice.
    """

    def __init__(self, data: Dataset, basis: MercerBasis):
        self.basis = basis
        self.design: Design = build_design(data, basis)
        self._cache: dict[tuple[float, ...], tuple[float, float]] = {}

    def __call__(self, penalty) -> tuple[float, float]:
        key = tuple(float(v) for v in np.broadcast_to(penalty, (self.design.P,)))
        if key not in self._cache:
            system = NormalSystem(self.design, self.basis.eigenvalues, key)
            self._cache[key] = gcv_from_system(system, system.solve())
        return self._cache[key]

    def safe(self, penalty) -> tuple[float, float]:
        """Like calling the evaluator, but numerical failures score +inf."""
        try:
            return self(penalty)
        except NumericalError as e:
            logger.debug("gcv failed at %s: %s", penalty, e)
            return math.inf, math.nan


def gcv_score(data: Dataset, basis: MercerBasis, penalty) -> float:
    """
    Generalized cross-validation score of the fit at ``penalty``.

    GCV = [N^-1 ||W^(1/2)(Y - A b)||^2] / [N^-1 tr(I - H)]^2, with the
    residual averaged across outputs and the hat-matrix trace taken from an
    eigendecomposition of the P k0 sized normal matrix.
    """
    return GcvEvaluator(data, basis)(penalty)[0]


@dataclass(frozen=True)
class LambdaTuneResult:
    penalty: np.ndarray
    score: float
    dof: float
    trace: tuple[TraceRow, ...]


def tune_lambda_cyclic(
    data: Dataset,
    basis: MercerBasis,
    grid: TuneGrid,
    evaluator: GcvEvaluator | None = None,
) -> LambdaTuneResult:
    """
    Coordinate-wise GCV minimization of Lambda over ``grid.lambda_grid``.

    Every lambda_p starts at the median grid point; each cycle visits the
    predictors in order and moves lambda_p to the grid value with the lowest
    score, the others held fixed. Stops after ``grid.cycles`` passes or a
    pass without change. Ties go to the smaller lambda.
    """
    evaluator = evaluator or GcvEvaluator(data, basis)
    lambdas = grid.lambda_grid
    idx = [len(lambdas) // 2] * data.P

    def current() -> np.ndarray:
        return np.array([lambdas[i] for i in idx])

    score, dof = evaluator.safe(current())
    trace = [TraceRow(0, 0, lambdas[idx[0]], score, dof)]

    for cycle in range(1, grid.cycles + 1):
        changed = False
        for p in range(data.P):
            best_i, best = idx[p], (score, dof)
            for i in range(len(lambdas)):
                trial = list(idx)
                trial[p] = i
                candidate = evaluator.safe(np.array([lambdas[j] for j in trial]))
                if candidate[0] < best[0] or (candidate[0] == best[0] and i < best_i):
                    best_i, best = i, candidate
            if best_i != idx[p]:
                changed = True
                idx[p] = best_i
            score, dof = best
            trace.append(TraceRow(cycle, p + 1, lambdas[idx[p]], score, dof))
        if not changed:
            break

    if not math.isfinite(score):
        raise NumericalError("GCV failed at every lambda on the grid")
    logger.debug("cyclic tuner: lambda=%s gcv=%.6g after %d steps",
                 current().tolist(), score, len(trace))
    return LambdaTuneResult(penalty=current(), score=score, dof=dof, trace=tuple(trace))


@dataclass(frozen=True)
class CandidateResult:
    """Outcome of one (nu, rho) candidate."""

    nu: float
    rho: float
    penalty: np.ndarray | None = None
    score: float = math.inf
    trace: tuple[TraceRow, ...] = ()
    basis: MercerBasis | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def label(self) -> str:
        return f"nu={self.nu:g}, rho={self.rho:g}"


@dataclass
class TuneProgress:
    """Progress of a kernel grid search."""

    total_candidates: int = 0
    completed: int = 0
    failed: int = 0
    current: str | None = None

    @property
    def progress_percent(self) -> float:
        if self.total_candidates == 0:
            return 0.0
        return (self.completed / self.total_candidates) * 100


@dataclass(frozen=True)
class KernelTuneResult:
    kernel: KernelSpec
    penalty: np.ndarray
    model: FittedModel
    score: float
    trace: tuple[TraceRow, ...]
    candidates: tuple[CandidateResult, ...]


def tune_kernel(
    data: Dataset,
    grid: TuneGrid,
    domain: Domain,
    quad_size: int,
    k0: int,
    workers: int | None = None,
    progress_callback: Callable[[TuneProgress], None] | None = None,
) -> KernelTuneResult:
    """
    GCV search over Matérn (nu, rho) with cyclic lambda tuning inside.

    Candidates are independent and may run concurrently; the winner is the
    lowest score, ties broken toward smaller nu, then smaller rho, then a
    smaller sum of lambdas.

    Raises:
        TuningError: if every candidate fails, listing the causes.
    """
    quad = build_quadrature(domain, quad_size)
    pairs = [(nu, rho) for nu in grid.nu_grid for rho in grid.rho_grid]
    progress = TuneProgress(total_candidates=len(pairs))

    def run(pair: tuple[float, float]) -> CandidateResult:
        nu, rho = pair
        try:
            basis = nystrom_decompose(KernelSpec.matern(nu, rho, domain), quad, k0)
            result = tune_lambda_cyclic(data, basis, grid)
        except FosrError as e:
            logger.warning("candidate nu=%g rho=%g failed: %s", nu, rho, e)
            return CandidateResult(nu, rho, error=str(e))
        return CandidateResult(nu, rho, result.penalty, result.score, result.trace, basis)

    def on_done(_: int, candidate: CandidateResult) -> None:
        progress.completed += 1
        progress.failed += 0 if candidate.ok else 1
        progress.current = candidate.label
        if progress_callback:
            progress_callback(progress)

    candidates = map_ordered(run, pairs, resolve_worker_count(workers), on_done)
    good = [c for c in candidates if c.ok]
    if not good:
        raise TuningError([(c.label, c.error or "unknown") for c in candidates])

    best = min(good, key=lambda c: (c.score, c.nu, c.rho, float(np.sum(c.penalty))))
    model = fit(data, best.basis, best.penalty)
    logger.info("selected %s, lambda=%s, gcv=%.6g", best.label, best.penalty.tolist(), best.score)
    return KernelTuneResult(
        kernel=best.basis.kernel,
        penalty=best.penalty,
        model=model,
        score=best.score,
        trace=best.trace,
        candidates=tuple(candidates),
    )
