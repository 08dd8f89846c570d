"""
FOSR Solver

Truncated-basis penalized least squares for function-on-scalar regression.
The design row of observation (i, j) is V_ij^T (x) X_i^T, observations are
weighted by 1/(n m_i), and each output is solved in closed form against
one shared Cholesky factorization.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from fosr_core.errors import InputError, NumericalError
from fosr_core.kernels import kernel_matrix
from fosr_core.models import Dataset, KernelSpec
from fosr_core.spectra import MercerBasis

logger = logging.getLogger(__name__)

ORACLE_MAX_OBSERVATIONS = 200


@dataclass(frozen=True)
class DiagnosticsReport:
    """Design diagnostics: covariate conditioning and sampling balance."""

    sigma_x: np.ndarray  # n^-1 sum X_i X_i^T
    sigma_min: float
    sigma_max: float
    harmonic_m: float
    arithmetic_m: float
    zeta: float  # max |X_ip|
    warnings: tuple[str, ...] = ()

    @property
    def condition(self) -> float:
        return math.inf if self.sigma_min <= 0 else self.sigma_max / self.sigma_min


def diagnostics(data: Dataset) -> DiagnosticsReport:
    """
    Summarize the covariate design and the per-subject sampling counts.

    Flags a near-singular Sigma_X (sigma_min < 1e-8) and a large gap between
    the arithmetic and harmonic means of the m_i (ratio above 10).
    """
    x = data.covariate_matrix()
    sigma_x = x.T @ x / data.n
    eig = np.linalg.eigvalsh(sigma_x)
    m = data.m.astype(float)
    harmonic = data.n / float(np.sum(1.0 / m))
    arithmetic = float(m.mean())

    flags = []
    if eig[0] < 1e-8:
        flags.append(f"covariate second-moment matrix is near singular (sigma_min={eig[0]:.3e})")
    if arithmetic / harmonic > 10:
        flags.append(
            f"arithmetic/harmonic mean of m_i is {arithmetic / harmonic:.1f}; "
            "sampling is strongly unbalanced"
        )
    for message in flags:
        logger.warning(message)

    return DiagnosticsReport(
        sigma_x=sigma_x,
        sigma_min=float(eig[0]),
        sigma_max=float(eig[-1]),
        harmonic_m=harmonic,
        arithmetic_m=arithmetic,
        zeta=float(np.max(np.abs(x))),
        warnings=tuple(flags),
    )


def recommended_truncation(n: int, m: float, h: float) -> int:
    """Smallest k0 whose truncation error is below the minimax rate: max(n^(1/2h), (nm)^(1/(2h+1)))."""
    return math.ceil(max(n ** (1.0 / (2.0 * h)), (n * m) ** (1.0 / (2.0 * h + 1.0))))


@dataclass(frozen=True)
class Design:
    """Stacked design matrix A (N x P k0), observation weights and responses."""

    matrix: np.ndarray
    weights: np.ndarray
    responses: np.ndarray  # (N, L)
    P: int
    k0: int
    gram: np.ndarray  # A^T W A
    cross: np.ndarray  # A^T W Y


def build_design(data: Dataset, basis: MercerBasis) -> Design:
    """
    Assemble the Kronecker-structured design.

    Column ``k * P + p`` holds v_k(u_ij) X_ip, matching column stacking of
    the P x k0 coefficient matrix.
    """
    if data.domain != basis.domain:
        raise InputError(f"data domain {data.domain} does not match basis domain {basis.domain}")
    v = basis.eigenfunctions(data.locations())
    x = data.covariate_rows()
    a = np.einsum("nk,np->nkp", v, x).reshape(data.N, basis.k0 * data.P)
    w = data.weights()
    y = data.responses()
    weighted = a * w[:, None]
    return Design(matrix=a, weights=w, responses=y, P=data.P, k0=basis.k0,
                  gram=a.T @ weighted, cross=weighted.T @ y)


def _penalty_vector(penalty, P: int) -> np.ndarray:
    try:
        lam = np.broadcast_to(np.asarray(penalty, dtype=float), (P,)).copy()
    except (TypeError, ValueError):
        raise InputError(f"penalty must be a scalar or {P} values, got {penalty!r}") from None
    if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
        raise InputError(f"penalties must be positive and finite, got {lam.tolist()}")
    return lam


class NormalSystem:
    """
    The penalized normal equations of one design at one penalty.

    Solved in the scaled coordinates c = T^(-1/2) b, where the system reads
    (S A^T W A S + I (x) Lambda) c = S A^T W Y with S = T^(1/2) (x) I.
    This keeps the matrix bounded below by min(Lambda) regardless of how
    small the trailing eigenvalues are.
    """

    def __init__(self, design: Design, eigenvalues: np.ndarray, penalty):
        self.design = design
        self.penalty = _penalty_vector(penalty, design.P)
        self.scale = np.repeat(np.sqrt(eigenvalues), design.P)
        self.ridge = np.tile(self.penalty, design.k0)

        self.gram_scaled = self.scale[:, None] * design.gram * self.scale[None, :]
        self.rhs_scaled = self.scale[:, None] * design.cross

        system = self.gram_scaled + np.diag(self.ridge)
        try:
            self._factor = cho_factor(system, lower=True)
        except LinAlgError as e:
            raise NumericalError(
                f"penalized normal matrix is not positive definite: {e}",
                condition=float(np.linalg.cond(system)),
            ) from e

    def solve(self) -> np.ndarray:
        """Coefficient vectors b_v, one column per output, shape ``(P k0, L)``."""
        return self.scale[:, None] * cho_solve(self._factor, self.rhs_scaled)

    def effective_dof(self) -> float:
        """
        Trace of the weighted hat matrix.

        With C = R^(-1/2) B R^(-1/2) for the scaled Gram B and ridge R, the
        trace equals sum mu / (1 + mu) over the eigenvalues mu of C.
        """
        inv_sqrt = 1.0 / np.sqrt(self.ridge)
        c = inv_sqrt[:, None] * self.gram_scaled * inv_sqrt[None, :]
        mu = np.clip(np.linalg.eigvalsh(c), 0.0, None)
        return float(np.sum(mu / (1.0 + mu)))


def coefficients_from_vectors(b_v: np.ndarray, P: int, k0: int) -> np.ndarray:
    """Reshape stacked b_v columns into ``(L, P, k0)`` coefficient matrices."""
    return b_v.T.reshape(-1, k0, P).transpose(0, 2, 1)


def vectors_from_coefficients(coefficients: np.ndarray) -> np.ndarray:
    """Inverse of :func:`coefficients_from_vectors`."""
    L, P, k0 = coefficients.shape
    return coefficients.transpose(0, 2, 1).reshape(L, k0 * P).T


@dataclass(frozen=True)
class FittedModel:
    """
    Estimated coefficient functions beta_lp(u) = sum_k b[l][p][k] v_k(u).

    ``rkhs_norms`` holds ||beta_lp||_K^2 = sum_k b^2 / tau_k per output and
    predictor.
    """

    basis: MercerBasis
    coefficients: np.ndarray  # (L, P, k0)
    penalty: np.ndarray  # (P,)
    objective_value: float = math.nan
    gcv_score: float = math.nan
    dof: float = math.nan
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def L(self) -> int:
        return self.coefficients.shape[0]

    @property
    def P(self) -> int:
        return self.coefficients.shape[1]

    @property
    def k0(self) -> int:
        return self.coefficients.shape[2]

    @property
    def rkhs_norms(self) -> np.ndarray:
        return np.sum(self.coefficients**2 / self.basis.eigenvalues[None, None, :], axis=2)

    def beta(self, points) -> np.ndarray:
        """Coefficient functions at the points, shape ``(N, L, P)``."""
        v = self.basis.eigenfunctions(points)
        return np.einsum("nk,lpk->nlp", v, self.coefficients)


def _weighted_residual_sum(design: Design, b_v: np.ndarray) -> float:
    resid = design.responses - design.matrix @ b_v
    return float(np.sum(design.weights[:, None] * resid * resid))


def _penalty_sum(coefficients: np.ndarray, eigenvalues: np.ndarray, penalty: np.ndarray) -> float:
    return float(np.sum(penalty[None, :, None] * coefficients**2 / eigenvalues[None, None, :]))


def objective(data: Dataset, basis: MercerBasis, penalty, coefficients: np.ndarray) -> float:
    """
    Penalized weighted least-squares objective, summed over outputs.

    sum_ij w_ij (Y_ijl - sum_pk X_ip b_pk v_k(u_ij))^2 + sum_p lambda_p sum_k b_pk^2 / tau_k
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (data.L, data.P, basis.k0):
        raise InputError(
            f"coefficients must have shape {(data.L, data.P, basis.k0)}, got {coefficients.shape}"
        )
    lam = _penalty_vector(penalty, data.P)
    design = build_design(data, basis)
    b_v = vectors_from_coefficients(coefficients)
    return _weighted_residual_sum(design, b_v) + _penalty_sum(coefficients, basis.eigenvalues, lam)


def gcv_from_system(system: NormalSystem, b_v: np.ndarray) -> tuple[float, float]:
    """GCV score and effective dof of a solved system, averaged across outputs."""
    design = system.design
    N = design.matrix.shape[0]
    dof = system.effective_dof()
    if not 1.0 - dof / N > 0:
        raise NumericalError(f"trace(I - H) is not positive (dof={dof:.6g}, N={N})")
    residual = _weighted_residual_sum(design, b_v) / design.responses.shape[1]
    return (residual / N) / (1.0 - dof / N) ** 2, dof


def fit(data: Dataset, basis: MercerBasis, penalty) -> FittedModel:
    """
    Closed-form penalized fit at a fixed diagonal penalty Lambda.

    Args:
        data: The observations.
        basis: Mercer basis of the kernel (its k0 fixes the truncation).
        penalty: One lambda per predictor, or a scalar applied to all.

    Returns:
        FittedModel with objective value, GCV score and effective dof.
    """
    if data.N == 0:
        raise InputError("no observations to fit")
    notes = []
    if basis.k0 > data.N:
        message = f"k0={basis.k0} exceeds the {data.N} observations; fit is data rank-deficient"
        logger.warning(message)
        notes.append(message)
    try:
        h = basis.kernel.decay_exponent
    except InputError:
        h = None
    if h is not None:
        harmonic_m = data.n / float(np.sum(1.0 / data.m))
        needed = recommended_truncation(data.n, harmonic_m, h)
        if basis.k0 < needed:
            message = (
                f"k0={basis.k0} is below the recommended truncation {needed} for n={data.n}, "
                f"m={harmonic_m:.1f}, h={h:g}; truncation bias may dominate"
            )
            logger.warning(message)
            notes.append(message)

    design = build_design(data, basis)
    system = NormalSystem(design, basis.eigenvalues, penalty)
    b_v = system.solve()
    coefficients = coefficients_from_vectors(b_v, data.P, basis.k0)

    value = _weighted_residual_sum(design, b_v) + _penalty_sum(
        coefficients, basis.eigenvalues, system.penalty
    )
    try:
        score, dof = gcv_from_system(system, b_v)
    except NumericalError as e:
        # an interpolating fit is still a valid fit; only its GCV is undefined
        notes.append(str(e))
        score, dof = math.nan, system.effective_dof()
    logger.debug("fit lambda=%s objective=%.6g gcv=%.6g dof=%.3f",
                 system.penalty.tolist(), value, score, dof)
    return FittedModel(
        basis=basis,
        coefficients=coefficients,
        penalty=system.penalty,
        objective_value=value,
        gcv_score=score,
        dof=dof,
        notes=tuple(notes),
    )


def predict(model: FittedModel, x_new, u) -> np.ndarray:
    """Predicted mean response at one location for covariates ``x_new``, shape ``(L,)``."""
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    if x_new.shape != (model.P,):
        raise InputError(f"expected {model.P} covariates, got {x_new.shape[0]}")
    return model.beta(u)[0] @ x_new


def predict_many(model: FittedModel, covariates: np.ndarray, points) -> np.ndarray:
    """Predictions for every (subject, point) pair, shape ``(n, N, L)``."""
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    if covariates.shape[1] != model.P:
        raise InputError(f"expected {model.P} covariate columns, got {covariates.shape[1]}")
    return np.einsum("nlp,ip->inl", model.beta(points), covariates)


@dataclass(frozen=True)
class OracleFit:
    """Untruncated representer-theorem solution beta(.) = sum_j c_j K(., u_j)."""

    kernel: KernelSpec
    centers: np.ndarray
    weights: np.ndarray

    def __call__(self, points) -> np.ndarray:
        return kernel_matrix(self.kernel, points, self.centers) @ self.weights


def representer_oracle_fit(data: Dataset, spec: KernelSpec, lam: float) -> OracleFit:
    """
    Exact minimizer over the full RKHS for a single predictor and output.

    With G the kernel matrix of the observation locations, D = diag(X) and
    W = diag(1/(n m_i)), the normal equations reduce to
    (D W D G + lambda I) c = D W Y. Meant as a small-scale test oracle.

    Raises:
        InputError: for P != 1, L != 1, more than 200 observations or lambda <= 0.
    """
    if data.P != 1 or data.L != 1:
        raise InputError("the representer oracle handles P = 1 and L = 1 only")
    if data.N > ORACLE_MAX_OBSERVATIONS:
        raise InputError(
            f"representer oracle refuses {data.N} observations (limit {ORACLE_MAX_OBSERVATIONS})"
        )
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")

    u = data.locations()
    gram = kernel_matrix(spec, u, u)
    x = data.covariate_rows()[:, 0]
    w = data.weights()
    y = data.responses()[:, 0]
    lhs = (x * w * x)[:, None] * gram + lam * np.eye(data.N)
    c = np.linalg.solve(lhs, x * w * y)
    return OracleFit(kernel=spec, centers=u, weights=c)
