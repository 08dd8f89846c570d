"""
FOSR Spectra

Mercer eigensystems. Kernels are discretized on a quadrature rule and
decomposed with the weighted Nyström method; canonical manifolds also have
closed-form Laplace-Beltrami spectra, from which Sobolev kernels are built
directly. Eigenvalue decay and Mercer-tail diagnostics live here too.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.special import gammaln, lpmv

from fosr_core.errors import InputError, NumericalError
from fosr_core.kernels import gram_matrix, kernel_matrix
from fosr_core.models import Domain, DomainKind, KernelFamily, KernelSpec

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-12  # relative to tau_1
PSD_TOLERANCE = 1e-8  # relative to the spectral norm
SIGN_TOLERANCE = 1e-12
ORTHONORMALITY_TOLERANCE = 1e-8  # entrywise, on V^T W V - I


def default_quadrature_size(domain: Domain) -> int:
    """512 Gauss nodes on the line, a 32-per-axis grid in two dimensions."""
    return 512 if domain.intrinsic_dim == 1 else 32


@dataclass(frozen=True)
class Quadrature:
    """Nodes and positive weights discretizing the unit-mass measure of a domain."""

    domain: Domain
    nodes: np.ndarray  # (Q, ambient_dim)
    weights: np.ndarray  # (Q,)

    def __post_init__(self) -> None:
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise InputError("quadrature needs one weight per node")
        if np.any(self.weights <= 0):
            raise InputError("quadrature weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise InputError(f"quadrature weights sum to {self.weights.sum()!r}, expected 1")

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate node values (first axis) against the measure."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def _gauss_legendre_unit(size: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(size)
    return 0.5 * (x + 1.0), 0.5 * w


def build_quadrature(domain: Domain, size: int) -> Quadrature:
    """
    Build a quadrature rule for a domain.

    Args:
        domain: The domain to discretize.
        size: Nodes on the line; nodes per axis for the square and torus;
            colatitude nodes for the sphere (with twice as many longitudes).

    Returns:
        A Quadrature whose weights sum to 1.
    """
    if size < 2:
        raise InputError(f"quadrature size must be >= 2, got {size}")

    if domain.kind is DomainKind.INTERVAL:
        x, w = _gauss_legendre_unit(size)
        nodes, weights = x.reshape(-1, 1), w

    elif domain.kind is DomainKind.SQUARE:
        x, w = _gauss_legendre_unit(size)
        g1, g2 = np.meshgrid(x, x, indexing="ij")
        nodes = np.column_stack([g1.ravel(), g2.ravel()])
        weights = np.outer(w, w).ravel()

    elif domain.kind is DomainKind.TORUS:
        # Uniform periodic grid: exact for trigonometric polynomials of low degree
        x = (np.arange(size) + 0.5) / size
        g1, g2 = np.meshgrid(x, x, indexing="ij")
        nodes = np.column_stack([g1.ravel(), g2.ravel()])
        weights = np.full(size * size, 1.0 / (size * size))

    else:
        z, wz = np.polynomial.legendre.leggauss(size)
        n_lon = 2 * size
        phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        sin_theta = np.sqrt(np.clip(1.0 - zz * zz, 0.0, None))
        nodes = np.column_stack([
            (sin_theta * np.cos(pp)).ravel(),
            (sin_theta * np.sin(pp)).ravel(),
            zz.ravel(),
        ])
        weights = np.outer(0.5 * wz, np.full(n_lon, 1.0 / n_lon)).ravel()

    weights = weights / weights.sum()
    return Quadrature(domain=domain, nodes=nodes, weights=weights)


@dataclass(frozen=True)
class ManifoldSpectrum:
    """
    Closed-form Laplace-Beltrami eigenpairs of a canonical manifold.

    ``modes`` identify the eigenfunctions: ``(k,)`` cosines on the interval,
    ``(k1, k2, c)`` cosine (c=0) / sine (c=1) waves on the torus, ``(l, m)``
    real spherical harmonics on the sphere. Eigenfunctions are orthonormal
    for the unit-mass measure.
    """

    domain: Domain
    eigenvalues: np.ndarray
    modes: tuple[tuple[int, ...], ...]
    zero_count: int

    @property
    def count(self) -> int:
        return len(self.modes)

    def evaluate(self, points) -> np.ndarray:
        """Eigenfunction values, shape ``(N, count)``."""
        pts = self.domain.validate_points(points)
        out = np.empty((pts.shape[0], self.count))

        if self.domain.kind is DomainKind.INTERVAL:
            u = pts[:, 0]
            for j, (k,) in enumerate(self.modes):
                out[:, j] = 1.0 if k == 0 else math.sqrt(2.0) * np.cos(np.pi * k * u)

        elif self.domain.kind is DomainKind.TORUS:
            for j, (k1, k2, c) in enumerate(self.modes):
                if k1 == 0 and k2 == 0:
                    out[:, j] = 1.0
                    continue
                phase = 2.0 * np.pi * (k1 * pts[:, 0] + k2 * pts[:, 1])
                wave = np.cos(phase) if c == 0 else np.sin(phase)
                out[:, j] = math.sqrt(2.0) * wave

        else:
            z = np.clip(pts[:, 2], -1.0, 1.0)
            phi = np.arctan2(pts[:, 1], pts[:, 0])
            for j, (l, m) in enumerate(self.modes):
                am = abs(m)
                norm = math.sqrt((2 * l + 1) * math.exp(gammaln(l - am + 1) - gammaln(l + am + 1)))
                legendre = lpmv(am, l, z)
                if m == 0:
                    out[:, j] = norm * legendre
                elif m > 0:
                    out[:, j] = math.sqrt(2.0) * norm * legendre * np.cos(am * phi)
                else:
                    out[:, j] = math.sqrt(2.0) * norm * legendre * np.sin(am * phi)
        return out


def _torus_modes(count: int) -> list[tuple[int, int, int]]:
    radius = 1
    while True:
        modes = [(0, 0, 0)]
        for k1 in range(0, radius + 1):
            for k2 in range(-radius, radius + 1):
                # one representative of each +/- pair
                if k1 == 0 and k2 <= 0:
                    continue
                if k1 * k1 + k2 * k2 <= radius * radius:
                    modes.extend([(k1, k2, 0), (k1, k2, 1)])
        if len(modes) >= count:
            modes.sort(key=lambda mode: (mode[0] ** 2 + mode[1] ** 2, mode[0], mode[1], mode[2]))
            return modes[:count]
        radius *= 2


def analytic_laplacian_spectrum(domain: Domain, count: int) -> ManifoldSpectrum:
    """
    The first ``count`` Laplace-Beltrami eigenpairs, ascending.

    Interval (Neumann): xi = (pi k)^2 with cosines. Flat torus:
    xi = (2 pi)^2 (k1^2 + k2^2) with sine/cosine pairs. Sphere: xi = l(l+1)
    with multiplicity 2l+1. Ties are ordered lexicographically by mode index.

    Raises:
        InputError: for the square (no closed-form spectrum is provided) or count < 1.
    """
    if count < 1:
        raise InputError(f"spectrum count must be >= 1, got {count}")

    if domain.kind is DomainKind.INTERVAL:
        modes: list[tuple[int, ...]] = [(k,) for k in range(count)]
        eigenvalues = np.array([(np.pi * k) ** 2 for (k,) in modes])
    elif domain.kind is DomainKind.TORUS:
        modes = list(_torus_modes(count))
        eigenvalues = np.array([(2.0 * np.pi) ** 2 * (k1 * k1 + k2 * k2) for k1, k2, _ in modes])
    elif domain.kind is DomainKind.SPHERE:
        modes = []
        l = 0
        while len(modes) < count:
            modes.extend((l, m) for m in range(-l, l + 1))
            l += 1
        modes = modes[:count]
        eigenvalues = np.array([float(l * (l + 1)) for l, _ in modes])
    else:
        raise InputError(f"no analytic Laplacian spectrum for the {domain} domain")

    zero_count = int(np.sum(eigenvalues == 0.0))
    return ManifoldSpectrum(domain, eigenvalues, tuple(modes), zero_count)


@dataclass(frozen=True)
class MercerBasis:
    """
    A truncated Mercer expansion K(u, s) ~ sum_k tau_k v_k(u) v_k(s).

    Eigenfunctions come either from Nyström extension of the node
    eigenvectors or, for Sobolev kernels, from the closed-form spectrum.
    """

    kernel: KernelSpec
    quadrature: Quadrature
    eigenvalues: np.ndarray  # (k0,), descending
    node_eigenvectors: np.ndarray  # (Q, k0)
    requested_k0: int
    spectrum: ManifoldSpectrum | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def k0(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def domain(self) -> Domain:
        return self.kernel.domain

    @property
    def truncated(self) -> bool:
        return self.k0 < self.requested_k0

    def eigenfunctions(self, points) -> np.ndarray:
        """Values v_k(u) for each point, shape ``(N, k0)``."""
        if self.spectrum is not None:
            return self.spectrum.evaluate(points)[:, : self.k0]
        cross = kernel_matrix(self.kernel, points, self.quadrature.nodes)
        weighted = self.quadrature.weights[:, None] * self.node_eigenvectors
        return (cross @ weighted) / self.eigenvalues[None, :]

    def kernel_values(self, a, b) -> np.ndarray:
        """Truncated-expansion kernel values between two point sets."""
        fa = self.eigenfunctions(a)
        fb = self.eigenfunctions(b)
        return (fa * self.eigenvalues[None, :]) @ fb.T

    def orthonormality_error(self) -> float:
        """Max entrywise deviation of V^T diag(w) V from the identity."""
        v = self.node_eigenvectors
        gram = v.T @ (self.quadrature.weights[:, None] * v)
        return float(np.max(np.abs(gram - np.eye(self.k0))))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of every column positive."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        scale = np.max(np.abs(col))
        if scale == 0:
            continue
        first = int(np.argmax(np.abs(col) > SIGN_TOLERANCE * scale))
        if col[first] < 0:
            out[:, k] = -col
    return out


def nystrom_decompose(
    spec: KernelSpec, quad: Quadrature, k0: int, warn_on_floor: bool = True
) -> MercerBasis:
    """
    Weighted Nyström decomposition of the kernel integral operator.

    Eigendecomposes W^(1/2) G W^(1/2) on the quadrature nodes, keeps the
    top ``k0`` eigenpairs and rescales the eigenvectors so that
    V^T W V = I. Eigenvalues below 1e-12 tau_1 are dropped and the
    reduction is recorded on the result; it is also logged as a warning
    unless ``warn_on_floor`` is False, for callers that treat k0 as a cap.

    Raises:
        InputError: if k0 is out of range or the kernel is sobolev-spectral.
        NumericalError: if the weighted Gram matrix is not positive semidefinite.
    """
    if spec.family is KernelFamily.SOBOLEV_SPECTRAL:
        raise InputError("sobolev kernels are built with sobolev_kernel_from_spectrum")
    if spec.domain != quad.domain:
        raise InputError(f"kernel domain {spec.domain} does not match quadrature domain {quad.domain}")
    if not 1 <= k0 <= quad.size:
        raise InputError(f"k0 must be in [1, {quad.size}], got {k0}")

    sqrt_w = np.sqrt(quad.weights)
    gram = gram_matrix(spec, quad.nodes)
    weighted = sqrt_w[:, None] * gram * sqrt_w[None, :]

    values, vectors = eigh(weighted)
    scale = max(abs(values[0]), abs(values[-1]))
    if scale == 0 or values[0] < -PSD_TOLERANCE * scale:
        raise NumericalError(
            f"weighted Gram matrix of {spec.describe()} is not positive semidefinite "
            f"(smallest eigenvalue {values[0]:.3e}, largest {values[-1]:.3e})"
        )

    top = values[::-1][:k0]
    vectors = vectors[:, ::-1][:, :k0]
    keep = int(np.sum(top > EIGENVALUE_FLOOR * top[0]))
    notes: tuple[str, ...] = ()
    if keep < k0:
        message = (
            f"{spec.describe()}: only {keep} of {k0} eigenvalues exceed "
            f"{EIGENVALUE_FLOOR:g} * tau_1; k0 reduced to {keep}"
        )
        logger.log(logging.WARNING if warn_on_floor else logging.DEBUG, message)
        notes = (message,)

    node_vectors = _fix_signs(vectors[:, :keep] / sqrt_w[:, None])
    logger.debug("nystrom %s: %d nodes, k0=%d, tau_1=%.4g", spec.describe(), quad.size, keep, top[0])
    return MercerBasis(
        kernel=spec,
        quadrature=quad,
        eigenvalues=top[:keep].copy(),
        node_eigenvectors=node_vectors,
        requested_k0=k0,
        notes=notes,
    )


def nystrom_extend(basis: MercerBasis, u) -> np.ndarray:
    """
    Evaluate every eigenfunction of a basis at one point.

    For a Nyström basis this is v_k(u) = (1/tau_k) sum_q w_q K(u, s_q) V[q][k],
    which reproduces the node eigenvectors at the nodes.
    """
    return basis.eigenfunctions(u)[0]


def sobolev_kernel_from_spectrum(
    spectrum: ManifoldSpectrum,
    r: float,
    count: int,
    quadrature: Quadrature | None = None,
) -> MercerBasis:
    """
    Sobolev kernel of order r built from a Laplacian spectrum.

    tau_k = 1 on the null space of the Laplacian and xi_k^(-r) beyond it; the
    eigenfunctions are those of the spectrum.

    Raises:
        InputError: if 2r <= d, if more eigenpairs are requested than available,
            or if the quadrature cannot resolve them (fewer nodes than modes, or
            V^T W V off the identity by more than 1e-8).
    """
    spec = KernelSpec.sobolev(r, spectrum.domain)
    if not 1 <= count <= spectrum.count:
        raise InputError(f"count must be in [1, {spectrum.count}], got {count}")

    xi = spectrum.eigenvalues[:count]
    tau = np.ones(count)
    tail = np.arange(count) >= spectrum.zero_count
    tau[tail] = xi[tail] ** (-float(r))

    if quadrature is None:
        quadrature = build_quadrature(spectrum.domain, default_quadrature_size(spectrum.domain))
    if quadrature.domain != spectrum.domain:
        raise InputError(f"quadrature domain {quadrature.domain} does not match spectrum domain {spectrum.domain}")
    if count > quadrature.size:
        raise InputError(f"count must not exceed the {quadrature.size} quadrature nodes, got {count}")

    trimmed = ManifoldSpectrum(
        spectrum.domain, spectrum.eigenvalues[:count], spectrum.modes[:count],
        min(spectrum.zero_count, count),
    )
    basis = MercerBasis(
        kernel=spec,
        quadrature=quadrature,
        eigenvalues=tau,
        node_eigenvectors=trimmed.evaluate(quadrature.nodes),
        requested_k0=count,
        spectrum=trimmed,
    )
    error = basis.orthonormality_error()
    if error > ORTHONORMALITY_TOLERANCE:
        raise InputError(
            f"{quadrature.size} quadrature nodes do not resolve {count} {spectrum.domain} "
            f"eigenfunctions (orthonormality error {error:.2e}); increase the quadrature size"
        )
    return basis


def build_basis(spec: KernelSpec, quad_size: int, k0: int) -> MercerBasis:
    """Build the Mercer basis of any supported kernel on a default-shaped quadrature."""
    quad = build_quadrature(spec.domain, quad_size)
    if spec.family is KernelFamily.SOBOLEV_SPECTRAL:
        spectrum = analytic_laplacian_spectrum(spec.domain, k0)
        return sobolev_kernel_from_spectrum(spectrum, spec.smoothness, k0, quad)
    return nystrom_decompose(spec, quad, k0)


@dataclass(frozen=True)
class SlopeFit:
    """Ordinary least-squares fit of log(y) on log(x)."""

    slope: float
    stderr: float
    intercept: float
    n_points: int

    @property
    def h_hat(self) -> float:
        """Decay exponent implied by an eigenvalue slope (tau_k ~ k^(-2h))."""
        return -self.slope / 2.0


def loglog_fit(x, y) -> SlopeFit:
    """
    Fit log(y) = a + slope * log(x) by least squares.

    Raises:
        InputError: if fewer than 3 points or any value is non-positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise InputError(f"log-log fit needs at least 3 paired points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InputError("log-log fit needs strictly positive values")

    lx, ly = np.log(x), np.log(y)
    mx, my = lx.mean(), ly.mean()
    sxx = np.sum((lx - mx) ** 2)
    if sxx == 0:
        raise InputError("log-log fit needs at least two distinct x values")
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    dof = x.size - 2
    stderr = float(math.sqrt(max(np.sum(resid**2), 0.0) / dof / sxx))
    return SlopeFit(slope=slope, stderr=stderr, intercept=intercept, n_points=int(x.size))


def decay_slope(values, fit_range: tuple[int, int] | None = None) -> SlopeFit:
    """
    Log-log slope of a positive sequence against its 1-based index.

    Args:
        values: The sequence (eigenvalues, say).
        fit_range: Inclusive 1-based index interval; the whole sequence if None.
    """
    values = np.asarray(values, dtype=float)
    start, stop = fit_range or (1, values.size)
    if start < 1 or stop > values.size or stop - start + 1 < 3:
        raise InputError(
            f"fit range [{start}, {stop}] must lie within 1..{values.size} and cover >= 3 indices"
        )
    k = np.arange(start, stop + 1, dtype=float)
    return loglog_fit(k, values[start - 1 : stop])


@dataclass(frozen=True)
class MercerTailReport:
    """Per-term sup bounds c_k = max tau_k |v_k(u) v_k(s)| over a probe grid."""

    values: np.ndarray
    first_quartile_max: float
    last_quartile_max: float

    @property
    def decaying(self) -> bool:
        return self.last_quartile_max < self.first_quartile_max


def mercer_tail_diagnostic(basis: MercerBasis, probe_grid) -> MercerTailReport:
    """
    Sup-norm size of each Mercer term over a probe grid.

    Uniform convergence of the Mercer series predicts c_k -> 0; the report
    compares the largest term in the last quartile of k with the first.
    """
    probes = basis.domain.validate_points(probe_grid)
    if probes.shape[0] == 0:
        raise InputError("probe grid is empty")
    sup = np.max(np.abs(basis.eigenfunctions(probes)), axis=0)
    c = basis.eigenvalues * sup * sup
    q = max(1, basis.k0 // 4)
    return MercerTailReport(
        values=c,
        first_quartile_max=float(np.max(c[:q])),
        last_quartile_max=float(np.max(c[-q:])),
    )
