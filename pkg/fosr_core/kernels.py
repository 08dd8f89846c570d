"""
FOSR Kernels

Special functions, domain metrics and kernel evaluation: the modified
Bessel function of the second kind, the Matérn family, and Euclidean,
wraparound and geodesic distances on the supported domains.
"""

import logging
import warnings

import numpy as np
from scipy.special import gammaln, kve

from fosr_core.errors import BesselSaturationWarning, DomainError, InputError
from fosr_core.models import Domain, DomainKind, KernelFamily, KernelSpec

logger = logging.getLogger(__name__)

BESSEL_SATURATION = float(np.finfo(float).max)


def bessel_k(order: float, argument: float) -> float:
    """
    Modified Bessel function of the second kind K_nu(x).

    Computed from the exponentially scaled ``kve`` so large arguments do not
    underflow early. When K_nu(x) exceeds the double range (tiny x, large
    nu) the result saturates at ``BESSEL_SATURATION`` and a
    ``BesselSaturationWarning`` is emitted.

    Raises:
        DomainError: if order or argument is not strictly positive.
    """
    if not order > 0:
        raise DomainError(f"bessel_k order must be > 0, got {order}")
    if not argument > 0:
        raise DomainError(f"bessel_k argument must be > 0, got {argument}")

    with np.errstate(over="ignore"):
        value = float(kve(order, argument) * np.exp(-argument))
    if not np.isfinite(value):
        warnings.warn(
            f"K_{order:g}({argument:g}) overflows; saturated", BesselSaturationWarning, stacklevel=2
        )
        return BESSEL_SATURATION
    return value


def matern(nu: float, rho: float, t) -> np.ndarray:
    """
    Vectorized Matérn correlation (2^(1-nu)/Gamma(nu)) s^nu K_nu(s), s = sqrt(2 nu) t / rho.

    Evaluated in log space with the scaled Bessel function, which keeps the
    product finite at both ends; the t = 0 limit is exactly 1.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("matern distance must be non-negative")
    s = (np.sqrt(2.0 * nu) / rho) * t.reshape(-1)
    out = np.ones_like(s)
    pos = s > 0
    if pos.any():
        sp = s[pos]
        log_scale = (1.0 - nu) * np.log(2.0) - gammaln(nu) + nu * np.log(sp) - sp
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.exp(log_scale) * kve(nu, sp)
        # kve overflows only for s so small that the limit value 1 is exact to double precision
        vals = np.where(np.isfinite(vals), vals, 1.0)
        out[pos] = np.minimum(vals, 1.0)
    return out.reshape(t.shape)


def matern_eval(spec: KernelSpec, t: float) -> float:
    """Matérn kernel value at distance ``t`` for a Matérn spec."""
    if spec.family is not KernelFamily.MATERN:
        raise InputError(f"matern_eval needs a matern spec, got {spec.family.value}")
    if t < 0:
        raise DomainError(f"distance must be non-negative, got {t}")
    return float(matern(spec.smoothness, spec.range, np.array([t]))[0])


def pairwise_distances(domain: Domain, a, b) -> np.ndarray:
    """Distances between every point of ``a`` and every point of ``b``, shape ``(len(a), len(b))``."""
    a = domain.validate_points(a)
    b = domain.validate_points(b)

    if domain.kind is DomainKind.SPHERE:
        cos = np.clip(a @ b.T, -1.0, 1.0)
        return np.arccos(cos)

    diff = np.abs(a[:, None, :] - b[None, :, :])
    if domain.kind is DomainKind.TORUS:
        diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def distance(domain: Domain, p, q) -> float:
    """
    Distance between two points of a domain.

    Euclidean on the interval and square, per-coordinate wraparound on the
    torus, great-circle arc on the sphere.
    """
    return float(pairwise_distances(domain, p, q)[0, 0])


def kernel_matrix(spec: KernelSpec, a, b) -> np.ndarray:
    """Cross-kernel matrix ``K(a_i, b_j)``."""
    domain = spec.domain
    if spec.family is KernelFamily.MATERN:
        return matern(spec.smoothness, spec.range, pairwise_distances(domain, a, b))

    a = domain.validate_points(a)
    b = domain.validate_points(b)
    if spec.family is KernelFamily.BROWNIAN:
        return np.minimum(a[:, 0][:, None], b[:, 0][None, :])
    if spec.family is KernelFamily.CONSTANT:
        return np.ones((a.shape[0], b.shape[0]))
    raise InputError(
        "sobolev-spectral kernels are defined by their spectrum; "
        "evaluate them through a MercerBasis"
    )


def gram_matrix(spec: KernelSpec, points) -> np.ndarray:
    """
    Symmetric Gram matrix ``G[a][b] = K(p_a, p_b)``.

    Raises:
        InputError: if no points are given.
    """
    points = spec.domain.validate_points(points)
    if points.shape[0] == 0:
        raise InputError("gram_matrix needs at least one point")
    g = kernel_matrix(spec, points, points)
    return 0.5 * (g + g.T)
