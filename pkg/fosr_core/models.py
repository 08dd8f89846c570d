"""
FOSR Data Models

Core value types: the observation domains, kernel specifications, and the
subject-by-subject dataset the regression is fitted to.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from fosr_core.errors import DomainError, InputError

SPHERE_TOLERANCE = 1e-9


class DomainKind(Enum):
    """Supported compact observation domains."""

    INTERVAL = "interval"  # [0, 1]
    SQUARE = "square"  # [0, 1]^2
    SPHERE = "sphere"  # S^2 embedded in R^3
    TORUS = "torus"  # flat torus, unit square with periodic edges


_INTRINSIC_DIM = {
    DomainKind.INTERVAL: 1,
    DomainKind.SQUARE: 2,
    DomainKind.SPHERE: 2,
    DomainKind.TORUS: 2,
}

_AMBIENT_DIM = {
    DomainKind.INTERVAL: 1,
    DomainKind.SQUARE: 2,
    DomainKind.SPHERE: 3,
    DomainKind.TORUS: 2,
}


@dataclass(frozen=True)
class Domain:
    """A compact domain equipped with its unit-mass uniform measure."""

    kind: DomainKind

    @classmethod
    def parse(cls, name: str) -> "Domain":
        """Build a domain from its name (``interval``, ``square``, ``sphere``, ``torus``)."""
        try:
            return cls(DomainKind(name.strip().lower()))
        except ValueError:
            choices = ", ".join(k.value for k in DomainKind)
            raise InputError(f"unknown domain '{name}' (expected one of: {choices})") from None

    @property
    def intrinsic_dim(self) -> int:
        return _INTRINSIC_DIM[self.kind]

    @property
    def ambient_dim(self) -> int:
        """Number of coordinates used to write a point."""
        return _AMBIENT_DIM[self.kind]

    @property
    def name(self) -> str:
        return self.kind.value

    def validate_points(self, points) -> np.ndarray:
        """
        Check a batch of points and return them as an ``(N, ambient_dim)`` array.

        Torus coordinates are reduced modulo 1. A single point may be passed as
        a flat vector.

        Raises:
            DomainError: with ``index`` set to the first offending point.
        """
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 0 or (arr.ndim == 1 and self.ambient_dim > 1):
            arr = arr.reshape(1, -1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[1] != self.ambient_dim:
            raise DomainError(
                f"{self.name} points need {self.ambient_dim} coordinate(s), got shape {arr.shape}",
                reason="wrong coordinate count",
            )

        bad_finite = ~np.all(np.isfinite(arr), axis=1)
        if bad_finite.any():
            idx = int(np.argmax(bad_finite))
            raise DomainError(f"point {idx}: non-finite coordinate", index=idx,
                              reason="non-finite coordinate")

        if self.kind is DomainKind.TORUS:
            return np.mod(arr, 1.0)

        if self.kind is DomainKind.SPHERE:
            off = np.abs(np.linalg.norm(arr, axis=1) - 1.0) > SPHERE_TOLERANCE
            if off.any():
                idx = int(np.argmax(off))
                raise DomainError(f"point {idx}: point not on sphere", index=idx,
                                  reason="point not on sphere")
            return arr

        outside = np.any((arr < 0.0) | (arr > 1.0), axis=1)
        if outside.any():
            idx = int(np.argmax(outside))
            raise DomainError(f"point {idx}: coordinate outside [0, 1]", index=idx,
                              reason="coordinate outside [0, 1]")
        return arr

    def sample_uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` points i.i.d. from the uniform measure on the domain."""
        if self.kind is DomainKind.SPHERE:
            z = rng.standard_normal((size, 3))
            return z / np.linalg.norm(z, axis=1, keepdims=True)
        return rng.random((size, self.ambient_dim))

    def __str__(self) -> str:
        return self.name


class KernelFamily(Enum):
    """Kernel families understood by the library."""

    MATERN = "matern"
    SOBOLEV_SPECTRAL = "sobolev-spectral"
    # Reference kernels with known Mercer expansions, used as oracles.
    BROWNIAN = "brownian"
    CONSTANT = "constant"


@dataclass(frozen=True)
class KernelSpec:
    """
    A reproducing kernel and its hyperparameters.

    ``smoothness`` is the Matérn nu or the Sobolev order r; ``range`` is the
    Matérn length scale rho and is ignored by the other families.
    """

    family: KernelFamily
    domain: Domain
    smoothness: float = 1.5
    range: float = 1.0

    def __post_init__(self) -> None:
        if self.family is KernelFamily.MATERN:
            if not self.smoothness > 0 or not self.range > 0:
                raise InputError(
                    f"matern kernel needs nu > 0 and rho > 0 (got nu={self.smoothness}, "
                    f"rho={self.range})"
                )
        elif self.family is KernelFamily.SOBOLEV_SPECTRAL:
            if self.smoothness < 1:
                raise InputError(f"sobolev order r must be >= 1 (got {self.smoothness})")
            if 2 * self.smoothness <= self.domain.intrinsic_dim:
                raise InputError(
                    f"sobolev kernel needs 2r > d (r={self.smoothness}, "
                    f"d={self.domain.intrinsic_dim})"
                )
        elif self.family is KernelFamily.BROWNIAN and self.domain.kind is not DomainKind.INTERVAL:
            raise InputError("the brownian min-kernel is only defined on the interval")

    @classmethod
    def matern(cls, nu: float, rho: float, domain: Domain) -> "KernelSpec":
        return cls(KernelFamily.MATERN, domain, float(nu), float(rho))

    @classmethod
    def sobolev(cls, r: float, domain: Domain) -> "KernelSpec":
        return cls(KernelFamily.SOBOLEV_SPECTRAL, domain, float(r), 1.0)

    @property
    def decay_exponent(self) -> float:
        """
        The exponent h in tau_k ~ k^(-2h).

        Matérn kernels on a d-dimensional domain decay like k^(-(2 nu + d)/d),
        Sobolev kernels like k^(-2r/d).
        """
        d = self.domain.intrinsic_dim
        if self.family is KernelFamily.MATERN:
            return self.smoothness / d + 0.5
        if self.family is KernelFamily.SOBOLEV_SPECTRAL:
            return self.smoothness / d
        if self.family is KernelFamily.BROWNIAN:
            return 1.0
        raise InputError(f"{self.family.value} kernel has no polynomial eigenvalue decay")

    def describe(self) -> str:
        if self.family is KernelFamily.MATERN:
            return f"matern(nu={self.smoothness:g}, rho={self.range:g}) on {self.domain}"
        if self.family is KernelFamily.SOBOLEV_SPECTRAL:
            return f"sobolev(r={self.smoothness:g}) on {self.domain}"
        return f"{self.family.value} on {self.domain}"


@dataclass
class Subject:
    """One sampled curve: covariates and its scattered observations."""

    subject_id: str
    covariates: np.ndarray  # (P,)
    locations: np.ndarray  # (m_i, ambient_dim)
    responses: np.ndarray  # (m_i, L)

    def __post_init__(self) -> None:
        self.covariates = np.atleast_1d(np.asarray(self.covariates, dtype=float))
        self.locations = np.asarray(self.locations, dtype=float)
        if self.locations.ndim == 1:
            self.locations = self.locations.reshape(-1, 1)
        self.responses = np.asarray(self.responses, dtype=float)
        if self.responses.ndim == 1:
            self.responses = self.responses.reshape(-1, 1)

    @property
    def m(self) -> int:
        return self.locations.shape[0]


@dataclass
class Dataset:
    """
    Covariates and observations for n subjects on a common domain.

    Observation-level arrays are stacked subject by subject, preserving the
    within-subject order.
    """

    domain: Domain
    subjects: list[Subject] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.subjects:
            raise InputError("dataset has no subjects")
        p = self.subjects[0].covariates.shape[0]
        out = self.subjects[0].responses.shape[1]
        if p < 1 or out < 1:
            raise InputError("dataset needs at least one covariate and one response")
        for subject in self.subjects:
            sid = subject.subject_id
            if subject.m < 1:
                raise InputError(f"subject {sid} has no observations")
            if subject.responses.shape != (subject.m, out):
                raise InputError(
                    f"subject {sid}: expected {subject.m}x{out} responses, "
                    f"got {subject.responses.shape}"
                )
            if subject.covariates.shape != (p,):
                raise InputError(f"subject {sid}: expected {p} covariates")
            if not np.all(np.isfinite(subject.responses)):
                raise InputError(f"subject {sid}: non-finite response")
            if not np.all(np.isfinite(subject.covariates)):
                raise InputError(f"subject {sid}: non-finite covariate")
            try:
                subject.locations = self.domain.validate_points(subject.locations)
            except DomainError as e:
                raise InputError(f"subject {sid}: {e}") from e

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def P(self) -> int:
        return self.subjects[0].covariates.shape[0]

    @property
    def L(self) -> int:
        return self.subjects[0].responses.shape[1]

    @property
    def m(self) -> np.ndarray:
        """Per-subject observation counts m_i."""
        return np.array([s.m for s in self.subjects], dtype=int)

    @property
    def N(self) -> int:
        return int(self.m.sum())

    def locations(self) -> np.ndarray:
        return np.vstack([s.locations for s in self.subjects])

    def responses(self) -> np.ndarray:
        return np.vstack([s.responses for s in self.subjects])

    def covariate_matrix(self) -> np.ndarray:
        """Subject-level covariates, shape ``(n, P)``."""
        return np.vstack([s.covariates for s in self.subjects])

    def covariate_rows(self) -> np.ndarray:
        """Covariates repeated per observation, shape ``(N, P)``."""
        return np.repeat(self.covariate_matrix(), self.m, axis=0)

    def weights(self) -> np.ndarray:
        """Observation weights 1/(n m_i); they sum to 1."""
        m = self.m
        return np.repeat(1.0 / (self.n * m), m)

    def __len__(self) -> int:
        return self.n

    def __str__(self) -> str:
        return f"Dataset({self.domain}, n={self.n}, N={self.N}, P={self.P}, L={self.L})"
