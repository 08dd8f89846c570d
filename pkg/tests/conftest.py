"""
Shared fixtures for the FOSR test suite.
"""

import numpy as np
import pytest

from fosr_core.models import Dataset, Domain, DomainKind, Subject


@pytest.fixture
def make_dataset():
    """Factory for small random datasets with responses from a callable beta."""

    def factory(n=6, m=5, P=1, domain=None, beta=None, noise=0.0, seed=0, L=1):
        domain = domain or Domain(DomainKind.INTERVAL)
        rng = np.random.default_rng(seed)
        subjects = []
        for i in range(n):
            x = rng.normal(1.0, 1.0, size=P)
            u = domain.sample_uniform(rng, m)
            if beta is None:
                y = rng.normal(size=(m, L))
            else:
                # beta(u) -> (m, L, P)
                y = np.einsum("mlp,p->ml", beta(u), x) + noise * rng.normal(size=(m, L))
            subjects.append(Subject(str(i + 1), x, u, y))
        return Dataset(domain, subjects)

    return factory
