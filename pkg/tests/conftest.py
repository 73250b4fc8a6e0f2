from __future__ import annotations

import pytest

from taxruin import CramerLundberg, TwoSided


@pytest.fixture(scope="session")
def cl_base():
    """The exponential-claims reference model: alpha=1/3, upsilon=2/3, q=1/2."""
    return CramerLundberg(c=1.5, lam=1.0, mu=1.0)


@pytest.fixture(scope="session")
def two_sided():
    return TwoSided(c=1.5, lam=1.0, mu=1.0, lam_minus=0.2, mu_minus=2.0)


class RiggedDraws:
    """Injectable draw stream for deterministic traces."""

    def __init__(self, interarrivals, marks, signs=()):
        self._inter = list(interarrivals)
        self._marks = list(marks)
        self._signs = list(signs)

    def interarrival(self, k):
        return self._inter[k]

    def mark(self, k):
        return self._marks[k]

    def sign(self, k):
        return self._signs[k]


@pytest.fixture
def rigged():
    return RiggedDraws
