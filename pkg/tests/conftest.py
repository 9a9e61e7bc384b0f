from __future__ import annotations

import numpy as np
import pytest

from ridepool.grouping import GroupCatalog
from ridepool.model import make_instance


def small_instance(U=2, V=2, T=3, kappa=1, b=2, occ=1, weight=1.0, probs=None, relax=False):
    """Uniform-ish instance with constant weights and occupancy."""
    cat = GroupCatalog.full(V, kappa)
    p = np.full((T, V), 1.0 / V) if probs is None else np.asarray(probs, dtype=float)
    return make_instance(
        kappa=kappa,
        batch_sizes=[b] * T if np.isscalar(b) else b,
        probs=p,
        weights=np.full((U, len(cat), T), float(weight)),
        occupancy=occ,
        catalog=cat,
        relax_batch_assumption=relax,
    )


@pytest.fixture
def two_by_two():
    return small_instance(U=2, V=2, T=3, kappa=1, b=2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
