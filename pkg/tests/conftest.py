"""Shared fixtures: small hierarchies, random panels, random SPD matrices."""

import numpy as np
import pytest

from htsdyn.hierarchy import build_hierarchy, panel_from_bottom, summing_matrix


FIG1_EDGES = [("T", "R1"), ("T", "R2")] + [
    (f"R{r}", f"R{r}_D{d}") for r in (1, 2) for d in range(1, 7)
]


@pytest.fixture
def hier3():
    """Smallest branching hierarchy: one top, two leaves."""
    return build_hierarchy([("T", "A"), ("T", "B")])


@pytest.fixture
def hier7():
    """Three levels: top, two mids, four leaves."""
    return build_hierarchy(
        [("T", "M1"), ("T", "M2"), ("M1", "A"), ("M1", "B"), ("M2", "C"), ("M2", "D")]
    )


@pytest.fixture
def hier15():
    """The default 1-top / 2-retailer / 12-DC shape."""
    return build_hierarchy(FIG1_EDGES)


def random_spd(m: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((m, m))
    return A @ A.T + m * np.eye(m)


def random_panel(hier, n_weeks: int, rng: np.random.Generator):
    """Coherent panel with lognormal bottom sales and prices."""
    m_k = len(hier.bottom_ids)
    sales = np.exp(rng.normal(3.0, 0.4, size=(m_k, n_weeks)))
    price = np.exp(rng.normal(2.0, 0.1, size=(m_k, n_weeks)))
    return panel_from_bottom(hier, sales, price)


def assert_coherent(rec, S, rtol=1e-8):
    resid = np.abs(rec.values - S @ rec.bottom_estimates)
    scale = np.maximum(np.abs(rec.values), 1.0)
    assert np.max(resid / scale) <= rtol


@pytest.fixture
def make_spd():
    return random_spd


@pytest.fixture
def make_panel():
    return random_panel
