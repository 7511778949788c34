from __future__ import annotations

import math

import numpy as np
import pytest

from moran_coexist.errors import ConfigError, TruncatedRunError
from moran_coexist.schemas.models import Species
from moran_coexist.tools.sde import (
    dstar_path,
    simulate_dstar,
    simulate_dstar_batch,
    simulate_mstar,
    simulate_mstar_batch,
)


def test_mstar_starts_on_boundary():
    rng = np.random.default_rng(0)
    assert simulate_mstar(0.0, 0.5, 1e-3, rng) == (0, 0.0)
    assert simulate_mstar(1.0, 0.5, 1e-3, rng) == (1, 0.0)
    assert simulate_mstar(0.6, 0.7, 1e-3, rng) == (1, 0.0)


def test_mstar_rejects_bad_step():
    with pytest.raises(ConfigError):
        simulate_mstar(0.3, 0.5, 0.0, np.random.default_rng(0))


def test_mstar_step_cap():
    with pytest.raises(TruncatedRunError):
        simulate_mstar(0.5, 0.5, 1e-4, np.random.default_rng(0), max_steps=3)


def test_mstar_batch_matches_symmetric_formulas():
    dt = 1e-4
    where, taus = simulate_mstar_batch(1 / 3, 0.5, dt, 2000, master_seed=17, workers=4)
    n = where.size
    # discrete monitoring of the absorbing ends shifts both estimates by O(sqrt(dt))
    bias = math.sqrt(dt)
    p_lower = float(np.mean(where == 0))
    assert abs(p_lower - 4 / 9) <= 3 * math.sqrt(4 / 9 * 5 / 9 / n) + bias
    assert abs(taus.mean() - 0.5064) <= 3 * taus.std(ddof=1) / math.sqrt(n) + bias
    assert np.all(taus > 0.0)
    assert set(np.unique(where)) <= {0, 1}
    assert n == 2000


def test_mstar_batch_reproducible():
    a = simulate_mstar_batch(0.4, 0.6, 1e-3, 32, master_seed=3, workers=1)
    b = simulate_mstar_batch(0.4, 0.6, 1e-3, 32, master_seed=3, workers=4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_dstar_symmetric_fixation():
    fixed, taus = simulate_dstar_batch(0.0, 0.5, 4, 1e-3, 1000, master_seed=9, workers=2)
    p_c = sum(f is Species.C for f in fixed) / len(fixed)
    assert abs(p_c - 0.5) <= 4 * math.sqrt(0.25 / len(fixed))
    assert np.all(taus > 0.0)


def test_dstar_tilted_start_favours_its_side():
    fixed, _ = simulate_dstar_batch(0.5, 0.5, 4, 1e-3, 1000, master_seed=10)
    assert sum(f is Species.C for f in fixed) / len(fixed) > 0.5


def test_dstar_single_path_outcome():
    species, tau = simulate_dstar(0.2, 0.5, 4, 1e-3, np.random.default_rng(1))
    assert species in (Species.C, Species.H)
    assert tau > 0.0


@pytest.mark.parametrize("q, centre", [(0.5, 0.0), (0.7, 0.4)])
def test_dstar_path_stationary_moments(q, centre):
    N = 50
    path = dstar_path(centre, q, N, 1e-2, 200_000, np.random.default_rng(21))
    tail = path[1000:]
    expected_var = (2.0 - 2.0 * centre * centre) / N / 2.0
    assert tail.mean() == pytest.approx(centre, abs=0.03)
    assert tail.var() == pytest.approx(expected_var, rel=0.2)
