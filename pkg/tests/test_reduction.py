from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from moran_coexist.errors import DomainError, NearSingularError, SingularPointError
from moran_coexist.schemas.models import FlowOptions, ScaledPoint
from moran_coexist.tools.flow import integrate_flow, project_mstar
from moran_coexist.tools.reduction import (
    c_partials,
    drift_cancellation_residual,
    drift_cancellation_terms,
    dstar_coefficients,
    gamma_coefficients,
    gamma_coefficients_grid,
    gamma_upper_boundary,
    ito_coefficients,
    mstar_partials,
    mstar_raw,
    symmetric_explicit_coeffs,
)

Q_VALUES = st.sampled_from([0.3, 0.5, 0.7])


@st.composite
def well_inside(draw):
    """Interior points kept away from the edges and from m* = A."""
    q = draw(Q_VALUES)
    d = draw(st.floats(min_value=-0.8, max_value=0.8))
    m = draw(st.floats(min_value=0.05, max_value=0.9 * (1.0 - abs(d))))
    a = 4.0 * q * (1.0 - q)
    assume(a - mstar_raw(d, m, q) > 0.05)
    return d, m, q


@given(well_inside())
@settings(max_examples=600)
def test_first_order_drift_cancels(point):
    d, m, q = point
    t_d, t_m = drift_cancellation_terms(d, m, q)
    scale = max(1.0, abs(t_d) + abs(t_m))
    assert abs(drift_cancellation_residual(d, m, q)) <= 1e-10 * scale


def _fd(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


@given(well_inside())
@settings(max_examples=200)
def test_mstar_partials_match_finite_differences(point):
    d, m, q = point
    h = 1e-6
    p = mstar_partials(d, m, q)
    fd_first = (
        _fd(lambda u: mstar_raw(u, m, q), d, h),
        _fd(lambda v: mstar_raw(d, v, q), m, h),
    )
    np.testing.assert_allclose(p.first(), fd_first, rtol=1e-6, atol=1e-9)
    fd_second = (
        _fd(lambda u: mstar_partials(u, m, q).dm_dd, d, h),
        _fd(lambda v: mstar_partials(d, v, q).dm_dm, m, h),
        _fd(lambda v: mstar_partials(d, v, q).dm_dd, m, h),
    )
    scale = max(1.0, max(abs(v) for v in p.second()))
    np.testing.assert_allclose(p.second(), fd_second, rtol=1e-6, atol=1e-8 * scale)


def test_c_partials_at_known_point():
    c = c_partials(0.2, 0.5)
    assert c.dC_dd == pytest.approx(2 * 0.2 / 0.25)
    assert c.dC_dm == pytest.approx(2 * (1 - 0.04 - 0.5) / 0.125)
    assert c.d2C_dd2 == pytest.approx(8.0)
    with pytest.raises(SingularPointError):
        c_partials(0.2, 0.0)


def test_symmetric_line_coefficients():
    xs = np.linspace(0.01, 0.99, 99)
    for x in xs:
        c = gamma_coefficients(float(x), 0.5)
        assert c.beta == pytest.approx(x, abs=1e-9)
        assert c.alpha == pytest.approx(2 * x * (1 - x), abs=1e-9)
    beta, alpha = gamma_coefficients_grid(xs, 0.5)
    np.testing.assert_allclose(beta, xs, atol=1e-9)
    np.testing.assert_allclose(alpha, 2 * xs * (1 - xs), atol=1e-9)


@pytest.mark.parametrize("q", [0.2, 0.35, 0.65, 0.9])
def test_asymmetric_line_coefficients_are_sane(q):
    top = gamma_upper_boundary(q)
    xs = np.linspace(0.02, top - 0.02, 40)
    beta, alpha = gamma_coefficients_grid(xs, q)
    assert np.all(np.isfinite(beta)) and np.all(np.isfinite(alpha))
    assert np.all(alpha > 0.0)
    # q and 1 - q mirror each other through d -> -d
    mirror_beta, mirror_alpha = gamma_coefficients_grid(xs, 1.0 - q)
    np.testing.assert_allclose(beta, mirror_beta, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(alpha, mirror_alpha, rtol=1e-9, atol=1e-12)


def test_upper_boundary():
    assert gamma_upper_boundary(0.5) == 1.0
    assert gamma_upper_boundary(0.7) == pytest.approx(0.6)
    assert gamma_upper_boundary(0.2) == pytest.approx(0.4)


def test_gamma_coefficients_reject_endpoints():
    for x in (0.0, 1.0):
        with pytest.raises(SingularPointError):
            gamma_coefficients(x, 0.5)


def test_gamma_coefficients_reject_points_past_the_top():
    assert gamma_coefficients(0.58, 0.7).alpha > 0.0
    for x, q in ((0.61, 0.7), (0.45, 0.2), (0.99, 0.3)):
        with pytest.raises(DomainError):
            gamma_coefficients(x, q)


@pytest.mark.parametrize("start, q", [((0.5, 0.3), 0.5), ((-0.3, 0.4), 0.5), ((0.2, 0.3), 0.7)])
def test_reduced_coefficients_are_constant_along_a_flow_line(start, q):
    traj = integrate_flow(ScaledPoint(d=start[0], m=start[1]), q, FlowOptions(dt=1e-4, t_max=200.0))
    picks = [0, len(traj) // 3, 2 * len(traj) // 3]
    coeffs = [
        gamma_coefficients(project_mstar(ScaledPoint(d=float(traj.d[i]), m=float(traj.m[i])), q), q)
        for i in picks
    ]
    for c in coeffs[1:]:
        assert c.beta == pytest.approx(coeffs[0].beta, abs=1e-9)
        assert c.alpha == pytest.approx(coeffs[0].alpha, abs=1e-9)


def test_near_singular_gap_is_reported():
    with pytest.raises(NearSingularError):
        ito_coefficients(0.0, 1.0, 0.5)


def test_printed_symmetric_forms():
    printed = symmetric_explicit_coeffs(0.0, 0.5)
    chain = gamma_coefficients(0.5, 0.5)
    assert printed.beta == pytest.approx(4.0)
    assert chain.beta == pytest.approx(0.5)
    for m in (0.2, 0.5, 0.8):
        assert symmetric_explicit_coeffs(0.0, m).alpha == pytest.approx(2 * m * (1 - m))
    with pytest.raises(SingularPointError):
        symmetric_explicit_coeffs(0.0, 1.0)


def test_dstar_coefficients():
    c = dstar_coefficients(0.3, 0.5, 10)
    assert c.beta == pytest.approx(-0.3)
    assert c.alpha == pytest.approx(0.2)
    c = dstar_coefficients(0.4, 0.7, 20)
    assert c.beta == pytest.approx(0.0, abs=1e-15)
    assert c.alpha == pytest.approx((2 - 2 * 0.4 * 0.4) / 20)
