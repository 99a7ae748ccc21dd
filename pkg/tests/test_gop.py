import math

import numpy as np
import pytest

from illiquid.gop import JLaw, g_field, g_point, gauss_hermite
from illiquid.lattice import GridSpec, RadialField, shape_check
from illiquid.model import MarketParams, derive_constants

P5 = MarketParams()
CONSTS = derive_constants(P5)
LAW = JLaw.from_constants(CONSTS)
RULE = gauss_hermite(32)


def wide_linear_field(r_max=5000.0):
    rs = np.array([0.0, r_max])
    return RadialField(rs=rs, values=rs.copy(), envelope_exponent=P5.p)


def test_weights_sum_to_one():
    for order in (8, 16, 32, 64):
        assert abs(gauss_hermite(order).weights.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("degree", range(0, 14))
def test_polynomial_exactness(degree):
    # standard normal moments: 0 for odd, (degree-1)!! for even
    rule = gauss_hermite(8)  # exact through degree 15
    got = float(rule.weights @ rule.nodes ** degree)
    expected = 0.0 if degree % 2 else float(np.prod(np.arange(degree - 1, 0, -2), initial=1.0))
    assert got == pytest.approx(expected, abs=1e-9 * max(1.0, expected))


def test_constant_field_maps_to_one():
    # the stored range must cover the sampled factors: extrapolation follows
    # the power envelope, which is exact for powers, not for constants
    rs = np.array([0.0, 1e7])
    psi = RadialField(rs=rs, values=np.ones(2), envelope_exponent=P5.p)
    assert g_point(psi, LAW, RULE, 2.0, 1.0, 1.5) == pytest.approx(1.0, abs=1e-12)


def test_degenerate_cases():
    rs = np.linspace(0.0, 6.0, 13)
    psi = RadialField(rs=rs, values=np.log1p(rs), envelope_exponent=P5.p)
    # y = 0: the averaging collapses to psi(x)
    assert g_point(psi, LAW, RULE, 3.0, 1.25, 0.0) == pytest.approx(
        float(np.interp(1.25, rs, psi.values)), abs=1e-14)
    # t = 0: the factor starts at 1
    assert g_point(psi, LAW, RULE, 0.0, 1.0, 2.0) == pytest.approx(
        float(np.interp(3.0, rs, psi.values)), abs=1e-14)


def test_lognormal_mean_analytic():
    psi = wide_linear_field()
    got = g_point(psi, LAW, RULE, 1.0, 0.0, 1.0)
    assert got == pytest.approx(math.exp(CONSTS.drift_j), rel=1e-6)


def test_lognormal_mean_monte_carlo():
    rng = np.random.default_rng(42)
    t, x, y = 0.7, 0.4, 1.3
    sims = x + y * np.exp((CONSTS.drift_j - CONSTS.vol_j ** 2 / 2) * t
                          + CONSTS.vol_j * math.sqrt(t) * rng.standard_normal(1_000_000))
    got = g_point(wide_linear_field(), LAW, RULE, t, x, y)
    se = sims.std(ddof=1) / math.sqrt(len(sims))
    assert abs(got - sims.mean()) < 3.0 * se


def test_quadrature_order_convergence():
    # a field the interpolant represents exactly isolates the quadrature
    # error from the piecewise-linear representation error
    rs = np.array([0.0, 1e7])
    psi = RadialField(rs=rs, values=2.0 + 0.5 * rs, envelope_exponent=P5.p)
    a = g_point(psi, LAW, gauss_hermite(32), 1.0, 0.5, 1.0)
    b = g_point(psi, LAW, gauss_hermite(64), 1.0, 0.5, 1.0)
    assert abs(a - b) < 1e-8
    # power fields follow the envelope continuation; the residual difference
    # is the interpolation kink error of the stored range, not quadrature
    rs2 = np.linspace(0.0, 8.0, 2000)
    psi2 = RadialField(rs=rs2, values=rs2 ** P5.p, envelope_exponent=P5.p)
    a2 = g_point(psi2, LAW, gauss_hermite(32), 1.0, 0.0, 1.0)
    b2 = g_point(psi2, LAW, gauss_hermite(64), 1.0, 0.0, 1.0)
    assert abs(a2 - b2) < 1e-6


def test_zero_field_maps_to_zero():
    grid = GridSpec(t_max=2.0, n_t=5, x_max=2.0, y_max=2.0, n_x=9, n_y=9)
    psi = RadialField.zeros(grid.rs, P5.p)
    fld = g_field(psi, LAW, RULE, grid)
    assert np.all(fld.values == 0.0)


def test_growth_bound_on_power_field():
    grid = GridSpec(t_max=2.0, n_t=6, x_max=2.0, y_max=2.0, n_x=13, n_y=13)
    rs = grid.rs
    psi = RadialField(rs=rs, values=rs ** P5.p, envelope_exponent=P5.p)
    fld = g_field(psi, LAW, RULE, grid)
    env = np.exp(CONSTS.k_tilde_p * grid.ts)[:, None, None] \
        * np.add.outer(grid.xs, grid.ys)[None, :, :] ** P5.p
    assert np.all(fld.values <= env + 1e-10)


def test_positivity_and_monotone_concave_preservation():
    grid = GridSpec(t_max=1.5, n_t=4, x_max=2.0, y_max=2.0, n_x=15, n_y=15)
    rs = grid.rs
    psi = RadialField(rs=rs, values=np.sqrt(rs + 0.1) - math.sqrt(0.1), envelope_exponent=P5.p)
    fld = g_field(psi, LAW, RULE, grid)
    assert np.all(fld.values >= 0.0)
    for k in range(grid.n_t):
        rep = shape_check(fld.values[k], tol=1e-9)
        assert rep.passed, f"layer {k}: worst violation {rep.worst()}"


def test_linearity():
    grid = GridSpec(t_max=1.0, n_t=3, x_max=2.0, y_max=2.0, n_x=9, n_y=9)
    rs = grid.rs
    rng = np.random.default_rng(3)
    v1 = np.cumsum(rng.uniform(0, 1, len(rs)))
    v2 = np.cumsum(rng.uniform(0, 1, len(rs)))
    f1 = RadialField(rs=rs, values=v1, envelope_exponent=P5.p)
    f2 = RadialField(rs=rs, values=v2, envelope_exponent=P5.p)
    f12 = RadialField(rs=rs, values=2.0 * v1 - 0.5 * v2, envelope_exponent=P5.p)
    a = g_field(f1, LAW, RULE, grid).values
    b = g_field(f2, LAW, RULE, grid).values
    ab = g_field(f12, LAW, RULE, grid).values
    assert np.allclose(ab, 2.0 * a - 0.5 * b, atol=1e-10)


def test_mean_property_of_law():
    assert LAW.mean(2.0) == pytest.approx(math.exp(CONSTS.drift_j * 2.0), rel=1e-12)
    samples = LAW.samples(1.0, RULE.nodes)
    assert float(RULE.weights @ samples) == pytest.approx(LAW.mean(1.0), rel=1e-9)
