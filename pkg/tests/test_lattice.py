import numpy as np
import pytest

from illiquid.lattice import (GridSpec, RadialField, ValueField, interp1,
                              interp2, load_field, save_field, shape_check)

P = 0.5


def make_grid(**kw):
    base = dict(t_max=1.0, n_t=3, x_max=2.0, y_max=2.0, n_x=21, n_y=21)
    base.update(kw)
    return GridSpec(**base)


def field_from(grid, f):
    xs, ys = grid.xs[:, None], grid.ys[None, :]
    layer = f(xs, ys)
    vals = np.broadcast_to(layer, (grid.n_t, grid.n_x, grid.n_y)).copy()
    return ValueField(grid=grid, values=vals, envelope_exponent=P)


def test_grid_defaults_and_zero_inclusion():
    g = make_grid()
    assert g.r_max == g.x_max + g.y_max
    assert g.n_r == g.n_x + g.n_y
    for arr in (g.ts, g.xs, g.ys, g.rs):
        assert arr[0] == 0.0


@pytest.mark.parametrize("bad", [dict(n_x=1), dict(n_t=1), dict(x_max=0.0), dict(t_max=-1.0)])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        make_grid(**bad)


def test_interp1_node_identity_and_linearity():
    rs = np.linspace(0.0, 4.0, 17)
    fld = RadialField(rs=rs, values=rs.copy(), envelope_exponent=P)
    assert np.allclose(interp1(fld, rs), rs)
    mid = np.array([0.13, 1.77, 3.9])
    assert np.allclose(interp1(fld, mid), mid, atol=1e-14)


def test_interp1_power_envelope():
    rs = np.linspace(0.0, 4.0, 9)
    fld = RadialField(rs=rs, values=rs ** P, envelope_exponent=P)
    assert interp1(fld, 8.0) == pytest.approx(4.0 ** P * 2.0 ** P, abs=1e-12)


def test_interp1_envelope_continuous_at_boundary():
    rs = np.linspace(0.0, 4.0, 9)
    fld = RadialField(rs=rs, values=np.sqrt(1.0 + rs), envelope_exponent=P)
    inside = float(interp1(fld, 4.0 - 1e-9))
    outside = float(interp1(fld, 4.0 + 1e-9))
    assert outside == pytest.approx(inside, abs=1e-6)


def test_interp2_node_identity():
    g = make_grid()
    fld = field_from(g, lambda x, y: np.sin(x) + y ** 2)
    xv, yv = np.meshgrid(g.xs, g.ys, indexing="ij")
    assert np.allclose(interp2(fld, 0, xv, yv), fld.values[0])


def test_interp2_bilinear_exact_on_affine():
    g = make_grid()
    fld = field_from(g, lambda x, y: x + y)
    # cell midpoints equal the mean of the four corners for affine data
    xm = g.xs[:-1] + g.dx / 2
    ym = g.ys[:-1] + g.dy / 2
    xv, yv = np.meshgrid(xm, ym, indexing="ij")
    assert np.allclose(interp2(fld, 0, xv, yv), xv + yv, atol=1e-13)


def test_interp2_power_envelope():
    g = make_grid()
    fld = field_from(g, lambda x, y: x ** P * np.ones_like(y))
    got = float(interp2(fld, 0, 2.0 * g.x_max, 0.0))
    assert got == pytest.approx(g.x_max ** P * 2.0 ** P, abs=1e-12)


def test_interp_monotone_in_stored_values():
    g = make_grid(n_x=9, n_y=9)
    rng = np.random.default_rng(5)
    lo = field_from(g, lambda x, y: x + y)
    hi = ValueField(grid=g, values=lo.values + rng.uniform(0.0, 1.0, lo.values.shape),
                    envelope_exponent=P)
    pts_x = rng.uniform(0.0, 1.5 * g.x_max, 64)
    pts_y = rng.uniform(0.0, 1.5 * g.y_max, 64)
    assert np.all(interp2(hi, 1, pts_x, pts_y) >= interp2(lo, 1, pts_x, pts_y) - 1e-12)

    rs = np.linspace(0.0, 3.0, 13)
    f_lo = RadialField(rs=rs, values=rs ** P, envelope_exponent=P)
    f_hi = RadialField(rs=rs, values=rs ** P + rng.uniform(0, 1, 13), envelope_exponent=P)
    pts = rng.uniform(0.0, 4.5, 64)
    assert np.all(interp1(f_hi, pts) >= interp1(f_lo, pts) - 1e-12)


def test_shape_check_clean_on_concave_monotone():
    g = make_grid()
    vals = np.add.outer(g.xs, g.ys) ** P
    rep = shape_check(vals, tol=1e-12)
    assert rep.passed
    assert rep.worst() <= 1e-15   # float roundoff of the midpoint differences


def test_shape_check_constant_field():
    rep = shape_check(np.full((8, 8), 3.3), tol=0.0)
    assert rep.passed


def test_shape_check_convexity_violation_equals_cell_curvature():
    g = make_grid(n_x=11, n_y=5, x_max=1.0)
    vals = np.broadcast_to((g.xs ** 2)[:, None], (g.n_x, g.n_y)).copy()
    rep = shape_check(vals, tol=0.0)
    # midpoint violation of x^2 is exactly h^2
    assert rep.worst_concavity_axis == pytest.approx(g.dx ** 2, rel=1e-12)
    assert not rep.passed


def test_shape_check_monotonicity_violation():
    vals = np.linspace(1.0, 0.0, 9)
    rep = shape_check(vals, tol=1e-3)
    assert rep.worst_monotone_x == pytest.approx(1.0 / 8.0, rel=1e-12)


def test_roundtrip_value_field(tmp_path):
    g = make_grid(n_x=7, n_y=5, n_t=4)
    fld = field_from(g, lambda x, y: np.exp(-x) * (1 + y))
    path = tmp_path / "field.bin"
    save_field(path, fld)
    back = load_field(path)
    assert back.grid == g
    assert np.array_equal(back.values, fld.values)
    assert back.envelope_exponent == fld.envelope_exponent


def test_roundtrip_radial_field(tmp_path):
    rs = np.linspace(0.0, 5.0, 11)
    fld = RadialField(rs=rs, values=rs ** 0.3, envelope_exponent=0.3)
    path = tmp_path / "radial.bin"
    save_field(path, fld)
    back = load_field(path)
    assert np.allclose(back.rs, rs)
    assert np.array_equal(back.values, fld.values)


def test_field_rejects_non_finite():
    g = make_grid(n_x=4, n_y=4, n_t=2)
    vals = np.zeros((2, 4, 4))
    vals[1, 2, 2] = np.nan
    with pytest.raises(ValueError):
        ValueField(grid=g, values=vals, envelope_exponent=P)
