import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_wgan import geometry as geo
from manifold_wgan.checks import invariant_sweep, random_pairs
from manifold_wgan.geometry import GeometryTag

from . import oracles

PI = np.pi
HSV, SPHERE, SPD = GeometryTag.HSV, GeometryTag.SPHERE, GeometryTag.SPD

finite = st.floats(-50.0, 50.0, allow_nan=False)


# --- tags and anchors ----------------------------------------------------------


@pytest.mark.parametrize("name,tag", [("hsv", HSV), ("S2", SPHERE), ("cb", SPHERE), ("spd", SPD), ("dt", SPD),
                                      (1, SPHERE), ("HsvProduct", HSV)])
def test_tag_parse(name, tag):
    assert GeometryTag.parse(name) is tag


def test_tag_parse_rejects_unknown():
    with pytest.raises(geo.GeometryError):
        GeometryTag.parse("torus")


@pytest.mark.parametrize("tag", list(GeometryTag))
def test_default_anchor_is_valid(tag):
    geo.validate_points(tag, geo.default_anchor(tag))


def test_hsv_anchor_hue_is_pi_mod_2pi():
    assert np.isclose(np.cos(geo.default_anchor(HSV)[0]), -1.0)


@given(finite)
def test_wrap_angle_range(a):
    w = float(geo.wrap_angle(a))
    assert -PI <= w < PI
    assert np.isclose(np.cos(w), np.cos(a), atol=1e-9) and np.isclose(np.sin(w), np.sin(a), atol=1e-9)


def test_wrap_angle_tiny_negative_stays_in_range():
    assert geo.wrap_angle(-1e-17) < PI


# --- HSV -------------------------------------------------------------------------


def test_hsv_log_at_base_point():
    y = np.array([PI, 0.5, 0.5])
    np.testing.assert_array_equal(geo.hsv_log(y, y), np.zeros(3))


def test_hsv_log_wraps_shortest_arc():
    v = geo.hsv_log([-PI / 2, 0, 0], [3 * PI / 4, 0.2, 0.1])
    np.testing.assert_allclose(v, [-3 * PI / 4, 0.2, 0.1], atol=1e-15)


def test_hsv_exp_inverse_example():
    x = geo.hsv_exp([-PI / 2, 0, 0], [-3 * PI / 4, 0.2, 0.1])
    np.testing.assert_allclose(x, [3 * PI / 4, 0.2, 0.1], atol=1e-15)


def test_hsv_exp_zero():
    y = np.array([1.0, 0.3, 0.9])
    np.testing.assert_array_equal(geo.hsv_exp(y, np.zeros(3)), y)


def test_hsv_exp_does_not_clamp_sv():
    np.testing.assert_allclose(geo.hsv_exp([0, 0.9, 0.9], [0, 0.5, -1.5]), [0, 1.4, -0.6])


@given(st.floats(-PI + 1e-9, PI - 1e-9), st.floats(0, 1), st.floats(0, 1),
       st.floats(-PI + 1e-9, PI - 1e-9), st.floats(0, 1), st.floats(0, 1))
def test_hsv_round_trip_and_distance(yh, ys, yv, xh, xs, xv):
    y, x = np.array([yh, ys, yv]), np.array([xh, xs, xv])
    v = geo.hsv_log(y, x)
    back = geo.hsv_exp(y, v)
    assert oracles.hue_gap(back[0], x[0]) <= 1e-12
    np.testing.assert_allclose(back[1:], x[1:], atol=1e-12)
    assert abs(np.linalg.norm(v) - oracles.hsv_distance(x, y)) <= 1e-12


@given(st.floats(-PI + 1e-6, PI - 1e-6), st.floats(-2, 2), st.floats(-2, 2))
def test_hsv_log_exp_recovers_short_vectors(vh, vs, vv):
    y = np.array([2.0, 0.5, 0.5])
    v = np.array([vh, vs, vv])
    np.testing.assert_allclose(geo.hsv_log(y, geo.hsv_exp(y, v)), v, atol=1e-12)


# --- sphere ----------------------------------------------------------------------


def test_sphere_project_tangent_example():
    np.testing.assert_allclose(geo.sphere_project_tangent([0, 0, 1], [1, 0, -1]), [1, 0, 0])


def test_sphere_project_tangent_idempotent_and_orthogonal():
    rng = np.random.default_rng(1)
    for _ in range(200):
        y = oracles.random_unit(rng)
        h = rng.standard_normal(3)
        p = geo.sphere_project_tangent(y, h)
        assert abs(np.dot(p, y)) <= 1e-12
        np.testing.assert_allclose(geo.sphere_project_tangent(y, p), p, atol=1e-15)


def test_sphere_log_examples():
    z = np.array([0.0, 0.0, 1.0])
    np.testing.assert_array_equal(geo.sphere_log(z, z), np.zeros(3))
    np.testing.assert_allclose(geo.sphere_log(z, [1, 0, 0]), [PI / 2, 0, 0], atol=1e-15)
    with pytest.raises(geo.AntipodalError):
        geo.sphere_log(z, [0, 0, -1])


def test_sphere_exp_examples():
    z = np.array([0.0, 0.0, 1.0])
    np.testing.assert_array_equal(geo.sphere_exp(z, np.zeros(3)), z)
    np.testing.assert_allclose(geo.sphere_exp(z, [PI / 2, 0, 0]), [1, 0, 0], atol=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = geo.sphere_project_tangent(z, rng.standard_normal(3))
        np.testing.assert_allclose(geo.sphere_exp(z, PI * d / np.linalg.norm(d)), -z, atol=1e-15)


def test_sphere_exp_small_vector_branch_is_continuous():
    y = np.array([0.0, 0.0, 1.0])
    for r in (1e-7, 1e-9, 1e-12):
        x = geo.sphere_exp(y, [r, 0, 0])
        np.testing.assert_allclose(x, [np.sin(r), 0, np.cos(r)], atol=1e-16)
        assert abs(np.linalg.norm(x) - 1.0) <= 1e-15


def test_sphere_exp_rejects_non_tangent():
    with pytest.raises(geo.GeometryError):
        geo.sphere_exp([0, 0, 1], [0, 0, 0.5])


def test_sphere_log_tangency_and_arccos():
    rng = np.random.default_rng(3)
    for _ in range(500):
        y, x = oracles.random_unit(rng), oracles.random_unit(rng)
        v = geo.sphere_log(y, x)
        assert abs(np.dot(v, y)) <= 1e-10
        assert abs(np.linalg.norm(v) - oracles.sphere_distance(x, y)) <= 1e-10
        assert abs(np.linalg.norm(geo.sphere_exp(y, v)) - 1.0) <= 1e-12


def test_sphere_nearly_antipodal_but_allowed():
    y = np.array([0.0, 0.0, 1.0])
    x = geo.sphere_exp(y, [PI - 1e-3, 0, 0])
    np.testing.assert_allclose(geo.sphere_exp(y, geo.sphere_log(y, x)), x, atol=1e-12)


# --- SPD -------------------------------------------------------------------------


def test_sym_matrix_log_exp_examples():
    np.testing.assert_array_equal(geo.sym_matrix_log(np.eye(3)), np.zeros((3, 3)))
    np.testing.assert_array_equal(geo.sym_matrix_exp(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(geo.sym_matrix_log(np.diag([np.e, 1, 1])), np.diag([1.0, 0, 0]), atol=1e-15)


def test_sym_matrix_round_trip_against_scipy():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a = oracles.random_spd(rng)
        np.testing.assert_allclose(geo.sym_matrix_exp(geo.sym_matrix_log(a)), a, rtol=0, atol=1e-10)
        np.testing.assert_allclose(geo.sym_matrix_log(a), np.real(oracles.logm(a)), atol=1e-10)


def test_sym_matrix_log_reports_min_eigenvalue():
    with pytest.raises(geo.EigenvalueError) as info:
        geo.sym_matrix_log(np.diag([-2.0, 1.0, 3.0]))
    assert info.value.min_eigenvalue == pytest.approx(-2.0)


def test_spd_log_identity_anchor_reduction():
    np.testing.assert_allclose(geo.spd_log(np.eye(3), np.diag([np.e, 1, 1])), np.diag([1.0, 0, 0]), atol=1e-15)


def test_spd_exp_zero_and_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(200):
        y, x = oracles.random_spd(rng), oracles.random_spd(rng)
        np.testing.assert_allclose(geo.spd_exp(y, np.zeros((3, 3))), y, atol=1e-12)
        np.testing.assert_allclose(geo.spd_exp(y, geo.spd_log(y, x)), x, atol=1e-9)


def test_spd_log_is_geodesic_velocity():
    rng = np.random.default_rng(6)
    h = 1e-5
    for _ in range(20):
        y, x = oracles.random_spd(rng, 0.5), oracles.random_spd(rng, 0.5)
        fd = (oracles.spd_geodesic(y, x, h) - oracles.spd_geodesic(y, x, -h)) / (2 * h)
        np.testing.assert_allclose(geo.spd_log(y, x), fd, atol=1e-7)


def test_spd_rejects_non_spd():
    with pytest.raises(geo.EigenvalueError):
        geo.spd_log(np.eye(3), np.diag([1.0, 0.0, 1.0]))


def test_exp_differential_repeated_eigenvalues():
    # divided differences at equal eigenvalues fall back to exp itself
    h = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]])
    np.testing.assert_allclose(geo.exp_differential(np.zeros((3, 3)), h), h, atol=1e-15)
    np.testing.assert_allclose(geo.exp_differential(2 * np.eye(3), h), np.exp(2) * h, atol=1e-12)


# --- distance --------------------------------------------------------------------


@pytest.mark.parametrize("tag", list(GeometryTag))
def test_distance_self_zero(tag):
    rng = np.random.default_rng(7)
    y, _ = random_pairs(tag, 50, rng)
    np.testing.assert_array_equal(geo.distance(tag, y, y), 0.0)


def test_distance_examples():
    assert geo.distance(SPHERE, np.array([1.0, 0, 0]), np.array([0, 1.0, 0])) == pytest.approx(PI / 2, abs=1e-15)
    assert geo.distance(SPD, np.diag([np.e, 1, 1]), np.eye(3)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("tag", list(GeometryTag))
def test_distance_symmetric(tag):
    rng = np.random.default_rng(8)
    y, x = random_pairs(tag, 200, rng)
    np.testing.assert_allclose(geo.distance(tag, x, y), geo.distance(tag, y, x), atol=1e-12)


def test_distance_against_oracles():
    rng = np.random.default_rng(9)
    for tag, ref in ((HSV, oracles.hsv_distance), (SPHERE, oracles.sphere_distance), (SPD, oracles.spd_distance)):
        y, x = random_pairs(tag, 100, rng)
        d = geo.distance(tag, x, y)
        np.testing.assert_allclose(d, [ref(a, b) for a, b in zip(x, y)], atol=1e-10)


# --- interpolation and bases -------------------------------------------------------


def test_interpolate_endpoints_and_midpoint():
    y = geo.default_anchor(HSV)
    x = geo.hsv_exp(y, [0.2, 0.0, 0.0])
    g = np.array([0.6, 0.0, 0.0])
    np.testing.assert_allclose(geo.interpolate(HSV, y, x, g, 0.0), geo.hsv_log(y, x))
    np.testing.assert_allclose(geo.interpolate(HSV, y, x, g, 1.0), geo.hsv_log(y, geo.hsv_exp(y, g)))
    np.testing.assert_allclose(geo.interpolate(HSV, y, x, g, 0.5), [0.4, 0, 0], atol=1e-15)


def test_interpolate_canonicalizes_hue():
    y = geo.default_anchor(HSV)
    g = np.array([0.6 + 2 * PI, 0.0, 0.0])
    np.testing.assert_allclose(geo.interpolate(HSV, y, y, g, 1.0), [0.6, 0, 0], atol=1e-14)


def test_canonicalize_sphere_folds_long_vectors():
    y = np.array([0.0, 0.0, 1.0])
    v = np.array([PI + 0.5, 0.0, 0.0])
    np.testing.assert_allclose(geo.canonicalize(SPHERE, y, v), [-(PI - 0.5), 0, 0], atol=1e-12)


def test_sphere_basis_fixed_axis_seed():
    np.testing.assert_allclose(geo.tangent_basis(SPHERE, [0, 0, 1]), [[1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize("tag", list(GeometryTag))
def test_tangent_frame_round_trip(tag):
    rng = np.random.default_rng(10)
    anchor = geo.default_anchor(tag)
    frame = geo.TangentFrame(tag, anchor)
    c = rng.standard_normal((1000, tag.tangent_dim))
    np.testing.assert_allclose(frame.to_coords(frame.from_coords(c)), c, atol=1e-12)


def test_spd_basis_gram_identity_at_identity():
    b = geo.tangent_basis(SPD, np.eye(3))
    np.testing.assert_allclose(np.einsum("aij,bij->ab", b, b), np.eye(6), atol=1e-15)


def test_sphere_basis_orthonormal_and_tangent():
    rng = np.random.default_rng(11)
    for _ in range(100):
        y = oracles.random_unit(rng)
        b = geo.tangent_basis(SPHERE, y)
        np.testing.assert_allclose(b @ b.T, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(b @ y, 0, atol=1e-14)


@pytest.mark.parametrize("tag", list(GeometryTag))
def test_coordinate_norm_equals_distance_at_any_anchor(tag):
    rng = np.random.default_rng(12)
    y, x = random_pairs(tag, 50, rng)
    for a, b in zip(y, x):
        frame = geo.TangentFrame(tag, a)
        assert abs(np.linalg.norm(frame.log(b)) - geo.distance(tag, b, a)) <= 1e-10
        np.testing.assert_allclose(frame.exp(frame.log(b)), b, atol=1e-9)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_anchor_nullity(seed):
    rng = np.random.default_rng(seed)
    for tag in GeometryTag:
        y, _ = random_pairs(tag, 1, rng)
        assert np.abs(geo.log_map(tag, y[0], y[0])).max() == 0.0


# --- sweep -----------------------------------------------------------------------


@pytest.mark.parametrize("tag", list(GeometryTag))
def test_invariant_sweep_passes(tag):
    assert invariant_sweep(tag, trials=1000, seed=0).passed


def test_invariant_sweep_negative_control():
    assert not invariant_sweep(SPD, trials=100, seed=0, round_trip_tol=0.0, norm_distance_tol=0.0).passed


def test_invariant_sweep_deterministic():
    a = invariant_sweep(SPHERE, trials=200, seed=5)
    b = invariant_sweep(SPHERE, trials=200, seed=5)
    assert a == b


def test_hsv_validation_checks_hue_only():
    geo.validate_points(HSV, [0.5, 1.3, -0.2])
    with pytest.raises(geo.GeometryError):
        geo.validate_points(HSV, [PI, 0.5, 0.5])
    with pytest.raises(geo.GeometryError):
        geo.validate_points(HSV, [0.0, np.nan, 0.5])
