"""Geometry primitives: projections, exp/log, distances, sampling."""

import numpy as np
import pytest

import gradsync.manifolds as mf
from gradsync import (
    CapabilityError,
    FeasibilityError,
    InjectivityError,
    KindMismatchError,
    ManifoldKind,
    ManifoldPoint,
    ShapeError,
    TangentVector,
)

ALL_KINDS = ["circle", "sphere:2", "sphere:4", "stiefel:2:4", "so:3", "o:3", "torus:2"]
EXPLOG_KINDS = ["circle", "sphere:2", "sphere:4", "so:3", "o:4", "torus:3", "stiefel:3:3"]


def K(spec):
    return ManifoldKind.parse(spec)


def pt(spec, value):
    return ManifoldPoint(K(spec), np.asarray(value, dtype=float))


def e(i, n):
    v = np.zeros((n, 1))
    v[i, 0] = 1.0
    return v


def circle_at(theta):
    return pt("circle", [[np.cos(theta)], [np.sin(theta)]])


class TestKinds:
    def test_parse_round_trip(self):
        for spec in ALL_KINDS:
            kind = K(spec)
            assert str(kind) == spec
            assert ManifoldKind.parse(str(kind)) == kind

    def test_shapes(self):
        assert K("circle").shape == (2, 1)
        assert K("sphere:2").shape == (3, 1)
        assert K("stiefel:2:4").shape == (4, 2)
        assert K("so:3").shape == (3, 3)
        assert K("o:5").shape == (5, 5)
        assert K("torus:3").shape == (6, 1)

    def test_dims(self):
        assert K("circle").dim == 1
        assert K("sphere:2").dim == 2
        assert K("stiefel:2:4").dim == 2 * 4 - 2 * 3 // 2  # np - p(p+1)/2
        assert K("so:3").dim == 3
        assert K("o:3").dim == 3
        assert K("torus:3").dim == 3

    def test_sphere_is_stiefel_1(self):
        # same shape, same formulas; values interchange exactly
        assert K("sphere:2").shape == K("stiefel:1:3").shape

    def test_bad_specs(self):
        for bad in ["nonsense", "sphere:1x", "stiefel:3:2", "so:1", "torus:0", ""]:
            with pytest.raises((CapabilityError, Exception)):
                K(bad)

    def test_point_validation(self):
        with pytest.raises(FeasibilityError):
            pt("circle", [[1.0], [0.5]])
        with pytest.raises(ShapeError):
            pt("circle", [[1.0], [0.0], [0.0]])
        # so:n rejects determinant -1
        q = np.eye(3)
        q[0, 0] = -1.0
        with pytest.raises(FeasibilityError):
            pt("so:3", q)
        ManifoldPoint(K("o:3"), q)  # fine on o:n


class TestProject:
    def test_radial_annihilated(self):
        x = pt("sphere:2", e(2, 3))
        v = mf.project(x, e(2, 3))
        assert np.linalg.norm(v.value) == 0.0

    def test_idempotent_all_kinds(self):
        rng = np.random.default_rng(0)
        for spec in ALL_KINDS:
            kind = K(spec)
            for _ in range(5):
                x = mf.sample_uniform(kind, rng)
                a = rng.standard_normal(kind.shape)
                v = mf.project(x, a)
                w = mf.project(x, v.value)
                assert np.linalg.norm(v.value - w.value) <= 1e-12, spec

    def test_orthogonality(self):
        rng = np.random.default_rng(1)
        for spec in ALL_KINDS:
            kind = K(spec)
            x = mf.sample_uniform(kind, rng)
            a = rng.standard_normal(kind.shape)
            b = rng.standard_normal(kind.shape)
            pa = mf.project(x, a).value
            pb = mf.project(x, b).value
            assert abs(np.sum((a - pa) * pb)) <= 1e-10, spec

    def test_stiefel_matches_nullspace_oracle(self):
        # brute-force oracle: orthonormal basis of the constraint nullspace
        x = pt("stiefel:2:3", np.eye(3)[:, :2])
        a = np.ones((3, 2))
        v = mf.project(x, a).value

        def constraint_jac(xv):
            # d/dX of vec(upper(X^T X - I)) as rows
            rows = []
            n, p = xv.shape
            for r in range(p):
                for c in range(r, p):
                    g = np.zeros((n, p))
                    g[:, c] += xv[:, r]
                    g[:, r] += xv[:, c]
                    rows.append(g.ravel())
            return np.asarray(rows)

        jac = constraint_jac(x.value)
        _, _, vt = np.linalg.svd(jac)
        null = vt[jac.shape[0]:]  # orthonormal rows spanning the tangent space
        oracle = (null.T @ (null @ a.ravel())).reshape(3, 2)
        assert np.linalg.norm(v - oracle) <= 1e-10

    def test_shape_error(self):
        x = pt("sphere:2", e(0, 3))
        with pytest.raises(ShapeError):
            mf.project(x, np.ones((4, 1)))


class TestExpLog:
    def test_circle_quarter_turn(self):
        x = circle_at(0.0)
        v = TangentVector(x, np.array([[0.0], [np.pi / 2]]))
        y = mf.exp_map(x, v)
        assert np.allclose(y.value, circle_at(np.pi / 2).value, atol=1e-15)

    def test_zero_tangent(self):
        rng = np.random.default_rng(2)
        for spec in EXPLOG_KINDS:
            kind = K(spec)
            x = mf.sample_uniform(kind, rng)
            v = TangentVector(x, np.zeros(kind.shape))
            y = mf.exp_map(x, v)
            assert np.allclose(y.value, x.value, atol=1e-15), spec

    def test_sphere_great_circle(self):
        x = pt("sphere:2", e(2, 3))
        v = TangentVector(x, (np.pi / 2) * e(0, 3))
        y = mf.exp_map(x, v)
        assert np.allclose(y.value, e(0, 3), atol=1e-15)

    def test_log_self_is_zero(self):
        rng = np.random.default_rng(3)
        for spec in EXPLOG_KINDS:
            x = mf.sample_uniform(K(spec), rng)
            v = mf.log_map(x, x)
            assert np.linalg.norm(v.value) <= 1e-12, spec

    def test_circle_log_quarter_turn(self):
        v = mf.log_map(circle_at(0.0), circle_at(np.pi / 2))
        assert np.allclose(v.value, [[0.0], [np.pi / 2]], atol=1e-15)

    def test_sphere_log_small_angle(self):
        x = pt("sphere:2", e(2, 3))
        y = pt("sphere:2", [[np.sin(0.3)], [0.0], [np.cos(0.3)]])
        v = mf.log_map(x, y)
        assert np.allclose(v.value, 0.3 * e(0, 3), atol=1e-14)

    def test_round_trip_inside_injectivity(self):
        rng = np.random.default_rng(4)
        for spec in EXPLOG_KINDS:
            kind = K(spec)
            for _ in range(10):
                x = mf.sample_uniform(kind, rng)
                r = 0.9 * mf.injectivity_radius(kind) * rng.uniform(0.05, 1.0)
                v = mf.random_tangent(x, rng, norm=r)
                y = mf.exp_map(x, v)
                w = mf.log_map(x, y)
                assert np.linalg.norm(w.value - v.value) <= 1e-8, spec

    def test_distance_consistency(self):
        rng = np.random.default_rng(5)
        for spec in EXPLOG_KINDS:
            kind = K(spec)
            x = mf.sample_uniform(kind, rng)
            r = 0.8 * mf.injectivity_radius(kind)
            v = mf.random_tangent(x, rng, norm=r)
            y = mf.exp_map(x, v)
            assert abs(mf.geodesic_distance(x, y) - r) <= 1e-8, spec

    def test_near_duplicate_log_is_tiny(self):
        # arccos-style formulas lose half the digits here; atan2 must not
        rng = np.random.default_rng(6)
        x = mf.sample_uniform(K("sphere:3"), rng)
        y = ManifoldPoint(x.kind, x.value.copy())
        v = mf.log_map(x, y)
        assert np.linalg.norm(v.value) <= 1e-12

    def test_stiefel_middle_p_unsupported(self):
        rng = np.random.default_rng(7)
        kind = K("stiefel:2:4")
        x = mf.sample_uniform(kind, rng)
        y = mf.sample_uniform(kind, rng)
        with pytest.raises(CapabilityError):
            mf.log_map(x, y)
        with pytest.raises(CapabilityError):
            mf.exp_map(x, TangentVector(x, np.zeros(kind.shape)))


class TestInjectivityGates:
    def test_sphere_antipode(self):
        x = pt("sphere:2", e(2, 3))
        y = ManifoldPoint(x.kind, -x.value)
        with pytest.raises(InjectivityError):
            mf.log_map(x, y)

    def test_torus_factor_antipode(self):
        x = pt("torus:2", [[1.0], [0.0], [1.0], [0.0]])
        y = pt("torus:2", [[-1.0], [0.0], [1.0], [0.0]])
        with pytest.raises(InjectivityError):
            mf.log_map(x, y)

    def test_so3_pi_rotation(self):
        x = pt("so:3", np.eye(3))
        rot = np.diag([1.0, -1.0, -1.0])  # angle-pi rotation about e1
        y = pt("so:3", rot)
        with pytest.raises(InjectivityError):
            mf.log_map(x, y)

    def test_so3_just_inside_works(self):
        theta = np.pi - 1e-3
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)
        x = pt("so:3", np.eye(3))
        y = pt("so:3", rot)
        v = mf.log_map(x, y)
        z = mf.exp_map(x, v)
        assert np.linalg.norm(z.value - y.value) <= 1e-10

    def test_o3_opposite_components(self):
        x = pt("o:3", np.eye(3))
        y = pt("o:3", np.diag([-1.0, 1.0, 1.0]))
        with pytest.raises(InjectivityError):
            mf.log_map(x, y)
        with pytest.raises(InjectivityError):
            mf.geodesic_distance(x, y)


class TestDistances:
    def test_zero_distance(self):
        rng = np.random.default_rng(8)
        for spec in EXPLOG_KINDS:
            x = mf.sample_uniform(K(spec), rng)
            assert mf.geodesic_distance(x, x) <= 1e-12
            assert mf.chordal_distance(x, x) == 0.0

    def test_sphere_quarter(self):
        x = pt("sphere:2", e(2, 3))
        y = pt("sphere:2", e(0, 3))
        assert abs(mf.geodesic_distance(x, y) - np.pi / 2) <= 1e-15
        assert abs(mf.chordal_distance(x, y) - np.sqrt(2)) <= 1e-15

    def test_circle_diameter_chord(self):
        assert abs(mf.chordal_distance(circle_at(0.0), circle_at(np.pi)) - 2.0) <= 1e-15

    def test_torus_wrap_and_norm(self):
        x = pt("torus:2", [[1.0], [0.0], [1.0], [0.0]])
        a = np.pi / 2
        y = pt("torus:2", [[np.cos(a)], [np.sin(a)], [np.cos(a)], [np.sin(a)]])
        assert abs(mf.geodesic_distance(x, y) - np.pi / np.sqrt(2)) <= 1e-12

    def test_so3_rotation_angle_scaling(self):
        # embedded Frobenius metric: rotation by theta sits at sqrt(2) * theta
        theta = 1.2
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
        x = pt("so:3", np.eye(3))
        y = pt("so:3", rot)
        assert abs(mf.geodesic_distance(x, y) - np.sqrt(2) * theta) <= 1e-12

    def test_chord_never_exceeds_arc(self):
        rng = np.random.default_rng(9)
        for spec in EXPLOG_KINDS:
            kind = K(spec)
            for _ in range(20):
                x = mf.sample_uniform(kind, rng)
                v = mf.random_tangent(
                    x, rng, norm=rng.uniform(0, 0.99) * mf.injectivity_radius(kind)
                )
                y = mf.exp_map(x, v)
                assert mf.chordal_distance(x, y) <= mf.geodesic_distance(x, y) + 1e-12

    def test_kind_mismatch(self):
        rng = np.random.default_rng(10)
        x = mf.sample_uniform(K("sphere:2"), rng)
        y = mf.sample_uniform(K("torus:1"), rng)
        with pytest.raises(KindMismatchError):
            mf.geodesic_distance(x, y)

    def test_squared_distance_gradient_is_minus_two_log(self):
        # grad_x d_g(x, y)^2 = -2 log_x(y), checked by central differences
        rng = np.random.default_rng(11)
        for spec in ["circle", "sphere:2", "so:3", "torus:2"]:
            kind = K(spec)
            x = mf.sample_uniform(kind, rng)
            v = mf.random_tangent(x, rng, norm=0.2 * mf.injectivity_radius(kind))
            y = mf.exp_map(x, v)
            w = mf.random_tangent(x, rng)
            t = 1e-5

            def dsq(s):
                xs = mf.retract(kind, x.value + s * w.value)
                return mf.geodesic_distance(ManifoldPoint(kind, xs), y) ** 2

            fd = (dsq(t) - dsq(-t)) / (2 * t)
            exact = -2.0 * float(np.sum(mf.log_map(x, y).value * w.value))
            assert abs(fd - exact) <= 1e-5 * max(1.0, abs(exact)), spec


class TestInjectivityRadius:
    def test_table(self):
        assert mf.injectivity_radius(K("circle")) == np.pi
        assert mf.injectivity_radius(K("sphere:5")) == np.pi
        assert mf.injectivity_radius(K("torus:4")) == np.pi
        assert abs(mf.injectivity_radius(K("so:3")) - np.pi * np.sqrt(2)) <= 1e-15
        assert abs(mf.injectivity_radius(K("o:4")) - np.pi * np.sqrt(2)) <= 1e-15

    def test_accepts_point(self):
        rng = np.random.default_rng(12)
        x = mf.sample_uniform(K("sphere:2"), rng)
        assert mf.injectivity_radius(x) == np.pi


class TestSampling:
    def test_feasibility(self):
        rng = np.random.default_rng(13)
        for spec in ALL_KINDS:
            kind = K(spec)
            for _ in range(20):
                x = mf.sample_uniform(kind, rng)
                assert mf.feasibility_residual(kind, x.value) <= 1e-9, spec

    def test_circle_mean_near_zero(self):
        rng = np.random.default_rng(14)
        pts = np.stack([mf.sample_uniform(K("circle"), rng).value for _ in range(10_000)])
        assert np.linalg.norm(pts.mean(axis=0)) <= 0.05

    def test_stiefel_columns_orthonormal_per_sample(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            x = mf.sample_uniform(K("stiefel:2:4"), rng).value
            assert abs(float(x[:, 0] @ x[:, 1])) <= 1e-12

    def test_so_determinant_plus_one(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            x = mf.sample_uniform(K("so:4"), rng)
            assert np.linalg.det(x.value) > 0

    def test_o_hits_both_components(self):
        rng = np.random.default_rng(17)
        signs = {np.sign(np.linalg.det(mf.sample_uniform(K("o:3"), rng).value)) for _ in range(64)}
        assert signs == {-1.0, 1.0}

    def test_sphere_equals_stiefel_column(self):
        # identical draws from identical streams: shared code path
        a = mf.sample_uniform(K("sphere:2"), np.random.default_rng(18))
        b = mf.sample_uniform(K("stiefel:1:3"), np.random.default_rng(18))
        assert np.array_equal(a.value, b.value)


class TestRetract:
    def test_restores_feasibility(self):
        rng = np.random.default_rng(19)
        for spec in ALL_KINDS:
            kind = K(spec)
            x = mf.sample_uniform(kind, rng).value
            drifted = x + 1e-3 * rng.standard_normal(kind.shape)
            back = mf.retract(kind, drifted)
            assert mf.feasibility_residual(kind, back) <= 1e-12, spec

    def test_far_input_uses_svd_fallback(self):
        rng = np.random.default_rng(20)
        kind = K("stiefel:2:4")
        m = 3.0 * rng.standard_normal(kind.shape)
        back = mf.retract(kind, m)
        assert mf.feasibility_residual(kind, back) <= 1e-12

    def test_so_keeps_component(self):
        rng = np.random.default_rng(21)
        kind = K("so:3")
        x = mf.sample_uniform(kind, rng).value
        back = mf.retract(kind, x + 1e-2 * rng.standard_normal((3, 3)))
        assert np.linalg.det(back) > 0


class TestTangentBasis:
    def test_orthonormal_and_complete(self):
        rng = np.random.default_rng(22)
        for spec in ALL_KINDS:
            kind = K(spec)
            x = mf.sample_uniform(kind, rng)
            basis = mf.tangent_basis(x)
            assert len(basis) == kind.dim, spec
            for i, bi in enumerate(basis):
                v = mf.project(x, bi).value
                assert np.linalg.norm(v - bi) <= 1e-10, spec
                for j in range(i):
                    assert abs(np.sum(bi * basis[j])) <= 1e-10, spec
                assert abs(np.linalg.norm(bi) - 1.0) <= 1e-10, spec
