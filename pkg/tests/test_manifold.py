import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from instances import directional_fd, geodesic, random_instance, rel_err, second_fd
from mirrorfit.geometry import (
    Correspondence,
    PointCloud,
    ReflectionTransform,
    random_transform,
    symmetry_error,
    transform_from_angles,
)
from mirrorfit.manifold import (
    TangentVector,
    critical_rotation,
    egrad_R,
    egrad_t,
    metric,
    project,
    retract,
    rgrad,
    rgrad_factor_expanded,
    rhess_apply,
    skew,
    workspace,
    workspace_from_moment,
)
from mirrorfit.synthbench import SynthSpec, generate

seeds = st.integers(0, 2**32 - 1)


def angle_tangent(theta, d=2):
    return TangentVector(np.array([[[0.0, -theta], [theta, 0.0]]]), np.zeros(d))


def symmetric_instance(d, h=20, seed=0, angles=None):
    xf = (transform_from_angles(np.deg2rad(angles), np.zeros(d)) if angles is not None
          else random_transform(np.random.default_rng(seed), d))
    cloud, truth = generate(SynthSpec(d, h, xf, 0.0, seed=seed))
    return cloud, xf, truth.pairs


def test_metric_examples():
    zero = TangentVector.zeros(2)
    assert metric(None, zero, zero) == 0.0
    assert metric(None, angle_tangent(0.3), angle_tangent(0.3)) == pytest.approx(2 * 0.09)


@given(seeds, st.integers(2, 6))
def test_metric_is_bilinear(seed, d):
    rng = np.random.default_rng(seed)
    u, v, w = (TangentVector.random(rng, d) for _ in range(3))
    lhs = metric(None, u + w, v)
    assert lhs == pytest.approx(metric(None, u, v) + metric(None, w, v), rel=1e-12, abs=1e-12)


def test_translation_gradient_vanishes_at_ground_truth():
    cloud, xf, corr = symmetric_instance(3, seed=4)
    np.testing.assert_allclose(egrad_t(cloud, xf, corr), 0.0, atol=1e-10)


def test_translation_gradient_has_no_first_component_at_identity():
    rng = np.random.default_rng(2)
    cloud = PointCloud(rng.standard_normal((2, 9)))
    g = egrad_t(cloud, ReflectionTransform.identity(2, rng.standard_normal(2)), Correspondence(rng.permutation(9)))
    assert g[0] == 0.0


def test_translation_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    cloud, xf, corr = random_instance(rng, 3)
    g = egrad_t(cloud, xf, corr)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (symmetry_error(cloud, xf.with_translation(xf.translation + e), corr)
              - symmetry_error(cloud, xf.with_translation(xf.translation - e), corr)) / (2 * h)
        assert rel_err(g[k], fd) < 1e-5


def test_rotation_gradient_matches_angle_derivative_in_2d():
    rng = np.random.default_rng(4)
    cloud, _, corr = random_instance(rng, 2)
    t = rng.standard_normal(2)
    phi, h = 0.4, 1e-6
    xf = transform_from_angles([phi], t)
    G = egrad_R(cloud, xf, corr, 0)
    dR = np.array([[-np.sin(phi), -np.cos(phi)], [np.cos(phi), -np.sin(phi)]])
    fd = (symmetry_error(cloud, transform_from_angles([phi + h], t), corr)
          - symmetry_error(cloud, transform_from_angles([phi - h], t), corr)) / (2 * h)
    assert rel_err(np.sum(G * dR), fd) < 1e-5


def test_rotation_gradient_directional_derivative_in_4d():
    rng = np.random.default_rng(5)
    cloud, xf, corr = random_instance(rng, 4)
    for j in range(3):
        Om = skew(rng.standard_normal((4, 4)))
        v = TangentVector(np.zeros((3, 4, 4)), np.zeros(4))
        v.omegas[j] = Om
        dd = np.sum(egrad_R(cloud, xf, corr, j) * (xf.rotations[j] @ Om))
        h = 1e-6
        fd = (symmetry_error(cloud, retract(xf, v, h), corr)
              - symmetry_error(cloud, retract(xf, v, -h), corr)) / (2 * h)
        assert rel_err(dd, fd) < 1e-4


def test_riemannian_gradient_vanishes_at_optimum():
    cloud, xf, corr = symmetric_instance(4, seed=6)
    g = rgrad(cloud, xf, corr)
    assert g.norm() < 1e-8


@given(seeds, st.integers(2, 5))
def test_gradient_projection_is_idempotent_and_expanded_form_agrees(seed, d):
    rng = np.random.default_rng(seed)
    cloud, xf, corr = random_instance(rng, d)
    g = rgrad(cloud, xf, corr)
    again = project(xf, g.omegas, g.eta_t)
    np.testing.assert_allclose(again.omegas, g.omegas, atol=1e-12)
    for j in range(d - 1):
        ambient = xf.rotations[j] @ g.omegas[j]
        expanded = rgrad_factor_expanded(cloud, xf, corr, j)
        np.testing.assert_allclose(expanded, ambient, atol=1e-10 * max(1.0, np.abs(ambient).max()))


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_gradient_and_hessian_against_curve_differences(d):
    rng = np.random.default_rng(100 + d)
    for _ in range(10):
        cloud, xf, corr = random_instance(rng, d)
        v = TangentVector.random(rng, d)
        g = rgrad(cloud, xf, corr)
        assert rel_err(metric(xf, g, v), directional_fd(cloud, xf, corr, v)) < 1e-4
        Hv = rhess_apply(cloud, xf, corr, v)
        assert rel_err(metric(xf, v, Hv), second_fd(cloud, xf, corr, v)) < 1e-3


def test_translation_hessian_example():
    X = np.array([[0.0, 1.0, 2.0, 3.0], [1.0, -1.0, 2.0, 0.5]])
    corr = Correspondence([1, 0, 3, 2])
    a, b = 0.7, -1.3
    v = TangentVector(np.zeros((1, 2, 2)), np.array([a, b]))
    Hv = rhess_apply(PointCloud(X), ReflectionTransform.identity(2), corr, v)
    np.testing.assert_allclose(Hv.eta_t, [0.0, 32 * b], atol=1e-12)


@given(seeds, st.integers(2, 6))
def test_hessian_is_symmetric(seed, d):
    rng = np.random.default_rng(seed)
    cloud, xf, corr = random_instance(rng, d)
    u, v = TangentVector.random(rng, d), TangentVector.random(rng, d)
    a = metric(xf, u, rhess_apply(cloud, xf, corr, v))
    b = metric(xf, v, rhess_apply(cloud, xf, corr, u))
    assert rel_err(a, b) < 1e-8


@given(st.floats(-3.0, 3.0), st.floats(0.05, 2.0), st.tuples(*[st.floats(-5, 5)] * 3))
def test_two_dimensional_quadratic_form_closed_form(phi, theta, a):
    a1, a2, a3 = a
    A = np.array([[a1, a2], [a2, a3]])
    xf = transform_from_angles([phi], np.zeros(2))
    ws = workspace_from_moment(xf, A, np.zeros(2), 5)
    v = angle_tangent(theta)
    q = metric(xf, v, rhess_apply(None, xf, None, v, ws))
    closed = 8 * a2 * theta**2 * np.sin(2 * phi) + 4 * theta**2 * np.cos(2 * phi) * (a1 - a3)
    assert q == pytest.approx(closed, abs=1e-8 * max(1.0, np.abs(A).max() * theta**2))


def test_local_convexity_near_the_optimal_axis():
    cloud, _, corr = symmetric_instance(2, h=50, seed=8, angles=[90.0])
    for offset in np.linspace(-8.0, 8.0, 33):
        xf = transform_from_angles([np.deg2rad(90.0 + offset)], np.zeros(2))
        v = angle_tangent(1.0)
        assert metric(xf, v, rhess_apply(cloud, xf, corr, v)) > 0


def test_retract_examples():
    xf = ReflectionTransform.identity(2)
    v = angle_tangent(0.8)
    assert retract(xf, v, 0.0) is xf
    s = 1e-3
    R = retract(xf, v, s).rotations[0]
    got = np.arctan2(R[1, 0], R[0, 0])
    ref = expm(s * v.omegas[0])
    assert abs(got - np.arctan2(ref[1, 0], ref[0, 0])) < 1e-6
    drift = np.eye(3) + 1e-8 * np.random.default_rng(0).standard_normal((3, 3))
    bent = ReflectionTransform(np.stack([drift, np.eye(3)]), np.zeros(3), check=False)
    out = retract(bent, TangentVector.zeros(3), 1.0)
    for R in out.rotations:
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_geodesic_and_retraction_agree_to_first_order():
    rng = np.random.default_rng(9)
    xf = random_transform(rng, 3)
    v = TangentVector.random(rng, 3)
    a, b = retract(xf, v, 1e-4), geodesic(xf, v, 1e-4)
    assert np.abs(a.rotations - b.rotations).max() < 1e-7


def test_critical_rotation_examples():
    np.testing.assert_array_equal(critical_rotation(np.diag([3.0, 1.0])).rotation, np.eye(2))
    crit = critical_rotation(np.diag([1.0, 3.0]))
    T = crit.rotation
    assert np.linalg.det(T) == pytest.approx(1.0)
    np.testing.assert_allclose(np.abs(T), [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(crit.eigenvalues, [3.0, 1.0])
    assert critical_rotation(np.eye(3)).ambiguous


@given(seeds, st.integers(2, 8))
def test_critical_rotation_diagonalises_in_descending_order(seed, d):
    M = np.random.default_rng(seed).standard_normal((d, d))
    A = M + M.T
    T = critical_rotation(A).rotation
    D = T.T @ A @ T
    assert np.abs(D - np.diag(np.diag(D))).max() < 1e-10 * max(1.0, np.abs(A).max())
    assert np.all(np.diff(np.diag(D)) <= 1e-10)
    assert np.linalg.det(T) == pytest.approx(1.0)


def test_workspace_moment_is_symmetric():
    rng = np.random.default_rng(11)
    cloud, xf, corr = random_instance(rng, 5)
    A = workspace(cloud, xf, corr).A
    assert np.linalg.norm(A - A.T) <= 1e-10
