import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from reshape_ot.exceptions import NumericalError
from reshape_ot.geometry import (
    DisplacementSet,
    EuclideanMetric,
    PointCloud,
    SecondMoment,
    build_reshaped_metric,
    compute_second_moment,
    cost_matrix,
    eta_from_alpha,
    mahalanobis_distance,
)


def random_displacements(rng, m, n, d):
    g = rng.rand(m, n)
    g /= g.sum()
    return DisplacementSet(rng.randn(m, d), rng.randn(n, d), g)


# ---------------------------------------------------------------------------
# PointCloud / DisplacementSet construction
# ---------------------------------------------------------------------------


def test_point_cloud_normalizes_weights():
    cloud = PointCloud(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([2.0, 6.0]))
    assert abs(cloud.weights.sum() - 1.0) < 1e-12
    assert_allclose(cloud.weights, [0.25, 0.75])


def test_point_cloud_rejects_bad_input():
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.inf, 0.0]]))
    with pytest.raises(ValueError):
        PointCloud(np.array([[1.0, 0.0]]), np.array([-1.0]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 2)))


def test_displacement_set_normalizes_mass():
    d = DisplacementSet(
        np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), np.array([[4.0]])
    )
    assert abs(d.coupling.sum() - 1.0) < 1e-12


def test_displacement_set_rejects_mismatch():
    with pytest.raises(ValueError):
        DisplacementSet(np.ones((2, 2)), np.ones((2, 3)), np.eye(2) / 2)
    with pytest.raises(ValueError):
        DisplacementSet(np.ones((2, 2)), np.ones((2, 2)), np.eye(3) / 3)
    with pytest.raises(ValueError):
        DisplacementSet(np.ones((1, 2)), np.ones((1, 2)), np.array([[-1.0]]))


# ---------------------------------------------------------------------------
# compute_second_moment
# ---------------------------------------------------------------------------


def test_second_moment_single_pair():
    d = DisplacementSet(
        np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), np.array([[1.0]])
    )
    sm = compute_second_moment(d)
    assert_allclose(sm.sigma, [[1.0, 0.0], [0.0, 0.0]])
    assert sm.trace == pytest.approx(1.0)


def test_second_moment_symmetric_pair():
    d = DisplacementSet.paired(
        np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 0.0], [0.0, 0.0]])
    )
    sm = compute_second_moment(d)
    assert_allclose(sm.sigma, [[0.5, 0.0], [0.0, 0.5]])


def test_second_moment_matches_loop_oracle():
    rng = np.random.RandomState(7)
    perm = rng.permutation(4)
    coupling = np.zeros((4, 4))
    coupling[np.arange(4), perm] = 0.25
    x, y = rng.randn(4, 3), rng.randn(4, 3)
    d = DisplacementSet(x, y, coupling)
    expected = np.zeros((3, 3))
    for k in range(4):
        for l in range(4):
            diff = x[k] - y[l]
            expected += coupling[k, l] * np.outer(diff, diff)
    assert_allclose(compute_second_moment(d).sigma, expected, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_second_moment_is_psd(seed):
    rng = np.random.RandomState(seed)
    d = random_displacements(rng, rng.randint(1, 6), rng.randint(1, 6), rng.randint(1, 5))
    sm = compute_second_moment(d)
    min_eig = np.linalg.eigvalsh(sm.sigma).min()
    assert min_eig >= -1e-10 * max(sm.trace, 1.0)
    assert np.abs(sm.sigma - sm.sigma.T).max() <= 1e-12


# ---------------------------------------------------------------------------
# eta_from_alpha
# ---------------------------------------------------------------------------


def test_eta_from_alpha_direct():
    sm = SecondMoment(np.diag([1.0, 1.0]))
    assert eta_from_alpha(sm, 4.0) == pytest.approx(2.0)


def test_eta_from_alpha_degenerate_trace():
    sm = SecondMoment(np.zeros((2, 2)))
    assert eta_from_alpha(sm, 100.0) == 0.0


def test_eta_from_alpha_unit_trace():
    # single unit displacement has trace 1, so eta equals alpha
    d = DisplacementSet(
        np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), np.array([[1.0]])
    )
    sm = compute_second_moment(d)
    assert eta_from_alpha(sm, 1e2) == pytest.approx(100.0)


def test_eta_from_alpha_rejects_negative():
    sm = SecondMoment(np.eye(2))
    with pytest.raises(ValueError):
        eta_from_alpha(sm, -1.0)


# ---------------------------------------------------------------------------
# build_reshaped_metric / mahalanobis_distance
# ---------------------------------------------------------------------------


def test_zero_eta_gives_identity_precision():
    sm = SecondMoment(np.array([[2.0, 0.3], [0.3, 1.0]]))
    metric = build_reshaped_metric(sm, 0.0)
    assert_allclose(metric.precision, np.eye(2))
    assert metric.distance([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5.0)


def test_diagonal_sigma_inverse():
    sm = SecondMoment(np.array([[1.0, 0.0], [0.0, 0.0]]))
    metric = build_reshaped_metric(sm, 1.0)
    assert_allclose(metric.precision, [[0.5, 0.0], [0.0, 1.0]])
    assert metric.distance([1.0, 0.0], [0.0, 0.0]) == pytest.approx(1 / np.sqrt(2))


def test_precision_eigenvalues_match_sigma_spectrum():
    rng = np.random.RandomState(0)
    a = rng.randn(4, 4)
    sigma = a @ a.T
    sm = SecondMoment(sigma)
    eta = 3.0
    metric = build_reshaped_metric(sm, eta)
    expected = np.sort(1.0 / (1.0 + eta * np.linalg.eigvalsh(sigma)))
    got = np.sort(np.linalg.eigvalsh(metric.precision))
    assert_allclose(got, expected, rtol=1e-9)
    assert got.min() > 0.0 and got.max() <= 1.0 + 1e-12


def test_whitening_reproduces_precision():
    rng = np.random.RandomState(1)
    a = rng.randn(3, 3)
    metric = build_reshaped_metric(SecondMoment(a @ a.T), 10.0)
    assert np.abs(metric.whitening.T @ metric.whitening - metric.precision).max() < 1e-10


def test_kernel_direction_keeps_euclidean_length():
    sm = SecondMoment(np.array([[1.0, 0.0], [0.0, 0.0]]))
    metric = build_reshaped_metric(sm, 1.0)
    assert metric.distance([0.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0)


def test_distance_matches_quadratic_form_oracle():
    rng = np.random.RandomState(5)
    a = rng.randn(4, 4)
    sm = SecondMoment(a @ a.T)
    metric = build_reshaped_metric(sm, 2.5)
    x, y = rng.randn(4), rng.randn(4)
    diff = x - y
    expected = np.sqrt(diff @ np.linalg.inv(np.eye(4) + 2.5 * sm.sigma) @ diff)
    assert metric.distance(x, y) == pytest.approx(expected, rel=1e-9)
    assert mahalanobis_distance(metric, x, y) == metric.distance(x, y)


def test_distance_equals_whitened_norm():
    rng = np.random.RandomState(9)
    a = rng.randn(3, 3)
    metric = build_reshaped_metric(SecondMoment(a @ a.T), 7.0)
    x, y = rng.randn(3), rng.randn(3)
    whitened = np.linalg.norm(metric.whitening @ (x - y))
    assert abs(metric.distance(x, y) - whitened) < 1e-10


def test_dimension_mismatch_raises():
    metric = build_reshaped_metric(SecondMoment(np.eye(2)), 1.0)
    with pytest.raises(ValueError):
        metric.distance([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        metric.distance([1.0, 2.0], [0.0, 0.0, 0.0])


def test_spd_factorization_failure_raises_numerical_error():
    # a second moment that is not PSD at all cannot be repaired by jitter
    sm = SecondMoment(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(NumericalError):
        build_reshaped_metric(sm, 10.0)


# ---------------------------------------------------------------------------
# cost_matrix
# ---------------------------------------------------------------------------


def test_cost_matrix_single_point():
    cloud = PointCloud(np.array([[1.0, 2.0]]))
    assert_allclose(cost_matrix(EuclideanMetric(), cloud, cloud), [[0.0]])


def test_cost_matrix_by_hand():
    src = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0]]))
    tgt = PointCloud(np.array([[0.0, 0.0], [0.0, 1.0]]))
    assert_allclose(cost_matrix(EuclideanMetric(), src, tgt), [[0.0, 1.0], [1.0, 2.0]])


def test_cost_matrix_matches_distance_oracle():
    rng = np.random.RandomState(11)
    a = rng.randn(3, 3)
    metric = build_reshaped_metric(SecondMoment(a @ a.T), 4.0)
    src = PointCloud(rng.randn(5, 3))
    tgt = PointCloud(rng.randn(6, 3))
    costs = cost_matrix(metric, src, tgt)
    for i in range(5):
        for j in range(6):
            expected = metric.distance(src.points[i], tgt.points[j]) ** 2
            assert costs[i, j] == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert costs.min() >= 0.0


def test_cost_matrix_dim_mismatch():
    src = PointCloud(np.zeros((2, 2)))
    tgt = PointCloud(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        cost_matrix(EuclideanMetric(), src, tgt)


# ---------------------------------------------------------------------------
# metric properties
# ---------------------------------------------------------------------------


@given(st.integers(0, 2**31 - 1), st.sampled_from([0.0, 0.1, 1.0, 10.0, 100.0]))
@settings(max_examples=40, deadline=None)
def test_contraction_property(seed, eta):
    rng = np.random.RandomState(seed)
    d = rng.randint(1, 6)
    disp = random_displacements(rng, rng.randint(1, 5), rng.randint(1, 5), d)
    metric = build_reshaped_metric(compute_second_moment(disp), eta)
    x, y = rng.randn(d), rng.randn(d)
    euclid = np.linalg.norm(x - y)
    assert metric.distance(x, y) <= euclid * (1 + 1e-12) + 1e-12
    if eta == 0.0:
        assert metric.distance(x, y) == pytest.approx(euclid, rel=1e-12, abs=1e-12)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_metric_axioms(seed):
    rng = np.random.RandomState(seed)
    d = rng.randint(1, 5)
    disp = random_displacements(rng, rng.randint(1, 5), rng.randint(1, 5), d)
    metric = build_reshaped_metric(compute_second_moment(disp), float(rng.rand() * 10))
    x, y, z = rng.randn(d), rng.randn(d), rng.randn(d)
    assert metric.distance(x, x) == pytest.approx(0.0, abs=1e-12)
    assert metric.distance(x, y) == pytest.approx(metric.distance(y, x), rel=1e-12)
    dxz = metric.distance(x, z)
    assert dxz <= metric.distance(x, y) + metric.distance(y, z) + 1e-10


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_whitening_equivalence_for_cost_matrices(seed):
    rng = np.random.RandomState(seed)
    d = rng.randint(1, 5)
    disp = random_displacements(rng, rng.randint(1, 5), rng.randint(1, 5), d)
    metric = build_reshaped_metric(compute_second_moment(disp), float(rng.rand() * 20))
    src = PointCloud(rng.randn(4, d))
    tgt = PointCloud(rng.randn(5, d))
    reshaped = cost_matrix(metric, src, tgt)
    whitened = cost_matrix(
        EuclideanMetric(),
        PointCloud(metric.transform(src.points)),
        PointCloud(metric.transform(tgt.points)),
    )
    assert np.abs(reshaped - whitened).max() < 1e-9


def test_eigen_direction_shrink_factor():
    rng = np.random.RandomState(21)
    a = rng.randn(4, 4)
    sigma = a @ a.T
    sm = SecondMoment(sigma)
    eta = 5.0
    metric = build_reshaped_metric(sm, eta)
    vals, vecs = np.linalg.eigh(sigma)
    x = rng.randn(4)
    for lam, vec in zip(vals, vecs.T):
        shrink = metric.distance(x + vec, x)
        assert shrink == pytest.approx(np.sqrt(1.0 / (1.0 + eta * lam)), rel=1e-9)


def test_metric_is_immutable():
    metric = build_reshaped_metric(SecondMoment(np.eye(2)), 1.0)
    with pytest.raises(ValueError):
        metric.precision[0, 0] = 5.0


def test_clamp_cost_matrix_error_path():
    from reshape_ot.geometry import clamp_cost_matrix

    costs = np.array([[1.0, -1e-10]])
    assert clamp_cost_matrix(costs).min() == 0.0
    with pytest.raises(NumericalError):
        clamp_cost_matrix(np.array([[1.0, -1e-3]]))
