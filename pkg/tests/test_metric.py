import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rmetric.datasets import hourglass_profile, sample_flat_strip, sample_hourglass
from rmetric.laplacian import build_laplacian
from rmetric.metric import (
    DualMetricField,
    MetricField,
    RankDeficientError,
    distortion_stats,
    dual_metric,
    learn_metric,
    metric_from_dual,
    pseudo_inverse,
)
from rmetric.neighbors import heat_kernel_graph


def _lap(rng, n=150, r=2, eps=0.03):
    X = rng.uniform(size=(n, r))
    return X, build_laplacian(heat_kernel_graph(X, eps), eps)


def _covariance_oracle(Lop, F):
    """h~(p) = 1/(2 c eps) sum_k P_pk (f_k - f_p)(f_k - f_p)'."""
    P = Lop.transition().toarray()
    out = np.empty((F.shape[0], F.shape[1], F.shape[1]))
    for p in range(F.shape[0]):
        D = F - F[p]
        out[p] = (P[p][:, None] * D).T @ D
    return out / (2 * Lop.c * Lop.epsilon)


# dual metric


def test_dual_metric_covariance_oracle(rng):
    X, Lop = _lap(rng)
    F = np.column_stack([X, np.sin(3 * X[:, 0]), X[:, 1] ** 2])
    np.testing.assert_allclose(dual_metric(Lop, F).values, _covariance_oracle(Lop, F),
                               rtol=1e-9, atol=1e-9)


def test_dual_metric_exactly_symmetric(rng):
    X, Lop = _lap(rng)
    H = dual_metric(Lop, rng.normal(size=(150, 4))).values
    assert np.array_equal(H, np.swapaxes(H, 1, 2))


def test_dual_metric_constant_column(rng):
    X, Lop = _lap(rng)
    F = np.column_stack([X[:, 0], np.full(150, 3.7), X[:, 1]])
    H = dual_metric(Lop, F).values
    assert np.abs(H[:, 1, :]).max() <= 1e-9 and np.abs(H[:, :, 1]).max() <= 1e-9


def test_dual_metric_scaling(rng):
    X, Lop = _lap(rng)
    F = rng.normal(size=(150, 3))
    a = dual_metric(Lop, F).values
    b = dual_metric(Lop, 2.5 * F).values
    np.testing.assert_allclose(b, 6.25 * a, rtol=1e-12, atol=1e-12)


def test_dual_metric_congruence(rng):
    X, Lop = _lap(rng)
    F = rng.normal(size=(150, 3))
    A = rng.normal(size=(3, 3))
    h = dual_metric(Lop, F).values
    h2 = dual_metric(Lop, F @ A.T).values
    np.testing.assert_allclose(h2, A @ h @ A.T, rtol=0, atol=1e-10 * np.abs(h2).max())


def test_dual_metric_shape_mismatch(rng):
    X, Lop = _lap(rng)
    with pytest.raises(ValueError, match="rows"):
        dual_metric(Lop, np.zeros((10, 2)))


def test_dual_metric_flat_strip_converges():
    eps = 0.005
    errs = []
    for n in (2000, 4000):
        P = sample_flat_strip(n, seed=1, width=1.0, length=1.0, r=2)
        Lop = build_laplacian(heat_kernel_graph(P, eps), eps)
        H = dual_metric(Lop, P.points).values
        m = 3 * np.sqrt(eps)
        inner = np.all((P.points > m) & (P.points < 1 - m), axis=1)
        errs.append(np.linalg.norm(H[inner] - np.eye(2), axis=(1, 2)).mean())
    assert errs[0] <= 0.15
    assert errs[1] < errs[0]


# pseudoinverse


def test_pinv_diagonal():
    np.testing.assert_allclose(pseudo_inverse(np.diag([4.0, 1.0, 1e-13]), 2),
                               np.diag([0.25, 1.0, 0.0]), atol=1e-9)


def test_pinv_identity():
    for s in (1, 2, 5):
        np.testing.assert_allclose(pseudo_inverse(np.eye(s), s), np.eye(s), atol=1e-12)


def test_pinv_random_spd(rng):
    for _ in range(20):
        B = rng.normal(size=(5, 5))
        A = B @ B.T + 0.1 * np.eye(5)
        np.testing.assert_allclose(pseudo_inverse(A, 5) @ A, np.eye(5), atol=1e-9)


def test_pinv_selects_algebraically_largest():
    # a negative eigenvalue of larger magnitude is never selected
    H = np.diag([2.0, -5.0, 0.5])
    np.testing.assert_allclose(pseudo_inverse(H, 2), np.diag([0.5, 0.0, 2.0]), atol=1e-12)


def test_pinv_rank_deficient():
    with pytest.raises(RankDeficientError, match="rank deficient below requested d=2"):
        pseudo_inverse(np.diag([1.0, 1e-14, 0.0]), 2)
    with pytest.raises(RankDeficientError):
        pseudo_inverse(np.diag([1.0, -1.0]), 2)
    with pytest.raises(ValueError):
        pseudo_inverse(np.eye(2), 3)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)), st.integers(1, 4))
def test_pinv_twice_is_identity_on_top_space(M, d):
    A = M @ M.T + np.diag([4.0, 3.0, 2.0, 1.0])
    h = pseudo_inverse(A, d)
    ev, U = np.linalg.eigh(A)
    Ud = U[:, ::-1][:, :d]
    back = pseudo_inverse(h, d)
    np.testing.assert_allclose(Ud.T @ back @ Ud, Ud.T @ A @ Ud, rtol=1e-9, atol=1e-9)
    assert np.allclose(h, h.T, atol=1e-12)
    assert np.linalg.eigvalsh(h).min() >= -1e-12


def test_metric_field_structure(rng):
    B = rng.normal(size=(30, 3, 3))
    dual = DualMetricField(B @ np.swapaxes(B, 1, 2) + 0.1 * np.eye(3))
    M = metric_from_dual(dual, 2)
    assert np.all(M.eigenvalues[:, 2] == 0.0)
    assert np.all(M.eigenvalues[:, :2] > 0)
    UtU = np.einsum("nki,nkj->nij", M.eigenvectors, M.eigenvectors)
    np.testing.assert_allclose(UtU, np.broadcast_to(np.eye(3), UtU.shape), atol=1e-10)
    h = M.h
    assert np.array_equal(h, np.swapaxes(h, 1, 2))
    np.testing.assert_array_equal(np.linalg.matrix_rank(h, tol=1e-10), 2)
    for p in range(30):
        np.testing.assert_allclose(h[p], pseudo_inverse(dual.values[p], 2), atol=1e-12)


def test_metric_jsonl_round_trip(tmp_path, rng):
    B = rng.normal(size=(8, 3, 3))
    M = metric_from_dual(DualMetricField(B @ np.swapaxes(B, 1, 2) + np.eye(3)), 2)
    M.write_jsonl(tmp_path / "m.jsonl")
    back = MetricField.read_jsonl(tmp_path / "m.jsonl")
    assert back.d == 2
    assert np.array_equal(back.eigenvalues, M.eigenvalues)
    assert np.array_equal(back.eigenvectors, M.eigenvectors)


# pipeline


def test_learn_metric_flat_strip_identity():
    P = sample_flat_strip(2000, seed=0, width=1.0, length=1.0, r=2)
    res = learn_metric(P, 0.005, 2, 2, embedder="identity")
    m = 3 * np.sqrt(0.005)
    inner = np.all((P.points > m) & (P.points < 1 - m), axis=1)
    assert np.linalg.norm(res.metric.h[inner] - np.eye(2), axis=(1, 2)).mean() <= 0.2


def test_learn_metric_deterministic():
    P = sample_hourglass(400, seed=3)
    a = learn_metric(P, 0.1, 3, 2)
    b = learn_metric(P, 0.1, 3, 2)
    assert np.array_equal(a.metric.h, b.metric.h)
    assert np.array_equal(a.embedding.coords, b.embedding.coords)


def test_learn_metric_bad_dims():
    with pytest.raises(ValueError):
        learn_metric(np.zeros((5, 2)), 0.1, 2, 3)
    with pytest.raises(ValueError, match="s == r"):
        learn_metric(np.random.default_rng(0).normal(size=(30, 3)), 1.0, 2, 2, embedder="identity")


@pytest.fixture(scope="module")
def hourglass_dm():
    P = sample_hourglass(1000, seed=0)
    return P, learn_metric(P, 0.06, 3, 2)


def test_hourglass_normals(hourglass_dm):
    # zero eigenvector of h versus the normal of the embedded surface;
    # the embedded tangent plane comes from a local linear fit of F on (z, theta)
    P, res = hourglass_dm
    z, th = P.labels.T
    F = res.embedding.coords
    A = res.graph.adjacency()
    normals = np.empty((P.n, 3))
    for i in range(P.n):
        nb = np.append(A[i].indices, i)
        dth = (th[nb] - th[i] + np.pi) % (2 * np.pi) - np.pi
        X = np.column_stack([z[nb] - z[i], dth, np.ones(nb.size)])
        J = np.linalg.lstsq(X, F[nb], rcond=None)[0][:2]
        normals[i] = np.cross(J[0], J[1])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    assert np.all(np.linalg.matrix_rank(res.metric.h, tol=1e-8 * np.abs(res.metric.h).max()) == 2)
    cos = np.abs(np.sum(res.metric.eigenvectors[:, :, 2] * normals, axis=1))
    assert np.mean(cos >= np.cos(np.radians(15))) >= 0.9


def test_hourglass_identity_normals_analytic():
    P = sample_hourglass(1000, seed=1)
    res = learn_metric(P, 0.06, 3, 2, embedder="identity")
    z, th = P.labels.T
    _, drho = hourglass_profile(z)
    n = np.column_stack([np.cos(th), np.sin(th), -drho])
    n /= np.linalg.norm(n, axis=1)[:, None]
    cos = np.abs(np.sum(res.metric.eigenvectors[:, :, 2] * n, axis=1))
    assert np.mean(cos >= np.cos(np.radians(15))) >= 0.9


def test_hourglass_caps_more_anisotropic(hourglass_dm):
    P, res = hourglass_dm
    z = P.labels[:, 0]
    an = distortion_stats(res.metric).anisotropy
    assert np.mean(an[np.abs(z) > 0.8]) > np.mean(an[np.abs(z) < 0.2])


def test_rank_gap(hourglass_dm):
    _, res = hourglass_dm
    lam = res.dual.eigenvalues()
    assert np.median(lam[:, 1] / np.abs(lam[:, 2])) >= 10


# distortion


def test_distortion_identity_and_known():
    U = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
    M = MetricField(np.tile([1.0, 1.0, 0.0], (4, 1)), U, 2)
    st_ = distortion_stats(M)
    assert np.all(st_.deviation == 0) and np.all(st_.anisotropy == 1)
    M2 = MetricField(np.array([[4.0, 1.0, 0.0]]), np.eye(3)[None], 2)
    st2 = distortion_stats(M2)
    assert st2.anisotropy[0] == 4.0 and st2.deviation[0] == 3.0
    summary = st2.summary()
    assert summary["anisotropy"]["max"] == 4.0 and summary["n"] == 1


def test_negative_mass():
    d = DualMetricField(np.array([np.diag([3.0, -1.0]), np.eye(2)]))
    np.testing.assert_allclose(d.negative_mass(), [0.25, 0.0])
