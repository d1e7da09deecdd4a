import numpy as np
import pytest
import scipy.sparse as sp

from conftest import brute_heat_kernel
from rmetric.datasets import sample_flat_strip
from rmetric.laplacian import HEAT_KERNEL_C, IsolatedNodeError, apply, build_laplacian, write_coo
from rmetric.neighbors import heat_kernel_graph


def _random_graph(rng, n):
    W = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.3)
    W = np.triu(W, 1)
    W = W + W.T + np.diag(rng.uniform(0.5, 1.5, n))
    return W


def test_constant_annihilated(rng):
    X = rng.uniform(size=(300, 2))
    for lam in (0.0, 0.5, 1.0):
        Lop = build_laplacian(heat_kernel_graph(X, 0.01), 0.01, lam)
        assert np.abs(Lop.apply(np.ones(300))).max() <= 1e-9


def test_two_point_closed_form():
    eps, a = 0.3, 0.4
    W = np.array([[1.0, a], [a, 1.0]])
    Lop = build_laplacian(W, eps, lam=1.0)
    expected = a / (1 + a) / (HEAT_KERNEL_C * eps) * np.array([[-1.0, 1.0], [1.0, -1.0]])
    np.testing.assert_allclose(Lop.matrix.toarray(), expected, rtol=1e-14, atol=1e-14)


def test_lambda_zero_is_random_walk(rng):
    for _ in range(50):
        n = int(rng.integers(3, 30))
        W = _random_graph(rng, n)
        eps = float(rng.uniform(0.01, 2))
        Lop = build_laplacian(W, eps, lam=0.0)
        direct = (np.diag(1 / W.sum(axis=1)) @ W - np.eye(n)) / (0.25 * eps)
        np.testing.assert_allclose(Lop.matrix.toarray(), direct, rtol=0, atol=1e-12 * max(1, np.abs(direct).max()))


def test_dense_formula_general_lambda(rng):
    W = _random_graph(rng, 25)
    for lam in (0.3, 1.0):
        D = np.diag(W.sum(axis=1) ** -lam)
        Wt = D @ W @ D
        direct = (np.diag(1 / Wt.sum(axis=1)) @ Wt - np.eye(25)) / (0.25 * 0.7)
        Lop = build_laplacian(sp.csr_matrix(W), 0.7, lam)
        np.testing.assert_allclose(Lop.matrix.toarray(), direct, rtol=1e-12, atol=1e-12)


def test_transition_rows_and_symmetric_conjugate(rng):
    X = rng.uniform(size=(200, 2))
    Lop = build_laplacian(heat_kernel_graph(X, 0.01), 0.01)
    P = Lop.transition()
    np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    S = Lop.symmetric_conjugate().toarray()
    assert np.array_equal(S, S.T)
    ev = np.linalg.eigvals(P.toarray())
    assert np.abs(ev.imag).max() < 1e-8
    np.testing.assert_allclose(np.sort(ev.real), np.linalg.eigvalsh(S), atol=1e-10)


def test_pattern_within_graph_plus_diagonal(rng):
    X = rng.uniform(size=(100, 2))
    G = heat_kernel_graph(X, 0.005, self_loops=False)
    Lop = build_laplacian(G, 0.005)
    allowed = (G.matrix + sp.identity(100)) != 0
    assert (Lop.matrix.astype(bool) > allowed).nnz == 0


def test_isolated_node_named():
    X = np.array([[0.0, 0.0], [0.01, 0.0], [5.0, 5.0]])
    G = heat_kernel_graph(X, 0.01, self_loops=False)
    with pytest.raises(IsolatedNodeError, match="node 2.*larger epsilon"):
        build_laplacian(G, 0.01)


def test_bad_arguments():
    W = np.eye(2)
    with pytest.raises(ValueError):
        build_laplacian(W, 0.0)
    with pytest.raises(ValueError):
        build_laplacian(W, 1.0, lam=1.5)
    with pytest.raises(ValueError):
        build_laplacian(np.array([[1.0, -0.5], [-0.5, 1.0]]), 1.0)


def test_apply(rng):
    W = _random_graph(rng, 100)
    Lop = build_laplacian(W, 0.5)
    dense = Lop.matrix.toarray()
    v = rng.normal(size=100)
    np.testing.assert_allclose(apply(Lop, v), dense @ v, rtol=1e-12, atol=1e-12)
    e = np.zeros(100)
    e[7] = 1.0
    np.testing.assert_array_equal(apply(Lop, e), dense[:, 7])
    np.testing.assert_allclose(apply(Lop, np.ones(100)), 0.0, atol=1e-9)
    with pytest.raises(ValueError):
        apply(Lop, np.ones(99))


def test_brute_force_pipeline(rng):
    X = rng.uniform(size=(120, 3))
    eps = 0.05
    W = brute_heat_kernel(X, eps)
    D = W.sum(axis=1)
    Wt = W / np.outer(D, D)
    direct = (Wt / Wt.sum(axis=1)[:, None] - np.eye(120)) / (0.25 * eps)
    Lop = build_laplacian(heat_kernel_graph(X, eps), eps)
    np.testing.assert_allclose(Lop.matrix.toarray(), direct, rtol=1e-11, atol=1e-11)


def test_flat_strip_coordinates_harmonic():
    # interior kernel-average shift of a linear function, in bandwidth units,
    # is small and shrinks as n grows at fixed epsilon
    eps = 0.005
    margin = 3 * np.sqrt(eps)
    res = []
    for n in (2000, 4000, 8000):
        P = sample_flat_strip(n, seed=0, width=1.0, length=1.0, r=2)
        Lop = build_laplacian(heat_kernel_graph(P, eps), eps)
        x = P.points
        inner = np.all((x > margin) & (x < 1 - margin), axis=1)
        shift = np.abs(Lop.apply(x)[inner]) * Lop.c * eps / np.sqrt(eps)
        res.append(shift.mean())
    assert res[0] <= 0.1
    assert res[0] > res[1] > res[2]


def test_write_coo(tmp_path):
    Lop = build_laplacian(np.array([[1.0, 0.5], [0.5, 1.0]]), 1.0)
    write_coo(Lop, tmp_path / "L.txt")
    rows = [line.split(",") for line in (tmp_path / "L.txt").read_text().splitlines()]
    assert [(int(i), int(j)) for i, j, _ in rows] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    vals = np.array([float(v) for *_, v in rows])
    np.testing.assert_array_equal(vals, Lop.matrix.toarray().ravel())
