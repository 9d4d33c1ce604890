import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dvne.gcn import (DimensionMismatch, GCNConfig, GraphSpectrum, adjacency_matrix, gcn_backward, gcn_forward,
                      graph_fourier, init_gcn, inverse_graph_fourier, load_checkpoint, normalized_laplacian,
                      save_checkpoint, spectral_conv)


def random_adjacency(rng, n, p=0.4):
    g = nx.gnp_random_graph(n, p, seed=int(rng.integers(1 << 30)))
    return nx.to_numpy_array(g, nodelist=range(n)), g


def path4():
    return nx.to_numpy_array(nx.path_graph(4))


def test_laplacian_matches_networkx():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A, g = random_adjacency(rng, 9, 0.5)
        if any(d == 0 for _, d in g.degree()):
            continue
        ref = nx.normalized_laplacian_matrix(g, nodelist=range(9)).toarray()
        assert np.allclose(normalized_laplacian(A), ref)


def test_isolated_node_keeps_unit_diagonal():
    L = normalized_laplacian(np.zeros((3, 3)))
    assert np.array_equal(L, np.eye(3))


def test_adjacency_from_substrate(square):
    A = adjacency_matrix(square)
    assert A.sum() == 2 * square.n_links and (A == A.T).all()


@given(st.integers(2, 12), st.integers(0, 10**6))
def test_spectrum_invariants(n, seed):
    A, _ = random_adjacency(np.random.default_rng(seed), n)
    s = GraphSpectrum.from_adjacency(A)
    assert np.allclose(s.laplacian, s.laplacian.T)
    assert s.eigenvalues.min() > -1e-9
    assert np.allclose(s.eigenvectors.T @ s.eigenvectors, np.eye(n))
    assert np.allclose(s.eigenvectors @ np.diag(s.eigenvalues) @ s.eigenvectors.T, s.laplacian)


def test_eigenvector_maps_to_unit_basis():
    s = GraphSpectrum.from_adjacency(path4())
    e = graph_fourier(s.eigenvectors[:, 1], s.eigenvectors)
    assert np.allclose(e, [0, 1, 0, 0], atol=1e-12)


@given(st.integers(0, 10**6))
def test_fourier_round_trip(seed):
    rng = np.random.default_rng(seed)
    A, _ = random_adjacency(rng, 7)
    U = GraphSpectrum.from_adjacency(A).eigenvectors
    f = rng.normal(size=(7, 3))
    assert np.abs(inverse_graph_fourier(graph_fourier(f, U), U) - f).max() <= 1e-9


def test_constant_signal_on_path_combinatorial_basis():
    A = path4()
    lam, U = np.linalg.eigh(np.diag(A.sum(1)) - A)
    f_hat = graph_fourier(np.ones(4), U)
    assert lam[0] == pytest.approx(0, abs=1e-12)
    assert abs(f_hat[0]) == pytest.approx(2.0)
    assert np.allclose(f_hat[1:], 0, atol=1e-12)


def test_sqrt_degree_signal_on_path_normalized_basis():
    # under the normalized Laplacian the zero mode is proportional to sqrt(degree)
    A = path4()
    s = GraphSpectrum.from_adjacency(A)
    f = np.sqrt(A.sum(1))
    f_hat = graph_fourier(f, s.eigenvectors)
    assert abs(f_hat[0]) == pytest.approx(np.linalg.norm(f))
    assert np.allclose(f_hat[1:], 0, atol=1e-12)
    # the plain constant still has its largest coefficient on that mode
    ones_hat = graph_fourier(np.ones(4), s.eigenvectors)
    assert np.argmax(np.abs(ones_hat)) == 0


def test_dimension_mismatch():
    U = np.eye(3)
    with pytest.raises(DimensionMismatch):
        graph_fourier(np.ones(4), U)
    with pytest.raises(DimensionMismatch):
        inverse_graph_fourier(np.ones(2), U)
    with pytest.raises(DimensionMismatch):
        spectral_conv(np.ones(2), [1.0], GraphSpectrum.from_adjacency(path4()))


def test_low_order_filters():
    s = GraphSpectrum.from_adjacency(path4())
    f = np.arange(4.0)
    assert np.allclose(spectral_conv(f, [2.5], s), 2.5 * f)
    assert np.allclose(spectral_conv(f, [0.0, 1.0], s), s.laplacian @ f)
    with pytest.raises(ValueError):
        spectral_conv(f, [1.0], s, method="bogus")


def test_poly_and_eigen_agree_on_eight_nodes():
    rng = np.random.default_rng(8)
    A, _ = random_adjacency(rng, 8, 0.5)
    s = GraphSpectrum.from_adjacency(A)
    f = rng.normal(size=(8, 2))
    coeffs = rng.normal(size=4)
    a, b = spectral_conv(f, coeffs, s), spectral_conv(f, coeffs, s, method="eigen")
    assert np.abs(a - b).max() <= 1e-6 * max(1.0, np.abs(b).max())


def test_single_layer_identity_mix():
    A = path4()
    L = normalized_laplacian(A)
    X = np.array([[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0], [2.0, 2.0]])
    params = {"gcn.0.alpha": np.array([0.7]), "gcn.0.W": np.eye(2), "gcn.0.b": np.zeros(2)}
    H, _ = gcn_forward(params, X, L, 1)
    assert np.allclose(H, np.maximum(0.7 * X, 0))


def test_zero_features_give_zero_preactivation():
    L = normalized_laplacian(path4())
    params = init_gcn(GCNConfig(in_dim=3, hidden=5), np.random.default_rng(0))
    _, cache = gcn_forward(params, np.zeros((4, 3)), L, 2)
    assert np.allclose(cache[0][2], 0)


@given(st.integers(0, 10**6))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    A, _ = random_adjacency(rng, 6, 0.5)
    perm = rng.permutation(6)
    P = np.eye(6)[perm]
    params = init_gcn(GCNConfig(in_dim=3, hidden=4, order=3), rng)
    X = rng.normal(size=(6, 3))
    H, _ = gcn_forward(params, X, normalized_laplacian(A), 2)
    Hp, _ = gcn_forward(params, P @ X, normalized_laplacian(P @ A @ P.T), 2)
    assert np.allclose(Hp, P @ H)


def test_batch_matches_individual_passes():
    rng = np.random.default_rng(3)
    L = normalized_laplacian(random_adjacency(rng, 6, 0.6)[0])
    params = init_gcn(GCNConfig(in_dim=3, hidden=4), rng)
    X = rng.normal(size=(5, 6, 3))
    Hb, _ = gcn_forward(params, X, L, 2)
    for t in range(5):
        assert np.allclose(Hb[t], gcn_forward(params, X[t], L, 2)[0])


def test_shape_errors():
    L = normalized_laplacian(path4())
    params = init_gcn(GCNConfig(in_dim=3), np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        gcn_forward(params, np.zeros((5, 3)), L, 2)
    with pytest.raises(DimensionMismatch):
        gcn_forward(params, np.zeros((4, 2)), L, 2)


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-8)


@given(st.integers(0, 10**6), st.booleans())
def test_gradients_match_finite_differences(seed, batched):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    L = normalized_laplacian(random_adjacency(rng, n, 0.5)[0])
    params = init_gcn(GCNConfig(in_dim=3, hidden=4, order=2), rng)
    for k in params:
        if k.endswith(".b"):
            params[k] = rng.normal(scale=0.3, size=params[k].shape)
    X = rng.normal(size=(2, n, 3) if batched else (n, 3))
    target = rng.normal(size=X.shape[:-1] + (4,))

    def loss(p, x):
        H, _ = gcn_forward(p, x, L, 2)
        return float(np.sum(H * target))

    _, cache = gcn_forward(params, X, L, 2)
    grads, dX = gcn_backward(params, cache, L, target)
    h = 1e-6
    for name, val in params.items():
        num = np.zeros_like(val)
        for idx in np.ndindex(val.shape):
            up = {k: v.copy() for k, v in params.items()}
            dn = {k: v.copy() for k, v in params.items()}
            up[name][idx] += h
            dn[name][idx] -= h
            num[idx] = (loss(up, X) - loss(dn, X)) / (2 * h)
        assert rel_err(grads[name], num) < 1e-4, name
    numX = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        a, b = X.copy(), X.copy()
        a[idx] += h
        b[idx] -= h
        numX[idx] = (loss(params, a) - loss(params, b)) / (2 * h)
    assert rel_err(dX, numX) < 1e-4


def test_checkpoint_round_trip(tmp_path):
    params = init_gcn(GCNConfig(in_dim=6, hidden=8, layers=2, order=3), np.random.default_rng(1))
    params["scalar"] = np.array(1.25)
    cfg = {"hidden": 8, "note": "x"}
    save_checkpoint(tmp_path / "m.bin", params, cfg)
    back, cfg2 = load_checkpoint(tmp_path / "m.bin")
    assert cfg2 == cfg and list(back) == list(params)
    for k in params:
        assert np.array_equal(back[k], params[k]) and back[k].shape == params[k].shape
    manifest = (tmp_path / "m.bin.manifest.txt").read_text()
    assert "tensor gcn.0.alpha shape 4" in manifest


def test_checkpoint_rejects_corruption(tmp_path):
    save_checkpoint(tmp_path / "m.bin", {"a": np.ones(2)}, {})
    raw = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.bin")
    (tmp_path / "long.bin").write_bytes(raw + b"\0")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "long.bin")
