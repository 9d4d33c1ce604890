"""Spectral graph convolution on the substrate topology.

Filters are polynomials in the normalized Laplacian, ``g(L) = sum_k a_k L^k``.
The fast path applies them with repeated products; the eigenbasis path
``U diag(g(lambda)) U^T`` is kept as an oracle. Gradients are hand-derived.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class DimensionMismatch(ValueError):
    pass


def adjacency_matrix(net) -> np.ndarray:
    A = np.zeros((net.n_nodes, net.n_nodes))
    for u, v in net.link_ends:
        A[u, v] = A[v, u] = 1.0
    return A


def normalized_laplacian(A: np.ndarray) -> np.ndarray:
    """I - D^-1/2 A D^-1/2; isolated nodes keep a unit diagonal."""
    A = np.asarray(A, dtype=float)
    deg = A.sum(axis=1)
    with np.errstate(divide="ignore"):
        inv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    return np.eye(len(A)) - inv[:, None] * A * inv[None, :]


@dataclass
class GraphSpectrum:
    laplacian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_adjacency(cls, A) -> "GraphSpectrum":
        L = normalized_laplacian(A)
        lam, U = np.linalg.eigh(L)
        return cls(L, lam, U)

    @classmethod
    def from_network(cls, net) -> "GraphSpectrum":
        return cls.from_adjacency(adjacency_matrix(net))


def graph_fourier(f, U):
    f = np.asarray(f, dtype=float)
    if f.shape[0] != U.shape[0]:
        raise DimensionMismatch(f"signal has {f.shape[0]} rows, basis has {U.shape[0]}")
    return U.T @ f


def inverse_graph_fourier(f_hat, U):
    f_hat = np.asarray(f_hat, dtype=float)
    if f_hat.shape[0] != U.shape[1]:
        raise DimensionMismatch(f"coefficients have {f_hat.shape[0]} rows, basis has {U.shape[1]}")
    return U @ f_hat


def spectral_conv(f, coeffs, spectrum: GraphSpectrum, method: str = "poly"):
    """Filter a signal (vector or column-stacked matrix) with sum_k coeffs[k] L^k."""
    f = np.asarray(f, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if f.shape[0] != spectrum.laplacian.shape[0]:
        raise DimensionMismatch("signal and graph sizes differ")
    if method == "poly":
        out = coeffs[0] * f
        p = f
        for a in coeffs[1:]:
            p = spectrum.laplacian @ p
            out = out + a * p
        return out
    if method == "eigen":
        lam, U = spectrum.eigenvalues, spectrum.eigenvectors
        g = np.polynomial.polynomial.polyval(lam, coeffs)
        f_hat = U.T @ f
        return U @ (g[:, None] * f_hat if f_hat.ndim == 2 else g * f_hat)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class GCNConfig:
    in_dim: int
    hidden: int = 16
    layers: int = 2
    order: int = 2


def init_gcn(cfg: GCNConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    fan = cfg.in_dim
    for l in range(cfg.layers):
        s = (cfg.order + 1) ** -0.5
        params[f"gcn.{l}.alpha"] = rng.uniform(-s, s, size=cfg.order + 1)
        s = fan ** -0.5
        params[f"gcn.{l}.W"] = rng.uniform(-s, s, size=(fan, cfg.hidden))
        params[f"gcn.{l}.b"] = np.zeros(cfg.hidden)
        fan = cfg.hidden
    return params


def relu(x):
    return np.maximum(x, 0.0)


def gcn_forward(params: dict, X: np.ndarray, L: np.ndarray, layers: int):
    """Stacked layers ``relu((sum_k alpha_k L^k H) W + b)``; returns (H, cache).

    ``X`` is (n_nodes, n_features) or a batch (T, n_nodes, n_features)
    sharing one Laplacian.
    """
    H = np.asarray(X, dtype=float)
    if H.ndim not in (2, 3) or H.shape[-2] != L.shape[0]:
        raise DimensionMismatch("features must be ([batch,] n_nodes, n_features)")
    cache = []
    for l in range(layers):
        alpha, W, b = params[f"gcn.{l}.alpha"], params[f"gcn.{l}.W"], params[f"gcn.{l}.b"]
        if H.shape[-1] != W.shape[0]:
            raise DimensionMismatch(f"layer {l}: input width {H.shape[-1]} != {W.shape[0]}")
        powers = [H]
        for _ in range(len(alpha) - 1):
            powers.append(L @ powers[-1])
        Z = sum(a * P for a, P in zip(alpha, powers))
        pre = Z @ W + b
        cache.append((powers, Z, pre))
        H = relu(pre)
    return H, cache


def gcn_backward(params: dict, cache, L: np.ndarray, dH: np.ndarray):
    """Gradients of a scalar loss given dLoss/dH; returns (grads, dX)."""
    grads = {}
    for l in reversed(range(len(cache))):
        powers, Z, pre = cache[l]
        alpha, W = params[f"gcn.{l}.alpha"], params[f"gcn.{l}.W"]
        dpre = dH * (pre > 0)
        flat = dpre.reshape(-1, dpre.shape[-1])
        grads[f"gcn.{l}.W"] = Z.reshape(-1, Z.shape[-1]).T @ flat
        grads[f"gcn.{l}.b"] = flat.sum(axis=0)
        dZ = dpre @ W.T
        grads[f"gcn.{l}.alpha"] = np.array([np.vdot(dZ, P) for P in powers])
        # L is symmetric, so the adjoint of L^k is L^k
        dIn = alpha[0] * dZ
        q = dZ
        for a in alpha[1:]:
            q = L @ q
            dIn = dIn + a * q
        dH = dIn
    return grads, dH


# -- checkpoints ------------------------------------------------------------

MAGIC = b"DVNECKPT"
VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], config: dict) -> None:
    """Binary header + little-endian float64 data, plus a text manifest."""
    path = Path(path)
    names = list(params)
    blob = json.dumps(config, sort_keys=True).encode()
    head = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(names))]
    manifest = [f"version {VERSION}", f"config {blob.decode()}"]
    offset = 0
    for name in names:
        arr = np.asarray(params[name], dtype="<f8")
        raw = name.encode()
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
                    + struct.pack(f"<{arr.ndim}I", *arr.shape))
        manifest.append(f"tensor {name} shape {'x'.join(map(str, arr.shape)) or 'scalar'} offset {offset}")
        offset += arr.size
    data = b"".join(np.asarray(params[n], dtype="<f8").tobytes(order="C") for n in names)
    path.write_bytes(b"".join(head) + data)
    Path(str(path) + ".manifest.txt").write_text("\n".join(manifest) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError("not a checkpoint file")
    version, blen = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 16
    config = json.loads(raw[pos:pos + blen])
    pos += blen
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    shapes = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        shapes.append((name, shape))
    params = {}
    for name, shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(float)
        pos += 8 * size
    if pos != len(raw):
        raise ValueError("trailing bytes in checkpoint")
    return params, config


def config_dict(cfg: GCNConfig) -> dict:
    return asdict(cfg)
