"""Independent reference computations used as test oracles.

Each one is deliberately naive (dense Newton, grid search, O(k^2) counting) and
shares no code with the package.
"""

from __future__ import annotations

import math

import numpy as np


def newton_bargaining(G, iters=100):
    """Damped Newton on F(a) = G a - 1/a, started from 1/sqrt(diag G)."""
    G = np.asarray(G, dtype=np.float64)
    a = 1.0 / np.sqrt(np.diag(G))
    for _ in range(iters):
        F = G @ a - 1.0 / a
        J = G + np.diag(1.0 / a**2)
        step = np.linalg.solve(J, -F)
        s = 1.0
        while np.any(a + s * step <= 0):
            s /= 2
        a = a + s * step
        if np.max(np.abs(F)) < 1e-14:
            break
    return a


def random_psd(rng, n, floor=0.5):
    A = rng.normal(size=(n, n))
    return A @ A.T + floor * np.eye(n)


def simplex_grid(n, step):
    """All points of the n-simplex on a grid with the given spacing (n <= 3)."""
    k = int(round(1 / step))
    if n == 2:
        t = np.arange(k + 1) / k
        return np.stack([t, 1 - t], axis=1)
    pts = [(i / k, j / k, (k - i - j) / k) for i in range(k + 1) for j in range(k + 1 - i)]
    return np.array(pts)


def min_norm_grid(V, step):
    W = simplex_grid(len(V), step)
    norms = np.linalg.norm(W @ np.asarray(V), axis=1)
    i = int(np.argmin(norms))
    return W[i], norms[i]


def cagrad_grid(V, c, step=1e-4):
    """Two-task CAGrad by brute force over the dual weight on a fine grid (rescaled by 1 + c)."""
    V = np.asarray(V, dtype=np.float64)
    g0 = V.mean(axis=0)
    phi = c * np.linalg.norm(g0)
    W = simplex_grid(2, step)
    GW = W @ V
    obj = GW @ g0 + phi * np.linalg.norm(GW, axis=1)
    gw = GW[int(np.argmin(obj))]
    return (g0 + phi / np.linalg.norm(gw) * gw) / (1 + c)


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0
    for p in pos:
        for q in neg:
            wins += 2 if p > q else (1 if p == q else 0)
    return wins / (2 * len(pos) * len(neg))


def welch_t(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    va = sum((x - ma) ** 2 for x in a) / (len(a) - 1)
    vb = sum((x - mb) ** 2 for x in b) / (len(b) - 1)
    return (ma - mb) / math.sqrt(va / len(a) + vb / len(b))


def chi2_by_hand(t):
    (a, b), (c, d) = t
    n = a + b + c + d
    return n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))


def mlp_numpy(x, Ws, bs):
    h = x
    for k, (W, b) in enumerate(zip(Ws, bs)):
        h = h @ W + b
        if k < len(Ws) - 1:
            h = np.maximum(h, 0)
    return h
