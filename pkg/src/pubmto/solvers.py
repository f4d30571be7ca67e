"""Task-weight solvers.

``solve_bargaining`` finds positive weights with ``G @ a == 1 / a`` by a
concave-convex procedure: each outer round linearises the concave objective
``sum_i log a_i + log (G a)_i`` at the current iterate and solves the
resulting convex program (the original constraints are kept) with a
log-barrier Newton method. Fed the Gram matrix of optimizer updates it is PUB;
fed the Gram matrix of gradients it is the NashMTL baseline.

The remaining functions are the gradient-balancing baselines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
FALLBACK = "fallback_used"


class ConfigError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass
class SolverConfig:
    ccp_max_iter: int = 200
    inner_max_iter: int = 50
    tol: float = 1e-3
    ridge_rel: float = 1e-8
    fallback: str = "ls"
    normalize_sum_n: bool = False
    # "phase1" searches for a start inside the log domain when all-ones is not;
    # "strict" falls back immediately
    infeasible_start: str = "phase1"

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.ccp_max_iter < 1 or self.inner_max_iter < 1:
            raise ConfigError("iteration budgets must be >= 1")
        if self.fallback not in ("ls", "min_norm"):
            raise ConfigError(f"unknown fallback {self.fallback!r}")
        if self.infeasible_start not in ("phase1", "strict"):
            raise ConfigError(f"unknown infeasible_start {self.infeasible_start!r}")


@dataclass
class GramMatrix:
    g: np.ndarray
    source: str = "updates"

    @classmethod
    def from_columns(cls, D: np.ndarray, source: str = "updates") -> GramMatrix:
        D = np.asarray(D, dtype=np.float64)
        return cls(D.T @ D, source)

    @property
    def n(self) -> int:
        return self.g.shape[0]


@dataclass
class WeightSolution:
    alpha: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    status: str = CONVERGED
    degenerate: bool = False
    combined: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def bargaining_residual(G: np.ndarray, alpha: np.ndarray) -> float:
    return float(np.max(np.abs((G @ alpha) * alpha - 1.0)))


# -- bargaining -------------------------------------------------------------------


# barrier weight for the CCP subproblem is _BARRIER_SCALE * n / tol; the
# constraint slack left at the barrier optimum is then a small fraction of tol
_BARRIER_SCALE = 10.0
_BARRIER_GROWTH = 20.0
_BARRIER_STAGES = 3


def _ridge(G: np.ndarray, rel: float) -> np.ndarray:
    # proportional to each column's own squared norm, so rescaling a column
    # rescales its ridge with it; the rel**2 floor keeps zero columns solvable
    n = G.shape[0]
    return G + np.diag(rel * np.diag(G) + rel**2 * np.trace(G) / n)


def _phi(G, a):
    return np.log(a) + np.log(G @ a)


def _inner_solve(G, c, start, t_final, max_newton):
    """Minimise c.a subject to log a_i + log (G a)_i >= 0.

    Log-barrier path following up to weight ``t_final``; each centering is a
    damped Newton run with backtracking that never leaves the strict interior.
    ``start`` must be strictly feasible.
    """
    a = start
    steps = 0
    t = t_final / _BARRIER_GROWTH**_BARRIER_STAGES
    while steps < max_newton:
        a, k = _center(G, c, a, t, max_newton - steps)
        steps += k
        if t >= t_final:
            break
        t = min(t * _BARRIER_GROWTH, t_final)
    return a, steps


@njit(cache=True)
def _solve_small(H, b):
    """Gaussian elimination with partial pivoting; ok is False on a singular pivot."""
    n = H.shape[0]
    A = H.copy()
    x = b.copy()
    for k in range(n):
        p = k
        for r in range(k + 1, n):
            if abs(A[r, k]) > abs(A[p, k]):
                p = r
        if not abs(A[p, k]) > 1e-300:
            return x, False
        if p != k:
            for j in range(n):
                A[k, j], A[p, j] = A[p, j], A[k, j]
            x[k], x[p] = x[p], x[k]
        for r in range(k + 1, n):
            f = A[r, k] / A[k, k]
            for j in range(k, n):
                A[r, j] -= f * A[k, j]
            x[r] -= f * x[k]
    for k in range(n - 1, -1, -1):
        acc = x[k]
        for j in range(k + 1, n):
            acc -= A[k, j] * x[j]
        x[k] = acc / A[k, k]
    return x, True


@njit(cache=True)
def _barrier_value(G, c, a, t):
    """t c.a - sum log psi_i(a); inf outside the strict interior."""
    n = a.shape[0]
    val = 0.0
    for i in range(n):
        if a[i] <= 0.0:
            return np.inf
    for i in range(n):
        gi = 0.0
        for j in range(n):
            gi += G[i, j] * a[j]
        if gi <= 0.0:
            return np.inf
        psi = np.log(a[i]) + np.log(gi)
        if psi <= 0.0:
            return np.inf
        val += t * c[i] * a[i] - np.log(psi)
    return val


@njit(cache=True)
def _center(G, c, a0, t, max_newton):
    n = a0.shape[0]
    a = a0.copy()
    ga = np.empty(n)
    w = np.empty(n)
    grad = np.empty(n)
    H = np.empty((n, n))
    steps = 0
    while steps < max_newton:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += G[i, j] * a[j]
            ga[i] = acc
            w[i] = 1.0 / (np.log(a[i]) + np.log(acc))
        # psi_i gradient: e_i / a_i + G[i, :] / ga_i
        for k in range(n):
            acc = t * c[k] - w[k] / a[k]
            for i in range(n):
                acc -= w[i] * G[i, k] / ga[i]
            grad[k] = acc
        for k in range(n):
            for l in range(n):
                acc = 0.0
                for i in range(n):
                    jk = G[i, k] / ga[i]
                    jl = G[i, l] / ga[i]
                    if i == k:
                        jk += 1.0 / a[i]
                    if i == l:
                        jl += 1.0 / a[i]
                    acc += w[i] * w[i] * jk * jl + w[i] * G[i, k] * G[i, l] / (ga[i] * ga[i])
                if k == l:
                    acc += w[k] / (a[k] * a[k])
                H[k, l] = acc
        step, ok = _solve_small(H, -grad)
        if not ok:
            break
        dec = 0.0
        finite = True
        for k in range(n):
            dec -= grad[k] * step[k]
            if not np.isfinite(step[k]):
                finite = False
        if not finite:
            break
        steps += 1
        if dec < 1e-10:
            break
        f0 = _barrier_value(G, c, a, t)
        s = 1.0
        accepted = False
        while s > 1e-12:
            cand = a + s * step
            if _barrier_value(G, c, cand, t) <= f0 - 0.25 * s * dec:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
        a = cand
    return a, steps


def solve_bargaining(G, cfg: SolverConfig | None = None, vectors=None) -> WeightSolution:
    """Solve ``G a = 1 / a`` for a > 0.

    ``vectors`` (the columns behind ``G``) are only needed when the configured
    fallback is ``min_norm``.
    """
    cfg = cfg or SolverConfig()
    if isinstance(G, GramMatrix):
        G = G.g
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"Gram matrix must be square, got {G.shape}")
    n = G.shape[0]
    if n == 0:
        raise ValueError("no tasks")
    if not np.all(np.isfinite(G)):
        raise NumericError("non-finite entries in Gram matrix")
    G = _ridge(0.5 * (G + G.T), cfg.ridge_rel)

    a = np.ones(n)
    phase1 = 0
    if np.any(G @ a <= 0):
        if cfg.infeasible_start == "strict":
            return _fallback(G, cfg, vectors)
        a, phase1 = _domain_start(G, cfg.inner_max_iter)
        if a is None:
            return _fallback(G, cfg, vectors)

    # slide along the ray onto the feasible boundary: phi(k a) = phi(a) + 2 log k
    a = a * np.exp(-np.min(_phi(G, a)) / 2.0)
    res = bargaining_residual(G, a)
    it = 0
    while res > cfg.tol and it < cfg.ccp_max_iter:
        it += 1
        ga = G @ a
        c = 1.0 / a + G.T @ (1.0 / ga)
        a_new, _ = _inner_solve(G, c, a * np.exp(1e-3), _BARRIER_SCALE * n / cfg.tol,
                                cfg.inner_max_iter)
        if np.any(G @ a_new <= 0) or np.any(a_new <= 0):
            # keep the iterate inside the log domain
            a_new = 0.5 * (a + a_new)
        a = a_new
        res = bargaining_residual(G, a)
    if res <= cfg.tol:
        a, res = _polish(G, a, res)
    status = CONVERGED if res <= cfg.tol else MAX_ITER
    if cfg.normalize_sum_n:
        a = a * n / a.sum()
    return WeightSolution(alpha=a, residual=res, iterations=it, status=status,
                          info={"phase1_steps": phase1} if phase1 else {})


def _polish(G, a, res, steps=8):
    """Newton on G a - 1/a from a CCP solution; each step kept only if it lowers the residual."""
    for _ in range(steps):
        if res < 1e-13:
            break
        try:
            step = np.linalg.solve(G + np.diag(1.0 / a**2), 1.0 / a - G @ a)
        except np.linalg.LinAlgError:
            break
        cand = a + step
        if not np.all(cand > 0):
            break
        r = bargaining_residual(G, cand)
        if not r < res:
            break
        a, res = cand, r
    return a, res


def _domain_start(G, max_steps):
    """Damped Newton on 0.5 a'Ga - sum log a from all-ones, stopped once G a > 0."""
    a = np.ones(G.shape[0])
    for k in range(1, max_steps + 1):
        grad = G @ a - 1.0 / a
        H = G + np.diag(1.0 / a**2)
        step = -np.linalg.solve(H, grad)
        s = 1.0
        while np.any(a + s * step <= 0):
            s *= 0.5
        a = a + s * step
        if np.all(G @ a > 0):
            return a, k
    return None, max_steps


def _fallback(G, cfg, vectors) -> WeightSolution:
    n = G.shape[0]
    if cfg.fallback == "min_norm":
        if vectors is not None:
            sol = solve_min_norm(vectors)
        else:
            sol = _min_norm_gram(G)
        alpha = sol.alpha
    else:
        alpha = np.ones(n)
    log.debug("bargaining start infeasible; using %s weights", cfg.fallback)
    return WeightSolution(alpha=alpha, residual=bargaining_residual(G, alpha),
                          iterations=0, status=FALLBACK, info={"fallback": cfg.fallback})


# -- baselines ----------------------------------------------------------------------


def solve_ls(n: int) -> WeightSolution:
    if n < 1:
        raise ValueError("n must be >= 1")
    return WeightSolution(alpha=np.ones(n))


def _two_task_gamma(g11, g12, g22):
    denom = g11 - 2.0 * g12 + g22
    if denom <= 0:
        return 0.5
    return float(np.clip((g22 - g12) / denom, 0.0, 1.0))


def frank_wolfe_min_norm(G: np.ndarray, max_iter: int = 100, gap_tol: float = 1e-6):
    """Min of a^T G a over the simplex by away-step Frank-Wolfe with exact line search.

    Returns (alpha, iterations, duality gap).
    """
    n = G.shape[0]
    a = np.full(n, 1.0 / n)
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = G @ a
        t = int(np.argmin(grad))
        gap = float(a @ grad - grad[t])
        if gap < gap_tol:
            break
        support = np.nonzero(a > 0)[0]
        s = int(support[np.argmax(grad[support])])
        if gap >= grad[s] - a @ grad:
            d = -a.copy()
            d[t] += 1.0
            max_step = 1.0
        else:
            # move weight away from the worst active vertex
            d = a.copy()
            d[s] -= 1.0
            max_step = a[s] / (1.0 - a[s]) if a[s] < 1.0 else np.inf
        dGd = d @ G @ d
        slope = d @ grad
        step = max_step if dGd <= 0 else min(max_step, max(0.0, -slope / dGd))
        a = a + step * d
        a[a < 1e-15] = 0.0
        a /= a.sum()
    return a, it, gap


def _min_norm_gram(G: np.ndarray, max_iter: int = 100) -> WeightSolution:
    n = G.shape[0]
    if n == 1:
        return WeightSolution(alpha=np.ones(1))
    if n == 2:
        gamma = _two_task_gamma(G[0, 0], G[0, 1], G[1, 1])
        return WeightSolution(alpha=np.array([gamma, 1.0 - gamma]), iterations=1)
    a, it, gap = frank_wolfe_min_norm(G, max_iter=max_iter)
    return WeightSolution(alpha=a, iterations=it, residual=gap,
                          status=CONVERGED if gap < 1e-6 else MAX_ITER)


def solve_min_norm(vectors, max_iter: int = 100) -> WeightSolution:
    """MGDA: the min-norm point of the convex hull of the task vectors."""
    V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n = V.shape[0]
    if n < 1:
        raise ValueError("need at least one vector")
    G = V @ V.T
    if not np.any(G):
        alpha = np.full(n, 1.0 / n)
        return WeightSolution(alpha=alpha, degenerate=True, combined=alpha @ V)
    sol = _min_norm_gram(G, max_iter)
    sol.combined = sol.alpha @ V
    return sol


def pcgrad(grads, rng: np.random.Generator | None = None):
    """Gradient surgery. Returns (surgered gradients, their sum)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    g = [np.asarray(v, dtype=np.float64) for v in grads]
    n = len(g)
    if n < 2:
        raise ValueError("pcgrad needs at least two tasks")
    out = []
    for i in range(n):
        gi = g[i].copy()
        others = [j for j in range(n) if j != i]
        rng.shuffle(others)
        for j in others:
            nj = g[j] @ g[j]
            if nj == 0:
                continue
            dot = gi @ g[j]
            if dot < 0:
                gi = gi - dot / nj * g[j]
        out.append(gi)
    return out, np.sum(out, axis=0)


def cagrad(grads, c: float = 0.5, iters: int = 200, lr: float = 0.1,
           rescale: bool = True) -> np.ndarray:
    """Conflict-averse gradient (g0 + (c |g0| / |g_w|) g_w), divided by 1 + c when ``rescale``."""
    if not 0.0 <= c < 1.0:
        raise ConfigError(f"cagrad c must be in [0, 1), got {c}")
    V = np.asarray(grads, dtype=np.float64)
    n = V.shape[0]
    g0 = V.mean(axis=0)
    if c == 0.0:
        return g0
    G = V @ V.T
    b = V @ g0
    phi = c * np.sqrt(g0 @ g0)
    w = cagrad_weights(G, b, phi, iters, lr)
    gw = w @ V
    norm = np.sqrt(gw @ gw)
    if norm < 1e-12:
        return g0
    out = g0 + phi / norm * gw
    return out / (1.0 + c) if rescale else out


def cagrad_weights(G, b, phi, iters=200, lr=0.1) -> np.ndarray:
    """Projected gradient on the simplex for min_w w.b + phi * sqrt(w^T G w)."""
    n = len(b)
    w = np.full(n, 1.0 / n)
    for _ in range(iters):
        gw2 = w @ G @ w
        grad = b + (phi * (G @ w) / np.sqrt(gw2) if gw2 > 1e-24 else 0.0)
        w = project_simplex(w - lr * grad)
    return w


def project_simplex(y: np.ndarray) -> np.ndarray:
    n = len(y)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def imtl_g(grads) -> WeightSolution:
    """Weights whose aggregate has equal projection on every unit task gradient."""
    V = np.atleast_2d(np.asarray(grads, dtype=np.float64))
    n = V.shape[0]
    if n == 1:
        return WeightSolution(alpha=np.ones(1), combined=V[0].copy())
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        return _imtl_fallback(V, "zero gradient")
    U = V / norms[:, None]
    Dm = V[0] - V[1:]
    Um = U[0] - U[1:]
    A = Dm @ Um.T
    scale = np.prod(np.linalg.norm(A, axis=1))
    if np.linalg.matrix_rank(A) < n - 1 or abs(np.linalg.det(A)) < 1e-12 * scale:
        return _imtl_fallback(V, "singular system")
    rest = np.linalg.solve(A.T, Um @ V[0])
    alpha = np.concatenate([[1.0 - rest.sum()], rest])
    return WeightSolution(alpha=alpha, combined=alpha @ V)


def _imtl_fallback(V, why):
    n = V.shape[0]
    alpha = np.ones(n)
    return WeightSolution(alpha=alpha, status=FALLBACK, degenerate=True,
                          combined=alpha @ V, info={"fallback": "ls", "reason": why})


def uncertainty_weights(log_var, losses):
    """Loss sum_i exp(-s_i) L_i + s_i and its gradient in s."""
    s = np.asarray(log_var, dtype=np.float64)
    L = np.asarray(losses, dtype=np.float64)
    w = np.exp(-s)
    return float(np.sum(w * L + s)), 1.0 - w * L
