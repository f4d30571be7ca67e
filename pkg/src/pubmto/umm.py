"""Update manipulation methods: transforms applied to each task's update column
before the bargaining solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("identity", "clippy", "adatask", "l2_clip")


class ConfigError(ValueError):
    pass


@dataclass
class UmmConfig:
    kind: str = "identity"
    sigma_rel: float = 0.5
    sigma_abs: float = 1e-3
    max_norm: float = 1.0
    beta: float | None = None  # adatask decay; None means use the optimizer's
    eps: float = 1e-8
    accumulators: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown UMM {self.kind!r}; expected one of {KINDS}")
        if self.kind == "clippy" and not self.sigma_abs > 0:
            raise ConfigError("clippy needs sigma_abs > 0")
        if self.kind == "l2_clip" and not self.max_norm > 0:
            raise ConfigError("l2_clip needs max_norm > 0")


def clippy_scale(update: np.ndarray, theta: np.ndarray, sigma_rel: float, sigma_abs: float) -> float:
    """Largest factor <= 1 keeping every |u_j| under sigma_rel * |theta_j| + sigma_abs."""
    mag = np.abs(update)
    nz = mag > 0
    if not np.any(nz):
        return 1.0
    bound = sigma_rel * np.abs(theta[nz]) + sigma_abs
    worst = float(np.max(mag[nz] / bound))
    return 1.0 if worst <= 1.0 else 1.0 / worst


def apply_umm(update, theta, cfg: UmmConfig, task: int = 0, grad=None) -> np.ndarray:
    """Transform one task's update column.

    ``adatask`` ignores ``update`` and rebuilds the column from ``grad`` with a
    task-private second-moment accumulator, which is advanced by this call.
    """
    update = np.asarray(update, dtype=np.float64)
    kind = cfg.kind
    if kind == "identity":
        return update
    if kind == "l2_clip":
        norm = np.linalg.norm(update)
        return update if norm <= cfg.max_norm else update * (cfg.max_norm / norm)
    if kind == "clippy":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != update.shape:
            raise ValueError(f"theta {theta.shape} and update {update.shape} differ")
        return update * clippy_scale(update, theta, cfg.sigma_rel, cfg.sigma_abs)
    # adatask
    if grad is None:
        raise ValueError("adatask needs the task gradient")
    g = np.asarray(grad, dtype=np.float64)
    beta = 0.999 if cfg.beta is None else cfg.beta
    acc = cfg.accumulators.get(task)
    if acc is None:
        acc = np.zeros_like(g)
    acc = beta * acc + (1.0 - beta) * g * g
    cfg.accumulators[task] = acc
    return g / (np.sqrt(acc) + cfg.eps)
