"""Synthetic CTR/CTCVR ranking data and a two-quadratic toy problem."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RankingDatasetConfig:
    n_samples: int = 50_000
    dim: int = 16
    rho: float = -0.3
    click_bias: float = -1.0
    conv_bias: float = -2.5
    seed: int = 0

    def __post_init__(self):
        if abs(self.rho) > 1:
            raise ConfigError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if self.n_samples < 100:
            raise ConfigError("n_samples must be >= 100")


@dataclass
class RankingDataset:
    X: np.ndarray
    y_ctr: np.ndarray
    y_ctcvr: np.ndarray
    w_ctr: np.ndarray
    w_cv: np.ndarray
    config: RankingDatasetConfig

    @property
    def labels(self) -> list[np.ndarray]:
        return [self.y_ctr, self.y_ctcvr]

    def split(self, val_every: int = 10):
        """90/10 train/validation split by a fixed hash of the row index."""
        idx = np.arange(len(self.X), dtype=np.uint64)
        h = (idx * np.uint64(2654435761)) % np.uint64(2**32)
        val = (h % np.uint64(val_every)) == 0
        return np.nonzero(~val)[0], np.nonzero(val)[0]

    def report(self) -> dict:
        """Label rates, and the mean BCE of the best constant predictor per task."""
        out = {}
        for name, y in (("ctr", self.y_ctr), ("ctcvr", self.y_ctcvr)):
            p = float(y.mean())
            ent = 0.0 if p in (0.0, 1.0) else -(p * np.log(p) + (1 - p) * np.log(1 - p))
            out[f"{name}_rate"] = p
            out[f"{name}_base_loss"] = float(ent)
        out["zero_logit_loss"] = float(np.log(2.0))
        return out

    def to_csv(self, path) -> None:
        d = self.X.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{j}" for j in range(d)] + ["y_ctr", "y_ctcvr"])
            for row, a, b in zip(self.X, self.y_ctr, self.y_ctcvr):
                w.writerow([repr(float(v)) for v in row] + [int(a), int(b)])

    @staticmethod
    def read_csv(path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        body = np.array(rows[1:], dtype=np.float64)
        return body[:, :-2], body[:, -2], body[:, -1]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def task_directions(dim: int, rho: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors with inner product exactly ``rho`` (Gram-Schmidt)."""
    a = rng.normal(size=dim)
    a /= np.linalg.norm(a)
    u = rng.normal(size=dim)
    u -= (u @ a) * a
    u /= np.linalg.norm(u)
    b = rho * a + np.sqrt(max(0.0, 1.0 - rho * rho)) * u
    return a, b


def gen_ranking(cfg: RankingDatasetConfig) -> RankingDataset:
    rng = np.random.default_rng(cfg.seed)
    w_ctr, w_cv = task_directions(cfg.dim, cfg.rho, rng)
    X = rng.normal(size=(cfg.n_samples, cfg.dim))
    click = rng.random(cfg.n_samples) < _sigmoid(X @ w_ctr + cfg.click_bias)
    conv = rng.random(cfg.n_samples) < _sigmoid(X @ w_cv + cfg.conv_bias)
    y_ctr = click.astype(np.float64)
    y_ctcvr = (click & conv).astype(np.float64)
    return RankingDataset(X, y_ctr, y_ctcvr, w_ctr, w_cv, cfg)


# -- toy problem --------------------------------------------------------------------

STANDARD_INITS = ((-1.2, 1.5), (1.5, 1.2), (0.0, -1.5), (-1.5, -0.6), (1.2, -0.9))


@dataclass(frozen=True)
class ToyConfig:
    c1: tuple[float, float] = (-1.0, 0.0)
    c2: tuple[float, float] = (1.0, 0.0)
    kappa: float = 1.0
    init_points: tuple = field(default=STANDARD_INITS)
    steps: int = 2000

    def __post_init__(self):
        if tuple(self.c1) == tuple(self.c2):
            raise ConfigError("c1 and c2 must differ")
        if not self.kappa > 0:
            raise ConfigError("kappa must be > 0")


def toy_losses(theta, cfg: ToyConfig):
    """(L1, L2, [grad1, grad2]) for the two quadratics."""
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != (2,):
        raise ValueError("toy theta is a 2-vector")
    r1 = th - np.asarray(cfg.c1, dtype=np.float64)
    r2 = th - np.asarray(cfg.c2, dtype=np.float64)
    return 0.5 * float(r1 @ r1), 0.5 * cfg.kappa * float(r2 @ r2), [r1, cfg.kappa * r2]


def distance_to_segment(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))
