"""Gradient/update diagnostics and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np
from scipy import stats


class UndefinedError(ValueError):
    """The statistic is undefined for the given input."""


@dataclass
class TraceRecord:
    step: int
    task_losses: list[float]
    alpha: list[float]
    sim_task: float
    sim_share: float
    grad_norm_share: list[float]
    update_norm_share: float

    def to_dict(self) -> dict:
        return {"type": "step", "step": self.step, "task_losses": self.task_losses,
                "alpha": self.alpha, "sim_task": self.sim_task, "sim_share": self.sim_share,
                "grad_norm_share": self.grad_norm_share,
                "update_norm_share": self.update_norm_share}

    @classmethod
    def from_dict(cls, d: dict) -> TraceRecord:
        return cls(d["step"], d["task_losses"], d["alpha"], d["sim_task"], d["sim_share"],
                   d["grad_norm_share"], d["update_norm_share"])


@dataclass
class ExperimentSummary:
    dataset_id: str
    model_kind: str
    method: str
    seed: int
    avg_auc: float
    mean_sim_task: float
    mean_sim_share: float
    diff: float
    task_aucs: list[float] | None = None


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"cosine of shapes {u.shape} and {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def diff_metric(sim_task: float, sim_share: float) -> float:
    """2|a - b| / |a + b|; inf when a + b == 0."""
    denom = abs(sim_task + sim_share)
    if denom == 0:
        return math.inf
    return 2.0 * abs(sim_task - sim_share) / denom


def pairwise_indicators(summaries: Sequence[ExperimentSummary]):
    """Ordered (x, y) pairs among experiments sharing a dataset and model.

    x = 1 when the first experiment has the higher average AUC, y = 1 when it
    has the higher Diff. Pairs tied on either metric are dropped. Returns
    (pairs, dropped).
    """
    groups: dict[tuple, list[ExperimentSummary]] = {}
    for s in summaries:
        groups.setdefault((s.dataset_id, s.model_kind), []).append(s)
    pairs, dropped = [], 0
    for key in sorted(groups):
        for a, b in permutations(groups[key], 2):
            if a.method == b.method:
                continue
            if a.avg_auc == b.avg_auc or a.diff == b.diff:
                dropped += 1
                continue
            pairs.append((int(a.avg_auc > b.avg_auc), int(a.diff > b.diff)))
    return pairs, dropped


def confusion_matrix(pairs) -> np.ndarray:
    """Rows x = 0/1, columns y = 0/1."""
    table = np.zeros((2, 2), dtype=np.int64)
    for x, y in pairs:
        table[x, y] += 1
    return table


CHI2_DF1 = ((10.828, 0.001), (6.635, 0.01), (3.841, 0.05))


def _bucket(p: float) -> str:
    for cut in (0.001, 0.01, 0.05):
        if p < cut:
            return f"<{cut:g}"
    return ">=0.05"


def chi_square_2x2(table) -> tuple[float, str]:
    """Pearson chi-square (no continuity correction) and its df=1 p bucket."""
    t = np.asarray(table, dtype=np.float64)
    if t.shape != (2, 2) or np.any(t < 0):
        raise ValueError("need a 2x2 table of non-negative counts")
    rows, cols, n = t.sum(axis=1), t.sum(axis=0), t.sum()
    if np.any(rows == 0) or np.any(cols == 0):
        raise UndefinedError("chi-square undefined with an empty margin")
    expected = np.outer(rows, cols) / n
    chi2 = float(((t - expected) ** 2 / expected).sum())
    for crit, p in CHI2_DF1:
        if chi2 > crit:
            return chi2, f"<{p:g}"
    return chi2, ">=0.05"


def t_test_independent(a, b) -> tuple[float, str]:
    """Welch's t statistic and a two-sided p bucket."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, ">=0.05"
        return math.copysign(math.inf, diff), "<0.001"
    t = float(diff / math.sqrt(se2))
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return t, _bucket(p)


def auc(scores, labels) -> float:
    """Rank AUC; tied scores count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0 or not np.all((y == 0) | pos):
        raise UndefinedError("AUC needs binary labels with both classes present")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average 1-based ranks over tie groups, doubled to stay integral
    _, first, counts = np.unique(sorted_s, return_index=True, return_counts=True)
    twice_rank = np.repeat(2 * first + counts + 1, counts)
    ranks2 = np.empty(s.size, dtype=np.int64)
    ranks2[order] = twice_rank
    u2 = int(ranks2[pos].sum()) - n_pos * (n_pos + 1)
    return (u2 / 2.0) / (n_pos * n_neg)


def delta_m(method_metrics, stl_metrics, lower_better, groups=None) -> float:
    """Average relative change vs single-task baselines, in percent; negative is better.

    ``groups`` lists, per task, the indices of its criteria; default is one task
    holding every criterion.
    """
    m = np.asarray(method_metrics, dtype=np.float64)
    s = np.asarray(stl_metrics, dtype=np.float64)
    low = np.asarray(lower_better, dtype=bool)
    if not (m.shape == s.shape == low.shape):
        raise ValueError("metric, baseline and direction arrays differ in shape")
    if np.any(s == 0):
        raise UndefinedError("a single-task baseline metric is zero")
    sign = np.where(low, 1.0, -1.0)
    rel = sign * (m - s) / s
    groups = groups or [list(range(m.size))]
    per_task = [rel[list(g)].mean() for g in groups]
    return float(100.0 * np.mean(per_task))


def similarity_summary(records: Sequence[TraceRecord]) -> tuple[float, float]:
    if not records:
        return 0.0, 0.0
    return (float(np.mean([r.sim_task for r in records])),
            float(np.mean([r.sim_share for r in records])))
