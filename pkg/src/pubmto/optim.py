"""Optimizer state and the PUB step for shared parameters.

Per-task update columns are computed from the *current* moments, which stay
frozen until the shared parameters have moved; the moments then advance with
the alpha-weighted gradient. No bias correction unless asked for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .solvers import SolverConfig, WeightSolution, solve_bargaining
from .umm import UmmConfig, apply_umm

KINDS = ("adam", "adagrad", "rmsprop", "sgd")


class ConfigError(ValueError):
    pass


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    beta: float = 0.9
    eps: float = 1e-8
    bias_correct: bool = False
    moment_order: str = "post"
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    G: np.ndarray | None = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; expected one of {KINDS}")
        if not self.eps > 0:
            raise ConfigError("eps must be > 0")
        if self.moment_order not in ("post", "pre"):
            raise ConfigError("moment_order is 'post' or 'pre'")

    @classmethod
    def create(cls, size: int, kind: str = "adam", **hyper) -> OptimizerState:
        st = cls(kind=kind, **hyper)
        if kind == "adam":
            st.m, st.v = np.zeros(size), np.zeros(size)
        elif kind in ("adagrad", "rmsprop"):
            st.G = np.zeros(size)
        return st

    def hyper(self) -> dict:
        return dict(lr=self.lr, beta1=self.beta1, beta2=self.beta2, beta=self.beta,
                    eps=self.eps, bias_correct=self.bias_correct, moment_order=self.moment_order)

    def copy(self) -> OptimizerState:
        out = OptimizerState(kind=self.kind, **self.hyper(), step_count=self.step_count)
        for name in ("m", "v", "G"):
            buf = getattr(self, name)
            setattr(out, name, None if buf is None else buf.copy())
        return out


def task_update(state: OptimizerState, g: np.ndarray) -> np.ndarray:
    """The step one gradient would produce against the frozen moments (lr excluded)."""
    if state.kind == "sgd":
        return np.array(g, dtype=np.float64)
    t = state.step_count + 1
    if state.kind == "adam":
        num = state.beta1 * state.m + (1.0 - state.beta1) * g
        den = state.beta2 * state.v + (1.0 - state.beta2) * g * g
        if state.bias_correct:
            num = num / (1.0 - state.beta1**t)
            den = den / (1.0 - state.beta2**t)
        return num / (np.sqrt(den) + state.eps)
    den = state.beta * state.G + (1.0 - state.beta) * g * g
    if state.bias_correct:
        den = den / (1.0 - state.beta**t)
    return g / (np.sqrt(den) + state.eps)


def advance_moments(state: OptimizerState, g: np.ndarray) -> None:
    if state.kind == "adam":
        state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
        state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    elif state.kind in ("adagrad", "rmsprop"):
        state.G = state.beta * state.G + (1.0 - state.beta) * g * g
    state.step_count += 1


def compute_task_updates(state: OptimizerState, task_grads) -> np.ndarray:
    """d x n matrix whose column i is task i's update on its own."""
    return np.stack([task_update(state, np.asarray(g, dtype=np.float64)) for g in task_grads], axis=1)


def plain_step(theta: np.ndarray, state: OptimizerState, grad, lr_scale: float = 1.0) -> np.ndarray:
    """One ordinary optimizer step; returns the new parameter vector."""
    g = np.asarray(grad, dtype=np.float64)
    delta = task_update(state, g)
    advance_moments(state, g)
    return theta - state.lr * lr_scale * delta


@dataclass
class PubStepConfig:
    solve_every: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    umm: UmmConfig = field(default_factory=UmmConfig)
    cached: WeightSolution | None = None

    def __post_init__(self):
        if self.solve_every < 1:
            raise ConfigError("solve_every must be >= 1")


@dataclass
class StepResult:
    solution: WeightSolution
    solved: bool
    shared_update: np.ndarray  # theta_new - theta_old
    combined_grad: np.ndarray
    columns: np.ndarray | None = None


@dataclass
class ParamStates:
    """One optimizer state for the shared group and one per task group."""

    shared: OptimizerState
    tasks: list[OptimizerState]

    @classmethod
    def create(cls, params: M.ParamSet, kind: str = "adam", **hyper) -> ParamStates:
        return cls(OptimizerState.create(params.shared_size(), kind, **hyper),
                   [OptimizerState.create(int(sum(p.size for p in grp.values())), kind, **hyper)
                    for grp in params.per_task])


def step_task_params(params: M.ParamSet, states: ParamStates, task_grads, lr_scale: float = 1.0,
                     scales=None) -> None:
    """Each task's own parameters follow that task's gradient only."""
    for i, group in enumerate(params.per_task):
        if not group:
            continue
        g = np.asarray(task_grads[i], dtype=np.float64)
        if scales is not None:
            g = scales[i] * g
        theta = M.flatten(group)
        M.unflatten_into(group, plain_step(theta, states.tasks[i], g, lr_scale))


def pub_step(params: M.ParamSet, states: ParamStates, shared_grads, task_grads,
             cfg: PubStepConfig, lr_scale: float = 1.0) -> StepResult:
    """Balance per-task updates on shared parameters, then step task parameters normally."""
    st = states.shared
    theta = M.flatten(params.shared)
    grads = [np.asarray(g, dtype=np.float64) for g in shared_grads]
    D = compute_task_updates(st, grads)
    if cfg.umm.kind != "identity":
        if cfg.umm.kind == "adatask" and cfg.umm.beta is None:
            cfg.umm.beta = st.beta2 if st.kind == "adam" else st.beta
        D = np.stack([apply_umm(D[:, i], theta, cfg.umm, i, grads[i]) for i in range(D.shape[1])],
                     axis=1)

    solve = cfg.cached is None or st.step_count % cfg.solve_every == 0
    if solve:
        cfg.cached = solve_bargaining(D.T @ D, cfg.solver, vectors=D.T)
    alpha = cfg.cached.alpha
    gbar = np.zeros_like(theta)
    for a, g in zip(alpha, grads):
        gbar += a * g

    lr = st.lr * lr_scale
    if st.moment_order == "post":
        new = theta - lr * (D @ alpha)
        advance_moments(st, gbar)
    else:
        advance_moments(st, gbar)
        new = theta - lr * _moment_step(st, gbar)
    M.unflatten_into(params.shared, new)
    step_task_params(params, states, task_grads, lr_scale)
    return StepResult(cfg.cached, solve, new - theta, gbar, D)


def _moment_step(st: OptimizerState, g: np.ndarray) -> np.ndarray:
    """Step read off moments that already include ``g``."""
    t = st.step_count
    if st.kind == "sgd":
        return g
    if st.kind == "adam":
        m, v = st.m, st.v
        if st.bias_correct:
            m, v = m / (1.0 - st.beta1**t), v / (1.0 - st.beta2**t)
        return m / (np.sqrt(v) + st.eps)
    G = st.G / (1.0 - st.beta**t) if st.bias_correct else st.G
    return g / (np.sqrt(G) + st.eps)


def joint_step(params: M.ParamSet, states: ParamStates, shared_grad, task_grads,
               lr_scale: float = 1.0, task_scales=None) -> np.ndarray:
    """Step with an already-combined shared gradient (gradient-balancing baselines)."""
    theta = M.flatten(params.shared)
    new = plain_step(theta, states.shared, shared_grad, lr_scale)
    M.unflatten_into(params.shared, new)
    step_task_params(params, states, task_grads, lr_scale, task_scales)
    return new - theta
