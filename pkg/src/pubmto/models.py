"""Shared-bottom, MMOE and PLE ranking models over :mod:`pubmto.tensor`.

Parameters are split into a shared group and one group per task. The split is
what PUB operates on: only shared parameters are stepped with the balanced
update, task-owned parameters follow their own task's gradient.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class ConfigError(ValueError):
    pass


KINDS = ("shared_bottom", "mmoe", "ple")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "mmoe"
    input_dim: int = 16
    expert_count: int = 4
    experts_per_task: int = 2
    hidden_dim: int = 16
    task_count: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.expert_count < 1 or self.hidden_dim < 1:
            raise ConfigError("expert_count and hidden_dim must be >= 1")
        if self.input_dim < 1 or self.task_count < 1:
            raise ConfigError("input_dim and task_count must be >= 1")
        if self.kind == "ple" and self.experts_per_task < 1:
            raise ConfigError("ple needs experts_per_task >= 1")


# Desk defaults plus the 8-expert width used for the AliExpress backbones.
PRESETS = {
    "desk": dict(input_dim=16, hidden_dim=16, expert_count=4, experts_per_task=2, task_count=2),
    "wide": dict(input_dim=16, hidden_dim=16, expert_count=8, experts_per_task=4, task_count=2),
}


def preset(kind: str, name: str = "desk", **overrides) -> ModelSpec:
    return ModelSpec(kind=kind, **{**PRESETS[name], **overrides})


@dataclass
class ParamSet:
    shared: dict[str, Tensor] = field(default_factory=dict)
    per_task: list[dict[str, Tensor]] = field(default_factory=list)

    @property
    def task_count(self) -> int:
        return len(self.per_task)

    def all_params(self) -> list[Tensor]:
        out = list(self.shared.values())
        for group in self.per_task:
            out.extend(group.values())
        return out

    def named(self) -> dict[str, Tensor]:
        out = {f"shared.{k}": v for k, v in self.shared.items()}
        for i, group in enumerate(self.per_task):
            out.update({f"task{i}.{k}": v for k, v in group.items()})
        return out

    def shared_size(self) -> int:
        return sum(p.size for p in self.shared.values())

    def check(self) -> None:
        seen = set()
        for p in self.all_params():
            if id(p) in seen:
                raise ConfigError("a tensor appears in more than one parameter group")
            seen.add(id(p))
        if self.task_count < 1:
            raise ConfigError("need at least one task group")


def flatten(group: dict[str, Tensor], grads: dict | None = None) -> np.ndarray:
    """Concatenate a group's values (or their entries in ``grads``) in insertion order."""
    parts = []
    for p in group.values():
        if grads is None:
            parts.append(p.data.reshape(-1))
        else:
            g = grads.get(p)
            parts.append(np.zeros(p.size) if g is None else np.asarray(g).reshape(-1))
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_into(group: dict[str, Tensor], vec: np.ndarray) -> None:
    total = sum(p.size for p in group.values())
    if vec.size != total:
        raise ShapeError(f"vector of length {vec.size} does not fill a group of {total}")
    offset = 0
    for p in group.values():
        n = p.size
        p.data[...] = vec[offset: offset + n].reshape(p.shape)
        offset += n


def segments(group: dict[str, Tensor]) -> list[tuple[int, int]]:
    out, offset = [], 0
    for p in group.values():
        out.append((offset, offset + p.size))
        offset += p.size
    return out


def _glorot(rng, fan_in, fan_out, shape=None):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


class Model:
    """A built model: its spec, its parameters and a forward pass."""

    def __init__(self, spec: ModelSpec, params: ParamSet):
        self.spec = spec
        self.params = params

    def __call__(self, x) -> list[Tensor]:
        return self.forward(x)

    def forward(self, x) -> list[Tensor]:
        """Per-task logits, each of shape (batch,)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"batch of shape {x.shape}; model expects (*, {self.spec.input_dim})")
        fn = getattr(self, f"_forward_{self.spec.kind}")
        if T._tape_stack():
            return fn(x)
        with T.Tape():
            return fn(x)

    def _tower(self, i, h):
        tw = self.params.per_task[i]
        z = T.add(T.matmul(h, tw["tower.w"]), tw["tower.b"])
        return T.reshape(z, (h.shape[0],))

    def _forward_shared_bottom(self, x):
        sh = self.params.shared
        h = T.relu(T.add(T.matmul(x, sh["bottom.w"]), sh["bottom.b"]))
        return [self._tower(i, h) for i in range(self.spec.task_count)]

    def _experts(self, x, group, prefix, count):
        # all experts of a group run as one matmul, then split by reshape
        w = T.concat([group[f"{prefix}{e}.w"] for e in range(count)], axis=1)
        b = T.concat([group[f"{prefix}{e}.b"] for e in range(count)], axis=0)
        h = T.relu(T.add(T.matmul(x, w), b))
        return T.reshape(h, (x.shape[0], count, self.spec.hidden_dim))

    def _mix(self, gate_logits, experts):
        gate = T.softmax(gate_logits)
        b, e = gate.shape
        return T.sum_(T.mul(T.reshape(gate, (b, e, 1)), experts), axis=1)

    def _gate(self, i, x):
        g = self.params.per_task[i]
        return T.add(T.matmul(x, g["gate.w"]), g["gate.b"])

    def _forward_mmoe(self, x):
        ex = self._experts(x, self.params.shared, "expert", self.spec.expert_count)
        return [self._tower(i, self._mix(self._gate(i, x), ex))
                for i in range(self.spec.task_count)]

    def _forward_ple(self, x):
        spec = self.spec
        shared_ex = self._experts(x, self.params.shared, "expert", spec.expert_count)
        out = []
        for i in range(spec.task_count):
            own = self._experts(x, self.params.per_task[i], "expert", spec.experts_per_task)
            pool = T.concat([shared_ex, own], axis=1)
            out.append(self._tower(i, self._mix(self._gate(i, x), pool)))
        return out

    def gate_weights(self, x) -> list[np.ndarray]:
        """Per-task gate distributions over experts (mmoe and ple only)."""
        if self.spec.kind == "shared_bottom":
            raise ConfigError("shared_bottom has no gates")
        x = np.asarray(x, dtype=np.float64)
        out = []
        for i in range(self.spec.task_count):
            g = self.params.per_task[i]
            z = x @ g["gate.w"].data + g["gate.b"].data
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            out.append(e / e.sum(axis=1, keepdims=True))
        return out

    def predict(self, x) -> list[np.ndarray]:
        """Per-task logits as plain arrays, without recording a tape."""
        with _untracked(self.params):
            return [z.data for z in self.forward(np.asarray(x, dtype=np.float64))]

    # checkpoints

    def to_json(self) -> str:
        arrays = {k: p.data.reshape(-1).tolist() for k, p in self.params.named().items()}
        return json.dumps({"spec": asdict(self.spec), "params": arrays})

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> Model:
        blob = json.loads(text)
        model = build(ModelSpec(**blob["spec"]), seed=0)
        for name, p in model.params.named().items():
            p.data[...] = np.asarray(blob["params"][name], dtype=np.float64).reshape(p.shape)
        return model

    @classmethod
    def load(cls, path) -> Model:
        return cls.from_json(Path(path).read_text())


class _untracked:
    def __init__(self, params: ParamSet):
        self.params = params.all_params()

    def __enter__(self):
        self.flags = [p.requires_grad for p in self.params]
        for p in self.params:
            p.requires_grad = False

    def __exit__(self, *exc):
        for p, f in zip(self.params, self.flags):
            p.requires_grad = f


def _linear(rng, fan_in, fan_out, name):
    return {
        f"{name}.w": Tensor(_glorot(rng, fan_in, fan_out), requires_grad=True, name=f"{name}.w"),
        f"{name}.b": Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b"),
    }


def build(spec: ModelSpec, seed: int = 0) -> Model:
    rng = np.random.default_rng(seed)
    d, h, n = spec.input_dim, spec.hidden_dim, spec.task_count
    shared: dict[str, Tensor] = {}
    per_task: list[dict[str, Tensor]] = [{} for _ in range(n)]
    if spec.kind == "shared_bottom":
        shared.update(_linear(rng, d, h, "bottom"))
    else:
        for e in range(spec.expert_count):
            shared.update(_linear(rng, d, h, f"expert{e}"))
        gate_width = spec.expert_count + (spec.experts_per_task if spec.kind == "ple" else 0)
        for i in range(n):
            if spec.kind == "ple":
                for e in range(spec.experts_per_task):
                    per_task[i].update(_linear(rng, d, h, f"expert{e}"))
            per_task[i].update(_linear(rng, d, gate_width, "gate"))
    for i in range(n):
        per_task[i].update(_linear(rng, h, 1, "tower"))
    params = ParamSet(shared, per_task)
    params.check()
    return Model(spec, params)


def build_model(spec: ModelSpec, seed: int = 0) -> tuple[ParamSet, Callable[[np.ndarray], list[Tensor]]]:
    model = build(spec, seed)
    return model.params, model.forward


def forward_multi(model: Model, batch) -> list[Tensor]:
    return model.forward(batch)
