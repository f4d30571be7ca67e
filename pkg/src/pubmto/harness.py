"""Training loops, the experiment grid, the toy runner and trace I/O."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis as A
from . import data as DS
from . import models as M
from . import optim as O
from . import solvers as S
from . import tensor as T
from .umm import ConfigError as UmmConfigError
from .umm import UmmConfig

log = logging.getLogger(__name__)

METHODS = ("ls", "pub", "mgda", "pcgrad", "cagrad", "imtl_g", "nashmtl", "uncertainty")
SCHEDULES = ("constant", "cosine")
TRACE_VERSION = 1
AGGREGATION = ("sim = mean over steps up to the best validation epoch of the per-step cosine "
               "between the flattened gradient and the applied update; task partition "
               "averages per-task cosines first; shared gradient is the unweighted task sum")


class ConfigError(ValueError):
    pass


class Divergence(ArithmeticError):
    pass


# exceptions that mean "bad configuration" anywhere in the package
CONFIG_ERRORS = (ConfigError, M.ConfigError, O.ConfigError, S.ConfigError, DS.ConfigError,
                 UmmConfigError)


def _philox(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass
class ExperimentConfig:
    dataset: DS.RankingDatasetConfig | DS.ToyConfig = field(default_factory=DS.RankingDatasetConfig)
    model: M.ModelSpec = field(default_factory=M.ModelSpec)
    optim: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    mto_method: str = "ls"
    umm: dict = field(default_factory=lambda: {"kind": "identity"})
    solve_every: int = 1
    epochs: int = 5
    batch_size: int = 512
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str | None = None
    tasks: list[int] = field(default_factory=lambda: [0, 1])
    weight_decay: float = 0.0
    cagrad_c: float = 0.5
    solver: dict = field(default_factory=dict)
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.mto_method not in METHODS:
            raise ConfigError(f"unknown method {self.mto_method!r}; expected one of {METHODS}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.solve_every < 1:
            raise ConfigError("solve_every must be >= 1")
        if self.lr_schedule not in SCHEDULES:
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}; expected one of {SCHEDULES}")
        if not self.tasks or any(t not in (0, 1) for t in self.tasks):
            raise ConfigError("tasks is a non-empty subset of [0, 1]")
        if isinstance(self.dataset, DS.RankingDatasetConfig) and \
                self.model.task_count != len(self.tasks):
            raise ConfigError(
                f"model has {self.model.task_count} tasks, config trains {len(self.tasks)}")
        if self.optim.get("kind", "adam") not in O.KINDS:
            raise ConfigError(f"unknown optimizer {self.optim.get('kind')!r}")
        UmmConfig(**self.umm)
        try:
            S.SolverConfig(**self.solver)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            ds = dict(d.pop("dataset", {}) or {})
            if ds.pop("kind", "ranking") == "toy":
                if "init_points" in ds:
                    ds["init_points"] = tuple(tuple(p) for p in ds["init_points"])
                d["dataset"] = DS.ToyConfig(**ds)
            else:
                d["dataset"] = DS.RankingDatasetConfig(**ds)
            if "model" in d:
                d["model"] = M.ModelSpec(**d["model"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dataset"] = dict(asdict(self.dataset),
                              kind="toy" if isinstance(self.dataset, DS.ToyConfig) else "ranking")
        return out

    def dataset_id(self) -> str:
        c = self.dataset
        return f"ranking-n{c.n_samples}-rho{c.rho:g}-s{c.seed}"


def load_config(path) -> dict:
    import yaml

    text = Path(path).read_text()
    try:
        blob = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(blob, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return blob


@dataclass
class RunResult:
    val_aucs: list[list[float]]
    best_epoch: int
    summary: A.ExperimentSummary
    trace_path: str | None
    epoch_times: list[float]
    diverged: bool = False
    final_epoch_auc: float | None = None
    abort_reason: str | None = None

    def to_dict(self) -> dict:
        return {"val_aucs": self.val_aucs, "best_epoch": self.best_epoch,
                "summary": asdict(self.summary), "trace_path": self.trace_path,
                "epoch_times": self.epoch_times, "diverged": self.diverged,
                "final_epoch_auc": self.final_epoch_auc, "abort_reason": self.abort_reason}


# -- trace files --------------------------------------------------------------------


class TraceWriter:
    """Append-only JSONL; the first line is a schema header. Keeps every line in memory too."""

    def __init__(self, path, header: dict):
        self.path = None if path is None else Path(path)
        self.lines: list[dict] = []
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w")
        self.write(dict(header, type="schema", version=TRACE_VERSION))

    def write(self, rec: dict) -> None:
        # round trip so the in-memory copy equals what a reader will parse
        text = json.dumps(rec, sort_keys=True)
        self.lines.append(json.loads(text))
        if self._fh is not None:
            self._fh.write(text + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "schema":
        raise ValueError(f"{path}: missing schema header")
    if lines[0]["version"] != TRACE_VERSION:
        raise ValueError(f"{path}: trace version {lines[0]['version']} unsupported")
    return lines


def summarize_trace(lines: list[dict]) -> tuple[A.ExperimentSummary, int] | None:
    """Summary at the best validation epoch; None when the run aborted or has no epochs."""
    head = lines[0]
    steps = [r for r in lines if r["type"] == "step"]
    epochs = [r for r in lines if r["type"] == "epoch"]
    if not epochs or any(r["type"] == "abort" for r in lines):
        return None
    avg = [float(np.mean(r["val_aucs"])) for r in epochs]
    best = int(np.argmax(avg))
    cut = epochs[best]["last_step"]
    kept = [A.TraceRecord.from_dict(r) for r in steps if r["step"] <= cut]
    st, sh = A.similarity_summary(kept)
    summ = A.ExperimentSummary(head["dataset_id"], head["model_kind"], head["method"], head["seed"],
                               avg[best], st, sh, A.diff_metric(st, sh), epochs[best]["val_aucs"])
    return summ, best


# -- method dispatch ----------------------------------------------------------------


@dataclass
class _MethodState:
    cfg: ExperimentConfig
    n: int
    seed: int
    pub: O.PubStepConfig | None = None
    nash: S.WeightSolution | None = None
    log_var: np.ndarray | None = None
    log_var_state: O.OptimizerState | None = None
    rng: np.random.Generator | None = None

    @classmethod
    def create(cls, cfg: ExperimentConfig, n: int, seed: int) -> _MethodState:
        st = cls(cfg, n, seed)
        m = cfg.mto_method
        if m == "pub":
            st.pub = O.PubStepConfig(solve_every=cfg.solve_every, solver=S.SolverConfig(**cfg.solver),
                                     umm=UmmConfig(**cfg.umm))
        elif m == "uncertainty":
            st.log_var = np.zeros(n)
            st.log_var_state = O.OptimizerState.create(n, **_optim_kw(cfg.optim))
        elif m == "pcgrad":
            st.rng = _philox(seed, 0x9C)
        return st


def _optim_kw(optim: dict) -> dict:
    kw = dict(optim)
    kind = kw.pop("kind", "adam")
    return {"kind": kind, **kw}


def lr_factor(schedule: str, step: int, total: int) -> float:
    """Multiplier on the base learning rate at ``step`` of ``total``."""
    if schedule == "cosine":
        return 0.5 * (1.0 + math.cos(math.pi * step / max(total, 1)))
    return 1.0


def _apply(method: _MethodState, params: M.ParamSet, states: O.ParamStates, shared_grads, task_grads,
           losses, lr_scale: float = 1.0) -> np.ndarray:
    """One optimizer step on every parameter group; returns the task weights used."""
    name, n = method.cfg.mto_method, method.n
    if name == "pub":
        res = O.pub_step(params, states, shared_grads, task_grads, method.pub, lr_scale)
        return res.solution.alpha
    if name == "ls":
        alpha = np.ones(n)
        combined = np.sum(shared_grads, axis=0)
    elif name == "mgda":
        alpha = S.solve_min_norm(shared_grads).alpha
        combined = alpha @ np.asarray(shared_grads)
    elif name == "imtl_g":
        alpha = S.imtl_g(shared_grads).alpha
        combined = alpha @ np.asarray(shared_grads)
    elif name == "nashmtl":
        if method.nash is None or states.shared.step_count % method.cfg.solve_every == 0:
            V = np.asarray(shared_grads)
            method.nash = S.solve_bargaining(S.GramMatrix.from_columns(V.T, "gradients").g,
                                             S.SolverConfig(**method.cfg.solver), vectors=V)
        alpha = method.nash.alpha
        combined = alpha @ np.asarray(shared_grads)
    elif name == "pcgrad":
        alpha = np.ones(n)
        combined = S.pcgrad(shared_grads, method.rng)[1] if n > 1 else shared_grads[0]
    elif name == "cagrad":
        alpha = np.ones(n)
        combined = S.cagrad(shared_grads, method.cfg.cagrad_c)
    else:  # uncertainty
        _, ds = S.uncertainty_weights(method.log_var, losses)
        alpha = np.exp(-method.log_var)
        combined = alpha @ np.asarray(shared_grads)
        method.log_var = O.plain_step(method.log_var, method.log_var_state, ds, lr_scale)
        O.joint_step(params, states, combined, task_grads, lr_scale, task_scales=alpha)
        return alpha
    O.joint_step(params, states, combined, task_grads, lr_scale)
    return alpha


# -- training -----------------------------------------------------------------------


_DATA_CACHE: dict = {}


def _dataset(cfg: DS.RankingDatasetConfig) -> DS.RankingDataset:
    if cfg not in _DATA_CACHE:
        if len(_DATA_CACHE) > 8:
            _DATA_CACHE.clear()
        _DATA_CACHE[cfg] = DS.gen_ranking(cfg)
    return _DATA_CACHE[cfg]


def _task_losses_and_grads(model: M.Model, X, Ys, wd: float):
    params = model.params
    leaves = params.all_params()
    with T.Tape():
        logits = model.forward(X)
        losses = [T.bce_with_logits(z, y) for z, y in zip(logits, Ys)]
        grads = [T.backward(loss, leaves, set_grad=False) for loss in losses]
    shared, task = [], []
    for i, g in enumerate(grads):
        sg = M.flatten(params.shared, g)
        tg = M.flatten(params.per_task[i], g)
        if wd:
            sg = sg + wd * M.flatten(params.shared)
            tg = tg + wd * M.flatten(params.per_task[i])
        shared.append(sg)
        task.append(tg)
    return [loss.item() for loss in losses], shared, task


def run_training(cfg: ExperimentConfig, seed: int, out_dir=None) -> RunResult:
    """Train one model; writes trace.jsonl and result.json under ``out_dir`` when given."""
    if not isinstance(cfg.dataset, DS.RankingDatasetConfig):
        raise ConfigError("run_training needs a ranking dataset; use run_toy for the toy problem")
    ds = _dataset(cfg.dataset)
    train_idx, val_idx = ds.split()
    labels = [ds.labels[t] for t in cfg.tasks]
    model = M.build(cfg.model, seed)
    params = model.params
    n = params.task_count
    states = O.ParamStates.create(params, **_optim_kw(cfg.optim))
    method = _MethodState.create(cfg, n, seed)

    out = None if out_dir is None else Path(out_dir)
    header = {"dataset_id": cfg.dataset_id(), "model_kind": cfg.model.kind,
              "method": cfg.mto_method, "seed": seed, "solve_every": cfg.solve_every,
              "aggregation": AGGREGATION}
    trace = TraceWriter(None if out is None else out / "trace.jsonl", header)
    val_aucs, epoch_times = [], []
    diverged, reason = False, None
    step = 0
    total_steps = cfg.epochs * -(-train_idx.size // cfg.batch_size)
    Xv = ds.X[val_idx]
    try:
        # overflow is caught below as divergence; keep numpy quiet about it
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for epoch in range(cfg.epochs):
                t0 = time.perf_counter()
                order = train_idx[_philox(seed, epoch).permutation(train_idx.size)]
                for start in range(0, order.size, cfg.batch_size):
                    b = order[start: start + cfg.batch_size]
                    losses, sg, tg = _task_losses_and_grads(model, ds.X[b], [y[b] for y in labels],
                                                            cfg.weight_decay)
                    if not all(np.isfinite(losses)):
                        raise Divergence(f"non-finite loss {losses} at step {step}")
                    sh_old = M.flatten(params.shared)
                    tk_old = [M.flatten(g) for g in params.per_task]
                    scale = lr_factor(cfg.lr_schedule, step, total_steps)
                    alpha = _apply(method, params, states, sg, tg, losses, scale)
                    sh_upd = sh_old - M.flatten(params.shared)
                    if not np.all(np.isfinite(sh_upd)):
                        raise Divergence(f"non-finite update at step {step}")
                    sim_task = float(np.mean([A.cosine(tg[i], tk_old[i] - M.flatten(params.per_task[i]))
                                              for i in range(n)]))
                    rec = A.TraceRecord(step, [float(v) for v in losses], [float(a) for a in alpha],
                                        sim_task, A.cosine(np.sum(sg, axis=0), sh_upd),
                                        [float(np.linalg.norm(g)) for g in sg],
                                        float(np.linalg.norm(sh_upd)))
                    trace.write(rec.to_dict())
                    step += 1
                scores = model.predict(Xv)
                aucs = [A.auc(s, y[val_idx]) for s, y in zip(scores, labels)]
                val_aucs.append(aucs)
                epoch_times.append(time.perf_counter() - t0)
                trace.write({"type": "epoch", "epoch": epoch, "val_aucs": aucs, "last_step": step - 1})
    except Divergence as exc:
        diverged, reason = True, f"diverged: {exc}"
        trace.write({"type": "abort", "step": step, "reason": reason})
        log.warning("run diverged: %s", exc)
    finally:
        trace.close()

    got = summarize_trace(trace.lines)
    if got is None:
        summ = A.ExperimentSummary(header["dataset_id"], cfg.model.kind, cfg.mto_method, seed,
                                   float("nan"), float("nan"), float("nan"), float("nan"))
        best = -1
    else:
        summ, best = got
    result = RunResult(val_aucs, best, summ, None if out is None else str(out / "trace.jsonl"),
                       epoch_times, diverged,
                       float(np.mean(val_aucs[-1])) if val_aucs and not diverged else None, reason)
    if out is not None:
        (out / "result.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        model.save(out / "model.json")
    return result


# -- grid ---------------------------------------------------------------------------


GRID_METHODS = ("ls", "mgda", "imtl_g", "nashmtl")


@dataclass
class GridSpec:
    methods: list[str] = field(default_factory=lambda: list(GRID_METHODS))
    models: list[str] = field(default_factory=lambda: list(M.KINDS))
    dataset_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    def cells(self, base: ExperimentConfig) -> list[tuple[str, ExperimentConfig, int]]:
        out = []
        for ds_seed in self.dataset_seeds:
            for kind in self.models:
                for method in self.methods:
                    for seed in self.seeds:
                        cid = f"d{ds_seed}-{kind}-{method}-s{seed}"
                        try:
                            cfg = replace(base, dataset=replace(base.dataset, seed=ds_seed),
                                          model=replace(base.model, kind=kind), mto_method=method)
                        except CONFIG_ERRORS as exc:
                            cfg = exc
                        out.append((cid, cfg, seed))
        return out


def _run_cell(args):
    cid, cfg, seed, out = args
    if isinstance(cfg, Exception):
        return cid, None, _failed_cell(Path(out) / cid, cid, f"config: {cfg}")
    try:
        res = run_training(cfg, seed, Path(out) / cid)
    except Exception as exc:  # isolate the cell; the grid goes on
        return cid, None, _failed_cell(Path(out) / cid, cid, f"{type(exc).__name__}: {exc}")
    return cid, res, res.abort_reason


def _failed_cell(cell_dir: Path, cid: str, reason: str) -> str:
    """Leave an abort-only trace so offline analysis sees the same failure."""
    trace = TraceWriter(cell_dir / "trace.jsonl", {"cell": cid})
    trace.write({"type": "abort", "step": 0, "reason": reason})
    trace.close()
    return reason


def run_grid(base: ExperimentConfig, spec: GridSpec, out_dir, workers: int = 1) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = spec.cells(base)
    manifest = {"cells": [c[0] for c in cells], "spec": asdict(spec), "base": base.to_dict()}
    (out / "grid.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    jobs = [(cid, cfg, seed, str(out)) for cid, cfg, seed in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_cell, jobs))
    else:
        done = [_run_cell(j) for j in jobs]
    summaries, failures = {}, {}
    for cid, res, err in done:
        if err is not None:
            failures[cid] = err
        else:
            summaries[cid] = res.summary
    report = build_report([c[0] for c in cells], summaries, failures)
    write_report(report, out)
    return report


def build_report(cell_ids, summaries: dict, failures: dict) -> dict:
    ordered = [summaries[c] for c in cell_ids if c in summaries]
    pairs, dropped = A.pairwise_indicators(ordered)
    table = A.confusion_matrix(pairs)
    try:
        chi2, bucket = A.chi_square_2x2(table)
    except A.UndefinedError:
        chi2, bucket = None, "undefined"
    x1 = int(table[1].sum())
    methods = sorted({s.method for s in ordered})
    sims = {}
    for m in methods:
        rows = [s for s in ordered if s.method == m]
        sims[m] = {"sim_task": float(np.mean([s.mean_sim_task for s in rows])),
                   "sim_share": float(np.mean([s.mean_sim_share for s in rows])),
                   "avg_auc": float(np.mean([s.avg_auc for s in rows])),
                   "runs": len(rows)}
        sims[m]["diff"] = A.diff_metric(sims[m]["sim_task"], sims[m]["sim_share"])
    tests = {}
    base = [s for s in ordered if s.method == "ls"]
    for m in methods:
        rows = [s for s in ordered if s.method == m]
        if m == "ls" or len(rows) < 2 or len(base) < 2:
            continue
        tests[m] = {}
        for key in ("avg_auc", "diff", "mean_sim_share", "mean_sim_task"):
            t, b = A.t_test_independent([getattr(s, key) for s in rows],
                                        [getattr(s, key) for s in base])
            tests[m][key] = {"t": t, "p_bucket": b}
    return {
        "aggregation": AGGREGATION,
        "cells": len(cell_ids),
        "completed": len(ordered),
        "failures": dict(sorted(failures.items())),
        "pairs": len(pairs),
        "dropped_pairs": dropped,
        "confusion_matrix": table.tolist(),
        "chi2": chi2,
        "chi2_p_bucket": bucket,
        "p_higher_diff_given_higher_auc": (int(table[1, 1]) / x1) if x1 else None,
        "similarity_table": sims,
        "t_tests_vs_ls": tests,
        "summaries": {c: asdict(summaries[c]) for c in cell_ids if c in summaries},
    }


def write_report(report: dict, out_dir, stem: str = "report") -> None:
    out = Path(out_dir)
    (out / f"{stem}.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "row", "col", "value"])
    cm = report["confusion_matrix"]
    for x in (0, 1):
        for y in (0, 1):
            w.writerow(["confusion", f"x={x}", f"y={y}", cm[x][y]])
    for m, row in report["similarity_table"].items():
        for key in ("sim_task", "sim_share", "diff", "avg_auc"):
            w.writerow(["similarity", m, key, repr(row[key])])
    (out / f"{stem}.csv").write_text(buf.getvalue())


def analyze(grid_dir, stem: str = "report_offline") -> dict:
    """Rebuild the grid report from the manifest and trace files alone."""
    grid = Path(grid_dir)
    manifest = json.loads((grid / "grid.json").read_text())
    summaries, failures = {}, {}
    for cid in manifest["cells"]:
        path = grid / cid / "trace.jsonl"
        if not path.exists():
            failures[cid] = "missing trace"
            continue
        lines = read_trace(path)
        abort = [r for r in lines if r["type"] == "abort"]
        if abort:
            failures[cid] = abort[0]["reason"]
            continue
        got = summarize_trace(lines)
        if got is None:
            failures[cid] = "no completed epoch"
        else:
            summaries[cid] = got[0]
    report = build_report(manifest["cells"], summaries, failures)
    write_report(report, grid, stem)
    return report


# -- toy ----------------------------------------------------------------------------


@dataclass
class ToyResult:
    finals: list[np.ndarray]
    distances: list[float]
    paths: list[str]


def run_toy(cfg: DS.ToyConfig, method: str = "pub", optim: dict | None = None, out_dir=None,
            solve_every: int = 1, seed: int = 0, umm: dict | None = None,
            solver: dict | None = None, lr_schedule: str = "constant") -> ToyResult:
    """Optimise the two-quadratic toy from every init; one CSV trajectory per init."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    optim = optim or {"kind": "adam", "lr": 1e-3}
    exp = ExperimentConfig(dataset=cfg, optim=optim, mto_method=method, solve_every=solve_every,
                           umm=umm or {"kind": "identity"}, solver=solver or {},
                           lr_schedule=lr_schedule)
    finals, dists, paths = [], [], []
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for k, p in enumerate(cfg.init_points):
        theta = T.Tensor(np.array(p, dtype=np.float64), requires_grad=True, name="theta")
        params = M.ParamSet({"theta": theta}, [{}, {}])
        states = O.ParamStates.create(params, **_optim_kw(optim))
        method_state = _MethodState.create(exp, 2, seed)
        rows = []
        for step in range(cfg.steps):
            L1, L2, g = DS.toy_losses(theta.data, cfg)
            rows.append((step, theta.data[0], theta.data[1], L1, L2))
            _apply(method_state, params, states, g, [np.zeros(0), np.zeros(0)], [L1, L2],
                   lr_factor(lr_schedule, step, cfg.steps))
        L1, L2, _ = DS.toy_losses(theta.data, cfg)
        rows.append((cfg.steps, theta.data[0], theta.data[1], L1, L2))
        finals.append(theta.data.copy())
        dists.append(DS.distance_to_segment(theta.data, cfg.c1, cfg.c2))
        if out is not None:
            path = out / f"trajectory_{k}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "theta0", "theta1", "L1", "L2"])
                w.writerows([(s, repr(float(a)), repr(float(b)), repr(l1), repr(l2))
                             for s, a, b, l1, l2 in rows])
            paths.append(str(path))
    if out is not None:
        (out / "toy_summary.json").write_text(json.dumps(
            {"method": method, "optim": optim, "kappa": cfg.kappa, "lr_schedule": lr_schedule,
             "finals": [f.tolist() for f in finals], "distance_to_front": dists},
            indent=2, sort_keys=True))
    return ToyResult(finals, dists, paths)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
