"""Trained models: fitting entry points, prediction, and serialization.

A model is a set of independent blocks. The grouped learner produces one
block covering every non-degenerate task; the single-task baseline produces
one block per task; the single-group baseline produces one block whose only
active group is the full task set. Degenerate tasks (one label class) are
never placed in a block and fall back to a bias-only predictor.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .active_set import solve_active_set
from .data import DatasetBundle, Standardizer
from .inner import Hyperparams
from .kernels import (
    GramCache,
    KernelSpec,
    effective_kernel,
    effective_pair_coefficients,
    linear_feature_specs,
    raw_kernel_matrix,
    trace_normalizers,
)
from .lattice import TaskGroup
from .outer import DualState, solve_outer

log = logging.getLogger("groupmtl")

MODEL_FORMAT = "groupmtl-model"
MODEL_VERSION = 1

_FREE_RTOL = 1e-8


class ModelFormatError(ValueError):
    pass


@dataclass
class ModelBlock:
    """One jointly trained unit. ``groups`` use local task indices
    0..len(tasks)-1; ``tasks`` maps them back to dataset task ids."""

    tasks: list[int]
    groups: list[TaskGroup]
    gamma: np.ndarray
    theta: np.ndarray  # (|groups|, n_kernels)
    sv_X: np.ndarray
    sv_y: np.ndarray
    sv_beta: np.ndarray
    sv_task: np.ndarray  # local task index per support vector

    def local_index(self, task: int) -> int | None:
        try:
            return self.tasks.index(task)
        except ValueError:
            return None


@dataclass
class TrainedModel:
    kind: str  # "grouped" | "stl" | "single_group"
    hyper: Hyperparams
    specs: list[KernelSpec]
    normalizers: np.ndarray
    standardizer: Standardizer | None
    T: int
    dim: int
    task_names: list[str]
    bias: np.ndarray  # subtracted from the raw score
    blocks: list[ModelBlock]
    certified: bool = True
    gap_bound: float = 0.0
    rounds: int = 0

    def selected_groups(self, cutoff_mult: float = 10.0):
        """Per block, the groups whose simplex weight sits above the floor,
        with global task ids."""
        floor = self.hyper.gamma_floor * cutoff_mult
        out = []
        for blk in self.blocks:
            kept = [
                (TaskGroup.of(blk.tasks[t] for t in w), float(g))
                for w, g in zip(blk.groups, blk.gamma)
                if g > floor
            ]
            out.append(kept)
        return out


def _support_vectors(X, y, beta, task_of, C):
    keep = beta > _FREE_RTOL * max(C, 1.0)
    return (
        np.ascontiguousarray(X[keep]),
        y[keep].copy(),
        beta[keep].copy(),
        task_of[keep].astype(np.intp),
    )


def _recover_biases(slices, y, beta, margins, C):
    """Per-task offset so that free support vectors sit on the margin.

    With no free vectors the KKT conditions still bracket the offset; we take
    the interval midpoint. A task whose dual is identically zero gets the
    offset that predicts its majority label.
    """
    lo_tol = _FREE_RTOL * max(C, 1.0)
    hi_tol = C * (1.0 - _FREE_RTOL)
    biases = np.zeros(len(slices))
    for t, (a, b) in enumerate(slices):
        bt, yt, ft = beta[a:b], y[a:b], margins[a:b]
        free = (bt > lo_tol) & (bt < hi_tol)
        if free.any():
            biases[t] = float(np.mean(ft[free] - yt[free]))
            continue
        if not (bt > lo_tol).any():
            maj = 1.0 if yt.sum() >= 0 else -1.0
            biases[t] = -maj
            continue
        # bounds on the offset from the inactive KKT inequalities
        at_c = bt >= hi_tol
        lower = [-np.inf]
        upper = [np.inf]
        lower += list(ft[at_c & (yt > 0)] - 1.0)
        lower += list(ft[~at_c & (yt < 0)] + 1.0)
        upper += list(ft[~at_c & (yt > 0)] - 1.0)
        upper += list(ft[at_c & (yt < 0)] + 1.0)
        lo, hi = max(lower), min(upper)
        if np.isinf(lo) and np.isinf(hi):
            biases[t] = 0.0
        elif np.isinf(lo):
            biases[t] = hi
        elif np.isinf(hi):
            biases[t] = lo
        else:
            biases[t] = 0.5 * (lo + hi)
    return biases


def _build_block(state: DualState, cache: GramCache, hyper: Hyperparams,
                 X_std, tasks):
    K = effective_kernel(cache, state.groups, state.theta, hyper.mu)
    margins = cache.y * (K @ state.beta)
    biases = _recover_biases(cache.task_slices, cache.y, state.beta,
                             margins, hyper.C)
    sv_X, sv_y, sv_beta, sv_task = _support_vectors(
        X_std, cache.y, state.beta, cache.task_of, hyper.C
    )
    block = ModelBlock(
        tasks=list(tasks),
        groups=list(state.groups),
        gamma=state.gamma.copy(),
        theta=state.theta.copy(),
        sv_X=sv_X,
        sv_y=sv_y,
        sv_beta=sv_beta,
        sv_task=sv_task,
    )
    return block, biases


def _prepare(bundle: DatasetBundle, hyper: Hyperparams, specs, standardizer):
    if specs is None:
        specs = linear_feature_specs(bundle.dim)
    if standardizer is not None:
        bundle = DatasetBundle(
            [standardizer.apply(x) for x in bundle.xs],
            [y.copy() for y in bundle.ys],
            task_names=list(bundle.task_names),
        )
    X, y, slices = bundle.stacked()
    Z = trace_normalizers(specs, X)
    return bundle, specs, X, y, slices, Z


def _degenerate_bias(y: np.ndarray) -> float:
    maj = 1.0 if y.sum() >= 0 else -1.0
    return -maj


def fit(
    bundle: DatasetBundle,
    hyper: Hyperparams,
    specs: list[KernelSpec] | None = None,
    standardizer: Standardizer | None = None,
) -> TrainedModel:
    """Grouped multi-task fit: active-set search over the task-group lattice."""
    bundle, specs, X, y, slices, Z = _prepare(bundle, hyper, specs, standardizer)
    degen = set(bundle.degenerate_tasks())
    active_tasks = [t for t in range(bundle.T) if t not in degen]
    bias = np.zeros(bundle.T)
    blocks: list[ModelBlock] = []
    certified, gap_bound, rounds = True, 0.0, 0
    for t in degen:
        bias[t] = _degenerate_bias(bundle.ys[t])
    if active_tasks:
        sub = DatasetBundle(
            [bundle.xs[t] for t in active_tasks],
            [bundle.ys[t] for t in active_tasks],
            task_names=[bundle.task_names[t] for t in active_tasks],
        )
        Xs, ys, sl = sub.stacked()
        cache = GramCache(Xs, ys, sl, specs,
                          memory_budget_mb=hyper.memory_budget_mb,
                          normalizers=Z)
        result = solve_active_set(cache, hyper)
        certified = result.certified
        gap_bound = result.gap_bound
        rounds = result.rounds
        block, blk_bias = _build_block(result.state, cache, hyper, Xs,
                                       active_tasks)
        blocks.append(block)
        for local, t in enumerate(active_tasks):
            bias[t] = blk_bias[local]
    return TrainedModel(
        kind="grouped",
        hyper=hyper,
        specs=specs,
        normalizers=Z,
        standardizer=standardizer,
        T=bundle.T,
        dim=bundle.dim,
        task_names=list(bundle.task_names),
        bias=bias,
        blocks=blocks,
        certified=certified,
        gap_bound=gap_bound,
        rounds=rounds,
    )


def _single_set_fit(bundle, hyper, specs, standardizer, groups_of, kind):
    """Shared driver for the baselines: a fixed active set, no expansion."""
    bundle, specs, X, y, slices, Z = _prepare(bundle, hyper, specs, standardizer)
    degen = set(bundle.degenerate_tasks())
    bias = np.zeros(bundle.T)
    blocks: list[ModelBlock] = []
    for t in degen:
        bias[t] = _degenerate_bias(bundle.ys[t])
    active_tasks = [t for t in range(bundle.T) if t not in degen]
    for tasks in groups_of(active_tasks):
        if not tasks:
            continue
        sub = DatasetBundle(
            [bundle.xs[t] for t in tasks],
            [bundle.ys[t] for t in tasks],
            task_names=[bundle.task_names[t] for t in tasks],
        )
        Xs, ys, sl = sub.stacked()
        cache = GramCache(Xs, ys, sl, specs,
                          memory_budget_mb=hyper.memory_budget_mb,
                          normalizers=Z)
        full = TaskGroup.of(range(len(tasks)))
        order = hyper.order(len(tasks))
        state = solve_outer([full], cache, hyper, order)
        block, blk_bias = _build_block(state, cache, hyper, Xs, tasks)
        blocks.append(block)
        for local, t in enumerate(tasks):
            bias[t] = blk_bias[local]
    return TrainedModel(
        kind=kind,
        hyper=hyper,
        specs=specs,
        normalizers=Z,
        standardizer=standardizer,
        T=bundle.T,
        dim=bundle.dim,
        task_names=list(bundle.task_names),
        bias=bias,
        blocks=blocks,
    )


def baseline_stl(bundle, hyper, specs=None, standardizer=None) -> TrainedModel:
    """Independent per-task models (each its own block; no task coupling)."""
    return _single_set_fit(
        bundle, hyper, specs, standardizer,
        lambda tasks: [[t] for t in tasks], "stl",
    )


def baseline_single_group_mtl(bundle, hyper, specs=None,
                              standardizer=None) -> TrainedModel:
    """All tasks in one shared group; no lattice search."""
    return _single_set_fit(
        bundle, hyper, specs, standardizer,
        lambda tasks: [tasks], "single_group",
    )


def _block_scores(model: TrainedModel, block: ModelBlock, local_t: int,
                  X: np.ndarray) -> np.ndarray:
    S = effective_pair_coefficients(
        block.groups, block.theta, model.hyper.mu, len(block.tasks)
    )
    coef = S[:, block.sv_task, local_t]  # (n_kernels, n_sv)
    out = np.zeros(X.shape[0])
    if block.sv_X.shape[0] == 0:
        return out
    weights = block.sv_beta * block.sv_y
    for j, spec in enumerate(model.specs):
        col = coef[j]
        if not np.any(col):
            continue
        Kj = raw_kernel_matrix(spec, block.sv_X, X) / model.normalizers[j]
        out += (col * weights) @ Kj
    return out


def decision_function(model: TrainedModel, task: int, X: np.ndarray) -> np.ndarray:
    """Real-valued scores for one task; positive means the +1 class."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError("query features must be (n, dim)")
    if not (0 <= task < model.T):
        raise ValueError(f"task index {task} out of range")
    if model.standardizer is not None:
        X = model.standardizer.apply(X)
    score = np.zeros(X.shape[0])
    for block in model.blocks:
        local = block.local_index(task)
        if local is not None:
            score += _block_scores(model, block, local, X)
    return score - model.bias[task]


def predict(model: TrainedModel, task: int, X: np.ndarray) -> np.ndarray:
    """Hard labels in {-1, +1}; zero scores resolve to +1."""
    s = decision_function(model, task, X)
    return np.where(s >= 0.0, 1.0, -1.0)


def extract_linear_weights(model: TrainedModel) -> np.ndarray:
    """(T, dim) weight matrix in the model's (standardized) input space.

    Only defined when every base kernel is linear.
    """
    if not all(spec.is_linear() for spec in model.specs):
        raise ValueError("linear weights need all-linear base kernels")
    W = np.zeros((model.T, model.dim))
    for block in model.blocks:
        S = None
        for j, spec in enumerate(model.specs):
            if block.sv_X.shape[0] == 0:
                break
            if S is None:
                S = effective_pair_coefficients(
                    block.groups, block.theta, model.hyper.mu, len(block.tasks)
                )
            coef = S[j][block.sv_task]  # (n_sv, T_local)
            wt = block.sv_beta * block.sv_y
            if spec.kind == "feature":
                contrib = (wt * block.sv_X[:, spec.feature]) @ coef
                contrib /= model.normalizers[j]
                for local, t in enumerate(block.tasks):
                    W[t, spec.feature] += contrib[local]
            else:
                contrib = (coef.T * wt) @ block.sv_X / model.normalizers[j]
                for local, t in enumerate(block.tasks):
                    W[t] += contrib[local]
    return W


# ---------------------------------------------------------------------------
# serialization


def _spec_to_dict(spec: KernelSpec) -> dict:
    return {"kind": spec.kind, "feature": spec.feature, "width": spec.width}


def _spec_from_dict(d: dict) -> KernelSpec:
    return KernelSpec(d["kind"], feature=d["feature"], width=d["width"])


def _hyper_to_dict(h: Hyperparams) -> dict:
    d = dataclasses.asdict(h)
    d["level_overrides"] = {str(k): v for k, v in h.level_overrides.items()}
    return d


def _hyper_from_dict(d: dict) -> Hyperparams:
    d = dict(d)
    d["level_overrides"] = {int(k): v for k, v in d["level_overrides"].items()}
    return Hyperparams(**d)


def _block_to_dict(b: ModelBlock) -> dict:
    return {
        "tasks": list(b.tasks),
        "groups": [w.mask for w in b.groups],
        "gamma": b.gamma.tolist(),
        "theta": b.theta.tolist(),
        "sv_X": b.sv_X.tolist(),
        "sv_y": b.sv_y.tolist(),
        "sv_beta": b.sv_beta.tolist(),
        "sv_task": b.sv_task.tolist(),
    }


def _block_from_dict(d: dict, n_kernels: int, dim: int) -> ModelBlock:
    return ModelBlock(
        tasks=list(d["tasks"]),
        groups=[TaskGroup(m) for m in d["groups"]],
        gamma=np.asarray(d["gamma"], dtype=np.float64),
        theta=np.asarray(d["theta"], dtype=np.float64).reshape(
            len(d["groups"]), n_kernels),
        sv_X=np.asarray(d["sv_X"], dtype=np.float64).reshape(-1, dim),
        sv_y=np.asarray(d["sv_y"], dtype=np.float64),
        sv_beta=np.asarray(d["sv_beta"], dtype=np.float64),
        sv_task=np.asarray(d["sv_task"], dtype=np.intp),
    )


def _payload(model: TrainedModel) -> dict:
    std = None
    if model.standardizer is not None:
        std = {
            "mean": model.standardizer.mean.tolist(),
            "scale": model.standardizer.scale.tolist(),
            "constant": model.standardizer.constant.astype(bool).tolist(),
        }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "hyper": _hyper_to_dict(model.hyper),
        "specs": [_spec_to_dict(s) for s in model.specs],
        "normalizers": model.normalizers.tolist(),
        "standardizer": std,
        "T": model.T,
        "dim": model.dim,
        "task_names": list(model.task_names),
        "bias": model.bias.tolist(),
        "certified": bool(model.certified),
        "gap_bound": float(model.gap_bound),
        "rounds": int(model.rounds),
        "blocks": [_block_to_dict(b) for b in model.blocks],
    }


def _checksum(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def serialize(model: TrainedModel, path: str | Path) -> None:
    payload = _payload(model)
    payload["checksum"] = _checksum({k: v for k, v in payload.items()})
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1))


def deserialize(path: str | Path) -> TrainedModel:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file: {exc}") from exc
    if payload.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file")
    if payload.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {payload.get('version')!r}")
    stored = payload.pop("checksum", None)
    if stored != _checksum(payload):
        raise ModelFormatError("model file checksum mismatch")
    std = None
    if payload["standardizer"] is not None:
        s = payload["standardizer"]
        std = Standardizer(
            mean=np.asarray(s["mean"], dtype=np.float64),
            scale=np.asarray(s["scale"], dtype=np.float64),
            constant=np.asarray(s["constant"], dtype=bool),
        )
    specs = [_spec_from_dict(d) for d in payload["specs"]]
    dim = int(payload["dim"])
    return TrainedModel(
        kind=payload["kind"],
        hyper=_hyper_from_dict(payload["hyper"]),
        specs=specs,
        normalizers=np.asarray(payload["normalizers"], dtype=np.float64),
        standardizer=std,
        T=int(payload["T"]),
        dim=dim,
        task_names=list(payload["task_names"]),
        bias=np.asarray(payload["bias"], dtype=np.float64),
        blocks=[_block_from_dict(d, len(specs), dim)
                for d in payload["blocks"]],
        certified=bool(payload["certified"]),
        gap_bound=float(payload["gap_bound"]),
        rounds=int(payload["rounds"]),
    )
