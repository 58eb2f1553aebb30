"""Dataset ingestion, splits, standardization, metrics, synthetic benchmarks.

The canonical on-disk format is a single delimited text file with header
``task,label,f1,...,fD`` (comma or tab, auto-detected), or a directory with
one such file per task.  Labels are -1/+1; 0/1 labels are remapped with a
logged notice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger("groupmtl")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class DatasetBundle:
    xs: list[np.ndarray]  # per-task (m_t, dim) feature blocks
    ys: list[np.ndarray]  # per-task labels in {-1, +1}
    task_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.xs:
            raise DataError("a dataset needs at least one task")
        dim = self.xs[0].shape[1]
        for t, (x, y) in enumerate(zip(self.xs, self.ys)):
            if x.shape[0] == 0:
                raise DataError(f"task {t} has no samples")
            if x.shape[1] != dim:
                raise DataError(f"task {t} feature dimension mismatch")
            if x.shape[0] != y.shape[0]:
                raise DataError(f"task {t} feature/label length mismatch")
            if not np.isin(y, (-1.0, 1.0)).all():
                raise DataError(f"task {t} labels must be -1/+1")
        if not self.task_names:
            self.task_names = [str(t) for t in range(len(self.xs))]

    @property
    def T(self) -> int:
        return len(self.xs)

    @property
    def dim(self) -> int:
        return self.xs[0].shape[1]

    def sizes(self) -> list[int]:
        return [x.shape[0] for x in self.xs]

    def stacked(self):
        """(X, y, task_slices) with tasks concatenated in order."""
        X = np.vstack(self.xs)
        y = np.concatenate(self.ys)
        slices = []
        pos = 0
        for x in self.xs:
            slices.append((pos, pos + x.shape[0]))
            pos += x.shape[0]
        return X, y, slices

    def degenerate_tasks(self) -> list[int]:
        """Tasks with a single label class (no nontrivial feasible dual)."""
        return [t for t, y in enumerate(self.ys) if np.unique(y).size < 2]


def _parse_rows(lines, path, start_row=1):
    header = lines[0].rstrip("\n")
    delim = "\t" if "\t" in header else ","
    cols = [c.strip() for c in header.split(delim)]
    if len(cols) < 3 or cols[0] != "task" or cols[1] != "label":
        raise DataError(f"{path}: header must be task{delim}label{delim}f1...")
    dim = len(cols) - 2
    rows = []
    for r, line in enumerate(lines[1:], start=start_row + 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(delim)
        if len(parts) != dim + 2:
            raise DataError(
                f"{path}: row {r} has {len(parts) - 2} features, expected {dim}"
            )
        try:
            task = parts[0].strip()
            label = float(parts[1])
            feats = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise DataError(f"{path}: row {r} is not numeric: {exc}") from None
        rows.append((task, label, feats))
    return rows, dim


def load_dataset(path: str | Path) -> DatasetBundle:
    """Load the canonical delimited format (file, or directory of files)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file or directory: {path}")
    files = sorted(path.glob("*")) if path.is_dir() else [path]
    files = [f for f in files if f.is_file()]
    if not files:
        raise DataError(f"{path}: empty directory")
    by_task: dict[str, list[tuple[float, list[float]]]] = {}
    order: list[str] = []
    dim = None
    for f in files:
        lines = f.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise DataError(f"{f}: empty file")
        rows, d = _parse_rows(lines, f)
        if dim is None:
            dim = d
        elif d != dim:
            raise DataError(f"{f}: feature dimension {d} != {dim}")
        for task, label, feats in rows:
            if task not in by_task:
                by_task[task] = []
                order.append(task)
            by_task[task].append((label, feats))
    labels = {lab for rows in by_task.values() for lab, _ in rows}
    if labels <= {0.0, 1.0}:
        log.info("labels {0,1} remapped to {-1,+1}")
        remap = {0.0: -1.0, 1.0: 1.0}
    elif labels <= {-1.0, 1.0}:
        remap = {-1.0: -1.0, 1.0: 1.0}
    else:
        raise DataError(f"labels must be binary (-1/+1 or 0/1), got {sorted(labels)}")
    xs, ys = [], []
    for task in order:
        rows = by_task[task]
        xs.append(np.array([f for _, f in rows], dtype=float))
        ys.append(np.array([remap[l] for l, _ in rows], dtype=float))
    return DatasetBundle(xs, ys, task_names=order)


def save_dataset(bundle: DatasetBundle, path: str | Path):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("task,label," + ",".join(f"f{j+1}" for j in range(bundle.dim)) + "\n")
        for t in range(bundle.T):
            name = bundle.task_names[t]
            for y, x in zip(bundle.ys[t], bundle.xs[t]):
                fh.write(
                    f"{name},{int(y)},"
                    + ",".join(repr(float(v)) for v in x)
                    + "\n"
                )


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray  # flags for zero-variance features (left unscaled)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def invert(self, X: np.ndarray) -> np.ndarray:
        return X * self.scale + self.mean


def standardize(bundle: DatasetBundle):
    """Per-feature zero mean / unit variance, pooled across tasks."""
    X = np.vstack(bundle.xs)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = std <= 0.0
    if constant.any():
        log.info("standardize: %d zero-variance features left unscaled",
                 int(constant.sum()))
    scale = np.where(constant, 1.0, std)
    tf = Standardizer(mean=mean, scale=scale, constant=constant)
    out = DatasetBundle(
        [tf.apply(x) for x in bundle.xs],
        [y.copy() for y in bundle.ys],
        task_names=list(bundle.task_names),
    )
    return out, tf


def split(bundle: DatasetBundle, fraction: float, seed: int):
    """Per-task, per-label stratified train/test split; deterministic."""
    if not (0.0 < fraction < 1.0):
        raise DataError("train fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for t in range(bundle.T):
        x, y = bundle.xs[t], bundle.ys[t]
        tr_idx, te_idx = [], []
        for lab in (-1.0, 1.0):
            idx = np.where(y == lab)[0]
            if idx.size == 0:
                continue
            perm = rng.permutation(idx)
            k = int(round(fraction * idx.size))
            tr_idx.extend(perm[:k])
            te_idx.extend(perm[k:])
        if not tr_idx or not te_idx:
            log.warning("split: task %d has an empty side", t)
        minority = min((y == -1.0).sum(), (y == 1.0).sum())
        if minority and (minority * fraction < 1 or minority * (1 - fraction) < 1):
            log.warning("split: task %d minority class missing on one side", t)
        tr_idx = np.sort(np.array(tr_idx, dtype=int))
        te_idx = np.sort(np.array(te_idx, dtype=int))
        tr_x.append(x[tr_idx]); tr_y.append(y[tr_idx])
        te_x.append(x[te_idx]); te_y.append(y[te_idx])
    names = list(bundle.task_names)
    return (DatasetBundle(tr_x, tr_y, task_names=names),
            DatasetBundle(te_x, te_y, task_names=names))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC; ties count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    pos = scores[labels > 0]
    neg = scores[labels < 0]
    if pos.size == 0 or neg.size == 0:
        raise DataError("AUC undefined: both classes must be present")
    order = np.argsort(np.concatenate([pos, neg]), kind="mergesort")
    ranks = np.empty(order.size, dtype=float)
    ranks[order] = np.arange(1, order.size + 1)
    # average ranks over ties
    vals = np.concatenate([pos, neg])
    sorted_vals = vals[order]
    i = 0
    while i < order.size:
        j = i
        while j + 1 < order.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    rank_pos = ranks[: pos.size].sum()
    u = rank_pos - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    pred = np.where(np.asarray(scores) >= 0.0, 1.0, -1.0)
    return float((pred == np.asarray(labels)).mean())


@dataclass(frozen=True)
class SyntheticSpec:
    T: int
    groups: tuple[tuple[int, ...], ...]  # disjoint partition of tasks
    dim: int
    k_shared: int
    m: int
    m_test: int = 200
    weight_jitter: float = 0.1
    noise_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        covered = sorted(t for g in self.groups for t in g)
        if covered != list(range(self.T)):
            raise DataError("groups must partition the tasks exactly")
        if self.k_shared > self.dim:
            raise DataError("k_shared cannot exceed the feature dimension")
        if not (0.0 <= self.noise_rate < 0.5):
            raise DataError("noise rate must lie in [0, 0.5)")


@dataclass
class GroundTruth:
    groups: tuple[tuple[int, ...], ...]
    feature_masks: list[np.ndarray]  # per planted group, sorted indices


def generate_synthetic(spec: SyntheticSpec):
    """Plant group structure: each group shares k_shared sparse features.

    Feature supports are drawn without replacement across groups while the
    pool lasts, so distinct groups get disjoint supports by construction.
    Returns (train bundle, test bundle, ground truth).
    """
    rng = np.random.default_rng(spec.seed)
    pool = list(rng.permutation(spec.dim))
    masks = []
    for _ in spec.groups:
        if len(pool) >= spec.k_shared:
            feats = [pool.pop() for _ in range(spec.k_shared)]
        else:
            feats = list(rng.choice(spec.dim, size=spec.k_shared, replace=False))
        masks.append(np.array(sorted(feats), dtype=int))

    weights = np.zeros((spec.T, spec.dim))
    for g, mask in zip(spec.groups, masks):
        base = rng.standard_normal(spec.k_shared)
        for t in g:
            weights[t, mask] = base + spec.weight_jitter * rng.standard_normal(
                spec.k_shared
            )

    def draw(m_per_task):
        xs, ys = [], []
        for t in range(spec.T):
            while True:
                x = rng.standard_normal((m_per_task, spec.dim))
                y = np.where(x @ weights[t] >= 0.0, 1.0, -1.0)
                flip = rng.random(m_per_task) < spec.noise_rate
                y = np.where(flip, -y, y)
                if np.unique(y).size == 2:
                    break
            xs.append(x)
            ys.append(y)
        return DatasetBundle(xs, ys)

    train = draw(spec.m)
    test = draw(spec.m_test)
    truth = GroundTruth(groups=spec.groups, feature_masks=masks)
    return train, test, truth
