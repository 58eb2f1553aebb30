"""Base kernels, cached Gram blocks, and block multi-task quadratic forms.

The block multi-task kernel for group ``w`` and base kernel ``j`` weights a
label-scaled Gram entry by ``(mu+1)/mu`` inside a task, ``1/mu`` across two
tasks of the group, and zero elsewhere.  Nothing here ever materializes a
per-group matrix: quadratic forms decompose into per-task-pair scalars
``c[j, t1, t2] = beta_t1' G_j(t1, t2) beta_t2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import TaskGroup

# round-off tolerance below which a negative quadratic form is clamped to 0
_PSD_SLACK = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """One base kernel: a single linear feature, all features, or gaussian."""

    kind: str  # "feature" | "all" | "gaussian"
    feature: int | None = None
    width: float | None = None

    def __post_init__(self):
        if self.kind == "feature":
            if self.feature is None or self.feature < 0:
                raise ValueError("single-feature kernel needs a feature index")
        elif self.kind == "gaussian":
            if self.width is None or self.width <= 0:
                raise ValueError("gaussian kernel needs width > 0")
        elif self.kind != "all":
            raise ValueError(f"unknown kernel kind: {self.kind!r}")

    def is_linear(self) -> bool:
        return self.kind in ("feature", "all")


def linear_feature_specs(dim: int, include_all: bool = True) -> list[KernelSpec]:
    """The per-feature linear kernels, plus the all-features linear kernel."""
    specs = [KernelSpec("feature", feature=j) for j in range(dim)]
    if include_all:
        specs.append(KernelSpec("all"))
    return specs


def raw_kernel_matrix(spec: KernelSpec, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Unnormalized base kernel between two sample blocks."""
    if spec.kind == "feature":
        return np.outer(X1[:, spec.feature], X2[:, spec.feature])
    if spec.kind == "all":
        return X1 @ X2.T
    d2 = (
        np.sum(X1 * X1, axis=1)[:, None]
        + np.sum(X2 * X2, axis=1)[None, :]
        - 2.0 * (X1 @ X2.T)
    )
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * spec.width**2))


def trace_normalizers(specs: list[KernelSpec], X: np.ndarray) -> np.ndarray:
    """Per-kernel constants Z_j = mean diagonal of the raw Gram.

    Dividing each Gram by Z_j makes kernel selection scale-invariant; a
    kernel that is identically zero keeps Z_j = 1.
    """
    M = X.shape[0]
    zs = np.empty(len(specs))
    for j, spec in enumerate(specs):
        if spec.kind == "feature":
            z = float(np.mean(X[:, spec.feature] ** 2))
        elif spec.kind == "all":
            z = float(np.mean(np.sum(X * X, axis=1)))
        else:
            z = 1.0  # gaussian diagonal is 1 by construction
        zs[j] = z if z > 0.0 else 1.0
    return zs


class GramCache:
    """Immutable per-kernel Gram storage, label-scaled and trace-normalized.

    ``mode="explicit"`` stores an (n, M, M) stack; ``mode="implicit"``
    (linear kernels only) stores scaled feature columns and reconstructs any
    entry as an inner product.
    """

    def __init__(self, X, y, task_slices, specs, mode="auto",
                 memory_budget_mb: float = 512.0,
                 normalizers: np.ndarray | None = None):
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] != y.shape[0]:
            raise ValueError("feature/label length mismatch")
        for spec in specs:
            if spec.kind == "feature" and spec.feature >= X.shape[1]:
                raise ValueError(
                    f"kernel feature index {spec.feature} exceeds dim {X.shape[1]}"
                )
        M = X.shape[0]
        need_mb = len(specs) * M * M * 8 / 2**20
        if mode == "auto":
            mode = "explicit" if need_mb <= memory_budget_mb else "implicit"
        if mode == "explicit" and need_mb > memory_budget_mb:
            raise MemoryError(
                f"explicit Gram stack needs {need_mb:.1f} MiB "
                f"(budget {memory_budget_mb:.1f} MiB); use implicit mode"
            )
        if mode == "implicit" and any(not s.is_linear() for s in specs):
            raise ValueError("implicit mode supports linear kernels only")

        self.specs = list(specs)
        self.mode = mode
        self.X = X
        self.y = y
        self.task_slices = [
            (int(a), int(b)) for a, b in task_slices
        ]
        self.T = len(self.task_slices)
        self.M = M
        self.task_of = np.empty(M, dtype=np.intp)
        for t, (a, b) in enumerate(self.task_slices):
            self.task_of[a:b] = t
        if normalizers is None:
            self.normalizers = trace_normalizers(self.specs, X)
        else:
            self.normalizers = np.asarray(normalizers, dtype=np.float64).copy()
            if self.normalizers.shape != (len(self.specs),):
                raise ValueError("normalizer override length mismatch")
        # features scaled so every linear kernel is a plain inner product
        self._scaled: list[np.ndarray] = []
        for j, spec in enumerate(self.specs):
            z = np.sqrt(self.normalizers[j])
            if spec.kind == "feature":
                self._scaled.append(X[:, spec.feature] / z)
            elif spec.kind == "all":
                self._scaled.append(X / z)
            else:
                self._scaled.append(None)
        if mode == "explicit":
            yy = np.outer(y, y)
            grams = np.empty((len(specs), M, M))
            for j, spec in enumerate(self.specs):
                grams[j] = yy * raw_kernel_matrix(spec, X, X) / self.normalizers[j]
            self.grams = grams
        else:
            self.grams = None

    @property
    def n_kernels(self) -> int:
        return len(self.specs)

    def gram(self, j: int) -> np.ndarray:
        """Full label-scaled normalized Gram for kernel j (M x M)."""
        if self.grams is not None:
            return self.grams[j]
        spec = self.specs[j]
        phi = self._scaled[j]
        if spec.kind == "feature":
            yphi = self.y * phi
            return np.outer(yphi, yphi)
        yphi = self.y[:, None] * phi
        return yphi @ yphi.T

    def task_sizes(self) -> np.ndarray:
        return np.array([b - a for a, b in self.task_slices], dtype=np.intp)


def task_pair_quadratics(cache: GramCache, beta: np.ndarray) -> np.ndarray:
    """Per-pair building blocks c[j, t1, t2] = beta_t1' G_j(t1,t2) beta_t2."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (cache.M,):
        raise ValueError("beta length must match total sample count")
    T, n = cache.T, cache.n_kernels
    V = np.zeros((cache.M, T))
    for t, (a, b) in enumerate(cache.task_slices):
        V[a:b, t] = beta[a:b]
    c = np.empty((n, T, T))
    if cache.mode == "explicit":
        for j in range(n):
            c[j] = V.T @ cache.grams[j] @ V
    else:
        yb = cache.y * beta
        for j, spec in enumerate(cache.specs):
            phi = cache._scaled[j]
            if spec.kind == "feature":
                u = np.array([
                    float(yb[a:b] @ phi[a:b]) for a, b in cache.task_slices
                ])
                c[j] = np.outer(u, u)
            else:
                U = np.stack([
                    yb[a:b] @ phi[a:b] for a, b in cache.task_slices
                ])
                c[j] = U @ U.T
    # symmetrize and clamp round-off on the PSD diagonal
    c = 0.5 * (c + np.transpose(c, (0, 2, 1)))
    diag = np.einsum("jtt->jt", c)
    bad = diag < -_PSD_SLACK * max(1.0, float(np.abs(c).max()))
    if bad.any():
        raise FloatingPointError("negative diagonal quadratic form beyond round-off")
    np.einsum("jtt->jt", c)[...] = np.maximum(diag, 0.0)
    return c


def group_quadratic_form(
    w: TaskGroup, j: int, c: np.ndarray, mu: float
) -> float:
    """beta' K_w^j beta from the per-pair blocks; never materializes K_w^j."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    idx = list(w)
    block = c[j][np.ix_(idx, idx)]
    diag = float(np.trace(block))
    off = float(block.sum()) - diag
    val = (mu + 1.0) / mu * diag + off / mu
    if val < 0.0:
        if val < -_PSD_SLACK * max(1.0, float(np.abs(c).max())):
            raise FloatingPointError("negative group quadratic form beyond round-off")
        val = 0.0
    return val


def group_quadratics_matrix(
    groups: list[TaskGroup], c: np.ndarray, mu: float
) -> np.ndarray:
    """Q[w_idx, j] = beta' K_w^j beta for every active group and kernel."""
    n = c.shape[0]
    Q = np.empty((len(groups), n))
    for wi, w in enumerate(groups):
        idx = list(w)
        block = c[:, idx][:, :, idx]
        diag = np.einsum("jtt->j", block)
        total = block.sum(axis=(1, 2))
        Q[wi] = (mu + 1.0) / mu * diag + (total - diag) / mu
    scale = _PSD_SLACK * max(1.0, float(np.abs(c).max()))
    if (Q < -scale).any():
        raise FloatingPointError("negative group quadratic form beyond round-off")
    return np.maximum(Q, 0.0)


def certificate_building_blocks(c: np.ndarray, mu: float):
    """Aggregate (A, B): A_t and symmetric B feed the certificate sums.

    ``sum_{t in w} A_t + sum_{t1 != t2 in w} B_{t1,t2}`` equals
    ``beta' (sum_j K_w^j) beta`` for every group w.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    csum = c.sum(axis=0)
    A = (mu + 1.0) / mu * np.diag(csum).copy()
    B = csum / mu
    np.fill_diagonal(B, 0.0)
    return A, B


def effective_pair_coefficients(
    groups: list[TaskGroup], theta: np.ndarray, mu: float, T: int
) -> np.ndarray:
    """S[j, t1, t2] = sum over active groups containing both tasks of
    theta[w, j] * ((mu+1)/mu if t1 == t2 else 1/mu)."""
    n = theta.shape[1]
    Z = np.zeros((len(groups), T))
    for wi, w in enumerate(groups):
        Z[wi, list(w)] = 1.0
    # cross-task part: (1/mu) sum_w theta[w,j] z_w z_w^T
    S = np.einsum("wj,wa,wb->jab", theta, Z, Z) / mu
    # diagonal tops up to (mu+1)/mu
    D = theta.T @ Z  # (n, T)
    S[:, np.arange(T), np.arange(T)] += D
    return S


def effective_kernel(cache: GramCache, groups, theta, mu) -> np.ndarray:
    """Dense working kernel sum_j sum_w theta[w,j] K_w^j (M x M)."""
    S = effective_pair_coefficients(groups, np.asarray(theta, float), mu, cache.T)
    K = np.zeros((cache.M, cache.M))
    to = cache.task_of
    for j in range(cache.n_kernels):
        if not np.any(S[j]):
            continue
        E = S[j][np.ix_(to, to)]
        K += E * cache.gram(j)
    return K


def effective_kernel_entry(
    cache: GramCache, groups, theta, mu, i1: int, i2: int
) -> float:
    """Single entry of the working kernel; mirrors :func:`effective_kernel`."""
    t1 = int(cache.task_of[i1])
    t2 = int(cache.task_of[i2])
    total = 0.0
    for j, spec in enumerate(cache.specs):
        s = 0.0
        for wi, w in enumerate(groups):
            if t1 in w and t2 in w:
                m = (mu + 1.0) / mu if t1 == t2 else 1.0 / mu
                s += theta[wi][j] * m
        if s == 0.0:
            continue
        if cache.grams is not None:
            g = cache.grams[j][i1, i2]
        else:
            phi = cache._scaled[j]
            if spec.kind == "feature":
                g = cache.y[i1] * cache.y[i2] * phi[i1] * phi[i2]
            else:
                g = cache.y[i1] * cache.y[i2] * float(phi[i1] @ phi[i2])
        total += s * g
    return total
