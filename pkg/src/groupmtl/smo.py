"""SMO front end: picks the compiled core when available.

Set ``GROUPMTL_PURE_SMO=1`` to force the numpy fallback (used by the
benchmark and by tests that compare the two implementations).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _smo_py

try:
    from . import _smo as _smo_ext
except ImportError:  # pragma: no cover - build-environment dependent
    _smo_ext = None


def backend(force_pure: bool | None = None) -> str:
    if force_pure is None:
        force_pure = os.environ.get("GROUPMTL_PURE_SMO", "") == "1"
    if force_pure or _smo_ext is None:
        return "python"
    return "compiled"


@dataclass
class SmoResult:
    beta: np.ndarray
    updates: int
    max_violation: float
    converged: bool
    objective: float
    objective_trace: list[float] = field(default_factory=list)


def smo_solve(
    K: np.ndarray,
    y: np.ndarray,
    task_slices: list[tuple[int, int]],
    C: float,
    beta0: np.ndarray | None = None,
    tol: float = 1e-3,
    max_updates: int = 2_000_000,
    record_objective: bool = False,
    force_pure: bool | None = None,
) -> SmoResult:
    """Maximize sum(beta) - 0.5 beta'Kbeta over the box and per-task
    equality constraints.  Warm-startable via ``beta0``."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    M = K.shape[0]
    if K.shape != (M, M) or y.shape != (M,):
        raise ValueError("kernel/label shape mismatch")
    if beta0 is None:
        beta = np.zeros(M)
    else:
        beta = np.array(beta0, dtype=np.float64, copy=True)
        if beta.shape != (M,):
            raise ValueError("warm-start beta has wrong length")
        np.clip(beta, 0.0, max(C, 0.0), out=beta)
    starts = np.array([a for a, _ in task_slices], dtype=np.intp)
    ends = np.array([b for _, b in task_slices], dtype=np.intp)

    if backend(force_pure) == "compiled":
        updates, worst, trace = _smo_ext.smo_run(
            K, y, starts, ends, float(C), beta, float(tol),
            int(max_updates), bool(record_objective),
        )
    else:
        updates, worst, trace = _smo_py.smo_run(
            K, y, starts, ends, float(C), beta, float(tol),
            int(max_updates), record_objective,
        )
    obj = float(beta.sum() - 0.5 * beta @ K @ beta)
    return SmoResult(
        beta=beta,
        updates=int(updates),
        max_violation=float(worst),
        converged=bool(updates < max_updates),
        objective=obj,
        objective_trace=list(trace),
    )
