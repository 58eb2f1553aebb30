"""Combinatorics of the task-group lattice.

Task groups are nonempty subsets of ``{0, .., T-1}`` stored as bitmasks and
ordered by inclusion.  In the normal orientation the parents of a group are
its one-smaller subsets; the inverted orientation reverses the order so that
parents are one-larger supersets.  Everything here is a pure function of
immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Iterator

import numpy as np

MAX_TASKS = 64


@total_ordering
class TaskGroup:
    """Immutable nonempty set of task indices, canonically a bitmask."""

    __slots__ = ("mask",)

    def __init__(self, mask: int):
        if mask <= 0:
            raise ValueError("a task group must contain at least one task")
        object.__setattr__(self, "mask", int(mask))

    def __setattr__(self, name, value):
        raise AttributeError("TaskGroup is immutable")

    @classmethod
    def of(cls, members: Iterable[int]) -> "TaskGroup":
        mask = 0
        for t in members:
            if t < 0 or t >= MAX_TASKS:
                raise ValueError(f"task index {t} out of range [0, {MAX_TASKS})")
            mask |= 1 << t
        return cls(mask)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(self)

    def __iter__(self) -> Iterator[int]:
        mask = self.mask
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __contains__(self, task: int) -> bool:
        return bool((self.mask >> task) & 1)

    def issubset(self, other: "TaskGroup") -> bool:
        return self.mask & ~other.mask == 0

    def __eq__(self, other) -> bool:
        return isinstance(other, TaskGroup) and self.mask == other.mask

    def __lt__(self, other: "TaskGroup") -> bool:
        # canonical order: by cardinality, then by bitmask value
        return (len(self), self.mask) < (len(other), other.mask)

    def __hash__(self) -> int:
        return hash(self.mask)

    def __repr__(self) -> str:
        return f"TaskGroup({{{','.join(map(str, self))}}})"


@dataclass(frozen=True)
class GroupWeightScheme:
    """Level-decomposable node weights ``d_v = base ** |v|``.

    ``level_overrides`` maps a cardinality to a fixed nonnegative weight,
    e.g. ``{1: 0.0}`` encodes the prior that no task is unrelated to all
    others.  The closed-form certificate sums require a pure geometric
    scheme and reject overrides.
    """

    base: float = 1.5
    level_overrides: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.base <= 0:
            raise ValueError("weight base must be positive")
        for lvl, w in self.level_overrides.items():
            if w < 0:
                raise ValueError(f"override for level {lvl} must be nonnegative")

    def weight(self, v: TaskGroup) -> float:
        lvl = len(v)
        if lvl in self.level_overrides:
            return self.level_overrides[lvl]
        return self.base ** lvl


def group_weight(v: TaskGroup, scheme: GroupWeightScheme) -> float:
    return scheme.weight(v)


def ancestors(w: TaskGroup) -> set[TaskGroup]:
    """All nonempty subsets of ``w`` (including ``w``); 2^|w| - 1 groups."""
    out = set()
    mask = w.mask
    sub = mask
    while sub:
        out.add(TaskGroup(sub))
        sub = (sub - 1) & mask
    return out


def hull(groups: Iterable[TaskGroup]) -> set[TaskGroup]:
    """Closure of a node set under taking ancestors (nonempty subsets)."""
    out: set[TaskGroup] = set()
    for w in groups:
        if w not in out:
            out |= ancestors(w)
    return out


def sources_of_complement(active: set[TaskGroup], T: int) -> set[TaskGroup]:
    """Nodes outside ``active`` whose parents all lie inside it.

    Singletons have the (never materialized) empty root as their only
    parent, so a missing singleton always qualifies.  Requires
    ``active == hull(active)``.
    """
    if active != hull(active):
        raise ValueError("active set must equal its hull")
    candidates: set[TaskGroup] = set()
    for t in range(T):
        g = TaskGroup(1 << t)
        if g not in active:
            candidates.add(g)
    for w in active:
        for t in range(T):
            if t not in w:
                candidates.add(TaskGroup(w.mask | (1 << t)))
    out = set()
    for cand in candidates:
        if cand in active:
            continue
        if all(
            TaskGroup(cand.mask ^ (1 << t)) in active
            for t in cand
            if len(cand) > 1
        ):
            out.add(cand)
    return out


def _require_geometric(scheme: GroupWeightScheme):
    if scheme.level_overrides:
        raise ValueError(
            "closed-form lattice sums require a pure geometric weight scheme"
        )


def interval_weight_sum(
    s: TaskGroup, w: TaskGroup, scheme: GroupWeightScheme
) -> float:
    """Sum of d_v over the interval {v : s <= v <= w}.

    Equals ``a^|s| * (1+a)^(|w|-|s|)`` for the geometric scheme.
    """
    _require_geometric(scheme)
    if not s.issubset(w):
        raise ValueError("s must be a subset of w")
    a = scheme.base
    return a ** len(s) * (1.0 + a) ** (len(w) - len(s))


def _comb(n: int, k: int) -> int:
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def _split_sums(s: TaskGroup, A: np.ndarray, B: np.ndarray, T: int):
    """Membership-aggregated sums used by the certificate closed forms."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != (T,) or B.shape != (T, T):
        raise ValueError("A must be (T,), B must be (T, T)")
    if not np.allclose(B, B.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise ValueError("B must be symmetric")
    e_in = np.zeros(T, dtype=bool)
    for t in s:
        e_in[t] = True
    e_out = ~e_in
    Bz = B.copy()
    np.fill_diagonal(Bz, 0.0)
    a_in = float(A[e_in].sum())
    a_out = float(A[e_out].sum())
    b_in = float(Bz[np.ix_(e_in, e_in)].sum())        # ordered pairs inside s
    b_cross = float(Bz[np.ix_(e_in, e_out)].sum())    # one direction only
    b_out = float(Bz[np.ix_(e_out, e_out)].sum())
    return a_in, a_out, b_in, b_cross, b_out


def descendant_certificate_sum(
    s: TaskGroup,
    A: np.ndarray,
    B: np.ndarray,
    scheme: GroupWeightScheme,
    T: int,
) -> float:
    """Certificate left-hand side for source ``s`` over all supersets.

    Computes sum over w >= s of
    ``(sum_{t in w} A_t + sum_{t1 != t2 in w} B_{t1 t2}) / den(w)^2`` with
    ``den(w)`` the d-weight sum over the interval [s, w].  Supersets are
    grouped by size, and task/pair membership counts reduce to binomial
    coefficients, so the cost is O(T^2) after the aggregation above.
    """
    _require_geometric(scheme)
    a = scheme.base
    a_in, a_out, b_in, b_cross, b_out = _split_sums(s, A, B, T)
    R = T - len(s)
    total = 0.0
    for r in range(R + 1):
        num = (
            _comb(R, r) * (a_in + b_in)
            + _comb(R - 1, r - 1) * (a_out + 2.0 * b_cross)
            + _comb(R - 2, r - 2) * b_out
        )
        den = a ** len(s) * (1.0 + a) ** r
        total += num / (den * den)
    return total


# --- inverted orientation -------------------------------------------------
#
# Parents become one-larger supersets; the first lattice level is the full
# task group.  Ancestors of w are its supersets, descendants its subsets.


def ancestors_inverted(w: TaskGroup, T: int) -> set[TaskGroup]:
    """All supersets of ``w`` within T tasks (including ``w``)."""
    free = [t for t in range(T) if t not in w]
    out = set()
    for extra in range(1 << len(free)):
        mask = w.mask
        for b, t in enumerate(free):
            if (extra >> b) & 1:
                mask |= 1 << t
        out.add(TaskGroup(mask))
    return out


def hull_inverted(groups: Iterable[TaskGroup], T: int) -> set[TaskGroup]:
    out: set[TaskGroup] = set()
    for w in groups:
        if w not in out:
            out |= ancestors_inverted(w, T)
    return out


def sources_of_complement_inverted(active: set[TaskGroup], T: int) -> set[TaskGroup]:
    if active != hull_inverted(active, T):
        raise ValueError("active set must equal its (inverted) hull")
    full = TaskGroup((1 << T) - 1)
    candidates: set[TaskGroup] = set()
    if full not in active:
        candidates.add(full)
    for w in active:
        if len(w) > 1:
            for t in w:
                candidates.add(TaskGroup(w.mask ^ (1 << t)))
    out = set()
    for cand in candidates:
        if cand in active:
            continue
        if all(
            TaskGroup(cand.mask | (1 << t)) in active
            for t in range(T)
            if t not in cand
        ):
            out.add(cand)
    return out


def interval_weight_sum_inverted(
    s: TaskGroup, w: TaskGroup, scheme: GroupWeightScheme, *, complement_levels: bool = False, T: int = 0
) -> float:
    """Sum of d_v over {v : w <= v <= s} (the inverted-order interval).

    With ``complement_levels`` the weights are ``a^(T-|v|)`` instead of
    ``a^|v|``.
    """
    _require_geometric(scheme)
    if not w.issubset(s):
        raise ValueError("w must precede s in the inverted order (w subset of s)")
    a = scheme.base
    k = len(s) - len(w)
    if not complement_levels:
        return a ** len(w) * (1.0 + a) ** k
    # sum_{u=0..k} C(k,u) a^(T - |w| - u)
    return a ** (T - len(w)) * (1.0 + 1.0 / a) ** k


def descendant_certificate_sum_inverted(
    s: TaskGroup,
    A: np.ndarray,
    B: np.ndarray,
    scheme: GroupWeightScheme,
    T: int,
    *,
    complement_levels: bool = False,
) -> float:
    """Inverted-orientation certificate sum: descendants are subsets of s."""
    _require_geometric(scheme)
    a = scheme.base
    a_in, _, b_in, _, _ = _split_sums(s, A, B, T)
    n = len(s)
    total = 0.0
    for k in range(1, n + 1):
        num = _comb(n - 1, k - 1) * a_in + _comb(n - 2, k - 2) * b_in
        if not complement_levels:
            den = a ** k * (1.0 + a) ** (n - k)
        else:
            den = a ** (T - k) * (1.0 + 1.0 / a) ** (n - k)
        total += num / (den * den)
    return total


class LatticeOrder:
    """Orientation adapter: one consistent view of the lattice relations.

    ``mode`` is ``"normal"`` (ancestors are subsets, Algorithm starts from
    singletons) or ``"inverted"`` (ancestors are supersets, start from the
    full group).  ``complement_levels`` switches the inverted variant's
    d-weights from ``a^|v|`` to ``a^(T-|v|)``.
    """

    def __init__(self, mode: str, T: int, scheme: GroupWeightScheme,
                 complement_levels: bool = False):
        if mode not in ("normal", "inverted"):
            raise ValueError(f"unknown lattice orientation: {mode!r}")
        if T < 1 or T > MAX_TASKS:
            raise ValueError(f"task count must be in [1, {MAX_TASKS}]")
        if complement_levels and mode != "inverted":
            raise ValueError("complement_levels applies to the inverted mode only")
        self.mode = mode
        self.T = T
        self.scheme = scheme
        self.complement_levels = complement_levels

    @property
    def inverted(self) -> bool:
        return self.mode == "inverted"

    def weight(self, v: TaskGroup) -> float:
        if self.complement_levels:
            if self.scheme.level_overrides:
                raise ValueError("complement_levels requires a geometric scheme")
            return self.scheme.base ** (self.T - len(v))
        return self.scheme.weight(v)

    def ancestors(self, w: TaskGroup) -> set[TaskGroup]:
        if self.inverted:
            return ancestors_inverted(w, self.T)
        return ancestors(w)

    def hull(self, groups: Iterable[TaskGroup]) -> set[TaskGroup]:
        if self.inverted:
            return hull_inverted(groups, self.T)
        return hull(groups)

    def sources_of_complement(self, active: set[TaskGroup]) -> set[TaskGroup]:
        if self.inverted:
            return sources_of_complement_inverted(active, self.T)
        return sources_of_complement(active, self.T)

    def is_ancestor(self, v: TaskGroup, w: TaskGroup) -> bool:
        """True when v is an ancestor of w (v precedes w in this order)."""
        if self.inverted:
            return w.issubset(v)
        return v.issubset(w)

    def initial_active_set(self) -> set[TaskGroup]:
        if self.inverted:
            return {TaskGroup((1 << self.T) - 1)}
        return {TaskGroup(1 << t) for t in range(self.T)}

    def descendant_certificate_sum(
        self, s: TaskGroup, A: np.ndarray, B: np.ndarray
    ) -> float:
        if self.inverted:
            return descendant_certificate_sum_inverted(
                s, A, B, self.scheme, self.T,
                complement_levels=self.complement_levels,
            )
        return descendant_certificate_sum(s, A, B, self.scheme, self.T)

    def all_groups(self) -> list[TaskGroup]:
        """Every nonempty group, in canonical order (for tiny T only)."""
        return sorted(TaskGroup(m) for m in range(1, 1 << self.T))
