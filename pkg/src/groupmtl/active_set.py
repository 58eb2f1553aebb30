"""Active-set driver: grow a hull-closed set of groups until the
certificate guarantees eps-optimality over the whole (exponential) lattice.

Only the sources of the complement (nodes outside the active set with every
parent inside) can violate the sufficiency condition, so each round costs
polynomial time in the active-set size.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .inner import Hyperparams, compute_lambda, nested_norm, solve_inner
from .kernels import (
    GramCache,
    certificate_building_blocks,
    group_quadratics_matrix,
    task_pair_quadratics,
)
from .lattice import LatticeOrder, TaskGroup
from .outer import DualState, solve_outer

log = logging.getLogger("groupmtl")


def certificate_violators(
    state: DualState,
    cache: GramCache,
    hyper: Hyperparams,
    order: LatticeOrder,
) -> list[tuple[TaskGroup, float]]:
    """Sources of the complement whose certificate sum exceeds
    theta_hat + 2*eps, sorted by their left-hand side, descending."""
    active = set(state.groups)
    if active != order.hull(active):
        raise ValueError("certificate requires a hull-closed active set")
    A, B = certificate_building_blocks(state.inner.pair_quadratics, hyper.mu)
    threshold = state.theta_hat + 2.0 * hyper.eps
    out = []
    for s in order.sources_of_complement(active):
        lhs = order.descendant_certificate_sum(s, A, B)
        if lhs > threshold:
            out.append((s, lhs))
    out.sort(key=lambda pair: (-pair[1], pair[0]))
    return out


def max_certificate_lhs(
    state: DualState, cache: GramCache, hyper: Hyperparams, order: LatticeOrder
) -> float:
    active = set(state.groups)
    A, B = certificate_building_blocks(state.inner.pair_quadratics, hyper.mu)
    sources = order.sources_of_complement(active)
    if not sources:
        return 0.0
    return max(order.descendant_certificate_sum(s, A, B) for s in sources)


@dataclass
class IterationRecord:
    round: int
    active_size: int
    objective: float
    theta_hat: float
    violators: int
    max_lhs: float
    wall_time: float

    def as_kv(self) -> str:
        return (
            f"round={self.round} active={self.active_size} "
            f"H={self.objective:.10g} theta_hat={self.theta_hat:.10g} "
            f"violators={self.violators} max_lhs={self.max_lhs:.10g} "
            f"wall={self.wall_time:.3f}"
        )


@dataclass
class ActiveSetResult:
    state: DualState
    certified: bool
    gap_bound: float
    rounds: int
    records: list[IterationRecord] = field(default_factory=list)


def _aligned_theta(groups, theta_by_group, n):
    theta = np.zeros((len(groups), n))
    for i, w in enumerate(groups):
        row = theta_by_group.get(w)
        if row is not None:
            theta[i] = row
    return theta


def solve_active_set(
    cache: GramCache, hyper: Hyperparams, order: LatticeOrder | None = None
) -> ActiveSetResult:
    """Algorithm: solve the restricted master, add every violating source,
    repeat until the certificate holds (or a size/round cap is hit)."""
    if order is None:
        order = hyper.order(cache.T)
    active: set[TaskGroup] = order.initial_active_set()
    records: list[IterationRecord] = []
    theta_by_group: dict[TaskGroup, np.ndarray] = {}
    beta = None
    state = None
    certified = False
    gap_bound = np.inf
    rounds = 0
    t0 = time.perf_counter()
    for rounds in range(1, hyper.max_rounds + 1):
        assert active == order.hull(active), "active set lost hull closure"
        groups = sorted(active)
        warm_theta = _aligned_theta(groups, theta_by_group, cache.n_kernels)
        state = solve_outer(
            groups, cache, hyper, order,
            warm_beta=beta, warm_theta=warm_theta,
        )
        beta = state.beta
        theta_by_group = {w: state.theta[i].copy() for i, w in enumerate(groups)}
        viols = certificate_violators(state, cache, hyper, order)
        if not viols:
            # recertify once at tightened inner tolerance before declaring success
            state = _recertified_state(state, cache, hyper, order)
            viols = certificate_violators(state, cache, hyper, order)
        max_lhs = max_certificate_lhs(state, cache, hyper, order)
        gap_bound = max(0.0, 0.5 * (max_lhs - state.theta_hat))
        rec = IterationRecord(
            round=rounds,
            active_size=len(active),
            objective=state.objective,
            theta_hat=state.theta_hat,
            violators=len(viols),
            max_lhs=max_lhs,
            wall_time=time.perf_counter() - t0,
        )
        records.append(rec)
        log.info("%s", rec.as_kv())
        if not viols:
            certified = True
            break
        new = [w for w, _ in viols]
        if hyper.top_k is not None:
            new = new[: hyper.top_k]
        if len(active) + len(new) > hyper.max_active:
            new = new[: max(0, hyper.max_active - len(active))]
            if not new:
                log.warning("active-set cap reached; model is not certified")
                break
        active |= set(new)
    return ActiveSetResult(
        state=state,
        certified=certified,
        gap_bound=gap_bound if certified else max(gap_bound, hyper.eps),
        rounds=rounds,
        records=records,
    )


def _recertified_state(
    state: DualState, cache: GramCache, hyper: Hyperparams, order: LatticeOrder
) -> DualState:
    tight = hyper.with_tolerances(
        inner_tol=hyper.inner_tol * 0.1,
        smo_tol=hyper.smo_tol * 0.1,
    )
    inner = solve_inner(
        state.gamma, state.groups, cache, tight, order,
        warm_beta=state.beta, warm_theta=state.theta,
    )
    lam = compute_lambda(state.gamma, state.groups, order, hyper.q,
                         hyper.gamma_floor)
    return DualState(
        groups=state.groups,
        gamma=state.gamma,
        beta=inner.beta,
        lam=lam,
        theta=inner.theta,
        theta_hat=inner.theta_hat,
        objective=inner.objective,
        inner=inner,
        converged=state.converged,
        iterations=state.iterations,
        history=state.history,
    )


def orient_lattice(mode: str, T: int, hyper: Hyperparams) -> LatticeOrder:
    """Orientation adapter for the active-set machinery."""
    return LatticeOrder(mode, T, hyper.scheme(),
                        complement_levels=hyper.complement_levels)
