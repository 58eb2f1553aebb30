"""Pure-numpy SMO core: the fallback twin of the compiled extension.

Solves max sum(beta) - 0.5 beta' K beta subject to 0 <= beta <= C and a
per-task equality constraint y_t' beta_t = 0, where K is the label-scaled
working kernel.  Working pairs are the maximal-violating pair within a
task; tasks are visited round-robin; ties break toward the lowest sample
index (numpy argmax/argmin return the first extremum).
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-12


def smo_run(K, y, starts, ends, C, beta, tol, max_updates, record_objective=False):
    """Run SMO in place on ``beta``.

    Returns ``(updates, max_violation, objective_trace)``; the trace is an
    empty list unless ``record_objective`` is set.  ``max_violation`` is the
    worst per-task KKT violation at exit (0 means every task satisfied the
    tolerance on the final sweep).
    """
    M = beta.shape[0]
    T = len(starts)
    grad = K @ beta - 1.0
    trace: list[float] = []
    updates = 0
    if C <= 0.0:
        beta[:] = 0.0
        return 0, 0.0, trace
    pos = y > 0
    while True:
        any_update = False
        worst = 0.0
        for t in range(T):
            a, b = starts[t], ends[t]
            yt = y[a:b]
            bt = beta[a:b]
            gt = grad[a:b]
            up = np.where((pos[a:b] & (bt < C)) | (~pos[a:b] & (bt > 0.0)))[0]
            low = np.where((pos[a:b] & (bt > 0.0)) | (~pos[a:b] & (bt < C)))[0]
            if up.size == 0 or low.size == 0:
                continue
            score = -yt * gt
            i_loc = up[np.argmax(score[up])]
            j_loc = low[np.argmin(score[low])]
            viol = score[i_loc] - score[j_loc]
            if viol > worst:
                worst = float(viol)
            if viol <= tol:
                continue
            i = a + int(i_loc)
            j = a + int(j_loc)
            _pair_update(K, y, beta, grad, i, j, C)
            updates += 1
            any_update = True
            if record_objective:
                # beta' K beta == beta . (grad + 1)
                quad = float(beta @ grad) + float(beta.sum())
                trace.append(float(beta.sum()) - 0.5 * quad)
            if updates >= max_updates:
                return updates, worst, trace
        if not any_update:
            return updates, 0.0, trace


def _pair_update(K, y, beta, grad, i, j, C):
    Kii = K[i, i]
    Kjj = K[j, j]
    Kij = K[i, j]
    bi, bj = beta[i], beta[j]
    if y[i] != y[j]:
        quad = Kii + Kjj + 2.0 * Kij
        if quad <= 0.0:
            quad = _TINY
        delta = (-grad[i] - grad[j]) / quad
        diff = bi - bj
        bi += delta
        bj += delta
        if diff > 0.0:
            if bj < 0.0:
                bj = 0.0
                bi = diff
        else:
            if bi < 0.0:
                bi = 0.0
                bj = -diff
        if diff > 0.0:
            if bi > C:
                bi = C
                bj = C - diff
        else:
            if bj > C:
                bj = C
                bi = C + diff
    else:
        quad = Kii + Kjj - 2.0 * Kij
        if quad <= 0.0:
            quad = _TINY
        delta = (grad[i] - grad[j]) / quad
        total = bi + bj
        bi -= delta
        bj += delta
        if total > C:
            if bi > C:
                bi = C
                bj = total - C
        else:
            if bj < 0.0:
                bj = 0.0
                bi = total
        if total > C:
            if bj > C:
                bj = C
                bi = total - C
        else:
            if bi < 0.0:
                bi = 0.0
                bj = total
    di = bi - beta[i]
    dj = bj - beta[j]
    grad += K[:, i] * di + K[:, j] * dj
    beta[i] = bi
    beta[j] = bj
