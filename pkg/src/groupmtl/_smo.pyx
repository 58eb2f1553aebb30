# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled SMO core; behavioural twin of ``_smo_py.smo_run``.

Same pair selection, tie-breaking, and clipping arithmetic as the pure
implementation so the two backends produce bit-identical iterates.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double _TINY = 1e-12


def smo_run(double[:, ::1] K, double[::1] y,
            long[::1] starts, long[::1] ends,
            double C, double[::1] beta,
            double tol, long max_updates, bint record_objective=False):
    cdef Py_ssize_t M = beta.shape[0]
    cdef Py_ssize_t T = starts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad_arr = \
        np.asarray(K) @ np.asarray(beta) - 1.0
    cdef double[::1] grad = grad_arr
    trace = []
    cdef long updates = 0
    cdef Py_ssize_t t, k, a, b, i, j
    cdef double worst, viol, score, best_up, best_low, s
    cdef bint any_update, is_up, is_low
    cdef double quad, delta, diff, total, bi, bj, di, dj, obj
    cdef Py_ssize_t idx

    if C <= 0.0:
        for k in range(M):
            beta[k] = 0.0
        return 0, 0.0, trace

    while True:
        any_update = False
        worst = 0.0
        for t in range(T):
            a = starts[t]
            b = ends[t]
            best_up = -np.inf
            best_low = np.inf
            i = -1
            j = -1
            for k in range(a, b):
                s = -y[k] * grad[k]
                if y[k] > 0.0:
                    is_up = beta[k] < C
                    is_low = beta[k] > 0.0
                else:
                    is_up = beta[k] > 0.0
                    is_low = beta[k] < C
                if is_up and s > best_up:
                    best_up = s
                    i = k
                if is_low and s < best_low:
                    best_low = s
                    j = k
            if i < 0 or j < 0:
                continue
            viol = best_up - best_low
            if viol > worst:
                worst = viol
            if viol <= tol:
                continue

            # two-variable update with box clipping
            bi = beta[i]
            bj = beta[j]
            if y[i] != y[j]:
                quad = K[i, i] + K[j, j] + 2.0 * K[i, j]
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
                quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
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
            for k in range(M):
                grad[k] += K[k, i] * di + K[k, j] * dj
            beta[i] = bi
            beta[j] = bj
            updates += 1
            any_update = True
            if record_objective:
                obj = 0.0
                for k in range(M):
                    obj += beta[k] * (1.0 - 0.5 * (grad[k] + 1.0))
                trace.append(obj)
            if updates >= max_updates:
                return updates, worst, trace
        if not any_update:
            return updates, 0.0, trace
