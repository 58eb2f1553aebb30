"""Independent brute-force references used by tests and acceptance runs.

Everything here favors correctness over speed and is only suitable for
desk-scale instances (T <= 4 solvers, T <= 12 enumerations).  None of it is
reachable from the CLI's default path.
"""

from __future__ import annotations

import numpy as np

from .inner import Hyperparams, compute_lambda, nested_norm
from .kernels import GramCache, group_quadratics_matrix, task_pair_quadratics
from .lattice import GroupWeightScheme, LatticeOrder, TaskGroup
from .outer import DualState, solve_outer


# --- lattice enumeration twins ---------------------------------------------

def enumerated_interval_weight_sum(
    lo: TaskGroup, hi: TaskGroup, scheme: GroupWeightScheme
) -> float:
    """Literal sum of d_v over {v : lo <= v <= hi}."""
    if not lo.issubset(hi):
        raise ValueError("lo must be a subset of hi")
    free = hi.mask & ~lo.mask
    total = 0.0
    sub = free
    while True:
        total += scheme.weight(TaskGroup(lo.mask | sub)) if (lo.mask | sub) else 0.0
        if sub == 0:
            break
        sub = (sub - 1) & free
    return total


def _group_numerator(w: TaskGroup, A: np.ndarray, B: np.ndarray) -> float:
    idx = list(w)
    Bz = np.asarray(B, float).copy()
    np.fill_diagonal(Bz, 0.0)
    return float(np.asarray(A, float)[idx].sum() + Bz[np.ix_(idx, idx)].sum())


def enumerated_certificate(
    s: TaskGroup,
    A: np.ndarray,
    B: np.ndarray,
    order: LatticeOrder,
) -> float:
    """Certificate left-hand side by literal enumeration of descendants."""
    T = order.T
    total = 0.0
    if not order.inverted:
        free = [t for t in range(T) if t not in s]
        for extra in range(1 << len(free)):
            mask = s.mask
            for b, t in enumerate(free):
                if (extra >> b) & 1:
                    mask |= 1 << t
            w = TaskGroup(mask)
            den = sum(
                order.weight(v)
                for v in order.ancestors(w)
                if order.is_ancestor(s, v)
            )
            total += _group_numerator(w, A, B) / den**2
    else:
        sub = s.mask
        while sub:
            w = TaskGroup(sub)
            den = sum(
                order.weight(v)
                for v in order.ancestors(w)
                if order.is_ancestor(s, v)
            )
            total += _group_numerator(w, A, B) / den**2
            sub = (sub - 1) & s.mask
    return total


# --- explicit kernel assembly ----------------------------------------------

def materialize_block_kernel(
    cache: GramCache, w: TaskGroup, j: int, mu: float
) -> np.ndarray:
    """The full M x M block multi-task kernel K_w^j, for tiny instances."""
    K = np.zeros((cache.M, cache.M))
    G = cache.gram(j)
    for t1, (a1, b1) in enumerate(cache.task_slices):
        for t2, (a2, b2) in enumerate(cache.task_slices):
            if t1 in w and t2 in w:
                scale = (mu + 1.0) / mu if t1 == t2 else 1.0 / mu
                K[a1:b1, a2:b2] = scale * G[a1:b1, a2:b2]
    return K


# --- generic dense QP for tiny SVM duals ------------------------------------

def qp_svm_dual(K: np.ndarray, y: np.ndarray,
                task_slices: list[tuple[int, int]], C: float):
    """Solve max sum(b) - 0.5 b'Kb, 0 <= b <= C, y_t'b_t = 0, as a dense QP."""
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    M = K.shape[0]
    if C == 0.0:
        return np.zeros(M), 0.0
    P = cvxopt.matrix(K + 1e-10 * np.eye(M))
    qv = cvxopt.matrix(-np.ones(M))
    G = cvxopt.matrix(np.vstack([-np.eye(M), np.eye(M)]))
    h = cvxopt.matrix(np.concatenate([np.zeros(M), C * np.ones(M)]))
    Aeq = np.zeros((len(task_slices), M))
    for t, (a, b) in enumerate(task_slices):
        Aeq[t, a:b] = y[a:b]
    sol = cvxopt.solvers.qp(P, qv, G, h, cvxopt.matrix(Aeq),
                            cvxopt.matrix(np.zeros(len(task_slices))))
    beta = np.asarray(sol["x"]).ravel()
    obj = float(beta.sum() - 0.5 * beta @ K @ beta)
    return beta, obj


# --- flat lp-norm MKL by projected gradient ---------------------------------

def _project_lp_ball_nonneg(z: np.ndarray, r: float, iters: int = 100) -> np.ndarray:
    """Euclidean projection of z onto {tau >= 0, ||tau||_r <= 1} (r > 1)."""
    z = np.maximum(z, 0.0)
    if (z**r).sum() <= 1.0:
        return z
    # KKT: tau + nu * r * tau^(r-1) = z on the support; bisection on nu
    def tau_of(nu):
        # solve t + nu r t^(r-1) = z_i per component (monotone in t)
        t = np.minimum(z, 1.0)
        for _ in range(60):
            f = t + nu * r * t ** (r - 1.0) - z
            fp = 1.0 + nu * r * (r - 1.0) * t ** max(r - 2.0, 0.0)
            t = np.clip(t - f / fp, 0.0, None)
        return t

    lo, hi = 0.0, 1.0
    while ((tau_of(hi) ** r).sum()) > 1.0:
        hi *= 2.0
        if hi > 1e12:
            break
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (tau_of(mid) ** r).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return tau_of(hi)


def flat_mkl_projected_gradient(
    grams: list[np.ndarray],
    lam: float,
    pbar: float,
    y: np.ndarray,
    task_slices: list[tuple[int, int]],
    C: float,
    iters: int = 300,
):
    """Reference solver for max_b sum(b) - 0.5 lam^(1/pbar) ||(b'K_j b)_j||_pbar.

    Works on the equivalent saddle form: minimize the SVM value of the
    kernel sum tau_j lam^(1/pbar) K_j over the nonnegative unit
    l_{pbar/(pbar-1)} ball by projected gradient, QP inner solves.
    """
    n = len(grams)
    scale = lam ** (1.0 / pbar)
    r = pbar / (pbar - 1.0) if pbar > 1.0 else None
    tau = np.full(n, n ** (-1.0 / r)) if r else np.ones(n)
    best = np.inf
    best_beta = None
    step = 1.0
    for k in range(1, iters + 1):
        K = scale * np.einsum("j,jab->ab", tau, np.stack(grams))
        beta, obj = qp_svm_dual(K, y, task_slices, C)
        if obj < best:
            best, best_beta = obj, beta
        grad = -0.5 * scale * np.array([beta @ G @ beta for G in grams])
        if r is None:  # pbar == 1: linear in tau over the l_inf box
            tau = np.clip(tau - (step / np.sqrt(k)) * grad, 0.0, 1.0)
        else:
            gn = float(np.abs(grad).max()) + 1e-15
            tau = _project_lp_ball_nonneg(tau - (step / np.sqrt(k)) * grad / gn, r)
    return best_beta, best


# --- finite differences ------------------------------------------------------

def fd_gradient(func, point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of a simplex function along renormalized
    coordinate perturbations.

    Component i approximates the tangent directional derivative
    grad_i - <grad, point>, because (point + s e_i) is renormalized back to
    the simplex before evaluation.
    """
    point = np.asarray(point, dtype=float)
    out = np.zeros_like(point)
    for i in range(point.size):
        hi = point.copy()
        hi[i] += step
        lo = point.copy()
        lo[i] -= step
        out[i] = (func(hi / hi.sum()) - func(lo / lo.sum())) / (2.0 * step)
    return out


# --- full-lattice solve -------------------------------------------------------

def full_lattice_solve(
    cache: GramCache, hyper: Hyperparams, order: LatticeOrder | None = None
) -> DualState:
    """Solve the master problem over every nonempty group (T <= 4)."""
    if cache.T > 4:
        raise ValueError("full lattice solves are limited to T <= 4")
    if order is None:
        order = hyper.order(cache.T)
    return solve_outer(order.all_groups(), cache, hyper, order)


# --- primal reference ---------------------------------------------------------

class PrimalReference:
    """Explicit-weight subgradient solver for the regularized primal.

    Variables are the shared component h0 and per-task offsets h_t for every
    (group, kernel) pair over the full lattice, linear kernels only.  The
    objective is 0.5 * Omega^2 + C * total hinge, where Omega nests the
    group terms exactly as the dual's certificate value does; this pairing
    makes the weak-duality sandwich against the main solver tight.
    """

    SMOOTH = 1e-8

    def __init__(self, cache: GramCache, hyper: Hyperparams,
                 order: LatticeOrder | None = None):
        if cache.T > 4:
            raise ValueError("primal reference is limited to T <= 4")
        if any(not s.is_linear() for s in cache.specs):
            raise ValueError("primal reference requires linear kernels")
        self.cache = cache
        self.hyper = hyper
        self.order = order if order is not None else hyper.order(cache.T)
        self.groups = self.order.all_groups()
        self.dims = [
            1 if s.kind == "feature" else cache.X.shape[1] for s in cache.specs
        ]
        # feature maps: phi_j(x) is the scaled column(s) of x
        self.phis = []
        for j, s in enumerate(cache.specs):
            if s.kind == "feature":
                self.phis.append(cache._scaled[j][:, None])
            else:
                self.phis.append(cache._scaled[j])

    def init_params(self):
        h0 = {}
        ht = {}
        for w in self.groups:
            for j in range(self.cache.n_kernels):
                h0[(w, j)] = np.zeros(self.dims[j])
                for t in w:
                    ht[(w, j, t)] = np.zeros(self.dims[j])
        b = np.zeros(self.cache.T)
        return h0, ht, b

    def scores(self, h0, ht, b):
        F = np.zeros(self.cache.M)
        for t, (a, bb) in enumerate(self.cache.task_slices):
            for w in self.groups:
                if t not in w:
                    continue
                for j in range(self.cache.n_kernels):
                    f = h0[(w, j)] + ht[(w, j, t)]
                    F[a:bb] += self.phis[j][a:bb] @ f
            F[a:bb] -= b[t]
        return F

    def theta_terms(self, h0, ht):
        """Theta_wj = sqrt(mu ||h0||^2 + sum_t ||h_t||^2), smoothed at 0."""
        mu = self.hyper.mu
        th = np.zeros((len(self.groups), self.cache.n_kernels))
        for wi, w in enumerate(self.groups):
            for j in range(self.cache.n_kernels):
                v = mu * float(h0[(w, j)] @ h0[(w, j)])
                for t in w:
                    v += float(ht[(w, j, t)] @ ht[(w, j, t)])
                th[wi, j] = np.sqrt(v + self.SMOOTH**2)
        return th

    def omega(self, th):
        p, q = self.hyper.p, self.hyper.q
        norm_p = (th**p).sum(axis=1) ** (1.0 / p)
        total = 0.0
        for vi, v in enumerate(self.groups):
            dv = self.order.weight(v)
            if dv == 0.0:
                continue
            inner = sum(
                norm_p[wi] ** q
                for wi, w in enumerate(self.groups)
                if self.order.is_ancestor(v, w)
            )
            total += dv * inner ** (1.0 / q)
        return total, norm_p

    def objective(self, h0, ht, b):
        th = self.theta_terms(h0, ht)
        omega, _ = self.omega(th)
        F = self.scores(h0, ht, b)
        hinge = np.maximum(0.0, 1.0 - self.cache.y * F).sum()
        return 0.5 * omega**2 + self.hyper.C * hinge

    def gradient(self, h0, ht, b):
        """Subgradient via the chain rule through the smoothed nesting."""
        p, q, mu, C = self.hyper.p, self.hyper.q, self.hyper.mu, self.hyper.C
        th = self.theta_terms(h0, ht)
        omega, norm_p = self.omega(th)

        # d(0.5 omega^2)/d theta_wj
        dtheta = np.zeros_like(th)
        for vi, v in enumerate(self.groups):
            dv = self.order.weight(v)
            if dv == 0.0:
                continue
            desc = [
                wi for wi, w in enumerate(self.groups)
                if self.order.is_ancestor(v, w)
            ]
            inner = sum(norm_p[wi] ** q for wi in desc)
            if inner <= 0.0:
                continue
            coef = dv * inner ** (1.0 / q - 1.0)
            for wi in desc:
                if norm_p[wi] <= 0.0:
                    continue
                dnorm = coef * norm_p[wi] ** (q - 1.0)
                dtheta[wi] += dnorm * (th[wi] / norm_p[wi]) ** (p - 1.0)
        dtheta *= omega

        g_h0 = {k: np.zeros_like(v) for k, v in h0.items()}
        g_ht = {k: np.zeros_like(v) for k, v in ht.items()}
        for wi, w in enumerate(self.groups):
            for j in range(self.cache.n_kernels):
                scale = dtheta[wi, j] / th[wi, j]
                g_h0[(w, j)] += scale * mu * h0[(w, j)]
                for t in w:
                    g_ht[(w, j, t)] += scale * ht[(w, j, t)]

        F = self.scores(h0, ht, b)
        active = (1.0 - self.cache.y * F) > 0.0
        coef = np.where(active, -C * self.cache.y, 0.0)
        g_b = np.zeros(self.cache.T)
        for t, (a, bb) in enumerate(self.cache.task_slices):
            ct = coef[a:bb]
            g_b[t] = -ct.sum()  # dF/db = -1
            for w in self.groups:
                if t not in w:
                    continue
                for j in range(self.cache.n_kernels):
                    gvec = self.phis[j][a:bb].T @ ct
                    g_h0[(w, j)] += gvec
                    g_ht[(w, j, t)] += gvec
        return g_h0, g_ht, g_b

    def solve(self, steps: int = 20000, step0: float | None = None):
        """Plain subgradient descent with a decaying step; returns the best
        iterate's objective and parameters."""
        h0, ht, b = self.init_params()
        best = self.objective(h0, ht, b)
        best_params = (h0, ht, b)
        if step0 is None:
            step0 = 0.5 / max(1.0, self.hyper.C)
        for k in range(1, steps + 1):
            g_h0, g_ht, g_b = self.gradient(h0, ht, b)
            eta = step0 / np.sqrt(k)
            h0 = {k2: v - eta * g_h0[k2] for k2, v in h0.items()}
            ht = {k2: v - eta * g_ht[k2] for k2, v in ht.items()}
            b = b - eta * g_b
            obj = self.objective(h0, ht, b)
            if obj < best:
                best = obj
                best_params = (h0, ht, b)
        return best, best_params


def primal_reference_solve(cache: GramCache, hyper: Hyperparams,
                           steps: int = 20000):
    ref = PrimalReference(cache, hyper)
    best, params = ref.solve(steps=steps)
    return best, ref, params


# --- dual objective of an arbitrary state (for sandwich tests) --------------

def dual_objective(cache: GramCache, state: DualState, hyper: Hyperparams,
                   order: LatticeOrder) -> float:
    c = task_pair_quadratics(cache, state.beta)
    Q = group_quadratics_matrix(state.groups, c, hyper.mu)
    lam = compute_lambda(state.gamma, state.groups, order, hyper.q,
                         hyper.gamma_floor)
    that = nested_norm(Q, lam, hyper.pbar, hyper.qbar)
    return float(state.beta.sum()) - 0.5 * that
