"""Dense active-set solver for small strictly convex QPs, plus an LP
feasibility check used by the control-sharing test.

Problem shape:  minimize 0.5 z'(H + reg*I)z + c'z  subject to  A z >= b.
Problems here are tiny (a handful of variables, a handful of rows), so
everything is dense numpy, each call allocates its own workspace, and the
working set is identified exactly (needed for the closed-form cross-checks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import QPIterationError

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"

_STEP_TOL = 1e-12
_DUAL_TOL = 1e-10


@dataclass
class QPSpec:
    """Cost (H, c) with Tikhonov parameter reg and inequality rows A z >= b."""

    H: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    reg: float = 1e-9

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        d = self.c.size
        self.H = np.asarray(self.H, dtype=float).reshape(d, d)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, d)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.size:
            raise ValueError("row count of A and length of b disagree")
        scale = 1.0 + np.abs(self.H).max(initial=0.0)
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-9 * scale:
            raise ValueError("H must be symmetric")
        if np.linalg.eigvalsh(self.H + self.reg * np.eye(d)).min() <= 0.0:
            raise ValueError("H + reg*I must be positive definite")

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float).ravel()
        Hr = self.H + self.reg * np.eye(self.dim)
        return float(0.5 * z @ Hr @ z + self.c @ z)


@dataclass
class QPSolution:
    z_star: Optional[np.ndarray]
    multipliers: Optional[np.ndarray]
    active_set: List[int]
    kkt_residual: float
    status: str
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


def _kkt_residual(H, c, A, b, z, lam) -> float:
    """Max of the four (scaled) KKT residuals: stationarity, primal, dual,
    complementarity."""
    slack = A @ z - b if b.size else np.zeros(0)
    r_stat = np.abs(H @ z + c - (A.T @ lam if b.size else 0.0)).max(initial=0.0)
    r_stat /= 1.0 + np.abs(H @ z).max(initial=0.0) + np.abs(c).max(initial=0.0)
    if b.size:
        scale_p = 1.0 + np.abs(b).max()
        r_pri = max(0.0, float(-slack.min())) / scale_p
        r_dual = max(0.0, float(-lam.min())) / (1.0 + np.abs(lam).max())
        r_comp = np.abs(lam * slack).max() / (1.0 + np.abs(lam).max() * (1.0 + np.abs(slack).max()))
    else:
        r_pri = r_dual = r_comp = 0.0
    return float(max(r_stat, r_pri, r_dual, r_comp))


def _active_set_iterate(H, c, A, b, z0, working0, max_iter):
    """Primal active-set loop from a feasible z0. H must be positive definite.

    Returns (z, multipliers over all rows, working set, iterations).
    Entry tie-break: smallest row index; exit rule: most negative multiplier.
    """
    d = z0.size
    k = b.size
    z = z0.copy()
    working: List[int] = list(working0)
    for it in range(1, max_iter + 1):
        g = H @ z + c
        if working:
            Aw = A[working]
            kkt = np.block([[H, -Aw.T], [Aw, np.zeros((len(working), len(working)))]])
            rhs = np.concatenate([-g, np.zeros(len(working))])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            p = sol[:d]
            mu = sol[d:]
        else:
            p = np.linalg.solve(H, -g)
            mu = np.zeros(0)

        if np.abs(p).max(initial=0.0) <= _STEP_TOL * (1.0 + np.abs(z).max(initial=0.0)):
            if mu.size == 0 or mu.min() >= -_DUAL_TOL * (1.0 + np.abs(mu).max()):
                lam = np.zeros(k)
                if working:
                    lam[working] = np.clip(mu, 0.0, None)
                return z, lam, sorted(working), it
            drop_pos = int(np.argmin(mu))
            # ties on the most negative multiplier: drop smallest row index
            worst = mu[drop_pos]
            for j, m_j in enumerate(mu):
                if m_j <= worst + 1e-15 and working[j] < working[drop_pos]:
                    drop_pos = j
            working.pop(drop_pos)
            continue

        alpha = 1.0
        blocker = -1
        if k:
            ap = A @ p
            for i in range(k):
                if i in working:
                    continue
                if ap[i] < -1e-14 * (1.0 + abs(ap[i])):
                    step = (b[i] - float(A[i] @ z)) / ap[i]
                    step = max(step, 0.0)
                    if step < alpha - 1e-14:
                        alpha = step
                        blocker = i
                    elif blocker >= 0 and abs(step - alpha) <= 1e-14 and i < blocker:
                        blocker = i
        z = z + alpha * p
        if blocker >= 0 and alpha < 1.0:
            working.append(blocker)
    raise QPIterationError(f"active-set did not converge in {max_iter} iterations")


def _phase_one(A, b):
    """Least max-violation point for A z >= b via the auxiliary QP in (z, s):

        minimize s^2   s.t.  A z + s >= b,  s >= 0,

    started from the trivially feasible (0, max(b, 0) + 1).
    Returns (z, s_star)."""
    k, d = A.shape
    H = np.zeros((d + 1, d + 1))
    H[d, d] = 2.0
    c = np.zeros(d + 1)
    A_aug = np.hstack([A, np.ones((k, 1))])
    s_row = np.zeros((1, d + 1))
    s_row[0, d] = 1.0
    A_aug = np.vstack([A_aug, s_row])
    b_aug = np.concatenate([b, [0.0]])
    reg = 1e-12
    y0 = np.zeros(d + 1)
    y0[d] = max(0.0, float(b.max(initial=0.0))) + 1.0
    y, _, _, _ = _active_set_iterate(H + reg * np.eye(d + 1), c, A_aug, b_aug, y0,
                                     [], max_iter=60 * (k + 2))
    return y[:d], float(y[d])


def _repair_feasibility(A, b, z, tol, rounds=30):
    """Push a nearly feasible point onto the feasible side of its violated
    rows; returns the repaired point or None when the projections stall
    (taken as evidence of inconsistency at desk scale)."""
    for _ in range(rounds):
        viol = b - A @ z
        idx = np.where(viol > 0.0)[0]
        if idx.size == 0:
            return z
        delta = np.linalg.lstsq(A[idx], viol[idx] + tol, rcond=None)[0]
        z = z + delta
    viol = b - A @ z
    if viol.max(initial=0.0) > 0.0:
        return None
    return z


def solve_qp(spec: QPSpec, max_iter: Optional[int] = None) -> QPSolution:
    """KKT-certified minimizer of the given problem, or status 'infeasible'
    when the phase-one problem proves the rows inconsistent."""
    d = spec.dim
    k = spec.n_rows
    H = spec.H + spec.reg * np.eye(d)
    c = spec.c
    if max_iter is None:
        max_iter = 60 * (k + 2)

    if k == 0:
        z = np.linalg.solve(H, -c)
        res = _kkt_residual(H, c, spec.A, spec.b, z, np.zeros(0))
        return QPSolution(z, np.zeros(0), [], res, STATUS_OPTIMAL, 1)

    A, b = spec.A, spec.b
    feas_scale = 1.0 + np.abs(b).max()

    z0 = None
    for cand in (np.linalg.solve(H, -c), np.zeros(d)):
        if (A @ cand - b).min() >= 0.0:
            z0 = cand
            break
        if (A @ cand - b).min() >= -1e-12 * feas_scale:
            z0 = _repair_feasibility(A, b, cand, 1e-15)
            if z0 is not None:
                break
    if z0 is None:
        # regularization bias can dominate the phase-one optimum when the
        # feasible set sits far out, so feasibility is decided by exact repair
        z_p, _ = _phase_one(A, b)
        z0 = _repair_feasibility(A, b, z_p, 1e-12 * feas_scale)
        if z0 is None:
            return QPSolution(None, None, [], math.inf, STATUS_INFEASIBLE, 0)

    z, lam, active, it = _active_set_iterate(H, c, A, b, z0, [], max_iter)
    res = _kkt_residual(H, c, A, b, z, lam)
    active = [i for i in active if lam[i] > 0.0 or abs(float(A[i] @ z - b[i])) <= 1e-10 * feas_scale]
    return QPSolution(z, lam, active, res, STATUS_OPTIMAL, it)


def lp_feasible(A, b) -> bool:
    """True iff some z satisfies A z >= b.

    The one-variable case is decided by exact interval intersection; larger
    systems go through the phase-one auxiliary QP.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    A = A.reshape(b.size, -1)
    if b.size == 0:
        return True
    d = A.shape[1]
    if d == 1:
        lo, hi = -math.inf, math.inf
        for a_i, b_i in zip(A[:, 0], b):
            if a_i > 0.0:
                lo = max(lo, b_i / a_i)
            elif a_i < 0.0:
                hi = min(hi, b_i / a_i)
            elif b_i > 0.0:
                return False
        return lo <= hi
    z_p, s_star = _phase_one(A, b)
    if s_star <= 1e-9 * (1.0 + np.abs(b).max()):
        return True
    return _repair_feasibility(A, b, z_p, 0.0) is not None
