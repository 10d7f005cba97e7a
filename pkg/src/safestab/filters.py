"""Pointwise QP controllers and the hybrid switching law.

Three filters share the barrier rows L_f h_i + L_g h_i u >= -alpha_i(h_i):

* cbf_qp_filter      minimizes |u - u_nom|^2 (nominal defaults to Sontag),
* clf_cbf_qp_filter  minimizes |u|^2 + p*delta^2 with a slacked CLF row,
* s_cbf_qp_filter    minimizes |u - u_son|^2 weighted by Q(x) = b'b,
                     the rank-one Gram matrix of b = gradW' g.

The hybrid law applies Sontag's input wherever it already satisfies every
barrier row (region R1) and the Sontag-weighted QP elsewhere (region R2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional, Tuple

import numpy as np

from .core import (ControlAffineSystem, ExtendedClassK, QuadraticCLF, SafeSet,
                   as_vector, barrier_lie_derivatives)
from .errors import DegenerateConstraintError, InfeasibleQPError, SafeStabError
from .qp import QPSpec, solve_qp
from .sontag import SontagLaw, sontag_control, sontag_terms

CONTROLLER_NAMES = ("sontag", "cbf-qp", "clf-cbf-qp", "s-cbf-qp", "hybrid")


class Region(IntEnum):
    R1 = 0
    R2 = 1


@dataclass
class RegionLabel:
    value: Region
    margin: float


@dataclass
class FilterConfig:
    sys: ControlAffineSystem
    clf: QuadraticCLF
    safe_set: SafeSet
    sontag: SontagLaw
    p: float = 10.0
    alpha_w: ExtendedClassK = field(default_factory=ExtendedClassK)
    qp_reg: float = 1e-9

    def __post_init__(self):
        if not self.p > 0.0:
            raise ValueError("slack weight p must be positive")
        # hot-path caches for the per-step hybrid evaluation
        self._bar_cache = tuple(
            (bar.h, bar.grad_h if bar.grad_h is not None else bar.gradient,
             bar.alpha.lam)
            for bar in self.safe_set.barriers)


def make_filter_config(sys, clf, safe_set, gamma: float = 1.0, p: float = 10.0,
                       alpha_w_lambda: float = 1.0, b_floor: float = 1e-10,
                       qp_reg: float = 1e-9) -> FilterConfig:
    law = SontagLaw(sys, clf, gamma=gamma, b_floor=b_floor)
    return FilterConfig(sys, clf, safe_set, law, p=p,
                        alpha_w=ExtendedClassK(alpha_w_lambda), qp_reg=qp_reg)


def cbf_rows(cfg: FilterConfig, x) -> Tuple[np.ndarray, np.ndarray]:
    """Stack the barrier rows as A u >= lb with A_i = L_g h_i and
    lb_i = -alpha_i(h_i) - L_f h_i."""
    x = as_vector(x, cfg.sys.n)
    k = len(cfg.safe_set)
    A = np.zeros((k, cfg.sys.m))
    lb = np.zeros(k)
    for i, bar in enumerate(cfg.safe_set.barriers):
        lfh, lgh = barrier_lie_derivatives(cfg.sys, bar, x)
        A[i] = lgh
        lb[i] = -bar.alpha(bar.value(x)) - lfh
    return A, lb


def row_margins(A: np.ndarray, lb: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Slack of each barrier row at the input u (nonnegative means satisfied)."""
    return A @ u - lb


def active_flags(A: np.ndarray, lb: np.ndarray, u: np.ndarray,
                 tol: float = 1e-6) -> np.ndarray:
    """Rows whose slack at u is below tol (relative to the row scale)."""
    scale = 1.0 + np.abs(lb) + np.abs(A) @ np.abs(u)
    return row_margins(A, lb, u) <= tol * scale


def _solve_or_raise(spec: QPSpec, what: str, x):
    sol = solve_qp(spec)
    if not sol.optimal:
        raise InfeasibleQPError(f"{what} infeasible at x={np.asarray(x).tolist()}")
    return sol


def cbf_qp_filter(cfg: FilterConfig, x, u_nom=None) -> np.ndarray:
    """Minimum-deviation safety filter: min |u - u_nom|^2 s.t. barrier rows.

    Solved in the shifted variable v = u - u_nom so the Tikhonov term is
    centered at the nominal input and a feasible nominal is returned
    unchanged."""
    x = as_vector(x, cfg.sys.n)
    if u_nom is None:
        u_nom = sontag_control(cfg.sontag, x)
    u_nom = as_vector(u_nom, cfg.sys.m)
    A, lb = cbf_rows(cfg, x)
    spec = QPSpec(2.0 * np.eye(cfg.sys.m), np.zeros(cfg.sys.m),
                  A, lb - A @ u_nom, reg=cfg.qp_reg)
    return u_nom + _solve_or_raise(spec, "CBF-QP", x).z_star


def clf_cbf_qp_filter(cfg: FilterConfig, x) -> Tuple[np.ndarray, float]:
    """Slack-relaxed combined filter over (u, delta):

        min |u|^2 + p*delta^2
        s.t. gradW'f + gradW'g u <= -alpha_W(W) + delta,  barrier rows.

    Returns (u, delta)."""
    x = as_vector(x, cfg.sys.n)
    m = cfg.sys.m
    grad_w = cfg.clf.grad(x)
    lfw = float(grad_w @ cfg.sys.drift(x))
    b_row = grad_w @ cfg.sys.input_map(x)
    A_cbf, lb_cbf = cbf_rows(cfg, x)

    H = np.zeros((m + 1, m + 1))
    H[:m, :m] = 2.0 * np.eye(m)
    H[m, m] = 2.0 * cfg.p
    clf_row = np.concatenate([-b_row, [1.0]])
    A = np.vstack([clf_row, np.hstack([A_cbf, np.zeros((len(lb_cbf), 1))])])
    lb = np.concatenate([[lfw + cfg.alpha_w(cfg.clf.value(x))], lb_cbf])
    spec = QPSpec(H, np.zeros(m + 1), A, lb, reg=cfg.qp_reg)
    z = _solve_or_raise(spec, "CLF-CBF-QP", x).z_star
    return z[:m], float(z[m])


def s_cbf_qp_filter(cfg: FilterConfig, x) -> np.ndarray:
    """Sontag-weighted safety filter: min |u - u_son|^2_{Q+reg*I} s.t. barrier
    rows, with Q = b'b. Solved in the shifted variable v = u - u_son so the
    Tikhonov term is centered at the nominal input."""
    x = as_vector(x, cfg.sys.n)
    u_son = sontag_control(cfg.sontag, x)
    _, b_row = sontag_terms(cfg.sys, cfg.clf, x)
    A, lb = cbf_rows(cfg, x)
    Q = np.outer(b_row, b_row)
    spec = QPSpec(2.0 * Q, np.zeros(cfg.sys.m), A, lb - A @ u_son, reg=cfg.qp_reg)
    v = _solve_or_raise(spec, "S-CBF-QP", x).z_star
    return u_son + v


def closed_form_ustar(cfg: FilterConfig, x, barrier_index: int = 0
                      ) -> Tuple[np.ndarray, float]:
    """Single-active-row solution of the Sontag-weighted filter and its
    multiplier:

        u* = -(L_f h + alpha(h)) / |L_g h'|^2 * L_g h',
        lam = (u* - u_son)' Q L_g h' / |L_g h'|^2.

    Raises DegenerateConstraintError when L_g h vanishes, and SafeStabError
    when the multiplier comes out negative at a state classified R2."""
    x = as_vector(x, cfg.sys.n)
    bar = cfg.safe_set.barriers[barrier_index]
    lfh, lgh = barrier_lie_derivatives(cfg.sys, bar, x)
    nrm2 = float(lgh @ lgh)
    if math.sqrt(nrm2) <= 1e-12:
        raise DegenerateConstraintError(
            f"L_g h ~ 0 for barrier {bar.name!r}; closed form undefined")
    rate = lfh + bar.alpha(bar.value(x))
    u_star = -(rate / nrm2) * lgh
    u_son = sontag_control(cfg.sontag, x)
    _, b_row = sontag_terms(cfg.sys, cfg.clf, x)
    Q = np.outer(b_row, b_row)
    lam = float((u_star - u_son) @ Q @ lgh) / nrm2
    label = classify_region(cfg, x)
    if label.value == Region.R2 and lam < -1e-9 * (1.0 + abs(lam)):
        raise SafeStabError(f"negative multiplier {lam} on R2 at x={x.tolist()}")
    return u_star, lam


def classify_region(cfg: FilterConfig, x) -> RegionLabel:
    """R1 where the Sontag input satisfies every barrier row (minimum slack
    >= 0, ties assigned to R1), R2 otherwise."""
    x = as_vector(x, cfg.sys.n)
    u_son = sontag_control(cfg.sontag, x)
    A, lb = cbf_rows(cfg, x)
    margin = float(row_margins(A, lb, u_son).min())
    value = Region.R1 if margin >= 0.0 else Region.R2
    return RegionLabel(value, margin)


def hybrid_control(cfg: FilterConfig, x) -> Tuple[np.ndarray, RegionLabel]:
    """Sontag input on R1, Sontag-weighted QP on R2."""
    u, label, _, _, _ = _hybrid_step(cfg, x)
    return u, label


def _hybrid_step(cfg: FilterConfig, x):
    """Shared hybrid evaluation returning (u, label, rows A, rows lb, h).

    Evaluates the vector fields once per call; this is the per-step hot path
    of the simulator, so closures are called directly and the universal
    formula is inlined."""
    x = as_vector(x, cfg.sys.n)
    f = np.asarray(cfg.sys.f(x), dtype=float)
    G = np.asarray(cfg.sys.g(x), dtype=float)
    eq = cfg.clf.equilibrium
    grad_w = 2.0 * (cfg.clf.P @ (x - eq.x_e))
    a = float(grad_w @ (f + G @ eq.u_e))
    b_row = grad_w @ G
    bb = float(b_row @ b_row)
    law = cfg.sontag
    if math.sqrt(bb) <= law.b_floor:
        u_son = eq.u_e.copy()
    else:
        u_son = eq.u_e + b_row * ((-a - law.gamma * math.sqrt(a * a + bb * bb)) / bb)
    k = len(cfg._bar_cache)
    A = np.empty((k, cfg.sys.m))
    lb = np.empty(k)
    h_vals = np.empty(k)
    for i, (h_fn, grad_fn, lam) in enumerate(cfg._bar_cache):
        grad = grad_fn(x)
        h_i = float(h_fn(x))
        h_vals[i] = h_i
        A[i] = grad @ G
        lb[i] = -lam * h_i - float(grad @ f)
    margin = float((A @ u_son - lb).min())
    if margin >= 0.0:
        return u_son, RegionLabel(Region.R1, margin), A, lb, h_vals
    Q = np.outer(b_row, b_row)
    spec = QPSpec(2.0 * Q, np.zeros(cfg.sys.m), A, lb - A @ u_son, reg=cfg.qp_reg)
    v = _solve_or_raise(spec, "S-CBF-QP", x).z_star
    return u_son + v, RegionLabel(Region.R2, margin), A, lb, h_vals


@dataclass
class ControlDecision:
    """Per-step controller output; rows and barrier values are carried along
    so the simulator can log activation flags without recomputing Lie
    derivatives."""

    u: np.ndarray
    region: Optional[RegionLabel] = None
    delta: Optional[float] = None
    rows: Optional[Tuple[np.ndarray, np.ndarray]] = None
    h_values: Optional[np.ndarray] = None


def make_controller(cfg: FilterConfig, name: str) -> Callable[[np.ndarray], ControlDecision]:
    """Controller factory for the tags accepted by the CLI."""
    if name == "sontag":
        def control(x):
            return ControlDecision(sontag_control(cfg.sontag, x))
    elif name == "cbf-qp":
        def control(x):
            u_son = sontag_control(cfg.sontag, x)
            A, lb = cbf_rows(cfg, x)
            spec = QPSpec(2.0 * np.eye(cfg.sys.m), np.zeros(cfg.sys.m),
                          A, lb - A @ u_son, reg=cfg.qp_reg)
            u = u_son + _solve_or_raise(spec, "CBF-QP", x).z_star
            return ControlDecision(u, rows=(A, lb))
    elif name == "clf-cbf-qp":
        def control(x):
            u, delta = clf_cbf_qp_filter(cfg, x)
            return ControlDecision(u, delta=delta)
    elif name == "s-cbf-qp":
        def control(x):
            return ControlDecision(s_cbf_qp_filter(cfg, x))
    elif name == "hybrid":
        def control(x):
            u, label, A, lb, h_vals = _hybrid_step(cfg, x)
            return ControlDecision(u, region=label, rows=(A, lb), h_values=h_vals)
    else:
        raise ValueError(f"unknown controller {name!r}; choose from {CONTROLLER_NAMES}")
    control.__name__ = f"{name}_controller"
    return control
