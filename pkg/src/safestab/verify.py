"""Runtime verification suite: gradient checks, decrease identity, KKT
residuals, closed-form equivalence, and scenario invariants, reported as one
pass/fail result per check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import (equilibrium_residual, fd_gradient, is_valid_local_clf,
                   sontag_terms)
from .errors import SafeStabError
from .filters import (FilterConfig, Region, cbf_rows, classify_region,
                      closed_form_ustar, make_filter_config, s_cbf_qp_filter)
from .qp import QPSpec, solve_qp
from .scenarios import ScenarioBundle
from .sontag import sontag_decrease_rate
from .errors import DecreaseIdentityError


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _sample_domain(bundle: ScenarioBundle, count: int, rng) -> np.ndarray:
    return rng.uniform(bundle.domain[:, 0], bundle.domain[:, 1], size=(count, bundle.sys.n))


def _sample_safe(bundle: ScenarioBundle, count: int, rng, max_tries=50000) -> np.ndarray:
    out = []
    for _ in range(max_tries):
        x = rng.uniform(bundle.domain[:, 0], bundle.domain[:, 1])
        if bundle.safe_set.min_value(x) >= 0.0:
            out.append(x)
            if len(out) == count:
                break
    return np.array(out)


def check_equilibrium(bundle: ScenarioBundle, tol: float = 1e-3) -> CheckResult:
    res = equilibrium_residual(bundle.sys, bundle.eq)
    return CheckResult("equilibrium_residual", res <= tol,
                       f"|f(x_e)+g(x_e)u_e|_inf = {res:.3e} (tol {tol:.0e})")


def check_clf_matrix(bundle: ScenarioBundle) -> CheckResult:
    P = bundle.clf.P
    sym = float(np.abs(P - P.T).max())
    eigs = np.linalg.eigvalsh(0.5 * (P + P.T))
    ok = sym <= 1e-9 * (1.0 + np.abs(P).max()) and eigs.min() > 0.0
    return CheckResult("clf_matrix", ok,
                       f"|P-P'|_max = {sym:.1e}, min eig = {eigs.min():.4g}")


def check_clf_gradient(bundle: ScenarioBundle, seed: int, count: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in _sample_domain(bundle, count, rng):
        g_true = bundle.clf.grad(x)
        g_fd = fd_gradient(bundle.clf.value, x)
        worst = max(worst, float(np.abs(g_true - g_fd).max() / (1.0 + np.abs(g_true).max())))
    return CheckResult("clf_gradient_fd", worst <= 1e-5, f"worst rel err {worst:.2e}")


def check_barrier_gradients(bundle: ScenarioBundle, seed: int, count: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    pts = _sample_safe(bundle, count, rng)
    worst = 0.0
    for bar in bundle.safe_set.barriers:
        for x in pts:
            g_true = bar.gradient(x)
            g_fd = fd_gradient(bar.value, x)
            worst = max(worst, float(np.abs(g_true - g_fd).max() / (1.0 + np.abs(g_true).max())))
    return CheckResult("barrier_gradient_fd", worst <= 1e-5, f"worst rel err {worst:.2e}")


def check_decrease_identity(cfg: FilterConfig, bundle: ScenarioBundle, seed: int,
                            count: int = 1000) -> CheckResult:
    rng = np.random.default_rng(seed)
    tested = 0
    strict_ok = True
    try:
        for x in _sample_domain(bundle, count, rng):
            _, b = sontag_terms(cfg.sys, cfg.clf, x)
            if np.linalg.norm(b) <= 1e-8:
                continue
            rate = sontag_decrease_rate(cfg.sontag, x)
            tested += 1
            if np.linalg.norm(x - cfg.clf.equilibrium.x_e) > 1e-9 and rate >= 0.0:
                strict_ok = False
    except DecreaseIdentityError as exc:
        return CheckResult("sontag_decrease_identity", False, str(exc))
    return CheckResult("sontag_decrease_identity", strict_ok and tested > 0,
                       f"identity held at {tested} states, strict decrease {strict_ok}")


def check_kkt_residuals(cfg: FilterConfig, bundle: ScenarioBundle, seed: int,
                        count: int = 200) -> CheckResult:
    from .sontag import sontag_control
    rng = np.random.default_rng(seed)
    worst = 0.0
    solved = active = 0
    for x in _sample_safe(bundle, count, rng):
        u_son = sontag_control(cfg.sontag, x)
        _, b_row = sontag_terms(cfg.sys, cfg.clf, x)
        A, lb = cbf_rows(cfg, x)
        spec = QPSpec(2.0 * np.outer(b_row, b_row), np.zeros(cfg.sys.m),
                      A, lb - A @ u_son, reg=cfg.qp_reg)
        sol = solve_qp(spec)
        if sol.optimal:
            solved += 1
            active += bool(sol.active_set)
            worst = max(worst, sol.kkt_residual)
    return CheckResult("kkt_residuals", solved > 0 and worst <= 1e-7,
                       f"{solved} filter QPs ({active} with an active row), "
                       f"worst residual {worst:.2e}")


def check_closed_form(cfg: FilterConfig, bundle: ScenarioBundle, seed: int,
                      count: int = 200) -> CheckResult:
    if cfg.sys.m != 1 or len(cfg.safe_set) != 1:
        return CheckResult("closed_form_equivalence", True,
                           "skipped (needs m=1 and a single barrier)")
    rng = np.random.default_rng(seed)
    worst = 0.0
    found = 0
    for x in _sample_safe(bundle, 20 * count, rng):
        if found >= count:
            break
        label = classify_region(cfg, x)
        if label.value != Region.R2:
            continue
        try:
            u_formula, _ = closed_form_ustar(cfg, x)
            u_qp = s_cbf_qp_filter(cfg, x)
        except SafeStabError:
            continue
        found += 1
        worst = max(worst, float(np.abs(u_formula - u_qp).max()))
    return CheckResult("closed_form_equivalence", found > 0 and worst <= 1e-8,
                       f"{found} R2 states, worst |u_formula - u_qp| = {worst:.2e}")


def check_local_clf(bundle: ScenarioBundle, seed: int, radius: float = 0.5) -> CheckResult:
    ok, witness = is_valid_local_clf(bundle.sys, bundle.clf, radius, seed=seed)
    detail = "no counterexample" if ok else f"witness {witness}"
    return CheckResult("local_clf_validity", ok, detail)


def check_r1_proper(cfg: FilterConfig, seed: int, radius: float = 1e-2,
                    count: int = 100) -> CheckResult:
    """Numerical stand-in for the assumption that R1 contains x_e in its
    interior: a small ball around x_e must classify R1 throughout."""
    rng = np.random.default_rng(seed)
    x_e = cfg.clf.equilibrium.x_e
    from .core import sample_ball
    for x in sample_ball(x_e, radius, count, rng):
        if cfg.safe_set.min_value(x) < 0.0:
            return CheckResult("r1_proper", False, f"safe set excludes {x}")
        if classify_region(cfg, x).value != Region.R1:
            return CheckResult("r1_proper", False, f"R2 state at distance {np.linalg.norm(x - x_e):.1e}")
    return CheckResult("r1_proper", True, f"ball radius {radius} all R1")


def check_barrier_positive_at_eq(bundle: ScenarioBundle) -> CheckResult:
    vals = bundle.safe_set.values(bundle.eq.x_e)
    return CheckResult("barriers_positive_at_xe", bool(vals.min() > 0.0),
                       f"h(x_e) = {np.round(vals, 6).tolist()}")


def run_checks(bundle: ScenarioBundle, seed: int = 0, gamma: float = 1.0) -> List[CheckResult]:
    cfg = make_filter_config(bundle.sys, bundle.clf, bundle.safe_set, gamma=gamma)
    return [
        check_equilibrium(bundle),
        check_clf_matrix(bundle),
        check_barrier_positive_at_eq(bundle),
        check_clf_gradient(bundle, seed),
        check_barrier_gradients(bundle, seed + 1),
        check_decrease_identity(cfg, bundle, seed + 2),
        check_kkt_residuals(cfg, bundle, seed + 3),
        check_closed_form(cfg, bundle, seed + 4),
        check_local_clf(bundle, seed + 5),
        check_r1_proper(cfg, seed + 6),
    ]
