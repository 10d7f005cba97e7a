"""Control-sharing verification and the certified domain of attraction
A_WC = {W <= c*} intersected with the safe set.

The largest admissible sub-level value c* is found by bisection, where a
candidate c is accepted iff every grid point of {W <= c} inside the safe set
(outside a small ball around the equilibrium) admits one input that satisfies
all barrier rows and strictly decreases W. Grid verification is a sampling
surrogate for the set-inclusion definition; the resolution is configurable
and reported with the estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import as_vector
from .errors import SharingInfeasibleError
from .filters import FilterConfig, cbf_rows
from .qp import lp_feasible


def control_sharing_holds(cfg: FilterConfig, x, eps_share: Optional[float] = None) -> bool:
    """True iff one input satisfies every barrier row and gives
    gradW'(f + g u) <= -eps_share (strict decrease surrogate)."""
    x = as_vector(x, cfg.sys.n)
    if eps_share is None:
        eps_share = 1e-9 * (1.0 + cfg.clf.value(x))
    A_cbf, lb_cbf = cbf_rows(cfg, x)
    grad_w = cfg.clf.grad(x)
    lfw = float(grad_w @ cfg.sys.drift(x))
    b_row = grad_w @ cfg.sys.input_map(x)
    A = np.vstack([A_cbf, -b_row[None, :]])
    lb = np.concatenate([lb_cbf, [lfw + eps_share]])
    return lp_feasible(A, lb)


@dataclass
class DoaEstimate:
    """Result of the bisection; violations inside {W <= c_star} are empty by
    construction, diagnostics for the tightest rejected level are kept in
    first_infeasible_violations."""

    c_star: float
    grid_resolution: Tuple[int, ...]
    verified_points: int
    violations: List[np.ndarray]
    tested: List[Tuple[float, bool]] = field(default_factory=list)
    first_infeasible_c: Optional[float] = None
    first_infeasible_violations: List[np.ndarray] = field(default_factory=list)
    grid_bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.c_star > 0.0:
            raise ValueError("c_star must be positive")


def sublevel_bounding_box(cfg: FilterConfig, c: float) -> np.ndarray:
    """Axis-aligned bounding box of {W <= c}: x_e,i +- sqrt(c * (P^-1)_ii)."""
    pinv_diag = np.diag(np.linalg.inv(cfg.clf.P))
    half = np.sqrt(np.maximum(c * pinv_diag, 0.0))
    x_e = cfg.clf.equilibrium.x_e
    return np.stack([x_e - half, x_e + half], axis=1)


def compute_c_star(cfg: FilterConfig, grid_resolution: Sequence[int],
                   c_bounds: Tuple[float, float], rel_tol: float = 1e-3,
                   exclude_radius: float = 1e-3) -> DoaEstimate:
    """Bisection for the largest c whose grid points in {W <= c} inside the
    safe set all pass control sharing.

    Sharing at a point does not depend on c, so each grid point is verified
    once and memoized across bisection probes."""
    c_lo, c_hi = float(c_bounds[0]), float(c_bounds[1])
    if not (0.0 < c_lo < c_hi):
        raise ValueError("c_bounds must satisfy 0 < c_lo < c_hi")
    resolution = tuple(int(r) for r in grid_resolution)
    if len(resolution) != cfg.sys.n or any(r < 2 for r in resolution):
        raise ValueError("grid_resolution needs one count >= 2 per state axis")

    bounds = sublevel_bounding_box(cfg, c_hi)
    axes = [np.linspace(bounds[i, 0], bounds[i, 1], resolution[i])
            for i in range(cfg.sys.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)

    x_e = cfg.clf.equilibrium.x_e
    w_vals = np.array([cfg.clf.value(p) for p in points])
    in_safe = np.array([cfg.safe_set.min_value(p) >= 0.0 for p in points])
    near_eq = np.linalg.norm(points - x_e, axis=1) <= exclude_radius
    candidate = in_safe & ~near_eq & (w_vals <= c_hi)

    shared: dict = {}

    def point_ok(idx: int) -> bool:
        if idx not in shared:
            shared[idx] = control_sharing_holds(cfg, points[idx])
        return shared[idx]

    tested: List[Tuple[float, bool]] = []
    first_bad_c: Optional[float] = None
    first_bad_states: List[np.ndarray] = []

    def feasible(c: float) -> bool:
        nonlocal first_bad_c, first_bad_states
        idxs = np.where(candidate & (w_vals <= c))[0]
        bad = [i for i in idxs if not point_ok(int(i))]
        ok = not bad
        tested.append((c, ok))
        if not ok and (first_bad_c is None or c < first_bad_c):
            first_bad_c = c
            first_bad_states = [points[i].copy() for i in bad]
        return ok

    if not feasible(c_lo):
        raise SharingInfeasibleError(
            f"control sharing fails already at c={c_lo}; CLF/CBF incompatible near x_e")
    if feasible(c_hi):
        lo = c_hi
    else:
        lo, hi = c_lo, c_hi
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
    return DoaEstimate(
        c_star=lo,
        grid_resolution=resolution,
        verified_points=len(shared),
        violations=[],
        tested=tested,
        first_infeasible_c=first_bad_c,
        first_infeasible_violations=first_bad_states,
        grid_bounds=bounds,
    )


def in_awc(estimate: DoaEstimate, cfg: FilterConfig, x) -> bool:
    """Membership in the closed set {W <= c*} intersect {min_i h_i >= 0}."""
    x = as_vector(x, cfg.sys.n)
    return cfg.clf.value(x) <= estimate.c_star and cfg.safe_set.min_value(x) >= 0.0


def largest_clf_sublevel_inside(cfg: FilterConfig, n_directions: int = 256,
                                seed: int = 0, t_max: float = 1e3) -> float:
    """Line-search estimate of the conservative level c_triv = max{c : {W<=c}
    inside the safe set}: walk rays from x_e to the safe-set boundary and take
    the smallest W found there."""
    rng = np.random.default_rng(seed)
    n = cfg.sys.n
    x_e = cfg.clf.equilibrium.x_e
    best = math.inf
    dirs = rng.normal(size=(n_directions, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for d in dirs:
        lo, hi = 0.0, None
        t = 1.0
        while t <= t_max:
            if cfg.safe_set.min_value(x_e + t * d) < 0.0:
                hi = t
                break
            lo = t
            t *= 2.0
        if hi is None:
            continue  # safe set unbounded along this ray
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if cfg.safe_set.min_value(x_e + mid * d) < 0.0:
                hi = mid
            else:
                lo = mid
        best = min(best, cfg.clf.value(x_e + hi * d))
    if not math.isfinite(best):
        raise SharingInfeasibleError("no safe-set boundary found along any ray")
    return best


def awc_boundary_points(estimate: DoaEstimate, cfg: FilterConfig,
                        n_directions: int = 256, seed: int = 0) -> np.ndarray:
    """Ray-cast samples of the boundary of A_WC for plotting."""
    rng = np.random.default_rng(seed)
    n = cfg.sys.n
    x_e = cfg.clf.equilibrium.x_e

    def inside(x):
        return in_awc(estimate, cfg, x)

    dirs = rng.normal(size=(n_directions, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = []
    for d in dirs:
        lo, hi = 0.0, None
        t = 1.0
        while t <= 1e6:
            if not inside(x_e + t * d):
                hi = t
                break
            lo = t
            t *= 2.0
        if hi is None:
            continue
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if inside(x_e + mid * d):
                lo = mid
            else:
                hi = mid
        pts.append(x_e + lo * d)
    return np.array(pts)


def sample_states_in_awc(estimate: DoaEstimate, cfg: FilterConfig, count: int,
                         seed: int = 0, w_fraction: float = 1.0,
                         max_tries: int = 100000) -> np.ndarray:
    """Seeded rejection sampling of states with W <= w_fraction * c* inside the
    safe set."""
    rng = np.random.default_rng(seed)
    cap = w_fraction * estimate.c_star
    bounds = sublevel_bounding_box(cfg, cap)
    out = []
    for _ in range(max_tries):
        x = rng.uniform(bounds[:, 0], bounds[:, 1])
        if cfg.clf.value(x) <= cap and cfg.safe_set.min_value(x) >= 0.0:
            out.append(x)
            if len(out) == count:
                return np.array(out)
    raise SharingInfeasibleError(
        f"could not draw {count} states inside A_WC within {max_tries} tries")
