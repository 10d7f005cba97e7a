"""Control-affine systems, quadratic CLFs, barriers, and the scalar quantities
(a, b, L_f h, L_g h) every controller downstream consumes.

Conventions
-----------
* States, inputs and gradients are 1-D float arrays; g(x) is (n, m).
* The Lyapunov candidate is W(x) = (x - x_e)' P (x - x_e) so that its gradient
  vanishes at a non-zero equilibrium.
* All objects are treated as immutable after construction and every operation
  is a pure function of its arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ScenarioError


def as_vector(x, size: Optional[int] = None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if size is not None and v.size != size:
        raise ValueError(f"expected vector of length {size}, got {v.size}")
    return v


def fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray,
                rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient with per-axis step rel_step*max(1, |x_i|)."""
    x = as_vector(x)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * step)
    return grad


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of a vector map, one column per axis."""
    x = as_vector(x)
    f0 = as_vector(fn(x))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        step = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        jac[:, i] = (as_vector(fn(xp)) - as_vector(fn(xm))) / (2.0 * step)
    return jac


@dataclass
class ControlAffineSystem:
    """System x' = f(x) + g(x) u with state dimension n and input dimension m."""

    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    name: str = "system"

    def drift(self, x) -> np.ndarray:
        return as_vector(self.f(as_vector(x, self.n)), self.n)

    def input_map(self, x) -> np.ndarray:
        G = np.asarray(self.g(as_vector(x, self.n)), dtype=float)
        if G.shape != (self.n, self.m):
            raise ValueError(f"g(x) must be ({self.n}, {self.m}), got {G.shape}")
        return G

    def xdot(self, x, u) -> np.ndarray:
        return self.drift(x) + self.input_map(x) @ as_vector(u, self.m)


@dataclass
class EquilibriumPair:
    """Pair (x_e, u_e); validity against a system is checked by equilibrium_residual."""

    x_e: np.ndarray
    u_e: np.ndarray

    def __post_init__(self):
        self.x_e = as_vector(self.x_e)
        self.u_e = as_vector(self.u_e)


def equilibrium_residual(sys: ControlAffineSystem, eq: EquilibriumPair) -> float:
    """max-norm of f(x_e) + g(x_e) u_e."""
    return float(np.abs(sys.xdot(eq.x_e, eq.u_e)).max())


@dataclass
class ExtendedClassK:
    """Rate function for barrier rows; only the linear form alpha(s) = lam * s is shipped."""

    lam: float = 1.0
    kind: str = "linear"

    def __post_init__(self):
        if self.kind != "linear":
            raise ScenarioError(f"unsupported class-K kind {self.kind!r}")
        if not self.lam > 0.0:
            raise ScenarioError("class-K gain must be positive")

    def __call__(self, s: float) -> float:
        return self.lam * float(s)


@dataclass
class QuadraticCLF:
    """W(x) = (x - x_e)' P (x - x_e) with P symmetric positive definite."""

    P: np.ndarray
    equilibrium: EquilibriumPair

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        n = self.equilibrium.x_e.size
        if self.P.shape != (n, n):
            raise ScenarioError(f"P must be ({n}, {n}), got {self.P.shape}")
        validate_clf_matrix(self.P)

    def value(self, x) -> float:
        d = as_vector(x) - self.equilibrium.x_e
        return float(d @ self.P @ d)

    def grad(self, x) -> np.ndarray:
        return 2.0 * (self.P @ (as_vector(x) - self.equilibrium.x_e))


def validate_clf_matrix(P: np.ndarray) -> None:
    """Raise unless P is symmetric with strictly positive eigenvalues."""
    P = np.asarray(P, dtype=float)
    scale = 1.0 + np.abs(P).max()
    if np.abs(P - P.T).max() > 1e-9 * scale:
        raise ScenarioError("CLF matrix is not symmetric")
    eigs = np.linalg.eigvalsh(P)
    if eigs.min() <= 0.0:
        raise ScenarioError(f"CLF matrix is not positive definite (eigenvalues {eigs})")


@dataclass
class Barrier:
    """Scalar barrier h with safe side h >= 0 and decay rate alpha."""

    h: Callable[[np.ndarray], float]
    alpha: ExtendedClassK
    grad_h: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "h"

    def value(self, x) -> float:
        return float(self.h(as_vector(x)))

    def gradient(self, x) -> np.ndarray:
        if self.grad_h is not None:
            return as_vector(self.grad_h(as_vector(x)))
        return fd_gradient(lambda y: float(self.h(y)), x)


@dataclass
class SafeSet:
    """Intersection of h_i >= 0 over an ordered list of barriers."""

    barriers: tuple

    def __post_init__(self):
        self.barriers = tuple(self.barriers)
        if not self.barriers:
            raise ScenarioError("safe set needs at least one barrier")

    def __len__(self) -> int:
        return len(self.barriers)

    def values(self, x) -> np.ndarray:
        x = as_vector(x)
        return np.array([b.value(x) for b in self.barriers])

    def min_value(self, x) -> float:
        return float(self.values(x).min())

    def contains(self, x, tol: float = 0.0) -> bool:
        return self.min_value(x) >= -tol


def clf_value(clf: QuadraticCLF, x) -> float:
    """Quadratic Lyapunov value (x - x_e)' P (x - x_e)."""
    return clf.value(x)


def sontag_terms(sys: ControlAffineSystem, clf: QuadraticCLF, x):
    """Return (a, b) with a = gradW'(f + g u_e) and b = gradW' g (an m-row)."""
    x = as_vector(x, sys.n)
    w = clf.grad(x)
    G = sys.input_map(x)
    a = float(w @ (sys.drift(x) + G @ clf.equilibrium.u_e))
    b = w @ G
    return a, b


def barrier_lie_derivatives(sys: ControlAffineSystem, barrier: Barrier, x):
    """Return (L_f h, L_g h) = (gradh' f, gradh' g) at x."""
    x = as_vector(x, sys.n)
    grad = barrier.gradient(x)
    lfh = float(grad @ sys.drift(x))
    lgh = grad @ sys.input_map(x)
    return lfh, lgh


def linearize(sys: ControlAffineSystem, eq: EquilibriumPair,
              rel_step: float = 1e-6) -> np.ndarray:
    """Jacobian of x -> f(x) + g(x) u_e at x_e by central differences."""
    def closed(x):
        return sys.drift(x) + sys.input_map(x) @ eq.u_e

    jac = fd_jacobian(closed, eq.x_e, rel_step=rel_step)
    if not np.all(np.isfinite(jac)):
        raise ScenarioError("linearization produced non-finite entries")
    return jac


def sample_ball(center: np.ndarray, radius: float, count: int,
                rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the open ball of given radius around center."""
    center = as_vector(center)
    n = center.size
    dirs = rng.normal(size=(count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
    return center + dirs * radii


def is_valid_local_clf(sys: ControlAffineSystem, clf: QuadraticCLF, radius: float,
                       n_samples: int = 200, seed: int = 0, gamma: float = 1.0,
                       b_floor: float = 1e-10):
    """Sample the ball around x_e and look for a state at which no input
    (searched through the Sontag feedback) strictly decreases W.

    Returns (ok, witness); witness is the first failing state or None.
    A state fails only when b(x) vanishes while a(x) >= 0, because otherwise
    the Sontag input already yields dW/dt = -gamma*sqrt(a^2 + |b|^4) < 0.
    """
    if not radius > 0.0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    x_e = clf.equilibrium.x_e
    samples = sample_ball(x_e, radius, n_samples, rng)
    for x in samples:
        if np.linalg.norm(x - x_e) < 1e-12:
            continue
        a, b = sontag_terms(sys, clf, x)
        if math.sqrt(float(b @ b)) > b_floor:
            continue
        if a >= 0.0:
            return False, x
    return True, None
