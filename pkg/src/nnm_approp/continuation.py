"""Pseudo-arclength predictor-corrector continuation.

The engine follows one-dimensional solution sets of ``F(u) = 0`` with
``F: R^(n+1) -> R^n``. Problems supply scaled unknowns; steps and
tolerances are measured in those units.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class ContinuationError(RuntimeError):
    pass


class SeedError(ContinuationError):
    """The corrector did not converge from the supplied seed."""


class BranchKind(str, enum.Enum):
    BACKBONE = "backbone"
    FORCED_RESPONSE = "forced_response"
    QUADRATURE_LOCUS = "quadrature_locus"
    GENERIC = "generic"


class Termination(str, enum.Enum):
    PARAMETER_BOUND = "parameter_bound"
    AMPLITUDE_BOUND = "amplitude_bound"
    STEP_FAILURE = "step_failure"
    CLOSED_LOOP = "closed_loop"
    MAX_POINTS = "max_points"


@dataclass
class ContinuationConfig:
    tol: float = 1e-9
    max_newton: int = 25
    step_min: float = 1e-8
    step_max: float = 0.05
    step_init: float = 0.01
    growth: float = 1.3
    fast_iterations: int = 3
    max_points: int = 5000
    direction: int = 1
    direction_index: int = -1

    @classmethod
    def from_dict(cls, values: dict) -> "ContinuationConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown continuation settings: {sorted(unknown)}")
        return cls(**values)


@dataclass
class BranchPoint:
    unknowns: np.ndarray
    tangent: np.ndarray
    step_used: float
    residual_norm: float
    iterations: int = 0


@dataclass
class Branch:
    points: list = field(default_factory=list)
    kind: BranchKind = BranchKind.GENERIC
    termination: Termination | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def unknowns(self) -> np.ndarray:
        return np.array([p.unknowns for p in self.points])

    def reversed(self) -> "Branch":
        pts = [
            BranchPoint(p.unknowns, -p.tangent, p.step_used, p.residual_norm, p.iterations)
            for p in reversed(self.points)
        ]
        return Branch(pts, self.kind, self.termination, dict(self.meta))


@dataclass
class System:
    """Underdetermined system ``F(u) = 0`` with Jacobian ``J(u)`` of shape (n, n+1).

    ``stop`` may inspect a converged point and return a :class:`Termination`
    to end the branch (the point itself is kept).
    """

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    stop: Callable[[np.ndarray], Termination | None] | None = None


def null_tangent(J: np.ndarray) -> np.ndarray:
    """Unit vector spanning the kernel of a full-rank (n, n+1) Jacobian."""
    _, _, vt = np.linalg.svd(J)
    t = vt[-1]
    return t / np.linalg.norm(t)


def newton_min_norm(system: System, u0, tol=1e-9, max_iter=25):
    """Gauss-Newton with minimum-norm steps onto the solution curve.

    Returns ``(u, residual_norm, iterations)``; raises :class:`SeedError`.
    """
    u = np.array(u0, dtype=float)
    r = system.residual(u)
    for it in range(max_iter + 1):
        rn = np.max(np.abs(r))
        if not np.isfinite(rn):
            break
        if rn <= tol and it > 0:
            return u, rn, it
        du = np.linalg.lstsq(system.jacobian(u), -r, rcond=None)[0]
        u = u + du
        r = system.residual(u)
        if np.max(np.abs(du)) <= tol * 1e-3 and np.max(np.abs(r)) <= tol:
            return u, np.max(np.abs(r)), it + 1
    raise SeedError(f"corrector did not converge from seed (residual {rn:.3e})")


def _correct(system: System, u_pred, tangent, cfg: ContinuationConfig):
    """Newton on the bordered system with the constraint ``t . (u - u_pred) = 0``."""
    u = u_pred.copy()
    for it in range(1, cfg.max_newton + 1):
        r = system.residual(u)
        if not np.all(np.isfinite(r)):
            return None
        J = system.jacobian(u)
        A = np.vstack([J, tangent])
        rhs = -np.concatenate([r, [tangent @ (u - u_pred)]])
        try:
            du = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            return None
        u = u + du
        step = np.max(np.abs(du))
        if step <= cfg.tol * max(1.0, np.max(np.abs(u))):
            r = system.residual(u)
            rn = np.max(np.abs(r))
            if rn <= cfg.tol:
                return u, rn, it
        if step > 1e3 * max(1.0, np.max(np.abs(u_pred))):
            return None
    return None


def continue_branch(system: System, seed, config: ContinuationConfig | None = None,
                    kind: BranchKind = BranchKind.GENERIC, tangent=None) -> Branch:
    """Trace the solution curve through ``seed``.

    The seed is first projected onto the curve. The initial direction is the
    Jacobian null vector oriented so that component ``direction_index`` moves
    with the sign of ``direction`` (or along ``tangent`` if given). Later
    predictions use the secant through the last two points.
    """
    cfg = config or ContinuationConfig()
    u, rn, its = newton_min_norm(system, seed, cfg.tol, cfg.max_newton)
    t = null_tangent(system.jacobian(u))
    if tangent is not None:
        if t @ np.asarray(tangent) < 0:
            t = -t
    elif np.sign(t[cfg.direction_index]) != np.sign(cfg.direction) and t[cfg.direction_index] != 0:
        t = -t
    branch = Branch(kind=kind)
    branch.points.append(BranchPoint(u, t, 0.0, rn, its))
    if system.stop is not None:
        reason = system.stop(u)
        if reason is not None:
            branch.termination = reason
            return branch

    h = min(cfg.step_init, cfg.step_max)
    travelled = 0.0
    start = u.copy()
    while len(branch.points) < cfg.max_points:
        prev = branch.points[-1]
        result = _correct(system, prev.unknowns + h * prev.tangent, prev.tangent, cfg)
        if result is not None:
            u_new, rn, its = result
            secant = u_new - prev.unknowns
            dist = np.linalg.norm(secant)
            if dist == 0 or secant @ prev.tangent <= 0:
                result = None
        if result is None:
            h *= 0.5
            if h < cfg.step_min:
                branch.termination = Termination.STEP_FAILURE
                log.info("branch stopped: step below %g", cfg.step_min)
                break
            continue
        t_new = secant / dist
        if t_new @ prev.tangent <= 0:
            t_new = prev.tangent
        branch.points.append(BranchPoint(u_new, t_new, h, rn, its))
        travelled += dist
        if system.stop is not None:
            reason = system.stop(u_new)
            if reason is not None:
                branch.termination = reason
                break
        t0 = branch.points[0].tangent
        if (len(branch.points) > 3 and travelled > 2 * dist
                and np.linalg.norm(prev.unknowns - start) <= 2 * dist
                and (prev.unknowns - start) @ t0 < 0 <= (u_new - start) @ t0):
            branch.termination = Termination.CLOSED_LOOP
            break
        if its <= cfg.fast_iterations:
            h = min(h * cfg.growth, cfg.step_max)
    else:
        branch.termination = Termination.MAX_POINTS
    return branch


def detect_sign_change(branch: Branch, observable, parameter=None) -> list:
    """Linearly interpolated zero crossings of ``observable`` along a branch.

    ``observable`` and ``parameter`` are callables of a point's unknown
    vector (or arrays aligned with the points). Returns the interpolated
    parameter values; without ``parameter`` the fractional point index.
    """
    if len(branch.points) < 2:
        raise ValueError("need at least two branch points")
    U = branch.unknowns
    obs = np.asarray(observable(U.T) if callable(observable) else observable, dtype=float)
    if parameter is None:
        par = np.arange(len(obs), dtype=float)
    else:
        par = np.asarray(parameter(U.T) if callable(parameter) else parameter, dtype=float)
    crossings = []
    for k in range(len(obs) - 1):
        a, b = obs[k], obs[k + 1]
        if a == 0.0:
            if k == 0 or obs[k - 1] != 0.0:
                crossings.append(par[k])
            continue
        if a * b < 0:
            s = a / (a - b)
            crossings.append(par[k] + s * (par[k + 1] - par[k]))
    if obs[-1] == 0.0 and (len(obs) < 2 or obs[-2] != 0.0):
        crossings.append(par[-1])
    return crossings


def correct_at(system: System, u_pred, direction, tol=1e-9, max_iter=25):
    """Newton on ``F(u) = 0`` with the hyperplane ``direction . (u - u_pred) = 0``."""
    cfg = ContinuationConfig(tol=tol, max_newton=max_iter)
    return _correct(system, np.asarray(u_pred, dtype=float), np.asarray(direction, dtype=float), cfg)


def resample_branch(system: System, branch: Branch, n_points: int) -> Branch:
    """Re-solve a branch at ``n_points`` locations equally spaced in arclength.

    Each target is predicted by linear interpolation of the traced points and
    corrected onto the curve, so resampled points are exact solutions.
    """
    if n_points < 2 or len(branch) < 2:
        raise ValueError("need at least two points to resample")
    U = branch.unknowns
    seg = np.linalg.norm(np.diff(U, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n_points)
    pts = []
    for k, st in enumerate(targets):
        j = min(np.searchsorted(s, st, side="right") - 1, len(seg) - 1)
        w = (st - s[j]) / seg[j] if seg[j] > 0 else 0.0
        u_pred = (1 - w) * U[j] + w * U[j + 1]
        d = U[j + 1] - U[j]
        d = d / np.linalg.norm(d)
        if k == 0 or k == n_points - 1:
            src = branch.points[0 if k == 0 else -1]
            pts.append(BranchPoint(src.unknowns.copy(), src.tangent.copy(), 0.0,
                                   src.residual_norm, src.iterations))
            continue
        result = correct_at(system, u_pred, d)
        if result is None:
            raise ContinuationError(f"resampling failed at arclength {st:.4g}")
        u, rn, its = result
        pts.append(BranchPoint(u, d, float(targets[1] - targets[0]), rn, its))
    return Branch(pts, branch.kind, branch.termination, dict(branch.meta))
