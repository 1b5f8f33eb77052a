"""Forced responses and phase-quadrature loci of the damped model.

A single harmonic force ``F_j cos(W t)`` acts at each excitation location.
The quadrature condition is imposed on the fundamental of the co-located
physical response: its cosine coefficient vanishes, i.e. the response is at
+/- 90 degrees from the force.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from . import hb
from .continuation import (
    Branch,
    BranchKind,
    ContinuationConfig,
    SeedError,
    System,
    Termination,
    continue_branch,
    newton_min_norm,
)
from .model import ConfigurationError, ModalModel, ModeShapeMatrix, participation

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class QuadratureConstraint:
    """Co-located quadrature at one forced location.

    ``target_phase`` (+1 or -1) selects the response phase ``+/- pi/2``
    relative to the force; it orients the seed, while the constraint itself
    only zeroes the co-located cosine coefficient.
    """

    colocated_location: int
    target_phase: int = 1

    def __post_init__(self):
        if self.target_phase not in (-1, 1):
            raise ValueError("target_phase must be +1 or -1")


class ForcedHB:
    """Harmonic balance of the forced, damped model with optional quadrature constraints.

    Scaled unknowns: ``[X / amp_ref, Omega / omega_n1, F_free / force_ref]``.
    Equations: the HB residual over ``omega_n1**2 * amp_ref`` followed by one
    co-located quadrature equation per constrained location.
    """

    def __init__(self, model: ModalModel, shapes: ModeShapeMatrix, locations, amplitudes=None,
                 free=None, constraints=(), H: int = hb.DEFAULT_HARMONICS,
                 amp_ref: float = 1e-3,
                 force_ref: float | None = None, Omega_range=None, amp_max=None, force_max=None):
        self.model = model
        self.shapes = shapes
        self.locations = tuple(shapes.index(j) for j in locations)
        nf = len(self.locations)
        self.G = participation(shapes, self.locations)
        amps = np.zeros(nf) if amplitudes is None else np.asarray(amplitudes, dtype=float)
        if amps.shape != (nf,):
            raise ConfigurationError("one amplitude per excitation location required")
        self.fixed_amplitudes = amps
        free = np.zeros(nf, bool) if free is None else np.asarray(free, dtype=bool)
        self.free = free
        self.constraints = tuple(
            c if isinstance(c, QuadratureConstraint) else QuadratureConstraint(shapes.index(c))
            for c in constraints
        )
        for c in self.constraints:
            if c.colocated_location not in self.locations:
                raise ConfigurationError("quadrature must be imposed at a forced location")
        if len(self.constraints) != int(free.sum()):
            raise ConfigurationError(
                f"{len(self.constraints)} quadrature constraints for {int(free.sum())} free forces"
            )
        self.H = H
        self.n = hb.n_coeffs(H)
        self.amp_ref = amp_ref
        self.w_ref = float(model.omega_n[0])
        self.r_ref = self.w_ref**2 * amp_ref
        if force_ref is None:
            force_ref = 0.1 * self.r_ref
        self.force_ref = force_ref
        lo, hi = (TWO_PI * 16.1, TWO_PI * 20.0) if Omega_range is None else Omega_range
        self.window = (float(lo), float(hi))
        self.amp_max = amp_max
        self.force_max = force_max
        self.n_free = int(free.sum())

    @property
    def size(self) -> int:
        return 2 * self.n + 1 + self.n_free

    def forces(self, u) -> np.ndarray:
        F = self.fixed_amplitudes.copy()
        F[self.free] = u[2 * self.n + 1:] * self.force_ref
        return F

    def unpack(self, u):
        X = u[: 2 * self.n] * self.amp_ref
        return X, u[2 * self.n] * self.w_ref, self.forces(u)

    def pack(self, X, Omega, forces=None):
        F = self.fixed_amplitudes if forces is None else np.asarray(forces, dtype=float)
        return np.concatenate([np.asarray(X, dtype=float).reshape(-1) / self.amp_ref,
                               [Omega / self.w_ref], F[self.free] / self.force_ref])

    def solution(self, u) -> hb.HarmonicSolution:
        X, W, _ = self.unpack(u)
        return hb.HarmonicSolution.from_vector(X, self.H, W)

    def modal_force(self, u) -> np.ndarray:
        return self.G @ self.forces(u)

    def residual(self, u):
        X, W, F = self.unpack(u)
        sol = hb.HarmonicSolution.from_vector(X, self.H, W)
        r = hb.hb_residual(self.model, sol, self.G @ F) / self.r_ref
        if not self.constraints:
            return r
        a1 = sol.coeffs[:, 1]
        q = [self.shapes.phi[c.colocated_location] @ a1 / self.amp_ref for c in self.constraints]
        return np.concatenate([r, q])

    def jacobian(self, u):
        X, W, F = self.unpack(u)
        sol = hb.HarmonicSolution.from_vector(X, self.H, W)
        blocks = ("coeffs", "Omega", "forces") if self.n_free else ("coeffs", "Omega")
        J = hb.hb_jacobian(self.model, sol, blocks, self.G[:, self.free] if self.n_free else None)
        scale = np.concatenate([np.full(2 * self.n, self.amp_ref), [self.w_ref],
                                np.full(self.n_free, self.force_ref)])
        J = J * scale / self.r_ref
        if not self.constraints:
            return J
        rows = np.zeros((len(self.constraints), self.size))
        for k, c in enumerate(self.constraints):
            rows[k, 1] = self.shapes.phi[c.colocated_location, 0]
            rows[k, self.n + 1] = self.shapes.phi[c.colocated_location, 1]
        return np.vstack([J, rows])

    def stop(self, u):
        X, W, F = self.unpack(u)
        lo, hi = self.window
        if W > hi or W < lo:
            return Termination.PARAMETER_BOUND
        if self.amp_max is not None:
            c = X.reshape(2, self.n)
            if np.max(np.hypot(c[:, 1], c[:, 2])) > self.amp_max:
                return Termination.AMPLITUDE_BOUND
        if self.force_max is not None and np.max(np.abs(F)) > self.force_max:
            return Termination.AMPLITUDE_BOUND
        return None

    def system(self) -> System:
        return System(self.residual, self.jacobian, self.stop)

    def describe(self) -> dict:
        return {
            "H": self.H,
            "amp_ref": self.amp_ref,
            "omega_ref": self.w_ref,
            "force_ref": self.force_ref,
            "locations": [self.shapes.locations[j] for j in self.locations],
            "free": self.free.tolist(),
            "fixed_amplitudes": self.fixed_amplitudes.tolist(),
            "constraints": [self.shapes.locations[c.colocated_location] for c in self.constraints],
            "target_phase": [c.target_phase for c in self.constraints],
            "model": self.model.name,
        }


def linear_response(model: ModalModel, P, Omega) -> np.ndarray:
    """Complex fundamental response ``q_hat`` (``q = Re(q_hat exp(i W t))``) of the linear model."""
    w = model.omega_n
    c = model.damping_coefficients
    return np.asarray(P, dtype=float) / (w**2 - Omega**2 + 1j * c * Omega)


def linear_coefficients(model: ModalModel, P, Omega, H: int) -> np.ndarray:
    """Real HB coefficients of the linear steady-state response."""
    qh = linear_response(model, P, Omega)
    X = np.zeros((2, hb.n_coeffs(H)))
    X[:, 1] = qh.real
    X[:, 2] = -qh.imag
    return X


def linear_quadrature_frequency(model: ModalModel, shapes: ModeShapeMatrix, location, near: float,
                                span: float = 0.03) -> float:
    """Frequency near ``near`` where the co-located linear response is in quadrature."""
    row = shapes.row(location)

    def f(W):
        return (row @ linear_response(model, row, W)).real

    grid = np.linspace(near * (1 - span), near * (1 + span), 801)
    vals = np.array([f(W) for W in grid])
    idx = np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if idx.size == 0:
        raise SeedError("no linear quadrature frequency near the requested mode")
    k = idx[np.argmin(np.abs(grid[idx] - near))]
    return brentq(f, grid[k], grid[k + 1], xtol=1e-14)


def forced_response(model: ModalModel, shapes: ModeShapeMatrix, locations, amplitudes, Omega_range,
                    H: int = hb.DEFAULT_HARMONICS, amp_ref: float = 1e-3,
                    config: ContinuationConfig | None = None,
                    amp_max=None) -> Branch:
    """Fixed-force frequency response traced in ``Omega`` from the lower bound upwards."""
    lo, hi = Omega_range
    prob = ForcedHB(model, shapes, locations, amplitudes, H=H, amp_ref=amp_ref,
                    Omega_range=(lo, hi), amp_max=amp_max)
    X0 = linear_coefficients(model, prob.G @ prob.fixed_amplitudes, lo, H)
    cfg = replace(config or ContinuationConfig())
    cfg.direction_index = 2 * prob.n
    cfg.direction = 1
    # start just inside the window so the first point is not a boundary stop
    seed = prob.pack(X0, lo * (1 + 1e-9))
    branch = continue_branch(prob.system(), seed, cfg, kind=BranchKind.FORCED_RESPONSE)
    branch.meta.update(prob.describe())
    branch.meta["problem"] = prob
    return branch


def quadrature_problem(model, shapes, locations, H=hb.DEFAULT_HARMONICS, amp_ref=1e-3,
                       Omega_range=None,
                       amp_max=None, force_max=None, target_phase=1, force_ref=None) -> ForcedHB:
    """Quadrature-locus problem with every listed force free and co-located constraints."""
    locs = [shapes.index(j) for j in locations]
    if len(locs) not in (1, 2):
        raise ConfigurationError("quadrature loci take one or two forces")
    constraints = [QuadratureConstraint(j, target_phase) for j in locs]
    return ForcedHB(model, shapes, locs, np.zeros(len(locs)), np.ones(len(locs), bool), constraints,
                    H=H, amp_ref=amp_ref, force_ref=force_ref, Omega_range=Omega_range,
                    amp_max=amp_max, force_max=force_max)


def linear_quadrature_seed(prob: ForcedHB, mode: int = 1, amplitude: float = 1e-5) -> np.ndarray:
    """Small-amplitude seed at the linear phase resonance of ``mode`` (1 or 2).

    Two forces: the modal force isolates the linear mode at its natural
    frequency. One force: the co-located linear quadrature frequency nearest
    the natural frequency of ``mode``.
    """
    model = prob.model
    k = mode - 1
    sign = prob.constraints[0].target_phase if prob.constraints else 1
    if prob.n_free == 2:
        W = model.omega_n[k]
        P = np.zeros(2)
        P[k] = amplitude * model.damping_coefficients[k] * W
        if P[k] == 0:
            P[k] = amplitude * 1e-6
        F = np.linalg.solve(prob.G, P)
    else:
        j = prob.locations[0]
        W = linear_quadrature_frequency(model, prob.shapes, j, model.omega_n[k])
        row = prob.shapes.phi[j]
        x = row @ linear_response(model, row, W)
        F = np.array([amplitude / abs(x)])
    F = F * sign
    X = linear_coefficients(model, prob.G @ F, W, prob.H)
    return prob.pack(X, W, F)


def quadrature_locus(model: ModalModel, shapes: ModeShapeMatrix, locations, seed=None,
                     mode: int = 1, H: int = hb.DEFAULT_HARMONICS, amp_ref: float = 1e-3,
                     Omega_range=None,
                     config: ContinuationConfig | None = None, amp_max=None, force_max=None,
                     target_phase: int = 1, tangent=None, force_ref=None) -> Branch:
    """Trace the locus of periodic responses in quadrature with one or two forces.

    Without ``seed`` the locus starts at the linear phase resonance of
    ``mode`` and is traced towards increasing force. A supplied ``seed`` is a
    scaled unknown vector of :func:`quadrature_problem`; the direction then
    follows ``tangent`` or, by default, increasing force.
    """
    prob = quadrature_problem(model, shapes, locations, H, amp_ref, Omega_range, amp_max,
                              force_max, target_phase, force_ref)
    if seed is None:
        seed = linear_quadrature_seed(prob, mode)
    cfg = replace(config or ContinuationConfig())
    cfg.direction_index = prob.size - prob.n_free
    cfg.direction = int(np.sign(seed[cfg.direction_index])) or target_phase
    branch = continue_branch(prob.system(), seed, cfg, kind=BranchKind.QUADRATURE_LOCUS,
                             tangent=tangent)
    branch.meta.update(prob.describe())
    branch.meta["problem"] = prob
    return branch


def branch_solutions(branch: Branch) -> list:
    prob = branch.meta["problem"]
    return [prob.solution(pt.unknowns) for pt in branch.points]


def branch_forces(branch: Branch) -> np.ndarray:
    prob = branch.meta["problem"]
    return np.array([prob.forces(pt.unknowns) for pt in branch.points])


def phase_profile(sol: hb.HarmonicSolution, shapes: ModeShapeMatrix, locations=None) -> np.ndarray:
    """Fundamental phase (rad, in (-pi, pi]) of the physical response at each location.

    The phase ``psi`` is such that the fundamental is ``X cos(W t - psi)``;
    ``psi = pi/2`` is a response lagging a cosine force by 90 degrees.
    """
    rows = shapes.phi if locations is None else shapes.phi[[shapes.index(j) for j in locations]]
    a = rows @ sol.coeffs[:, 1]
    b = rows @ sol.coeffs[:, 2]
    psi = np.arctan2(b, a)
    return np.where(psi <= -np.pi, np.pi, psi)


def locus_table(branch: Branch, phase_locations=None) -> tuple:
    """Column names and rows describing every point of a forced branch.

    Columns: ``Omega_Hz``, one ``F_<location>`` per force, ``U1``, ``U2``,
    ``phi1``, ``phi2``, ``colocated_amplitude`` (fundamental amplitude at the
    first forced location) and ``phase_<location>`` for each requested
    location.
    """
    prob = branch.meta["problem"]
    shapes = prob.shapes
    names = [shapes.locations[j] for j in prob.locations]
    phase_locs = list(shapes.locations) if phase_locations is None else list(phase_locations)
    cols = (["Omega_Hz"] + [f"F_{n}" for n in names] + ["U1", "U2", "phi1", "phi2", "colocated_amplitude"]
            + [f"phase_{shapes.locations[shapes.index(j)]}" for j in phase_locs])
    rows = []
    for pt in branch.points:
        sol = prob.solution(pt.unknowns)
        F = prob.forces(pt.unknowns)
        U1, U2, f1, f2 = hb.amplitude_phase(sol)
        row0 = shapes.phi[prob.locations[0]]
        colo = np.hypot(row0 @ sol.coeffs[:, 1], row0 @ sol.coeffs[:, 2])
        rows.append([sol.Omega / TWO_PI, *F, U1, U2, f1, f2, colo,
                     *phase_profile(sol, shapes, phase_locs)])
    return cols, np.array(rows)


def solve_at_frequency(prob: ForcedHB, u_guess, Omega: float, tol=1e-9, max_iter=25):
    """Correct ``u_guess`` onto the problem's solution set at fixed ``Omega``.

    Returns ``(u, iterations)``; raises :class:`SeedError` on failure.
    """
    idx = 2 * prob.n
    target = Omega / prob.w_ref

    def residual(v):
        return np.concatenate([prob.residual(v), [v[idx] - target]])

    def jacobian(v):
        row = np.zeros(prob.size)
        row[idx] = 1.0
        return np.vstack([prob.jacobian(v), row])

    u = np.array(u_guess, dtype=float)
    u[idx] = target
    for it in range(1, max_iter + 1):
        r = residual(u)
        du = np.linalg.solve(jacobian(u), -r)
        u = u + du
        if not np.all(np.isfinite(u)):
            break
        if np.max(np.abs(du)) <= tol * max(1.0, np.max(np.abs(u))):
            if np.max(np.abs(prob.residual(u))) <= tol:
                return u, it
    raise SeedError(f"corrector failed at Omega={Omega:.6g}")


def seed_isolated_quadrature(model: ModalModel, shapes: ModeShapeMatrix, location, backbone_solution,
                             p: int | None = None, H: int | None = None, amp_ref: float = 1e-3,
                             Omega_range=None, amp_max=None, force_max=None, force_ref=None):
    """Seed a single-force quadrature locus from a backbone (NNM) point.

    The backbone Fourier coefficients are rotated so that mode 1 lags the
    force by 90 degrees, the force comes from the single-force energy balance
    and the seed is corrected at the backbone frequency. ``p`` defaults to the
    sign of ``cos(phi1 - phi2)`` of the backbone solution.

    Returns ``(problem, u, iterations)``; raises :class:`SeedError` when the
    corrector fails (the NNM motion is not isolable from this location).
    """
    from .appropriation import SingularAppropriation, single_force_amplitude

    sol = backbone_solution
    H = sol.H if H is None else H
    sol = sol.resized(H)
    U1, U2, f1, f2 = hb.amplitude_phase(sol)
    if p is None:
        p = 1 if np.cos(f1 - f2) >= 0 else -1
    try:
        F1 = single_force_amplitude(model, shapes, location, (sol.Omega, U1, U2, p))
    except SingularAppropriation as exc:
        raise SeedError(str(exc)) from None
    prob = quadrature_problem(model, shapes, [location], H, amp_ref, Omega_range, amp_max,
                              force_max, force_ref=force_ref)
    X = _shift_to_quadrature(sol)
    u0 = prob.pack(X, sol.Omega, [F1])
    u, its = solve_at_frequency(prob, u0, sol.Omega)
    return prob, u, its


def _shift_to_quadrature(sol: hb.HarmonicSolution) -> np.ndarray:
    """Time-shift a periodic solution so mode 1's fundamental is ``U1 sin(W t)``."""
    _, _, phi1, _ = hb.amplitude_phase(sol)
    shift = np.pi / 2 - phi1
    X = sol.coeffs.copy()
    for k in range(1, sol.H + 1):
        a = X[:, 2 * k - 1].copy()
        b = X[:, 2 * k].copy()
        c, s = np.cos(k * shift), np.sin(k * shift)
        # x(theta) -> x(theta - shift)
        X[:, 2 * k - 1] = a * c - b * s
        X[:, 2 * k] = a * s + b * c
    return X


def trace_from_seed(prob: ForcedHB, u, config: ContinuationConfig | None = None,
                    both_directions: bool = True) -> Branch:
    """Continue a quadrature locus through a corrected seed, optionally both ways.

    The two halves are joined into one branch ordered by increasing force at
    the seed's own direction.
    """
    cfg = config or ContinuationConfig()
    system = prob.system()
    t = _oriented_tangent(system, u, prob.size - prob.n_free)
    up = continue_branch(system, u, cfg, kind=BranchKind.QUADRATURE_LOCUS, tangent=t)
    if not both_directions:
        up.meta.update(prob.describe())
        up.meta["problem"] = prob
        return up
    down = continue_branch(system, u, cfg, kind=BranchKind.QUADRATURE_LOCUS, tangent=-t)
    pts = down.reversed().points[:-1]
    branch = Branch(pts + up.points, BranchKind.QUADRATURE_LOCUS, up.termination)
    branch.meta.update(prob.describe())
    branch.meta.update({"problem": prob, "termination_start": down.termination, "seed_index": len(pts)})
    return branch


def _oriented_tangent(system: System, u, index):
    from .continuation import null_tangent

    t = null_tangent(system.jacobian(u))
    return t if t[index] * u[index] >= 0 else -t


def project_seed(prob: ForcedHB, u0):
    """Minimum-norm projection of a guess onto the locus."""
    return newton_min_norm(prob.system(), u0)


def distance_to_polyline(points, polyline) -> np.ndarray:
    """Euclidean distance from each of ``points`` to the piecewise-linear curve ``polyline``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    A = np.atleast_2d(np.asarray(polyline, dtype=float))
    if len(A) == 1:
        return np.linalg.norm(P - A[0], axis=1)
    a, d = A[:-1], np.diff(A, axis=0)
    dd = np.maximum(np.einsum("ij,ij->i", d, d), np.finfo(float).tiny)
    out = np.empty(len(P))
    for k, x in enumerate(P):
        w = np.clip(np.einsum("ij,ij->i", x - a, d) / dd, 0.0, 1.0)
        out[k] = np.min(np.linalg.norm(a + w[:, None] * d - x, axis=1))
    return out


def polyline_hausdorff(A, B) -> float:
    """Symmetric Hausdorff distance between two piecewise-linear curves (vertex-to-curve)."""
    return float(max(distance_to_polyline(A, B).max(), distance_to_polyline(B, A).max()))


def diameter(points) -> float:
    """Largest pairwise distance within a point set."""
    from scipy.spatial.distance import pdist

    P = np.asarray(points, dtype=float)
    return float(pdist(P).max()) if len(P) > 1 else 0.0


def clip_polyline(points, lo: float, hi: float, axis: int = 0) -> np.ndarray:
    """Cut a curve at its first exit from ``lo <= points[:, axis] <= hi``.

    Continuation stops one step outside its window, so curves traced with
    different step sequences overshoot by different amounts. The exit point
    is linearly interpolated onto the bound.
    """
    P = np.asarray(points, dtype=float)
    inside = (P[:, axis] >= lo) & (P[:, axis] <= hi)
    if not inside[0]:
        raise ValueError("curve starts outside the window")
    out = [P[0]]
    for k in range(1, len(P)):
        if inside[k]:
            out.append(P[k])
            continue
        bound = hi if P[k, axis] > hi else lo
        s = (bound - P[k - 1, axis]) / (P[k, axis] - P[k - 1, axis])
        out.append(P[k - 1] + s * (P[k] - P[k - 1]))
        break
    return np.array(out)
