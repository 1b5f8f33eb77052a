"""Backbone curves (nonlinear normal modes) of the two-mode model.

Two routes are provided: the single-harmonic resonant approximation of the
cubic model, and harmonic balance of the full conservative model traced by
pseudo-arclength continuation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import hb
from .continuation import (
    Branch,
    BranchKind,
    ContinuationConfig,
    System,
    Termination,
    continue_branch,
    correct_at,
    resample_branch,
)
from .model import ModalModel

TWO_PI = 2 * np.pi

# frequency window of the reported results, Hz
DEFAULT_WINDOW_HZ = (16.1, 20.0)


@dataclass(frozen=True)
class BackboneParams:
    """Phase flag of an NNM: ``p = -1`` anti-phase (NNM1), ``p = +1`` in-phase (NNM2)."""

    p: int

    def __post_init__(self):
        if self.p not in (-1, 1):
            raise ValueError("phase flag must be +1 or -1")

    @property
    def phi_d(self) -> float:
        return 0.0 if self.p == 1 else np.pi

    @classmethod
    def for_nnm(cls, nnm: int) -> "BackboneParams":
        if nnm not in (1, 2):
            raise ValueError("nnm must be 1 or 2")
        return cls(-1 if nnm == 1 else 1)


def phase_flag(nnm: int) -> int:
    return BackboneParams.for_nnm(nnm).p


def analytic_backbone_residual(model: ModalModel, U1, U2, Omega, p) -> np.ndarray:
    """Left-hand sides of the resonant backbone equations (quadratic terms ignored)."""
    w1, w2 = model.omega_n
    g1, g2, g3, g4, g5 = model.gamma
    r1 = ((w1**2 - Omega**2) * U1 + 0.75 * g1 * U1**3
          + p * 0.75 * U2 * (3 * g2 * U1**2 + g4 * U2**2) + 0.75 * g3 * U1 * U2**2)
    r2 = ((w2**2 - Omega**2) * U2 + p * 0.75 * U1 * (g2 * U1**2 + 3 * g4 * U2**2)
          + 0.75 * g3 * U1**2 * U2 + 0.75 * g5 * U2**3)
    return np.array([r1, r2])


def _analytic_jacobian(model, U1, U2, Omega, p):
    w1, w2 = model.omega_n
    g1, g2, g3, g4, g5 = model.gamma
    return np.array([
        [w1**2 - Omega**2 + 2.25 * g1 * U1**2 + p * 4.5 * g2 * U1 * U2 + 0.75 * g3 * U2**2,
         p * 0.75 * (3 * g2 * U1**2 + 3 * g4 * U2**2) + 1.5 * g3 * U1 * U2,
         -2 * Omega * U1],
        [p * 0.75 * (3 * g2 * U1**2 + 3 * g4 * U2**2) + 1.5 * g3 * U1 * U2,
         w2**2 - Omega**2 + p * 4.5 * g4 * U1 * U2 + 0.75 * g3 * U1**2 + 2.25 * g5 * U2**2,
         -2 * Omega * U2],
    ])


def _window(model, Omega_range):
    if Omega_range is None:
        return TWO_PI * np.array(DEFAULT_WINDOW_HZ)
    return np.asarray(Omega_range, dtype=float)


def _default_config(cfg, step_max):
    if cfg is None:
        return ContinuationConfig(step_max=step_max)
    return replace(cfg)


def analytic_system(model: ModalModel, p: int, amp_ref=1e-3, Omega_range=None,
                    amp_max=None) -> System:
    """Scaled backbone equations in ``u = (U1/A, U2/A, Omega/w1)``."""
    w_ref = model.omega_n[0]
    r_ref = w_ref**2 * amp_ref
    lo, hi = _window(model, Omega_range)

    def residual(u):
        return analytic_backbone_residual(model, u[0] * amp_ref, u[1] * amp_ref, u[2] * w_ref, p) / r_ref

    def jacobian(u):
        J = _analytic_jacobian(model, u[0] * amp_ref, u[1] * amp_ref, u[2] * w_ref, p)
        return J * np.array([amp_ref, amp_ref, w_ref]) / r_ref

    def stop(u):
        W = u[2] * w_ref
        if W > hi or W < lo:
            return Termination.PARAMETER_BOUND
        if amp_max is not None and np.hypot(u[0], u[1]) * amp_ref > amp_max:
            return Termination.AMPLITUDE_BOUND
        return None

    return System(residual, jacobian, stop)


def solve_analytic_backbone(model: ModalModel, p: int, Omega_range=None, n_points=None,
                            amp_ref=1e-3, config: ContinuationConfig | None = None,
                            seed_amplitude=1e-5, amp_max=None) -> Branch:
    """Trace the resonant-approximation backbone with phase flag ``p``.

    The branch starts at the linear limit (``Omega -> omega_n1`` for p=-1,
    ``omega_n2`` for p=+1) and stops when ``Omega`` leaves ``Omega_range``
    (default 16.1 to 20 Hz). Unknowns are ``(U1, U2, Omega)`` with signed
    amplitudes; a sign change of one amplitude is equivalent to flipping
    ``p``. With ``n_points`` the branch is resampled at equal arclength.
    """
    p = BackboneParams(p).p
    k = 0 if p == -1 else 1
    system = analytic_system(model, p, amp_ref, Omega_range, amp_max)
    seed = np.zeros(3)
    seed[k] = seed_amplitude / amp_ref
    seed[2] = model.omega_n[k] / model.omega_n[0]
    cfg = _default_config(config, 0.05)
    cfg.direction_index = k
    cfg.direction = 1
    branch = continue_branch(system, seed, cfg, kind=BranchKind.BACKBONE)
    if n_points is not None:
        branch = resample_branch(system, branch, n_points)
    branch.meta.update({
        "method": "analytic",
        "p": p,
        "amp_ref": amp_ref,
        "omega_ref": float(model.omega_n[0]),
        "model": model.name,
    })
    return branch


def analytic_points(branch: Branch) -> np.ndarray:
    """Rows ``(Omega, U1, U2)`` with signed amplitudes for an analytic branch."""
    A = branch.meta["amp_ref"]
    w = branch.meta["omega_ref"]
    U = branch.unknowns
    return np.column_stack([U[:, 2] * w, U[:, 0] * A, U[:, 1] * A])


def solve_analytic_at(model: ModalModel, p: int, Omega: float, U_guess, tol=1e-12, max_iter=50):
    """Newton solve of the backbone equations at fixed frequency."""
    U = np.array(U_guess, dtype=float)
    scale = model.omega_n[0] ** 2 * max(np.max(np.abs(U)), 1e-300)
    for _ in range(max_iter):
        J = _analytic_jacobian(model, U[0], U[1], Omega, p)[:, :2]
        dU = np.linalg.solve(J, -analytic_backbone_residual(model, U[0], U[1], Omega, p))
        U = U + dU
        if np.max(np.abs(dU)) <= tol * np.max(np.abs(U)):
            break
    r = analytic_backbone_residual(model, U[0], U[1], Omega, p)
    if not np.max(np.abs(r)) <= 1e-9 * scale:
        raise RuntimeError(f"analytic backbone solve failed at Omega={Omega}")
    return U


class ConservativeHB:
    """Harmonic balance of the undamped, unforced model for NNM continuation.

    Unknowns (scaled): Fourier coefficients of both modes over ``amp_ref``,
    ``Omega / omega_n1`` and an unfolding coefficient ``mu`` of an artificial
    velocity-proportional term ``mu * Omega * D x``. Because the conservative
    system has a one-parameter family of periodic orbits, ``mu`` vanishes on
    every solution and makes the augmented Jacobian regular. The phase is
    fixed by zeroing the fundamental sine coefficient of whichever mode
    currently has the larger fundamental cosine coefficient.
    """

    def __init__(self, model: ModalModel, H: int = hb.DEFAULT_HARMONICS, amp_ref: float = 1e-3,
                 Omega_range=None, amp_max=None):
        self.model = model.conservative()
        self.H = H
        self.n = hb.n_coeffs(H)
        self.amp_ref = amp_ref
        self.w_ref = float(model.omega_n[0])
        self.r_ref = self.w_ref**2 * amp_ref
        self.window = _window(model, Omega_range)
        self.amp_max = amp_max

    @property
    def size(self) -> int:
        return 2 * self.n + 2

    def unpack(self, u):
        X = u[: 2 * self.n] * self.amp_ref
        return X, u[2 * self.n] * self.w_ref, u[2 * self.n + 1]

    def pack(self, X, Omega, mu=0.0):
        return np.concatenate([np.asarray(X, dtype=float).reshape(-1) / self.amp_ref,
                               [Omega / self.w_ref, mu]])

    def solution(self, u) -> hb.HarmonicSolution:
        X, W, _ = self.unpack(u)
        return hb.HarmonicSolution.from_vector(X, self.H, W)

    def _anchor_mode(self, X):
        return int(np.argmax(np.abs(X.reshape(2, self.n)[:, 1])))

    def residual(self, u):
        X, W, mu = self.unpack(u)
        sol = hb.HarmonicSolution.from_vector(X, self.H, W)
        D = hb.derivative_matrix(self.H)
        r = hb.hb_residual(self.model, sol) + mu * W * (sol.coeffs @ D.T).reshape(-1)
        k = self._anchor_mode(X)
        anchor = X[k * self.n + 2]
        return np.concatenate([r / self.r_ref, [anchor / self.amp_ref]])

    def jacobian(self, u):
        X, W, mu = self.unpack(u)
        sol = hb.HarmonicSolution.from_vector(X, self.H, W)
        D = hb.derivative_matrix(self.H)
        J = hb.hb_jacobian(self.model, sol, ("coeffs", "Omega"))
        Dblk = np.kron(np.eye(2), D)
        J[:, : 2 * self.n] += mu * W * Dblk
        J[:, 2 * self.n] += mu * Dblk @ X
        dmu = W * Dblk @ X
        J = np.column_stack([J[:, : 2 * self.n] * self.amp_ref,
                             J[:, 2 * self.n] * self.w_ref,
                             dmu]) / self.r_ref
        row = np.zeros(self.size)
        row[self._anchor_mode(X) * self.n + 2] = 1.0
        return np.vstack([J, row])

    def stop(self, u):
        X, W, _ = self.unpack(u)
        lo, hi = self.window
        if W > hi or W < lo:
            return Termination.PARAMETER_BOUND
        if self.amp_max is not None:
            U = np.hypot(X.reshape(2, self.n)[:, 1], X.reshape(2, self.n)[:, 2])
            if np.max(U) > self.amp_max:
                return Termination.AMPLITUDE_BOUND
        return None

    def system(self) -> System:
        return System(self.residual, self.jacobian, self.stop)


def solve_numeric_backbone(model: ModalModel, p: int, config: ContinuationConfig | None = None,
                           H: int = hb.DEFAULT_HARMONICS, amp_ref: float = 1e-3, Omega_range=None,
                           seed_amplitude: float = 1e-5, amp_max=None) -> Branch:
    """Trace an NNM of the full conservative model by harmonic balance.

    Seeds on linear mode 1 (``p = -1``) or mode 2 (``p = +1``) at small
    amplitude and continues towards increasing amplitude.
    """
    p = BackboneParams(p).p
    k = 0 if p == -1 else 1
    prob = ConservativeHB(model, H, amp_ref, Omega_range, amp_max)
    X = np.zeros((2, prob.n))
    X[k, 1] = seed_amplitude
    seed = prob.pack(X, model.omega_n[k])
    cfg = _default_config(config, 0.05)
    cfg.direction_index = k * prob.n + 1
    cfg.direction = 1
    branch = continue_branch(prob.system(), seed, cfg, kind=BranchKind.BACKBONE)
    branch.meta.update({
        "method": "harmonic_balance",
        "p": p,
        "H": H,
        "amp_ref": amp_ref,
        "omega_ref": prob.w_ref,
        "model": model.name,
    })
    return branch


def numeric_solutions(branch: Branch) -> list:
    """Harmonic solutions of every point of a numeric backbone branch."""
    H = branch.meta["H"]
    A = branch.meta["amp_ref"]
    w = branch.meta["omega_ref"]
    n = hb.n_coeffs(H)
    return [hb.HarmonicSolution.from_vector(pt.unknowns[: 2 * n] * A, H, pt.unknowns[2 * n] * w)
            for pt in branch.points]


def backbone_table(branch: Branch) -> np.ndarray:
    """Rows ``(Omega, U1, U2, phase_difference)`` for either backbone route.

    Amplitudes are non-negative; the phase difference is ``phi1 - phi2``
    wrapped to [0, 2 pi).
    """
    if branch.meta.get("method") == "analytic":
        pts = analytic_points(branch)
        U1, U2 = np.abs(pts[:, 1]), np.abs(pts[:, 2])
        sign = np.sign(pts[:, 1] * pts[:, 2]) * branch.meta["p"]
        sign = np.where(sign == 0, branch.meta["p"], sign)
        phid = np.where(sign > 0, 0.0, np.pi)
        return np.column_stack([pts[:, 0], U1, U2, phid])
    rows = []
    for sol in numeric_solutions(branch):
        U1, U2, f1, f2 = hb.amplitude_phase(sol)
        rows.append([sol.Omega, U1, U2, np.mod(f1 - f2, 2 * np.pi)])
    return np.array(rows)


def frequency_gap(branch1: Branch, branch2: Branch, Omega_range=None) -> float:
    """Smallest frequency separation between two backbones over shared amplitude.

    Both backbones are sampled as functions of the total modal amplitude
    ``sqrt(U1^2 + U2^2)`` and the minimum of ``|f2 - f1|`` (Hz) is taken over
    the amplitude range covered by both inside the frequency window.
    """
    lo, hi = _window(None, Omega_range)
    t1 = backbone_table(branch1)
    t2 = backbone_table(branch2)
    a1 = np.hypot(t1[:, 1], t1[:, 2])
    a2 = np.hypot(t2[:, 1], t2[:, 2])
    amax = min(a1.max(), a2.max())
    amin = max(a1.min(), a2.min())
    grid = np.linspace(amin, amax, 2000)

    def freq_at(a, W, g):
        order = np.argsort(a)
        return np.interp(g, a[order], W[order])

    f1 = freq_at(a1, t1[:, 0], grid) / TWO_PI
    f2 = freq_at(a2, t2[:, 0], grid) / TWO_PI
    mask = (f1 * TWO_PI >= lo) & (f1 * TWO_PI <= hi) & (f2 * TWO_PI >= lo) & (f2 * TWO_PI <= hi)
    return float(np.min(np.abs(f2[mask] - f1[mask])))


def analytic_solution(Omega: float, U1: float, U2: float, p: int, H: int = 1) -> hb.HarmonicSolution:
    """Single-harmonic motion ``q = (U1, p U2) cos(W t)`` of an analytic backbone point."""
    sol = hb.HarmonicSolution.zeros(H, Omega)
    sol.coeffs[0, 1] = U1
    sol.coeffs[1, 1] = p * U2
    return sol


def analytic_targets(branch: Branch) -> list:
    """Backbone points ``(Omega, U1, U2, p)`` of an analytic branch."""
    p = branch.meta["p"]
    return [(W, U1, U2, p) for W, U1, U2 in analytic_points(branch)]


def numeric_at(model: ModalModel, branch: Branch, Omega: float, tol: float = 1e-11) -> list:
    """Backbone solutions at exactly ``Omega``, one per crossing of the branch.

    Each bracketing pair of traced points gives a linear prediction that is
    corrected with the frequency held fixed. Crossings are returned in
    branch order, which is the order of increasing amplitude.
    """
    prob = ConservativeHB(model, branch.meta["H"], branch.meta["amp_ref"])
    iW = 2 * prob.n
    U = branch.unknowns
    target = Omega / prob.w_ref
    e = np.zeros(prob.size)
    e[iW] = 1.0
    out = []
    for j in np.flatnonzero(np.diff(np.sign(U[:, iW] - target)) != 0):
        w = (target - U[j, iW]) / (U[j + 1, iW] - U[j, iW])
        u_pred = (1 - w) * U[j] + w * U[j + 1]
        u_pred[iW] = target
        res = correct_at(prob.system(), u_pred, e, tol=tol)
        if res is not None:
            out.append(prob.solution(res[0]))
    return out
