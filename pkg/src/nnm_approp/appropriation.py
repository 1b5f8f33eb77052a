"""Energy-balance force appropriation.

Convention: force ``F_j cos(W t)``, modal response ``U_i cos(W t - phi_i)``
so that ``phi_i = pi/2`` is a response lagging the force by 90 degrees. On a
backbone the inter-modal phase ``phi_1 - phi_2`` is ``0`` (``p = +1``) or
``pi`` (``p = -1``). Quadratic stiffness terms do not enter the energy
analysis.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import ConfigurationError, ExcitationLayout, ModalModel, ModeShapeMatrix

#: Maps flag phase errors whose magnitude exceeds this value as saturated.
SATURATION = np.pi / 4

OK = "ok"
NO_REAL_SOLUTION = "no-real-solution"
NO_COUPLING = "no-coupling"
SINGULAR = "singular-appropriation"


class AppropriationError(ValueError):
    pass


class NearParallelForces(AppropriationError):
    """The two excitation locations give near-parallel modal force vectors."""


class SingularAppropriation(AppropriationError):
    """The single-force energy balance has a vanishing denominator."""


@dataclass(frozen=True)
class BackbonePoint:
    """Point ``(Omega, U1, U2, p)`` of a backbone curve.

    ``U2`` may be given signed; :meth:`normalised` folds the sign into ``p``
    using the symmetry ``(U2, p) -> (-U2, -p)``.
    """

    Omega: float
    U1: float
    U2: float
    p: int

    def __post_init__(self):
        if self.p not in (-1, 1):
            raise ValueError("p must be +1 or -1")
        if not self.Omega > 0:
            raise ValueError("Omega must be positive")

    @classmethod
    def coerce(cls, target) -> "BackbonePoint":
        if isinstance(target, cls):
            return target
        Omega, U1, U2, p = target
        return cls(float(Omega), float(U1), float(U2), int(p))

    def normalised(self) -> "BackbonePoint":
        U1, U2, p = self.U1, self.U2, self.p
        if U1 < 0:
            U1, p = -U1, -p
        if U2 < 0:
            U2, p = -U2, -p
        return BackbonePoint(self.Omega, U1, U2, p)


@dataclass
class AppropriationResult:
    """Forces and modal forces for one appropriation target.

    ``phase_error`` is in radians, or ``None`` with ``flag`` explaining why.
    """

    forces: np.ndarray
    modal_forces: np.ndarray
    phase_error: float | None
    target: BackbonePoint
    flag: str = OK
    locations: tuple = field(default_factory=tuple)


def damping_energy(model: ModalModel, U_i, Omega, i: int):
    """Energy dissipated by mode ``i`` (1 or 2) over one period, ``2 zeta w W pi U**2``."""
    k = _mode(i)
    return 2.0 * model.zeta[k] * model.omega_n[k] * Omega * np.pi * np.asarray(U_i) ** 2


def forcing_energy(shapes: ModeShapeMatrix, layout: ExcitationLayout, U_i, phi_i, i: int):
    """Energy injected into mode ``i`` (1 or 2) over one period, ``pi P_i U_i sin(phi_i)``."""
    k = _mode(i)
    P = shapes.phi[list(layout.location_indices), k] @ layout.amplitudes
    return np.pi * P * np.asarray(U_i) * np.sin(phi_i)


def coupling_work(model: ModalModel, U1, U2, phase_difference):
    """Work done by mode 1 on the cubic coupling over one period (equal to minus mode 2's)."""
    g = model.gamma
    d = phase_difference
    return np.pi * U1 * (0.75 * g[1] * U1**2 * U2 * np.sin(d)
                         + 0.25 * g[2] * U1 * U2**2 * np.sin(2 * d)
                         + 0.75 * g[3] * U2**3 * np.sin(d))


def required_modal_forces(model: ModalModel, target) -> np.ndarray:
    """Modal forces ``(P1, P2)`` that balance damping on both modes at ``target``."""
    t = BackbonePoint.coerce(target).normalised()
    c = model.damping_coefficients
    return np.array([c[0] * t.Omega * t.U1, t.p * c[1] * t.Omega * t.U2])


def two_force_appropriation(model: ModalModel, shapes: ModeShapeMatrix, loc_a, loc_b, target,
                            max_condition: float = 1e8) -> AppropriationResult:
    """Exact appropriation of a backbone point with forces at two locations.

    Raises
    ------
    NearParallelForces
        If the 2x2 participation matrix has condition number above
        ``max_condition``.
    """
    t = BackbonePoint.coerce(target).normalised()
    ia, ib = shapes.index(loc_a), shapes.index(loc_b)
    G = shapes.phi[[ia, ib]].T
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > max_condition:
        raise NearParallelForces(
            f"near-parallel modal force vectors at {shapes.locations[ia]!r} and "
            f"{shapes.locations[ib]!r} (condition number {cond:.3g})"
        )
    P = required_modal_forces(model, t)
    F = np.linalg.solve(G, P)
    return AppropriationResult(F, P, 0.0, t, OK, (shapes.locations[ia], shapes.locations[ib]))


def single_force_amplitude(model: ModalModel, shapes: ModeShapeMatrix, loc, target,
                           eps: float = 1e-12) -> float:
    """Force amplitude at ``loc`` balancing the total damping energy at ``target``.

    ``eps`` is relative to ``max|Phi(loc, :)| * max(U1, U2)``.

    Raises
    ------
    SingularAppropriation
        If the denominator ``Phi(loc,1) U1 + p Phi(loc,2) U2`` is below the
        threshold.
    """
    t = BackbonePoint.coerce(target).normalised()
    row = shapes.row(loc)
    den = row[0] * t.U1 + t.p * row[1] * t.U2
    scale = np.max(np.abs(row)) * max(t.U1, t.U2)
    if scale == 0 or abs(den) < eps * scale:
        raise SingularAppropriation(
            f"single-force appropriation is singular at {shapes.locations[shapes.index(loc)]!r}"
        )
    num = 2 * t.Omega * (model.zeta[0] * model.omega_n[0] * t.U1**2
                         + model.zeta[1] * model.omega_n[1] * t.U2**2)
    return float(num / den)


def _solve_phase_equation(p, B, C, N):
    """Root in (-pi/2, pi/2) nearest 0 of ``0.75 p B sin(d) + 0.25 C sin(2d) = N``.

    Returns ``None`` when no real root exists.
    """
    if N == 0:
        return 0.0

    def g(d):
        return 0.75 * p * B * np.sin(d) + 0.25 * C * np.sin(2 * d) - N

    # damped fixed point on sin(d) = 4 p N / (3 B + 2 p C cos d)
    d = 0.0
    for _ in range(200):
        den = 3 * B + 2 * p * C * np.cos(d)
        if den == 0:
            break
        s = 4 * p * N / den
        if abs(s) > 1:
            break
        d_new = 0.5 * d + 0.5 * np.arcsin(s)
        if abs(d_new - d) < 1e-15:
            if abs(g(d_new)) <= 1e-12 * (abs(N) + abs(B) + abs(C)):
                return float(d_new)
            break
        d = d_new
    grid = np.linspace(-np.pi / 2, np.pi / 2, 4001)
    vals = g(grid)
    idx = np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if idx.size == 0:
        return None
    k = idx[np.argmin(np.abs(grid[idx] + grid[idx + 1]))]
    if vals[k] == 0:
        return float(grid[k])
    return float(brentq(g, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15))


def phase_error_from_modal(model: ModalModel, target, P1=None, P2=None, equation: int = 1):
    """Inter-modal phase error from the per-mode energy balance.

    Parameters
    ----------
    target : BackbonePoint or tuple
        ``(Omega, U1, U2, p)``.
    P1, P2 : float, optional
        Modal force amplitudes. ``equation=1`` needs ``P1``; ``equation=2``
        needs ``P2`` and assumes mode 2 is forced in quadrature.
    equation : {1, 2}
        Which mode's energy balance to use.

    Returns
    -------
    (value, flag)
        ``value`` in rad (``None`` unless ``flag == "ok"``).
    """
    t = BackbonePoint.coerce(target).normalised()
    c = model.damping_coefficients
    g = model.gamma
    if t.U2 == 0 or t.U1 == 0:
        return None, NO_COUPLING
    B = g[1] * t.U1**2 * t.U2 + g[3] * t.U2**3
    C = g[2] * t.U1 * t.U2**2
    if equation == 1:
        N = P1 - c[0] * t.U1 * t.Omega
    elif equation == 2:
        N = (c[1] * t.Omega * t.U2**2 - t.p * P2 * t.U2) / t.U1
    else:
        raise ValueError("equation must be 1 or 2")
    d = _solve_phase_equation(t.p, B, C, N)
    if d is None:
        return None, NO_REAL_SOLUTION
    return d, OK


def phase_error(model: ModalModel, shapes: ModeShapeMatrix, loc, target, F1=None, equation: int = 1):
    """Phase error ``phi_d`` for a single force at ``loc`` driving a backbone point.

    ``F1`` defaults to :func:`single_force_amplitude`. Returns ``(value, flag)``.
    """
    row = shapes.row(loc)
    if F1 is None:
        F1 = single_force_amplitude(model, shapes, loc, target)
    return phase_error_from_modal(model, target, row[0] * F1, row[1] * F1, equation)


def normalised_modal_force(shapes: ModeShapeMatrix, loc):
    """Unit modal force vector of a force at ``loc`` with ``P1 >= 0`` where possible.

    Returns ``(unit, raw)``.
    """
    raw = shapes.row(loc).copy()
    unit = raw / np.linalg.norm(raw)
    if unit[0] < 0 or (unit[0] == 0 and unit[1] < 0):
        unit = -unit
    return unit, raw


@dataclass
class PhaseMapEntry:
    location: str
    F1: float | None
    phase_error: float | None
    flag: str
    saturated: bool
    modal_direction: np.ndarray


def _map_one(model, shapes, j, target):
    name = shapes.locations[j]
    unit, _ = normalised_modal_force(shapes, j)
    try:
        F1 = single_force_amplitude(model, shapes, j, target)
    except SingularAppropriation:
        return PhaseMapEntry(name, None, None, SINGULAR, True, unit)
    d, flag = phase_error(model, shapes, j, target, F1)
    saturated = flag != OK or abs(d) > SATURATION
    return PhaseMapEntry(name, F1, d, flag, bool(saturated), unit)


def thread_count(default: int | None = None) -> int:
    """Worker cap from ``NNM_APPROP_THREADS`` (at least 1)."""
    raw = os.environ.get("NNM_APPROP_THREADS")
    if raw is None:
        return default or min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"NNM_APPROP_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def phase_error_map(model: ModalModel, shapes: ModeShapeMatrix, target, locations=None,
                    workers: int | None = None) -> list:
    """Single-force phase error for every location of the mode-shape table."""
    idx = range(len(shapes)) if locations is None else [shapes.index(j) for j in locations]
    t = BackbonePoint.coerce(target)
    n = workers or thread_count()
    if n == 1:
        return [_map_one(model, shapes, j, t) for j in idx]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda j: _map_one(model, shapes, j, t), idx))


def _mode(i: int) -> int:
    if i not in (1, 2):
        raise ValueError("mode number must be 1 or 2")
    return i - 1
