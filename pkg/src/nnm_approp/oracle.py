"""Time-domain integration of the modal equations, used to verify HB solutions.

The integrator is the classical fixed-step fourth-order Runge-Kutta scheme,
vectorised over a batch of trajectories so that whole branches can be
checked in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from . import hb
from .model import (
    ExcitationLayout,
    ModalModel,
    ModeShapeMatrix,
    modal_force_vector,
    nonlinear_force,
    total_energy,
)

#: Default number of RK4 steps per forcing/response period.
STEPS_PER_PERIOD = 2**12


class DivergenceError(FloatingPointError):
    """The integrated state became non-finite."""


@dataclass
class TimeSeries:
    """Sampled trajectory; ``q`` and ``qdot`` have shape (2, n_samples, *batch)."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim == 1 and t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])


def modal_forcing(shapes: ModeShapeMatrix, layout: ExcitationLayout):
    """``(P, Omega)`` of an excitation layout."""
    return modal_force_vector(shapes, layout), layout.Omega


def _rhs(model, t, y, P, Omega, c, w2):
    q, v = y[:2], y[2:]
    out = np.empty_like(y)
    out[:2] = v
    out[2:] = P * np.cos(Omega * t) - c * v - w2 * q - nonlinear_force(model, q)
    return out


def integrate(model: ModalModel, y0, t_span, dt, P=(0.0, 0.0), Omega=1.0, store: bool = True):
    """Integrate ``q'' + Xi q' + Lambda q + N(q) = P cos(Omega t)`` with RK4.

    Parameters
    ----------
    y0 : array_like, shape (4,) or (4, *batch)
        Initial ``(q1, q2, q1', q2')``.
    t_span : (float, float) or array_like
        Start and end times; the end time may vary across the batch.
    dt : float or array_like
        Step size. With a batch end time the step count is taken from the
        first trajectory and ``dt`` is adjusted per trajectory to land exactly
        on each end time.
    P : array_like, shape (2,) or (2, *batch)
        Modal force amplitudes.
    Omega : float or array_like
        Forcing frequency (rad/s), per trajectory if batched.
    store : bool
        Keep every step (otherwise only the end points).

    Returns
    -------
    TimeSeries
        ``t`` has shape (n_samples,) or (n_samples, *batch).

    Raises
    ------
    DivergenceError
        If the state becomes non-finite.
    """
    y = np.array(y0, dtype=float)
    batch = y.shape[1:]
    t0 = np.broadcast_to(np.asarray(t_span[0], dtype=float), batch).copy()
    t1 = np.broadcast_to(np.asarray(t_span[1], dtype=float), batch)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), batch)
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    span = t1 - t0
    n = int(np.ceil(np.max(span / dt) - 1e-9))
    n = max(n, 1)
    h = span / n
    P = np.asarray(P, dtype=float).reshape((2,) + (batch if np.ndim(P) > 1 else (1,) * len(batch)))
    Omega = np.broadcast_to(np.asarray(Omega, dtype=float), batch)
    shape = (2,) + (1,) * len(batch)
    c = model.damping_coefficients.reshape(shape)
    w2 = (model.omega_n**2).reshape(shape)
    ts, qs, vs = [t0.copy()], [y[:2].copy()], [y[2:].copy()]
    t = t0
    # overflow on a diverging trajectory is reported as DivergenceError below
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            k1 = _rhs(model, t, y, P, Omega, c, w2)
            k2 = _rhs(model, t + h / 2, y + h / 2 * k1, P, Omega, c, w2)
            k3 = _rhs(model, t + h / 2, y + h / 2 * k2, P, Omega, c, w2)
            k4 = _rhs(model, t + h, y + h * k3, P, Omega, c, w2)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t0 + (k + 1) * h
            if not np.all(np.isfinite(y)):
                raise DivergenceError(f"non-finite state after {k + 1} steps")
            if store or k == n - 1:
                ts.append(t.copy())
                qs.append(y[:2].copy())
                vs.append(y[2:].copy())
    if not store:
        ts, qs, vs = [ts[0], ts[-1]], [qs[0], qs[-1]], [vs[0], vs[-1]]
    return TimeSeries(np.array(ts), np.stack(qs, axis=1), np.stack(vs, axis=1))


def _forcing_of(sol: hb.HarmonicSolution, P):
    if P is not None:
        return np.asarray(P, dtype=float)
    if isinstance(sol.forcing, ExcitationLayout):
        raise TypeError("pass the modal force vector P for layout-forced solutions")
    if sol.forcing is not None:
        return np.asarray(sol.forcing, dtype=float)
    return np.zeros(2)


def periodicity_residuals(model: ModalModel, solutions, forcings=None,
                          steps_per_period: int = STEPS_PER_PERIOD) -> np.ndarray:
    """Batch version of :func:`periodicity_residual` over a list of solutions."""
    sols = list(solutions)
    if not sols:
        return np.zeros(0)
    if forcings is None:
        forcings = [None] * len(sols)
    y0 = np.stack([s.initial_state() for s in sols], axis=1)
    W = np.array([s.Omega for s in sols])
    P = np.stack([_forcing_of(s, f) for s, f in zip(sols, forcings)], axis=1)
    T = 2 * np.pi / W
    ts = integrate(model, y0, (np.zeros_like(T), T), T / steps_per_period, P, W, store=False)
    yT = ts.state[:, -1]
    scale = np.vstack([np.ones((2, len(sols))), np.tile(1.0 / W, (2, 1))])
    diff = np.linalg.norm((yT - y0) * scale, axis=0)
    return diff / np.linalg.norm(y0 * scale, axis=0)


def periodicity_residual(model: ModalModel, sol: hb.HarmonicSolution, P=None,
                         steps_per_period: int = STEPS_PER_PERIOD) -> float:
    """Relative return error after one period from the HB initial state.

    ``|y(T) - y(0)| / |y(0)|`` with velocities divided by ``Omega`` so both
    halves of the state carry displacement units. ``P`` defaults to the
    solution's own modal forcing (zero for backbone points).
    """
    return float(periodicity_residuals(model, [sol], [P], steps_per_period)[0])


def one_period(model: ModalModel, sol: hb.HarmonicSolution, P=None,
               steps_per_period: int = STEPS_PER_PERIOD) -> TimeSeries:
    """Trajectory over exactly one period from the HB initial state."""
    T = sol.period
    return integrate(model, sol.initial_state(), (0.0, T), T / steps_per_period,
                     _forcing_of(sol, P), sol.Omega)


def measured_energies(model: ModalModel, series: TimeSeries, P, Omega):
    """Trapezoid evaluation of the per-mode damping and forcing energies.

    ``series`` must span exactly one period. Returns
    ``(E_D1, E_D2, E_P1, E_P2)``.
    """
    t = np.asarray(series.t)
    v = np.asarray(series.qdot)
    c = model.damping_coefficients[:, None]
    P = np.asarray(P, dtype=float)[:, None]
    E_D = trapezoid(c * v**2, t, axis=1)
    E_P = trapezoid(P * np.cos(Omega * t)[None, :] * v, t, axis=1)
    return E_D[0], E_D[1], E_P[0], E_P[1]


def energy_drift(model: ModalModel, series: TimeSeries) -> float:
    """Largest relative deviation of the total energy from its initial value."""
    E = total_energy(model, series.q, series.qdot)
    return float(np.max(np.abs(E - E[0])) / abs(E[0]))


def global_energy_balance(model: ModalModel, sol: hb.HarmonicSolution, P) -> float:
    """Relative mismatch ``|sum E_D - sum E_P| / max(sum E_D, sum E_P)`` from the HB coefficients.

    Returns 0 when both sides vanish (a conservative, unforced solution).
    """
    E_D, E_P = hb.energy_per_period(model, sol, P)
    d, p = float(np.sum(E_D)), float(np.sum(E_P))
    den = max(abs(d), abs(p))
    return 0.0 if den == 0 else abs(d - p) / den


def verify_points(model: ModalModel, solutions, forcings=None,
                  steps_per_period: int = STEPS_PER_PERIOD) -> dict:
    """Oracle checks of a batch of periodic solutions.

    Returns arrays ``periodicity`` and ``energy_balance``. The balance is the
    HB global damping/forcing mismatch for forced points; for unforced points
    of a conservative model it is the relative change of total energy over
    one integrated period.
    """
    sols = list(solutions)
    if forcings is None:
        forcings = [None] * len(sols)
    P = np.stack([_forcing_of(s, f) for s, f in zip(sols, forcings)], axis=1)
    y0 = np.stack([s.initial_state() for s in sols], axis=1)
    W = np.array([s.Omega for s in sols])
    T = 2 * np.pi / W
    ts = integrate(model, y0, (np.zeros_like(T), T), T / steps_per_period, P, W, store=False)
    yT = ts.state[:, -1]
    scale = np.vstack([np.ones((2, len(sols))), np.tile(1.0 / W, (2, 1))])
    per = np.linalg.norm((yT - y0) * scale, axis=0) / np.linalg.norm(y0 * scale, axis=0)
    bal = np.empty(len(sols))
    E0 = total_energy(model, y0[:2], y0[2:])
    E1 = total_energy(model, yT[:2], yT[2:])
    for k, s in enumerate(sols):
        if np.any(P[:, k]) or np.any(model.zeta):
            bal[k] = global_energy_balance(model, s, P[:, k])
        else:
            bal[k] = abs(E1[k] - E0[k]) / abs(E0[k])
    return {"periodicity": per, "energy_balance": bal}
