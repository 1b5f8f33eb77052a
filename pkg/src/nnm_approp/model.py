"""Two-mode nonlinear modal model, mode shapes and excitation layouts.

The equations of motion in modal coordinates are

    q'' + Xi q' + Lambda q + N(q) = p(t)

with ``Lambda = diag(omega_n**2)``, ``Xi = diag(2 zeta omega_n)`` and ``N``
a sum of quadratic and cubic terms deriving from a scalar potential.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid model, mode-shape or excitation definitions."""


def _frozen_array(values, shape, name):
    try:
        arr = np.array(values, dtype=float).reshape(shape)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must hold {shape[0]} numbers, got {values!r}") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite, got {arr.tolist()}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModalModel:
    """Reduced-order model of two nonlinearly coupled modes.

    Parameters
    ----------
    omega_n : array_like, shape (2,)
        Linear natural frequencies (rad/s).
    zeta : array_like, shape (2,)
        Modal damping ratios.
    alpha : array_like, shape (4,)
        Quadratic coefficients ``alpha_1 .. alpha_4``.
    gamma : array_like, shape (5,)
        Cubic coefficients ``gamma_1 .. gamma_5``.
    name : str, optional
        Label carried into run manifests.
    """

    omega_n: np.ndarray
    zeta: np.ndarray
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(4))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(5))
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "omega_n", _frozen_array(self.omega_n, (2,), "omega_n"))
        object.__setattr__(self, "zeta", _frozen_array(self.zeta, (2,), "zeta"))
        object.__setattr__(self, "alpha", _frozen_array(self.alpha, (4,), "alpha"))
        object.__setattr__(self, "gamma", _frozen_array(self.gamma, (5,), "gamma"))
        if np.any(self.omega_n <= 0):
            raise ConfigurationError("omega_n must be strictly positive")
        if np.any(self.zeta < 0):
            raise ConfigurationError("zeta must be non-negative")

    @property
    def stiffness(self) -> np.ndarray:
        """Linear modal stiffness matrix ``diag(omega_n**2)``."""
        return np.diag(self.omega_n**2)

    @property
    def damping(self) -> np.ndarray:
        """Modal damping matrix ``diag(2 zeta omega_n)``."""
        return np.diag(self.damping_coefficients)

    @property
    def damping_coefficients(self) -> np.ndarray:
        return 2.0 * self.zeta * self.omega_n

    def with_params(self, **changes) -> "ModalModel":
        """Return a copy with some fields replaced."""
        return replace(self, **changes)

    def scaled_damping(self, factor: float) -> "ModalModel":
        return replace(self, zeta=self.zeta * factor, name=f"{self.name}*zeta{factor:g}")

    def conservative(self) -> "ModalModel":
        """Undamped copy of the model."""
        return replace(self, zeta=np.zeros(2))

    def without_quadratic(self) -> "ModalModel":
        return replace(self, alpha=np.zeros(4))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "omega_n": self.omega_n.tolist(),
            "zeta": self.zeta.tolist(),
            "alpha": self.alpha.tolist(),
            "gamma": self.gamma.tolist(),
        }

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def crossbeam_table1() -> ModalModel:
    """Clamped-clamped cross beam with two closely spaced modes."""
    return ModalModel(
        omega_n=[101.61, 104.58],
        zeta=[7.6e-3, 2.6e-3],
        alpha=[56.7, -52.4, -14.9, 42.7],
        gamma=[128e6, 32e6, 25e6, 2e6, 0.8e6],
        name="crossbeam-table1",
    )


BUILTIN_MODELS = {"crossbeam-table1": crossbeam_table1}


def builtin_model(name: str) -> ModalModel:
    try:
        return BUILTIN_MODELS[name]()
    except KeyError:
        known = ", ".join(sorted(BUILTIN_MODELS))
        raise ConfigurationError(f"unknown model {name!r} (known: {known})") from None


def nonlinear_force(model: ModalModel, q) -> np.ndarray:
    """Internal nonlinear force vector ``N(q)``.

    ``q`` may carry trailing dimensions (e.g. time samples); the first axis
    indexes the two modes.
    """
    q = np.asarray(q, dtype=float)
    q1, q2 = q[0], q[1]
    a1, a2, a3, a4 = model.alpha
    g1, g2, g3, g4, g5 = model.gamma
    # shared products keep this cheap inside the time integrator
    q11, q12, q22 = q1 * q1, q1 * q2, q2 * q2
    n1 = a1 * q11 + 2 * a2 * q12 + a3 * q22 + q1 * (g1 * q11 + g3 * q22) + q2 * (3 * g2 * q11 + g4 * q22)
    n2 = a2 * q11 + 2 * a3 * q12 + a4 * q22 + q1 * (g2 * q11 + 3 * g4 * q22) + q2 * (g3 * q11 + g5 * q22)
    return np.stack([n1, n2])


def potential_energy(model: ModalModel, q) -> np.ndarray:
    """Nonlinear part of the potential, whose gradient is ``nonlinear_force``."""
    q = np.asarray(q, dtype=float)
    q1, q2 = q[0], q[1]
    a1, a2, a3, a4 = model.alpha
    g1, g2, g3, g4, g5 = model.gamma
    return (
        a1 * q1**3 / 3 + a2 * q1**2 * q2 + a3 * q1 * q2**2 + a4 * q2**3 / 3
        + g1 * q1**4 / 4 + g2 * q1**3 * q2 + g3 * q1**2 * q2**2 / 2
        + g4 * q1 * q2**3 + g5 * q2**4 / 4
    )


def total_energy(model: ModalModel, q, qdot) -> np.ndarray:
    """Kinetic plus linear and nonlinear potential energy."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    w2 = (model.omega_n**2).reshape((2,) + (1,) * (q.ndim - 1))
    return 0.5 * np.sum(qdot**2, axis=0) + 0.5 * np.sum(w2 * q**2, axis=0) + potential_energy(model, q)


def eom_residual(model: ModalModel, q, qdot, qddot, p_modal) -> np.ndarray:
    """``q'' + Xi q' + Lambda q + N(q) - p``; zero on solutions of the EOM."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    qddot = np.asarray(qddot, dtype=float)
    shape = (2,) + (1,) * (q.ndim - 1)
    c = model.damping_coefficients.reshape(shape)
    w2 = (model.omega_n**2).reshape(shape)
    return qddot + c * qdot + w2 * q + nonlinear_force(model, q) - np.asarray(p_modal, dtype=float)


@dataclass(frozen=True, eq=False)
class ModeShapeMatrix:
    """Mass-normalised mode-shape samples at candidate excitation points.

    ``phi[j, i]`` is the mode-``i`` shape at location ``j``.
    """

    locations: tuple
    phi: np.ndarray
    label: str = ""

    def __post_init__(self):
        locations = tuple(str(name) for name in self.locations)
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[1] != 2:
            raise ConfigurationError(f"mode-shape table must have 2 columns, got shape {phi.shape}")
        if len(locations) == 0:
            raise ConfigurationError("mode-shape table needs at least one location")
        if len(locations) != phi.shape[0]:
            raise ConfigurationError(
                f"{len(locations)} location names for {phi.shape[0]} mode-shape rows"
            )
        if len(set(locations)) != len(locations):
            raise ConfigurationError("location names must be unique")
        if not np.all(np.isfinite(phi)):
            raise ConfigurationError("mode-shape entries must be finite")
        zero_rows = [locations[j] for j in range(len(locations)) if not np.any(phi[j])]
        if zero_rows:
            raise ConfigurationError(f"all-zero mode-shape rows: {zero_rows}")
        phi.setflags(write=False)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "phi", phi)

    def __len__(self):
        return len(self.locations)

    def index(self, location) -> int:
        """Row index of a location given by name or integer index."""
        if isinstance(location, (int, np.integer)):
            if not 0 <= location < len(self.locations):
                raise ConfigurationError(
                    f"location index {location} out of range [0, {len(self.locations)})"
                )
            return int(location)
        try:
            return self.locations.index(str(location))
        except ValueError:
            raise ConfigurationError(
                f"unknown location {location!r} (known: {', '.join(self.locations)})"
            ) from None

    def row(self, location) -> np.ndarray:
        return self.phi[self.index(location)]

    def unit_modal_force(self, location) -> np.ndarray:
        """Modal force vector of a unit force at ``location``, normalised to unit length."""
        r = self.row(location)
        return r / np.linalg.norm(r)

    def to_physical(self, q, locations=None) -> np.ndarray:
        """Physical displacement ``x = Phi q`` at the requested locations."""
        rows = self.phi if locations is None else self.phi[[self.index(j) for j in locations]]
        return rows @ np.asarray(q, dtype=float)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "locations": list(self.locations),
            "phi": self.phi.tolist(),
        }


def synthetic_shapes() -> ModeShapeMatrix:
    """SYNTHETIC six-location mode-shape table.

    Not measured or FE-derived data. Rows mix a bending-dominant first mode
    and a torsion-dominant second mode with a slight asymmetry, so that
    mirror-image locations give different modal force ratios.
    ``mode1_isolating`` gives the normalised modal force (0.99998, 0.006).
    """
    names = (
        "mode1_isolating",
        "main_beam_centre",
        "main_beam_offset",
        "small_cross",
        "cross_tip_left",
        "cross_tip_right",
    )
    phi = [
        [1.19998, 0.0072],
        [1.25, -0.09],
        [0.95, -0.34],
        [0.55, 0.23],
        [0.62, 1.05],
        [0.48, -1.12],
    ]
    return ModeShapeMatrix(names, phi, label="SYNTHETIC")


@dataclass(frozen=True, eq=False)
class ExcitationLayout:
    """Harmonic point forces ``F_j cos(Omega t)`` at mode-shape rows."""

    location_indices: tuple
    amplitudes: np.ndarray
    Omega: float

    def __post_init__(self):
        idx = tuple(int(j) for j in self.location_indices)
        amps = np.array(self.amplitudes, dtype=float).reshape(-1)
        if len(idx) != amps.size:
            raise ConfigurationError(
                f"{len(idx)} excitation locations but {amps.size} amplitudes"
            )
        if not self.Omega > 0:
            raise ConfigurationError("excitation frequency must be positive")
        amps.setflags(write=False)
        object.__setattr__(self, "location_indices", idx)
        object.__setattr__(self, "amplitudes", amps)

    def with_amplitudes(self, amplitudes) -> "ExcitationLayout":
        return replace(self, amplitudes=amplitudes)

    def with_frequency(self, Omega) -> "ExcitationLayout":
        return replace(self, Omega=float(Omega))


def participation(shapes: ModeShapeMatrix, location_indices) -> np.ndarray:
    """Matrix ``G`` with ``P = G @ F`` for forces at ``location_indices``."""
    idx = list(location_indices)
    for j in idx:
        shapes.index(j)
    return shapes.phi[idx].T.copy()


def modal_force_vector(shapes: ModeShapeMatrix, layout: ExcitationLayout) -> np.ndarray:
    """Modal forcing amplitudes ``P_i = sum_j F_j Phi(j, i)``."""
    return participation(shapes, layout.location_indices) @ layout.amplitudes
