"""Nonlinear normal modes and force appropriation for a two-mode modal model."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConfigurationError,
    ExcitationLayout,
    ModalModel,
    ModeShapeMatrix,
    crossbeam_table1,
    synthetic_shapes,
)

__all__ = [
    "ConfigurationError",
    "ExcitationLayout",
    "ModalModel",
    "ModeShapeMatrix",
    "crossbeam_table1",
    "synthetic_shapes",
    "__version__",
]
