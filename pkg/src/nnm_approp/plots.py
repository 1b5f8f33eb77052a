"""Static SVG figures: frequency-amplitude overlays and phase-error maps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "nnm-approp"
_META = {"Date": None, "Creator": "nnm-approp"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def frequency_amplitude(curves, path, title: str = "") -> Path:
    """Overlay of ``(label, f_Hz, U1, U2)`` curves: U1 (left) and U2 (right) panels."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharex=True)
    for label, f, U1, U2 in curves:
        axes[0].plot(f, U1, label=label, lw=1.2)
        axes[1].plot(f, U2, label=label, lw=1.2)
    for ax, name in zip(axes, ("$U_1$", "$U_2$")):
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def phase_map(entries, path, saturation: float, title: str = "") -> Path:
    """Locations placed at their unit modal-force direction, coloured by ``|phi_d|``.

    Saturated or flagged locations are drawn in black.
    """
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    th = np.linspace(0, 2 * np.pi, 361)
    ax.plot(np.cos(th), np.sin(th), color="0.8", lw=0.8)
    ok = [e for e in entries if not e.saturated]
    bad = [e for e in entries if e.saturated]
    if ok:
        xy = np.array([e.modal_direction for e in ok])
        sc = ax.scatter(xy[:, 0], xy[:, 1], c=[abs(e.phase_error) for e in ok], cmap="viridis",
                        vmin=0, vmax=saturation, s=40, zorder=3)
        fig.colorbar(sc, ax=ax, label=r"$|\hat\phi_d|$ (rad)")
    if bad:
        xy = np.array([e.modal_direction for e in bad])
        ax.scatter(xy[:, 0], xy[:, 1], c="k", s=40, zorder=3, label="saturated / flagged")
        ax.legend(fontsize=8, loc="lower left")
    for e in entries:
        ax.annotate(e.location, e.modal_direction, fontsize=7, xytext=(4, 4), textcoords="offset points")
    ax.set_aspect("equal")
    ax.set_xlabel("$P_1$ (unit)")
    ax.set_ylabel("$P_2$ (unit)")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
