"""Optional figures for CLI results (matplotlib, Agg backend).

Figures are written next to the data files and never replace them.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def convergence(report: dict, path) -> None:
    """Log-log error against mesh for a convergence report."""
    meshes = np.asarray(report["meshes"], float)
    errors = np.asarray(report["errors"], float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(meshes, np.maximum(errors, 1e-300), "o-", label="error")
    if errors[0] > 0 and math.isfinite(report.get("empiricalOrder", float("nan"))):
        ref = errors[0] * (meshes / meshes[0]) ** report["empiricalOrder"]
        ax.loglog(meshes, ref, "--", color="grey", label=f"slope {report['empiricalOrder']:.3g}")
    ax.invert_xaxis()
    ax.set_xlabel("mesh")
    ax.set_ylabel("error")
    ax.set_title(report.get("name", ""))
    ax.legend()
    _save(fig, path)


def saw_roots(rows: list[dict], mu: float, path) -> None:
    """``C(k)^(1/k)`` against ``k`` with the connective constant drawn in."""
    k = [r["k"] for r in rows]
    root = [r["root"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(k, root, "o-", ms=3, label="C(k)^(1/k)")
    ax.axhline(mu, color="grey", ls="--", label="mu")
    ax.set_xlabel("k")
    ax.legend()
    _save(fig, path)


def field(points: np.ndarray, values: np.ndarray, path, title: str = "") -> None:
    """Arrows of a complex mid-edge field at its mid-edge positions."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.quiver(points.real, points.imag, values.real, values.imag, angles="xy")
    ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)
