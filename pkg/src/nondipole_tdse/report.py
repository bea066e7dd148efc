"""Figure rendering for emitted tables.

Each observable table written by the runner can be rendered to a PNG next to
the CSV; the table kind recorded in the metadata header selects the layout.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .runner import read_table


def render_table(csv_path: str) -> str | None:
    """Render one table to ``<table>.png``; returns the path or None when the
    table kind has no figure."""
    meta, cols = read_table(csv_path)
    kind = meta.get("kind")
    png = os.path.splitext(csv_path)[0] + ".png"
    if kind == "ionization_scan":
        return _render_scan(cols, meta, png)
    if kind == "energy_spectrum":
        return _render_spectrum(cols, png)
    if kind == "angular_distribution":
        return _render_angular(cols, png)
    if kind == "m_population":
        return _render_population(cols, png)
    return None


def _save(fig, png):
    fig.savefig(png, dpi=150)
    plt.close(fig)
    return png


def _render_scan(cols, meta, png):
    x_name = "e0_au" if "e0_au" in cols else "omega_au"
    x, y = cols[x_name], cols["p_ion"]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    for ax in (ax1, ax2):
        ax.plot(x, y, "o-", lw=1.2, label=meta.get("model", ""))
        ax.set_ylabel("ionization probability")
        ax.grid(alpha=0.3)
    ax2.set_yscale("log")
    label = "$E_0$ (a.u.)" if x_name == "e0_au" else r"$\omega$ (a.u.)"
    ax2.set_xlabel(label)
    if meta.get("model"):
        ax1.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, png)


def _render_spectrum(cols, png):
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    e = cols["energy_au"]
    ax1.plot(e, cols["dpde_total"], lw=1.0)
    ax2.semilogy(e, np.maximum(cols["dpde_total"], 1e-300), lw=1.0)
    ax1.set_ylabel("dP/dE (1/a.u.)")
    ax2.set_ylabel("dP/dE (1/a.u.)")
    ax2.set_xlabel("electron energy (a.u.)")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, png)


def _render_angular(cols, png):
    theta = np.unique(cols["theta_rad"])
    phi = np.unique(cols["phi_rad"])
    vals = cols["dpdomega"].reshape(len(theta), len(phi))
    fig = plt.figure(figsize=(10, 4))
    ax1 = fig.add_subplot(1, 2, 1)
    pcm = ax1.pcolormesh(phi, theta, vals, shading="auto", cmap="inferno")
    ax1.set_xlabel(r"$\phi$ (rad)")
    ax1.set_ylabel(r"$\theta$ (rad)")
    fig.colorbar(pcm, ax=ax1, label=r"dP/d$\Omega$")
    # cut in the polarization(z)-propagation(x) plane (phi = 0 and pi)
    i0 = np.argmin(np.abs(phi - 0.0))
    ipi = np.argmin(np.abs(phi - np.pi))
    ang = np.concatenate([theta, 2 * np.pi - theta[::-1]])
    cut = np.concatenate([vals[:, i0], vals[::-1, ipi]])
    ax2 = fig.add_subplot(1, 2, 2, projection="polar")
    ax2.plot(ang, cut, lw=1.0)
    ax2.set_title("x-z plane cut", fontsize=9)
    fig.tight_layout()
    return _save(fig, png)


def _render_population(cols, png):
    fig, ax = plt.subplots(figsize=(6, 4))
    t = cols["time_au"]
    ax.plot(t, cols["p_m_nonzero"], lw=1.0, label=r"$m \neq 0$ population")
    ax.set_xlabel("time (a.u.)")
    ax.set_ylabel("population")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, png)
