"""Optional SVG figures: curve overlays, eigenvalues in the complex plane, bootstrap histogram."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import ConfigError


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise ConfigError("--svg needs matplotlib (pip install 'artifact[plots]')") from None
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "csbench"
    import matplotlib.pyplot as plt
    return plt


def write_svgs(result, out: Path, max_curves: int = 6) -> None:
    plt = _pyplot()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None}

    # curves with the largest oscillation are the most informative
    order = sorted(range(len(result.curves)), key=lambda i: -np.ptp(np.diff(result.curves[i].p_hat)))
    picks = sorted(order[:max_curves])
    fig, axes = plt.subplots(len(picks), 1, figsize=(6, 2 * len(picks)), squeeze=False)
    for ax, i in zip(axes[:, 0], picks):
        curve, fit = result.curves[i], result.fits[i]
        ax.plot(curve.depths, curve.p_hat, color="tab:orange", lw=1, label="data")
        ax.plot(curve.depths, fit.evaluate(curve.depths), color="tab:blue", lw=1, label=fit.model)
        ax.set_ylabel(f"({curve.a},{curve.b})")
    axes[0, 0].legend(loc="upper right", fontsize=7)
    axes[-1, 0].set_xlabel("L")
    fig.tight_layout()
    fig.savefig(out / "curves.svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0, 2 * np.pi, 400)
    ax.plot(np.cos(theta), np.sin(theta), color="0.7", lw=0.8)
    for kept, color in ((False, "tab:gray"), (True, "tab:blue")):
        zs = np.array([e.z for e in result.report.eigenvalues if e.kept == kept])
        if zs.size:
            ax.scatter(zs.real, zs.imag, s=8, color=color, label="kept" if kept else "rejected")
    ideals = {e.assigned_ideal for e in result.report.eigenvalues}
    ax.scatter([u.real for u in ideals], [u.imag for u in ideals], marker="x", color="tab:orange", label="ideal")
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    fig.savefig(out / "eigenvalues.svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3))
    rep = result.report
    ax.hist(rep.samples, bins=40, color="tab:blue", alpha=0.7)
    ax.axvline(rep.fei_low, color="k", ls="--", lw=0.8)
    ax.axvline(rep.fei_high, color="k", ls="--", lw=0.8)
    ax.axvline(rep.degenerate_estimate, color="tab:green", lw=1)
    if rep.oracle_fidelity is not None:
        ax.axvline(rep.oracle_fidelity, color="k", lw=1)
    if rep.baseline_estimate is not None:
        ax.axvline(rep.baseline_estimate, color="tab:red", lw=1)
    ax.set_xlabel("fidelity")
    fig.tight_layout()
    fig.savefig(out / "fidelity_histogram.svg", metadata=meta)
    plt.close(fig)
