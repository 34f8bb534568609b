"""Figures written next to the CSV reports.  Uses the non-interactive Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .gmres_poly import eval_poly  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_spectrum_map(poly, eigenvalues, path, nev: int | None = None, k: int | None = None):
    """pi(lambda) over a real spectrum, with the wanted and buffer values marked."""
    lam = np.sort(np.asarray(eigenvalues).real)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        z = np.linspace(lam.min(), lam.max(), 2000)
        ax.plot(z, eval_poly(poly, z).real, color="tab:red", lw=1, label="pi(z)")
        img = eval_poly(poly, lam).real
        ax.plot(lam, img, ".", color="k", ms=2, label="pi(lambda)")
        if nev:
            ax.plot(lam[:nev], img[:nev], "o", mfc="none", color="tab:blue", label="wanted")
        if nev and k and k > nev:
            ax.plot(lam[nev:k], img[nev:k], "s", mfc="none", color="tab:green", label="buffer")
        ax.set_xlabel("lambda")
        ax.set_ylabel("pi(lambda)")
        ax.set_title(f"degree {poly.effective_degree} polynomial")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_convergence(result, path, tol: float | None = None):
    """Largest wanted residual per cycle."""
    hist = result.history
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        cyc = [h.cycle for h in hist]
        worst = [np.nanmax(h.residuals) for h in hist]
        ax.semilogy(cyc, worst, "o-", ms=3)
        if tol:
            ax.axhline(tol, color="gray", ls="--", lw=0.8)
        ax.set_xlabel("cycle")
        ax.set_ylabel("largest checked residual")
        return _save(fig, path)


def plot_maxerr(rows, path):
    """MaxErr against degree, one line per stability mode."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for mode in sorted({r["stability"] for r in rows}):
            sub = [r for r in rows if r["stability"] == mode]
            ax.semilogy([r["degree"] for r in sub], [r["max_err"] for r in sub], "o-",
                        label=f"stability {mode}")
        ax.set_xlabel("degree")
        ax.set_ylabel("MaxErr")
        ax.legend()
        return _save(fig, path)


def plot_degree_sweep(rows, path):
    """mvps (left axis) and cost (right axis) against degree."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        d = [r["degree"] for r in rows]
        ax.plot(d, [r["mvps"] for r in rows], "o", color="tab:blue")
        ax.set_xlabel("degree")
        ax.set_ylabel("mvps", color="tab:blue")
        ax2 = ax.twinx()
        ax2.plot(d, [r["cost"] for r in rows], "*", color="tab:red")
        ax2.set_ylabel("cost", color="tab:red")
        return _save(fig, path)


def plot_table1(reports, path):
    """rho and rho^(1/d) against degree."""
    rows = [r for r in reports if r.degree is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([r.degree for r in rows], [r.rho for r in rows], "o-", label="rho")
        ax.plot([r.degree for r in rows], [r.rho_per_degree for r in rows], "s--",
                label="rho^(1/d)")
        std = [r for r in reports if r.degree is None]
        if std:
            ax.axhline(std[0].rho, color="gray", ls=":", label="standard")
        ax.set_xlabel("degree")
        ax.set_ylabel("rate")
        ax.legend()
        return _save(fig, path)


def render_experiment(spec, results, tm) -> list[Path]:
    out = [plot_convergence(results[0], spec.out_path("convergence.png"), results[0].tol)]
    first = results[0]
    if first.poly is not None and first.inner_poly is None and tm.eigenvalues is not None \
            and np.all(np.isreal(tm.eigenvalues)):
        cfg = spec.config(0)
        out.append(plot_spectrum_map(first.poly, tm.eigenvalues,
                                     spec.out_path("spectrum_map.png"), cfg.nev, cfg.k))
    return out
