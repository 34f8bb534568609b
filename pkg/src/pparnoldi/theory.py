"""Convergence diagnostics for polynomial preconditioned Arnoldi.

These are symmetric-case tools: the containment gap between subspaces, the
interval maps of desired and unwanted eigenvalues under a polynomial, the
resulting Chebyshev rate, a gap ratio, and a filter-bound estimate.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .gmres_poly import PolyPrecond, build_gmres_poly, eval_poly
from .operators import make_diagonal


class TheoryError(ValueError):
    pass


class ShiftCollapseWarning(UserWarning):
    pass


def containment_gap(U, V) -> float:
    """Sine of the largest canonical angle from span(U) into span(V).

    Both bases are orthonormalized first.  Returns exactly 1 when V has lower
    dimension than U.
    """
    U = np.atleast_2d(np.asarray(U))
    V = np.atleast_2d(np.asarray(V))
    if U.shape[0] == 1 and U.shape[1] > 1:
        U = U.T
    if V.shape[0] == 1 and V.shape[1] > 1:
        V = V.T
    if U.shape[0] != V.shape[0]:
        raise TheoryError("bases must have the same number of rows")
    Qu = sla.orth(U)
    Qv = sla.orth(V)
    if Qv.shape[1] < Qu.shape[1]:
        return 1.0
    R = Qu - Qv @ (Qv.conj().T @ Qu)
    s = np.linalg.norm(R, 2)
    return float(min(max(s, 0.0), 1.0))


@dataclass(frozen=True)
class RateReport:
    degree: int | None
    omega_g: tuple[float, float]
    omega_b: tuple[float, float]
    K: float
    rho: float
    rho_per_degree: float | None
    overlap: bool

    def as_row(self) -> dict:
        label = "standard" if self.degree is None else self.degree
        return {
            "d": label,
            "omega_g_min": f"{self.omega_g[0]:.4f}",
            "omega_g_max": f"{self.omega_g[1]:.4f}",
            "omega_b_min": f"{self.omega_b[0]:.4f}",
            "omega_b_max": f"{self.omega_b[1]:.4f}",
            "rho": f"{self.rho:.4f}",
            "rho_per_degree": "" if self.rho_per_degree is None else f"{self.rho_per_degree:.4f}",
            "overlap": int(self.overlap),
        }


TABLE1_COLUMNS = ("d", "omega_g_min", "omega_g_max", "omega_b_min", "omega_b_max",
                  "rho", "rho_per_degree", "overlap")


def _real_images(pi, values) -> np.ndarray:
    values = np.asarray(values)
    if pi is None:
        img = values.astype(complex)
    elif callable(pi):
        img = np.asarray(pi(values), dtype=complex)
    else:
        raise TheoryError("pi must be a PolyPrecond, a callable or None")
    scale = max(1.0, float(np.max(np.abs(img))))
    if np.any(np.abs(img.imag) > 1e-10 * scale):
        raise TheoryError("polynomial images are complex; this diagnostic is symmetric-only")
    return img.real


def rho_from_K(K: float) -> float:
    """``(sqrt K - 1)/(sqrt K + 1)``."""
    if K < 1:
        raise TheoryError("K must be >= 1")
    if not np.isfinite(K):
        return 1.0
    s = np.sqrt(K)
    return float((s - 1.0) / (s + 1.0))


def chebyshev_rate(pi, desired, unwanted, degree: int | None = None) -> RateReport:
    """Interval images, K and the asymptotic rate rho.

    ``pi`` may be ``None`` for the identity map.  The desired eigenvalue whose
    image lies closest to the unwanted interval determines K; if that image
    falls inside the interval the rate is set to 1.
    """
    desired = np.asarray(desired)
    unwanted = np.asarray(unwanted)
    if desired.size == 0 or unwanted.size == 0:
        raise TheoryError("desired and unwanted lists must be nonempty")
    if degree is None and isinstance(pi, PolyPrecond):
        degree = pi.effective_degree
    g = _real_images(pi, desired)
    b = _real_images(pi, unwanted)
    lo, hi = float(b.min()), float(b.max())
    dist = np.where(g < lo, lo - g, np.where(g > hi, g - hi, 0.0))
    star = g[int(np.argmin(dist))]
    omega_g = (float(g.min()), float(g.max()))
    overlap = bool(np.min(dist) == 0.0)
    if overlap:
        K, rho = np.inf, 1.0
    else:
        K = max(abs(star - lo), abs(star - hi)) / min(abs(star - lo), abs(star - hi))
        rho = rho_from_K(K)
    per = None
    if degree is not None and degree >= 1:
        per = float(rho ** (1.0 / degree))
    return RateReport(degree, omega_g, (lo, hi), float(K), rho, per, overlap)


def gap_ratio(desired_idx: int, buffer_idx: int, spectrum, poly=None) -> float:
    """``(f(b) - f(l)) / (f(u) - f(b))`` over a sorted real spectrum.

    ``l`` is the last desired index and ``b`` the buffer edge (1-based, in
    increasing order).  ``f`` is the identity or the supplied polynomial.  The
    unwanted extreme ``f(u)`` is the image beyond the buffer that lies
    farthest on the side away from the desired values.
    """
    lam = np.sort(np.asarray(spectrum, dtype=float))
    n = lam.size
    if not 1 <= desired_idx < buffer_idx < n:
        raise TheoryError("need 1 <= desired_idx < buffer_idx < len(spectrum)")
    f = lam if poly is None else _real_images(poly, lam)
    fl, fb = f[desired_idx - 1], f[buffer_idx - 1]
    rest = f[buffer_idx:]
    fu = rest.max() if fb >= fl else rest.min()
    den = fu - fb
    if den == 0:
        raise TheoryError("zero denominator in gap ratio")
    return float((fb - fl) / den)


def gap_ratio_extreme_index(buffer_idx: int, spectrum, poly) -> int:
    """1-based index of the unwanted value used as the extreme by ``gap_ratio``."""
    lam = np.sort(np.asarray(spectrum, dtype=float))
    f = lam if poly is None else _real_images(poly, lam)
    rest = f[buffer_idx:]
    pick = np.argmax(rest) if f[buffer_idx - 1] >= f[0] else np.argmin(rest)
    return int(buffer_idx + pick + 1)


def _barycentric_weights(x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _interp(x, w, f, z):
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    diff = z[:, None] - x[None, :]
    exact = np.isclose(diff, 0.0, atol=0.0, rtol=0.0)
    hit = exact.any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = w[None, :] / diff
        out = (t @ f) / t.sum(axis=1)
    if hit.any():
        out[hit] = f[np.argmax(exact[hit], axis=1)]
    return out


def filter_bound_diagnostic(pi, shifts, desired, unwanted, grid: int = 1000) -> float:
    """``max |1 - alpha(z) psi(z)|`` over the unwanted-image interval.

    ``alpha(z) = prod (z - pi(lambda_j))`` over desired eigenvalues and
    ``psi`` interpolates ``1/alpha`` at the shifts.  Duplicate shifts are
    merged with a warning.
    """
    g = np.asarray(pi(np.asarray(desired)) if pi is not None else desired, dtype=complex)
    b = np.asarray(pi(np.asarray(unwanted)) if pi is not None else unwanted, dtype=complex)
    s = np.asarray(shifts, dtype=complex).ravel()
    if s.size == 0:
        raise TheoryError("need at least one shift")
    uniq = []
    for z in s:
        if not any(abs(z - u) <= 1e-12 * max(1.0, abs(u)) for u in uniq):
            uniq.append(z)
    if len(uniq) < s.size:
        warnings.warn(f"{s.size - len(uniq)} coincident shifts merged", ShiftCollapseWarning)
    x = np.array(uniq)
    if np.any(np.min(np.abs(x[:, None] - g[None, :]), axis=1) == 0):
        raise TheoryError("shifts must differ from the desired images")

    def alpha(z):
        z = np.asarray(z, dtype=complex)
        return np.prod(z[..., None] - g, axis=-1)

    w = _barycentric_weights(x)
    fvals = 1.0 / alpha(x)
    lo, hi = float(b.real.min()), float(b.real.max())
    z = np.linspace(lo, hi, grid)
    vals = np.abs(1.0 - alpha(z) * _interp(x, w, fvals, z))
    return float(np.max(vals))


def figure1_spectrum() -> np.ndarray:
    """20 log-spaced values in [1e-3, 0.9] followed by 80 uniform values in [1, 2]."""
    return np.concatenate([np.logspace(-3, np.log10(0.9), 20), np.linspace(1.0, 2.0, 80)])


TABLE1_DEGREES = (1, 2, 3, 4, 5, 6, 7, 8, 16, 24)


def table1_rows(degrees=TABLE1_DEGREES, nev: int = 5, b=None) -> list[RateReport]:
    """Rates for the identity map and GMRES polynomials of each degree.

    The GMRES start vector defaults to the normalized all-ones vector.
    """
    lam = figure1_spectrum()
    desired, unwanted = lam[:nev], lam[nev:]
    b = np.ones(lam.size) if b is None else np.asarray(b, dtype=float)
    rows = [chebyshev_rate(None, desired, unwanted, degree=None)]
    for d in degrees:
        p = build_gmres_poly(make_diagonal(lam), b, d)
        rows.append(chebyshev_rate(p, desired, unwanted, degree=d))
    return rows


def table1_report(path=None, **kwargs) -> str:
    """Rate table as CSV text; also written to ``path`` when given."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE1_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in table1_rows(**kwargs):
        w.writerow(r.as_row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def spectrum_map(poly: PolyPrecond, eigenvalues) -> np.ndarray:
    """Rows ``(index, Re lambda, Im lambda, Re pi, Im pi)`` for a known spectrum."""
    lam = np.asarray(eigenvalues, dtype=complex)
    img = np.asarray(eval_poly(poly, lam), dtype=complex)
    idx = np.arange(1, lam.size + 1)
    return np.column_stack([idx, lam.real, lam.imag, img.real, img.imag])
