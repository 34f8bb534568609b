"""GMRES residual polynomials in factored form.

A polynomial is stored by its roots, ``p(z) = prod_i (1 - z/theta_i)``, so
``p(0) = 1`` holds by construction.  Roots are kept in modified Leja order
with complex conjugates adjacent, which lets ``apply_poly`` run in real
arithmetic with one fused quadratic factor per conjugate pair.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .arnoldi import ArnoldiState, _clean_real, arnoldi_extend, harmonic_ritz_values, norm
from .operators import LinearOperator, as_operator, make_block2

LOG_FLOOR = 1e-300
POF_THRESHOLD_LOG10 = 4.0
POF_STEP_LOG10 = 14.0


class PolyConstructionWarning(UserWarning):
    pass


def _pair_of(roots: np.ndarray, i: int, candidates) -> int:
    target = np.conj(roots[i])
    cands = list(candidates)
    return cands[int(np.argmin(np.abs(roots[cands] - target)))]


def _factors(roots: np.ndarray) -> list[tuple[int, int]]:
    """Split a conjugate-adjacent root list into (start, length) factor units."""
    units = []
    i = 0
    while i < roots.size:
        if roots[i].imag != 0.0 and i + 1 < roots.size and np.isclose(
                roots[i + 1], np.conj(roots[i]), rtol=1e-12, atol=0.0):
            units.append((i, 2))
            i += 2
        else:
            if roots[i].imag != 0.0:
                raise ValueError(f"complex root {roots[i]} is not followed by its conjugate")
            units.append((i, 1))
            i += 1
    return units


@dataclass(frozen=True)
class PolyPrecond:
    """Factored polynomial ``prod (1 - z/theta_i)`` with Leja-ordered roots.

    ``base_roots`` are the roots before any stability copies were added and
    ``added`` counts the extra copies placed for each base root.
    """

    roots: np.ndarray
    base_roots: np.ndarray
    added: np.ndarray = None
    provenance: str = "single"
    construction_mvps: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        roots = np.asarray(self.roots, dtype=complex)
        if roots.size == 0:
            raise ValueError("polynomial needs at least one root")
        if np.any(roots == 0):
            raise ValueError("roots must be nonzero")
        object.__setattr__(self, "roots", roots)
        object.__setattr__(self, "base_roots", np.asarray(self.base_roots, dtype=complex))
        if self.added is None:
            object.__setattr__(self, "added", np.zeros(self.base_roots.size, dtype=int))
        object.__setattr__(self, "_units", _factors(roots))

    @property
    def base_degree(self) -> int:
        return int(self.base_roots.size)

    @property
    def effective_degree(self) -> int:
        return int(self.roots.size)

    degree = effective_degree

    def __call__(self, z):
        return eval_poly(self, z)


def leja_order(roots) -> np.ndarray:
    """Modified Leja ordering with logarithmic products.

    The first root has maximal modulus; each later root maximizes the sum of
    log-distances to the roots already chosen.  A complex root is immediately
    followed by its conjugate.  Ties go to the smaller input index.
    """
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        raise ValueError("no roots to order")
    if np.any(roots == 0):
        raise ValueError("roots must be nonzero")
    n = roots.size
    remaining = np.ones(n, dtype=bool)
    score = np.zeros(n)
    order: list[int] = []

    def take(i):
        order.append(i)
        remaining[i] = False
        score[:] += np.log(np.maximum(np.abs(roots - roots[i]), LOG_FLOOR))

    i = int(np.argmax(np.abs(roots)))
    while True:
        take(i)
        if roots[i].imag != 0.0 and remaining.any():
            j = _pair_of(roots, i, np.flatnonzero(remaining))
            take(j)
        if not remaining.any():
            break
        cand = np.where(remaining, score, -np.inf)
        i = int(np.argmax(cand))
    return roots[order]


def eval_poly(p: PolyPrecond, z):
    """Evaluate the polynomial at scalar or array ``z`` (product in stored order)."""
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    for theta in p.roots:
        out = out * (1.0 - z / theta)
    if out.ndim == 0:
        return complex(out)
    return out


def apply_poly(p: PolyPrecond, a: LinearOperator, v: np.ndarray) -> np.ndarray:
    """Compute ``p(A) v`` factor by factor in real arithmetic.

    A real root costs one mvp and one vector update; a conjugate pair is
    applied as ``v - 2 Re(1/theta) A v + |theta|^-2 A^2 v`` (two mvps).
    """
    counter = a.counter
    v = np.array(v, dtype=np.float64, copy=True)
    roots = p.roots
    for start, length in p._units:
        theta = roots[start]
        if length == 1:
            w = a.apply(v)
            v -= w / theta.real
            counter.add_vops(1)
        else:
            inv = 1.0 / theta
            w = a.apply(v)
            u = a.apply(w)
            v += (-2.0 * inv.real) * w + (abs(inv) ** 2) * u
            counter.add_vops(2)
    return v


def poly_operator(p: PolyPrecond, a) -> LinearOperator:
    """Composite operator ``v -> p(A) v`` sharing A's counter."""
    a = as_operator(a)
    spec = None
    if a.spectrum is not None:
        from .operators import SpectrumSpec
        spec = SpectrumSpec(eval_poly(p, a.spectrum.eigenvalues), a.dim)
    op = LinearOperator(a.dim, lambda v: apply_poly(p, a, v), "poly-preconditioned",
                        counter=a.counter, nnzr=a.nnzr, spectrum=spec, base=a)
    op.poly = p
    return op


def build_gmres_poly(a, b, d: int, *, provenance: str = "single") -> PolyPrecond:
    """GMRES(d) residual polynomial for ``A`` and start ``b``.

    Runs d Arnoldi steps (d mvps) and takes the harmonic Ritz values as
    roots.  If the Krylov space becomes invariant before step d, the exact
    lower-degree polynomial is returned with a warning.
    """
    if d < 1:
        raise ValueError("degree must be at least 1")
    a = as_operator(a)
    start = a.counter.mvps
    state = ArnoldiState.start(b, d, a.counter)
    arnoldi_extend(state, a, d, on_breakdown="stop")
    if state.breakdown is not None:
        j = state.breakdown
        if j < d:
            warnings.warn(f"Krylov space became invariant at dimension {j}; "
                          f"returning the exact degree-{j} polynomial", PolyConstructionWarning)
        roots = _clean_real(np.linalg.eigvals(state.square(j)))
    else:
        roots = harmonic_ritz_values(state)
    roots = leja_order(roots)
    return PolyPrecond(roots=roots, base_roots=roots, provenance=provenance,
                       construction_mvps=a.counter.mvps - start)


def build_two_vector_poly(a, b1, b2, d: int) -> PolyPrecond:
    """One polynomial from two starting vectors via GMRES on diag(A, A)."""
    a = as_operator(a)
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    n1, n2 = norm(b1, a.counter), norm(b2, a.counter)
    if n1 == 0 or n2 == 0:
        raise ValueError("starting vectors must be nonzero")
    bhat = np.concatenate([b1 / n1, b2 / n2]) / np.sqrt(2.0)
    a.counter.add_vops(2)
    p = build_gmres_poly(make_block2(a), bhat, d, provenance="two-vector")
    return p


def damped_start(a, b, alpha: float = 0.0, power: int = 1) -> np.ndarray:
    """Normalized ``A^power b + alpha b``; costs ``power`` mvps."""
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    a = as_operator(a)
    b = np.asarray(b, dtype=np.float64)
    w = b
    for _ in range(power):
        w = a.apply(w)
    if alpha:
        w = w + alpha * b
        a.counter.add_vops(1)
    nrm = norm(w, a.counter)
    a.counter.add_vops(1)
    return w / nrm


@dataclass(frozen=True)
class PofReport:
    pof: np.ndarray
    log10_pof: np.ndarray
    copies: np.ndarray

    @property
    def max_pof(self) -> float:
        return float(np.max(self.pof)) if self.pof.size else 1.0

    @property
    def max_log10_pof(self) -> float:
        return float(np.max(self.log10_pof)) if self.log10_pof.size else 0.0


def added_copies(log10_pof: float) -> int:
    if not log10_pof > POF_THRESHOLD_LOG10:
        return 0
    return int(math.ceil((log10_pof - POF_THRESHOLD_LOG10) / POF_STEP_LOG10))


def compute_pof(p: PolyPrecond) -> PofReport:
    """``pof(j) = prod_{i != j} |1 - theta_j/theta_i|`` over the base roots.

    Summed in log space so high degrees neither overflow nor underflow.
    """
    th = p.base_roots
    with np.errstate(divide="ignore"):
        logs = np.log10(np.abs(1.0 - th[:, None] / th[None, :]))
    np.fill_diagonal(logs, 0.0)
    lp = logs.sum(axis=1)
    pof = np.power(10.0, np.minimum(lp, 300.0))
    copies = np.array([added_copies(x) for x in lp], dtype=int)
    return PofReport(pof=pof, log10_pof=lp, copies=copies)


def add_stability_roots(p: PolyPrecond, report: PofReport | None = None,
                        max_copies: int | None = None) -> PolyPrecond:
    """Add extra copies of roots whose pof exceeds 1e4.

    A root needs ``ceil((log10 pof - 4)/14)`` extra copies.  The first copy
    goes to the end of the list; further copies are spread evenly between the
    root's own position and the end.  Conjugate pairs move as one unit.
    ``max_copies`` caps the copies per root (used to study under-correction).
    """
    report = report if report is not None else compute_pof(p)
    if max_copies is not None:
        report = replace(report, copies=np.minimum(report.copies, max_copies))
    if not report.copies.any():
        return p
    base = p.base_roots
    units = [tuple(base[s:s + ln]) for s, ln in _factors(base)]
    unit_copies = [int(report.copies[s]) for s, _ in _factors(base)]
    current = list(units)
    for unit, c in zip(units, unit_copies):
        if c == 0:
            continue
        j = next(i for i, u in enumerate(current) if u is unit)
        L = len(current)
        interior = [int(round(j + r * (L - j) / c)) for r in range(1, c)]
        current.append(unit)
        for pos in sorted(interior, reverse=True):
            current.insert(max(pos, j + 1), unit)
    roots = np.array([z for u in current for z in u], dtype=complex)
    return replace(p, roots=roots, added=report.copies.copy(),
                   meta={**p.meta, "max_pof": report.max_pof})


def dump_poly_csv(p: PolyPrecond, path, report: PofReport | None = None) -> None:
    """One row per root: index, Re, Im, multiplicity, pof."""
    report = report if report is not None else compute_pof(p)
    base = p.base_roots
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im", "multiplicity", "pof"])
        for i, theta in enumerate(base):
            w.writerow([i, repr(float(theta.real)), repr(float(theta.imag)),
                        1 + int(p.added[i]), f"{report.pof[i]:.6e}"])
