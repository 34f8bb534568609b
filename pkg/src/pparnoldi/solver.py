"""Polynomial preconditioned thick-restarted Arnoldi.

``solve`` iterates Arnoldi(m, k) on ``pi(A)`` (or on ``A`` when ``d = 0``),
orders Ritz values of ``pi(A)`` by distance from 1, and tests convergence on
``A`` itself through Rayleigh quotients and true residual norms.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .arnoldi import (ArnoldiState, arnoldi_extend, harmonic_restart_selection, norm,
                      ritz_pairs, thick_restart)
from .cost import CostRecord
from .gmres_poly import (PolyPrecond, add_stability_roots, apply_poly, build_gmres_poly,
                         build_two_vector_poly, compute_pof, damped_start, poly_operator)
from .operators import LinearOperator, as_operator

log = logging.getLogger(__name__)

CORRECT_RTOL = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class SolveConfig:
    m: int = 50
    k: int = 20
    nev: int = 15
    d: int = 0
    rtol: float = 1e-8
    atol: float | None = None
    restart: str = "ritz"
    damping: str = "off"
    damping_alpha: float = 0.0
    damping_power: int = 1
    stability: str = "off"
    stability_cap: int | None = None
    double: tuple[int, int] | None = None
    two_vector: bool = False
    max_cycles: int = 1000
    seed: int = 0
    poly_start: np.ndarray | None = None
    poly_start2: np.ndarray | None = None
    start_vector: np.ndarray | None = None
    reference: np.ndarray | None = None
    full_residuals: bool = False
    midcycle_stride: int = 0
    stagnation_window: int = 0

    def validate(self) -> None:
        if not 0 < self.nev <= self.k < self.m:
            raise ConfigError(f"need 0 < nev <= k < m, got nev={self.nev}, k={self.k}, m={self.m}")
        if self.d < 0:
            raise ConfigError("d must be nonnegative")
        if self.restart not in ("ritz", "harmonic"):
            raise ConfigError(f"unknown restart variant {self.restart!r}")
        if self.damping not in ("off", "auto", "forced"):
            raise ConfigError(f"unknown damping mode {self.damping!r}")
        if self.stability not in ("off", "pof-auto"):
            raise ConfigError(f"unknown stability mode {self.stability!r}")
        if self.double is not None and min(self.double) < 1:
            raise ConfigError("double preconditioning degrees must be >= 1")
        if self.max_cycles < 1:
            raise ConfigError("max_cycles must be >= 1")


@dataclass
class CycleRecord:
    cycle: int
    mvps: int
    dots: int
    residuals: np.ndarray
    n_converged: int


@dataclass
class EigResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    cycles: int
    cost: CostRecord
    tol: float
    ritz_values: np.ndarray
    poly: PolyPrecond | None = None
    inner_poly: PolyPrecond | None = None
    history: list[CycleRecord] = field(default_factory=list)
    breakdown: dict = field(default_factory=dict)
    n_correct: int | None = None
    heuristic: list = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    @property
    def max_err(self) -> float:
        """Smallest over cycles of the largest residual among the wanted pairs."""
        vals = [np.max(h.residuals) for h in self.history if np.all(np.isfinite(h.residuals))]
        return float(min(vals)) if vals else float(np.max(self.residuals))

    @property
    def composite_degree(self) -> int:
        if self.poly is None:
            return 0
        if self.inner_poly is not None:
            return self.poly.effective_degree * self.inner_poly.effective_degree
        return self.poly.effective_degree


def count_correct(mu, converged, reference, rtol: float = CORRECT_RTOL) -> int:
    """Number of reference eigenvalues matched by a converged estimate."""
    ref = np.asarray(reference)
    mu = np.asarray(mu)[np.asarray(converged, dtype=bool)]
    found = 0
    for lam in ref:
        if mu.size and np.min(np.abs(mu - lam)) <= rtol * max(abs(lam), np.finfo(float).tiny):
            found += 1
    return found


def check_ideal_order(mu, nev: int) -> bool:
    """``|mu_1| <= ... <= |mu_nev| < min_{nev < j <= k} |mu_j|``.

    With ``nev == len(mu)`` the buffer is empty and only monotonicity is
    required.
    """
    a = np.abs(np.asarray(mu))
    if not 1 <= nev <= a.size:
        raise ValueError("need 1 <= nev <= k")
    head = a[:nev]
    if np.any(np.diff(head) < 0):
        return False
    if nev == a.size:
        return True
    return bool(head[-1] < np.min(a[nev:]))


def _rngs(seed: int):
    poly_seq, arn_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(poly_seq), np.random.default_rng(arn_seq)


def _random_vector(rng, n):
    return rng.standard_normal(n)


def _rayleigh(a: LinearOperator, y: np.ndarray):
    """Rayleigh quotient and true residual norm of a unit vector."""
    counter = a.counter
    ay = a.apply(y)
    dots = 2 if np.iscomplexobj(y) else 1
    mu = _kernels.dot(y, ay)
    counter.add_dots(dots)
    if not np.iscomplexobj(y):
        mu = mu.real
    r = ay - mu * y
    counter.add_vops(dots)
    res = _kernels.norm2(r)
    counter.add_dots(dots)
    return mu, res


class _Checker:
    """True-residual convergence test against A at cycle boundaries."""

    def __init__(self, a, nev, tol, full):
        self.a, self.nev, self.tol, self.full = a, nev, tol, full

    def __call__(self, ritz, count: int | None = None, full: bool | None = None):
        count = self.nev if count is None else count
        full = self.full if full is None else full
        mu = np.full(count, np.nan, dtype=complex)
        res = np.full(count, np.nan)
        vecs = []
        for j in range(count):
            y = ritz.vector(j, self.a.counter)
            mu[j], res[j] = _rayleigh(self.a, y)
            vecs.append(y)
            if not full and res[j] > self.tol:
                break
        return mu, res, vecs


def _finish_arrays(mu, res, vecs, n, count):
    mu = np.where(np.isnan(mu.real), np.nan, mu)
    if np.all(mu.imag == 0):
        mu = mu.real
    Y = np.zeros((n, count), dtype=complex)
    for j, y in enumerate(vecs):
        Y[:, j] = y
    if not np.any(Y.imag):
        Y = Y.real
    return mu, Y


def _build_poly(a, b, d, cfg, rng, b2=None) -> PolyPrecond:
    if cfg.two_vector:
        b2 = b2 if b2 is not None else _random_vector(rng, a.dim)
        p = build_two_vector_poly(a, b, b2, d)
    else:
        p = build_gmres_poly(a, b, d)
    if cfg.stability == "pof-auto":
        p = add_stability_roots(p, max_copies=cfg.stability_cap)
    return p


def _probe(a, p, cfg, v0, tol):
    """One Arnoldi(m, k) cycle on p(A) plus the Ideal Order test."""
    op = poly_operator(p, a)
    state = ArnoldiState.start(v0, cfg.m, a.counter)
    arnoldi_extend(state, op, cfg.m)
    state.cycle_count = 1
    ritz = ritz_pairs(state, "one")
    kk = min(cfg.k, len(ritz))
    mu, _, _ = _Checker(a, cfg.nev, tol, True)(ritz, kk, True)
    ok = check_ideal_order(mu, min(cfg.nev, kk))
    return ok, state, mu


def damping_search(a, cfg: SolveConfig, v0, tol, rng, b=None):
    """Damping heuristic: undamped, then start ``A b``, then halve d.

    Returns ``(poly, state, log)`` where ``state`` is the passing probe cycle
    (reused as the first solve cycle) or ``None`` when even d = 1 fails.
    """
    a = as_operator(a)
    d = cfg.d
    b = b if b is not None else _random_vector(rng, a.dim)
    trail = []
    p = _build_poly(a, b, d, cfg, rng)
    ok, state, mu = _probe(a, p, cfg, v0, tol)
    trail.append({"d": d, "start": "b", "passed": ok, "mu": mu})
    if ok:
        return p, state, trail
    bd = damped_start(a, b, 0.0, 1)
    while True:
        p = _build_poly(a, bd, d, cfg, rng)
        ok, state, mu = _probe(a, p, cfg, v0, tol)
        trail.append({"d": d, "start": "Ab", "passed": ok, "mu": mu})
        if ok:
            return p, state, trail
        if d == 1:
            return p, None, trail
        d //= 2


def damping_heuristic(a, cfg: SolveConfig) -> PolyPrecond:
    """Choose a polynomial by the damping heuristic (probe costs are counted on A)."""
    a = as_operator(a)
    prng, arng = _rngs(cfg.seed)
    tol = cfg.atol if cfg.atol is not None else cfg.rtol * a.norm_estimate()
    v0 = cfg.start_vector if cfg.start_vector is not None else _random_vector(arng, a.dim)
    p, _, trail = damping_search(a, cfg, v0, tol, prng, cfg.poly_start)
    return replace(p, meta={**p.meta, "heuristic": trail})


def _run_cycles(a, op, state, cfg, tol, order, arng, checker):
    """Restarted Arnoldi cycles until nev pairs converge or a stop rule fires."""
    m, k, nev = state.m, cfg.k, cfg.nev
    history = []
    mvps = {"iteration": 0, "residual": 0}
    best = np.inf
    stall = 0
    while True:
        c0 = a.counter.mvps
        if state.cur_dim < m and not state.exhausted:
            stride = cfg.midcycle_stride
            if stride and order == "one":
                done = False
                while state.cur_dim < m and not state.exhausted and not done:
                    arnoldi_extend(state, op, min(m, state.cur_dim + stride), rng=arng)
                    mvps["iteration"] += a.counter.mvps - c0
                    c0 = a.counter.mvps
                    if state.cur_dim >= nev and state.cur_dim < m:
                        r = ritz_pairs(state, order)
                        _, res, _ = checker(r, full=False)
                        mvps["residual"] += a.counter.mvps - c0
                        c0 = a.counter.mvps
                        done = np.all(res[:nev] <= tol)
            else:
                arnoldi_extend(state, op, m, rng=arng)
            state.cycle_count += 1
        mvps["iteration"] += a.counter.mvps - c0
        ritz = ritz_pairs(state, order)
        c0 = a.counter.mvps
        mu, res, vecs = checker(ritz)
        mvps["residual"] += a.counter.mvps - c0
        conv = res <= tol
        history.append(CycleRecord(state.cycle_count, a.counter.mvps, a.counter.dots,
                                   res.copy(), int(np.sum(conv))))
        log.debug("cycle %d: %d/%d converged, max res %.3e", state.cycle_count,
                  int(np.sum(conv)), nev, np.nanmax(res))
        if np.all(conv) or state.exhausted:
            break
        if state.cycle_count >= cfg.max_cycles:
            break
        if cfg.stagnation_window and np.all(np.isfinite(res)):
            cur = float(np.max(res))
            if cur < 0.99 * best:
                best, stall = cur, 0
            else:
                stall += 1
                if stall >= cfg.stagnation_window:
                    break
        if cfg.restart == "harmonic":
            keep = harmonic_restart_selection(state, order)
        else:
            keep = ritz
        thick_restart(state, keep, min(k, state.cur_dim - 1), a.counter)
    if not np.all(np.isfinite(res)):
        c0 = a.counter.mvps
        mu, res, vecs = checker(ritz, full=True)
        mvps["residual"] += a.counter.mvps - c0
    return ritz, mu, res, vecs, history, mvps


def _assemble(a, cfg, ritz, mu, res, vecs, history, mvps, start, tol, state, poly=None,
              inner=None, heuristic=None):
    nev = cfg.nev
    mu, Y = _finish_arrays(mu, res, vecs, a.dim, nev)
    cost = a.counter.since(start)
    cost.nnzr = a.nnzr
    conv = res <= tol
    out = EigResult(
        eigenvalues=mu, eigenvectors=Y, residuals=res, converged=conv,
        cycles=state.cycle_count, cost=cost, tol=tol, ritz_values=ritz.values[:nev],
        poly=poly, inner_poly=inner, history=history, breakdown=mvps,
        heuristic=heuristic or [],
    )
    if cfg.reference is not None:
        out.n_correct = count_correct(mu, conv, cfg.reference)
    return out


def solve(a, cfg: SolveConfig) -> EigResult:
    """Compute the ``nev`` smallest-magnitude eigenpairs of ``A``.

    The returned cost covers everything done for this call: norm estimate,
    polynomial construction, damping probes, Arnoldi cycles and residual
    checks.  ``result.breakdown`` splits the base mvps by phase.
    """
    cfg.validate()
    if cfg.double is not None:
        return solve_double(a, cfg)
    a = as_operator(a)
    if a.dim < 2:
        raise ConfigError("operator dimension must be at least 2")
    prng, arng = _rngs(cfg.seed)
    start = a.counter.copy()
    a.counter.start_clock()
    c0 = a.counter.mvps
    tol = cfg.atol if cfg.atol is not None else cfg.rtol * a.norm_estimate()
    mvps = {"norm": a.counter.mvps - c0}
    v0 = cfg.start_vector if cfg.start_vector is not None else _random_vector(arng, a.dim)
    state = None
    poly = None
    trail = None
    c0 = a.counter.mvps
    if cfg.d == 0:
        op, order = a, "smallest"
    else:
        b = cfg.poly_start if cfg.poly_start is not None else _random_vector(prng, a.dim)
        if cfg.damping == "auto":
            poly, state, trail = damping_search(a, cfg, v0, tol, prng, b)
        else:
            if cfg.damping == "forced":
                b = damped_start(a, b, cfg.damping_alpha, cfg.damping_power)
            poly = _build_poly(a, b, cfg.d, cfg, prng, cfg.poly_start2)
        op, order = poly_operator(poly, a), "one"
    mvps["construction"] = a.counter.mvps - c0
    if state is None:
        state = ArnoldiState.start(v0, min(cfg.m, a.dim), a.counter)
    checker = _Checker(a, cfg.nev, tol, cfg.full_residuals)
    ritz, mu, res, vecs, history, run_mvps = _run_cycles(a, op, state, cfg, tol, order, arng,
                                                         checker)
    mvps.update(run_mvps)
    a.counter.stop_clock()
    return _assemble(a, cfg, ritz, mu, res, vecs, history, mvps, start, tol, state,
                     poly=poly, heuristic=trail)


def tau_operator(p1: PolyPrecond, a: LinearOperator) -> LinearOperator:
    """``v -> v - p1(A) v``; one application costs p1's effective degree in mvps."""
    def action(v):
        a.counter.add_vops(1)
        return v - apply_poly(p1, a, v)

    spec = None
    if a.spectrum is not None:
        from .gmres_poly import eval_poly
        from .operators import SpectrumSpec
        spec = SpectrumSpec(1.0 - eval_poly(p1, a.spectrum.eigenvalues), a.dim)
    return LinearOperator(a.dim, action, "composite", counter=a.counter, nnzr=a.nnzr,
                          spectrum=spec, base=a)


def solve_double(a, cfg: SolveConfig) -> EigResult:
    """Double polynomial preconditioning: Arnoldi on ``p2(1 - p1(A))``.

    ``p1`` is the GMRES polynomial of degree d1 for A; ``p2`` the GMRES
    polynomial of degree d2 for ``tau(A) = I - p1(A)``, optionally with
    stability roots.  Both use fresh random starting vectors.
    """
    cfg.validate()
    if cfg.double is None:
        raise ConfigError("solve_double needs cfg.double = (d1, d2)")
    d1, d2 = cfg.double
    a = as_operator(a)
    prng, arng = _rngs(cfg.seed)
    start = a.counter.copy()
    a.counter.start_clock()
    c0 = a.counter.mvps
    tol = cfg.atol if cfg.atol is not None else cfg.rtol * a.norm_estimate()
    mvps = {"norm": a.counter.mvps - c0}
    v0 = cfg.start_vector if cfg.start_vector is not None else _random_vector(arng, a.dim)
    c0 = a.counter.mvps
    b1 = cfg.poly_start if cfg.poly_start is not None else _random_vector(prng, a.dim)
    p1 = build_gmres_poly(a, b1, d1, provenance="composite-stage")
    mvps["construction_inner"] = a.counter.mvps - c0
    tau = tau_operator(p1, a)
    c0 = a.counter.mvps
    p2 = build_gmres_poly(tau, _random_vector(prng, a.dim), d2, provenance="composite-stage")
    if cfg.stability == "pof-auto":
        p2 = add_stability_roots(p2, max_copies=cfg.stability_cap)
    mvps["construction_outer"] = a.counter.mvps - c0
    mvps["construction"] = mvps["construction_inner"] + mvps["construction_outer"]
    op = poly_operator(p2, tau)
    state = ArnoldiState.start(v0, cfg.m, a.counter)
    checker = _Checker(a, cfg.nev, tol, cfg.full_residuals)
    ritz, mu, res, vecs, history, run_mvps = _run_cycles(a, op, state, cfg, tol, "one", arng,
                                                         checker)
    mvps.update(run_mvps)
    a.counter.stop_clock()
    return _assemble(a, cfg, ritz, mu, res, vecs, history, mvps, start, tol, state,
                     poly=p2, inner=p1)


def max_pof(p: PolyPrecond | None) -> float:
    return compute_pof(p).max_pof if p is not None else 1.0
