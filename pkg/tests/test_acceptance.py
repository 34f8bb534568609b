"""Acceptance criteria 1-7.

Each criterion is a function returning ``(ok, detail)``.  The tests print one
``CRITERION n: PASS|FAIL`` line each (visible with ``pytest -s`` and in the
terminal summary) and then assert.  Run this file directly for the summary
lines alone: ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import dataclasses
import time
import warnings

import numpy as np
import pytest

from pparnoldi import _kernels
from pparnoldi.arnoldi import ArnoldiState, arnoldi_extend
from pparnoldi.experiments import example7_diagonal, make_matrix, maxerr_run
from pparnoldi.gmres_poly import (PolyConstructionWarning, apply_poly, build_gmres_poly,
                                  compute_pof, eval_poly, leja_order)
from pparnoldi.operators import (convection_diffusion_eigenvalues, csr_operator,
                                 make_convection_diffusion, make_diagonal, make_shifted)
from pparnoldi.solver import SolveConfig, damping_heuristic, solve
from pparnoldi.theory import containment_gap, gap_ratio, table1_rows

LINES: list[str] = []


def _report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    LINES.append(line)
    print(line)
    return ok


# ---- 1 -----------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    rows = {r.degree: r for r in table1_rows()}
    elapsed = time.perf_counter() - t0
    want = {2: 0.9030, 4: 0.8232, 8: 0.6650, 16: 0.4134}
    checks = [abs(rows[None].rho - 0.9416) <= 1e-3]
    checks += [abs(rows[d].rho - v) <= 0.02 for d, v in want.items()]
    checks += [rows[24].overlap and rows[24].rho == 1.0, elapsed < 5.0]
    got = ", ".join(f"d={d}:{rows[d].rho:.4f}" for d in want)
    return all(checks), (f"standard {rows[None].rho:.4f}, {got}, d=24 overlap "
                         f"{rows[24].overlap}, {elapsed:.2f}s")


# ---- 2 -----------------------------------------------------------------------

EX4 = np.arange(1.0, 1001.0)


def _skewed(seed):
    b = np.random.default_rng(10_000 + seed).standard_normal(EX4.size)
    b[-100:] *= 0.01
    return b


def criterion_2(trials=10):
    t0 = time.perf_counter()
    base = SolveConfig(d=10, atol=1e-8, reference=EX4[:15])
    plain = [solve(make_diagonal(EX4), dataclasses.replace(base, seed=s)) for s in range(trials)]
    ok_plain = all(r.n_correct == 15 and r.cycles <= 2 for r in plain)
    skew = [solve(make_diagonal(EX4), dataclasses.replace(base, seed=s, poly_start=_skewed(s),
                                                          max_cycles=40))
            for s in range(trials)]
    # slow or wrong: more than 2 cycles, or some of 1..15 missing
    ok_skew = all(r.cycles > 2 or r.n_correct < 15 for r in skew)
    two = [solve(make_diagonal(EX4), dataclasses.replace(base, seed=s, poly_start=_skewed(s),
                                                         two_vector=True))
           for s in range(trials)]
    ok_two = all(r.n_correct == 15 and r.cycles <= 2 for r in two)
    elapsed = time.perf_counter() - t0
    detail = (f"random start cycles {[r.cycles for r in plain]}; skewed correct "
              f"{[r.n_correct for r in skew]} cycles {[r.cycles for r in skew]}; "
              f"two-vector cycles {[r.cycles for r in two]}; {elapsed:.1f}s")
    return ok_plain and ok_skew and ok_two and elapsed < 120, detail


# ---- 3 -----------------------------------------------------------------------

EX6 = np.arange(1.0, 10001.0)


def criterion_3(trials=10):
    def run(s, **kw):
        cfg = SolveConfig(atol=1e-8, seed=s, reference=EX6[:15], max_cycles=200, **kw)
        return solve(make_diagonal(EX6), cfg)

    def found(r):
        mu = np.asarray(r.eigenvalues)[r.converged]
        return {int(v) for v in np.round(mu.real) if np.isclose(v, np.round(v), rtol=1e-8)}

    d40 = [run(s, d=40) for s in range(trials)]
    ok40 = all(r.n_correct == 15 for r in d40) and max(r.cycles for r in d40) <= 5
    d50 = [run(s, d=50) for s in range(trials)]
    misses = sum(not {13, 14, 15} <= found(r) for r in d50)
    damp = [run(s, d=50, damping="forced") for s in range(trials)]
    one_cycle = sum(r.n_correct == 15 and r.cycles == 1 for r in damp)
    auto = [run(s, d=50, damping="auto") for s in range(trials)]
    flipped = [s for s, r in enumerate(auto)
               if not r.heuristic[0]["passed"] and r.n_correct == 15]
    probe_failed = [s for s, r in enumerate(auto) if not r.heuristic[0]["passed"]]
    ok_auto = len(flipped) >= 1 and flipped == probe_failed
    ok = ok40 and misses >= 9 and one_cycle >= 9 and ok_auto
    detail = (f"d=40 cycles {[r.cycles for r in d40]}; d=50 undamped misses 13-15 in "
              f"{misses}/{trials}; Ab damping one-cycle {one_cycle}/{trials}; heuristic "
              f"flipped seeds {flipped} (probe passed, run slipped: "
              f"{[s for s in range(trials) if s not in probe_failed]})")
    return ok, detail


# ---- 4 -----------------------------------------------------------------------

def _ex7_maxerr(d, stability="off", cap=None, seed=0):
    tm = make_matrix("example7")
    cfg = SolveConfig(d=d, stability=stability, stability_cap=cap, seed=seed, max_cycles=150)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PolyConstructionWarning)
        r = maxerr_run(tm, cfg)
    return r.max_err, r.poly.effective_degree - r.poly.base_degree


def criterion_4():
    e5, _ = _ex7_maxerr(5)
    e15, _ = _ex7_maxerr(15)
    e25, _ = _ex7_maxerr(25)
    e25s, add25 = _ex7_maxerr(25, "pof-auto")
    e40a, add40 = _ex7_maxerr(40, "pof-auto")
    e40c, add40c = _ex7_maxerr(40, "pof-auto", cap=1)
    checks = {
        "increasing": e5 < e15 < e25,
        "d5": e5 <= 1e-9,
        "d15": 1e-8 <= e15 <= 1e-4,
        "d25": add25 >= 1 and e25 / e25s >= 1e8,
        "d40": add40 == 2 and e40a <= 1e-10 and add40c == 1 and e40c > 1e-10,
    }
    detail = (f"off: d=5 {e5:.1e}, d=15 {e15:.1e}, d=25 {e25:.1e}; d=25 pof +{add25} "
              f"{e25s:.1e}; d=40 pof +{add40} {e40a:.1e} vs +{add40c} {e40c:.1e}; "
              f"failed {[k for k, v in checks.items() if not v]}")
    return all(checks.values()), detail


# ---- 5 -----------------------------------------------------------------------

def _convdiff_cost(grid, d, seed=0):
    a = csr_operator(make_convection_diffusion(grid))
    r = solve(a, SolveConfig(d=d, seed=seed, max_cycles=5000))
    return r.cost.cost, r.all_converged


def criterion_5():
    c0_small, ok_a = _convdiff_cost(50, 0)
    c25_small, ok_b = _convdiff_cost(50, 25)
    c0_big, ok_c = _convdiff_cost(100, 0)
    c25_big, ok_d = _convdiff_cost(100, 25)
    gr = gap_ratio(15, 21, convection_diffusion_eigenvalues(100))
    r1, r2 = c0_small / c25_small, c0_big / c25_big
    ok = all((ok_a, ok_b, ok_c, ok_d)) and r1 >= 5 and r2 >= 10 and abs(gr / 2.00e-5 - 1) <= 0.05
    return ok, f"cost ratio n=2500 {r1:.1f}x, n=10000 {r2:.1f}x; unmapped gap ratio {gr:.3e}"


# ---- 6 -----------------------------------------------------------------------

HIGH_POF_SEEDS = (3, 7)


def criterion_6():
    e7 = example7_diagonal()
    ref = np.sort(e7)[:15]

    def run(**kw):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PolyConstructionWarning)
            return solve(make_diagonal(e7), SolveConfig(rtol=1e-8, reference=ref,
                                                        max_cycles=50, **kw))

    d620 = run(double=(6, 20))
    ok_a = d620.n_correct == 15 and d620.cycles <= 3
    stall = [run(double=(5, 20), seed=s) for s in HIGH_POF_SEEDS]
    fixed = [run(double=(5, 20), seed=s, stability="pof-auto") for s in HIGH_POF_SEEDS]
    ok_b = all(r.cycles == 50 and not r.all_converged for r in stall)
    ok_c = all(r.n_correct == 15 and r.cycles <= 3 for r in fixed)
    single = [run(d=120, seed=s, stability=st) for s in (0, 1) for st in ("off", "pof-auto")]
    conv = [r.cost.dots for r in single if r.n_correct == 15]
    best = min(conv) if conv else np.inf
    ok_d = d620.cost.dots < best
    pofs = [compute_pof(r.poly).max_log10_pof for r in stall]
    detail = (f"(6,20) {d620.cycles} cycles, {d620.cost.dots} dots vs best single d=120 "
              f"{best} dots; (5,20) seeds {HIGH_POF_SEEDS} (log10 pof "
              f"{', '.join(f'{p:.1f}' for p in pofs)}): off cycles {[r.cycles for r in stall]}, "
              f"pof-auto cycles {[r.cycles for r in fixed]}")
    return ok_a and ok_b and ok_c and ok_d, detail


# ---- 7 -----------------------------------------------------------------------

def _prop_min_residual(rng):
    lam = np.linspace(1, 50, 80)
    a, b = make_diagonal(lam), rng.standard_normal(80)
    p = build_gmres_poly(a, b, 6)
    best = np.linalg.norm(apply_poly(p, a, b))
    for _ in range(200):
        q = p.roots * (1 + 0.05 * rng.standard_normal(6))
        q = np.where(np.isreal(p.roots), q.real, q)
        val = np.linalg.norm(np.prod(1 - lam[:, None] / q[None, :], axis=1).real * b)
        if val < best * (1 - 1e-10):
            return False
    return True


def _prop_gmres_residual(rng):
    # oracle: least squares over 1 + z*q(z), q in a Chebyshev basis on the spectrum interval
    lam = np.linspace(1.0, 10.0, 60)
    b = rng.standard_normal(60)
    b /= np.linalg.norm(b)
    d = 8
    s = (2 * lam - 11.0) / 9.0
    T = np.polynomial.chebyshev.chebvander(s, d - 1)
    M = (lam[:, None] * T) * b[:, None]
    c, *_ = np.linalg.lstsq(M, -b, rcond=None)
    gm = np.linalg.norm(b + M @ c)
    a = make_diagonal(lam)
    p = build_gmres_poly(a, b, d)
    return abs(np.linalg.norm(apply_poly(p, a, b)) - gm) <= 1e-12 and abs(eval_poly(p, 0.0) - 1) < 1e-14


def _prop_apply_eval(rng):
    lam = np.linspace(0.5, 20, 30)
    a = make_diagonal(lam)
    p = build_gmres_poly(a, rng.standard_normal(30), 7)
    e = np.eye(30)[:, 4]
    return np.allclose(apply_poly(p, a, e), eval_poly(p, lam[4]) * e, atol=1e-12)


def _prop_leja(rng):
    r = rng.standard_normal(9) + 3
    o = leja_order(r)
    return sorted(o.real) == sorted(r) and abs(o[0]) == np.max(np.abs(r))


def _prop_pof_scale(rng):
    r = rng.standard_normal(8) + 0.1
    from pparnoldi.gmres_poly import PolyPrecond
    p1 = PolyPrecond(roots=r, base_roots=r)
    p2 = PolyPrecond(roots=7.5 * r, base_roots=7.5 * r)
    return np.allclose(compute_pof(p1).log10_pof, compute_pof(p2).log10_pof, atol=1e-12)


def _prop_arnoldi(rng):
    a = csr_operator(make_convection_diffusion(12))
    st = ArnoldiState.start(rng.standard_normal(a.dim), 40, a.counter)
    arnoldi_extend(st, a, 40)
    scale = np.linalg.norm(a.matrix.toarray(), 2)
    return st.relation_error(a) <= 1e-12 * scale and st.orthogonality_error() <= 1e-12


def _prop_shift_invariance(rng):
    a = csr_operator(make_convection_diffusion(10))
    v = rng.standard_normal(a.dim)
    s1 = ArnoldiState.start(v, 10, a.counter)
    arnoldi_extend(s1, a, 10)
    sh = make_shifted(a, 3.7)
    s2 = ArnoldiState.start(v, 10, sh.counter)
    arnoldi_extend(s2, sh, 10)
    return containment_gap(s1.basis(10), s2.basis(10)) <= 1e-8


def _prop_gap():
    U = np.eye(3)[:, :1]
    v = np.array([np.cos(0.4), np.sin(0.4), 0.0])
    return (containment_gap(U, U) <= 1e-14 and containment_gap(U, np.eye(3)[:, 1:]) == 1.0
            and abs(containment_gap(U, v) - np.sin(0.4)) <= 1e-14)


def _prop_counter_audit():
    tally = {"n": 0}
    saved = (_kernels.inner, _kernels.dot, _kernels.norm2)

    def w(x):
        return 2 if np.iscomplexobj(x) else 1

    def s_inner(basis, v):
        tally["n"] += basis.shape[1] * w(v)
        return saved[0](basis, v)

    def s_dot(x, y):
        tally["n"] += max(w(x), w(y))
        return saved[1](x, y)

    def s_norm(v):
        tally["n"] += w(v)
        return saved[2](v)

    _kernels.inner, _kernels.dot, _kernels.norm2 = s_inner, s_dot, s_norm
    try:
        r = solve(csr_operator(make_convection_diffusion(12)),
                  SolveConfig(m=20, k=8, nev=4, d=5, rtol=1e-8))
    finally:
        _kernels.inner, _kernels.dot, _kernels.norm2 = saved
    return tally["n"] == r.cost.dots


def criterion_7():
    rng = np.random.default_rng(2024)
    props = {
        "min-residual vs 200 competitors": _prop_min_residual(rng),
        "GMRES residual and pi(0)=1": _prop_gmres_residual(rng),
        "apply/eval on eigenvectors": _prop_apply_eval(rng),
        "Leja permutation, max first": _prop_leja(rng),
        "pof scale invariance": _prop_pof_scale(rng),
        "Arnoldi relation and orthonormality": _prop_arnoldi(rng),
        "d=1 shift invariance": _prop_shift_invariance(rng),
        "gap boundary values": _prop_gap(),
        "cost counter audit n=144": _prop_counter_audit(),
    }
    bad = [k for k, v in props.items() if not v]
    return not bad, f"{len(props) - len(bad)}/{len(props)} properties hold" + (
        f"; failing: {bad}" if bad else "")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7}


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = CRITERIA[n]()
    assert _report(n, ok, detail), detail


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        _report(n, *fn())
