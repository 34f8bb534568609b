"""Solves on real collection matrices.

Skipped unless ``PPARNOLDI_MM_DIR`` names a directory of ``.mtx`` files
(for example the E20R0100 or Bwm2000 matrices).
"""
import os
from pathlib import Path

import numpy as np
import pytest

from pparnoldi.operators import csr_operator, read_matrix_market
from pparnoldi.solver import SolveConfig, solve

MM_DIR = os.environ.get("PPARNOLDI_MM_DIR")
FILES = sorted(Path(MM_DIR).glob("*.mtx")) if MM_DIR and Path(MM_DIR).is_dir() else []

pytestmark = [
    pytest.mark.matrix_market,
    pytest.mark.slow,
    pytest.mark.skipif(not FILES, reason="set PPARNOLDI_MM_DIR to a folder of .mtx files"),
]


@pytest.mark.parametrize("path", FILES, ids=[p.stem for p in FILES])
def test_polynomial_beats_plain(path):
    mat = read_matrix_market(path)
    cfg = SolveConfig(m=50, k=20, nev=6, rtol=1e-8, max_cycles=2000, stability="pof-auto")
    plain = solve(csr_operator(mat), cfg)
    poly = solve(csr_operator(mat), SolveConfig(**{**cfg.__dict__, "d": 10}))
    assert poly.all_converged
    A = mat.to_scipy()
    for j in range(cfg.nev):
        y = poly.eigenvectors[:, j]
        assert np.linalg.norm(A @ y - poly.eigenvalues[j] * y) <= poly.tol * (1 + 1e-6)
    if plain.all_converged:
        assert poly.cycles <= plain.cycles
