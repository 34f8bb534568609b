import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pparnoldi.operators import (CsrMatrix, MatrixFormatError, SpectrumSpec, as_operator,
                                 convection_diffusion_eigenvalues, csr_operator,
                                 make_block2, make_convection_diffusion, make_diagonal,
                                 make_shifted, read_matrix_market)


def test_csr_matvec_small():
    m = CsrMatrix(2, [0, 1, 3], [1, 0, 1], [2.0, 3.0, 4.0])
    np.testing.assert_allclose(m.matvec(np.array([1.0, 1.0])), [2.0, 7.0])
    assert m.nnz == 3
    assert m.nnzr == 1.5


@pytest.mark.parametrize("row_ptr,col_idx,vals", [
    ([0, 2, 1], [0, 1], [1.0, 1.0]),        # decreasing row pointer
    ([0, 1, 2], [0, 5], [1.0, 1.0]),        # column out of range
    ([0, 1, 3], [0, 1], [1.0, 1.0]),        # nnz mismatch
])
def test_csr_rejects_bad_structure(row_ptr, col_idx, vals):
    with pytest.raises(MatrixFormatError):
        CsrMatrix(2, row_ptr, col_idx, vals)


@given(st.integers(2, 12), st.floats(0.05, 0.9), st.integers(0, 2**31))
def test_csr_matches_dense(n, density, seed):
    r = np.random.default_rng(seed)
    mat = sp.random(n, n, density=density, random_state=seed, format="csr")
    c = CsrMatrix.from_scipy(mat)
    v = r.standard_normal(n)
    np.testing.assert_allclose(c.matvec(v), mat.toarray() @ v, atol=1e-12)


def test_operator_counts_mvps():
    op = make_diagonal([1.0, 2.0, 3.0])
    op.apply(np.ones(3))
    op.apply(np.ones(3) + 1j * np.ones(3))
    assert op.counter.mvps == 3


def test_toarray_uncounted():
    op = make_diagonal([1.0, 2.0])
    np.testing.assert_allclose(op.toarray(), np.diag([1.0, 2.0]))
    assert op.counter.mvps == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        make_diagonal([1.0, 2.0]).apply(np.ones(3))


def test_spectrum_spec():
    s = SpectrumSpec(np.array([3.0, -1.0, 2.0]), 3)
    np.testing.assert_allclose(s.sorted_by_magnitude(), [-1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        SpectrumSpec(np.array([1.0]), 2)


def test_norm_estimate_diagonal_exact():
    op = make_diagonal(np.arange(1.0, 11.0))
    assert op.norm_estimate() == 10.0
    assert op.counter.mvps == 0


def test_norm_estimate_csr_costs_five_mvps():
    op = csr_operator(make_convection_diffusion(10))
    est = op.norm_estimate()
    assert op.counter.mvps == 5
    true = np.linalg.norm(op.matrix.toarray(), 2)
    assert 0.3 * true < est < 3 * true


def test_shifted_and_block2_share_counter():
    a = make_diagonal([1.0, 2.0, 4.0])
    s = make_shifted(a, 1.0)
    np.testing.assert_allclose(s.apply(np.ones(3)), [0.0, 1.0, 3.0])
    b = make_block2(a)
    np.testing.assert_allclose(b.apply(np.ones(6)), [1, 2, 4, 1, 2, 4])
    assert a.counter.mvps == 3
    assert s.counter is a.counter is b.counter


def test_convection_diffusion_stencil():
    n = 4
    h = 1.0 / (n + 1)
    A = make_convection_diffusion(n).toarray()
    assert A.shape == (16, 16)
    # bottom-left interior point: row 0, neighbours east (1) and north (4)
    assert A[0, 0] == pytest.approx(4 / h**2)
    assert A[0, 1] == pytest.approx(-1 / h**2 + 10 / h)
    assert A[0, 4] == pytest.approx(-1 / h**2)
    assert A[1, 0] == pytest.approx(-1 / h**2 - 10 / h)
    # top row (y > 1/2) is scaled by 100
    assert A[15, 15] == pytest.approx(400 / h**2)
    assert make_convection_diffusion(50).nnzr == pytest.approx(5 - 4 / 50)


@pytest.mark.parametrize("grid", [10, 16])
def test_convection_diffusion_exact_spectrum(grid):
    A = make_convection_diffusion(grid).toarray()
    dense = np.sort(np.linalg.eigvals(A).real)
    exact = convection_diffusion_eigenvalues(grid)
    assert np.max(np.abs(dense - exact)) <= 1e-9 * exact.max()


def test_as_operator_variants():
    assert as_operator(np.array([1.0, 2.0])).kind == "diagonal"
    assert as_operator(np.eye(3)).kind == "csr"
    assert as_operator(sp.eye(3, format="csr")).kind == "csr"


def _write(tmp_path, text):
    p = tmp_path / "m.mtx"
    p.write_text(text)
    return p


def test_matrix_market_general(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n% c\n2 2 3\n"
                         "1 1 1.5\n2 1 -2\n2 2 3\n")
    m = read_matrix_market(p)
    np.testing.assert_allclose(m.toarray(), [[1.5, 0], [-2, 3]])


def test_matrix_market_symmetric_expands(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n"
                         "1 1 1\n2 1 5\n")
    np.testing.assert_allclose(read_matrix_market(p).toarray(), [[1, 5], [5, 0]])


@pytest.mark.parametrize("header", [
    "%%MatrixMarket matrix coordinate complex general",
    "%%MatrixMarket matrix coordinate pattern general",
    "%%MatrixMarket matrix array real general",
    "not a header",
])
def test_matrix_market_rejects(tmp_path, header):
    p = _write(tmp_path, header + "\n1 1 1\n1 1 1\n")
    with pytest.raises(MatrixFormatError):
        read_matrix_market(p)


def test_matrix_market_truncated(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n")
    with pytest.raises(MatrixFormatError):
        read_matrix_market(p)


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e3, 1e3)))
def test_diagonal_action(d):
    op = make_diagonal(d)
    v = np.arange(d.size, dtype=float) + 1
    np.testing.assert_allclose(op.apply(v), d * v)
