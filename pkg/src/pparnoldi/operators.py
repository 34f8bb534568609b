"""Linear operators with counted matrix-vector products.

Leaf operators (CSR and diagonal matrices) own a :class:`CostRecord` and add
one mvp per application.  Composite operators (shifted, block-diagonal,
polynomial) delegate to their base operator and share its counter, so a
degree-d polynomial application automatically records d base mvps.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels
from .cost import CostRecord


class MatrixFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumSpec:
    eigenvalues: np.ndarray
    n: int

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues)
        if ev.shape != (self.n,):
            raise ValueError(f"expected {self.n} eigenvalues, got {ev.shape}")
        if np.iscomplexobj(ev):
            cplx = ev[ev.imag != 0]
            if not np.allclose(np.sort_complex(cplx), np.sort_complex(cplx.conj())):
                raise ValueError("complex eigenvalues must come in conjugate pairs")

    def sorted_by_magnitude(self) -> np.ndarray:
        ev = np.asarray(self.eigenvalues)
        return ev[np.argsort(np.abs(ev), kind="stable")]


class CsrMatrix:
    """Square sparse matrix in compressed sparse row form."""

    def __init__(self, n, row_ptr, col_idx, values, *, check=True):
        self.n = int(n)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if check:
            self._validate()
        self._sp = sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=(self.n, self.n)
        )

    def _validate(self):
        n, rp, ci = self.n, self.row_ptr, self.col_idx
        if rp.shape != (n + 1,) or rp[0] != 0 or np.any(np.diff(rp) < 0):
            raise MatrixFormatError("row_ptr must have length n+1, start at 0 and be nondecreasing")
        if rp[-1] != ci.size or ci.size != self.values.size:
            raise MatrixFormatError("row_ptr[n] must equal nnz")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise MatrixFormatError("column index out of range")
        # strictly increasing columns within each row
        d = np.diff(ci)
        row_start = np.zeros(ci.size, dtype=bool)
        row_start[rp[:-1][rp[:-1] < ci.size]] = True
        if np.any((d <= 0) & ~row_start[1:]):
            raise MatrixFormatError("column indices must be strictly increasing within a row")

    @classmethod
    def from_scipy(cls, mat) -> "CsrMatrix":
        m = sp.csr_matrix(mat, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise MatrixFormatError(f"matrix must be square, got {m.shape}")
        return cls(m.shape[0], m.indptr, m.indices, m.data)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def nnzr(self) -> float:
        return self.nnz / self.n

    @property
    def shape(self):
        return (self.n, self.n)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self._sp @ v

    def to_scipy(self) -> sp.csr_matrix:
        return self._sp

    def toarray(self) -> np.ndarray:
        return self._sp.toarray()

    def as_operator(self, counter: CostRecord | None = None) -> "LinearOperator":
        return csr_operator(self, counter)


class LinearOperator:
    """A counted linear map on real n-vectors.

    ``apply`` accepts real or complex vectors; a complex vector is applied as
    its real and imaginary parts, costing two applications.
    """

    def __init__(self, dim, action, kind, *, counter=None, own_mvps=0,
                 nnzr=None, spectrum=None, base=None):
        self.dim = int(dim)
        self.kind = kind
        self._action = action
        self._own_mvps = own_mvps
        self.counter = counter if counter is not None else CostRecord(nnzr=nnzr)
        if self.counter.nnzr is None and nnzr is not None:
            self.counter.nnzr = nnzr
        self.nnzr = nnzr if nnzr is not None else self.counter.nnzr
        self.spectrum = spectrum
        self.base = base

    def apply(self, v: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(v):
            re = self.apply(np.ascontiguousarray(v.real))
            if not np.any(v.imag):
                return re.astype(complex)
            return re + 1j * self.apply(np.ascontiguousarray(v.imag))
        if v.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: operator {self.dim}, vector {v.shape[0]}")
        if self._own_mvps:
            self.counter.add_mvps(self._own_mvps)
        return self._action(v)

    __matmul__ = apply

    def toarray(self) -> np.ndarray:
        """Dense matrix of the operator.  Uncounted; for testing small cases."""
        saved = self.counter.copy()
        cols = [self.apply(e) for e in np.eye(self.dim)]
        self.counter.mvps, self.counter.dots, self.counter.vops = saved.mvps, saved.dots, saved.vops
        return np.column_stack(cols)

    def norm_estimate(self) -> float:
        """Cheap estimate of ||A||, used to scale convergence tolerances.

        Exact for diagonal operators; otherwise five steps of power iteration
        on the entrywise absolute value of the underlying matrix, which
        bounds ||A||_2 from below only loosely but costs 5 mvps.
        """
        if self.spectrum is not None:
            return float(np.max(np.abs(self.spectrum.eigenvalues)))
        absmat = getattr(self, "_abs_matvec", None)
        if absmat is None:
            return _power_norm(self, 5)
        x = np.ones(self.dim) / np.sqrt(self.dim)
        est = 0.0
        for _ in range(5):
            self.counter.add_mvps(1)
            y = absmat(x)
            est = _kernels.norm2(y)
            self.counter.add_dots(1)
            if est == 0.0:
                return 0.0
            x = y / est
            self.counter.add_vops(1)
        return float(est)

    def __repr__(self):
        return f"LinearOperator(kind={self.kind!r}, dim={self.dim})"


def _power_norm(op: LinearOperator, steps: int) -> float:
    x = np.ones(op.dim) / np.sqrt(op.dim)
    est = 0.0
    for _ in range(steps):
        y = op.apply(x)
        est = _kernels.norm2(y)
        op.counter.add_dots(1)
        if est == 0.0:
            break
        x = y / est
        op.counter.add_vops(1)
    return float(est)


def as_operator(a) -> LinearOperator:
    if isinstance(a, LinearOperator):
        return a
    if isinstance(a, CsrMatrix):
        return csr_operator(a)
    if sp.issparse(a):
        return csr_operator(CsrMatrix.from_scipy(a))
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        return make_diagonal(arr)
    return csr_operator(CsrMatrix.from_scipy(sp.csr_matrix(arr)))


def csr_operator(mat: CsrMatrix, counter: CostRecord | None = None) -> LinearOperator:
    op = LinearOperator(mat.n, mat.matvec, "csr", counter=counter, own_mvps=1, nnzr=mat.nnzr)
    absmat = abs(mat.to_scipy())
    op._abs_matvec = absmat.__matmul__
    op.matrix = mat
    return op


def make_diagonal(diag_values, counter: CostRecord | None = None) -> LinearOperator:
    d = np.asarray(diag_values, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("diagonal must be nonempty")
    d.setflags(write=False)
    op = LinearOperator(
        d.size, lambda v: d * v, "diagonal", counter=counter, own_mvps=1, nnzr=1.0,
        spectrum=SpectrumSpec(d.copy(), d.size),
    )
    op.diag = d
    return op


def make_shifted(a, mu: float) -> LinearOperator:
    """The operator ``v -> A v - mu v``; one base mvp per application."""
    a = as_operator(a)
    mu = float(mu)

    def action(v):
        a.counter.add_vops(1)
        return a.apply(v) - mu * v

    spec = None
    if a.spectrum is not None:
        spec = SpectrumSpec(np.asarray(a.spectrum.eigenvalues) - mu, a.dim)
    op = LinearOperator(a.dim, action, "shifted", counter=a.counter, nnzr=a.nnzr,
                        spectrum=spec, base=a)
    op.shift = mu
    return op


def make_block2(a) -> LinearOperator:
    """The 2n-dimensional block-diagonal operator diag(A, A)."""
    a = as_operator(a)
    n = a.dim

    def action(v):
        return np.concatenate([a.apply(v[:n]), a.apply(v[n:])])

    spec = None
    if a.spectrum is not None:
        ev = np.asarray(a.spectrum.eigenvalues)
        spec = SpectrumSpec(np.concatenate([ev, ev]), 2 * n)
    return LinearOperator(2 * n, action, "block2", counter=a.counter, nnzr=a.nnzr,
                          spectrum=spec, base=a)


def make_convection_diffusion(grid_n: int) -> CsrMatrix:
    """Five-point discretization of a two-region convection-diffusion operator.

    The unit square carries ``-u_xx - u_yy + 20 u_x`` for y <= 1/2 and
    ``-100 u_xx - 100 u_yy + 2000 u_x`` above, with homogeneous Dirichlet
    boundaries, mesh width ``h = 1/(grid_n+1)`` and centered differences for
    the convection term.  Unknowns are numbered with x varying fastest.
    Grid rows with y exactly 1/2 take the lower-region coefficients.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    N = int(grid_n)
    h = 1.0 / (N + 1)
    y = h * np.arange(1, N + 1)
    scale = np.where(y <= 0.5, 1.0, 100.0)
    conv = 20.0

    jj, ii = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    jj, ii = jj.ravel(), ii.ravel()
    idx = jj * N + ii
    a = scale[jj]

    rows = [idx]
    cols = [idx]
    vals = [4.0 * a / h**2]
    neighbours = (
        (ii > 0, -1, -1.0 / h**2 - conv / (2 * h)),      # west
        (ii < N - 1, 1, -1.0 / h**2 + conv / (2 * h)),   # east
        (jj > 0, -N, -1.0 / h**2),                       # south
        (jj < N - 1, N, -1.0 / h**2),                    # north
    )
    for mask, offset, coef in neighbours:
        rows.append(idx[mask])
        cols.append(idx[mask] + offset)
        vals.append(a[mask] * coef)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N * N, N * N),
    )
    return CsrMatrix.from_scipy(mat)


def convection_diffusion_eigenvalues(grid_n: int) -> np.ndarray:
    """Exact sorted spectrum of ``make_convection_diffusion(grid_n)``.

    The matrix equals ``kron(Da, Tx) + kron(Da Ty, I)`` with ``Da`` the
    per-row coefficient scale.  Each eigenvalue ``mu`` of the 1D convection
    operator ``Tx`` leaves the tridiagonal problem ``Da (mu I + Ty)``, which is
    similar to a symmetric one, so the whole spectrum is real.
    """
    N = int(grid_n)
    h = 1.0 / (N + 1)
    west, east = -1.0 / h**2 - 10.0 / h, -1.0 / h**2 + 10.0 / h
    if west * east <= 0:
        raise ValueError("mesh too coarse: the 1D convection operator has complex modes")
    y = h * np.arange(1, N + 1)
    da = np.where(y <= 0.5, 1.0, 100.0)
    mu = 2.0 / h**2 + 2.0 * np.sqrt(west * east) * np.cos(np.arange(1, N + 1) * np.pi / (N + 1))
    off = -np.sqrt(da[:-1] * da[1:]) / h**2
    out = [sla.eigvalsh_tridiagonal(da * (m + 2.0 / h**2), off) for m in mu]
    return np.sort(np.concatenate(out))


def read_matrix_market(path) -> CsrMatrix:
    """Read a real general or symmetric Matrix Market coordinate file."""
    path = Path(path)
    with path.open("r") as fh:
        header = fh.readline().strip().split()
        if len(header) != 5 or header[0].lower() != "%%matrixmarket":
            raise MatrixFormatError(f"{path}: malformed Matrix Market header")
        obj, fmt, field, symm = (h.lower() for h in header[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixFormatError(f"{path}: only 'matrix coordinate' files are supported")
        if field != "real":
            raise MatrixFormatError(f"{path}: unsupported field {field!r} (real only)")
        if symm not in ("general", "symmetric"):
            raise MatrixFormatError(f"{path}: unsupported symmetry {symm!r}")
        line = fh.readline()
        while line and (line.startswith("%") or not line.strip()):
            line = fh.readline()
        try:
            nrows, ncols, nnz = (int(t) for t in line.split())
        except ValueError:
            raise MatrixFormatError(f"{path}: malformed size line {line!r}") from None
        if nrows != ncols:
            raise MatrixFormatError(f"{path}: matrix must be square, got {nrows}x{ncols}")
        data = np.loadtxt(fh, comments="%", ndmin=2)
    if data.shape[0] != nnz or (nnz and data.shape[1] != 3):
        raise MatrixFormatError(f"{path}: expected {nnz} entries with 3 fields")
    r = data[:, 0].astype(np.int64) - 1
    c = data[:, 1].astype(np.int64) - 1
    v = data[:, 2]
    if nnz and (r.min() < 0 or c.min() < 0 or r.max() >= nrows or c.max() >= nrows):
        raise MatrixFormatError(f"{path}: index out of range")
    if symm == "symmetric":
        off = r != c
        r, c, v = np.concatenate([r, c[off]]), np.concatenate([c, r[off]]), np.concatenate([v, v[off]])
    return CsrMatrix.from_scipy(sp.coo_matrix((v, (r, c)), shape=(nrows, nrows)))
