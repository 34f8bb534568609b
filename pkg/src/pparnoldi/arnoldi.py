"""Arnoldi process and thick-restarted Arnoldi(m, k) building blocks.

The basis ``V`` is stored as an ``n x (m+1)`` array and the projection as an
``(m+1) x m`` array ``H``.  After ``cur_dim = j`` steps the relation

    Op @ V[:, :j] == V[:, :j+1] @ H[:j+1, :j]

holds to rounding error.  After a thick restart the leading ``k x k`` block
of ``H`` is full rather than Hessenberg.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from . import _kernels
from .cost import CostRecord
from .operators import LinearOperator

BREAKDOWN_TOL = 1e-14

TARGETS = {
    "one": lambda z: np.abs(1.0 - z),
    "smallest": np.abs,
    "largest": lambda z: -np.abs(z),
}


class ArnoldiError(RuntimeError):
    pass


class HarmonicBreakdown(ArnoldiError):
    """The projected matrix is singular, so harmonic Ritz values do not exist.

    For the GMRES polynomial this is GMRES stagnation; a different starting
    vector usually cures it.
    """


def orthogonalize(basis: np.ndarray, w: np.ndarray, counter: CostRecord,
                  passes: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Project ``w`` off the columns of ``basis`` with repeated classical Gram-Schmidt.

    Returns the accumulated coefficients and the projected vector.  Each pass
    costs one dot and one axpy per basis column.
    """
    j = basis.shape[1]
    h = np.zeros(j)
    if j == 0:
        return h, w
    for _ in range(passes):
        c = _kernels.inner(basis, w)
        counter.add_dots(j)
        w = w - basis @ c
        counter.add_vops(j)
        h += c
    return h, w


def norm(w: np.ndarray, counter: CostRecord) -> float:
    counter.add_dots(1)
    return _kernels.norm2(w)


@dataclass
class ArnoldiState:
    V: np.ndarray
    H: np.ndarray
    m: int
    cur_dim: int = 0
    restart_k: int = 0
    cycle_count: int = 0
    breakdown: int | None = None
    exhausted: bool = False
    history: list = field(default_factory=list)

    @classmethod
    def start(cls, v0, m: int, counter: CostRecord | None = None) -> "ArnoldiState":
        v0 = np.asarray(v0, dtype=np.float64)
        counter = counter if counter is not None else CostRecord()
        nrm = norm(v0, counter)
        if nrm == 0.0:
            raise ValueError("starting vector must be nonzero")
        V = np.zeros((v0.size, m + 1))
        V[:, 0] = v0 / nrm
        counter.add_vops(1)
        return cls(V=V, H=np.zeros((m + 1, m)), m=m)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    def basis(self, j: int | None = None) -> np.ndarray:
        j = self.cur_dim if j is None else j
        return self.V[:, :j]

    def square(self, j: int | None = None) -> np.ndarray:
        j = self.cur_dim if j is None else j
        return self.H[:j, :j]

    def beta(self) -> float:
        """The coupling entry h_{j+1,j} of the current factorization."""
        j = self.cur_dim
        return float(self.H[j, j - 1]) if j > 0 else 0.0

    def last_row(self) -> np.ndarray:
        """Row j+1 of H; a full row right after a thick restart."""
        j = self.cur_dim
        return self.H[j, :j]

    def relation_error(self, op: LinearOperator) -> float:
        """||Op V_j - V_{j+1} H_{j+1,j}||_F.  Applies Op j times (counted)."""
        j = self.cur_dim
        AV = np.column_stack([op.apply(self.V[:, i]) for i in range(j)])
        return float(np.linalg.norm(AV - self.V[:, :j + 1] @ self.H[:j + 1, :j]))

    def orthogonality_error(self) -> float:
        j = self.cur_dim + (0 if self.exhausted else 1)
        Q = self.V[:, :j]
        return float(np.linalg.norm(Q.T @ Q - np.eye(j)))


def arnoldi_extend(state: ArnoldiState, op: LinearOperator, to_dim: int, *,
                   rng: np.random.Generator | None = None,
                   on_breakdown: str = "continue") -> ArnoldiState:
    """Extend the factorization to ``to_dim`` columns.

    On breakdown (an invariant subspace was found) ``state.breakdown`` records
    the dimension.  With ``on_breakdown="stop"`` the extension ends there;
    with ``"continue"`` a random vector orthogonal to the basis is used as the
    next basis vector and ``h_{j+1,j} = 0`` keeps the relation exact.
    """
    if to_dim > state.m:
        raise ValueError(f"to_dim {to_dim} exceeds allocated subspace size {state.m}")
    counter = op.counter
    V, H = state.V, state.H
    n = state.n
    for j in range(state.cur_dim, to_dim):
        w = op.apply(V[:, j])
        h, w = orthogonalize(V[:, :j + 1], w, counter)
        beta = norm(w, counter)
        H[:j + 1, j] = h
        before = np.hypot(np.linalg.norm(h), beta)
        if beta > BREAKDOWN_TOL * before and j + 1 < n:
            H[j + 1, j] = beta
            V[:, j + 1] = w / beta
            counter.add_vops(1)
            state.cur_dim = j + 1
            continue
        H[j + 1, j] = 0.0
        state.breakdown = j + 1
        state.cur_dim = j + 1
        if on_breakdown == "stop" or j + 1 >= n:
            V[:, j + 1] = 0.0
            state.exhausted = j + 1 >= n
            return state
        rng = rng if rng is not None else np.random.default_rng(j)
        r = rng.standard_normal(n)
        _, r = orthogonalize(V[:, :j + 1], r, counter)
        V[:, j + 1] = r / norm(r, counter)
        counter.add_vops(1)
    return state


@dataclass
class RitzSet:
    """Ritz (or harmonic Ritz) pairs of the current factorization.

    ``coeffs[:, i]`` holds the unit-norm coordinates of the i-th vector in the
    basis ``V[:, :dim]``; ``vectors`` materializes them.  ``matrix`` and
    ``resid_dir`` describe the projected problem so that a thick restart can
    rebuild a consistent compressed factorization.
    """

    values: np.ndarray
    coeffs: np.ndarray
    residuals: np.ndarray
    order: str
    kind: str
    basis: np.ndarray
    matrix: np.ndarray = None
    resid_dir: np.ndarray = None
    shift: float = 0.0

    def __len__(self):
        return self.values.size

    def vector(self, i: int, counter: CostRecord | None = None) -> np.ndarray:
        if counter is not None:
            counter.add_vops(self.coeffs.shape[0])
        y = self.basis @ self.coeffs[:, i]
        if not np.any(y.imag):
            y = y.real
        return y

    @property
    def vectors(self) -> np.ndarray:
        return self.basis @ self.coeffs


def _sorted(values: np.ndarray, order: str) -> np.ndarray:
    key = TARGETS[order](values)
    # conjugates tie on every key; list the positive imaginary part first
    return np.lexsort((-values.imag, key))


def _clean_real(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    tiny = np.abs(values.imag) <= 8 * np.finfo(float).eps * np.abs(values)
    values = values.copy()
    values.imag[tiny] = 0.0
    return values


def ritz_pairs(state: ArnoldiState, order: str = "smallest") -> RitzSet:
    """Eigenpairs of the leading square block of H, sorted by ``order``.

    Residual norms come from the Arnoldi relation, |H[j+1, :j] g|, so no
    operator applications are needed.
    """
    j = state.cur_dim
    if j < 1:
        raise ArnoldiError("empty factorization")
    Hj = state.square()
    try:
        vals, vecs = np.linalg.eig(Hj)
    except np.linalg.LinAlgError as exc:
        raise ArnoldiError(f"eigensolver failed on projected matrix: {exc}") from exc
    vals = _clean_real(vals)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    idx = _sorted(vals, order)
    vals, vecs = vals[idx], vecs[:, idx]
    res = np.abs(state.last_row() @ vecs)
    w = np.zeros(j + 1)
    w[j] = 1.0
    return RitzSet(values=vals, coeffs=vecs, residuals=res, order=order, kind="ritz",
                   basis=state.basis(), matrix=Hj.copy(), resid_dir=w)


def _harmonic_matrix(state: ArnoldiState, shift: float):
    # A V = V H + v b^T  =>  harmonic pairs solve ((H - s) + f b^T) g = (theta - s) g
    # with f = (H - s)^{-T} b; every residual is a multiple of V_{+1} [-f; 1].
    d = state.cur_dim
    Hd = state.square() - shift * np.eye(d)
    b = state.last_row()
    with np.errstate(all="ignore"):
        if np.linalg.cond(Hd) > 1.0 / np.finfo(float).eps:
            raise HarmonicBreakdown(
                "projected matrix is singular (GMRES stagnation); try a different starting vector")
        f = np.linalg.solve(Hd.T, b)
    if not np.all(np.isfinite(f)):
        raise HarmonicBreakdown("projected matrix is singular; try a different starting vector")
    M = Hd + np.outer(f, b)
    w = np.concatenate([-f, [1.0]])
    return M, w, b


def harmonic_ritz_values(state: ArnoldiState, shift: float = 0.0) -> np.ndarray:
    """Harmonic Ritz values of the current factorization with respect to ``shift``.

    With ``shift = 0`` and an unrestarted factorization of dimension d these
    are the roots of the GMRES(d) residual polynomial.
    """
    M, _, _ = _harmonic_matrix(state, shift)
    return _clean_real(np.linalg.eigvals(M) + shift)


def harmonic_restart_selection(state: ArnoldiState, order: str = "smallest",
                               shift: float | None = None) -> RitzSet:
    """Harmonic Ritz pairs, usable as the keep-set for :func:`thick_restart`.

    ``shift`` defaults to the target point of ``order`` (1 for ``"one"``,
    0 otherwise).  All harmonic residuals are parallel to one vector, so the
    residual norms are exact without applying the operator.
    """
    if shift is None:
        shift = 1.0 if order == "one" else 0.0
    M, w, b = _harmonic_matrix(state, shift)
    vals, vecs = np.linalg.eig(M)
    vals = _clean_real(vals + shift)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    idx = _sorted(vals, order)
    vals, vecs = vals[idx], vecs[:, idx]
    res = np.linalg.norm(w) * np.abs(b @ vecs)
    return RitzSet(values=vals, coeffs=vecs, residuals=res, order=order, kind="harmonic",
                   basis=state.basis(), matrix=M, resid_dir=w, shift=shift)


def _schur_eigs(T: np.ndarray) -> np.ndarray:
    """Eigenvalue attached to each diagonal position of a real Schur form."""
    n = T.shape[0]
    out = np.empty(n, dtype=complex)
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            a, b, c, d = T[i, i], T[i, i + 1], T[i + 1, i], T[i + 1, i + 1]
            mid = 0.5 * (a + d)
            disc = np.sqrt(complex(0.25 * (a - d) ** 2 + b * c))
            out[i], out[i + 1] = mid + disc, mid - disc
            if out[i].imag < 0:
                out[i], out[i + 1] = out[i + 1], out[i]
            i += 2
        else:
            out[i] = T[i, i]
            i += 1
    return out


def restart_count(values: np.ndarray, k: int) -> int:
    """Reduce k by one when positions k-1 and k hold a conjugate pair.

    If that would leave nothing (k = 1), the whole pair is kept instead.
    """
    if 0 < k < values.size and values[k - 1].imag != 0.0:
        if np.isclose(values[k], np.conj(values[k - 1]), rtol=1e-10, atol=0.0):
            return k - 1 if k > 1 else k + 1
    return k


def thick_restart(state: ArnoldiState, keep: RitzSet, k: int,
                  counter: CostRecord | None = None) -> ArnoldiState:
    """Compress the factorization onto the first ``k`` pairs of ``keep``.

    The kept subspace is spanned by reordered real Schur vectors of the
    projected matrix that produced ``keep``, so complex pairs stay in real
    arithmetic.  The residual direction becomes basis vector k+1 and is
    reorthogonalized against the retained vectors.
    """
    m = state.cur_dim
    if not 0 < k < m:
        raise ValueError(f"need 0 < k < m, got k={k}, m={m}")
    if len(keep) < k:
        raise ValueError(f"selection has {len(keep)} pairs, fewer than k={k}")
    counter = counter if counter is not None else CostRecord()
    key = TARGETS[keep.order]

    T, Z = sla.schur(keep.matrix, output="real")
    eig = _schur_eigs(T) + keep.shift
    ranked = np.lexsort((-eig.imag, key(eig)))
    k_eff = restart_count(eig[ranked], k)
    if k_eff >= m:
        raise ArnoldiError("cannot keep a conjugate pair whole with k + 1 >= m")
    select = np.zeros(m, dtype=np.int32)
    select[ranked[:k_eff]] = 1
    _, Zs, _, _, nsel, _, _, info = lapack.dtrsen(select, T, Z, job="N")
    if info != 0 or nsel != k_eff:
        raise ArnoldiError(f"Schur reordering failed (info={info}, selected {nsel} of {k_eff})")
    G = Zs[:, :k_eff]

    P = np.zeros((m + 1, k_eff + 1))
    P[:m, :k_eff] = G
    w = keep.resid_dir.astype(float).copy()
    for _ in range(2):
        w -= P[:, :k_eff] @ (P[:, :k_eff].T @ w)
    P[:, k_eff] = w / np.linalg.norm(w)

    Hnew = P.T @ (state.H[:m + 1, :m] @ G)
    Vnew = state.V[:, :m + 1] @ P
    counter.add_vops((k_eff + 1) * (m + 1))
    _, last = orthogonalize(Vnew[:, :k_eff], Vnew[:, k_eff], counter, passes=1)
    Vnew[:, k_eff] = last / norm(last, counter)
    counter.add_vops(1)

    state.V[:, :] = 0.0
    state.V[:, :k_eff + 1] = Vnew
    state.H[:, :] = 0.0
    state.H[:k_eff + 1, :k_eff] = Hnew
    state.cur_dim = k_eff
    state.restart_k = k_eff
    state.breakdown = None
    return state
