"""Raw inner-product kernels.

Every counted inner product in the package goes through these three
functions, which keeps the counters auditable: tests can wrap them and tally
calls independently of the cost records.
"""
import numpy as np


def inner(basis: np.ndarray, w: np.ndarray) -> np.ndarray:
    """All inner products of the (real) basis columns with ``w``."""
    return basis.T @ w


def dot(x: np.ndarray, y: np.ndarray):
    return np.vdot(x, y)


def norm2(w: np.ndarray) -> float:
    return float(np.sqrt(np.vdot(w, w).real))
