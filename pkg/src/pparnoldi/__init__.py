"""Polynomial preconditioned Arnoldi for a few smallest-magnitude eigenvalues."""
from .cost import CostRecord, cost_estimate, merge
from .gmres_poly import (PolyPrecond, add_stability_roots, apply_poly, build_gmres_poly,
                         build_two_vector_poly, compute_pof, damped_start, eval_poly,
                         leja_order, poly_operator)
from .operators import (CsrMatrix, LinearOperator, SpectrumSpec, csr_operator,
                        make_convection_diffusion, make_diagonal, read_matrix_market)
from .solver import (EigResult, SolveConfig, check_ideal_order, damping_heuristic, solve,
                     solve_double)
from .theory import chebyshev_rate, containment_gap, filter_bound_diagnostic, gap_ratio

__all__ = [
    "CostRecord", "cost_estimate", "merge",
    "PolyPrecond", "add_stability_roots", "apply_poly", "build_gmres_poly",
    "build_two_vector_poly", "compute_pof", "damped_start", "eval_poly", "leja_order",
    "poly_operator",
    "CsrMatrix", "LinearOperator", "SpectrumSpec", "csr_operator",
    "make_convection_diffusion", "make_diagonal", "read_matrix_market",
    "EigResult", "SolveConfig", "check_ideal_order", "damping_heuristic", "solve",
    "solve_double",
    "chebyshev_rate", "containment_gap", "filter_bound_diagnostic", "gap_ratio",
]
__version__ = "0.1.0"
