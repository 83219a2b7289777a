"""Eigenpairs of ``M = D + lam * Delta`` as fixed points of a quadratic map,
with the Rayleigh-Schrodinger series as baseline and tools for mapping where
the iteration converges in the complex lam-plane."""

__version__ = "0.1.0"

from .analysis import (
    DomainGrid,
    bifurcation_scan,
    boundary_polynomial,
    eval_boundary_poly,
    guaranteed_radius,
    render_domain,
    scan_domain,
    validate_multiplier_curve,
)
from .dpt import (
    ConvergenceReport,
    IterationOptions,
    Status,
    chart_multipliers,
    dominant_eigenpair,
    homotopy_solve,
    iterate_full,
    iterate_ramped,
    iterate_single,
    jacobian_single,
    multipliers,
)
from .partition import (
    DegenerateSpectrum,
    PartitionedProblem,
    build_oscillator,
    build_oscillator_er,
    build_random_uniform,
    build_theta,
    fixture_2x2,
    fixture_3x3,
    partition,
)
from .rspt import compare_orders, rs_coefficients, rs_iterate
