"""Spectral toolkit for the 2D hyperviscous Navier-Stokes equations on the torus.

Certified sparse-annulus lattice searches, divergence-free Fourier fields with
exact convolution oracles, a smooth amplitude cutoff, a prepared-equation
pseudo-spectral solver with cone diagnostics, and restricted-operator
(spatial averaging) checks.
"""

__version__ = "0.1.0"

from .lattice import (
    AnnulusFamily,
    GapRecord,
    LatticePoint,
    SparseAnnulus,
    StripStats,
    annulus_points,
    eigenvalues_with_multiplicity,
    find_sparse_annulus,
    is_representable,
    min_pairwise_distance,
    record_gaps,
    representable_sieve,
    strip_statistics,
)
from .spectral import (
    CutoffDecision,
    CutoffFamily,
    FourierField,
    ModeProjector,
    SpectralParams,
    apply_A_power,
    bilinear_B,
    choose_cutoff,
    inner_product,
    leray_project,
    load_field_csv,
    power_gap_lower_bound,
    project,
    random_field,
    save_field_csv,
    sobolev_norm,
    trilinear_b,
)
from .truncation import (
    DEFAULT_OUTER_RADIUS,
    CutoffProfile,
    apply_W,
    apply_W_prime,
    nonlinearity_F,
    nonlinearity_F_prime,
    nonlinearity_h2_bound,
    theta,
    theta_jacobian,
    w_image_h2_bound,
)
from .dynamics import (
    BlowUpError,
    ConeTrace,
    SimConfig,
    Trajectory,
    cone_report,
    estimate_absorbing_radius,
    evolve,
    evolve_pair,
    perturbed_copy,
    rhs_prepared,
    step,
    tracking_distance,
)
from .averaging import (
    AnnulusBasis,
    AnnulusMode,
    AveragingReport,
    annulus_basis,
    assemble_restricted_operator,
    averaging_trend,
    cancellation_defect,
    check_averaging,
    draw_averaging_samples,
    restricted_norm,
    weak_restricted_operator,
)
