"""Finite-truncation Calderon projectors on a cylindrical end and their adiabatic APS limit."""

from .calderon_core import (
    APSData,
    ResonanceReport,
    aps_projector,
    calderon_projector,
    calderon_projectors,
    check_nonresonance,
    graded_limit,
    lagrangian_graph_frame,
    orthogonalize_projector,
    random_frame,
    scattering_lagrangian,
)
from .cylinder_flow import (
    FlowConfig,
    FlowError,
    PropagatedFrame,
    propagate_ode,
    propagate_product,
    spectral_data_for,
    symplectic_pairing_drift,
)
from .operator_model import (
    BoundarySymbolSpec,
    SpectralData,
    TruncatedOperator,
    assemble,
    constant_spec,
    dirac_circle_spec,
    eigendecompose,
    lift_fiber_matrix,
    spectral_projectors,
)
from .subspaces import (
    Frame,
    gap_distance,
    lagrangian_residual,
    orthonormalize,
    principal_angles,
    projector_from_frame,
)
from .symbol_calculus import (
    MatPoly,
    RationalSymbolTerm,
    inverse_principal_symbol,
    principal_calderon_symbol,
    residue_term,
    symbol_vs_numerics,
)

__version__ = "0.1.0"
