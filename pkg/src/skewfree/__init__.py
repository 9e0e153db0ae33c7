"""Standardization of multivariate data up to the third moment.

The fitted map whitens the data, lifts it quadratically into
``N + N(N+1)/2`` dimensions, and rotates the lifted cloud so that the third
moment of its projection back onto the original N axes vanishes.  The
result is a quadratic map from raw points to standardized points.
"""
from .errors import (DimensionMismatch, EmptyInput, InsufficientData, MalformedDocument,
                     RankDeficient, StandardizationError, VersionMismatch)
from .lifting import LiftSpec, SymBasis, fit_lift, lift_coefficients, lift_data, make_sym_basis
from .moments import (SymTensor3, compute_covariance, compute_mean, compute_third_moment,
                      projected_norm_sq, rotate_tensor)
from .pipeline import (DemoSpec, FittedTransform, NonConvergenceWarning, anomaly_scores,
                       deserialize, fit, generate_demo, load_model, rx_scores, save_model,
                       serialize, transform)
from .rotation import (DescentConfig, DescentOutcome, DescentStatus, RotationState,
                       block_rotation, compute_phi, gradient_flow_check,
                       minimize_projected_norm, saddle_diagnostic)
from .whitening import AffineMap, WhiteningReport, apply_affine, fit_whitening

__version__ = "0.1.0"
