"""Tolerance ladder shared by every check and by the test suite."""

SPD_TOL = 1e-10      # smallest admissible metric eigenvalue
UNIT_TOL = 1e-8      # |v| = 1 checks
CURV_TOL = 1e-6      # curvature-operator symmetry / kernel thresholds
PLANE_TOL = 1e-10    # Gram determinant of a 2-plane
PROJ_TOL = 1e-8      # projector idempotence
ISO_TOL = 1e-6       # curvature-operator norm below which a point is isotropic
FRAME_TOL = 1e-8     # Gram residual of orthonormal frames
TRANS_TOL = 1e-9     # transition round trips and isometry pullbacks
ANGLE_TOL = 1e-5     # radians, line containment
RANK_TOL = 1e-6      # relative singular value threshold in rank estimation

# finite-difference steps, in units of the chart length scale
FD_METRIC_STEP = 1e-4
FD_CHRISTOFFEL_STEP = 1e-3

# ambiguity band around a kernel threshold (multiplicative)
AMBIGUITY_FACTOR = 10.0
