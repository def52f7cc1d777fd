# Tolerances shared by the library and its property checks.

GEOM_TOL = 1e-9
UNIT_NORM_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
FD_STEP = 1e-6
FD_TOL = 1e-6
GRAD_REL_TOL = 1e-5
QP_ORACLE_TOL = 1e-8
SINGULAR_GRAD_NORM = 1e-12

# filters
DEFAULT_EPSILON = 1e-9
EPS_DISTORTION_REL = 1e-6
FILTER_SPLIT = 0.5

# |hhat| below this counts as the boundary zone when tracking the minimum gradient norm
BOUNDARY_ZONE = 0.05

TRAJECTORY_SCHEMA = "polycbf-trajectory v1"

# activations count toward first_activation_t once h_s is at most this fraction of its starting value
APPROACH_FRACTION = 0.5
