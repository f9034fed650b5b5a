"""Central defaults table.

Every numeric default used by the solvers, the Monte Carlo engine, and the
CLI lives here; the README documents the same table.
"""

# exp() argument guard: beyond this a double overflows.
EXP_GUARD = 700.0

# Eigen solves (power iteration).
EIGEN_TOL = 1e-12
POWER_ITER_CAP = 10**6

# Root solves (tilt parameter bisection).
ROOT_TOL = 1e-12
QUEUE_ROOT_TOL = 1e-10
THETA_CAP = 50.0

# Monte Carlo.
MC_SAMPLES = 10**5
MC_BLOCK_SIZE = 4096

# Gaussian machinery.
DEGENERATE_EPS = 1e-8       # reject 1 + 2R <= eps
WINDOW_CAP = 129            # largest conditioning window 2k+1
TOEPLITZ_N_CAP = 4096       # dense factorization cap for explicit correlations
TRUNCATION_M0 = 64          # starting truncation for limit constants
TRUNCATION_CAP = 2**20
TRUNCATION_TOL = 1e-9

# Markov cylinder scans.
CYLINDER_CAP = 10**5

# Queueing.
BURN_IN_FRACTION = 0.01
TAIL_LOWER_Q = 0.90
TAIL_UPPER_Q = 0.999
TAIL_GRID_POINTS = 200
TAIL_BLOCKS = 10

# Verify-scan convergence tolerance (successive grid values, exact mode).
SCAN_TOL = 1e-8
FLAT_TOL = 1e-8
