"""Tilted random walks with stationary increments.

Builds the exponentially tilted (associated) walk and its martingale for
finite-state Markov and stationary Gaussian increment models, and applies
the tilt parameter to waiting-time tails in single-server queues.
"""

from .core import (
    IncrementPath,
    IncrementSampler,
    MCEstimate,
    PartialSums,
    mc_tilted_expectation,
    partial_sums,
    stream_rng,
    tilted_weight,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateCaseError,
    ModelError,
    NoRootError,
    NoTiltError,
    NumericalError,
    TiltOverflowError,
)
from .gaussian import (
    AR1,
    IID,
    MA,
    ConditionalTiltCoeffs,
    ExplicitCorr,
    GaussianModel,
    GaussianSampler,
    GaussianTilt,
    MartingaleCoeffs,
    associated_model,
    conditional_tilt_coeffs,
    correlation_sums,
    gaussian_tilt,
    laplace_Sn_exact,
    martingale_coeffs,
    martingale_mean,
    sample_path,
    tilt_density_normalization,
    toeplitz_cov,
    var_Sn_exact,
)
from .markov import (
    MarkovModel,
    MarkovSampler,
    TiltSolution,
    associated,
    cylinder_pstar,
    duality_roundtrip,
    exact_tilted_cylinder,
    exact_tilted_expectation,
    martingale_path,
    one_step_martingale_identity,
    perron,
    q_value,
    solve_theta,
    solve_tilt,
    tilt_matrix,
    validate,
)
from .queueing import (
    AppointmentArrivals,
    DeterministicService,
    ExponentialService,
    GammaService,
    NoError,
    PoissonArrivals,
    QueueModel,
    UniformError,
    WaitingSample,
    appointments_laplace_Sn,
    appointments_theta,
    comparison_factor,
    lindley,
    mm1_theta,
    poisson_theta,
    simulate_queue,
    tail_decay_estimate,
)

__version__ = "0.1.0"
