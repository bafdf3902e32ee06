"""Amplify-and-forward relay beamforming for multigroup multicast.

Semidefinite relaxation of the max-min-fair SINR problem, Gaussian
randomization (BF), and Gaussian/elliptic stochastic beamforming (SBF).
"""

from .problem import ProblemData, build_distributed_problem, build_mimo_problem, build_problem, min_sinr, power, sinr
from .randomization import BfSolution, bf_rate, gaussian_randomize, theorem1_gap_bound
from .sbf import (
    SbfKind,
    SbfScheme,
    elliptic_power_bounds,
    factorize_covariance,
    gap_bound_elliptic,
    sample_elliptic_weight,
    sample_gaussian_weight,
    sbf_rate,
    sbf_rate_elliptic,
    sbf_rate_gaussian,
)
from .scenario import ChannelRealization, NetworkConfig, Topology, generate_channels, load_config, validate_config
from .sdr import FeasibilityResult, FeasibilityStatus, NumericalFailure, SdrSolution, rank_of, solve_feasibility, solve_sdr

__version__ = "0.1.0"
