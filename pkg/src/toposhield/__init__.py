"""Consensus networks that resist least-squares topology inference.

Simulate ``x_{t+1} = (W + K) x_t``, attack the trajectory with an ordinary
least-squares estimator, and synthesise feedback gains ``K`` that corrupt the
estimate while leaving the consensus value ``w'x0`` untouched.
"""

from .adversary import InferenceResult, krylov_dimension, ols_estimate, solvability_check
from .dynamics import (
    SnapshotPair,
    Trajectory,
    consensus_point,
    default_x0,
    simulate,
    snapshot_split,
    state_error_series,
)
from .errors import *  # noqa: F401,F403
from .metrics import SweepRecord, bauer_fike_audit, inference_deviation, jaccard_support
from .shield import (
    ConstraintSystem,
    FeedbackMatrix,
    PreservationCertificate,
    alpha_critical,
    build_constraint_system,
    epsilon_scale,
    synth_laplacian,
    synth_rank1,
    synth_sparse_kernel,
    verify_preservation,
)
from .spectral_graph import (
    SpectralProfile,
    SupportPattern,
    TopologyMatrix,
    ValidationReport,
    benchmark_topology,
    random_topology,
    spectral_profile,
    support_pattern,
    validate_assumption1,
)

__version__ = "0.1.0"
