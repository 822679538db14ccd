"""Worst-case accuracy toolkit for spike-train recovery from band-limited Fourier data.

Submodules:
    signals      spike-train types, moments, Fourier evaluation, clusters
    prony        Prony mapping, Jacobian, classical solve, Newton inversion
    adversary    moment-matched adversarial pairs and gap profiles
    decimation   noisy Fourier oracles and decimated-Prony reconstruction
    experiments  reproducible experiment drivers with manifests
    cli          command-line interface
"""

from ._version import __version__
from .errors import (
    BoundViolationError,
    ConditioningError,
    ConstructionError,
    GapUnderflowError,
    InconsistencyError,
    ModelOrderError,
    NoConvergenceError,
    NoiseBoundError,
    OutOfBandError,
    ReconstructionError,
    ToolkitError,
    ValidityRangeError,
)
from .signals import (
    AffineMap,
    AmplitudeBounds,
    ClusterSpec,
    MomentVector,
    SpikeSignal,
    cluster_affine,
    detect_cluster,
    fourier_eval,
    fourier_eval_grid,
    fourier_series_eval,
    moments,
    moments_mp,
    node_distance,
    rescale_cluster,
    signal_from_json,
    signal_to_json,
)
from .prony import (
    ConditioningReport,
    PronyImage,
    PronyJacobian,
    conditioning,
    newton_invert,
    prony_forward,
    prony_jacobian,
    prony_solve,
)
from .adversary import (
    AdversaryPair,
    FourierGapProfile,
    MomentMatchReport,
    construct_adversary,
    find_max_eta,
    fourier_gap,
    random_cluster_signal,
    table_signals,
    two_node_match,
    verify_moment_match,
)
from .decimation import (
    DEFAULT_NOISE_CONSTANT,
    DecimationConfig,
    FourierOracle,
    ReconstructionReport,
    SweepResult,
    SweepRow,
    calibrate_noise_constant,
    decimated_prony,
    error_scaling_sweep,
    make_adversarial_oracle,
    make_random_oracle,
)
from .experiments import (
    ExperimentSpec,
    RunManifest,
    run_adversary_demo,
    run_decimate,
    run_figure1,
    run_gap_bound,
    run_scaling,
    run_tables,
)
