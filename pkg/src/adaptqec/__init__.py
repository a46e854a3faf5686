"""Adaptive matching decoder for the repetition code.

Edge probabilities of the space-time detector graph are inferred from
syndrome correlators, turned into matching weights and fed to an exact
minimum-weight perfect matching decoder.
"""

from adaptqec.graph import (
    BOUNDARY,
    DetectorErrorModel,
    DetectorId,
    EdgeSpec,
    build_repetition_dem,
    evaluate_detectors,
    logical_parity,
)
from adaptqec.noise import (
    Constant,
    NoiseSchedule,
    Sinusoid,
    SyndromeRecord,
    gamma_at,
    sample_trial,
    true_probabilities,
)
from adaptqec.estimator import (
    EdgeEstimate,
    MomentAccumulator,
    accumulate,
    boundary_probability,
    estimate_all,
    merge,
    n_min,
    n_opt,
    omega_c,
    pair_probability,
    uncertainty,
)
from adaptqec.weights import (
    StationaryWeights,
    WeightTable,
    path_sum_bruteforce,
    weights_exact,
    weights_shortest_path,
)
from adaptqec.matching import (
    CorrectionResult,
    Matching,
    MatchingProblem,
    decode,
    min_weight_perfect_matching,
    score,
)

__version__ = "0.1.0"
