"""Query-efficient PJR+ committee selection for Random Interval Voter elections."""

from .committee import (
    GuessArtifacts,
    PipelineResult,
    ValidationTally,
    build_guess,
    complete,
    mes,
    pjr_pipeline,
    poss,
    probe_set,
    validate,
)
from .elicit import ResolveOutcome, elicit_full, resolve, segment_search
from .model import (
    CandidateSet,
    ModelError,
    PiecewiseLinearCDF,
    RivModel,
    VoterInterval,
    approval_probability,
    gap_distance,
    load_model,
    neighbor,
    sample_voter,
    sample_voters,
    uniformize,
    window_probability,
)
from .oracle import ProtocolViolation, QueryContext, VoterOracle, query_stats
from .verify import (
    Election,
    Witness,
    check_core_bruteforce,
    check_pjr_plus_bruteforce,
    check_pjr_plus_ci,
)

__version__ = "0.1.0"
