"""Quorum-based critical-section protocols with a simulation harness.

The library keeps the number of processes inside a critical section
within a configurable band [l, k]: a floor protocol (l-mutual inclusion),
a ceiling protocol obtained by complementing a floor protocol
(k-mutual exclusion), and their composition. A deterministic discrete-event
simulator, trace checkers, and metrics make the safety, liveness,
message-complexity, and waiting-time properties executable.
"""

from .coterie import (
    BUILDERS,
    ConfigError,
    CoterieAssignment,
    build_grid_coterie,
    build_majority_coterie,
    build_single_quorum_coterie,
    coterie_from_lines,
    verify_coterie,
)
from .gcs import Complement, GlobalCS, make_gcs
from .harness import (
    CampaignResult,
    Driver,
    ExploreOutcome,
    MetricsReport,
    RunContext,
    RunResult,
    RunSpec,
    admissible_lk,
    campaign,
    check_liveness,
    check_safety,
    check_transport,
    explore,
    measure,
    run_single,
)
from .inclusion import IN_CS, OUT_CS, CsmicViolation, MutualInclusion
from .mutex import QuorumMutex
from .simnet import (
    BudgetExhausted,
    ExplorationNetwork,
    Network,
    ProtocolMisuse,
    SimConfig,
    render_record,
    render_trace,
)

__all__ = [
    "BUILDERS", "BudgetExhausted", "CampaignResult", "Complement", "ConfigError",
    "CoterieAssignment", "CsmicViolation", "Driver", "ExplorationNetwork",
    "ExploreOutcome", "GlobalCS", "IN_CS", "MetricsReport", "MutualInclusion",
    "Network", "OUT_CS", "ProtocolMisuse", "QuorumMutex", "RunContext",
    "RunResult", "RunSpec", "SimConfig", "admissible_lk", "build_grid_coterie",
    "build_majority_coterie", "build_single_quorum_coterie", "campaign",
    "check_liveness", "check_safety", "check_transport", "coterie_from_lines",
    "explore", "make_gcs", "measure", "render_record", "render_trace",
    "run_single", "verify_coterie",
]
