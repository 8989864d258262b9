"""Optimal offline and heuristic online transmission scheduling for an
energy-harvesting transmitter on parallel fading sub-channels with a
per-channel processing cost."""

from ._kernel import backend as kernel_backend
from .gluekernel import (
    GlueAllocation,
    epoch_data_pour,
    epoch_glue_pour,
    two_level_reference,
    v_star,
)
from .model import (
    ENERGY,
    TCT,
    THROUGHPUT,
    GainOrderViolation,
    Infeasible,
    LedgerReport,
    NeverFeasible,
    NoConvergence,
    Policy,
    Scenario,
    ShapeMismatch,
    StateSpaceTooLarge,
    TooLarge,
    ValidationFailed,
    ValidationReport,
    audit_policy,
    rate,
    validate_scenario,
)
from .offline_energy import (
    EnergySolution,
    FeasibilityReport,
    check_feasibility,
    solve_offline_energy,
    verify_energy_structure,
)
from .offline_throughput import (
    StructureReport,
    ThroughputSolution,
    directional_water_filling,
    solve_offline_throughput,
    verify_throughput_structure,
)
from .tct import TctResult, find_bracket_epoch, solve_tct

__version__ = "0.1.0"

__all__ = [
    "ENERGY",
    "TCT",
    "THROUGHPUT",
    "EnergySolution",
    "FeasibilityReport",
    "GainOrderViolation",
    "GlueAllocation",
    "Infeasible",
    "LedgerReport",
    "NeverFeasible",
    "NoConvergence",
    "Policy",
    "Scenario",
    "ShapeMismatch",
    "StateSpaceTooLarge",
    "StructureReport",
    "TctResult",
    "ThroughputSolution",
    "TooLarge",
    "ValidationFailed",
    "ValidationReport",
    "audit_policy",
    "check_feasibility",
    "directional_water_filling",
    "epoch_data_pour",
    "epoch_glue_pour",
    "find_bracket_epoch",
    "kernel_backend",
    "rate",
    "solve_offline_energy",
    "solve_offline_throughput",
    "solve_tct",
    "two_level_reference",
    "v_star",
    "validate_scenario",
    "verify_energy_structure",
    "verify_throughput_structure",
]
