"""Executable checkers over runs of both semantics."""

from .coherence import (
    CoherenceVerdict,
    CoherentMirror,
    build_coherent_xrun,
    check_coherence,
    check_coherence_config,
    finished_auths,
)
from .frontiers import (
    RoundStatus,
    frontier_is,
    frontier_x,
    is_antichain,
    join_frontiers,
    joined_frontier,
    round_status,
    round_status_at,
    stip_status_es,
    stip_status_is,
    stip_status_x,
)
from .liquidation import contract_depth, liquidate, liquidated, liquidation_distance, x_liquidate
from .payout import PayoutSheet, SecurityVerdict, payout_sheet_is, payout_sheet_x, security
from .properties import (
    Violation,
    money_preservation,
    money_preservation_x,
    no_honest_compensation,
    non_divergence,
    round_based,
    scan,
    timeout_consistency,
)
from .render import render_bitml

__all__ = [
    "CoherenceVerdict", "CoherentMirror", "build_coherent_xrun", "check_coherence", "check_coherence_config",
    "finished_auths", "RoundStatus", "frontier_is", "frontier_x", "is_antichain", "join_frontiers",
    "joined_frontier", "round_status", "round_status_at", "stip_status_es", "stip_status_is", "stip_status_x",
    "contract_depth", "liquidate", "liquidated", "liquidation_distance", "x_liquidate", "PayoutSheet",
    "SecurityVerdict", "payout_sheet_is", "payout_sheet_x", "security", "Violation", "money_preservation",
    "money_preservation_x", "no_honest_compensation", "non_divergence", "round_based", "scan",
    "timeout_consistency", "render_bitml",
]
