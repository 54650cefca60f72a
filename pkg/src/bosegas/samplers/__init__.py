from .ideal import (
    confinement_probability,
    empirical_shift,
    loop_intensity_means,
    sample_ideal_rl,
    sample_loop,
    truncation_tail_mass,
)
from .chain import ChainState, default_move_weights, mh_rl_chain, new_chain_state, run_chain
from .oracle import OracleSpec, OracleResult, enumeration_oracle
from .dlr import DlrSpec, confined_bridge, dlr_resample
from .combinatorics import combinatorics_checks

__all__ = [
    "ChainState",
    "DlrSpec",
    "OracleResult",
    "OracleSpec",
    "combinatorics_checks",
    "confined_bridge",
    "confinement_probability",
    "default_move_weights",
    "dlr_resample",
    "empirical_shift",
    "enumeration_oracle",
    "loop_intensity_means",
    "mh_rl_chain",
    "new_chain_state",
    "run_chain",
    "sample_ideal_rl",
    "sample_loop",
    "truncation_tail_mass",
]
