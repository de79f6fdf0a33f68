"""Constrained option tree search on particle-filter beliefs.

Online planning for cost-constrained POMDPs: options (temporally extended
controllers) are selected by Lagrangian Monte Carlo tree search with dual
ascent and progressive widening, while execution recurses the remaining
cost budget through every underlying step.
"""
from .belief import (
    BeliefExhausted,
    FilterDiagnostics,
    ParticleBelief,
    belief_stats,
    initial_belief,
    pf_generative_step,
    systematic_resample,
    update_belief,
)
from .flat import FlatPlanner
from .model import (
    ConstrainedPOMDP,
    GenerativeStep,
    as_budget,
    as_cost,
    clamp_positive,
    discounted_return,
    propagate_budget,
)
from .options import (
    EpisodeLog,
    FixedSelector,
    NoAvailableOption,
    OptionSet,
    OptionSpec,
    available_options,
    execute_episode,
    make_primitive_options,
    option_terminates,
)
from .planner import (
    DualState,
    OptionPlanner,
    PlannerConfig,
    SemiMarkovTransition,
    dual_update,
    sample_next_option,
    tree_size_ratio,
)

__all__ = [
    "BeliefExhausted",
    "ConstrainedPOMDP",
    "DualState",
    "EpisodeLog",
    "FilterDiagnostics",
    "FixedSelector",
    "FlatPlanner",
    "GenerativeStep",
    "NoAvailableOption",
    "OptionPlanner",
    "OptionSet",
    "OptionSpec",
    "ParticleBelief",
    "PlannerConfig",
    "SemiMarkovTransition",
    "as_budget",
    "as_cost",
    "available_options",
    "belief_stats",
    "clamp_positive",
    "discounted_return",
    "execute_episode",
    "initial_belief",
    "make_primitive_options",
    "option_terminates",
    "pf_generative_step",
    "propagate_budget",
    "sample_next_option",
    "systematic_resample",
    "tree_size_ratio",
    "update_belief",
]

__version__ = "0.1.0"
