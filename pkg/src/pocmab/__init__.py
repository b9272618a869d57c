"""Thompson Sampling for partially observable contextual bandits.

Contexts are hidden behind noisy linear outputs; the policy acts on filtered
context estimates and learns the reward weights by Bayesian linear
regression.
"""

from .environment import (
    DerivedOperators,
    GenScheme,
    ProblemInstance,
    RoundDraw,
    derive_operators,
    generate_instance,
    realize_reward,
    spawn_round,
    validate_filter,
)
from .harness import AggregateRecord, ExperimentConfig, parse_config, run_experiment, run_replication
from .metrics import Constants, LimitQuantities, estimate_constants, limit_quantities
from .policy import History, PolicyKind, PosteriorState, act, init_posterior, posterior_from_history, update_posterior
from .streams import RandomStream

__version__ = "0.1.0"
