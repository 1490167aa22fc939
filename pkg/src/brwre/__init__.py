"""Tail of the maximal displacement of a subcritical branching random walk in random environment."""
from .asymptotics import ClassificationReport, alpha, classify, lambda_rho, lambda_zero, theta, theta_root
from .environment import EnvModel, EnvSequence, assoc_walk, lambda_e, make_env_model, sample_env_seq, tilt_env
from .estimators import (
    Estimate,
    RateFit,
    diagnostic_sqrt_decay,
    estimate_class1,
    estimate_class3,
    estimate_naive,
    estimate_quenched_spine,
    estimate_spine,
    fit_rate,
    merge,
)
from .forest import Caps, TreeStats, additive_martingale, naive_indicator, optional_line_weight, simulate_tree
from .offspring import OffspringLaw, gf_eval, make_offspring_law, size_biased
from .oracle import OracleResult, annealed_hit_prob_small, quenched_hit_prob
from .spine import (
    CouplingRun,
    Excursion,
    SubtreeCaps,
    build_trajectory,
    sample_coupling_run,
    sample_excursion,
    sample_passage_times,
    sample_phi_subtree,
    sample_trajectory_lengths,
)
from .steps import StepLaw, first_passage_pmf, kappa, lambda_s, make_step_law, tilt_step, tilted_first_passage

__version__ = "0.1.0"
