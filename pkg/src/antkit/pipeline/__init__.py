"""Experiment orchestration: synthetic grammars, config, runs, and the CLI."""

from .config import ExperimentConfig, load_config
from .synthetic import (
    SyntheticGrammar,
    generate_synthetic,
    make_branching_grammar,
    make_cycle_grammar,
    make_goal_grammar,
    make_repeat_cycle_grammar,
)
from .run import (
    build_echo_client,
    rerun_from_manifest,
    run_counterfactual,
    run_experiment,
)

__all__ = [
    "ExperimentConfig",
    "SyntheticGrammar",
    "build_echo_client",
    "generate_synthetic",
    "load_config",
    "make_branching_grammar",
    "make_cycle_grammar",
    "make_goal_grammar",
    "make_repeat_cycle_grammar",
    "rerun_from_manifest",
    "run_counterfactual",
    "run_experiment",
]
