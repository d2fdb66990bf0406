"""Selection under group-dependent estimation noise.

Large-population thresholds and utilities live in :mod:`.asymptotic`,
finite-population simulation in :mod:`.montecarlo`, score-file experiments in
:mod:`.dataset`; :mod:`.core` holds the distributions and tail integrals.
"""
from .asymptotic import (
    BayesianOptimal,
    Budgets,
    DemographicParity,
    GammaRule,
    GroupOblivious,
    InfeasibleBudget,
    ModelParams,
    SelectionOutcome,
    Thresholds,
    dQ_dxA,
    fraction,
    parse_algorithm,
    performance_gap,
    run_algorithm,
    utility_Q,
)
from .core import (
    NO_CUT,
    Beta,
    DomainError,
    GaussianMixture,
    GroupNoise,
    IntegrationError,
    J,
    Normal,
    Pareto,
    PosteriorParams,
    UnsupportedClosedForm,
    Uniform,
    estimate_law,
    joint_tail,
    posterior_mean,
    std_normal,
    tail_quality_mass,
)
from .dataset import DatasetExperimentConfig, ScoreRecord, load_scores, run_dataset_experiment
from .montecarlo import Candidate, ConfigError, SimConfig, SimResult, run_replications, sample_population

__version__ = "0.1.0"
