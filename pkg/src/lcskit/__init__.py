"""lcskit: a supervised learning classifier system (UCS) with pluggable
parent selection, benchmark problem generators, and a seeded experiment
harness."""

from .engine import (
    MatchResult,
    Population,
    UcsTrainer,
    cover,
    crossover_two_point,
    delete_excess,
    form_match_and_correct_sets,
    ga_should_trigger,
    insert_classifier,
    mutate_condition,
    parse_population_snapshot,
    population_snapshot,
    predict,
    run_ga_cycle,
    subsumption_pass,
    train_step,
)
from .errors import ContractViolationError, DataFormatError, EnumerationLimitError
from .experiments import (
    ExperimentPlan,
    Histogram,
    MetricPoint,
    RunMetrics,
    aggregate_runs,
    coverage_counts,
    coverage_histogram,
    derive_seed,
    parameter_sweep,
    run_experiment,
    run_trial,
    split_dataset,
)
from .model import (
    Classifier,
    Dataset,
    Sample,
    TernaryCondition,
    TernarySymbol,
    UcsConfig,
    is_more_general,
    matches,
    subsumes,
    update_on_outcome,
)
from .problems import (
    ProblemKind,
    ProblemSpec,
    gen_boolean_dataset,
    gen_led,
    load_car_eval,
    load_dataset,
    mux_class,
    parity_class,
    sample_boolean_dataset,
    save_dataset,
)
from .selection import (
    CandidateView,
    CaseSet,
    SelectionKind,
    SelectionStrategy,
    select_batch_lexicase,
    select_lexicase,
    select_parent,
    select_roulette,
    select_tournament,
)

__version__ = "0.1.0"
