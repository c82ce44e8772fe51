"""Optimal incentive-compatible dynamic mechanisms for a single agent."""

from .agents import BestResponseResult, best_response, naive_plan
from .env import (
    DynamicEnvironment,
    HistoryIndex,
    InvalidEnvironment,
    load_environment,
    make_environment,
    save_environment,
    validate_environment,
)
from .estimators import MyopicMechanismDesigner, NaivePlanner, OptimalMechanismDesigner
from .experiment import ExperimentSpec, ResultRow, read_csv, run_experiment, write_csv
from .instances import (
    CnfFormula,
    GeneratorParams,
    gen_maxsat,
    gen_memoryless_gap,
    gen_random,
    maxsat_oracle,
    memoryless_ic_screen,
    parse_dimacs,
    report_independent_oracle,
)
from .lp import LinearProgram, LPSolution, LPSolverError, solve_lp
from .mechanism import TRUTHFUL, Mechanism, ReportingStrategy, check_ic, check_ir, evaluate
from .myopic import StaticInstance, opt_stat_mech, solve_myopic
from .optimal import InfeasibleProgram, SolveConfig, UnboundedProgram, build_lp, solve_optimal
from .plot import emit_plot

__version__ = "0.1.0"
