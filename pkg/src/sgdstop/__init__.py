"""SGD with matrix learning rates, estimated stopping criteria, and their bounds."""

from sgdstop.problems import (
    BcnConstants,
    LinearRegression,
    ParetoTail,
    Problem,
    Rademacher,
    Scenario,
    SineWell,
    make_problem,
)
from sgdstop.schedule import ScheduleCertificate, ScheduleSpec, StepMatrix, certify
from sgdstop.sgd import DivergenceError, RunConfig, Trajectory, run, step
from sgdstop.stopping import (
    CriterionConfig,
    EvalRecord,
    StopReport,
    run_with_criterion,
    sc0_evaluate,
    sc1_evaluate,
    sc2_evaluate,
)

__version__ = "0.1.0"
