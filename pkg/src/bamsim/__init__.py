"""Priority-class bandwidth allocation models with a discrete-event
simulator and an exhaustion-triggered Q-learning configuration manager."""

from .engine import (
    Admission,
    AllocationLedger,
    BamPolicy,
    Denial,
    DevolutionFailure,
    Draw,
    ExhaustionEvent,
    Grant,
    Model,
    PreemptionReport,
    Request,
    ResourceClass,
    admit,
    admit_with_devolution,
    allocations_by_class,
    attributed_usage,
    devolve,
    is_exhausted,
    release,
)
from .errors import (
    BamError,
    DuplicateNodeError,
    ParseError,
    SelfLinkError,
    SemanticError,
    UnknownEndpointError,
    UnknownLinkError,
    UnknownRequestError,
)
from .manager import (
    Hyperparams,
    ManagerAction,
    ManagerState,
    QLearningManager,
    QTable,
    RandomManager,
    StaticManager,
    legal_actions,
    observe,
    select_action,
    state_space_size,
    update,
)
from .scenario import Scenario, WorkloadSpec, generate_workload, load_scenario, load_scenario_file
from .simulator import Metrics, TraceLog, TraceRecord, run, verify_golden
from .topology import NetworkGraph, build_network, connectivity, validate_capacity
from .training import TrainResult, train

__version__ = "0.1.0"
