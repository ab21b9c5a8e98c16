"""QoS-aware cluster scaling simulator with transfer Q-learning control."""

__version__ = "0.1.0"

from .controller import (
    FittedResponseCurve,
    LearningParams,
    QTable,
    RewardParams,
    RhqvAgent,
    compute_reward,
    inlt_map_state,
    inlt_transfer,
    islt_fit,
    islt_transfer,
    update_q,
)
from .simcore import (
    Cluster,
    ClusterState,
    ControlDecision,
    NodeModel,
    OperatingPoint,
    default_op_table,
    power,
    response_time,
)
from .workload import WorkloadTrace, gen_diurnal, gen_irregular, load_trace, save_trace

__all__ = [
    "Cluster",
    "ClusterState",
    "ControlDecision",
    "FittedResponseCurve",
    "LearningParams",
    "NodeModel",
    "OperatingPoint",
    "QTable",
    "RewardParams",
    "RhqvAgent",
    "WorkloadTrace",
    "compute_reward",
    "default_op_table",
    "gen_diurnal",
    "gen_irregular",
    "inlt_map_state",
    "inlt_transfer",
    "islt_fit",
    "islt_transfer",
    "load_trace",
    "power",
    "response_time",
    "save_trace",
    "update_q",
]
