"""DAG scheduling for heterogeneous edge fleets, with a seeded event simulator."""

from .cluster import (
    DeviceProfile,
    DeviceState,
    Fleet,
    LinkTable,
    SizeRegression,
    Tier,
    UnprofiledDevice,
    device_failure_prob,
    estimate_exec_time,
    fleet_from_dict,
    load_fleet,
    partition_networks,
    predict_output_size,
    probe_speed,
    update_size_regression,
)
from .dag import (
    ApplicationDag,
    DagError,
    StagedDag,
    TaskSpec,
    ValidationResult,
    assign_stages,
    dag_from_dict,
    load_dag,
    validate_dag,
)
from .scenario import ConfigError, ScenarioConfig, load_scenario
from .scheduler import (
    CandidateEntry,
    NoEligibleDevice,
    Placement,
    SchedulerKind,
    TaskPlacement,
    WeightConfig,
    baseline_schedule,
    min_latency_queue,
    pf_cost_reduction,
    schedule_application,
    task_cost,
    task_failure_prob,
)
from .simulator import SimReport, inject_failures, run_simulation
from .traffic import TrafficModel, apply_traffic

__version__ = "0.1.0"

__all__ = [
    "ApplicationDag",
    "CandidateEntry",
    "ConfigError",
    "DagError",
    "DeviceProfile",
    "DeviceState",
    "Fleet",
    "LinkTable",
    "NoEligibleDevice",
    "Placement",
    "ScenarioConfig",
    "SchedulerKind",
    "SimReport",
    "SizeRegression",
    "StagedDag",
    "TaskPlacement",
    "TaskSpec",
    "Tier",
    "TrafficModel",
    "UnprofiledDevice",
    "ValidationResult",
    "WeightConfig",
    "apply_traffic",
    "assign_stages",
    "baseline_schedule",
    "dag_from_dict",
    "device_failure_prob",
    "estimate_exec_time",
    "fleet_from_dict",
    "inject_failures",
    "load_dag",
    "load_fleet",
    "load_scenario",
    "min_latency_queue",
    "partition_networks",
    "pf_cost_reduction",
    "predict_output_size",
    "probe_speed",
    "run_simulation",
    "schedule_application",
    "task_cost",
    "task_failure_prob",
    "update_size_regression",
    "validate_dag",
]
