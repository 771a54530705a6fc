"""Edge federated learning simulator.

Simulates a three-tier system: user devices offload labelled data to edge
servers under a distribution-aware scheduler, uplink transfers are priced by
an OFDMA radio model with per-pair power allocation, and the resulting
server datasets train a shared softmax model by federated averaging. A
drift-bound audit checks the gap between heterogeneous and shuffled runs.
"""

__version__ = "0.1.0"

from .distributions import (
    Dataset,
    DirichletProfile,
    FeatureModel,
    GroupedProfile,
    LabelDistribution,
    ProbabilityVector,
    Sample,
    generate_clients,
    materialize,
    normalize,
    sample_dirichlet,
    separated_feature_model,
    uniform_distribution,
)
from .divergence import (
    DivergenceReport,
    SmoothnessEstimate,
    audit_drift_bound,
    complement,
    drift_bound,
    gradient_divergence,
    kl,
    lipschitz_bound,
)
from .federated import (
    ModelParams,
    PairedRun,
    RoundMetrics,
    TrainConfig,
    aggregate,
    evaluate_accuracy,
    global_loss,
    iid_counterpart,
    load_idx_dataset,
    local_update,
    loss_and_grad,
    run_fl,
    run_paired,
)
from .network import (
    OffloadPlan,
    RadioConfig,
    SubcarrierMap,
    Topology,
    TransferRecord,
    assign_subcarriers,
    channel_gain,
    place_topology,
    rate,
    sinr,
    system_cost,
    transfer_time,
)
from .power import (
    PairParams,
    PowerAllocation,
    PowerResult,
    allocate_power,
    effective_interference,
    objective,
    pair_params,
    quasiconvexity_probe,
    solve_pair,
)
from .scheduler import (
    OffloadTrace,
    Policy,
    SchedulerConfig,
    min_kl_step,
    run_scheduler,
    serviceable_set,
    uniform_target,
)
from .harness import (
    DataParams,
    ResultsBundle,
    ScenarioConfig,
    SchedulerParams,
    TopologyParams,
    TrainParams,
    build_population,
    desk_config,
    emit,
    evaluation_set,
    iid_reference,
    paper_scale_config,
    run_scenario,
    server_datasets_from_plan,
    sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
