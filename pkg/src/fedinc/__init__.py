"""fedinc: latency modeling, scheduling, in-network aggregation and routing
for federated learning over an edge-cloud network.

Node 0 is always the cloud; edge nodes are numbered 1..M. Sizes are bits,
rates bit/s, times seconds. Decimal prefixes everywhere (1 MB = 8e6 bits,
1 Gbps = 1e9 bit/s).
"""

from fedinc.model import (
    ComputeTimeDist,
    ModelSpec,
    NodeCapacities,
    Topology,
    UserProfile,
    build_grid_topology,
    compute_time,
    model_size_bits,
    sample_compute_times,
)
from fedinc.latency import (
    Assignment,
    LatencyReport,
    RateAllocation,
    downlink_latency,
    equal_rate_allocation,
    evaluate_assignment,
    evaluate_with_rates,
)
from fedinc.aggregation import (
    EdgeMessage,
    LocalMessage,
    PartitionAggregate,
    cloud_load_metrics,
    cloud_merge,
    edge_aggregate,
    flat_aggregate,
    global_update,
    make_user_packet,
    pack_message,
    unpack_message,
)
from fedinc.routing import (
    LPResult,
    approx_bound,
    brute_force_optimal,
    only_cloud_assignment,
    only_cloud_uplink,
    randomized_round,
    solve_lp,
)
from fedinc.scheduling import (
    ScheduleResult,
    aggregate_all_schedule,
    bipartition_schedule,
    sequential_schedule,
    theorem1_bound,
)
from fedinc.training import (
    Dataset,
    LossSpec,
    TrainState,
    dual_objective,
    local_dual_update,
    local_sgd_update,
    normal_equation_solution,
    primal_objective,
    run_fl_round,
)
from fedinc.harness import ExperimentConfig, run_experiment, straggler_probability

__version__ = "0.1.0"
