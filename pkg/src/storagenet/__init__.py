"""Online control of generalized energy-storage networks.

Plans bound-optimal controller parameters, runs the per-period online
optimization over storage operations and DC network flows, and audits the
feasibility and sub-optimality guarantees by simulation.
"""
__version__ = "0.1.0"

from .cost import (  # noqa: E402
    ConstantPrice,
    CostModel,
    CostRealization,
    CostTerm,
    SchedulePrice,
    UniformPrice,
    arbitrage_cost,
    balancing_cost,
    day_night_schedule,
    evaluate_cost,
    realize,
    subderivative_bounds,
    unmet_demand_cost,
)
from .network import PowerNetwork, build_network, flow_feasible, net_inflow  # noqa: E402
from .planner import (  # noqa: E402
    ControllerParams,
    gamma_w_region,
    markov_bound,
    plan_parameters,
    suboptimality_bound,
)
from .policies import (  # noqa: E402
    GreedyController,
    LyapunovController,
    NoStorageController,
    greedy_action,
    make_controller,
    no_storage_action,
)
from .scenario import dumps, load_scenario, loads  # noqa: E402
from .simulation import Scenario, compare, run, summarize  # noqa: E402
from .stochastic import (  # noqa: E402
    EmpiricalDisturbance,
    LaplaceDisturbance,
    MarkovChain,
    MarkovDisturbance,
    return_time_moments,
)
from .storage import StorageSpec, net_injection, step, validate_storage  # noqa: E402
from .system import StorageSystem  # noqa: E402
