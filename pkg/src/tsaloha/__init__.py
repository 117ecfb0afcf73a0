"""Age-threshold slotted ALOHA toolkit.

Two engines that validate each other: a slot-synchronous Monte Carlo simulator
of Poisson bipolar networks under SINR decoding, and an analytical engine for
the service-rate meta distribution and the network average age of information.
"""

from .channel import (
    LinkBudget,
    SystemParams,
    db_to_linear,
    decode_success,
    linear_to_db,
    paper_defaults,
    sample_fading,
    sinr,
)
from .geometry import (
    Region,
    Topology,
    load_topology,
    neighbors_within,
    sample_topology,
    save_topology,
    topology_from_points,
    torus_distance,
)
from .simulate import (
    SimConfig,
    SimResult,
    default_cutoff_radius,
    default_warmup,
    empirical_meta_ccdf,
    run_replicated,
    run_simulation,
    simulate_single_link,
    single_link_oracle,
)
from .metadist import (
    MetaSolveResult,
    MomentEngineConfig,
    MomentKernel,
    ServiceRateDistribution,
    generalized_binomial,
    gil_pelaez_cdf,
    moment,
    omega_delta,
    solve_meta_distribution,
)
from .analytics import (
    AnalyticResult,
    activity_phi,
    analyze,
    avg_aoi,
    avg_aoi_aggressive_bound,
    avg_aoi_large_threshold_asymptote,
    avg_aoi_series,
    avg_aoi_sparse,
    cond_active_prob,
    cond_avg_aoi,
    cond_success_prob,
    optimal_update_rate_no_threshold,
    solve_topology_rates,
    success_prob,
    success_prob_approx,
    success_prob_large_threshold,
)

__version__ = "0.1.0"
