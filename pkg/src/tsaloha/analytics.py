"""Closed-form performance analysis: conditional AoI and activity, transmission
success probability, the network average AoI, and its limiting regimes."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.optimize import brentq

from .channel import SystemParams
from .geometry import Topology, torus_distance
from .metadist import (
    MetaSolveResult,
    MomentEngineConfig,
    MomentKernel,
    ServiceRateDistribution,
    omega_delta,
    solve_meta_distribution,
)

__all__ = [
    "cond_avg_aoi",
    "cond_active_prob",
    "cond_success_prob",
    "solve_topology_rates",
    "activity_phi",
    "success_prob",
    "success_prob_approx",
    "success_prob_large_threshold",
    "avg_aoi",
    "avg_aoi_series",
    "avg_aoi_sparse",
    "optimal_update_rate_no_threshold",
    "avg_aoi_aggressive_bound",
    "avg_aoi_large_threshold_asymptote",
    "AnalyticResult",
    "analyze",
]


def _check_rates(eta: float, mu: float, age_threshold: int):
    if age_threshold < 0 or int(age_threshold) != age_threshold:
        raise ValueError(f"age threshold must be a nonnegative integer, got {age_threshold}")
    if not 0 <= eta <= 1:
        raise ValueError(f"update rate must lie in [0, 1], got {eta}")
    if not 0 <= mu <= 1:
        raise ValueError(f"service rate must lie in [0, 1], got {mu}")


def cond_avg_aoi(age_threshold: int, eta: float, mu: float) -> float:
    """Time-average AoI of a link with service rate mu under threshold gating.

    A vanishing update or service rate makes the age diverge; that case is
    reported as inf so parameter sweeps stay exception-free.
    """
    _check_rates(eta, mu, age_threshold)
    if eta == 0.0 or mu == 0.0:
        return math.inf
    q = eta * mu
    return (age_threshold + 1) / 2.0 + ((age_threshold - 1) / 2.0 + 1.0 / q) / (1.0 + age_threshold * q)


def cond_active_prob(age_threshold: int, eta: float, mu: float) -> float:
    """Long-run fraction of slots the link transmits: eta / (1 + A*eta*mu)."""
    _check_rates(eta, mu, age_threshold)
    return eta / (1.0 + age_threshold * eta * mu)


def cond_success_prob(topology: Topology, receiver: int, active_probs,
                      params: SystemParams) -> float:
    """Success probability of one link given every other link's activity.

    Product over all other sources (no cutoff; intended for small instances),
    times the noise factor.
    """
    active_probs = np.asarray(active_probs, dtype=float)
    if np.any((active_probs < 0) | (active_probs > 1)):
        raise ValueError("activity probabilities must lie in [0, 1]")
    alpha = params.pathloss_exponent
    theta_r = params.decode_threshold * params.link_distance ** alpha
    rx = topology.receivers[receiver]
    d = torus_distance(topology.sources, rx, topology.region)
    factors = 1.0 - active_probs / (1.0 + d ** alpha / theta_r)
    factors[receiver] = 1.0
    return float(math.exp(-params.noise_exponent) * np.prod(factors))


def solve_topology_rates(topology: Topology, params: SystemParams,
                         tol: float = 1e-12, max_iterations: int = 10_000,
                         damping: float = 0.5) -> np.ndarray:
    """Joint per-link fixed point of the success/activity coupling on one topology.

    Iterates mu_i -> success probability given a_j(mu_j) for all links until
    the rates settle; valid on small instances where the full interferer
    product is affordable.
    """
    n = topology.n_links
    mu = np.full(n, params.peak_service_rate)
    eta = params.update_rate
    A = params.age_threshold
    for _ in range(max_iterations):
        a = eta / (1.0 + A * eta * mu)
        new_mu = np.array([cond_success_prob(topology, i, a, params) for i in range(n)])
        delta = float(np.abs(new_mu - mu).max())
        mu = (1.0 - damping) * mu + damping * new_mu
        if delta < tol:
            return mu
    raise RuntimeError(f"per-topology rate fixed point did not converge (last move {delta:.3g})")


def activity_phi(dist: ServiceRateDistribution, eta: float, age_threshold: int) -> float:
    """Mean activity: integral of eta / (1 + A*eta*u) against the rate distribution."""
    points, masses = dist.support_measure()
    return float((masses * eta / (1.0 + age_threshold * eta * points)).sum())


def success_prob(phi: float, params: SystemParams) -> float:
    """Interference-limited transmission success probability for mean activity phi."""
    return math.exp(-params.interference_coefficient * omega_delta(params.delta) * phi)


def success_prob_approx(params: SystemParams, tol: float = 1e-12,
                        max_iterations: int = 100_000) -> float:
    """Scalar self-consistent success probability (mean-activity closure).

    Damped iteration from 1; with multiple solutions this lands on the largest
    root, the branch continuous from the sparse limit.
    """
    b = params.interference_coefficient * omega_delta(params.delta) * params.update_rate
    A = params.age_threshold
    eta = params.update_rate
    if A == 0:
        return math.exp(-b)
    p = 1.0
    for _ in range(max_iterations):
        target = math.exp(-b / (1.0 + A * eta * p))
        if abs(target - p) < tol:
            return target
        p = 0.5 * p + 0.5 * target
    raise RuntimeError(f"scalar success-probability iteration stalled at residual "
                       f"{abs(target - p):.3g}")


def success_prob_large_threshold(params: SystemParams) -> float:
    """Affine large-threshold approximation, clamped to [0, 1]."""
    b = params.interference_coefficient * omega_delta(params.delta) * params.update_rate
    value = 1.0 - b / (1.0 + params.age_threshold * params.update_rate)
    return min(1.0, max(0.0, value))


def avg_aoi(params: SystemParams, phi: float) -> float:
    """Network average AoI for mean activity phi.

    phi = 0 signals divergent age (returned as inf, not raised).
    """
    eta = params.update_rate
    if not 0 <= phi <= eta + 1e-12:
        raise ValueError(f"activity {phi} must lie in [0, eta={eta}]")
    if phi == 0.0:
        return math.inf
    A = params.age_threshold
    delta = params.delta
    exponent = (params.noise_exponent
                + params.interference_coefficient * omega_delta(delta) * phi
                / (1.0 - phi) ** (1.0 - delta))
    return (A + 1) / 2.0 * (1.0 - phi / eta) + math.exp(exponent) / eta


def avg_aoi_series(params: SystemParams, dist: ServiceRateDistribution,
                   cfg: MomentEngineConfig | None = None) -> float:
    """Average AoI with the reciprocal-rate expectation taken directly.

    The closed form replaces the k-th activity integral by phi^k (a convexity
    step), so it never exceeds this direct evaluation; both are exposed.
    """
    points, masses = dist.support_measure()
    kernel = MomentKernel(params, points, masses, cfg)
    phi = activity_phi(dist, params.update_rate, params.age_threshold)
    inv_rate_mean = kernel.moment(-1).real
    return ((params.age_threshold + 1) / 2.0 * (1.0 - phi / params.update_rate)
            + inv_rate_mean / params.update_rate)


def avg_aoi_sparse(params: SystemParams) -> float:
    """Noise-limited average AoI (exact as density vanishes)."""
    eta = params.update_rate
    A = params.age_threshold
    n0 = params.noise_exponent
    return (A + 1) / 2.0 + ((A - 1) / 2.0 + math.exp(n0) / eta) / (1.0 + A * eta * math.exp(-n0))


def optimal_update_rate_no_threshold(params: SystemParams) -> float:
    """Update rate minimizing the ungated average AoI, by bracketed root finding.

    Solves b * eta * (1 - delta*eta) * (1 - eta)^(delta-2) = 1 on (0, 1); the
    left side rises monotonically through 1, so the root is the unique
    stationary point and a minimum. No sign change in the bracket flags a
    regime where the age is monotone in the update rate.
    """
    b = params.interference_coefficient * omega_delta(params.delta)
    if not b > 0:
        raise ValueError("interference coefficient must be positive")
    delta = params.delta

    def residual(eta):
        return b * eta * (1.0 - delta * eta) * (1.0 - eta) ** (delta - 2.0) - 1.0

    lo, hi = 1e-9, 1.0 - 1e-9
    if residual(lo) * residual(hi) > 0:
        raise ValueError("no stationary update rate in (0, 1) for these parameters")
    return float(brentq(residual, lo, hi, xtol=1e-12, rtol=1e-12))


def avg_aoi_aggressive_bound(params: SystemParams, p_s: float) -> float:
    """Upper bound on the average AoI in the always-updating regime (eta = 1)."""
    if not 0 < p_s <= 1:
        raise ValueError(f"success probability must lie in (0, 1], got {p_s}")
    delta = params.delta
    exponent = (params.noise_exponent
                + params.interference_coefficient * omega_delta(delta)
                / (p_s / 2.0) ** (1.0 - delta))
    return params.age_threshold / 2.0 + math.exp(exponent)


def avg_aoi_large_threshold_asymptote(age_threshold: int) -> float:
    """Leading behavior of the average AoI as the threshold grows: A / 2."""
    return age_threshold / 2.0


@dataclasses.dataclass
class AnalyticResult:
    """Bundle of the converged meta distribution and the derived scalars."""

    meta_dist: ServiceRateDistribution
    phi: float
    success_prob: float
    avg_aoi: float
    avg_aoi_series: float
    diagnostics: dict

    def __post_init__(self):
        if not 0.0 < self.phi <= 1.0:
            raise ValueError(f"activity must lie in (0, 1], got {self.phi}")
        if not 0.0 <= self.success_prob <= 1.0:
            raise ValueError(f"success probability out of range: {self.success_prob}")


def analyze(params: SystemParams, cfg: MomentEngineConfig | None = None) -> AnalyticResult:
    """Solve the meta distribution and derive activity, success probability, and AoI."""
    cfg = cfg or MomentEngineConfig()
    solution: MetaSolveResult = solve_meta_distribution(params, cfg)
    dist = solution.distribution
    phi = activity_phi(dist, params.update_rate, params.age_threshold)
    p_s = math.exp(-params.noise_exponent) * success_prob(phi, params)
    diagnostics = {
        "iterations": solution.iterations,
        "final_residual": solution.final_residual,
        "residual_history": solution.residual_history,
        "quadrature_error": solution.quadrature_error,
        "radial_nodes": solution.radial_nodes,
        "series_terms_used": solution.series_terms_used,
    }
    return AnalyticResult(
        meta_dist=dist,
        phi=phi,
        success_prob=p_s,
        avg_aoi=avg_aoi(params, phi),
        avg_aoi_series=avg_aoi_series(params, dist, cfg),
        diagnostics=diagnostics,
    )
