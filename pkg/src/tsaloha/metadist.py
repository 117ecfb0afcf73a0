"""Service-rate distribution machinery: complex moments, characteristic-function
inversion, and the fixed-point solve of the discretized CDF.

The conditional success probability of a link, given the topology, has complex
moments of the form exp(-m*n0 - c * S(m)) where n0 is the noise exponent, c is
the interference coefficient, and S couples the path-loss geometry with the
activity of the other links through the unknown distribution itself. S(m) has
two equivalent evaluations:

* a binomial k-series, exact and cheap for small |m| (the series terminates at
  integer m), but catastrophically cancelling in float64 once |Im m| times the
  activity scale grows past a few dozen;
* a radial integral with both endpoint singularities absorbed by a
  Gauss-Jacobi rule, stable for the purely imaginary arguments the inversion
  needs at large frequencies.

The inversion therefore runs on the integral form; the series form remains the
reference for small and integer orders and the two are tested to agree.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import roots_jacobi

from .channel import SystemParams

__all__ = [
    "omega_delta",
    "generalized_binomial",
    "ServiceRateDistribution",
    "MomentEngineConfig",
    "MomentKernel",
    "moment",
    "moment_integer_reference",
    "gil_pelaez_cdf",
    "solve_meta_distribution",
    "MetaSolveResult",
    "QuadratureError",
    "SeriesError",
    "FixedPointError",
]


class QuadratureError(RuntimeError):
    """Inversion error estimate exceeded the configured tolerance."""

    def __init__(self, message, values=None, errors=None):
        super().__init__(message)
        self.values = values
        self.errors = errors


class SeriesError(RuntimeError):
    """The moment k-series failed to converge within the cutoff."""

    def __init__(self, message, partial=None, last_term=None):
        super().__init__(message)
        self.partial = partial
        self.last_term = last_term


class FixedPointError(RuntimeError):
    """The CDF fixed-point iteration did not reach the tolerance."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


def omega_delta(delta: float) -> float:
    """pi*delta / sin(pi*delta), the path-loss interference constant."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie strictly inside (0, 1), got {delta}")
    return math.pi * delta / math.sin(math.pi * delta)


def generalized_binomial(z, k: int):
    """Binomial coefficient z over k for complex z: z(z-1)...(z-k+1)/k!."""
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    out = complex(1.0)
    for i in range(k):
        out *= (z - i) / (i + 1)
    return out


def _isotonic(values: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(np.clip(values, 0.0, 1.0))


@dataclasses.dataclass
class ServiceRateDistribution:
    """Discretized CDF F(u) = P(service rate < u) on (0, upper).

    Mass not accounted for by the grid sits as an atom at ``upper``, the
    noise-limited maximum of the service rate.
    """

    grid: np.ndarray
    cdf: np.ndarray
    upper: float

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.cdf = np.asarray(self.cdf, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.cdf.shape:
            raise ValueError("grid and cdf must be 1-D arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.grid[0] <= 0 or self.grid[-1] >= self.upper:
            raise ValueError("grid must lie strictly inside (0, upper)")
        if np.any(np.diff(self.cdf) < -1e-12):
            raise ValueError("cdf must be nondecreasing")
        if self.cdf[0] < -1e-12 or self.cdf[-1] > 1.0 + 1e-12:
            raise ValueError("cdf values must lie in [0, 1]")

    @property
    def atom_mass(self) -> float:
        return max(0.0, 1.0 - float(self.cdf[-1]))

    def support_measure(self):
        """Discrete measure (points, masses): cell midpoints plus the terminal atom."""
        edges = np.concatenate(([0.0], self.grid))
        masses = np.diff(np.concatenate(([0.0], self.cdf)))
        points = 0.5 * (edges[:-1] + edges[1:])
        points = np.concatenate((points, [self.upper]))
        masses = np.concatenate((np.maximum(masses, 0.0), [self.atom_mass]))
        return points, masses

    def mean(self) -> float:
        points, masses = self.support_measure()
        return float((points * masses).sum())

    def evaluate(self, u) -> np.ndarray:
        """F at arbitrary u: linear between grid nodes, with the jump at ``upper``."""
        u = np.asarray(u, dtype=float)
        xs = np.concatenate(([0.0], self.grid, [self.upper]))
        ys = np.concatenate(([0.0], self.cdf, [self.cdf[-1]]))
        out = np.interp(u, xs, ys)
        return np.where(u > self.upper, 1.0, out)

    def meta(self, u) -> np.ndarray:
        """The meta distribution P(service rate >= u) = 1 - F(u)."""
        return 1.0 - self.evaluate(u)

    def write_csv(self, path, meta: dict | None = None):
        with open(path, "w", newline="\n") as fh:
            for key, value in (meta or {}).items():
                fh.write(f"# {key}={value}\n")
            fh.write("u,cdf,ccdf\n")
            for u, f in zip(self.grid, self.cdf):
                fh.write(f"{u:.12g},{f:.12g},{1.0 - f:.12g}\n")


def default_grid(upper: float, n: int) -> np.ndarray:
    """Grid on (0, upper) clustered at both ends, where the distribution concentrates."""
    x = np.arange(1, n + 1) / (n + 1.0)
    return upper * 0.5 * (1.0 - np.cos(np.pi * x))


@dataclasses.dataclass
class MomentEngineConfig:
    """Numerical controls for the moment series, the inversion, and the fixed point."""

    series_cutoff: int = 64
    series_tol: float = 1e-12
    quadrature_max_omega: float = 200.0
    quadrature_rule: str = "gk15-geometric"
    quadrature_tol: float = 1e-3
    max_panel_splits: int = 64
    radial_nodes: int = 0          # 0 selects automatically from the phase budget
    fixed_point_tol: float = 1e-4
    damping: float = 0.5
    max_iterations: int = 100
    grid_size: int = 200

    def __post_init__(self):
        if not (self.series_tol > 0 and self.quadrature_tol > 0 and self.fixed_point_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")


# Gauss-Kronrod 7-15 nodes and weights on [-1, 1]; Gauss weights are zero on
# the Kronrod-only nodes so both rules share one evaluation vector.
_GK_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769, -0.741531185599394,
    -0.586087235467691, -0.405845151377397, -0.207784955007898, 0.0,
    0.207784955007898, 0.405845151377397, 0.586087235467691, 0.741531185599394,
    0.864864423359769, 0.949107912342759, 0.991455371120813,
])
_K_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_G_WEIGHTS = np.array([
    0.0, 0.129484966168870, 0.0, 0.279705391489277,
    0.0, 0.381830050505119, 0.0, 0.417959183673469,
    0.0, 0.381830050505119, 0.0, 0.279705391489277,
    0.0, 0.129484966168870, 0.0,
])

_MIN_MASS = 1e-9        # measure atoms below this are ignored for scale estimates
_G_CAP = 1.0 - 1e-12    # activity factor clipped below one inside logs
_COMPRESS_TO = 48       # Gauss rule size replacing large discrete measures


def _gauss_compress(points: np.ndarray, masses: np.ndarray, n: int):
    """Gauss rule with n nodes matching the discrete measure's first 2n moments.

    Lanczos recursion with full reorthogonalization on the measure's support,
    then Golub-Welsch on the resulting Jacobi matrix. Exact for polynomials up
    to degree 2n-1, which covers both the moment k-series and the oscillation
    bandwidth of the inversion integrand.
    """
    m = points.size
    if n >= m:
        return points, masses
    total = masses.sum()
    q = np.sqrt(masses / total)
    basis = np.empty((n, m))
    alphas = np.empty(n)
    betas = np.empty(n - 1)
    basis[0] = q
    for k in range(n):
        xq = points * basis[k]
        alphas[k] = basis[k] @ xq
        if k == n - 1:
            break
        r = xq - alphas[k] * basis[k]
        if k > 0:
            r -= betas[k - 1] * basis[k - 1]
        r -= basis[:k + 1].T @ (basis[:k + 1] @ r)
        norm = np.linalg.norm(r)
        if norm < 1e-14:
            # measure supported on fewer than n points; fall back to the raw atoms
            return points, masses
        betas[k] = norm
        basis[k + 1] = r / norm
    vals, vecs = np.linalg.eigh(np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1))
    return vals, total * vecs[0] ** 2


class MomentKernel:
    """Moments of the service rate for a fixed activity measure.

    The measure assigns mass to service-rate values s; each carries the
    activity factor g(s) = eta / (1 + A*eta*s). Exposes the log-moment via the
    k-series (small orders) and the radial Gauss-Jacobi integral (imaginary
    orders of any size), plus the frequency derivative needed for tail
    corrections of the inversion integral.
    """

    def __init__(self, params: SystemParams, points, masses,
                 cfg: MomentEngineConfig | None = None):
        self.params = params
        self.cfg = cfg or MomentEngineConfig()
        points = np.asarray(points, dtype=float)
        masses = np.asarray(masses, dtype=float)
        if points.shape != masses.shape or points.ndim != 1:
            raise ValueError("points and masses must be matching 1-D arrays")
        if np.any(masses < -1e-12):
            raise ValueError("masses must be nonnegative")
        total = masses.sum()
        if not 0.99 <= total <= 1.0 + 1e-9:
            raise ValueError(f"measure mass must be ~1, got {total}")
        keep = masses > 0
        self.points = points[keep]
        self.masses_raw = masses[keep] / masses[keep].sum()
        eta = params.update_rate
        A = params.age_threshold
        g_raw = np.minimum(eta / (1.0 + A * eta * self.points), _G_CAP)
        # large measures are replaced by a moment-matched Gauss rule in the
        # activity variable, which is all the moment formulas touch
        self.g, self.masses = _gauss_compress(g_raw, self.masses_raw, _COMPRESS_TO)
        self.g = np.clip(self.g, 0.0, _G_CAP)
        self.noise_exponent = params.noise_exponent
        self.coefficient = params.interference_coefficient
        self.delta = params.delta
        self.omega_delta = omega_delta(self.delta)
        significant = self.masses > _MIN_MASS
        gmax = float(self.g[significant].max()) if significant.any() else float(self.g.max())
        self.phase_scale = abs(math.log1p(-min(gmax, 1.0 - 1e-9)))
        self._radial = None
        self.last_series_terms = 0
        self.radial_nodes_used = 0

    # ---- k-series route -------------------------------------------------

    def activity_integral(self, k: int = 1) -> float:
        """T_k: the k-th moment of the activity factor under the measure."""
        return float((self.masses * self.g ** k).sum())

    def log_moment_series(self, m) -> complex:
        """Binomial-series log-moment; terminates exactly at positive integer m."""
        m = complex(m)
        cfg = self.cfg
        term_binom = m            # C(m, k) by recursion
        term_jacobi = 1.0         # C(delta-1, k-1) by recursion
        total = term_binom * term_jacobi * self.activity_integral(1)
        small_streak = 0
        peak = abs(total)
        k = 1
        for k in range(2, cfg.series_cutoff + 1):
            term_binom *= (m - (k - 1)) / k
            term_jacobi *= (self.delta - 1.0 - (k - 2)) / (k - 1)
            term = term_binom * term_jacobi * self.activity_integral(k)
            total += term
            peak = max(peak, abs(term))
            if abs(term) < cfg.series_tol * (1.0 + abs(total)):
                small_streak += 1
                if small_streak >= 2:
                    break
            else:
                small_streak = 0
        else:
            if abs(term) > 10.0 * cfg.series_tol * (1.0 + abs(total)):
                raise SeriesError(
                    f"moment series did not converge within {cfg.series_cutoff} terms "
                    f"(last term magnitude {abs(term):.3g})",
                    partial=total, last_term=term)
        if peak > 1e12 * (1.0 + abs(total)):
            raise SeriesError(
                f"moment series lost precision (peak term {peak:.3g} vs sum {abs(total):.3g})",
                partial=total)
        self.last_series_terms = max(self.last_series_terms, k)
        return -m * self.noise_exponent - self.coefficient * self.omega_delta * total

    # ---- radial-integral route -------------------------------------------

    def _radial_rule(self):
        if self._radial is None:
            cfg = self.cfg
            if cfg.radial_nodes > 0:
                n = cfg.radial_nodes
            else:
                phase = cfg.quadrature_max_omega * self.phase_scale
                n = int(min(max(0.75 * phase + 48, 96), 768))
            x, w = roots_jacobi(n, self.delta - 1.0, -self.delta)
            nodes = 0.5 * (1.0 + x)
            # log of (1 - g*w) per (radial node, measure atom)
            logs = np.log1p(-np.outer(nodes, self.g))
            self._radial = (nodes, w, logs)
            self.radial_nodes_used = n
        return self._radial

    def log_moment_integral(self, m) -> np.ndarray:
        """Radial-integral log-moment, vectorized over an array of complex orders."""
        m_arr = np.atleast_1d(np.asarray(m, dtype=complex))
        nodes, w, logs = self._radial_rule()
        inner = np.exp(m_arr[:, None, None] * logs[None, :, :])       # (m, node, atom)
        expectation = inner @ self.masses                              # (m, node)
        h = (1.0 - expectation) / nodes[None, :]
        s_total = self.delta * (h @ w)
        out = -m_arr * self.noise_exponent - self.coefficient * s_total
        return out if np.ndim(m) else out[0]

    def log_moment(self, m) -> complex:
        """Route scalar orders: series when it is well-conditioned, else integral."""
        m = complex(m)
        if abs(m.imag) * self.phase_scale <= 25.0 and abs(m.real) <= 8.0:
            try:
                return self.log_moment_series(m)
            except SeriesError:
                pass
        return complex(self.log_moment_integral(m))

    def moment(self, m) -> complex:
        return complex(np.exp(self.log_moment(m)))

    def char_moments(self, omegas: np.ndarray) -> np.ndarray:
        """E[(service rate)^{j omega}] for an array of frequencies."""
        return np.exp(self.log_moment_integral(1j * np.asarray(omegas, dtype=float)))

    def self_check(self) -> float:
        """Compare the radial rule against a doubled one at the top frequency."""
        self._radial_rule()
        omega = self.cfg.quadrature_max_omega
        coarse = complex(self.log_moment_integral(1j * omega))
        refined = MomentKernel(self.params, self.points, self.masses_raw,
                               dataclasses.replace(self.cfg,
                                                   radial_nodes=min(2 * self.radial_nodes_used, 1024)))
        fine = complex(refined.log_moment_integral(1j * omega))
        return abs(coarse - fine) / (1.0 + abs(fine))


def _kernel_from_distribution(params, dist: ServiceRateDistribution,
                              cfg: MomentEngineConfig) -> MomentKernel:
    points, masses = dist.support_measure()
    return MomentKernel(params, points, masses, cfg)


def moment(m, dist: ServiceRateDistribution, params: SystemParams,
           cfg: MomentEngineConfig | None = None) -> complex:
    """m-th moment of the service rate under the distribution (complex m allowed)."""
    if m == 0:
        return complex(1.0)
    kernel = _kernel_from_distribution(params, dist, cfg or MomentEngineConfig())
    return kernel.moment(m)


def moment_integer_reference(m: int, dist: ServiceRateDistribution,
                             params: SystemParams) -> float:
    """Independent integer-order evaluation: explicit alternating-sign binomial sum
    with the radial path-loss integral done by adaptive quadrature."""
    from scipy.integrate import quad

    if m < 1 or int(m) != m:
        raise ValueError(f"reference form needs a positive integer order, got {m}")
    alpha = params.pathloss_exponent
    points, masses = dist.support_measure()
    eta = params.update_rate
    A = params.age_threshold
    g = eta / (1.0 + A * eta * points)
    total = 0.0
    for k in range(1, m + 1):
        radial, _ = quad(lambda v, k=k: (1.0 + v ** (alpha / 2.0)) ** (-k),
                         0.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=400)
        t_k = float((masses * g ** k).sum())
        total += math.comb(m, k) * (-1.0) ** (k + 1) * radial * t_k
    return math.exp(-m * params.noise_exponent - params.interference_coefficient * total)


# ---- Gil-Pelaez inversion ------------------------------------------------


def _panel_edges(max_omega: float) -> list[float]:
    edges = [0.0, min(0.5, max_omega)]
    while edges[-1] < max_omega:
        edges.append(min(edges[-1] * 2.0, max_omega))
    return edges


def _eval_panel(a, b, ln_u, moment_fn, limit_value):
    half = 0.5 * (b - a)
    omegas = 0.5 * (a + b) + half * _GK_NODES
    values = np.asarray(moment_fn(omegas), dtype=complex)
    phase = np.exp(np.outer(-1j * ln_u, omegas))
    integrand = (phase * values[None, :]).imag / (np.pi * omegas[None, :])
    tiny = omegas < 1e-8
    if tiny.any():
        # analytic limit of the integrand at vanishing frequency
        integrand[:, tiny] = limit_value[:, None]
    val = integrand @ (_K_WEIGHTS * half)
    err = np.abs(val - integrand @ (_G_WEIGHTS * half))
    return val, err


def _tail_correction(omega, ln_u, moment_fn):
    """Correction and error bound for the inversion tail beyond the top frequency.

    The leading integration-by-parts term is applied where the combined phase
    is clearly non-stationary. The residual error takes the tightest of three
    bounds: the next integration-by-parts order, a stationary-phase envelope
    from the second log derivative, and a geometric decay fit of |E| between
    half and full top frequency.
    """
    h = 1e-5 * omega
    e_half, e_minus, e_mid, e_plus = np.asarray(
        moment_fn(np.array([0.5 * omega, omega - h, omega, omega + h])), dtype=complex)
    corr = np.zeros_like(ln_u)
    amp = abs(e_mid)
    if amp < 1e-250:
        return corr, np.zeros_like(ln_u)
    dlog = (e_plus - e_minus) / (2.0 * h * e_mid)
    d2log = (e_plus - 2.0 * e_mid + e_minus) / (h * h * e_mid) - dlog * dlog
    chi_prime = dlog - 1j * ln_u
    abs_chi = np.abs(chi_prime)
    h_val = np.exp(-1j * omega * ln_u) * e_mid

    apply = abs_chi * omega > 10.0
    tail_term = h_val / (np.where(apply, chi_prime, 1.0) * omega)
    corr = np.where(apply, tail_term.imag / np.pi, 0.0)

    # bounds on the whole (uncorrected) tail integral
    stationary_bound = amp * math.sqrt(2.0 * math.pi / max(abs(d2log), 1e-15)) / omega
    ratio = amp / max(abs(e_half), 1e-300)
    decay_bound = (amp * math.log(2.0) * ratio / (1.0 - ratio)
                   if ratio < 0.95 else math.inf)
    whole = min(stationary_bound, decay_bound)

    ibp_err = 2.0 * np.abs(tail_term) / (np.maximum(abs_chi, 1e-12) * omega)
    err = np.where(apply,
                   np.minimum(ibp_err, whole + np.abs(tail_term)),
                   whole)
    err = np.where(np.isfinite(err), err, amp)
    return corr, err / np.pi


def _gil_pelaez(us, moment_fn, cfg: MomentEngineConfig):
    us = np.asarray(us, dtype=float)
    if np.any((us <= 0) | (us > 1)):
        raise ValueError("inversion abscissae must lie in (0, 1]")
    ln_u = np.log(us)
    # limit of the integrand at omega -> 0: (E[log rate] - log u) / pi
    omega_ref = 1e-4
    c1 = float(np.imag(np.asarray(moment_fn(np.array([omega_ref])))[0]) / omega_ref)
    limit_value = (c1 - ln_u) / np.pi

    panels = []
    for a, b in zip(_panel_edges(cfg.quadrature_max_omega)[:-1],
                    _panel_edges(cfg.quadrature_max_omega)[1:]):
        val, err = _eval_panel(a, b, ln_u, moment_fn, limit_value)
        panels.append([a, b, val, err])
    splits = 0
    while splits < cfg.max_panel_splits:
        total_err = np.sum([p[3] for p in panels], axis=0)
        if total_err.max() <= 0.5 * cfg.quadrature_tol:
            break
        worst = max(range(len(panels)), key=lambda i: panels[i][3].max())
        a, b = panels[worst][0], panels[worst][1]
        if b - a < 1e-9 * cfg.quadrature_max_omega:
            break
        mid = 0.5 * (a + b)
        left = _eval_panel(a, mid, ln_u, moment_fn, limit_value)
        right = _eval_panel(mid, b, ln_u, moment_fn, limit_value)
        panels[worst] = [a, mid, left[0], left[1]]
        panels.append([mid, b, right[0], right[1]])
        splits += 1
    integral = np.sum([p[2] for p in panels], axis=0)
    errors = np.sum([p[3] for p in panels], axis=0)
    corr, tail_err = _tail_correction(cfg.quadrature_max_omega, ln_u, moment_fn)
    values = np.clip(0.5 - integral + corr, 0.0, 1.0)
    return values, errors + tail_err


def gil_pelaez_cdf(u, moment_fn, cfg: MomentEngineConfig | None = None):
    """CDF via inversion: F(u) = 1/2 - (1/pi) Int Im{u^{-jw} E[rate^{jw}]} dw/w.

    ``moment_fn`` must accept an ndarray of frequencies w and return
    E[rate^{jw}] as a complex ndarray. Raises :class:`QuadratureError` when the
    error estimate (panels plus truncated tail) exceeds the tolerance.
    """
    cfg = cfg or MomentEngineConfig()
    scalar = np.ndim(u) == 0
    values, errors = _gil_pelaez(np.atleast_1d(u), moment_fn, cfg)
    if errors.max() > cfg.quadrature_tol:
        raise QuadratureError(
            f"inversion error estimate {errors.max():.3g} exceeds tolerance "
            f"{cfg.quadrature_tol:.3g}", values=values, errors=errors)
    return float(values[0]) if scalar else values


# ---- fixed point -----------------------------------------------------------


@dataclasses.dataclass
class MetaSolveResult:
    """Converged distribution plus solver diagnostics."""

    distribution: ServiceRateDistribution
    iterations: int
    final_residual: float
    residual_history: list[float]
    quadrature_error: float
    radial_nodes: int
    series_terms_used: int


def _chernoff_bound(grid, kernel: MomentKernel):
    """Markov bound P(rate < u) <= E[rate^-t] u^t, minimized over a few t."""
    ln_u = np.log(grid)
    bounds = np.full(grid.size, np.inf)
    for t in (1.0, 2.0, 4.0, 8.0):
        try:
            log_m = kernel.log_moment_series(-t).real
        except SeriesError:
            continue
        with np.errstate(over="ignore"):
            bounds = np.minimum(bounds, np.exp(log_m + t * ln_u))
    return bounds


def _invert_kernel(grid, kernel: MomentKernel, cfg: MomentEngineConfig):
    # abscissae whose CDF value is certified negligible skip the inversion;
    # this also removes the fastest-oscillating (smallest-u) integrands
    skip = _chernoff_bound(grid, kernel) < 0.1 * cfg.quadrature_tol
    values = np.zeros(grid.size)
    err = 0.0
    if (~skip).any():
        vals, errors = _gil_pelaez(grid[~skip], kernel.char_moments, cfg)
        values[~skip] = vals
        err = float(errors.max())
    return _isotonic(values), err


def solve_meta_distribution(params: SystemParams,
                            cfg: MomentEngineConfig | None = None) -> MetaSolveResult:
    """Solve the fixed-point functional equation for the service-rate CDF.

    Iterates inversion of the moment kernel built from the current iterate,
    with damping and an isotonic clamp, until the undamped sup-norm residual
    falls below the tolerance. With no age gating (A = 0) the moments do not
    depend on the distribution and a single inversion is exact; with no
    interferers the distribution is a pure atom at the noise-limited maximum.
    """
    cfg = cfg or MomentEngineConfig()
    upper = params.peak_service_rate
    grid = default_grid(upper, cfg.grid_size)
    if params.interference_coefficient < 1e-14:
        dist = ServiceRateDistribution(grid, np.zeros_like(grid), upper)
        return MetaSolveResult(dist, 0, 0.0, [], 0.0, 0, 0)

    start_kernel = MomentKernel(params.replace(age_threshold=0),
                                np.array([0.5]), np.array([1.0]), cfg)
    cdf, quad_err = _invert_kernel(grid, start_kernel, cfg)
    if params.age_threshold == 0:
        dist = ServiceRateDistribution(grid, cdf, upper)
        return MetaSolveResult(dist, 1, 0.0, [], quad_err,
                               start_kernel.radial_nodes_used,
                               start_kernel.last_series_terms)

    history = []
    series_terms = 0
    radial_nodes = 0
    for iteration in range(1, cfg.max_iterations + 1):
        dist = ServiceRateDistribution(grid, cdf, upper)
        points, masses = dist.support_measure()
        kernel = MomentKernel(params, points, masses, cfg)
        new_cdf, err = _invert_kernel(grid, kernel, cfg)
        quad_err = max(quad_err, err)
        radial_nodes = kernel.radial_nodes_used
        series_terms = max(series_terms, kernel.last_series_terms)
        residual = float(np.abs(new_cdf - cdf).max())
        history.append(residual)
        cdf = _isotonic((1.0 - cfg.damping) * cdf + cfg.damping * new_cdf)
        if residual < cfg.fixed_point_tol:
            dist = ServiceRateDistribution(grid, cdf, upper)
            return MetaSolveResult(dist, iteration, residual, history,
                                   quad_err, radial_nodes, series_terms)
    raise FixedPointError(
        f"fixed point did not reach {cfg.fixed_point_tol:g} within "
        f"{cfg.max_iterations} iterations (last residual {history[-1]:.3g}); "
        "consider stronger damping", residual_history=history)
