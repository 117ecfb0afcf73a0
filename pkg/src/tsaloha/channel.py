"""Link budget, fading generation, and SINR evaluation under Rayleigh fading."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .geometry import Topology, torus_distance

__all__ = [
    "db_to_linear",
    "linear_to_db",
    "LinkBudget",
    "SystemParams",
    "sample_fading",
    "sinr",
    "decode_success",
]


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclasses.dataclass(frozen=True)
class LinkBudget:
    """Transmit and noise powers in dBm; the linear SNR is derived once.

    The SNR here is transmit power over noise power: the link's path loss is
    applied separately in the SINR numerator.
    """

    tx_power_dbm: float = 17.0
    noise_power_dbm: float = -90.0

    @property
    def snr_rho(self) -> float:
        return db_to_linear(self.tx_power_dbm - self.noise_power_dbm)

    @classmethod
    def from_snr(cls, rho: float) -> "LinkBudget":
        """Budget with a given linear SNR (noise power pinned to 0 dBm)."""
        if not rho > 0:
            raise ValueError(f"snr must be positive, got {rho}")
        return cls(tx_power_dbm=linear_to_db(rho), noise_power_dbm=0.0)


@dataclasses.dataclass(frozen=True)
class SystemParams:
    """All scalar model parameters. Linear units internally; dB only at the CLI boundary."""

    density: float
    link_distance: float
    pathloss_exponent: float
    decode_threshold: float
    budget: LinkBudget
    update_rate: float
    age_threshold: int

    def __post_init__(self):
        if not self.density >= 0:
            raise ValueError(f"density must be nonnegative, got {self.density}")
        if not self.link_distance > 0:
            raise ValueError(f"link_distance must be positive, got {self.link_distance}")
        if not self.pathloss_exponent > 2:
            raise ValueError(
                f"pathloss_exponent must exceed 2, got {self.pathloss_exponent}")
        if not self.decode_threshold > 0:
            raise ValueError(f"decode_threshold must be positive, got {self.decode_threshold}")
        if not 0 < self.update_rate <= 1:
            raise ValueError(f"update_rate must lie in (0, 1], got {self.update_rate}")
        if not (self.age_threshold >= 0 and int(self.age_threshold) == self.age_threshold):
            raise ValueError(f"age_threshold must be a nonnegative integer, got {self.age_threshold}")

    @property
    def delta(self) -> float:
        """2 / pathloss_exponent, in (0, 1)."""
        return 2.0 / self.pathloss_exponent

    @property
    def snr_rho(self) -> float:
        return self.budget.snr_rho

    @property
    def noise_exponent(self) -> float:
        """theta * r^alpha / rho: the noise term of the success probability exponent."""
        return (self.decode_threshold
                * self.link_distance ** self.pathloss_exponent
                / self.budget.snr_rho)

    @property
    def peak_service_rate(self) -> float:
        """Noise-limited maximum of the conditional success probability."""
        return math.exp(-self.noise_exponent)

    @property
    def interference_coefficient(self) -> float:
        """lambda * pi * r^2 * theta^delta: scale of the interference exponent."""
        return (self.density * math.pi * self.link_distance ** 2
                * self.decode_threshold ** self.delta)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)


def paper_defaults(update_rate: float = 0.3, age_threshold: int = 0, **overrides) -> SystemParams:
    """Default parameter point: r=2.5, density 5e-2, alpha=3.8, 0 dB threshold, 17/-90 dBm."""
    values = dict(
        density=5e-2,
        link_distance=2.5,
        pathloss_exponent=3.8,
        decode_threshold=1.0,
        budget=LinkBudget(tx_power_dbm=17.0, noise_power_dbm=-90.0),
        update_rate=update_rate,
        age_threshold=age_threshold,
    )
    values.update(overrides)
    return SystemParams(**values)


def sample_fading(rng: np.random.Generator, size=None):
    """Unit-mean exponential fading, fresh per call (fading is never persisted)."""
    return rng.standard_exponential(size)


def sinr(receiver: int, topology: Topology, active, fadings, params: SystemParams,
         cutoff_radius: float | None = None) -> float:
    """SINR at the given link's receiver for one slot.

    ``active`` holds the indices of transmitting sources (must include the
    link's own source), ``fadings`` maps source->receiver pairs ``(j, i)`` to
    their fading draws. Interferers beyond ``cutoff_radius`` (when given) are
    skipped. A missing fading entry for a required pair is a programming
    error and raises KeyError.
    """
    if receiver not in active:
        raise ValueError(f"link {receiver} is not active; SINR is only evaluated on attempt slots")
    alpha = params.pathloss_exponent
    signal = fadings[(receiver, receiver)] * params.link_distance ** (-alpha)
    rx_pos = topology.receivers[receiver]
    interference = 0.0
    for j in sorted(active):
        if j == receiver:
            continue
        d = float(torus_distance(topology.sources[j], rx_pos, topology.region))
        if cutoff_radius is not None and d > cutoff_radius:
            continue
        interference += fadings[(j, receiver)] * d ** (-alpha)
    return signal / (interference + 1.0 / params.snr_rho)


def decode_success(sinr_value: float, threshold: float) -> bool:
    """Strict comparison: a packet decodes iff SINR exceeds the threshold."""
    return sinr_value > threshold
