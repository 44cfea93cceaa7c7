"""
Block flat-fading uplink: per-round gains, the alignment factor gamma^(t),
per-device scaling factors and additive Gaussian channel noise.

Gains stay constant within a round.  Every active device scales its
transmission by s_i = gamma / h_i so the server receives all gradients
with the common amplitude gamma.
"""

import logging
import math
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np
from scipy import stats

from core.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

FADING_KINDS = ("rayleigh", "constant")
POLICY_KINDS = ("constant", "power_limited")


@dataclass(frozen=True)
class FadingSpec:
    """Gain distribution, truncated below at ``h_min``.

    ``rayleigh`` draws from a Rayleigh(scale) conditioned on h > h_min;
    ``constant`` fixes every gain at ``value`` (degenerate fading).
    """

    kind: str = "rayleigh"
    scale: float = 1.0
    h_min: float = 0.1
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in FADING_KINDS:
            raise ConfigError(f"fading must be one of {FADING_KINDS}, got {self.kind!r}")
        if self.h_min < 0.0:
            raise ConfigError(f"h_min must be non-negative, got {self.h_min!r}")
        if self.kind == "rayleigh" and not self.scale > 0.0:
            raise ConfigError(f"Rayleigh scale must be positive, got {self.scale!r}")
        if self.kind == "constant" and not self.value > max(self.h_min, 0.0):
            raise ConfigError(
                f"constant fading gain {self.value!r} must exceed h_min={self.h_min!r} and 0")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, float(self.value))
        # inverse survival function restricted to the tail above h_min
        tail = stats.rayleigh.sf(self.h_min, scale=self.scale)
        u = 1.0 - rng.uniform(size=size)  # (0, 1]
        gains = stats.rayleigh.isf(u * tail, scale=self.scale)
        if np.any(gains <= 0.0):
            raise ConfigError("fading spec produced non-positive gains")
        return np.maximum(gains, np.nextafter(self.h_min, np.inf))

    def truncated_mean(self) -> float:
        """Analytic mean of the truncated gain distribution."""
        if self.kind == "constant":
            return float(self.value)
        return float(stats.rayleigh.expect(
            lambda h: h, scale=self.scale, lb=self.h_min, conditional=True))


@dataclass(frozen=True)
class GammaPolicy:
    """How the round's alignment factor is chosen.

    constant:       gamma = value every round.
    power_limited:  gamma = sqrt(P) * min_active(h) / (c * |B|), so every
                    transmission satisfies ||x_i|| <= sqrt(P).
    """

    kind: str = "constant"
    value: float = 1.0
    power_budget: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"gamma_policy must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.kind == "constant" and not self.value > 0.0:
            raise ConfigError(f"constant gamma must be positive, got {self.value!r}")
        if self.kind == "power_limited" and not self.power_budget > 0.0:
            raise ConfigError(f"power budget must be positive, got {self.power_budget!r}")

    def gamma(self, active_gains: np.ndarray, c: float, batch_size: int) -> float:
        if self.kind == "constant":
            return float(self.value)
        if math.isinf(c):
            raise DomainError("power_limited gamma needs a finite clipping norm")
        return math.sqrt(self.power_budget) * float(np.min(active_gains)) / (c * batch_size)


@dataclass(frozen=True)
class ChannelRound:
    """One round's channel realisation.  Immutable once drawn."""

    gains: MappingProxyType
    gamma: float
    scalings: MappingProxyType
    noise_sigma: float

    def check_alignment(self, rtol: float = 1e-12):
        for i, s in self.scalings.items():
            if not math.isclose(self.gains[i] * s, self.gamma, rel_tol=rtol):
                raise DomainError(
                    f"alignment violated for device {i}: h*s={self.gains[i] * s!r}, gamma={self.gamma!r}")

    def superpose(self, transmissions: dict, noise: np.ndarray) -> np.ndarray:
        """Received signal y = sum_i h_i x_i + zeta."""
        y = np.array(noise, dtype=float, copy=True)
        for i, x in transmissions.items():
            y += self.gains[i] * x
        return y


def draw_round(rng: np.random.Generator, params, active, policy: GammaPolicy,
               fading: FadingSpec) -> ChannelRound:
    """Sample one round's gains (all n devices) and derive gamma and scalings."""
    active = tuple(active)
    if not active:
        raise DomainError("active device set is empty")
    h = fading.sample(rng, params.n)
    gamma = policy.gamma(h[list(active)], params.c, params.batch_size)
    if not gamma > 0.0:
        raise DomainError(f"alignment factor must be positive, got {gamma!r}")
    gains = {i: float(h[i]) for i in range(params.n)}
    scalings = {i: gamma / gains[i] for i in active}
    logger.debug("gamma=%.6g min_gain=%.4g", gamma, min(gains[i] for i in active))
    return ChannelRound(
        gains=MappingProxyType(gains),
        gamma=gamma,
        scalings=MappingProxyType(scalings),
        noise_sigma=float(params.sigma),
    )


def channel_noise(rng: np.random.Generator, dim: int, sigma: float) -> np.ndarray:
    """zeta ~ N(0, sigma^2 I); sigma = 0 gives the zero vector."""
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim!r}")
    if sigma < 0.0:
        raise DomainError(f"sigma must be non-negative, got {sigma!r}")
    if sigma == 0.0:
        return np.zeros(dim)
    return rng.normal(0.0, sigma, size=dim)
