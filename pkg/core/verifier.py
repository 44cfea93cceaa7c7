"""
One-step numeric privacy oracle.

For a one-dimensional model, the law of theta^(1) is an exact Gaussian
mixture over every (active set, mini-batch) outcome.  Building that
mixture for two adjacent datasets and integrating the Renyi divergence on
a grid gives an independent check of the per-round bound
2 alpha p q c^2 gamma^2 / sigma^2.

Densities are kept in log space and the integral is a trapezoid rule
evaluated with logsumexp, so far tails never underflow.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from core.errors import CombinatorialExplosionError, DomainError, QuadratureSupportError
from core.simulator import clip

logger = logging.getLogger(__name__)

MAX_OUTCOMES = 10_000
SUPPORT_STDS = 8.0
POINTS_PER_STD = 40
HIGH_NOISE_RATIO = 5.0

PASS, FAIL, INFO = "PASS", "FAIL", "INFO"
VERDICT_HEADER = ("alpha", "gamma", "p", "q", "numeric", "bound", "margin", "verdict")


@dataclass(frozen=True)
class OutputDistribution:
    """Equal-variance Gaussian mixture evaluated on a 1-D grid."""

    grid: np.ndarray
    log_density: np.ndarray
    means: np.ndarray
    weights: np.ndarray
    std: float

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    def mass(self) -> float:
        return float(integrate.trapezoid(self.density, self.grid))


def make_grid(means, std: float, alpha_max: float = 8.0,
              points_per_std: int = POINTS_PER_STD) -> np.ndarray:
    """Grid wide enough for every mixture component and every tilted
    integrand P^alpha Q^(1-alpha) up to ``alpha_max``."""
    means = np.asarray(means, dtype=float)
    lo, hi = float(means.min()), float(means.max())
    tilt = (alpha_max - 1.0) * (hi - lo)
    lo -= tilt + (SUPPORT_STDS + 4.0) * std
    hi += tilt + (SUPPORT_STDS + 4.0) * std
    count = int(math.ceil((hi - lo) / std * points_per_std)) + 1
    return np.linspace(lo, hi, count)


def mixture(means, weights, std: float, grid: np.ndarray) -> OutputDistribution:
    means = np.asarray(means, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not std > 0.0:
        raise DomainError(f"mixture std must be positive, got {std!r}")
    if grid[0] > means.min() - SUPPORT_STDS * std or grid[-1] < means.max() + SUPPORT_STDS * std:
        raise QuadratureSupportError(
            f"grid [{grid[0]:.4g}, {grid[-1]:.4g}] does not extend {SUPPORT_STDS:g} std "
            f"beyond the component means")
    comp = stats.norm.logpdf(grid[None, :], loc=means[:, None], scale=std)
    log_density = special.logsumexp(comp + np.log(weights)[:, None], axis=0)
    dist = OutputDistribution(grid=grid, log_density=log_density, means=means,
                              weights=weights, std=std)
    mass = dist.mass()
    if abs(mass - 1.0) > 1e-6:
        raise QuadratureSupportError(f"density integrates to {mass!r} on the grid")
    return dist


def _trapezoid_log_weights(grid: np.ndarray) -> np.ndarray:
    w = np.empty_like(grid)
    dx = np.diff(grid)
    w[0], w[-1] = dx[0] / 2.0, dx[-1] / 2.0
    w[1:-1] = (dx[:-1] + dx[1:]) / 2.0
    return np.log(w)


def renyi_divergence_numeric(P: OutputDistribution, Q: OutputDistribution,
                             alpha: float) -> float:
    """D_alpha(P || Q) = 1/(alpha-1) log int P^alpha Q^(1-alpha) ds."""
    if not alpha > 1.0:
        raise DomainError(f"alpha must be > 1, got {alpha!r}")
    if P.grid.shape != Q.grid.shape or not np.array_equal(P.grid, Q.grid):
        raise DomainError("distributions must share one grid")
    log_integrand = alpha * P.log_density + (1.0 - alpha) * Q.log_density
    log_integral = special.logsumexp(log_integrand + _trapezoid_log_weights(P.grid))
    return max(0.0, float(log_integral) / (alpha - 1.0))


# ── Adjacent datasets ─────────────────────────────────────────────

@dataclass(frozen=True)
class SwapAdjacency:
    """Adjacent datasets in a 1-D model, given as per-sample gradients at
    theta^(0): ``base[i][k]`` for dataset D, and D' equal except that
    sample ``sample`` of device ``device`` has gradient ``replacement``."""

    base: tuple
    device: int = 0
    sample: int = 0
    replacement: float = 0.0

    @classmethod
    def worst_case(cls, n: int, dataset_size: int, c: float):
        """Swap one gradient +c for -c; every other sample contributes 0."""
        base = [[0.0] * dataset_size for _ in range(n)]
        base[0][0] = c
        return cls(base=tuple(tuple(r) for r in base), replacement=-c)

    @classmethod
    def identical(cls, n: int, dataset_size: int, c: float):
        adj = cls.worst_case(n, dataset_size, c)
        return cls(base=adj.base, replacement=adj.base[0][0])

    def neighbour(self):
        rows = [list(r) for r in self.base]
        rows[self.device][self.sample] = self.replacement
        return tuple(tuple(r) for r in rows)


def outcome_count(params) -> int:
    return math.comb(params.n, params.active_count) \
        * math.comb(params.dataset_size, params.batch_size) ** params.active_count


def step_means(params, gradients, gamma: float) -> tuple[np.ndarray, float]:
    """Means of theta^(1) over all sampling outcomes (theta^(0) = 0) and the
    common component std (eta/(pqn)) * sigma / gamma."""
    total = outcome_count(params)
    if total > MAX_OUTCOMES:
        raise CombinatorialExplosionError(
            f"{total} sampling outcomes exceed the cap of {MAX_OUTCOMES}; "
            f"use smaller n or dataset_size")
    scale = params.eta / params.pqn
    clipped = [[float(clip(np.array([g]), params.c)[0]) for g in row] for row in gradients]
    batch_sums = [{b: sum(row[k] for k in b)
                   for b in itertools.combinations(range(params.dataset_size), params.batch_size)}
                  for row in clipped]
    means = []
    for devices in itertools.combinations(range(params.n), params.active_count):
        for batches in itertools.product(*(batch_sums[i].values() for i in devices)):
            means.append(-scale * sum(batches))
    return np.array(means), scale * params.sigma / gamma


def output_distributions(params, gamma: float, adjacency: SwapAdjacency, alpha_max: float):
    means_d, std = step_means(params, adjacency.base, gamma)
    means_n, _ = step_means(params, adjacency.neighbour(), gamma)
    grid = make_grid(np.concatenate([means_d, means_n]), std, alpha_max)
    weights = np.full(len(means_d), 1.0 / len(means_d))
    return mixture(means_d, weights, std, grid), mixture(means_n, weights, std, grid)


@dataclass(frozen=True)
class OneStepCheck:
    alpha: float
    gamma: float
    p: float
    q: float
    numeric: float
    bound: float
    margin: float
    verdict: str
    in_regime: bool

    def row(self):
        return (self.alpha, self.gamma, self.p, self.q, self.numeric, self.bound,
                self.margin, self.verdict)


def in_high_noise_regime(params, gamma: float) -> bool:
    if params.p == 1.0 and params.q == 1.0:
        return True
    return params.sigma / (params.c * gamma) >= HIGH_NOISE_RATIO


def one_step_bound_check(params, gamma: float, alpha: float,
                         adjacency: SwapAdjacency | None = None) -> OneStepCheck:
    """Numeric one-round divergence against 2 alpha p q c^2 gamma^2 / sigma^2."""
    if params.dim != 1:
        raise DomainError(f"the one-step oracle needs a 1-D model, got dim={params.dim}")
    if params.sigma == 0.0:
        raise DomainError("sigma = 0: the one-step output is not absolutely continuous")
    adjacency = adjacency or SwapAdjacency.worst_case(params.n, params.dataset_size, params.c)
    P, Q = output_distributions(params, gamma, adjacency, alpha_max=alpha)
    numeric = renyi_divergence_numeric(P, Q, alpha)
    bound = 2.0 * alpha * params.p * params.q * params.c ** 2 * gamma ** 2 / params.sigma ** 2
    margin = (bound - numeric) / bound
    regime = in_high_noise_regime(params, gamma)
    if numeric <= bound * (1.0 + 1e-3):
        verdict = PASS
    elif regime:
        verdict = FAIL
    else:
        verdict = INFO
        logger.info("out-of-regime finding: alpha=%g gamma=%g p=%g q=%g numeric=%.6g > bound=%.6g",
                    alpha, gamma, params.p, params.q, numeric, bound)
    return OneStepCheck(alpha=alpha, gamma=gamma, p=params.p, q=params.q, numeric=numeric,
                        bound=bound, margin=margin, verdict=verdict, in_regime=regime)
