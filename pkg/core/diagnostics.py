"""
Convergence-bound diagnostics.

Evaluates the four error components of the non-convex convergence bound
and the privacy-utility trade-off with every hidden O(.) constant set to 1.
Because those constants are unknown, measured gradient norms are only
compared for ordering and monotonicity, never for absolute domination.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core import accountant
from core.errors import DomainError

logger = logging.getLogger(__name__)

BOUND_HEADER = ("T", "C1", "C2", "C3", "C4", "total", "measured_min_grad_norm")


@dataclass(frozen=True)
class BoundReport:
    T: int
    C1: float
    C2: float
    C3: float
    C4: float
    total: float
    measured_min_grad_norm: float = float("nan")

    def row(self):
        return (self.T, self.C1, self.C2, self.C3, self.C4, self.total,
                self.measured_min_grad_norm)


def _gammas(gamma_seq, T: int) -> np.ndarray:
    g = np.asarray(gamma_seq, dtype=float)
    if T < 1 or len(g) != T:
        raise DomainError(f"gamma_seq has {len(g)} entries, expected T={T}")
    if np.any(g <= 0.0):
        raise DomainError("alignment factors must be positive")
    return g


def _initial_gap(loss, theta0=None) -> float:
    theta0 = loss.theta0 if theta0 is None else theta0
    f0 = loss.loss_value(theta0)
    gap = f0 - loss.f_star
    if gap < -1e-12 * max(1.0, abs(loss.f_star)):
        raise DomainError(f"f(theta0) = {f0!r} lies below f* = {loss.f_star!r}")
    return max(gap, 0.0)


def initialization_error(params, gap: float, T: int) -> float:
    """C1 = gap / (eta c T) + sqrt(gap / (eta T))."""
    return gap / (params.eta * params.c * T) + math.sqrt(gap / (params.eta * T))


def stochastic_error(params, sigma_l: float, sigma_g: float) -> float:
    """C2: sampling noise, dissimilarity and clipping error."""
    s2 = sigma_l ** 2 + sigma_g ** 2
    return math.sqrt(params.eta * params.L * s2 / params.pqn) \
        + min(params.eta * params.L * math.sqrt(s2), params.c)


def clipping_bias(params, sigma_l: float, sigma_g: float) -> float:
    """C3 = min{sigma_l + sigma_g, (sigma_l^2 + sigma_g^2) / c}."""
    return min(sigma_l + sigma_g, (sigma_l ** 2 + sigma_g ** 2) / params.c)


def channel_error_terms(params, gammas: np.ndarray, sigma: float) -> tuple[float, float]:
    """The two parts of C4: received-signal estimation and channel noise."""
    scale = params.dim * params.eta * params.L
    estimation = scale * sigma ** 2 / (params.pqn * params.c) * float(np.mean(1.0 / gammas ** 2))
    noise = math.sqrt(scale / params.pqn) * float(np.mean(sigma / gammas))
    return estimation, noise


def bound_components(params, loss, gamma_seq, T: int, theta0=None,
                     measured_min_grad_norm: float = float("nan")) -> BoundReport:
    """Evaluate C1..C4 for a run of T rounds with the given gamma schedule."""
    gammas = _gammas(gamma_seq, T)
    gap = _initial_gap(loss, theta0)
    sl, sg = loss.var_bound_sigma_l, loss.dissimilarity_sigma_g
    c1 = initialization_error(params, gap, T)
    c2 = stochastic_error(params, sl, sg)
    c3 = clipping_bias(params, sl, sg)
    c4 = sum(channel_error_terms(params, gammas, params.sigma))
    return BoundReport(T=T, C1=c1, C2=c2, C3=c3, C4=c4, total=c1 + c2 + c3 + c4,
                       measured_min_grad_norm=measured_min_grad_norm)


# Factors C4 carries over the trade-off's privacy terms at
# sigma^2 = 2 alpha p q c^2 Gamma / eps; the O(.) absorbs them.
SUBSTITUTION_FACTORS = (2.0, math.sqrt(2.0))


def privacy_terms(params, gamma_seq, T: int, alpha: float, eps_target: float,
                  phi_reference: str = "last") -> tuple[float, float]:
    """The two privacy-dependent terms of the RDP trade-off bound.

    With k = alpha d eta L / (n eps) these are k c mean(Gamma / gamma^2)
    and sqrt(k) c mean(sqrt(Gamma) / gamma).  Substituting the noise level
    that meets the target into C4 gives the same terms scaled by
    ``SUBSTITUTION_FACTORS``.
    """
    if not eps_target > 0.0:
        raise DomainError(f"eps_target must be positive, got {eps_target!r}")
    if not alpha > 1.0:
        raise DomainError(f"alpha must be > 1, got {alpha!r}")
    gammas = _gammas(gamma_seq, T)
    ledger = accountant.PrivacyLedger.from_gammas(params, gammas, phi_reference)
    Gamma = accountant.gamma_total(params, ledger)
    k = alpha * params.dim * params.eta * params.L / (params.n * eps_target)
    first = k * params.c * float(np.mean(Gamma / gammas ** 2))
    second = math.sqrt(k) * params.c * float(np.mean(math.sqrt(Gamma) / gammas))
    return first, second


def tradeoff_bound(params, loss, gamma_seq, T: int, alpha: float, eps_target: float,
                   theta0=None) -> float:
    """Right side of the (alpha, eps)-RDP privacy-utility trade-off."""
    if math.isinf(eps_target):
        first = second = 0.0
    else:
        first, second = privacy_terms(params, gamma_seq, T, alpha, eps_target)
    base = bound_components(params, loss, gamma_seq, T, theta0)
    return base.C1 + base.C2 + base.C3 + first + second


def substituted_channel_terms(params, gamma_seq, T: int, alpha: float,
                              eps_target: float) -> tuple[float, float]:
    """C4's two parts at the noise level sigma^2 = 2 alpha p q c^2 Gamma / eps."""
    gammas = _gammas(gamma_seq, T)
    ledger = accountant.PrivacyLedger.from_gammas(params, gammas)
    Gamma = accountant.gamma_total(params, ledger)
    sigma = math.sqrt(2.0 * alpha * params.p * params.q * params.c ** 2 * Gamma / eps_target)
    return channel_error_terms(params, gammas, sigma)


def tradeoff_bound_dp(params, loss, gamma_seq, T: int, eps_target_dp: float,
                      theta0=None) -> float:
    """(eps, delta)-DP trade-off: C1..C4 at the sigma calibrated to the DP target."""
    gammas = _gammas(gamma_seq, T)
    ledger = accountant.PrivacyLedger.from_gammas(params, gammas)
    sigma = accountant.calibrate_sigma(params, ledger, eps_target_dp)
    calibrated = params.with_changes(sigma=sigma)
    return bound_components(calibrated, loss, gammas, T, theta0).total


# ── Measured-vs-bound comparison ──────────────────────────────────

@dataclass(frozen=True)
class TraceComparison:
    measured_min_grad_norm: float
    bound_total: float
    ratio: float
    below_initialization_term: bool


def compare_trace(trace, report: BoundReport) -> TraceComparison:
    """Measured min gradient norm against the evaluated bound."""
    if len(trace) == 0:
        raise DomainError("trace is empty")
    measured = trace.min_grad_norm()
    ratio = measured / report.total if report.total > 0.0 else math.inf
    return TraceComparison(
        measured_min_grad_norm=measured,
        bound_total=report.total,
        ratio=ratio,
        below_initialization_term=measured <= report.C1,
    )


def monotone_verdict(values, measurements, increasing: bool = True, tol: float = 0.0) -> bool:
    """True when ``measurements`` move with ``values`` in the stated direction."""
    order = np.argsort(values)
    m = np.asarray(measurements, dtype=float)[order]
    diffs = np.diff(m)
    if increasing:
        return bool(np.all(diffs >= -tol))
    return bool(np.all(diffs <= tol))


@dataclass(frozen=True)
class SweepPoint:
    value: float
    mean: float
    median: float
    replicates: int


def sweep_summary(values, samples) -> list:
    """Mean and median per sweep value; ``samples[k]`` holds the replicates."""
    out = []
    for v, s in zip(values, samples):
        s = np.asarray(s, dtype=float)
        out.append(SweepPoint(value=float(v), mean=float(np.mean(s)),
                              median=float(np.median(s)), replicates=len(s)))
    return out
