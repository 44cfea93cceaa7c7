"""
Privacy accountant: converging RDP/DP bounds for over-the-air DP federated
learning.

All functions are pure: they read a HyperParams and a PrivacyLedger (the
recorded alignment factors) and never touch simulator state, so accounting
can be replayed offline from a ledger CSV.

Logarithms are natural throughout ("log 1/delta" == ln(1/delta)).
"""

import logging
import math
from dataclasses import dataclass, field, replace

from core.errors import DomainError

logger = logging.getLogger(__name__)

STATUS_NO_SIGNAL = "no signal transmitted"
STATUS_SATURATED = "saturated"
STATUS_ACCUMULATING = "accumulating"

PHI_REFERENCES = ("last", "max")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class HyperParams:
    """Protocol and privacy scalars.  Defaults are the reference privacy-curve settings."""

    n: int = 10
    p: float = 1.0
    q: float = 1.0
    c: float = 2.0
    D: float = 0.5
    L: float = 1.0
    eta: float = 0.1
    sigma: float = 10.0
    delta: float = 1e-5
    dataset_size: int = 8
    dim: int = 2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if int(self.dataset_size) != self.dataset_size or self.dataset_size < 1:
            raise DomainError(
                f"dataset_size must be a positive integer, got {self.dataset_size!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim!r}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v!r}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta!r}")
        for name in ("c", "D", "L", "eta"):
            v = getattr(self, name)
            if math.isnan(v) or v <= 0.0:
                raise DomainError(f"{name} must be positive, got {v!r}")
        # sigma = 0 is the noiseless verification mode of the simulator;
        # accounting operations reject it separately.
        if math.isnan(self.sigma) or self.sigma < 0.0:
            raise DomainError(f"sigma must be non-negative, got {self.sigma!r}")

    @property
    def active_count(self) -> int:
        """|I^(t)| = round(p*n), floored at one device."""
        return max(1, _round_half_up(self.p * self.n))

    @property
    def batch_size(self) -> int:
        """|B_i^(t)| = round(q*|D_i|), floored at one sample."""
        return max(1, _round_half_up(self.q * self.dataset_size))

    @property
    def pqn(self) -> float:
        return self.p * self.q * self.n

    def with_changes(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass
class PrivacyLedger:
    """Per-round alignment factors and the quantities the bound is built on.

    ``phi_reference`` selects which gamma enters Phi: ``"last"`` (the final
    round's gamma, as the bound is stated) or ``"max"`` (sup over rounds,
    which keeps epsilon monotone for decreasing schedules).
    """

    gamma_seq: list = field(default_factory=list)
    gamma_sq_sum: float = 0.0
    phi: float = 0.0
    Gamma: float = 0.0
    phi_reference: str = "last"

    def __post_init__(self):
        if self.phi_reference not in PHI_REFERENCES:
            raise DomainError(
                f"phi_reference must be one of {PHI_REFERENCES}, got {self.phi_reference!r}")

    @classmethod
    def from_gammas(cls, params: HyperParams, gammas, phi_reference: str = "last"):
        ledger = cls(phi_reference=phi_reference)
        for g in gammas:
            ledger.append(params, g)
        return ledger

    def __len__(self):
        return len(self.gamma_seq)

    @property
    def reference_gamma(self) -> float:
        if not self.gamma_seq:
            raise DomainError("ledger is empty")
        if self.phi_reference == "max":
            return max(self.gamma_seq)
        return self.gamma_seq[-1]

    def append(self, params: HyperParams, gamma: float):
        """Record one executed round's alignment factor."""
        gamma = float(gamma)
        if math.isnan(gamma) or gamma < 0.0:
            raise DomainError(f"gamma must be non-negative, got {gamma!r}")
        # zero is only valid for a ledger that never transmitted
        silent = self.gamma_sq_sum == 0.0
        if self.gamma_seq and (gamma == 0.0) != silent:
            raise DomainError(
                f"round {len(self.gamma_seq) + 1}: gamma={gamma!r} mixes silent and "
                "transmitting rounds; every gamma must be positive")
        self.gamma_seq.append(gamma)
        self.gamma_sq_sum += gamma * gamma
        self.phi = phi(params, self.reference_gamma) if self.reference_gamma > 0 else 0.0
        self.Gamma = min(self.gamma_sq_sum, self.phi)

    def is_monotone(self) -> bool:
        return is_monotone_schedule(self.gamma_seq)

    def status(self) -> str:
        if self.Gamma == 0.0:
            return STATUS_NO_SIGNAL
        if self.phi <= self.gamma_sq_sum:
            return STATUS_SATURATED
        return STATUS_ACCUMULATING


def is_monotone_schedule(gammas) -> bool:
    """True when the gamma schedule never decreases."""
    gammas = list(gammas)
    return all(a <= b for a, b in zip(gammas, gammas[1:]))


# ── Validation helpers ────────────────────────────────────────────

def _check_alpha(alpha: float):
    if not alpha > 1.0:
        raise DomainError(f"alpha must be > 1, got {alpha!r}")


def _check_delta(delta: float):
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")


def _check_noise(params: HyperParams):
    if params.sigma == 0.0:
        raise DomainError("sigma = 0: without channel noise no finite privacy bound exists")


def _check_ledger(ledger: PrivacyLedger):
    if not ledger.gamma_seq:
        raise DomainError("ledger is empty")


def _sensitivity_factor(params: HyperParams) -> float:
    """2pqc^2 / sigma^2, the per-unit-Gamma RDP cost at alpha = 1."""
    _check_noise(params)
    return 2.0 * params.p * params.q * params.c ** 2 / params.sigma ** 2


# ── RDP bound and DP conversion ───────────────────────────────────

def phi(params: HyperParams, gamma_last: float) -> float:
    """Saturation term Phi for the final round's alignment factor."""
    if not gamma_last > 0.0:
        raise DomainError(f"gamma_last must be positive, got {gamma_last!r}")
    reach = (1.0 + params.eta * params.L) * math.sqrt(params.p * params.q) \
        * params.D * params.n / (2.0 * params.eta * params.c)
    return (gamma_last * (1.0 + reach)) ** 2


def gamma_total(params: HyperParams, ledger: PrivacyLedger) -> float:
    """Gamma = min{sum_t gamma_t^2, Phi}, recomputed from ``params``."""
    _check_ledger(ledger)
    ref = ledger.reference_gamma
    if ref == 0.0:
        return 0.0
    return min(ledger.gamma_sq_sum, phi(params, ref))


def rdp_epsilon(params: HyperParams, ledger: PrivacyLedger, alpha: float) -> float:
    """(alpha, eps)-RDP guarantee after the ledger's rounds."""
    _check_alpha(alpha)
    return alpha * _sensitivity_factor(params) * gamma_total(params, ledger)


def rdp_to_dp(eps_rdp: float, alpha: float, delta: float) -> float:
    """Convert an (alpha, eps)-RDP guarantee to (eps', delta)-DP."""
    _check_alpha(alpha)
    _check_delta(delta)
    if eps_rdp < 0.0:
        raise DomainError(f"eps_rdp must be non-negative, got {eps_rdp!r}")
    return eps_rdp + math.log(1.0 / delta) / (alpha - 1.0)


def _dp_from_gamma(params: HyperParams, Gamma: float) -> float:
    k = _sensitivity_factor(params) * Gamma
    return k + 2.0 * math.sqrt(k * math.log(1.0 / params.delta))


def dp_epsilon(params: HyperParams, ledger: PrivacyLedger) -> float:
    """Closed-form (eps, delta)-DP guarantee; 0 when nothing was transmitted."""
    Gamma = gamma_total(params, ledger)
    if Gamma == 0.0:
        logger.info("Gamma = 0: %s, eps = 0", STATUS_NO_SIGNAL)
        return 0.0
    return _dp_from_gamma(params, Gamma)


def optimal_alpha(params: HyperParams, ledger: PrivacyLedger) -> float:
    """The order at which the RDP-to-DP conversion gives the closed-form DP bound."""
    k = _sensitivity_factor(params) * gamma_total(params, ledger)
    if k == 0.0:
        raise DomainError(
            f"Gamma = 0 ({STATUS_NO_SIGNAL}): every alpha gives eps_rdp = 0, only delta remains")
    return 1.0 + math.sqrt(math.log(1.0 / params.delta) / k)


def baseline_composition_epsilon(params: HyperParams, ledger: PrivacyLedger,
                                 alpha: float) -> float:
    """Naive RDP composition: the bound without the saturating min."""
    _check_alpha(alpha)
    _check_ledger(ledger)
    return alpha * _sensitivity_factor(params) * ledger.gamma_sq_sum


def baseline_dp_epsilon(params: HyperParams, ledger: PrivacyLedger) -> float:
    """Baseline composition converted to DP at its own optimal order."""
    _check_ledger(ledger)
    if ledger.gamma_sq_sum == 0.0:
        return 0.0
    return _dp_from_gamma(params, ledger.gamma_sq_sum)


def crossover_round(params: HyperParams, gamma_const: float) -> int:
    """First T at which the min in Gamma saturates for constant gamma."""
    ratio = phi(params, gamma_const) / gamma_const ** 2
    # absorb last-bit noise so an exactly integral ratio is not pushed up
    return max(1, math.ceil(ratio * (1.0 - 1e-12)))


# ── Budget helpers ────────────────────────────────────────────────

def _gamma_budget(params: HyperParams, eps_target: float) -> float:
    """Largest Gamma whose DP guarantee stays within ``eps_target``."""
    if not eps_target > 0.0:
        raise DomainError(f"eps_target must be positive, got {eps_target!r}")
    log_inv_delta = math.log(1.0 / params.delta)
    k_max = (math.sqrt(log_inv_delta + eps_target) - math.sqrt(log_inv_delta)) ** 2
    return k_max / _sensitivity_factor(params)


def calibrate_sigma(params: HyperParams, ledger: PrivacyLedger, eps_target: float) -> float:
    """Channel-noise level at which ``dp_epsilon`` equals ``eps_target``."""
    if not eps_target > 0.0:
        raise DomainError(f"eps_target must be positive, got {eps_target!r}")
    Gamma = gamma_total(params, ledger)
    if Gamma == 0.0:
        return 0.0
    log_inv_delta = math.log(1.0 / params.delta)
    k_star = (math.sqrt(log_inv_delta + eps_target) - math.sqrt(log_inv_delta)) ** 2
    return math.sqrt(2.0 * params.p * params.q * params.c ** 2 * Gamma / k_star)


def rounds_within_budget(params: HyperParams, gamma_const: float,
                         eps_target: float) -> int | None:
    """Largest T with eps_DP(T) <= eps_target for constant gamma.

    Returns None when even the saturated guarantee fits the budget.
    """
    budget = _gamma_budget(params, eps_target)
    if phi(params, gamma_const) <= budget:
        return None
    return int(math.floor(budget / gamma_const ** 2))


# ── Curves ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class LedgerRow:
    t: int
    gamma: float
    gamma_sq_sum: float
    phi: float
    Gamma: float
    eps_rdp_alpha2: float
    eps_dp: float


LEDGER_HEADER = ("t", "gamma", "gamma_sq_sum", "phi", "Gamma", "eps_rdp_alpha2", "eps_dp")


def privacy_curve(params: HyperParams, gammas, phi_reference: str = "last"):
    """Ledger rows for T = 1..len(gammas), plus the baseline DP curve."""
    ledger = PrivacyLedger(phi_reference=phi_reference)
    rows, baseline = [], []
    warned = False
    for t, g in enumerate(gammas, start=1):
        ledger.append(params, g)
        if not warned and not ledger.is_monotone():
            logger.warning("gamma schedule decreases at t=%d; Phi uses the %s gamma",
                           t, phi_reference)
            warned = True
        rows.append(LedgerRow(
            t=t, gamma=float(g), gamma_sq_sum=ledger.gamma_sq_sum,
            phi=ledger.phi, Gamma=ledger.Gamma,
            eps_rdp_alpha2=rdp_epsilon(params, ledger, 2.0),
            eps_dp=dp_epsilon(params, ledger),
        ))
        baseline.append(baseline_dp_epsilon(params, ledger))
    return rows, baseline


def ledger_from_rows(params: HyperParams, rows, phi_reference: str = "last") -> PrivacyLedger:
    """Rebuild a ledger from recorded rows (ordered by t)."""
    return PrivacyLedger.from_gammas(params, (r.gamma for r in rows), phi_reference)
