"""
DPWFL training loop.

One round:  select round(p*n) devices, each samples round(q*|D_i|)
examples, clips every per-sample gradient to norm c, scales the sum by
s_i = gamma/h_i and transmits; the server receives the superposition plus
channel noise, divides by gamma and takes the step

    theta <- theta - eta / divisor * (sum_i sum_xi clip_c(grad) + zeta / gamma)

with divisor = p*q*n ("nominal", the update exactly as written) or
|I|*|B| ("mean", the mean-of-clipped-gradients variant).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core import rng as rngs
from core.accountant import PrivacyLedger
from core.channel import FadingSpec, GammaPolicy, channel_noise, draw_round
from core.errors import DimensionMismatchError, DomainError

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("nominal", "mean")


@dataclass(frozen=True)
class ModelState:
    theta: np.ndarray
    round: int = 0


@dataclass(frozen=True)
class RoundRecord:
    t: int
    active_set: tuple
    batch_indices: dict
    clipped_count: int
    gamma: float
    grad_estimate_norm: float
    true_grad_norm: float
    loss: float
    max_transmit_norm: float


@dataclass
class TrainingTrace:
    """Per-round records plus the visited model states theta^(0..T)."""

    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final_loss: float = float("nan")
    final_true_grad_norm: float = float("nan")

    def __len__(self):
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def true_grad_norms(self) -> np.ndarray:
        return np.array([r.true_grad_norm for r in self.records])

    def min_grad_norm(self) -> float:
        """min over t in [1, T] of ||grad f(theta^(t))||."""
        if not self.records:
            raise DomainError("trace is empty")
        later = [r.true_grad_norm for r in self.records[1:]]
        return float(min(later + [self.final_true_grad_norm]))


# ── Clipping ──────────────────────────────────────────────────────

def clip(g, c: float) -> np.ndarray:
    """clip_c(g) = g * min(1, c / ||g||); the zero vector maps to itself."""
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= c:
        return g
    return g * (c / norm)


def clip_rows(grads: np.ndarray, c: float) -> tuple[np.ndarray, int]:
    """Clip each row to norm c.  Returns (clipped, number of rows clipped)."""
    norms = np.linalg.norm(grads, axis=1)
    over = norms > c
    out = grads.copy()
    if np.any(over):
        out[over] = grads[over] * (c / norms[over])[:, None]
    return out, int(np.count_nonzero(over))


# ── Sampling ──────────────────────────────────────────────────────

def select_devices(rng: np.random.Generator, params) -> tuple:
    """Uniform without-replacement subset of round(p*n) devices."""
    chosen = rng.choice(params.n, size=params.active_count, replace=False)
    return tuple(sorted(int(i) for i in chosen))


def sample_batch(rng: np.random.Generator, params, device: int) -> tuple:
    """Uniform without-replacement subset of round(q*|D_i|) sample indices."""
    chosen = rng.choice(params.dataset_size, size=params.batch_size, replace=False)
    return tuple(sorted(int(i) for i in chosen))


def project_to_ball(theta: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto {x : ||x - center|| <= radius}."""
    offset = theta - center
    dist = float(np.linalg.norm(offset))
    if dist <= radius:
        return theta
    return center + offset * (radius / dist)


def _divisor(params, normalization: str) -> float:
    if normalization == "nominal":
        return params.pqn
    if normalization == "mean":
        return float(params.active_count * params.batch_size)
    raise DomainError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")


# ── One round ─────────────────────────────────────────────────────

def run_round(state: ModelState, params, loss, channel, active, batches,
              rng: np.random.Generator, normalization: str = "nominal",
              projection: tuple | None = None) -> tuple[ModelState, RoundRecord]:
    """Execute one DPWFL round and return the new state and its record.

    ``projection`` is an optional (center, radius) ball the iterate is
    projected back onto after the step.
    """
    theta = np.asarray(state.theta, dtype=float)
    if theta.shape != (params.dim,) or loss.dim != params.dim:
        raise DimensionMismatchError(
            f"state dim {theta.shape}, params dim {params.dim}, loss dim {loss.dim}")
    channel.check_alignment()

    transmissions, clipped_total, max_tx = {}, 0, 0.0
    for i in active:
        grads = loss.sample_gradients(theta, i, batches[i])
        clipped, n_clipped = clip_rows(grads, params.c)
        clipped_total += n_clipped
        x_i = channel.scalings[i] * clipped.sum(axis=0)
        max_tx = max(max_tx, float(np.linalg.norm(x_i)))
        transmissions[i] = x_i

    zeta = channel_noise(rng, params.dim, channel.noise_sigma)
    y = channel.superpose(transmissions, zeta)
    grad_hat = y / channel.gamma

    new_theta = theta - (params.eta / _divisor(params, normalization)) * grad_hat
    if projection is not None:
        new_theta = project_to_ball(new_theta, *projection)

    record = RoundRecord(
        t=state.round,
        active_set=tuple(active),
        batch_indices={i: tuple(batches[i]) for i in active},
        clipped_count=clipped_total,
        gamma=channel.gamma,
        grad_estimate_norm=float(np.linalg.norm(grad_hat)),
        true_grad_norm=float(np.linalg.norm(loss.global_gradient(theta))),
        loss=loss.loss_value(theta),
        max_transmit_norm=max_tx,
    )
    return ModelState(theta=new_theta, round=state.round + 1), record


# ── Full run ──────────────────────────────────────────────────────

def run_training(params, loss, policy: GammaPolicy, T: int, seed: int,
                 fading: FadingSpec | None = None, normalization: str = "nominal",
                 projection: bool = False, theta0=None, keep_states: bool = True,
                 phi_reference: str = "last") -> tuple[TrainingTrace, PrivacyLedger]:
    """Run T rounds from theta0 and return the trace and privacy ledger.

    Randomness is drawn from (seed, purpose, round[, device]) sub-streams.
    With ``projection`` the iterates stay in the ball of diameter D
    centred at theta0.
    """
    if int(T) != T or T < 1:
        raise DomainError(f"T >= 1 required, got {T!r}")
    fading = fading or FadingSpec()
    theta = loss.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    ball = (theta.copy(), params.D / 2.0) if projection else None

    state = ModelState(theta=theta.copy(), round=0)
    trace = TrainingTrace(states=[state] if keep_states else [])
    ledger = PrivacyLedger(phi_reference=phi_reference)

    for t in range(int(T)):
        active = select_devices(rngs.substream(seed, rngs.DEVICE_SELECTION, t), params)
        batches = {i: sample_batch(rngs.substream(seed, rngs.BATCH_SAMPLING, t, i), params, i)
                   for i in active}
        channel = draw_round(rngs.substream(seed, rngs.FADING, t), params, active, policy, fading)
        state, record = run_round(
            state, params, loss, channel, active, batches,
            rngs.substream(seed, rngs.CHANNEL_NOISE, t),
            normalization=normalization, projection=ball)
        trace.records.append(record)
        if keep_states:
            trace.states.append(state)
        ledger.append(params, channel.gamma)
        logger.debug("t=%d loss=%.6g |grad|=%.4g gamma=%.4g clipped=%d",
                     t, record.loss, record.true_grad_norm, record.gamma, record.clipped_count)
        if not math.isfinite(record.loss):
            logger.warning("loss diverged at round %d", t)

    trace.final_loss = loss.loss_value(state.theta)
    trace.final_true_grad_norm = float(np.linalg.norm(loss.global_gradient(state.theta)))
    if not keep_states:
        trace.states.append(state)
    logger.info("trained %d rounds: final loss %.6g, min |grad| %.6g",
                T, trace.final_loss, trace.min_grad_norm())
    return trace, ledger


TRACE_HEADER = ("t", "loss", "true_grad_norm", "grad_estimate_norm", "clipped_count", "gamma")


def trace_rows(trace: TrainingTrace):
    for r in trace.records:
        yield (r.t, r.loss, r.true_grad_norm, r.grad_estimate_norm, r.clipped_count, r.gamma)
