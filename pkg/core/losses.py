"""
Loss models with analytically known constants.

Each model holds an equal-size i.i.d. dataset per device and exposes
per-sample gradients, the device and global empirical losses, and the
constants the convergence bound is stated in: smoothness L, local
variance bound sigma_l, dissimilarity bound sigma_g and the optimum f*.

Two tasks are provided:
  quadratic: l(theta; a) = 1/2 ||theta - a||^2, all constants closed-form.
  logistic:  l(theta; (x, y)) = log(1 + exp(-y <theta, x>)) with
             ||x|| = R; L = R^2 / 4, sigma_l / sigma_g measured at a point.
"""

import csv
import logging
from abc import ABC, abstractmethod

import numpy as np
from scipy import optimize, special

from core.errors import DimensionMismatchError, DomainError

logger = logging.getLogger(__name__)


class LossModel(ABC):
    """Finite-sum task over ``n_devices`` equal-size local datasets."""

    kind = "abstract"

    def __init__(self, features: np.ndarray, labels: np.ndarray | None = None):
        features = np.asarray(features, dtype=float)
        if features.ndim != 3:
            raise DomainError("features must have shape (devices, samples, dim)")
        self.features = features
        self.labels = None if labels is None else np.asarray(labels, dtype=float)
        self.n_devices, self.samples_per_device, self.dim = features.shape
        self.theta0 = np.zeros(self.dim)
        self.smoothness_L = float("nan")
        self.var_bound_sigma_l = float("nan")
        self.dissimilarity_sigma_g = float("nan")
        self.f_star = float("nan")

    # ── per-sample primitives ─────────────────────────────────────

    @abstractmethod
    def _sample_losses(self, theta: np.ndarray, x: np.ndarray, y) -> np.ndarray:
        ...

    @abstractmethod
    def _sample_gradients(self, theta: np.ndarray, x: np.ndarray, y) -> np.ndarray:
        ...

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionMismatchError(
                f"theta has shape {theta.shape}, loss model expects ({self.dim},)")
        return theta

    def _device_data(self, device, indices=None):
        x = self.features[device]
        y = None if self.labels is None else self.labels[device]
        if indices is not None:
            idx = np.asarray(indices, dtype=int)
            x = x[idx]
            y = None if y is None else y[idx]
        return x, y

    def per_sample_gradient(self, theta, device: int, index: int) -> np.ndarray:
        return self.sample_gradients(theta, device, [index])[0]

    def sample_gradients(self, theta, device: int, indices) -> np.ndarray:
        """Gradients of the selected samples of one device, shape (k, dim)."""
        theta = self._check_theta(theta)
        x, y = self._device_data(device, indices)
        return self._sample_gradients(theta, x, y)

    # ── empirical objectives ──────────────────────────────────────

    def device_loss(self, theta, device: int) -> float:
        theta = self._check_theta(theta)
        x, y = self._device_data(device)
        return float(np.mean(self._sample_losses(theta, x, y)))

    def global_loss(self, theta) -> float:
        theta = self._check_theta(theta)
        return float(np.mean([self.device_loss(theta, i) for i in range(self.n_devices)]))

    def loss_value(self, theta, samples=None) -> float:
        """f(theta), or the mean loss over ``samples`` = [(device, index), ...]."""
        if samples is None:
            return self.global_loss(theta)
        theta = self._check_theta(theta)
        vals = []
        for device, index in samples:
            x, y = self._device_data(device, [index])
            vals.append(self._sample_losses(theta, x, y)[0])
        return float(np.mean(vals))

    def device_gradient(self, theta, device: int) -> np.ndarray:
        theta = self._check_theta(theta)
        x, y = self._device_data(device)
        return self._sample_gradients(theta, x, y).mean(axis=0)

    def global_gradient(self, theta) -> np.ndarray:
        return np.mean([self.device_gradient(theta, i) for i in range(self.n_devices)], axis=0)

    # ── Variance and dissimilarity constants ──────────────────────

    def gradient_spread(self, theta) -> tuple[float, float]:
        """(sigma_l, sigma_g) at ``theta``: worst device over the dataset."""
        theta = self._check_theta(theta)
        grad_f = self.global_gradient(theta)
        local_var, dissim = [], []
        for i in range(self.n_devices):
            x, y = self._device_data(i)
            g = self._sample_gradients(theta, x, y)
            gi = g.mean(axis=0)
            local_var.append(np.mean(np.sum((g - gi) ** 2, axis=1)))
            dissim.append(np.sum((gi - grad_f) ** 2))
        return float(np.sqrt(max(local_var))), float(np.sqrt(max(dissim)))

    def refresh_constants(self, theta=None):
        """Re-measure sigma_l and sigma_g at ``theta`` (default theta0)."""
        theta = self.theta0 if theta is None else theta
        self.var_bound_sigma_l, self.dissimilarity_sigma_g = self.gradient_spread(theta)
        logger.debug("%s: sigma_l=%.6g sigma_g=%.6g", self.kind,
                     self.var_bound_sigma_l, self.dissimilarity_sigma_g)
        return self.var_bound_sigma_l, self.dissimilarity_sigma_g

    def metadata(self) -> dict:
        return {
            "loss": self.kind,
            "L": self.smoothness_L,
            "sigma_l": self.var_bound_sigma_l,
            "sigma_g": self.dissimilarity_sigma_g,
            "f_star": self.f_star,
        }


class QuadraticLoss(LossModel):
    """l(theta; a) = 1/2 ||theta - a||^2 over sample anchors a."""

    kind = "quadratic"

    def __init__(self, anchors: np.ndarray):
        super().__init__(anchors)
        anchors = self.features
        self.smoothness_L = 1.0
        center = anchors.reshape(-1, self.dim).mean(axis=0)
        self.minimizer = center
        self.f_star = 0.5 * float(np.mean(np.sum((anchors - center) ** 2, axis=2)))
        # gradients are theta - a, so their spread does not depend on theta
        self.refresh_constants()

    def _sample_losses(self, theta, x, y):
        return 0.5 * np.sum((theta - x) ** 2, axis=1)

    def _sample_gradients(self, theta, x, y):
        return theta - x


class LogisticLoss(LossModel):
    """Binary logistic loss, labels in {-1, +1}, feature norms <= R."""

    kind = "logistic"

    def __init__(self, features: np.ndarray, labels: np.ndarray, radius: float):
        super().__init__(features, labels)
        self.radius = float(radius)
        self.smoothness_L = self.radius ** 2 / 4.0
        self.refresh_constants()
        self.f_star = self._solve_f_star()

    def _sample_losses(self, theta, x, y):
        return np.logaddexp(0.0, -y * (x @ theta))

    def _sample_gradients(self, theta, x, y):
        margin = y * (x @ theta)
        return (-y * special.expit(-margin))[:, None] * x

    def _solve_f_star(self) -> float:
        flat_x = self.features.reshape(-1, self.dim)
        flat_y = self.labels.reshape(-1)

        def objective(theta):
            margin = flat_y * (flat_x @ theta)
            loss = np.mean(np.logaddexp(0.0, -margin))
            grad = (-(flat_y * special.expit(-margin))[:, None] * flat_x).mean(axis=0)
            return loss, grad

        res = optimize.minimize(objective, self.theta0, jac=True, method="L-BFGS-B")
        if not res.success:
            logger.warning("f* solve did not converge: %s", res.message)
        return float(res.fun)


# ── Factories ─────────────────────────────────────────────────────

def make_quadratic(dim: int, n_devices: int, samples_per_device: int,
                   rng: np.random.Generator, spread: float = 1.0, center=None,
                   heavy_tail_df: float | None = None) -> QuadraticLoss:
    """Quadratic task with anchors center + spread * z, z i.i.d. across devices.

    ``heavy_tail_df`` draws z from a Student-t with that many degrees of
    freedom instead of a standard normal, giving heavy-tailed gradients.
    """
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim!r}")
    shape = (n_devices, samples_per_device, dim)
    if heavy_tail_df is None:
        z = rng.standard_normal(shape)
    else:
        z = rng.standard_t(heavy_tail_df, size=shape)
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return QuadraticLoss(center + spread * z)


def make_logistic(dim: int, n_devices: int, samples_per_device: int,
                  rng: np.random.Generator, radius: float = 2.0) -> LogisticLoss:
    """Logistic task on Gaussian features rescaled to norm ``radius``."""
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim!r}")
    shape = (n_devices, samples_per_device, dim)
    g = rng.standard_normal(shape)
    norms = np.linalg.norm(g, axis=2, keepdims=True)
    features = radius * g / np.where(norms > 0.0, norms, 1.0)
    w_true = rng.standard_normal(dim)
    prob = special.expit(features @ w_true)
    labels = np.where(rng.uniform(size=prob.shape) < prob, 1.0, -1.0)
    return LogisticLoss(features, labels, radius)


# ── Dataset CSV ───────────────────────────────────────────────────

def export_dataset_csv(loss: LossModel, path):
    """One row per sample: device, label, feature_0..feature_{d-1}."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["device", "label"] + [f"x{j}" for j in range(loss.dim)])
        for i in range(loss.n_devices):
            for k in range(loss.samples_per_device):
                label = 0.0 if loss.labels is None else loss.labels[i, k]
                w.writerow([i, repr(float(label))] + [repr(float(v)) for v in loss.features[i, k]])


def import_dataset_csv(path, kind: str, radius: float = 2.0) -> LossModel:
    """Inverse of :func:`export_dataset_csv`."""
    per_device: dict[int, list] = {}
    with open(path, "r", encoding="utf-8") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            per_device.setdefault(int(row[0]), []).append([float(v) for v in row[1:]])
    rows = np.array([per_device[i] for i in sorted(per_device)])
    labels, features = rows[:, :, 0], rows[:, :, 1:]
    if kind == "quadratic":
        return QuadraticLoss(features)
    if kind == "logistic":
        return LogisticLoss(features, labels, radius)
    raise DomainError(f"unknown loss kind {kind!r}")
