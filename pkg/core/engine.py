"""
Engine: wires the configuration to the simulator, accountant,
diagnostics and verifier.  Sits between the core modules and the CLI.
Sweep points and Monte Carlo replicates run on a thread pool; results are
always returned in sweep-index order, never completion order.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from core import accountant, diagnostics, rng as rngs, verifier
from core.channel import draw_round
from core.config import ExperimentConfig
from core.losses import make_logistic, make_quadratic
from core.simulator import run_training, select_devices

logger = logging.getLogger(__name__)


def build_loss(exp: ExperimentConfig):
    """Loss model for an experiment, drawn from the seed's data sub-stream."""
    params = exp.params
    data_rng = rngs.substream(exp.seed, rngs.LOSS_DATA)
    if exp.get("loss") == "logistic":
        return make_logistic(params.dim, params.n, params.dataset_size, data_rng,
                             radius=exp.get("feature_radius"))
    return make_quadratic(params.dim, params.n, params.dataset_size, data_rng,
                          spread=exp.get("loss_spread"), center=exp.get("loss_center"),
                          heavy_tail_df=exp.get("heavy_tail_df"))


@dataclass
class CurveResult:
    index: int
    overrides: dict
    rows: list
    baseline: list
    crossover: int | None


@dataclass
class SimulationResult:
    trace: object
    ledger: accountant.PrivacyLedger
    report: diagnostics.BoundReport
    comparison: diagnostics.TraceComparison
    eps_rdp: float
    eps_dp: float
    replay_eps_dp: float


class Engine:
    """
    Core logic: takes a validated experiment, fans sweep points out to
    workers and collects ordered results for the CLI to write.
    """

    def __init__(self, experiment: ExperimentConfig, workers: int | None = None):
        self.experiment = experiment
        self.workers = workers or experiment.get("workers")

    # ------------------------------------------------------------------
    # Parallel helpers
    # ------------------------------------------------------------------
    def _map(self, fn, items):
        items = list(items)
        if self.workers <= 1 or len(items) <= 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            # map() yields in submission order and re-raises the first error
            return list(pool.map(fn, items))

    # ------------------------------------------------------------------
    # Privacy curves
    # ------------------------------------------------------------------
    def privacy_curves(self) -> list[CurveResult]:
        def one(point):
            index, overrides, exp = point
            gammas = self.gamma_schedule(exp)
            rows, baseline = accountant.privacy_curve(exp.params, gammas,
                                                      exp.get("phi_reference"))
            crossover = None
            if exp.get("gamma_policy") == "constant":
                crossover = accountant.crossover_round(exp.params, exp.policy.value)
            logger.info("curve %d %s: converged eps=%.6g (crossover %s)",
                        index, overrides, rows[-1].eps_dp, crossover)
            return CurveResult(index, overrides, rows, baseline, crossover)

        return self._map(one, self.experiment.sweep_points())

    def gamma_schedule(self, exp: ExperimentConfig) -> list[float]:
        """gamma^(t) for t < T.  Constant policies need no simulation;
        power-limited schedules are drawn from the channel sub-streams."""
        if exp.policy.kind == "constant":
            return [exp.policy.value] * exp.T
        out = []
        for t in range(exp.T):
            active = select_devices(rngs.substream(exp.seed, rngs.DEVICE_SELECTION, t), exp.params)
            ch = draw_round(rngs.substream(exp.seed, rngs.FADING, t), exp.params, active,
                            exp.policy, exp.fading)
            out.append(ch.gamma)
        return out

    # ------------------------------------------------------------------
    # Simulation
    # ------------------------------------------------------------------
    def simulate(self, exp: ExperimentConfig | None = None, seed: int | None = None,
                 keep_states: bool = True) -> SimulationResult:
        exp = exp or self.experiment
        seed = exp.seed if seed is None else seed
        loss = build_loss(exp)
        trace, ledger = run_training(
            exp.params, loss, exp.policy, exp.T, seed, fading=exp.fading,
            normalization=exp.get("normalization"), projection=exp.get("projection"),
            keep_states=keep_states, phi_reference=exp.get("phi_reference"))
        report = diagnostics.bound_components(
            exp.params, loss, ledger.gamma_seq, exp.T,
            measured_min_grad_norm=trace.min_grad_norm())
        comparison = diagnostics.compare_trace(trace, report)

        eps_rdp = eps_dp = replay = math.nan
        if exp.params.sigma > 0.0:
            eps_rdp = accountant.rdp_epsilon(exp.params, ledger, exp.alpha)
            eps_dp = accountant.dp_epsilon(exp.params, ledger)
            replayed = accountant.PrivacyLedger.from_gammas(
                exp.params, list(ledger.gamma_seq), ledger.phi_reference)
            replay = accountant.dp_epsilon(exp.params, replayed)
        return SimulationResult(trace, ledger, report, comparison, eps_rdp, eps_dp, replay)

    def simulate_sweep(self) -> list[tuple[int, dict, SimulationResult]]:
        """One seeded run per sweep point, in sweep-index order."""
        def one(point):
            index, overrides, exp = point
            logger.info("simulating sweep point %d %s", index, overrides)
            return index, overrides, self.simulate(exp)

        return self._map(one, self.experiment.sweep_points())

    def replicate(self, metric, exp: ExperimentConfig | None = None,
                  replicates: int | None = None) -> list[float]:
        """Apply ``metric(trace)`` to independent seeded runs."""
        exp = exp or self.experiment
        seeds = rngs.replicate_seeds(exp.seed, replicates or exp.get("replicates"))

        def one(seed):
            loss = build_loss(exp.with_overrides(seed=seed))
            trace, _ = run_training(
                exp.params, loss, exp.policy, exp.T, seed, fading=exp.fading,
                normalization=exp.get("normalization"), projection=exp.get("projection"),
                keep_states=False)
            return float(metric(trace))

        return self._map(one, seeds)

    def sweep_replicates(self, metric) -> list[diagnostics.SweepPoint]:
        """Mean/median of ``metric`` per sweep point (single-axis sweeps)."""
        points = list(self.experiment.sweep_points())
        samples = [self.replicate(metric, exp) for _, _, exp in points]
        values = [next(iter(ov.values())) if ov else math.nan for _, ov, _ in points]
        return diagnostics.sweep_summary(values, samples)

    # ------------------------------------------------------------------
    # Trade-off
    # ------------------------------------------------------------------
    def tradeoff(self) -> list[tuple]:
        exp = self.experiment
        loss = build_loss(exp)
        gammas = self.gamma_schedule(exp)
        targets = exp.get("eps_targets") or list(np.logspace(-1, 2, 13))
        base = diagnostics.bound_components(exp.params, loss, gammas, exp.T)
        rows = []
        for eps in targets:
            rows.append((
                float(eps),
                diagnostics.tradeoff_bound(exp.params, loss, gammas, exp.T, exp.alpha, eps),
                diagnostics.tradeoff_bound_dp(exp.params, loss, gammas, exp.T, eps),
                base.C1, base.C2, base.C3,
            ))
        return rows

    # ------------------------------------------------------------------
    # Verifier sweep
    # ------------------------------------------------------------------
    def verify(self) -> list[verifier.OneStepCheck]:
        exp = self.experiment
        base = exp.params.with_changes(dim=1, n=exp.get("verify_n"),
                                       dataset_size=exp.get("verify_dataset_size"))
        cases = []
        for q in (1.0, exp.get("verify_subsampled_q")):
            params = base.with_changes(p=1.0, q=q)
            for gamma in exp.get("verify_gammas"):
                for alpha in exp.get("verify_alphas"):
                    cases.append((params, gamma, alpha))

        def one(case):
            params, gamma, alpha = case
            return verifier.one_step_bound_check(params, gamma, alpha)

        checks = self._map(one, cases)
        failed = [c for c in checks if c.verdict == verifier.FAIL]
        logger.info("verified %d cases: %d PASS, %d INFO, %d FAIL", len(checks),
                    sum(c.verdict == verifier.PASS for c in checks),
                    sum(c.verdict == verifier.INFO for c in checks), len(failed))
        return checks
