"""Tests for core.engine."""

import math

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

from core import diagnostics, verifier
from core.config import build_experiment, load_config
from core.engine import Engine, build_loss


def _engine(preset=None, workers=None, **overrides):
    return Engine(build_experiment(load_config(preset=preset, overrides=overrides)), workers)


class PrivacyCurveTest(parameterized.TestCase):

    def test_default_curve_converges(self):
        (curve,) = _engine(T=400).privacy_curves()
        self.assertEqual(curve.crossover, 218)
        eps = [r.eps_dp for r in curve.rows]
        self.assertAlmostEqual(eps[-1], 45.72, delta=0.01)
        self.assertTrue(all(e == eps[217] for e in eps[217:]))
        self.assertTrue(np.all(np.diff(eps) >= 0.0))

    @parameterized.parameters(1, 3)
    def test_diameter_sweep(self, workers):
        curves = _engine("fig1a", workers).privacy_curves()
        self.assertEqual([c.overrides["D"] for c in curves], [0.25, 0.5, 1.0])
        converged = [c.rows[-1].eps_dp for c in curves]
        self.assertLess(converged[0], converged[1])
        self.assertLess(converged[1], converged[2])
        for c in curves:
            eps = np.array([r.eps_dp for r in c.rows])
            self.assertTrue(np.all(np.diff(eps) >= 0.0))
            self.assertLessEqual(c.crossover, len(eps))
            self.assertTrue(np.all(eps[c.crossover - 1:] == eps[-1]))
            past = slice(c.crossover, None)
            self.assertTrue(np.all(np.array(c.baseline)[past] > eps[past]))

    def test_sampling_sweep(self):
        curves = _engine("fig1b").privacy_curves()
        by_rate = {(c.overrides["p"], c.overrides["q"]): np.array([r.eps_dp for r in c.rows])
                   for c in curves}
        full = by_rate[(1.0, 1.0)]
        for key in ((0.5, 1.0), (1.0, 0.5), (0.5, 0.5)):
            self.assertTrue(np.all(by_rate[key] <= full), key)
        self.assertTrue(np.all(by_rate[(0.5, 0.5)] <= by_rate[(0.5, 1.0)]))
        self.assertTrue(np.all(by_rate[(0.5, 0.5)] <= by_rate[(1.0, 0.5)]))

    def test_parallel_matches_serial(self):
        serial = _engine("fig1a", 1).privacy_curves()
        parallel = _engine("fig1a", 4).privacy_curves()
        self.assertEqual([c.rows for c in serial], [c.rows for c in parallel])

    def test_power_limited_schedule_matches_simulation(self):
        engine = _engine(T=25, gamma_policy="power_limited", power_budget=4.0)
        result = engine.simulate()
        self.assertEqual(engine.gamma_schedule(engine.experiment), result.ledger.gamma_seq)


class SimulationTest(parameterized.TestCase):

    def test_replay_accounting(self):
        result = _engine(T=60).simulate()
        self.assertLen(result.ledger, 60)
        self.assertAlmostEqual(result.replay_eps_dp, result.eps_dp, delta=1e-12)
        self.assertEqual(result.report.T, 60)
        self.assertTrue(math.isfinite(result.comparison.ratio))

    def test_seed_replay(self):
        a = _engine(T=30, seed=5).simulate()
        b = _engine(T=30, seed=5).simulate()
        self.assertEqual(a.trace.records, b.trace.records)
        self.assertEqual(a.report, b.report)

    def test_noiseless_run_decreases_loss(self):
        result = _engine(T=6, sigma=0.0, c=1e6).simulate()
        self.assertTrue(np.all(np.diff(result.trace.losses()) < 0.0))
        self.assertTrue(math.isnan(result.eps_dp))

    def test_logistic_task(self):
        engine = _engine(T=20, loss="logistic", feature_radius=2.0)
        self.assertEqual(build_loss(engine.experiment).smoothness_L, 1.0)
        self.assertLen(engine.simulate().trace, 20)

    def test_heavy_tailed_clipping_sweep(self):
        engine = _engine(T=100, sigma=0.0, normalization="mean", loss_center=[4.0, 4.0],
                         heavy_tail_df=2.0, replicates=20, sweep={"c": [0.5, 2.0, 8.0]})
        points = engine.sweep_replicates(lambda trace: trace.final_loss)
        self.assertEqual([p.value for p in points], [0.5, 2.0, 8.0])
        self.assertTrue(diagnostics.monotone_verdict(
            [p.value for p in points], [p.median for p in points], increasing=False))
        loss = build_loss(engine.experiment)
        c3 = [diagnostics.bound_components(exp.params, loss, [1.0] * 100, 100).C3
              for _, _, exp in engine.experiment.sweep_points()]
        self.assertTrue(diagnostics.monotone_verdict([0.5, 2.0, 8.0], c3, increasing=False))

    def test_channel_noise_sweep(self):
        engine = _engine(T=200, c=100.0, replicates=20, workers=2,
                         sweep={"sigma": [1.0, 10.0, 100.0]})
        points = engine.sweep_replicates(lambda trace: trace.min_grad_norm())
        self.assertTrue(diagnostics.monotone_verdict(
            [p.value for p in points], [p.median for p in points], increasing=True))


class TradeoffAndVerifyTest(parameterized.TestCase):

    def test_tradeoff_rows(self):
        engine = _engine(T=100, eps_targets=[0.5, 2.0, 8.0])
        rows = engine.tradeoff()
        self.assertEqual([r[0] for r in rows], [0.5, 2.0, 8.0])
        bounds = [r[1] for r in rows]
        self.assertGreater(bounds[0], bounds[1])
        self.assertGreater(bounds[1], bounds[2])
        for r in rows:
            self.assertGreater(r[1], r[3] + r[4] + r[5])
            self.assertGreater(r[2], r[3] + r[4] + r[5])

    def test_default_grid(self):
        self.assertLen(_engine(T=10).tradeoff(), 13)

    def test_default_verify_sweep(self):
        checks = _engine(workers=4).verify()
        self.assertLen(checks, 2 * 3 * 4)
        for check in checks:
            if check.in_regime:
                self.assertEqual(check.verdict, verifier.PASS, check)
            else:
                self.assertNotEqual(check.verdict, verifier.FAIL, check)
            if check.q == 1.0:
                self.assertLess(abs(check.margin), 1e-4)


if __name__ == '__main__':
    absltest.main()
