"""Tests for ui.cli and ui.writers."""

import json
import math
import os
import tempfile
from unittest import mock

from absl.testing import absltest
from absl.testing import parameterized

from core import accountant, verifier
from core.accountant import HyperParams
from core.engine import Engine
from core.errors import ConfigError
from ui import cli, writers


def _config(**fields) -> str:
    path = os.path.join(tempfile.mkdtemp(), "experiment.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(fields, f)
    return path


def _read(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


class WritersTest(parameterized.TestCase):

    @parameterized.named_parameters(
        ('int', 3, "3"),
        ('float', 0.1, "0.1"),
        ('shortest', 1 / 3, "0.3333333333333333"),
        ('inf', math.inf, "inf"),
        ('nan', math.nan, "nan"),
        ('none', None, ""),
        ('bool', True, "true"),
        ('text', "PASS", "PASS"),
    )
    def test_format_number(self, value, expected):
        self.assertEqual(writers.format_number(value), expected)

    def test_comment_header_and_rows(self):
        path = os.path.join(tempfile.mkdtemp(), "sub", "out.csv")
        writers.write_csv(path, ("a", "b"), [(1, 0.5), (2, 0.25)], ["# seed=0", "T=3"])
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        self.assertEqual(lines, ["# seed=0", "# T=3", "a,b", "1,0.5", "2,0.25"])
        header, rows = writers.read_csv(path)
        self.assertEqual(header, ("a", "b"))
        self.assertEqual(rows, [["1", "0.5"], ["2", "0.25"]])

    def test_ledger_round_trip(self):
        params = HyperParams()
        gammas = [1.0, 0.75, 1.25] * 100
        rows, baseline = accountant.privacy_curve(params, gammas)
        path = os.path.join(tempfile.mkdtemp(), "ledger.csv")
        writers.write_ledger_csv(path, rows, baseline, ["# note=1"])
        self.assertEqual(writers.read_ledger_rows(path), rows)
        ledger = writers.read_ledger_csv(path, params)
        self.assertEqual(ledger.gamma_seq, gammas)
        self.assertEqual(accountant.dp_epsilon(params, ledger), rows[-1].eps_dp)

    def test_rejects_foreign_csv(self):
        path = os.path.join(tempfile.mkdtemp(), "other.csv")
        writers.write_csv(path, ("x",), [(1,)])
        with self.assertRaises(ConfigError):
            writers.read_ledger_rows(path)


class CliTest(parameterized.TestCase):

    def setUp(self):
        super().setUp()
        self.out = tempfile.mkdtemp()

    def test_privacy_curve_preset(self):
        code = cli.main(["privacy-curve", "--preset", "fig1a", "--out", self.out])
        self.assertEqual(code, 0)
        for k in range(3):
            header, rows = writers.read_csv(os.path.join(self.out, f"privacy_curve_{k}.csv"))
            self.assertEqual(header[-1], "eps_dp_baseline")
            self.assertLen(rows, 1000)
        _, summary = writers.read_csv(os.path.join(self.out, "privacy_curve_summary.csv"))
        converged = [float(r[3]) for r in summary]
        self.assertEqual(converged, sorted(converged))
        self.assertTrue(os.path.exists(os.path.join(self.out, "config.json")))

    @parameterized.named_parameters(('diameter', "fig1a", 3), ('sampling', "fig1b", 4))
    def test_documented_presets(self, preset, points):
        self.assertEqual(cli.main(["privacy-curve", "--preset", preset, "--out", self.out]), 0)
        _, summary = writers.read_csv(os.path.join(self.out, "privacy_curve_summary.csv"))
        self.assertLen(summary, points)

    def test_key_value_config(self):
        path = os.path.join(tempfile.mkdtemp(), "experiment.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write("# short diameter study\nT = 5\nsweep.D = [0.25, 1.0]\n")
        self.assertEqual(cli.main(["privacy-curve", "--config", path, "--out", self.out]), 0)
        _, rows = writers.read_csv(os.path.join(self.out, "privacy_curve_1.csv"))
        self.assertLen(rows, 5)

    def test_flags_non_monotone_schedule(self):
        cfg = _config(T=20, gamma_policy="power_limited", power_budget=4.0)
        cli.main(["simulate", "--config", cfg, "--out", self.out])
        with open(os.path.join(self.out, "ledger.csv"), encoding="utf-8") as f:
            self.assertIn("# gamma_monotone=false\n", f.read())

    def test_provenance_header(self):
        cli.main(["privacy-curve", "--config", _config(T=5), "--out", self.out])
        with open(os.path.join(self.out, "privacy_curve.csv"), encoding="utf-8") as f:
            text = f.read()
        self.assertIn("# T=5\n", text)
        self.assertIn("# crossover_round=218\n", text)
        self.assertIn("# gamma_monotone=true\n", text)

    def test_simulate_is_byte_identical_on_replay(self):
        cfg = _config(T=15, n=4, dataset_size=4)
        first, second = tempfile.mkdtemp(), tempfile.mkdtemp()
        self.assertEqual(cli.main(["simulate", "--config", cfg, "--seed", "7", "--out", first]), 0)
        self.assertEqual(cli.main(["simulate", "--config", cfg, "--seed", "7", "--out", second]),
                         0)
        for name in ("trace.csv", "ledger.csv", "bound.csv"):
            self.assertEqual(_read(os.path.join(first, name)).replace(first.encode(), b""),
                             _read(os.path.join(second, name)).replace(second.encode(), b""))

    def test_simulate_ledger_replays_live_epsilon(self):
        cli.main(["simulate", "--config", _config(T=40, n=4, dataset_size=4),
                  "--out", self.out])
        params = HyperParams(n=4, dataset_size=4)
        ledger = writers.read_ledger_csv(os.path.join(self.out, "ledger.csv"), params)
        _, rows = writers.read_csv(os.path.join(self.out, "ledger.csv"))
        self.assertLen(ledger, 40)
        self.assertAlmostEqual(accountant.dp_epsilon(params, ledger), float(rows[-1][6]),
                               delta=1e-12)

    def test_simulate_sweep_with_replicates(self):
        cfg = _config(T=10, n=3, dataset_size=2, replicates=3, sweep={"sigma": [1.0, 5.0]})
        self.assertEqual(cli.main(["simulate", "--config", cfg, "--out", self.out,
                                   "--workers", "2"]), 0)
        for k in range(2):
            self.assertTrue(os.path.exists(os.path.join(self.out, f"trace_{k}.csv")))
        header, rows = writers.read_csv(os.path.join(self.out, "replicates.csv"))
        self.assertEqual(header, cli.REPLICATE_HEADER)
        self.assertLen(rows, 4)

    def test_noiseless_simulate_writes_infinite_epsilon(self):
        cli.main(["simulate", "--config", _config(T=5, sigma=0.0), "--out", self.out])
        _, rows = writers.read_csv(os.path.join(self.out, "ledger.csv"))
        self.assertEqual(rows[-1][6], "inf")

    def test_tradeoff(self):
        cfg = _config(T=50, eps_targets=[1.0, 4.0])
        self.assertEqual(cli.main(["tradeoff", "--config", cfg, "--out", self.out]), 0)
        header, rows = writers.read_csv(os.path.join(self.out, "tradeoff.csv"))
        self.assertEqual(header, cli.TRADEOFF_HEADER)
        self.assertLen(rows, 2)

    def test_verify_passes(self):
        cfg = _config(verify_alphas=[2.0], verify_gammas=[1.0])
        self.assertEqual(cli.main(["verify", "--config", cfg, "--out", self.out]), 0)
        header, rows = writers.read_csv(os.path.join(self.out, "verify.csv"))
        self.assertEqual(header, verifier.VERDICT_HEADER)
        self.assertEqual([r[-1] for r in rows], [verifier.PASS, verifier.PASS])

    def test_verify_exit_status_on_failure(self):
        failing = verifier.OneStepCheck(alpha=2.0, gamma=1.0, p=1.0, q=1.0, numeric=1.0,
                                        bound=0.5, margin=-1.0, verdict=verifier.FAIL,
                                        in_regime=True)
        finding = verifier.OneStepCheck(alpha=2.0, gamma=2.0, p=1.0, q=0.5, numeric=1.0,
                                        bound=0.5, margin=-1.0, verdict=verifier.INFO,
                                        in_regime=False)
        with mock.patch.object(Engine, "verify", return_value=[finding]):
            self.assertEqual(cli.main(["verify", "--out", self.out]), 0)
        with mock.patch.object(Engine, "verify", return_value=[finding, failing]):
            self.assertEqual(cli.main(["verify", "--out", self.out]), 1)

    @parameterized.named_parameters(
        ('unknown_key', dict(sigmaa=1.0)),
        ('bad_range', dict(p=2.0)),
    )
    def test_config_errors_exit_two(self, fields):
        with self.assertLogs("ui.cli", level="ERROR"):
            code = cli.main(["simulate", "--config", _config(**fields), "--out", self.out])
        self.assertEqual(code, 2)

    def test_rejects_negative_seed(self):
        with self.assertRaises(SystemExit):
            cli.main(["simulate", "--seed", "-1"])


if __name__ == '__main__':
    absltest.main()
