"""Tests for core.verifier."""

import math

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

from core import verifier
from core.accountant import HyperParams
from core.errors import CombinatorialExplosionError, DomainError, QuadratureSupportError


def _gaussians(mu_p, mu_q, std=1.0, alpha_max=8.0):
    grid = verifier.make_grid([mu_p, mu_q], std, alpha_max)
    return (verifier.mixture([mu_p], [1.0], std, grid),
            verifier.mixture([mu_q], [1.0], std, grid))


class RenyiDivergenceTest(parameterized.TestCase):

    def test_identical(self):
        P, _ = _gaussians(0.0, 1.0)
        self.assertAlmostEqual(verifier.renyi_divergence_numeric(P, P, 3.0), 0.0, places=12)

    @parameterized.parameters(1.5, 2.0, 4.0, 8.0)
    def test_gaussian_closed_form(self, alpha):
        P, Q = _gaussians(0.0, 1.0)
        self.assertAlmostEqual(verifier.renyi_divergence_numeric(P, Q, alpha), alpha / 2.0,
                               delta=1e-6)

    def test_reference_value(self):
        P, Q = _gaussians(0.0, 1.0, alpha_max=2.0)
        self.assertAlmostEqual(verifier.renyi_divergence_numeric(P, Q, 2.0), 1.0, delta=1e-6)

    def test_approaches_kl(self):
        P, Q = _gaussians(0.0, 1.0, alpha_max=1.001)
        self.assertAlmostEqual(verifier.renyi_divergence_numeric(P, Q, 1.001), 0.5, delta=1e-3)

    def test_mass_is_one(self):
        P, _ = _gaussians(0.0, 3.0)
        self.assertAlmostEqual(P.mass(), 1.0, delta=1e-9)

    def test_narrow_grid(self):
        with self.assertRaises(QuadratureSupportError):
            verifier.mixture([0.0], [1.0], 1.0, np.linspace(-1.0, 1.0, 101))

    def test_rejects_alpha(self):
        P, Q = _gaussians(0.0, 1.0)
        with self.assertRaises(DomainError):
            verifier.renyi_divergence_numeric(P, Q, 1.0)

    def test_rejects_mismatched_grids(self):
        P, _ = _gaussians(0.0, 1.0)
        Q, _ = _gaussians(0.0, 2.0)
        with self.assertRaises(DomainError):
            verifier.renyi_divergence_numeric(P, Q, 2.0)


def _one_step_params(**changes):
    base = dict(n=1, dataset_size=1, p=1.0, q=1.0, c=2.0, sigma=10.0, dim=1)
    base.update(changes)
    return HyperParams(**base)


def _subsampled_pair(gamma, points_per_std=verifier.POINTS_PER_STD, alpha_max=8.0):
    params = _one_step_params(dataset_size=2, q=0.5)
    adjacency = verifier.SwapAdjacency.worst_case(1, 2, params.c)
    means_d, std = verifier.step_means(params, adjacency.base, gamma)
    means_n, _ = verifier.step_means(params, adjacency.neighbour(), gamma)
    grid = verifier.make_grid(np.concatenate([means_d, means_n]), std, alpha_max,
                              points_per_std)
    weights = np.full(len(means_d), 1.0 / len(means_d))
    return (verifier.mixture(means_d, weights, std, grid),
            verifier.mixture(means_n, weights, std, grid))


class QuadratureTest(parameterized.TestCase):

    @parameterized.named_parameters(
        ('gaussians', lambda: _gaussians(0.0, 1.5)),
        ('subsampled_small_gamma', lambda: _subsampled_pair(0.5)),
        ('subsampled_large_gamma', lambda: _subsampled_pair(2.0)),
    )
    def test_non_decreasing_in_alpha(self, make_pair):
        P, Q = make_pair()
        values = [verifier.renyi_divergence_numeric(P, Q, a)
                  for a in (1.1, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)]
        self.assertTrue(np.all(np.diff(values) >= -1e-12), values)

    @parameterized.parameters(0.5, 1.0, 2.0)
    def test_halving_grid_step_is_stable(self, gamma):
        coarse = verifier.renyi_divergence_numeric(*_subsampled_pair(gamma), 4.0)
        fine = verifier.renyi_divergence_numeric(
            *_subsampled_pair(gamma, points_per_std=2 * verifier.POINTS_PER_STD), 4.0)
        self.assertLess(abs(fine - coarse), 1e-5 * coarse)


class OneStepCheckTest(parameterized.TestCase):

    @parameterized.product(alpha=(1.5, 2.0, 4.0, 8.0), gamma=(0.5, 1.0, 2.0))
    def test_full_participation_meets_bound(self, alpha, gamma):
        check = verifier.one_step_bound_check(_one_step_params(), gamma, alpha)
        self.assertAlmostEqual(check.bound, 2 * alpha * 4.0 * gamma ** 2 / 100.0)
        self.assertLess(abs(check.margin), 1e-4)
        self.assertEqual(check.verdict, verifier.PASS)
        self.assertTrue(check.in_regime)

    def test_identical_datasets(self):
        params = _one_step_params()
        adjacency = verifier.SwapAdjacency.identical(1, 1, params.c)
        check = verifier.one_step_bound_check(params, 1.0, 2.0, adjacency)
        self.assertAlmostEqual(check.numeric, 0.0, places=9)
        self.assertEqual(check.verdict, verifier.PASS)

    @parameterized.parameters(1.5, 2.0, 4.0, 8.0)
    def test_subsampled_batch_below_bound(self, alpha):
        params = _one_step_params(dataset_size=2, q=0.5)
        for gamma in (0.5, 1.0):  # sigma / (c gamma) >= 5
            check = verifier.one_step_bound_check(params, gamma, alpha)
            self.assertTrue(check.in_regime)
            self.assertLessEqual(check.numeric, check.bound)
            self.assertEqual(check.verdict, verifier.PASS)

    def test_out_of_regime_never_fails(self):
        params = _one_step_params(dataset_size=2, q=0.5, sigma=1.0)
        for alpha in (2.0, 8.0):
            check = verifier.one_step_bound_check(params, 1.0, alpha)
            self.assertFalse(check.in_regime)
            self.assertIn(check.verdict, (verifier.PASS, verifier.INFO))

    def test_regime(self):
        self.assertTrue(verifier.in_high_noise_regime(_one_step_params(sigma=0.1), 1.0))
        sub = _one_step_params(dataset_size=2, q=0.5)
        self.assertTrue(verifier.in_high_noise_regime(sub, 1.0))
        self.assertFalse(verifier.in_high_noise_regime(sub, 2.0))

    def test_outcome_enumeration(self):
        params = HyperParams(n=3, p=2 / 3, q=0.5, dataset_size=4, dim=1)
        self.assertEqual(verifier.outcome_count(params), math.comb(3, 2) * math.comb(4, 2) ** 2)
        means, std = verifier.step_means(params, [[1.0] * 4] * 3, 1.0)
        self.assertLen(means, verifier.outcome_count(params))
        self.assertAlmostEqual(std, params.eta / params.pqn * params.sigma)

    def test_outcome_cap(self):
        params = HyperParams(n=10, q=0.5, dataset_size=8, dim=1)
        with self.assertRaises(CombinatorialExplosionError):
            verifier.one_step_bound_check(params, 1.0, 2.0)

    @parameterized.named_parameters(
        ('two_dimensional', dict(dim=2)),
        ('noiseless', dict(sigma=0.0)),
    )
    def test_rejects(self, changes):
        with self.assertRaises(DomainError):
            verifier.one_step_bound_check(_one_step_params(**changes), 1.0, 2.0)

    def test_row_layout(self):
        check = verifier.one_step_bound_check(_one_step_params(), 1.0, 2.0)
        self.assertLen(check.row(), len(verifier.VERDICT_HEADER))


if __name__ == '__main__':
    absltest.main()
