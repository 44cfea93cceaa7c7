"""Tests for core.rng."""

from absl.testing import absltest
import numpy as np

from core import rng


class SubstreamTest(absltest.TestCase):

    def test_same_key_same_stream(self):
        a = rng.substream(3, rng.FADING, 10).uniform(size=5)
        b = rng.substream(3, rng.FADING, 10).uniform(size=5)
        np.testing.assert_array_equal(a, b)

    def test_keys_separate_streams(self):
        base = rng.substream(3, rng.FADING, 10).uniform(size=5)
        for other in (rng.substream(4, rng.FADING, 10), rng.substream(3, rng.CHANNEL_NOISE, 10),
                      rng.substream(3, rng.FADING, 11), rng.substream(3, rng.FADING, 10, 0)):
            self.assertFalse(np.array_equal(base, other.uniform(size=5)))

    def test_replicate_seeds(self):
        seeds = rng.replicate_seeds(0, 20)
        self.assertLen(set(seeds), 20)
        self.assertEqual(seeds, rng.replicate_seeds(0, 20))
        self.assertEqual(seeds[:5], rng.replicate_seeds(0, 5))


if __name__ == '__main__':
    absltest.main()
