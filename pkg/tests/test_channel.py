import numpy as np
import pytest

from fedbeam.channel import (
    BeamCodebook,
    ChannelSet,
    beam_powers,
    beam_powers_naive,
    dft_codebook,
    optimal_beam,
    throughput_ratio,
    topk,
    topk_accuracy,
)
from fedbeam.errors import MetricUnavailableError


def random_instance(rng, n_t=None, n_r=None, n_c=None, c_t=None, c_r=None):
    n_t = n_t or rng.integers(1, 9)
    n_r = n_r or rng.integers(1, 5)
    n_c = n_c or rng.integers(1, 9)
    c_t = c_t or rng.integers(1, 9)
    c_r = c_r or rng.integers(1, 5)
    h = rng.standard_normal((n_c, n_r, n_t)) + 1j * rng.standard_normal((n_c, n_r, n_t))
    cb = BeamCodebook.dft(n_t, n_r, c_t, c_r)
    return ChannelSet(h=h), cb


class TestDftCodebook:
    def test_single_antenna_beams_are_all_one(self):
        cb = dft_codebook(1, 4)
        assert cb.shape == (4, 1)
        np.testing.assert_allclose(cb, np.ones((4, 1)), atol=1e-12)

    def test_two_antenna_second_beam(self):
        cb = dft_codebook(2, 2)
        expected = np.array([1.0, -1.0]) / np.sqrt(2)
        np.testing.assert_allclose(cb[1], expected, atol=1e-12)

    @pytest.mark.parametrize("antennas,beams", [(1, 1), (4, 4), (8, 16), (3, 7)])
    def test_unit_norm(self, antennas, beams):
        cb = dft_codebook(antennas, beams)
        np.testing.assert_allclose(np.linalg.norm(cb, axis=1), 1.0, atol=1e-12)

    def test_zero_counts_rejected(self):
        with pytest.raises(ValueError):
            dft_codebook(0, 4)
        with pytest.raises(ValueError):
            dft_codebook(4, 0)


class TestCodebookValidation:
    def test_non_unit_norm_rejected(self):
        bad = np.array([[2.0 + 0j]])
        good = dft_codebook(1, 1)
        with pytest.raises(ValueError, match="norm"):
            BeamCodebook(tx=bad, rx=good)


class TestBeamPowers:
    def test_scalar_case(self):
        ch = ChannelSet(h=np.array([[[2.0 + 0j]]]))
        cb = BeamCodebook(tx=np.array([[1.0 + 0j]]), rx=np.array([[1.0 + 0j]]))
        y = beam_powers(ch, cb)
        np.testing.assert_allclose(y, [[4.0]])

    def test_hand_complex_case(self):
        # H = [1, j], f = (1, -j)/sqrt(2), w = [1] -> w^H H f = sqrt(2), y = 2
        ch = ChannelSet(h=np.array([[[1.0, 1.0j]]]))
        cb = BeamCodebook(
            tx=np.array([[1.0, -1.0j]]) / np.sqrt(2),
            rx=np.array([[1.0 + 0j]]),
        )
        np.testing.assert_allclose(beam_powers(ch, cb), [[2.0]], atol=1e-12)
        np.testing.assert_allclose(beam_powers_naive(ch, cb), [[2.0]], atol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            ch, cb = random_instance(rng)
            fast = beam_powers(ch, cb)
            slow = beam_powers_naive(ch, cb)
            np.testing.assert_allclose(fast, slow, rtol=1e-10)

    def test_shape_mismatch_rejected(self):
        ch, _ = random_instance(np.random.default_rng(0), n_t=4, n_r=2)
        cb = BeamCodebook.dft(3, 2, 4, 2)
        with pytest.raises(ValueError, match="match"):
            beam_powers(ch, cb)

    def test_channel_scaling_leaves_argmax_alone(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            ch, cb = random_instance(rng)
            c = complex(rng.standard_normal(), rng.standard_normal())
            scaled = ChannelSet(h=c * ch.h)
            y = beam_powers(ch, cb)
            y2 = beam_powers(scaled, cb)
            np.testing.assert_allclose(y2, abs(c) ** 2 * y, rtol=1e-9, atol=1e-12)
            if not np.allclose(y, y.flat[0]):
                assert optimal_beam(y) == optimal_beam(y2)


class TestOptimalBeam:
    def test_inspection(self):
        assert optimal_beam(np.array([[1.0, 2.0], [3.0, 0.0]])) == 2

    def test_all_equal_breaks_to_zero(self):
        assert optimal_beam(np.ones((3, 3))) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            optimal_beam(np.zeros((0, 0)))


class TestTopk:
    def test_basic(self):
        np.testing.assert_array_equal(topk(np.array([0.1, 0.5, 0.4]), 2), [1, 2])

    def test_full_set_sorts_descending(self):
        scores = np.array([0.3, 0.9, 0.1, 0.5])
        np.testing.assert_array_equal(topk(scores, 4), [1, 3, 0, 2])

    def test_tie_break_to_lower_index(self):
        np.testing.assert_array_equal(topk(np.array([0.5, 0.5]), 1), [0])

    def test_prefix_monotone(self):
        rng = np.random.default_rng(3)
        scores = rng.choice([0.1, 0.2, 0.3], size=12)  # force ties
        for k in range(1, 12):
            np.testing.assert_array_equal(topk(scores, k), topk(scores, k + 1)[:k])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            topk(np.array([1.0, 2.0]), 0)
        with pytest.raises(ValueError):
            topk(np.array([1.0, 2.0]), 3)


class TestAccuracy:
    def test_exhaustive_set_is_perfect(self):
        rng = np.random.default_rng(5)
        labels = rng.integers(0, 8, size=20)
        preds = [topk(rng.standard_normal(8), 8) for _ in labels]
        assert topk_accuracy(preds, labels) == 1.0

    def test_random_scorer_rate(self):
        # K=10 of 256 labels: hit rate should be ~10/256
        rng = np.random.default_rng(0)
        n = 4000
        labels = rng.integers(0, 256, size=n)
        preds = [topk(rng.standard_normal(256), 10) for _ in range(n)]
        acc = topk_accuracy(preds, labels)
        p = 10 / 256
        se = np.sqrt(p * (1 - p) / n)
        assert abs(acc - p) < 4 * se

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            topk_accuracy([np.array([0])], [0, 1])

    def test_monotone_in_k(self):
        rng = np.random.default_rng(9)
        labels = rng.integers(0, 16, size=50)
        scores = [rng.standard_normal(16) for _ in labels]
        accs = [topk_accuracy([topk(s, k) for s in scores], labels) for k in range(1, 17)]
        assert all(a <= b for a, b in zip(accs, accs[1:]))
        assert accs[-1] == 1.0


class TestThroughputRatio:
    def test_optimal_sets_give_one(self):
        rng = np.random.default_rng(2)
        rows = [rng.uniform(0, 5, size=(4, 2)) for _ in range(10)]
        preds = [np.array([optimal_beam(y)]) for y in rows]
        assert throughput_ratio(rows, preds) == pytest.approx(1.0)

    def test_hand_arithmetic(self):
        # optimum power 3, best-in-set power 1 -> log2(2)/log2(4) = 0.5
        y = np.array([[3.0, 1.0]])
        assert throughput_ratio([y], [np.array([1])]) == pytest.approx(0.5)

    def test_missing_powers_is_unavailable(self):
        with pytest.raises(MetricUnavailableError):
            throughput_ratio([None], [np.array([0])])

    def test_monotone_in_k_and_bounded(self):
        rng = np.random.default_rng(4)
        rows = [rng.uniform(0, 5, size=8) for _ in range(30)]
        scores = [rng.standard_normal(8) for _ in range(30)]
        ratios = []
        for k in range(1, 9):
            preds = [topk(s, k) for s in scores]
            r = throughput_ratio(rows, preds)
            assert 0.0 <= r <= 1.0 + 1e-12
            ratios.append(r)
        assert all(a <= b + 1e-12 for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] == pytest.approx(1.0)
