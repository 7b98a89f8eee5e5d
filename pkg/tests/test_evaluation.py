import inspect

import numpy as np
import pytest
from conftest import micro_world

from fedbeam.dataset import Dataset, Sample, SynthConfig, generate_synthetic
from fedbeam.errors import NumericError
from fedbeam.evaluation import (
    REFERENCE_RESULTS,
    CentralTrainConfig,
    evaluate,
    monte_carlo,
    train_centralized,
)
from fedbeam.nn import ArchitectureSpec, ConvSpec, init_params
from fedbeam.preprocess import GridConfig


class TestCentralTrainConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            CentralTrainConfig(epochs=0)
        with pytest.raises(ValueError):
            CentralTrainConfig(batch_size=1)


class TestTrainCentralized:
    def test_empty_dataset_rejected(self):
        _, grid, spec, train, _ = micro_world(n_train=4)
        empty = Dataset(meta=train.meta, samples=[])
        with pytest.raises(ValueError, match="empty"):
            train_centralized(CentralTrainConfig(epochs=1), spec, empty, grid)

    def test_beats_uniform_loss(self):
        _, grid, spec, train, _ = micro_world(n_train=64)
        cfg = CentralTrainConfig(epochs=5, batch_size=16, lr=1e-3, lr_drop_epoch=3, seed=0)
        theta, bn = train_centralized(cfg, spec, train, grid)
        from fedbeam.fedavg import predict_proba, preprocess_dataset

        inputs, labels = preprocess_dataset(train, grid)
        probs = predict_proba(spec, theta, bn, inputs)
        loss = -np.mean(np.log(probs[np.arange(len(labels)), labels]))
        assert loss < np.log(spec.n_classes)

    def test_deterministic_per_seed(self):
        _, grid, spec, train, _ = micro_world(n_train=24)
        cfg = CentralTrainConfig(epochs=2, batch_size=8, seed=7)
        t1, _ = train_centralized(cfg, spec, train, grid)
        t2, _ = train_centralized(cfg, spec, train, grid)
        np.testing.assert_array_equal(t1, t2)
        t3, _ = train_centralized(CentralTrainConfig(epochs=2, batch_size=8, seed=8),
                                  spec, train, grid)
        assert np.any(t1 != t3)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
    def test_divergence_reports_epoch_and_batch(self):
        _, grid, spec, train, _ = micro_world(n_train=24)
        cfg = CentralTrainConfig(epochs=3, batch_size=8, lr=1e12, seed=0)
        with pytest.raises(NumericError, match=r"epoch \d+, batch \d+"):
            train_centralized(cfg, spec, train, grid)


class TestEvaluate:
    def test_exhaustive_k_is_perfect(self):
        _, grid, spec, train, test = micro_world(n_train=16, n_test=10)
        theta, bn = init_params(spec, seed=0)
        report = evaluate(theta, bn, spec, test, grid)  # k_max defaults to all pairs
        assert report.accuracy_at(spec.n_classes) == 1.0
        assert report.throughput_at(spec.n_classes) == pytest.approx(1.0)

    def test_monotone_in_k(self):
        _, grid, spec, _, test = micro_world(n_test=30)
        theta, bn = init_params(spec, seed=3)
        report = evaluate(theta, bn, spec, test, grid)
        assert np.all(np.diff(report.accuracy) >= 0)
        assert np.all(np.diff(report.throughput) >= -1e-12)

    def test_untrained_model_hits_random_rate(self):
        # inputs from real scenes, labels drawn uniformly at random: any
        # fixed scorer has hit probability K / n_classes per sample
        synth = SynthConfig(area=(0.0, 5.0, 0.0, 25.0), obstacles=2,
                            obstacle_size_x=(0.5, 1.5), obstacle_size_y=(1.0, 3.0),
                            n_t=8, n_r=4, n_c=4, c_t=32, c_r=8)
        grid = GridConfig(x_min=0, x_max=5, y_min=0, y_max=25, cells_x=10, cells_y=50)
        base = generate_synthetic(synth, 1000, seed=21)
        rng = np.random.default_rng(22)
        shuffled = Dataset(
            meta=base.meta,
            samples=[Sample(cloud=s.cloud, vehicle_pos=s.vehicle_pos, bs_pos=s.bs_pos,
                            label=int(rng.integers(0, 256)), powers=None)
                     for s in base.samples],
        )
        spec = ArchitectureSpec(
            input_shape=grid.shape,
            convs=(ConvSpec(1, 3, (3, 3), 2, 1), ConvSpec(3, 3, (3, 3), 2, 1)),
            hidden=8,
            n_classes=256,
        )
        theta, bn = init_params(spec, seed=23)
        report = evaluate(theta, bn, spec, shuffled, grid, k_max=10)
        p = 10 / 256
        se = np.sqrt(p * (1 - p) / len(shuffled))
        assert abs(report.accuracy_at(10) - p) <= 3 * se
        assert report.throughput is None  # labels only, no powers

    def test_deterministic(self):
        _, grid, spec, _, test = micro_world(n_test=12)
        theta, bn = init_params(spec, seed=1)
        r1 = evaluate(theta, bn, spec, test, grid)
        r2 = evaluate(theta, bn, spec, test, grid)
        np.testing.assert_array_equal(r1.accuracy, r2.accuracy)
        np.testing.assert_array_equal(r1.throughput, r2.throughput)

    def test_report_serialization(self, tmp_path):
        _, grid, spec, _, test = micro_world(n_test=8)
        theta, bn = init_params(spec, seed=1)
        report = evaluate(theta, bn, spec, test, grid, k_max=4)
        report.to_json(tmp_path / "report.json")
        report.write_sweep_csv(tmp_path / "sweep.csv")
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "k,accuracy,throughput_ratio"
        assert len(lines) == 5
        text = (tmp_path / "report.json").read_text()
        assert '"reference"' in text

    def test_reference_constants(self):
        assert REFERENCE_RESULTS["compact_2d"]["params"] == 7462
        assert REFERENCE_RESULTS["compact_2d"]["flops"] == pytest.approx(1.72e6)
        assert REFERENCE_RESULTS["compact_2d"]["top10_accuracy"] == pytest.approx(0.9117)
        assert REFERENCE_RESULTS["baseline_3d"]["params"] == 403677


class TestMonteCarlo:
    def test_identical_runs_have_zero_width(self):
        metrics = monte_carlo(lambda seed: {"acc": 0.75}, n_runs=5)
        mean, half = metrics["acc"]
        assert mean == 0.75
        assert half == 0.0

    def test_hand_t_interval(self):
        values = iter([0.90, 0.92])
        metrics = monte_carlo(lambda seed: {"acc": next(values)}, n_runs=2)
        mean, half = metrics["acc"]
        assert mean == pytest.approx(0.91)
        assert half == pytest.approx(0.12706, rel=1e-3)

    def test_default_run_count_is_ten(self):
        assert inspect.signature(monte_carlo).parameters["n_runs"].default == 10

    def test_seeds_passed_in_sequence(self):
        seen = []
        monte_carlo(lambda seed: (seen.append(seed), {"x": float(seed)})[1],
                    n_runs=3, base_seed=40)
        assert seen == [40, 41, 42]

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            monte_carlo(lambda seed: {"x": 0.0}, n_runs=1)
