import numpy as np
import pytest
from dataclasses import replace

from fedsense.config import desk_scale
from fedsense.errors import EmptyUpdateSet, NonPositiveSnr, ShapeMismatch
from fedsense.federated import (
    AGGREGATORS,
    ClientUpdate,
    baseline_independent,
    fed_avg,
    fed_snr,
    run_experiment,
    run_round,
)
from fedsense.neuralnet import LEARNABLE_KEYS, RUNNING_KEYS, ModelWeights, init_model
from fedsense.seeding import Streams, INIT


def micro_cfg(**overrides):
    params = dict(
        settings=2, num_uavs=2, data_per_uav=16, signal_len=64, fs_hz=6.4e6,
        max_epochs=2, workers=1, test_fraction=0.25,
    )
    params.update(overrides)
    return desk_scale(**params)


def const_weights(value: float, m=32) -> ModelWeights:
    w = init_model(m, np.random.default_rng(0))
    return ModelWeights({k: np.full_like(v, value) for k, v in w.tensors.items()})


def rand_weights(seed: int, m=32) -> ModelWeights:
    rng = np.random.default_rng(seed)
    w = init_model(m, rng)
    return ModelWeights({k: rng.standard_normal(v.shape).astype(v.dtype)
                         for k, v in w.tensors.items()})


class TestFedAvg:
    def test_single_client_identity(self):
        w = rand_weights(1)
        out = fed_avg([ClientUpdate(w, 7, 1.0)])
        for k in w.tensors:
            np.testing.assert_array_equal(out.tensors[k], w.tensors[k])

    def test_equal_counts_plain_mean(self):
        ws = [rand_weights(i) for i in range(4)]
        out = fed_avg([ClientUpdate(w, 5, 1.0) for w in ws])
        for k in out.tensors:
            expected = np.mean([w.tensors[k].astype(np.float64) for w in ws], axis=0)
            np.testing.assert_allclose(out.tensors[k], expected, rtol=1e-5, atol=1e-7)

    def test_scalar_probe(self):
        # weights {1, 3} with counts {1, 3}: (1*1 + 3*3) / 4 = 2.5
        out = fed_avg([
            ClientUpdate(const_weights(1.0), 1, 1.0),
            ClientUpdate(const_weights(3.0), 3, 1.0),
        ])
        for k in out.tensors:
            np.testing.assert_allclose(out.tensors[k], 2.5, rtol=1e-6)

    def test_brute_force_oracle(self):
        # per-scalar weighted mean over three random clients
        rng = np.random.default_rng(2)
        ws = [rand_weights(10 + i) for i in range(3)]
        counts = [int(c) for c in rng.integers(1, 500, 3)]
        out = fed_avg([ClientUpdate(w, c, 1.0) for w, c in zip(ws, counts)])
        for k in out.tensors:
            num = sum(c * w.tensors[k].astype(np.float64) for w, c in zip(ws, counts))
            expected = num / sum(counts)
            np.testing.assert_allclose(out.tensors[k], expected, rtol=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(EmptyUpdateSet):
            fed_avg([])

    def test_shape_mismatch(self):
        w1, w2 = rand_weights(1), rand_weights(2, m=32)
        w2.tensors["conv1_b"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(ShapeMismatch):
            fed_avg([ClientUpdate(w1, 1, 1.0), ClientUpdate(w2, 1, 1.0)])

    def test_scale_invariance(self):
        ws = [rand_weights(i) for i in range(3)]
        counts = [4, 9, 2]
        a = fed_avg([ClientUpdate(w, c, 1.0) for w, c in zip(ws, counts)])
        b = fed_avg([ClientUpdate(w, 13 * c, 1.0) for w, c in zip(ws, counts)])
        for k in a.tensors:
            np.testing.assert_allclose(a.tensors[k], b.tensors[k], rtol=1e-6)

    def test_convexity(self):
        ws = [rand_weights(20 + i) for i in range(4)]
        counts = [1, 9, 4, 16]
        out = fed_avg([ClientUpdate(w, c, 1.0) for w, c in zip(ws, counts)])
        for k in out.tensors:
            stack = np.stack([w.tensors[k] for w in ws])
            lo, hi = stack.min(axis=0), stack.max(axis=0)
            assert np.all(out.tensors[k] >= lo - 1e-6)
            assert np.all(out.tensors[k] <= hi + 1e-6)


class TestFedSnr:
    def test_scalar_probe(self):
        # learnables {0, 1} with snr {1, 3}: 3/4 = 0.75; the running
        # statistics are moment estimates and follow sample counts instead
        out = fed_snr([
            ClientUpdate(const_weights(0.0), 1, 1.0),
            ClientUpdate(const_weights(1.0), 1, 3.0),
        ])
        for k in LEARNABLE_KEYS:
            np.testing.assert_allclose(out.tensors[k], 0.75, rtol=1e-6)
        for k in RUNNING_KEYS:
            np.testing.assert_allclose(out.tensors[k], 0.5, rtol=1e-6)

    def test_dominant_client_limit(self):
        w_lo, w_hi = rand_weights(5), rand_weights(6)
        out = fed_snr([ClientUpdate(w_lo, 1, 1.0), ClientUpdate(w_hi, 1, 1e6)])
        for k in LEARNABLE_KEYS:
            np.testing.assert_allclose(out.tensors[k], w_hi.tensors[k], atol=1e-5)
        for k in RUNNING_KEYS:
            expected = (w_lo.tensors[k].astype(np.float64)
                        + w_hi.tensors[k].astype(np.float64)) / 2
            np.testing.assert_allclose(out.tensors[k], expected, rtol=1e-5)

    def test_equal_snr_equals_fed_avg_exactly(self):
        ws = [rand_weights(i) for i in range(3)]
        by_snr = fed_snr([ClientUpdate(w, 1, 2.7) for w in ws])
        by_count = fed_avg([ClientUpdate(w, 9, 1.0) for w in ws])
        for k in by_snr.tensors:
            np.testing.assert_array_equal(by_snr.tensors[k], by_count.tensors[k])

    def test_non_positive_snr_rejected(self):
        with pytest.raises(NonPositiveSnr):
            fed_snr([ClientUpdate(rand_weights(0), 1, 0.0)])

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        ws = [rand_weights(30 + i) for i in range(3)]
        snrs = [float(s) for s in rng.uniform(0.1, 300.0, 3)]
        counts = [int(c) for c in rng.integers(1, 500, 3)]
        out = fed_snr([ClientUpdate(w, c, s) for w, c, s in zip(ws, counts, snrs)])
        for k in LEARNABLE_KEYS:
            num = sum(s * w.tensors[k].astype(np.float64) for w, s in zip(ws, snrs))
            np.testing.assert_allclose(out.tensors[k], num / sum(snrs), rtol=1e-6)
        for k in RUNNING_KEYS:
            num = sum(c * w.tensors[k].astype(np.float64) for w, c in zip(ws, counts))
            np.testing.assert_allclose(out.tensors[k], num / sum(counts), rtol=1e-6)


class TestRunRound:
    def test_single_client_aggregation_identity(self):
        cfg = micro_cfg(num_uavs=1)
        streams = Streams(cfg.seed)
        w0 = init_model(cfg.signal_len, streams.rng(INIT))
        new_w, result = run_round(w0, 0, cfg, streams)
        assert len(result.accuracies) == 1
        # with one client the aggregate equals its trained weights; training
        # moved them away from the start
        assert any(
            not np.array_equal(new_w.tensors[k], w0.tensors[k]) for k in LEARNABLE_KEYS
        )

    def test_zero_epochs_global_unchanged(self):
        cfg = micro_cfg(max_epochs=0, num_uavs=4)
        streams = Streams(cfg.seed)
        w0 = init_model(cfg.signal_len, streams.rng(INIT))
        new_w, _ = run_round(w0, 0, cfg, streams)
        for k in w0.tensors:
            np.testing.assert_array_equal(new_w.tensors[k], w0.tensors[k])

    def test_round_result_fields(self):
        cfg = micro_cfg()
        streams = Streams(cfg.seed)
        w0 = init_model(cfg.signal_len, streams.rng(INIT))
        _, result = run_round(w0, 3, cfg, streams)
        assert result.round_index == 3
        assert result.aggregator == cfg.aggregator
        assert len(result.accuracies) == cfg.num_uavs == len(result.snr_db)
        assert all(0.0 <= a <= 1.0 for a in result.accuracies)
        assert result.mean_accuracy == pytest.approx(np.mean(result.accuracies))


class TestRunExperiment:
    def test_deterministic_history(self):
        cfg = micro_cfg(settings=2, num_uavs=4, max_epochs=2)
        h1 = run_experiment(cfg)
        h2 = run_experiment(cfg)
        assert [r.accuracies for r in h1] == [r.accuracies for r in h2]
        assert [r.snr_db for r in h1] == [r.snr_db for r in h2]

    def test_worker_count_does_not_change_results(self):
        h1 = run_experiment(micro_cfg(settings=1, num_uavs=2, workers=1))
        h2 = run_experiment(micro_cfg(settings=1, num_uavs=2, workers=2))
        assert [r.accuracies for r in h1] == [r.accuracies for r in h2]

    def test_history_bounded(self):
        history = run_experiment(micro_cfg(settings=3))
        assert len(history) == 3
        for r in history:
            assert np.isfinite(r.mean_accuracy)
            assert 0.0 <= r.mean_accuracy <= 1.0

    def test_aggregators_named(self):
        assert set(AGGREGATORS) == {"fedavg", "fedsnr"}


class TestBaseline:
    def test_single_setting_single_uav_matches_round(self):
        cfg = micro_cfg(settings=1, num_uavs=1, max_epochs=2)
        round_acc = run_experiment(cfg)[0].mean_accuracy
        base = baseline_independent(cfg)
        assert base.mean_accuracy == pytest.approx(round_acc)

    def test_deterministic(self):
        cfg = micro_cfg(settings=2, num_uavs=2)
        a = baseline_independent(cfg)
        b = baseline_independent(cfg)
        assert a.accuracies == b.accuracies

    def test_accumulates_across_settings(self):
        cfg = micro_cfg(settings=3, num_uavs=2)
        result = baseline_independent(cfg)
        assert len(result.accuracies) == 2
        # each report covers 3 settings x 16 examples of training data
        assert all(0.0 <= a <= 1.0 for a in result.accuracies)
