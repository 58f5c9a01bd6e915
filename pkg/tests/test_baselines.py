"""Reference models: step-level behavior cloning and the packet classifier."""

import numpy as np
import pytest

from nidseq._net import mlp_init
from nidseq._validation import DimensionMismatch
from nidseq.baselines import (
    bc_features,
    bc_logits,
    bc_predict,
    bc_train,
    dnn_predict,
    dnn_train,
    load_mlp,
    mean_trace_gap,
    save_mlp,
)

from conftest import make_trajectory


def _forced_logit_params(bias):
    """Tiny MLP whose output is exactly `bias`: zero first layer, ReLU(0)=0."""
    rng = np.random.default_rng(0)
    params = mlp_init(rng, [1 + 3, 2, len(bias)])
    params["w0"] = np.zeros_like(params["w0"])
    params["b0"] = np.zeros_like(params["b0"])
    params["w1"] = np.zeros_like(params["w1"])
    params["b1"] = np.asarray(bias, dtype=np.float64)
    return params


class TestFeatures:
    def test_bc_features_layout(self, rng):
        traj = make_trajectory(rng, [2, 2, 1], obs_dim=4)
        x, y = bc_features([traj])
        assert x.shape == (3, 5)
        assert y.tolist() == [2, 2, 1]
        for i, step in enumerate(traj.steps):
            assert x[i, 0] == step.rtg
            np.testing.assert_array_equal(x[i, 1:], step.obs)

    def test_bc_features_concatenates_trajectories(self, rng):
        a = make_trajectory(rng, [0], obs_dim=2, flow_id="a")
        b = make_trajectory(rng, [2, 1], obs_dim=2, flow_id="b")
        x, y = bc_features([a, b])
        assert x.shape == (3, 3)
        assert y.tolist() == [0, 2, 1]

    def test_mean_trace_gap_wait_steps_only(self, rng):
        traj = make_trajectory(rng, [2, 2, 0], obs_dim=2)
        expected = np.mean([traj.steps[0].w, traj.steps[1].w])
        assert mean_trace_gap([traj]) == pytest.approx(expected, abs=1e-15)

    def test_mean_trace_gap_no_waits(self, rng):
        traj = make_trajectory(rng, [1], obs_dim=2)
        assert mean_trace_gap([traj]) == 0.0


class TestBehaviorCloning:
    def test_memorizes_small_dataset(self, rng):
        trajs = [
            make_trajectory(rng, [2, 2, 0], obs_dim=3, flow_id="f0"),
            make_trajectory(rng, [2, 1], obs_dim=3, label=1, flow_id="f1"),
        ]
        params, losses = bc_train(
            trajs, hidden=(32,), learning_rate=0.02, batch_size=5, steps=600, seed=3
        )
        assert losses[-1] < 0.05
        for traj in trajs:
            for step in traj.steps:
                assert bc_predict(params, step.rtg, step.obs, mask_wait=False) == step.d

    def test_same_seed_identical(self, rng):
        trajs = [make_trajectory(rng, [2, 0], obs_dim=3)]
        a, la = bc_train(trajs, hidden=(8,), steps=40, seed=9)
        b, lb = bc_train(trajs, hidden=(8,), steps=40, seed=9)
        assert la == lb
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            bc_train([])

    def test_argmax_and_mask_semantics(self):
        obs = np.zeros(3)
        params = _forced_logit_params([2.0, 1.0, 3.0])
        assert bc_predict(params, 0.0, obs, mask_wait=False) == 2
        assert bc_predict(params, 0.0, obs, mask_wait=True) == 0
        tie = _forced_logit_params([1.0, 1.0, 0.0])
        assert bc_predict(tie, 0.0, obs, mask_wait=False) == 0

    def test_mask_never_returns_wait(self, rng):
        params = _forced_logit_params([0.0, 0.0, 10.0])
        for _ in range(5):
            assert bc_predict(params, float(rng.normal()), np.zeros(3), mask_wait=True) in (0, 1)

    def test_wrong_obs_width_rejected(self):
        params = _forced_logit_params([0.0, 0.0, 0.0])
        with pytest.raises(DimensionMismatch):
            bc_logits(params, 0.0, np.zeros(7))


class TestPacketClassifier:
    def test_memorizes_separable_packets(self, rng):
        x = np.vstack([rng.normal(loc=-2.0, size=(5, 4)), rng.normal(loc=2.0, size=(5, 4))])
        y = np.asarray([0] * 5 + [1] * 5)
        params, losses = dnn_train(
            x, y, hidden=(16,), learning_rate=0.05, batch_size=10, steps=300, seed=1
        )
        assert losses[-1] < 0.05
        np.testing.assert_array_equal(dnn_predict(params, x), y)

    def test_single_and_batch_agree(self, rng):
        x = rng.normal(size=(6, 3))
        y = np.asarray([0, 1, 0, 1, 0, 1])
        params, _ = dnn_train(x, y, hidden=(8,), steps=50, seed=2)
        batch = dnn_predict(params, x)
        assert batch.shape == (6,)
        for i in range(6):
            single = dnn_predict(params, x[i])
            assert isinstance(single, int)
            assert single == batch[i]

    def test_bad_training_shapes_rejected(self, rng):
        with pytest.raises(DimensionMismatch):
            dnn_train(rng.normal(size=5), np.zeros(5, dtype=int))
        with pytest.raises(DimensionMismatch):
            dnn_train(rng.normal(size=(5, 2)), np.zeros(4, dtype=int))

    def test_wrong_obs_width_rejected(self, rng):
        x = rng.normal(size=(4, 3))
        params, _ = dnn_train(x, np.asarray([0, 1, 0, 1]), hidden=(4,), steps=5, seed=0)
        with pytest.raises(DimensionMismatch):
            dnn_predict(params, np.zeros(9))


class TestPersistence:
    def test_round_trip_with_extra_meta(self, tmp_path, rng):
        params = mlp_init(rng, [4, 8, 3])
        path = tmp_path / "bc.bin"
        save_mlp(str(path), params, "bc", {"wait_estimate": 0.375})
        loaded, meta = load_mlp(str(path), "bc")
        assert meta["kind"] == "bc"
        assert meta["wait_estimate"] == 0.375
        for name, arr in params.items():
            np.testing.assert_array_equal(
                loaded[name], arr.astype(np.float32).astype(np.float64)
            )

    def test_kind_mismatch_rejected(self, tmp_path, rng):
        params = mlp_init(rng, [4, 8, 2])
        path = tmp_path / "dnn.bin"
        save_mlp(str(path), params, "dnn")
        with pytest.raises(ValueError):
            load_mlp(str(path), "bc")

    def test_corrupt_container_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a container at all")
        with pytest.raises(ValueError, match="magic"):
            load_mlp(str(path), "bc")
