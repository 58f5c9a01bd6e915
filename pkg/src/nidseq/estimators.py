"""sklearn-style facades over the functional model cores.

These keep the familiar fit/predict surface: the sequence detector and
the cloning baseline fit on offline trajectories and predict by replaying
held-out flows; the packet classifier is a plain supervised estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from nidseq import baselines, transformer
from nidseq._validation import check_fitted
from nidseq.evaluate import BCPolicy, EpisodeResult, SequencePolicy, replay_episode
from nidseq.trajectory import EncodedFlow, OfflineDataset, RewardConfig, Trajectory


def _as_trajectories(dataset) -> list[Trajectory]:
    trajs = dataset.trajectories if isinstance(dataset, OfflineDataset) else list(dataset)
    if not trajs:
        raise ValueError("no trajectories to fit on")
    return trajs


class SequenceDetector(BaseEstimator, ClassifierMixin):
    """Return-conditioned sequence model with a replay-based predict()."""

    def __init__(
        self,
        k: int = 20,
        d_time: int = 32,
        d_value: int = 64,
        d_type: int = 32,
        n_layers: int = 3,
        n_heads: int = 4,
        d_ff: int = 256,
        c: float = 10000.0,
        lambda_wait: float = 0.1,
        learning_rate: float = 1e-4,
        batch_size: int = 64,
        steps: int = 1000,
        grad_clip: float = 1.0,
        seed: int = 0,
        reward: RewardConfig | None = None,
    ):
        self.k = k
        self.d_time = d_time
        self.d_value = d_value
        self.d_type = d_type
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.c = c
        self.lambda_wait = lambda_wait
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.steps = steps
        self.grad_clip = grad_clip
        self.seed = seed
        self.reward = reward

    def fit(self, X, y=None, sample_weight=None):
        """Fit on trajectories (an OfflineDataset or a list of Trajectory)."""
        trajs = _as_trajectories(X)
        obs_dim = trajs[0].steps[0].obs.shape[0]
        self.model_config_ = transformer.ModelConfig(
            k=self.k,
            d_time=self.d_time,
            d_value=self.d_value,
            d_type=self.d_type,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ff=self.d_ff,
            c=self.c,
            obs_dim=obs_dim,
            lambda_wait=self.lambda_wait,
        )
        params = transformer.init_params(self.model_config_, self.seed)
        train_cfg = transformer.TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            steps=self.steps,
            grad_clip=self.grad_clip,
            seed=self.seed,
        )
        self.params_, self.loss_curve_ = transformer.train(
            params, self.model_config_, trajs, train_cfg, weights=sample_weight
        )
        self.target_rtg_ = max(t.total_return for t in trajs)
        return self

    def replay(self, flows: list[EncodedFlow], target_rtg: float | None = None) -> list[EpisodeResult]:
        check_fitted(self, "params_")
        policy = SequencePolicy(self.params_, self.model_config_)
        cfg = self.reward or RewardConfig()
        rtg = self.target_rtg_ if target_rtg is None else target_rtg
        return [replay_episode(policy, f, rtg, cfg) for f in flows]

    def predict(self, X, target_rtg: float | None = None) -> np.ndarray:
        """Terminal benign/malicious decisions for a list of EncodedFlow."""
        return np.asarray([r.decision for r in self.replay(X, target_rtg)], dtype=np.int64)


class BehaviorCloningDetector(BaseEstimator, ClassifierMixin):
    """Context-free per-step classifier evaluated through the same replay."""

    def __init__(
        self,
        hidden: tuple[int, ...] = baselines.BC_HIDDEN,
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        steps: int = 2000,
        grad_clip: float = 1.0,
        seed: int = 0,
        reward: RewardConfig | None = None,
    ):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.steps = steps
        self.grad_clip = grad_clip
        self.seed = seed
        self.reward = reward

    def fit(self, X, y=None):
        trajs = _as_trajectories(X)
        self.params_, self.loss_curve_ = baselines.bc_train(
            trajs,
            hidden=tuple(self.hidden),
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            steps=self.steps,
            seed=self.seed,
            grad_clip=self.grad_clip,
        )
        self.wait_estimate_ = baselines.mean_trace_gap(trajs)
        self.target_rtg_ = max(t.total_return for t in trajs)
        return self

    def replay(self, flows: list[EncodedFlow], target_rtg: float | None = None) -> list[EpisodeResult]:
        check_fitted(self, "params_")
        policy = BCPolicy(self.params_, self.wait_estimate_)
        cfg = self.reward or RewardConfig()
        rtg = self.target_rtg_ if target_rtg is None else target_rtg
        return [replay_episode(policy, f, rtg, cfg) for f in flows]

    def predict(self, X, target_rtg: float | None = None) -> np.ndarray:
        return np.asarray([r.decision for r in self.replay(X, target_rtg)], dtype=np.int64)


class PacketClassifier(BaseEstimator, ClassifierMixin):
    """Per-packet supervised baseline: observation rows to binary labels."""

    def __init__(
        self,
        hidden: tuple[int, ...] = baselines.DNN_HIDDEN,
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        steps: int = 2000,
        grad_clip: float = 1.0,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.steps = steps
        self.grad_clip = grad_clip
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.params_, self.loss_curve_ = baselines.dnn_train(
            X,
            y,
            hidden=tuple(self.hidden),
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            steps=self.steps,
            seed=self.seed,
            grad_clip=self.grad_clip,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        return np.asarray(baselines.dnn_predict(self.params_, np.asarray(X, dtype=np.float64)))
