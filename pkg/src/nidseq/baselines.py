"""Reference models: per-step behavior cloning and a per-packet classifier.

Behavior cloning sees exactly one step at a time, [return-to-go ; obs],
with no sequence context; it shares argmax and wait-masking semantics with
the sequence model. The packet classifier ignores the decision process
entirely and maps observations straight to labels.
"""

from __future__ import annotations

import numpy as np

from nidseq import tensorio
from nidseq._net import fit_mlp_classifier, mlp_forward
from nidseq._validation import DimensionMismatch
from nidseq.trajectory import OfflineDataset, Trajectory

BC_HIDDEN = (128, 128)
DNN_HIDDEN = (256, 128, 64)


def _as_trajectories(dataset) -> list[Trajectory]:
    return dataset.trajectories if isinstance(dataset, OfflineDataset) else list(dataset)


def bc_features(trajectories: list[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """Flatten trajectories into per-step ([rtg ; obs], decision) pairs."""
    xs = []
    ys = []
    for traj in trajectories:
        for step in traj.steps:
            xs.append(np.concatenate([[step.rtg], step.obs]))
            ys.append(step.d)
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64)


def mean_trace_gap(trajectories: list[Trajectory]) -> float:
    """Mean inter-arrival gap over wait steps; the BC wait estimate."""
    gaps = [s.w for t in trajectories for s in t.steps if s.d == 2]
    return float(np.mean(gaps)) if gaps else 0.0


def bc_train(
    dataset,
    *,
    hidden: tuple[int, ...] = BC_HIDDEN,
    learning_rate: float = 1e-3,
    batch_size: int = 64,
    steps: int = 2000,
    seed: int = 0,
    grad_clip: float = 1.0,
) -> tuple[dict[str, np.ndarray], list[float]]:
    """Cross-entropy training of the step classifier; deterministic per seed."""
    x, y = bc_features(_as_trajectories(dataset))
    if x.shape[0] == 0:
        raise ValueError("dataset has no steps")
    return fit_mlp_classifier(
        x,
        y,
        list(hidden),
        n_classes=3,
        learning_rate=learning_rate,
        batch_size=batch_size,
        steps=steps,
        seed=seed,
        grad_clip=grad_clip,
    )


def bc_logits(params: dict[str, np.ndarray], rtg: float, obs: np.ndarray) -> np.ndarray:
    x = np.concatenate([[float(rtg)], np.asarray(obs, dtype=np.float64)])[None, :]
    if x.shape[1] != params["w0"].shape[0]:
        raise DimensionMismatch(
            f"input has {x.shape[1]} features, model expects {params['w0'].shape[0]}"
        )
    logits, _ = mlp_forward(params, x)
    return logits[0]


def bc_predict(params: dict[str, np.ndarray], rtg: float, obs: np.ndarray, mask_wait: bool) -> int:
    """Argmax decision with lowest-index tie-break; wait masked on demand."""
    logits = bc_logits(params, rtg, obs)
    if mask_wait:
        logits = logits[:2]
    return int(np.argmax(logits))


def dnn_train(
    x: np.ndarray,
    y: np.ndarray,
    *,
    hidden: tuple[int, ...] = DNN_HIDDEN,
    learning_rate: float = 1e-3,
    batch_size: int = 64,
    steps: int = 2000,
    seed: int = 0,
    grad_clip: float = 1.0,
) -> tuple[dict[str, np.ndarray], list[float]]:
    """Supervised packet classifier: 3 ReLU hidden layers, 2-class output."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"bad training shapes {x.shape} vs {y.shape}")
    return fit_mlp_classifier(
        x,
        y,
        list(hidden),
        n_classes=2,
        learning_rate=learning_rate,
        batch_size=batch_size,
        steps=steps,
        seed=seed,
        grad_clip=grad_clip,
    )


def dnn_predict(params: dict[str, np.ndarray], obs: np.ndarray) -> np.ndarray:
    """Per-packet argmax labels for one observation or a batch."""
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params["w0"].shape[0]:
        raise DimensionMismatch(
            f"input has {x.shape[1]} features, model expects {params['w0'].shape[0]}"
        )
    logits, _ = mlp_forward(params, x)
    out = np.argmax(logits, axis=1)
    return int(out[0]) if single else out


def save_mlp(path: str, params: dict[str, np.ndarray], kind: str, extra: dict | None = None) -> None:
    meta = {"kind": kind}
    meta.update(extra or {})
    tensorio.save_tensors(path, params, meta=meta)


def load_mlp(path: str, kind: str) -> tuple[dict[str, np.ndarray], dict]:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind} container, got {meta.get('kind')!r}")
    return tensors, meta
