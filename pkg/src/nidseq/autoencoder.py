"""Two-layer autoencoder compressing payload byte vectors to short embeddings.

Encoder: Z = sigma(W2 sigma(W1 X + b1) + b2); decoder mirrors it back to
payload length. One activation is used throughout, Sigmoid by default so
reconstructions stay in [0, 1] like the scaled inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from nidseq import tensorio
from nidseq._net import SGD, check_finite_loss, glorot_uniform, relu, sigmoid
from nidseq._validation import DimensionMismatch, as_float_matrix, check_fitted

ACTIVATIONS = ("relu", "sigmoid")


@dataclass
class AutoencoderParams:
    """Weights of the 4-layer encode/decode stack plus the activation choice."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        n_p, h = self.w1.shape
        n_b = self.w2.shape[1]
        expected = {
            "w1": (n_p, h), "b1": (h,),
            "w2": (h, n_b), "b2": (n_b,),
            "w3": (n_b, h), "b3": (h,),
            "w4": (h, n_p), "b4": (n_p,),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionMismatch(f"{name} must have shape {shape}, got {got}")

    @property
    def n_p(self) -> int:
        return self.w1.shape[0]

    @property
    def n_b(self) -> int:
        return self.w2.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")}


def init_params(n_p: int, h: int, n_b: int, activation: str, seed: int) -> AutoencoderParams:
    rng = np.random.default_rng(seed)
    return AutoencoderParams(
        w1=glorot_uniform(rng, n_p, h), b1=np.zeros(h),
        w2=glorot_uniform(rng, h, n_b), b2=np.zeros(n_b),
        w3=glorot_uniform(rng, n_b, h), b3=np.zeros(h),
        w4=glorot_uniform(rng, h, n_p), b4=np.zeros(n_p),
        activation=activation,
    )


def _act(a: np.ndarray, activation: str) -> np.ndarray:
    return relu(a) if activation == "relu" else sigmoid(a)


def _act_grad(a: np.ndarray, out: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (a > 0).astype(a.dtype)
    return out * (1.0 - out)


def _as_batch(x, name: str, width: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    return as_float_matrix(arr, name, width), single


def encode(params: AutoencoderParams, x) -> np.ndarray:
    """Map scaled payload vectors in [0, 1] to bottleneck embeddings."""
    batch, single = _as_batch(x, "x", params.n_p)
    h1 = _act(batch @ params.w1 + params.b1, params.activation)
    z = _act(h1 @ params.w2 + params.b2, params.activation)
    return z[0] if single else z


def decode(params: AutoencoderParams, z) -> np.ndarray:
    """Map embeddings back to payload-length reconstructions."""
    batch, single = _as_batch(z, "z", params.n_b)
    h2 = _act(batch @ params.w3 + params.b3, params.activation)
    xr = _act(h2 @ params.w4 + params.b4, params.activation)
    return xr[0] if single else xr


def reconstruction_loss(x, x_rec) -> float:
    """Mean over the batch of squared Euclidean reconstruction error."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_rec, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"batch shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = a[None, :], b[None, :]
    diff = a - b
    return float(np.mean(np.sum(diff * diff, axis=1)))


def loss_and_grads(params: AutoencoderParams, x: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Reconstruction loss and its analytical gradient for one batch."""
    act = params.activation
    n = x.shape[0]
    a1 = x @ params.w1 + params.b1
    h1 = _act(a1, act)
    a2 = h1 @ params.w2 + params.b2
    z = _act(a2, act)
    a3 = z @ params.w3 + params.b3
    h2 = _act(a3, act)
    a4 = h2 @ params.w4 + params.b4
    xr = _act(a4, act)

    diff = xr - x
    loss = float(np.mean(np.sum(diff * diff, axis=1)))

    d = (2.0 / n) * diff * _act_grad(a4, xr, act)
    grads = {"w4": h2.T @ d, "b4": d.sum(axis=0)}
    d = (d @ params.w4.T) * _act_grad(a3, h2, act)
    grads["w3"] = z.T @ d
    grads["b3"] = d.sum(axis=0)
    d = (d @ params.w3.T) * _act_grad(a2, z, act)
    grads["w2"] = h1.T @ d
    grads["b2"] = d.sum(axis=0)
    d = (d @ params.w2.T) * _act_grad(a1, h1, act)
    grads["w1"] = x.T @ d
    grads["b1"] = d.sum(axis=0)
    return loss, grads


def train_autoencoder(
    x_scaled: np.ndarray,
    *,
    h: int = 256,
    n_b: int = 100,
    activation: str = "sigmoid",
    learning_rate: float = 1e-3,
    epochs: int = 10,
    batch_size: int = 64,
    seed: int = 0,
) -> tuple[AutoencoderParams, list[float]]:
    """Minibatch SGD on reconstruction loss over scaled payload rows.

    Deterministic given seed. Returns (params, loss after each epoch,
    measured on the full dataset).
    """
    x_scaled = as_float_matrix(x_scaled, "x_scaled")
    if x_scaled.shape[0] == 0:
        raise ValueError("training set is empty")
    params = init_params(x_scaled.shape[1], h, n_b, activation, seed)
    pdict = params.as_dict()
    opt = SGD(learning_rate)
    rng = np.random.default_rng(seed + 1)
    n = x_scaled.shape[0]
    epoch_losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = x_scaled[order[start : start + batch_size]]
            loss, grads = loss_and_grads(params, batch)
            check_finite_loss(loss, "autoencoder training")
            opt.step(pdict, grads)
        epoch_losses.append(reconstruction_loss(x_scaled, decode(params, encode(params, x_scaled))))
    return params, epoch_losses


def save_params(path: str, params: AutoencoderParams) -> None:
    tensorio.save_tensors(
        path,
        params.as_dict(),
        meta={
            "kind": "autoencoder",
            "activation": params.activation,
            "n_p": params.n_p,
            "h": params.w1.shape[1],
            "n_b": params.n_b,
        },
    )


def load_params(path: str) -> AutoencoderParams:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "autoencoder":
        raise ValueError(f"{path}: not an autoencoder container")
    return AutoencoderParams(activation=meta["activation"], **tensors)


def write_embeddings_jsonl(path: str, rows: list[tuple[str, int, np.ndarray]]) -> None:
    """Persist (flow_id, packet_index, z) rows, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for flow_id, packet_index, z in rows:
            obj = {"flow_id": flow_id, "packet_index": int(packet_index), "z": [float(v) for v in z]}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_embeddings_jsonl(path: str) -> dict[str, list[np.ndarray]]:
    """Load embeddings grouped by flow, ordered by packet_index."""
    per_flow: dict[str, list[tuple[int, np.ndarray]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                per_flow.setdefault(obj["flow_id"], []).append(
                    (int(obj["packet_index"]), np.asarray(obj["z"], dtype=np.float64))
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad embedding row ({exc})") from exc
    out: dict[str, list[np.ndarray]] = {}
    for fid, rows in per_flow.items():
        rows.sort(key=lambda r: r[0])
        out[fid] = [z for _, z in rows]
    return out


class PayloadAutoencoder(BaseEstimator, TransformerMixin):
    """Estimator facade over the functional trainer.

    fit() expects raw byte rows (values 0..255) and scales them by 1/255;
    transform() yields bottleneck embeddings, inverse_transform() maps
    embeddings back to the 0..255 byte scale.
    """

    def __init__(
        self,
        h: int = 256,
        n_b: int = 100,
        activation: str = "sigmoid",
        learning_rate: float = 1e-3,
        epochs: int = 10,
        batch_size: int = 64,
        seed: int = 0,
    ):
        self.h = h
        self.n_b = n_b
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None):
        X = as_float_matrix(X, "X")
        if X.size and (X.min() < 0 or X.max() > 255):
            raise ValueError("payload bytes must lie in [0, 255]")
        self.params_, self.loss_curve_ = train_autoencoder(
            X / 255.0,
            h=self.h,
            n_b=self.n_b,
            activation=self.activation,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        X = as_float_matrix(X, "X", self.n_features_in_)
        return encode(self.params_, X / 255.0)

    def inverse_transform(self, Z) -> np.ndarray:
        check_fitted(self, "params_")
        return decode(self.params_, np.asarray(Z, dtype=np.float64)) * 255.0
