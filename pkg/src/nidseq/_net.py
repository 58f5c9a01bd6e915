"""Dense-network building blocks shared by every learned model here.

Everything computes in float64 so analytical gradients can be checked
against central finite differences tightly; persistence downcasts to
float32 at the container boundary only.
"""

from __future__ import annotations

import numpy as np

from nidseq._validation import NonFiniteLoss


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform init on [-s, s] with s = sqrt(6 / (fan_in + fan_out))."""
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    logits: (n, n_classes); targets: (n,) integer class ids.
    """
    n = logits.shape[0]
    p = softmax(logits, axis=-1)
    idx = np.arange(n)
    # Clip only inside the log; the gradient uses the exact probabilities.
    loss = float(np.mean(-np.log(np.maximum(p[idx, targets], 1e-300))))
    dlogits = p.copy()
    dlogits[idx, targets] -= 1.0
    dlogits /= n
    return loss, dlogits


def mlp_init(rng: np.random.Generator, dims: list[int]) -> dict[str, np.ndarray]:
    """Parameters for a ReLU MLP with layer sizes dims[0] -> ... -> dims[-1]."""
    params: dict[str, np.ndarray] = {}
    for i in range(len(dims) - 1):
        params[f"w{i}"] = glorot_uniform(rng, dims[i], dims[i + 1])
        params[f"b{i}"] = np.zeros(dims[i + 1])
    return params


def mlp_n_layers(params: dict[str, np.ndarray]) -> int:
    return sum(1 for k in params if k.startswith("w"))


def mlp_forward(params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, list]:
    """Hidden layers ReLU, final layer linear. Returns (logits, cache)."""
    n_layers = mlp_n_layers(params)
    cache = []
    h = x
    for i in range(n_layers):
        a = h @ params[f"w{i}"] + params[f"b{i}"]
        last = i == n_layers - 1
        out = a if last else relu(a)
        cache.append((h, a))
        h = out
    return h, cache


def mlp_backward(
    params: dict[str, np.ndarray], cache: list, dlogits: np.ndarray
) -> dict[str, np.ndarray]:
    n_layers = mlp_n_layers(params)
    grads: dict[str, np.ndarray] = {}
    d = dlogits
    for i in range(n_layers - 1, -1, -1):
        h, a = cache[i]
        if i != n_layers - 1:
            d = d * (a > 0)
        grads[f"w{i}"] = h.T @ d
        grads[f"b{i}"] = d.sum(axis=0)
        if i > 0:
            d = d @ params[f"w{i}"].T
    return grads


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class Adam:
    """Standard Adam with bias correction; state keyed like the grads dict."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * (g * g)
            mhat = self.m[key] / (1 - b1**self.t)
            vhat = self.v[key] / (1 - b2**self.t)
            params[key] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    """Plain stochastic gradient descent."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for key, g in grads.items():
            params[key] -= self.lr * g


def check_finite_loss(loss: float, context: str) -> None:
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"{context}: loss became {loss}")


def fit_mlp_classifier(
    X: np.ndarray,
    y: np.ndarray,
    hidden: list[int],
    n_classes: int,
    *,
    learning_rate: float,
    batch_size: int,
    steps: int,
    seed: int,
    grad_clip: float = 1.0,
) -> tuple[dict[str, np.ndarray], list[float]]:
    """Train a ReLU MLP classifier with Adam on minibatch cross-entropy.

    Deterministic given seed. Returns (params, per-step loss curve).
    """
    rng = np.random.default_rng(seed)
    dims = [X.shape[1], *hidden, n_classes]
    params = mlp_init(rng, dims)
    opt = Adam(learning_rate)
    losses: list[float] = []
    n = X.shape[0]
    for _ in range(steps):
        idx = rng.integers(0, n, size=min(batch_size, n))
        logits, cache = mlp_forward(params, X[idx])
        loss, dlogits = cross_entropy(logits, y[idx])
        check_finite_loss(loss, "classifier training")
        grads = mlp_backward(params, cache, dlogits)
        clip_global_norm(grads, grad_clip)
        opt.step(params, grads)
        losses.append(loss)
    return params, losses
