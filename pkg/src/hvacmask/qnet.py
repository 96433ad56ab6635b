"""Dense Q-network over the 16384-way joint action head, with hand-rolled
backprop and a fused Adam step.

The DQN loss only touches one output column per sample, so the update path
uses a sparse output-layer backward (scatter of per-sample outer products)
instead of materializing a dense (batch x 16384) gradient. A dense backward
is kept alongside for gradient checking.
"""

from pathlib import Path

import numpy as np

from . import kernels

CHECKPOINT_VERSION = 1


class QNetwork:
    """Fully connected ReLU network, float64, deterministic forward."""

    def __init__(self, layer_sizes=(24, 256, 256, 16384), seed: int | None = 0):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layers")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # -- forward -----------------------------------------------------------

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Q-values for a single feature vector or a batch."""
        x = np.asarray(features, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"feature dimension {x.shape[1]} != input layer {self.layer_sizes[0]}"
            )
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l != last:
                np.maximum(h, 0.0, out=h)
        return h[0] if squeeze else h

    def forward_cached(self, x: np.ndarray):
        """Batch forward keeping the post-activation of every layer.
        Returns (activations, q) where activations[0] is the input batch."""
        acts = self.hidden_activations(x)
        q = acts[-1] @ self.weights[-1] + self.biases[-1]
        return acts, q

    def hidden_activations(self, x: np.ndarray):
        """Forward through the hidden layers only; the 16384-wide output
        matmul is skipped (the TD update needs just the taken actions)."""
        x = np.asarray(features_2d(x), dtype=float)
        acts = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = h @ w + b
            np.maximum(h, 0.0, out=h)
            acts.append(h)
        return acts

    # -- backward ----------------------------------------------------------

    def backward_dense(self, acts, grad_q: np.ndarray):
        """Gradients of a scalar loss given dLoss/dQ for the full output."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = np.asarray(grad_q, dtype=float)
        for l in range(len(self.weights) - 1, -1, -1):
            grads_w[l] = acts[l].T @ delta
            grads_b[l] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ self.weights[l].T) * (acts[l] > 0.0)
        return grads_w, grads_b

    def backward_sparse(self, acts, action_idx: np.ndarray, grad_vals: np.ndarray,
                        scratch: "SparseColumnScratch | None" = None):
        """Same as backward_dense with a one-hot-per-row output gradient:
        dLoss/dQ[i, a] = grad_vals[i] for a = action_idx[i], zero elsewhere.

        With a scratch the output-layer gradient reuses one buffer across
        calls (zeroing only the previously touched columns); the returned
        array is then only valid until the next call."""
        n_out = self.layer_sizes[-1]
        h_last = acts[-1]
        w_out = self.weights[-1]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        if scratch is None:
            dw = np.zeros_like(w_out)
        else:
            dw = scratch.fresh(w_out.shape, action_idx)
        for i in range(action_idx.shape[0]):
            dw[:, action_idx[i]] += grad_vals[i] * h_last[i]
        grads_w[-1] = dw
        grads_b[-1] = np.bincount(action_idx, weights=grad_vals, minlength=n_out).astype(float)
        delta = w_out[:, action_idx].T * grad_vals[:, None]
        for l in range(len(self.weights) - 2, -1, -1):
            delta = delta * (acts[l + 1] > 0.0)
            grads_w[l] = acts[l].T @ delta
            grads_b[l] = delta.sum(axis=0)
            if l > 0:
                delta = delta @ self.weights[l].T
        return grads_w, grads_b

    def q_for_actions(self, acts, action_idx: np.ndarray) -> np.ndarray:
        """Q(s_i, a_i) from a cached forward, without the full output matrix."""
        h_last = acts[-1]
        w_out = self.weights[-1]
        b_out = self.biases[-1]
        return np.einsum("bh,hb->b", h_last, w_out[:, action_idx]) + b_out[action_idx]

    # -- lifecycle ---------------------------------------------------------

    def clone(self) -> "QNetwork":
        other = QNetwork.__new__(QNetwork)
        other.layer_sizes = self.layer_sizes
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def copy_from(self, other: "QNetwork") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("layer sizes differ")
        for dst, src in zip(self.weights, other.weights):
            np.copyto(dst, src)
        for dst, src in zip(self.biases, other.biases):
            np.copyto(dst, src)

    def save(self, path) -> None:
        payload = {
            "version": np.array([CHECKPOINT_VERSION]),
            "layer_sizes": np.array(self.layer_sizes),
        }
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            payload[f"W{l}"] = w
            payload[f"b{l}"] = b
        np.savez(Path(path), **payload)

    @classmethod
    def load(cls, path) -> "QNetwork":
        with np.load(Path(path)) as data:
            version = int(data["version"][0])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            sizes = tuple(int(s) for s in data["layer_sizes"])
            net = cls.__new__(cls)
            net.layer_sizes = sizes
            net.weights = [data[f"W{l}"].copy() for l in range(len(sizes) - 1)]
            net.biases = [data[f"b{l}"].copy() for l in range(len(sizes) - 1)]
        for arr in net.weights + net.biases:
            if not np.isfinite(arr).all():
                raise ValueError("checkpoint contains non-finite parameters")
        return net


def features_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


class SparseColumnScratch:
    """Reusable column-sparse gradient buffer: clears only the columns the
    previous call wrote, instead of re-zeroing the whole matrix."""

    def __init__(self):
        self._buf: np.ndarray | None = None
        self._last_cols: np.ndarray | None = None

    def fresh(self, shape, cols: np.ndarray) -> np.ndarray:
        if self._buf is None or self._buf.shape != shape:
            self._buf = np.zeros(shape)
        elif self._last_cols is not None:
            self._buf[:, self._last_cols] = 0.0
        self._last_cols = np.array(cols, copy=True)
        return self._buf


class AdamOptimizer:
    """Adam with bias correction, applied in place via the fused kernel."""

    def __init__(self, net: QNetwork, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
        self._v = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]

    def step(self, net: QNetwork, grads_w, grads_b) -> None:
        self.t += 1
        params = net.weights + net.biases
        grads = list(grads_w) + list(grads_b)
        for p, g, m, v in zip(params, grads, self._m, self._v):
            kernels.adam_step(
                p.ravel(), np.ascontiguousarray(g).ravel(), m.ravel(), v.ravel(),
                self.lr, self.beta1, self.beta2, self.eps, self.t,
            )
