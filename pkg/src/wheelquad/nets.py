"""Dense feed-forward networks with hand-written reverse-mode gradients.

Everything downstream (state estimator, residual actor, privileged critic,
power predictor) shares this one implementation, so its gradients are
checked against finite differences in the test suite.  float64 throughout;
batches are (B, d) or a bare (d,) vector.
"""

from __future__ import annotations

import numpy as np


def _elu(x):
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x, y):
    return np.where(x > 0.0, 1.0, y + 1.0)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(x, y):
    return 1.0 - y * y


ACTIVATIONS = {"elu": (_elu, _elu_grad), "tanh": (_tanh, _tanh_grad)}


class FeedForwardNet:
    """Plain MLP: affine layers with a smooth activation on hidden layers.

    sizes: [in, hidden..., out].  The output layer is linear.
    """

    def __init__(self, sizes, activation="elu", rng=None, out_scale=1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = list(int(s) for s in sizes)
        self.activation = activation
        self.weights = []
        self.biases = []
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(2.0 / n_in)
            if k == len(self.sizes) - 2:
                scale *= out_scale
            self.weights.append(rng.normal(0.0, scale, size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        """Returns (output, cache) where cache feeds backward()."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[-1] != self.n_in:
            raise ValueError(
                f"input has {h.shape[-1]} features, net expects {self.n_in}")
        act, _ = ACTIVATIONS[self.activation]
        pre, post = [], [h]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = post[-1] @ w.T + b
            pre.append(z)
            post.append(act(z) if k < len(self.weights) - 1 else z)
        y = post[-1]
        return (y[0] if squeeze else y), (pre, post, squeeze)

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input.

        Returns (param_grads, grad_input) with param_grads ordered like
        parameters().
        """
        pre, post, squeeze = cache
        g = np.asarray(grad_out, dtype=float)
        if squeeze:
            g = g[None, :]
        _, dact = ACTIVATIONS[self.activation]
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * dact(pre[k], post[k + 1])
            grads[2 * k] = g.T @ post[k]
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k]
        return grads, (g[0] if squeeze else g)

    # -- flat parameter access, used by optimizers-agnostic tooling and tests

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        i = 0
        for p in self.parameters():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    def zero_output_layer(self):
        self.weights[-1][...] = 0.0
        self.biases[-1][...] = 0.0


class Adam:
    """Adaptive-moment optimizer over a list of parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_grad_norm(grads, max_norm):
    """Scale a gradient list in place so its global norm is <= max_norm.

    Returns the pre-clip norm.
    """
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


class RunningNorm:
    """Streaming mean/variance used to whiten observations.

    Deterministic given the update order; stats ride along with saved
    weights so deployment uses exactly the training normalization.
    """

    def __init__(self, dim, clip=10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip

    def update(self, batch):
        batch = np.asarray(batch, dtype=float).reshape(-1, self.mean.size)
        n = batch.shape[0]
        if n == 0:
            return
        bmean = batch.mean(axis=0)
        bvar = batch.var(axis=0)
        delta = bmean - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * n / tot
        m_a = self.var * self.count
        m_b = bvar * n
        self.var = (m_a + m_b + delta**2 * self.count * n / tot) / tot
        self.count = tot

    def normalize(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8),
                       -self.clip, self.clip)

    def state_arrays(self):
        return {"mean": self.mean, "var": self.var,
                "count": np.array([self.count])}

    @classmethod
    def from_arrays(cls, arrays):
        out = cls(arrays["mean"].size)
        out.mean = np.asarray(arrays["mean"], dtype=float)
        out.var = np.asarray(arrays["var"], dtype=float)
        out.count = float(np.asarray(arrays["count"]).ravel()[0])
        return out


# ---------------------------------------------------------------------------
# Weight files


WEIGHT_FORMAT_VERSION = 1


def save_net(path, net: FeedForwardNet, extras=None):
    """Write a net (and optional extra arrays) to an .npz with a shape header."""
    payload = {
        "format_version": np.array([WEIGHT_FORMAT_VERSION]),
        "sizes": np.array(net.sizes),
        "activation": np.array(net.activation),
    }
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        payload[f"w{k}"] = w
        payload[f"b{k}"] = b
    for key, arr in (extras or {}).items():
        payload[f"extra_{key}"] = np.asarray(arr)
    np.savez(path, **payload)


def load_net(path):
    """Read a net written by save_net.  Returns (net, extras dict)."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"][0])
        if version != WEIGHT_FORMAT_VERSION:
            raise ValueError(f"unsupported weight format {version}")
        sizes = [int(s) for s in data["sizes"]]
        net = FeedForwardNet(sizes, activation=str(data["activation"]))
        for k in range(len(sizes) - 1):
            w, b = data[f"w{k}"], data[f"b{k}"]
            if w.shape != net.weights[k].shape or b.shape != net.biases[k].shape:
                raise ValueError("weight shapes do not match the header")
            net.weights[k][...] = w
            net.biases[k][...] = b
        extras = {k[len("extra_"):]: data[k] for k in data.files
                  if k.startswith("extra_")}
    return net, extras
