"""Minimal dense-network machinery in float64 numpy: dense,
batch-normalization and activation layers with hand-written backward
passes, the ADAM optimizer, and a finite-difference gradient checker.

Layers cache their forward inputs, so a single training driver owns
them; inference over frozen parameters is read-only.
"""

import numpy as np

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a normal install
    _HAVE_NUMBA = False

__all__ = [
    "Dense",
    "BatchNorm",
    "LeakyRelu",
    "Tanh",
    "Sigmoid",
    "Adam",
    "grad_check",
    "glorot_uniform",
]


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected a vector or a batch, got shape {x.shape}")


def glorot_uniform(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


class Dense:
    """Affine layer y = x @ w + b.

    ``bias=False`` drops b; used when the layer feeds a batch norm,
    whose shift makes a bias redundant (its gradient would be
    identically zero through the mean subtraction).
    """

    def __init__(self, rng, fan_in, fan_out, name="dense", bias=True):
        self.w = glorot_uniform(rng, fan_in, fan_out)
        self.b = np.zeros(fan_out) if bias else None
        self.name = name
        self.gw = np.zeros_like(self.w)
        self.gb = None if self.b is None else np.zeros_like(self.b)
        self._x = None

    def forward(self, x, training=False):
        if x.shape[1] != self.w.shape[0]:
            raise ValueError(
                f"{self.name}: input width {x.shape[1]} != {self.w.shape[0]}")
        self._x = x
        y = x @ self.w
        return y if self.b is None else y + self.b

    def backward(self, gy):
        self.gw = self._x.T @ gy
        if self.b is not None:
            self.gb = gy.sum(axis=0)
        return gy @ self.w.T

    def parameters(self):
        out = [(f"{self.name}.w", self.w)]
        if self.b is not None:
            out.append((f"{self.name}.b", self.b))
        return out

    def gradients(self):
        return [self.gw] if self.b is None else [self.gw, self.gb]


class BatchNorm:
    """Batch normalization with affine gain/shift.

    Training mode normalizes by batch statistics (and updates running
    statistics in place); inference mode normalizes by running
    statistics, so its output does not depend on batch composition.
    The backward pass differentiates through the batch statistics.
    """

    def __init__(self, width, momentum=0.9, eps=1e-5, name="bn"):
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        self.gain = np.ones(width)
        self.shift = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.eps = eps
        self.name = name
        self.ggain = np.zeros(width)
        self.gshift = np.zeros(width)
        self._cache = None

    def forward(self, x, training=False):
        if training:
            if x.shape[0] < 2:
                raise ValueError(f"{self.name}: training mode needs batch >= 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        std = np.sqrt(var + self.eps)
        xhat = (x - mean) / std
        self._cache = (x, xhat, mean, std, training)
        return self.gain * xhat + self.shift

    def backward(self, gy):
        x, xhat, mean, std, training = self._cache
        self.ggain = (gy * xhat).sum(axis=0)
        self.gshift = gy.sum(axis=0)
        gxhat = gy * self.gain
        if not training:
            return gxhat / std
        b = x.shape[0]
        gvar = (gxhat * (x - mean)).sum(axis=0) * (-0.5) / std**3
        gmean = -gxhat.sum(axis=0) / std
        return gxhat / std + gvar * 2.0 * (x - mean) / b + gmean / b

    def parameters(self):
        return [(f"{self.name}.gain", self.gain), (f"{self.name}.shift", self.shift)]

    def gradients(self):
        return [self.ggain, self.gshift]

    def state_tensors(self):
        """Non-trained state persisted with checkpoints."""
        return [(f"{self.name}.running_mean", self.running_mean),
                (f"{self.name}.running_var", self.running_var)]


class LeakyRelu:
    def __init__(self, slope=0.2):
        self.slope = slope
        self._x = None

    def forward(self, x, training=False):
        self._x = x
        return np.where(x > 0.0, x, self.slope * x)

    def backward(self, gy):
        return gy * np.where(self._x > 0.0, 1.0, self.slope)

    def parameters(self):
        return []

    def gradients(self):
        return []


class Tanh:
    def __init__(self):
        self._y = None

    def forward(self, x, training=False):
        self._y = np.tanh(x)
        return self._y

    def backward(self, gy):
        return gy * (1.0 - self._y**2)

    def parameters(self):
        return []

    def gradients(self):
        return []


class Sigmoid:
    def __init__(self):
        self._y = None

    def forward(self, x, training=False):
        # stable in both tails
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._y = out
        return out

    def backward(self, gy):
        return gy * self._y * (1.0 - self._y)

    def parameters(self):
        return []

    def gradients(self):
        return []


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _adam_update(p, g, m, v, lr, b1, b2, eps, c1, c2):
        # one fused pass per parameter entry; entries are independent, so
        # the parallel schedule cannot change the result
        for i in prange(p.size):
            mi = b1 * m[i] + (1.0 - b1) * g[i]
            vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)

else:  # pragma: no cover - exercised only without numba

    def _adam_update(p, g, m, v, lr, b1, b2, eps, c1, c2):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    """ADAM with bias correction over a fixed list of parameter arrays."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        for g in grads:
            if not np.isfinite(g.sum()):
                raise FloatingPointError("non-finite gradient: training diverged")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            _adam_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                         m.reshape(-1), v.reshape(-1),
                         self.lr, self.beta1, self.beta2, self.eps, c1, c2)


def grad_check(loss_fn, params, analytic, h=1e-6):
    """Max per-tensor relative error between analytic gradients and
    central finite differences of ``loss_fn`` (a no-argument callable
    evaluated after perturbing entries of ``params`` in place).
    """
    worst = 0.0
    for p, g in zip(params, analytic):
        num = np.zeros_like(p)
        flat_p = p.ravel()
        flat_n = num.ravel()
        for k in range(flat_p.size):
            orig = flat_p[k]
            flat_p[k] = orig + h
            up = loss_fn()
            flat_p[k] = orig - h
            dn = loss_fn()
            flat_p[k] = orig
            flat_n[k] = (up - dn) / (2.0 * h)
        scale = max(np.abs(g).max(initial=0.0), np.abs(num).max(initial=0.0), 1e-8)
        worst = max(worst, float(np.abs(g - num).max() / scale))
    return worst
