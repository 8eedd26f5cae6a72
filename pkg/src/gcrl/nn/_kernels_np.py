"""Pure-NumPy kernels for the fixed-topology MLP (relu hidden layers plus a
tanh/sigmoid/linear head), reverse-mode gradients, the adaptive-moment
optimizer step and the target-network lerp.

This module is the fallback twin of ``_kernels_cy``; both expose the same
functions and are interchangeable (see ``gcrl.nn.backend``).
"""

import numpy as np

BACKEND_NAME = "numpy"

HEAD_TANH = 0
HEAD_SIGMOID = 1
HEAD_LINEAR = 2


def mlp_forward(weights, biases, x, head, keep_cache):
    """Forward pass over a batch ``x`` of shape (n, layer_sizes[0]).

    Returns ``(y, cache)`` where cache is the list of post-activation
    arrays [x, h1, ..., y] needed by the backward pass, or None when
    ``keep_cache`` is false.
    """
    cache = [x] if keep_cache else None
    last = len(weights) - 1
    h = x
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w
        z += b
        if layer < last:
            np.maximum(z, 0.0, out=z)
        elif head == HEAD_TANH:
            np.tanh(z, out=z)
        elif head == HEAD_SIGMOID:
            with np.errstate(over="ignore"):
                z = 1.0 / (1.0 + np.exp(-z))
        h = z
        if keep_cache:
            cache.append(h)
    return h, cache


def _head_grad(gy, y, head):
    if head == HEAD_TANH:
        return gy * (1.0 - y * y)
    if head == HEAD_SIGMOID:
        return gy * y * (1.0 - y)
    return gy.copy()


def mlp_backward(weights, cache, gy, head, dws, dbs):
    """Reverse pass: fills per-layer gradients ``dws``/``dbs`` (written in
    place) and returns the gradient with respect to the input batch."""
    g = _head_grad(gy, cache[-1], head)
    for layer in range(len(weights) - 1, -1, -1):
        a = cache[layer]
        np.dot(a.T, g, out=dws[layer])
        g.sum(axis=0, out=dbs[layer])
        if layer > 0:
            g = g @ weights[layer].T
            g *= cache[layer] > 0.0
    return g @ weights[0].T


def mlp_input_grad(weights, cache, gy, head):
    """Gradient with respect to the input only (parameter grads skipped)."""
    g = _head_grad(gy, cache[-1], head)
    for layer in range(len(weights) - 1, 0, -1):
        g = g @ weights[layer].T
        g *= cache[layer] > 0.0
    return g @ weights[0].T


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected adaptive-moment update, in place on flat arrays."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    denom = np.sqrt(v / c2)
    denom += eps
    p -= (lr / c1) * m / denom


def polyak(target, source, rho):
    """target <- (1 - rho) * target + rho * source, in place on flat arrays."""
    target *= 1.0 - rho
    target += rho * source
