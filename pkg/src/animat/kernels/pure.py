"""Pure-NumPy fallback for the training kernels.

Mirrors the API of the compiled extension (`animat.kernels._fast`); which
backend is active is decided once in :mod:`animat.kernels`.
"""

import numpy as np

BACKEND = "pure"


def mlp_forward(x, weights, biases):
    """Run a ReLU MLP, returning all layer activations.

    Returns ``[x, h1, ..., out]``; hidden layers are post-ReLU, the final
    layer is linear.
    """
    acts = [x]
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w + b
        if i != last:
            np.maximum(z, 0.0, out=z)
        acts.append(z)
    return acts


def mlp_backward(acts, weights, d_out):
    """Backpropagate ``d_out`` (dL/d final layer) to parameter gradients."""
    d_weights = [None] * len(weights)
    d_biases = [None] * len(weights)
    dz = d_out
    for i in range(len(weights) - 1, -1, -1):
        a_prev = acts[i]
        d_weights[i] = a_prev.T @ dz
        d_biases[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ weights[i].T) * (a_prev > 0.0)
    return d_weights, d_biases


def adam_step(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One in-place Adam update on flat float64 arrays."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
