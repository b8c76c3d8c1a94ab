"""Central finite-difference checks against the autodiff gradients."""

import numpy as np

from patcherizer import autodiff as ad


def rel_error(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_gradients(loss_fn, params, h=1e-5, samples=None, rng=None, floor=1e-6):
    """Max relative error per parameter tensor.

    ``loss_fn()`` rebuilds the forward pass and returns a scalar tensor.
    With ``samples`` only that many random entries per tensor are probed.
    A parameter that the loss does not touch must have an all-zero
    finite-difference gradient.
    """
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    ad.backward(loss_fn())
    errors = {}
    for name, p in sorted(params.items()):
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if samples is not None and flat.size > samples:
            idx = rng.choice(flat.size, samples, replace=False)
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            up = float(loss_fn().data)
            flat[i] = old - h
            down = float(loss_fn().data)
            flat[i] = old
            numeric[j] = (up - down) / (2 * h)
        errors[name] = rel_error(analytic.reshape(-1)[idx], numeric, floor)
    return errors
