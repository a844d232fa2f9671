"""Finite-difference gradient checking for the hand-written backward passes.

Build the model under test with a float64 ParameterStore, write a closure
that runs forward + backward and returns the scalar loss, then compare the
accumulated analytic gradients against central differences.
"""

import numpy as np


def max_param_rel_error(store, loss_and_grad, eps=1e-6, max_coords=200, rng=None):
    """Largest relative error between analytic and numeric gradients.

    loss_and_grad() must zero the store grads, run forward + backward and
    return the scalar loss; it is re-invoked for each perturbed evaluation
    (the gradients from those calls are ignored). Checks up to max_coords
    coordinates per parameter tensor, randomly chosen when the tensor is
    larger than that.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    loss_and_grad()
    analytic = {k: v.copy() for k, v in store.grads.items()}
    worst = 0.0
    for name, p in store.params.items():
        flat = p.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_and_grad()
            flat[i] = orig - eps
            lm = loss_and_grad()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            ana = analytic[name].reshape(-1)[i]
            err = abs(numeric - ana) / max(1e-6, abs(numeric) + abs(ana))
            worst = max(worst, err)
    return worst


def fd_jacobian(fn, x, eps=1e-6):
    """Central-difference Jacobian of fn: R^n -> R^m at x."""
    x = np.asarray(x, dtype=np.float64)
    y0 = np.asarray(fn(x), dtype=np.float64)
    jac = np.zeros((y0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xp[i] += eps
        xm = x.copy()
        xm[i] -= eps
        jac[:, i] = (np.asarray(fn(xp)) - np.asarray(fn(xm))).reshape(-1) / (2.0 * eps)
    return jac
