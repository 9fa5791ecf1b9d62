"""Finite-difference gradient oracle shared by unit and acceptance tests."""

import numpy as np

from lota import Dataset, ParameterMap, ToyModel
from lota.models import _forward_pass, _loss_and_output_grad


def finite_difference_grads(model, batch, h=1e-4):
    """Central finite differences on a float64 replica of the forward pass."""

    def loss_at(state64):
        out, _, _ = _forward_pass(model, state64, batch.inputs.astype(np.float64))
        targets = (
            batch.targets
            if batch.is_classification
            else batch.targets.astype(np.float64)
        )
        loss, _ = _loss_and_output_grad(model, out, targets)
        return loss

    base = {n: a.astype(np.float64) for n, a in model.params.items()}
    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_at(base)
            flat[i] = orig - h
            down = loss_at(base)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def max_relative_error(analytic, fd):
    worst = 0.0
    for name, arr in fd.items():
        scale = max(np.abs(arr).max(), 1e-6)
        worst = max(worst, float(np.abs(analytic[name] - arr).max() / scale))
    return worst


def _min_preact_magnitude(model, batch):
    state64 = {n: a.astype(np.float64) for n, a in model.params.items()}
    _, _, preacts = _forward_pass(model, state64, batch.inputs.astype(np.float64))
    return min(float(np.abs(z).min()) for z in preacts)


def random_generic_problem(seed, head):
    """Random small model + batch at a generic point.

    Re-samples until no preactivation sits within 1e-3 of a ReLU kink,
    where central differences and the subgradient convention legitimately
    disagree.
    """
    for attempt in range(50):
        rng = np.random.default_rng((seed, attempt))
        widths = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(2, 4)) + 1)]
        activation = str(rng.choice(["tanh", "relu"]))
        model = ToyModel.initialize(widths, activation, head, seed=seed + attempt)
        jitter = {
            n: (a + 0.1 * rng.standard_normal(a.shape).astype(np.float32))
            for n, a in model.params.items()
        }
        model = model.with_params(ParameterMap(jitter))
        n = int(rng.integers(3, 8))
        inputs = rng.standard_normal((n, widths[0])).astype(np.float32)
        if head == "softmax-cross-entropy":
            targets = rng.integers(0, widths[-1], size=n)
        else:
            targets = rng.standard_normal((n, widths[-1])).astype(np.float32)
        batch = Dataset(inputs, targets, "gradcheck")
        if activation == "tanh" or _min_preact_magnitude(model, batch) > 1e-3:
            return model, batch
    raise RuntimeError("could not find a generic evaluation point")
