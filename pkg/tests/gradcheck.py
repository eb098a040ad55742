"""Central finite-difference oracle for the training loss."""

import numpy as np

from cropfcnn.net import DenseLayer, Model, forward_batch
from cropfcnn.train import cross_entropy, one_hot

STEP = 1e-6
# floor only guards 0/0 for parameters with exactly zero gradient (dead units, dropped inputs)
REL_FLOOR = 1e-8


def numeric_gradients(model, raw, labels, seed, h=STEP):
    y = one_hot(labels)

    def loss():
        out = forward_batch(model, model.features(raw), training=True, seed=seed).out
        return cross_entropy(y, out.probs)

    grads = []
    for p in model.params():
        g = np.zeros_like(p)
        for i in range(p.size):
            old = p.flat[i]
            p.flat[i] = old + h
            up = loss()
            p.flat[i] = old - h
            down = loss()
            p.flat[i] = old
            g.flat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_errors(analytic, numeric):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), REL_FLOOR)


def random_problem(seed):
    """Small model (<= 3 layers, <= 8 units) with random fusion weights and a batch."""
    rng = np.random.default_rng(seed)
    sizes = [5] + [int(rng.integers(2, 9)) for _ in range(int(rng.integers(0, 3)))] + [3]
    layers = [
        DenseLayer(rng.normal(0, np.sqrt(2 / a), (b, a)), rng.normal(0, 0.1, b))
        for a, b in zip(sizes[:-1], sizes[1:])
    ]
    model = Model(rng.normal(0.25, 0.3, 4), layers, dropout=float(rng.choice([0.0, 0.3, 0.5])))
    n = int(rng.integers(1, 9))
    raw = rng.uniform(-0.3, 1.0, (n, 4))
    labels = rng.integers(1, 4, n)
    return model, raw, labels, [seed, 99]
