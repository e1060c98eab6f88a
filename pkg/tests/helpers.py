import numpy as np


def unit_rows(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def line_distances(x):
    x = np.asarray(x, dtype=float)
    return np.abs(x[:, None] - x[None, :])
