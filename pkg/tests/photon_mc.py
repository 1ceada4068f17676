"""Photon-level Monte-Carlo of the detection setups.

Phase-randomized coherent states stay coherent through beam splitters, so
for a fixed pair of phases every detector sees an independent Poisson
photon number. Fields are propagated explicitly as complex amplitudes.
"""

import math

import numpy as np


def _pol(angle, delta, k):
    c, s = math.cos(angle + delta), math.sin(angle + delta)
    return np.array([c, s]) if k == 1 else np.array([-s, c])


def mdi_events(alpha, beta, theta_A, theta_B, i, j, params, eta, n, rng):
    """Empirical probability of each two-click event (1,2), (3,4), (1,4), (2,3)."""
    pa = _pol(theta_A, params.delta_mis, i)
    pb = _pol(theta_B, params.delta_mis, j)
    phA = rng.uniform(0, 2 * np.pi, n)
    phB = rng.uniform(0, 2 * np.pi, n)
    a = math.sqrt(eta) * alpha * np.exp(1j * phA)[:, None] * pa  # (n, pol)
    b = math.sqrt(eta) * beta * np.exp(1j * phB)[:, None] * pb
    arm1 = (a - b) / math.sqrt(2)
    arm2 = (a + b) / math.sqrt(2)
    means = np.abs(np.concatenate([arm1, arm2], axis=1)) ** 2  # detectors 1..4
    clicks = (rng.poisson(means) > 0) | (rng.random(means.shape) < params.p_d)
    out = {}
    for u, v in ((1, 2), (3, 4), (1, 4), (2, 3)):
        others = [w for w in range(4) if w not in (u - 1, v - 1)]
        ok = clicks[:, u - 1] & clicks[:, v - 1] & ~clicks[:, others].any(axis=1)
        out[(u, v)] = ok.mean()
    return out


def bb84_q_e(amp, params, eta, n, rng):
    """Detection rate and error rate with random assignment of double clicks."""
    x = eta * amp ** 2
    right = (rng.poisson(x * math.cos(params.delta_mis) ** 2, n) > 0) | (rng.random(n) < params.p_d)
    wrong = (rng.poisson(x * math.sin(params.delta_mis) ** 2, n) > 0) | (rng.random(n) < params.p_d)
    det = right | wrong
    err = (wrong & ~right) | (wrong & right & (rng.random(n) < 0.5))
    Q = det.mean()
    return Q, err.sum() / max(det.sum(), 1), det.sum()
