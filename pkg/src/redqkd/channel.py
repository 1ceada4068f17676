"""Expected and sampled observables for the MDI-QKD and BB84 channel models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import i0e

from .config import ChannelParams, ProtocolInputs

DECOY_NAMES = ("mu", "nu", "omega")

# Detector w = 1..4: arm index s_w and polarization index k_w.
_ARM = np.array([1, 1, 2, 2])
_POL = np.array([1, 2, 1, 2])
OMEGA = ((1, 2), (3, 4), (1, 4), (2, 3))
OMEGA_1 = ((1, 4), (2, 3))  # psi-minus
OMEGA_2 = ((1, 2), (3, 4))  # psi-plus

Z_ANGLE = 0.0
X_ANGLE = math.pi / 4


def i0_sym(x):
    """(1/2pi) * integral of exp(x cos g) over a period, i.e. I0(x)."""
    x = np.asarray(x, dtype=float)
    return i0e(x) * np.exp(np.abs(x))


def _theta(angle: float, delta: float) -> np.ndarray:
    c, s = math.cos(angle + delta), math.sin(angle + delta)
    return np.array([[c, s], [-s, c]])


# Subsets of detectors that must stay dark; index into _SUBSETS.
_SUBSETS = []
_OUTCOME_TERMS = []  # per outcome: (complement, all-but-u, all-but-v, all)


def _subset_index(mask: tuple) -> int:
    if mask not in _SUBSETS:
        _SUBSETS.append(mask)
    return _SUBSETS.index(mask)


for _u, _v in OMEGA:
    _comp = tuple(int(w not in (_u, _v)) for w in range(1, 5))
    _nu = tuple(int(w != _u) for w in range(1, 5))
    _nv = tuple(int(w != _v) for w in range(1, 5))
    _OUTCOME_TERMS.append((_subset_index(_comp), _subset_index(_nu), _subset_index(_nv),
                           _subset_index((1, 1, 1, 1))))
_MASKS = np.array(_SUBSETS, dtype=float)  # (S, 4)


def _coefficients(theta_A: float, theta_B: float, delta_A: float, delta_B: float):
    """Per (i, j, subset): sums of Theta_A^2, Theta_B^2 and the signed cross term."""
    tA = _theta(theta_A, delta_A)
    tB = _theta(theta_B, delta_B)
    c = tA[:, _POL - 1]  # (i, w)
    d = tB[:, _POL - 1]  # (j, w)
    sgn = (-1.0) ** (_ARM + 1)
    ca = np.einsum("sw,iw->is", _MASKS, c ** 2)[:, None, :]  # (i, 1, S)
    cb = np.einsum("sw,jw->js", _MASKS, d ** 2)[None, :, :]  # (1, j, S)
    cx = np.einsum("sw,iw,jw->ijs", _MASKS, c * sgn, d)  # (i, j, S)
    return ca, cb, cx


_PHASES = 24
_COS = np.cos(2 * np.pi * np.arange(_PHASES) / _PHASES)


def _success_table_closed(amp_a, amp_b, theta_A, theta_B, params: ChannelParams, eta: float):
    """Four-term phase-averaged expression with I0; cancels badly when p_d dominates."""
    amp_a = np.atleast_1d(np.asarray(amp_a, dtype=float))[:, None, None, None]
    amp_b = np.atleast_1d(np.asarray(amp_b, dtype=float))[:, None, None, None]
    ca, cb, cx = _coefficients(theta_A, theta_B, params.delta_mis, params.delta_mis)
    A = 0.5 * eta * (amp_a ** 2 * ca + amp_b ** 2 * cb)
    B = eta * amp_a * amp_b * cx
    T = np.exp(-A + np.abs(B)) * i0e(B)  # (K, i, j, S)
    keep = 1.0 - params.p_d
    out = np.empty(T.shape[:3] + (len(OMEGA),))
    for o, (sc, su, sv, sa) in enumerate(_OUTCOME_TERMS):
        val = T[..., sc] - keep * (T[..., su] + T[..., sv]) + keep ** 2 * T[..., sa]
        out[..., o] = keep ** 2 * val
    return np.clip(out, 0.0, 1.0)


def _success_table(amp_a, amp_b, theta_A, theta_B, params: ChannelParams, eta: float):
    """Array (K, 2, 2, 4): probability of each outcome in OMEGA for settings i, j.

    Same quantity as the closed form, written as the phase average of
    exp(-dark detectors) * (1 - (1-p_d) e^{-x_u}) * (1 - (1-p_d) e^{-x_v}),
    which keeps full relative precision. The integrand is periodic and
    analytic in the phase, so the trapezoid rule converges geometrically.
    """
    amp_a = np.atleast_1d(np.asarray(amp_a, dtype=float))[:, None, None, None, None]
    amp_b = np.atleast_1d(np.asarray(amp_b, dtype=float))[:, None, None, None, None]
    tA = _theta(theta_A, params.delta_mis)
    tB = _theta(theta_B, params.delta_mis)
    c = tA[:, _POL - 1][:, None, :, None]  # (i, 1, w, 1)
    d = tB[:, _POL - 1][None, :, :, None]  # (1, j, w, 1)
    sgn = ((-1.0) ** _ARM)[None, None, :, None]
    x = 0.5 * eta * (amp_a ** 2 * c ** 2 + amp_b ** 2 * d ** 2
                     + 2 * sgn * amp_a * amp_b * c * d * _COS)  # (K, i, j, w, G)
    x = np.maximum(x, 0.0)
    pd = params.p_d
    keep = 1.0 - pd
    click = -np.expm1(-x) + pd * np.exp(-x)
    total = x.sum(axis=3)
    out = np.empty(x.shape[:3] + (len(OMEGA),))
    for o, (u, v) in enumerate(OMEGA):
        dark = total - x[..., u - 1, :] - x[..., v - 1, :]
        f = np.exp(-dark) * click[..., u - 1, :] * click[..., v - 1, :]
        out[..., o] = keep ** 2 * f.mean(axis=-1)
    return np.clip(out, 0.0, 1.0)


def mdi_eta(params: ChannelParams) -> float:
    """One-arm efficiency: the relay sits halfway, so each arm sees half the loss."""
    return params.eta(params.loss_db / 2)


def mdi_success_prob(alpha: float, beta: float, theta_A: float, theta_B: float,
                     i: int, j: int, params: ChannelParams) -> dict:
    """Probability of every success event (u, v) for one round."""
    if i not in (1, 2) or j not in (1, 2):
        raise ValueError("polarization settings must be 1 or 2")
    tab = _success_table(alpha, beta, theta_A, theta_B, params, mdi_eta(params))[0]
    return {ev: float(tab[i - 1, j - 1, o]) for o, ev in enumerate(OMEGA)}


def _gain_and_error(amp_a, amp_b, theta_A, theta_B, params, eta):
    tab = _success_table(amp_a, amp_b, theta_A, theta_B, params, eta)
    Q = 0.25 * tab.sum(axis=(1, 2, 3))
    if theta_A == Z_ANGLE:
        err = 0.25 * (tab[:, 0, 0, :].sum(axis=1) + tab[:, 1, 1, :].sum(axis=1))
    else:
        o1 = [OMEGA.index(e) for e in OMEGA_1]
        o2 = [OMEGA.index(e) for e in OMEGA_2]
        err = 0.25 * (tab[:, 0, 0, o1].sum(axis=1) + tab[:, 1, 1, o1].sum(axis=1)
                      + tab[:, 0, 1, o2].sum(axis=1) + tab[:, 1, 0, o2].sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        E = np.where(Q > 0, err / np.where(Q > 0, Q, 1.0), 0.0)
    return Q, E


@dataclass
class MdiGains:
    G_ZZ: float
    E_ZZ: float
    G_XX: dict
    E_XX: dict
    G_ZX: dict
    G_XZ: dict


def mdi_gain_and_error(params: ChannelParams, inputs: ProtocolInputs) -> MdiGains:
    eta = mdi_eta(params)
    qZ, qX = inputs.q_Z, inputs.q_X
    probs = dict(zip(DECOY_NAMES, (inputs.p_mu, inputs.p_nu, inputs.p_omega)))
    amps = dict(zip(DECOY_NAMES, np.sqrt(inputs.decoys)))
    sl = math.sqrt(inputs.lam)

    Qz, Ez = _gain_and_error([sl], [sl], Z_ANGLE, Z_ANGLE, params, eta)
    pairs = list(product(DECOY_NAMES, DECOY_NAMES))
    Qx, Ex = _gain_and_error([amps[a] for a, _ in pairs], [amps[b] for _, b in pairs],
                             X_ANGLE, X_ANGLE, params, eta)
    dec = [amps[a] for a in DECOY_NAMES]
    Qzx, _ = _gain_and_error([sl] * 3, dec, Z_ANGLE, X_ANGLE, params, eta)
    Qxz, _ = _gain_and_error(dec, [sl] * 3, X_ANGLE, Z_ANGLE, params, eta)

    return MdiGains(
        G_ZZ=float(qZ ** 2 * Qz[0]),
        E_ZZ=float(Ez[0]),
        G_XX={p: float(qX ** 2 * probs[p[0]] * probs[p[1]] * q) for p, q in zip(pairs, Qx)},
        E_XX={p: float(e) for p, e in zip(pairs, Ex)},
        G_ZX={b: float(qZ * qX * probs[b] * q) for b, q in zip(DECOY_NAMES, Qzx)},
        G_XZ={a: float(qZ * qX * probs[a] * q) for a, q in zip(DECOY_NAMES, Qxz)},
    )


@dataclass
class MdiObservables:
    Z_size: float
    X_sizes: dict
    X_errors: dict
    info_len: float = 0.0  # |a|_c| in bits (two bits per intensity symbol)
    rAX_len: float = 0.0
    rAZ_len: float = 0.0
    E_Z: float = 0.0

    def __post_init__(self):
        for k, e in self.X_errors.items():
            if e > self.X_sizes[k] + 1e-9:
                raise ValueError(f"more errors than events for {k}")


def mdi_expected_observables(params: ChannelParams, inputs: ProtocolInputs, N: float,
                             gains: MdiGains | None = None) -> MdiObservables:
    g = gains or mdi_gain_and_error(params, inputs)
    sxx, sxz, szx = sum(g.G_XX.values()), sum(g.G_XZ.values()), sum(g.G_ZX.values())
    return MdiObservables(
        Z_size=g.G_ZZ * N,
        X_sizes={k: v * N for k, v in g.G_XX.items()},
        X_errors={k: g.E_XX[k] * v * N for k, v in g.G_XX.items()},
        info_len=(g.G_ZZ + sxx + szx + sxz) * 2 * N,
        rAX_len=(sxx + sxz) * N,
        rAZ_len=(g.G_ZZ + szx) * N,
        E_Z=g.E_ZZ,
    )


def mdi_sample_observables(params: ChannelParams, inputs: ProtocolInputs, N: int,
                           rng: np.random.Generator, gains: MdiGains | None = None) -> MdiObservables:
    """Independent binomial draws around the expected observables."""
    g = gains or mdi_gain_and_error(params, inputs)
    N = int(N)
    sizes = {k: int(rng.binomial(N, v)) for k, v in g.G_XX.items()}
    errors = {k: int(rng.binomial(sizes[k], g.E_XX[k])) for k in sizes}
    sxz = sum(int(rng.binomial(N, v)) for v in g.G_XZ.values())
    szx = sum(int(rng.binomial(N, v)) for v in g.G_ZX.values())
    z = int(rng.binomial(N, g.G_ZZ))
    return MdiObservables(
        Z_size=z, X_sizes=sizes, X_errors=errors,
        info_len=2 * (z + sum(sizes.values()) + sxz + szx),
        rAX_len=sum(sizes.values()) + sxz, rAZ_len=z + szx, E_Z=g.E_ZZ,
    )


# BB84

def bb84_q_e(amp: float, params: ChannelParams, eta: float | None = None) -> tuple:
    """Detection probability and error rate for one intensity, matching bases."""
    eta = params.eta() if eta is None else eta
    pd = params.p_d
    x = eta * amp ** 2
    Q = 1 - (1 - pd) ** 2 * math.exp(-x)
    h = 0.5 * (math.exp(-x * math.cos(params.delta_mis) ** 2)
               - math.exp(-x * math.sin(params.delta_mis) ** 2))
    QE = pd ** 2 / 2 + pd * (1 - pd) * (1 + h) + (1 - pd) ** 2 * (0.5 + h - 0.5 * math.exp(-x))
    E = QE / Q if Q > 0 else 0.0
    return Q, min(max(E, 0.0), 1.0)


@dataclass
class Bb84Gains:
    Q: dict
    E: dict
    G_ZZ: dict
    G_XX: dict
    E_Z: float


def bb84_gain_and_error(params: ChannelParams, inputs: ProtocolInputs) -> Bb84Gains:
    eta = params.eta()
    probs = dict(zip(DECOY_NAMES, (inputs.p_mu, inputs.p_nu, inputs.p_omega)))
    Q, E = {}, {}
    for name, a in zip(DECOY_NAMES, inputs.decoys):
        Q[name], E[name] = bb84_q_e(math.sqrt(a), params, eta)
    gz = {a: inputs.q_Z ** 2 * probs[a] * Q[a] for a in DECOY_NAMES}
    gx = {a: inputs.q_X ** 2 * probs[a] * Q[a] for a in DECOY_NAMES}
    tot = sum(gz.values())
    E_Z = sum(E[a] * gz[a] for a in DECOY_NAMES) / tot if tot > 0 else 0.0
    return Bb84Gains(Q=Q, E=E, G_ZZ=gz, G_XX=gx, E_Z=E_Z)


@dataclass
class Bb84Observables:
    Zprime_sizes: dict
    X_sizes: dict
    X_errors: dict
    Z_size: float = 0.0
    info_len: float = 0.0  # |k_A| + |a| + |r_A|_X|
    rAZ_len: float = 0.0
    E_Z: float = 0.0
    extra: dict = field(default_factory=dict)


def bb84_expected_observables(params: ChannelParams, inputs: ProtocolInputs, N: float, M: float,
                              gains: Bb84Gains | None = None) -> Bb84Observables:
    g = gains or bb84_gain_and_error(params, inputs)
    tot = sum(g.G_ZZ.values())
    if M > tot * N + 1e-9:
        raise ValueError("M exceeds the expected number of key-basis detections")
    return Bb84Observables(
        Zprime_sizes={a: (g.G_ZZ[a] / tot) * M if tot > 0 else 0.0 for a in DECOY_NAMES},
        X_sizes={a: g.G_XX[a] * N for a in DECOY_NAMES},
        X_errors={a: g.E[a] * g.G_XX[a] * N for a in DECOY_NAMES},
        Z_size=tot * N,
        info_len=N + 2 * N + inputs.q_X * N,
        rAZ_len=inputs.q_Z * N,
        E_Z=g.E_Z,
    )


def bb84_sample_observables(params: ChannelParams, inputs: ProtocolInputs, N: int, M: int,
                            rng: np.random.Generator, gains: Bb84Gains | None = None) -> Bb84Observables:
    g = gains or bb84_gain_and_error(params, inputs)
    tot = sum(g.G_ZZ.values())
    N = int(N)
    zp = rng.multinomial(int(M), [g.G_ZZ[a] / tot for a in DECOY_NAMES])
    sizes = {a: int(rng.binomial(N, g.G_XX[a])) for a in DECOY_NAMES}
    errors = {a: int(rng.binomial(sizes[a], g.E[a])) for a in DECOY_NAMES}
    rx = int(rng.binomial(N, inputs.q_X))
    return Bb84Observables(
        Zprime_sizes={a: int(v) for a, v in zip(DECOY_NAMES, zp)},
        X_sizes=sizes, X_errors=errors,
        Z_size=int(rng.binomial(N, tot)),
        info_len=3 * N + rx, rAZ_len=N - rx, E_Z=g.E_Z,
    )
