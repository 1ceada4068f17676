"""Decoy-state parameter estimation for MDI-QKD and BB84."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .bounds import (
    binary_entropy,
    chernoff_delta_lower,
    chernoff_delta_upper,
    hoeffding_delta,
    inverse_chernoff_lower_dev,
    inverse_chernoff_upper_dev,
    serfling_lambda,
    serfling_upsilon,
)
from .channel import DECOY_NAMES, Bb84Observables, MdiObservables
from .config import ProtocolInputs

C11_MIN = 1e-15

# The nine (v, v') candidates; entries name intensities [a0, a1, b0, b1].
V_PAIRS = (
    (("mu", "nu", "mu", "nu"), ("mu", "omega", "mu", "omega")),
    (("mu", "nu", "mu", "nu"), ("mu", "omega", "nu", "omega")),
    (("mu", "nu", "mu", "nu"), ("nu", "omega", "mu", "omega")),
    (("mu", "nu", "mu", "nu"), ("nu", "omega", "nu", "omega")),
    (("mu", "nu", "mu", "omega"), ("mu", "omega", "nu", "omega")),
    (("mu", "nu", "mu", "omega"), ("nu", "omega", "nu", "omega")),
    (("mu", "omega", "mu", "nu"), ("nu", "omega", "mu", "omega")),
    (("mu", "omega", "mu", "nu"), ("nu", "omega", "nu", "omega")),
    (("mu", "omega", "mu", "omega"), ("nu", "omega", "nu", "omega")),
)

_ORDERED = (("mu", "nu"), ("mu", "omega"), ("nu", "omega"))
W_VECTORS = tuple((a0, a1, b0, b1) for (a0, a1), (b0, b1) in product(_ORDERED, _ORDERED))


def _intensity(inputs: ProtocolInputs) -> dict:
    return dict(zip(DECOY_NAMES, inputs.decoys))


def _prob(inputs: ProtocolInputs) -> dict:
    return dict(zip(DECOY_NAMES, (inputs.p_mu, inputs.p_nu, inputs.p_omega)))


def p_abx(inputs: ProtocolInputs, a: str, b: str) -> float:
    p = _prob(inputs)
    return p[a] * p[b] * inputs.q_X ** 2


def tau_nm(n: int, m: int, inputs: ProtocolInputs) -> float:
    x = _intensity(inputs)
    s = sum(math.exp(-(x[a] + x[b])) * x[a] ** n * x[b] ** m * p_abx(inputs, a, b)
            for a, b in product(DECOY_NAMES, DECOY_NAMES))
    return s / (math.factorial(n) * math.factorial(m))


def decoy_case(v, vp, inputs: ProtocolInputs) -> int:
    x = _intensity(inputs)
    a0, a1, b0, b1 = (x[k] for k in v)
    ap0, ap1, bp0, bp1 = (x[k] for k in vp)
    return 1 if (a0 + a1) / (ap0 + ap1) > (b0 + b1) / (bp0 + bp1) else 2


def c_nm(n: int, m: int, v, vp, inputs: ProtocolInputs) -> float:
    x = _intensity(inputs)
    a0, a1, b0, b1 = (x[k] for k in v)
    ap0, ap1, bp0, bp1 = (x[k] for k in vp)
    if decoy_case(v, vp, inputs) == 1:
        return ((b0 ** 2 - b1 ** 2) * (a0 - a1) * (ap0 ** n - ap1 ** n) * (bp0 ** m - bp1 ** m)
                - (bp0 ** 2 - bp1 ** 2) * (ap0 - ap1) * (a0 ** n - a1 ** n) * (b0 ** m - b1 ** m))
    return (a0 - a1) * (b0 - b1) * (ap0 - ap1) * (bp0 - bp1) * (a0 + a1 - ap0 - ap1)


def _coeffs(v, vp, inputs):
    """Prefactors (k, k') multiplying G_v' and G_v in J (and the Gamma sums)."""
    x = _intensity(inputs)
    a0, a1, b0, b1 = (x[k] for k in v)
    ap0, ap1, bp0, bp1 = (x[k] for k in vp)
    if decoy_case(v, vp, inputs) == 1:
        return (b0 ** 2 - b1 ** 2) * (a0 - a1), (bp0 ** 2 - bp1 ** 2) * (ap0 - ap1)
    return (a0 ** 2 - a1 ** 2) * (b0 - b1), (ap0 ** 2 - ap1 ** 2) * (bp0 - bp1)


def _scale_table(inputs: ProtocolInputs) -> dict:
    x = _intensity(inputs)
    return {ab: math.exp(x[ab[0]] + x[ab[1]]) / p_abx(inputs, *ab)
            for ab in product(DECOY_NAMES, DECOY_NAMES)}


def _scaled_tables(counts: dict, errs: dict, inputs: ProtocolInputs) -> tuple:
    """Per (a, b): scaled count, scaled lower width, scaled upper width."""
    scale = _scale_table(inputs)
    tilde = {ab: scale[ab] * counts[ab] for ab in scale}
    hat = {ab: scale[ab] * inverse_chernoff_lower_dev(counts[ab], errs[ab]) for ab in scale}
    up = {ab: scale[ab] * inverse_chernoff_upper_dev(counts[ab], errs[ab]) for ab in scale}
    return tilde, hat, up


def _cross(v):
    a0, a1, b0, b1 = v
    return ((a0, b0), (a1, b1), (a0, b1), (a1, b0))


def _g(v, tilde: dict) -> float:
    p00, p11, p01, p10 = _cross(v)
    return tilde[p00] + tilde[p11] - tilde[p01] - tilde[p10]


def mdi_j_gamma(v, vp, obs: MdiObservables, inputs: ProtocolInputs, errs: dict, *,
                tables=None):
    """(J_vv', Gamma_vv') for one candidate pair."""
    tilde, hat, up = tables or _scaled_tables(obs.X_sizes, errs, inputs)
    k, kp = _coeffs(v, vp, inputs)
    J = k * _g(vp, tilde) - kp * _g(v, tilde)
    gam = k * sum(hat[ab] for ab in _cross(vp)) + kp * sum(up[ab] for ab in _cross(v))
    return J, gam


def _uniform_errs(eps: float) -> dict:
    return {ab: eps for ab in product(DECOY_NAMES, DECOY_NAMES)}


def mdi_s11x_lower(obs: MdiObservables, inputs: ProtocolInputs, errs) -> float:
    errs = _uniform_errs(errs) if isinstance(errs, (int, float)) else errs
    tables = _scaled_tables(obs.X_sizes, errs, inputs)
    tau = tau_nm(1, 1, inputs)
    best = -math.inf
    for v, vp in V_PAIRS:
        c = c_nm(1, 1, v, vp, inputs)
        if abs(c) < C11_MIN:
            continue
        J, G = mdi_j_gamma(v, vp, obs, inputs, errs, tables=tables)
        best = max(best, tau / c * (J - G))
    if best == -math.inf:
        return 0.0
    return float(max(math.floor(best), 0))


def mdi_e11x_upper(obs: MdiObservables, inputs: ProtocolInputs, errs) -> float:
    errs = _uniform_errs(errs) if isinstance(errs, (int, float)) else errs
    x = _intensity(inputs)
    tilde, hat, up = _scaled_tables(obs.X_errors, errs, inputs)
    tau = tau_nm(1, 1, inputs)
    best = -math.inf
    for v in W_VECTORS:
        a0, a1, b0, b1 = v
        den = (x[a0] - x[a1]) * (x[b0] - x[b1])
        if abs(den) < C11_MIN:
            continue
        p00, p11, p01, p10 = _cross(v)
        F = _g(v, tilde)
        gam = -(up[p00] + up[p11] + hat[p01] + hat[p10])
        best = max(best, tau * (F - gam) / den)
    if best == -math.inf:
        return 0.0
    return float(max(math.ceil(best), 0))


@dataclass
class PeResultMdi:
    S11X_L: float
    E11X_U: float
    N11Z_L: float
    N11Z_U: float
    N11X_L: float
    N11X_U: float
    S11Z_L: float
    n11Z_L: float
    e11Z_U: float
    phi11Z_U: float
    epsilon_smooth: float

    @property
    def no_key(self) -> bool:
        return self.n11Z_L <= 0

    @property
    def h_eps(self) -> float:
        if self.no_key:
            return 0.0
        return self.n11Z_L * (1 - binary_entropy(min(self.phi11Z_U, 0.5)))


def _chernoff_bounds(mean: float, N: float, eps: float) -> tuple:
    lo = max(math.floor(mean - chernoff_delta_lower(mean, eps)), 0)
    hi = min(math.ceil(mean + chernoff_delta_upper(mean, eps)), N)
    return lo, hi


def mdi_transfer_to_z(S11X_L: float, E11X_U: float, obs: MdiObservables, inputs: ProtocolInputs,
                      N: float, M: float, eps_S: float, eps_C: float,
                      eps_11x: float = 0.0, eps_11x_prime: float = 0.0) -> PeResultMdi:
    if M > obs.Z_size:
        raise ValueError("block size exceeds |Z|")
    x = _intensity(inputs)
    p = _prob(inputs)
    p1 = lambda a: a * math.exp(-a)  # noqa: E731
    mu_z = N * inputs.q_Z ** 2 * p1(inputs.lam) ** 2
    mu_x = N * inputs.q_X ** 2 * sum(p[k] * p1(x[k]) for k in DECOY_NAMES) ** 2
    nz_lo, nz_hi = _chernoff_bounds(mu_z, N, eps_C)
    nx_lo, nx_hi = _chernoff_bounds(mu_x, N, eps_C)

    if nx_hi > 0:
        s11z = (nz_lo * S11X_L / nx_hi
                - (nz_lo + nx_hi) * serfling_upsilon(nz_lo, nx_hi, eps_S))
    else:
        s11z = 0.0
    S11Z_L = max(math.floor(s11z), 0)

    Z = obs.Z_size
    n11 = M * (S11Z_L / Z - serfling_lambda(Z, M, eps_S)) if Z > 0 and M > 0 else 0.0
    n11Z_L = max(math.floor(n11), 0)

    if S11X_L > 0:
        e = (n11Z_L * E11X_U / S11X_L
             + (S11X_L + n11Z_L) * serfling_upsilon(n11Z_L, S11X_L, eps_S))
        e11Z_U = min(math.ceil(e), n11Z_L)
    else:
        e11Z_U = n11Z_L
    phi = e11Z_U / n11Z_L if n11Z_L > 0 else 1.0
    return PeResultMdi(
        S11X_L=S11X_L, E11X_U=E11X_U, N11Z_L=nz_lo, N11Z_U=nz_hi, N11X_L=nx_lo, N11X_U=nx_hi,
        S11Z_L=S11Z_L, n11Z_L=n11Z_L, e11Z_U=e11Z_U, phi11Z_U=min(max(phi, 0.0), 1.0),
        epsilon_smooth=3 * eps_S + eps_11x + eps_11x_prime + 2 * eps_C,
    )


def mdi_pe(obs: MdiObservables, inputs: ProtocolInputs, N: float, M: float,
           gamma: float) -> PeResultMdi:
    """Full MDI estimation chain with every error term set to ``gamma``."""
    errs = _uniform_errs(gamma)
    s = mdi_s11x_lower(obs, inputs, errs)
    e = mdi_e11x_upper(obs, inputs, errs)
    return mdi_transfer_to_z(s, e, obs, inputs, N, M, gamma, gamma,
                             eps_11x=sum(errs.values()), eps_11x_prime=sum(errs.values()))


@dataclass
class PeResultBb84:
    n1Z_L: float
    S1X_L: float
    E1X_U: float
    e1Z_U: float
    phi1Z_U: float
    epsilon_smooth: float

    @property
    def no_key(self) -> bool:
        return self.n1Z_L <= 0

    @property
    def h_eps(self) -> float:
        if self.no_key:
            return 0.0
        return self.n1Z_L * (1 - binary_entropy(min(self.phi1Z_U, 0.5)))


def tau_1(inputs: ProtocolInputs) -> float:
    return sum(a * math.exp(-a) * p for a, p in zip(inputs.decoys, (inputs.p_mu, inputs.p_nu, inputs.p_omega)))


def _three_term(counts: dict, dev: float, inputs: ProtocolInputs) -> float:
    mu, nu, om = inputs.decoys
    p = _prob(inputs)
    pre = mu * tau_1(inputs) / (mu * (nu - om) - (nu ** 2 - om ** 2))
    body = (math.exp(nu) / p["nu"] * (counts["nu"] - dev)
            - math.exp(om) / p["omega"] * (counts["omega"] + dev)
            - (nu ** 2 - om ** 2) / mu ** 2 * math.exp(mu) / p["mu"] * (counts["mu"] + dev))
    return pre * body


def bb84_pe(obs: Bb84Observables, inputs: ProtocolInputs, M: float, eps_H: float,
            eps_S: float | None = None) -> PeResultBb84:
    mu, nu, om = inputs.decoys
    if not (mu > nu + om and nu > om >= 0):
        raise ValueError("BB84 decoy bounds need mu > nu + omega and nu > omega >= 0")
    if min(inputs.p_mu, inputs.p_nu, inputs.p_omega) <= 0:
        raise ValueError("BB84 decoy bounds need every decoy probability positive")
    eps_S = eps_H if eps_S is None else eps_S
    p = _prob(inputs)

    n1Z_L = max(math.floor(_three_term(obs.Zprime_sizes, hoeffding_delta(M, eps_H), inputs)), 0)
    X = sum(obs.X_sizes.values())
    S1X_L = max(math.floor(_three_term(obs.X_sizes, hoeffding_delta(X, eps_H), inputs)), 0)
    e = sum(obs.X_errors.values())
    de = hoeffding_delta(e, eps_H)
    E1X = tau_1(inputs) / (nu - om) * (math.exp(nu) / p["nu"] * (obs.X_errors["nu"] + de)
                                       - math.exp(om) / p["omega"] * (obs.X_errors["omega"] - de))
    E1X_U = max(math.ceil(E1X), 0)
    if S1X_L > 0:
        ez = n1Z_L * E1X_U / S1X_L + (S1X_L + n1Z_L) * serfling_upsilon(n1Z_L, S1X_L, eps_S)
        e1Z_U = min(math.ceil(ez), n1Z_L)
    else:
        e1Z_U = n1Z_L
    phi = e1Z_U / n1Z_L if n1Z_L > 0 else 1.0
    return PeResultBb84(n1Z_L=n1Z_L, S1X_L=S1X_L, E1X_U=E1X_U, e1Z_U=e1Z_U,
                        phi1Z_U=min(max(phi, 0.0), 1.0), epsilon_smooth=8 * eps_H + eps_S)
