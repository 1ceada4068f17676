"""Secret key length, authentication cost, key rate and input optimization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

from .bounds import Infeasible, binary_entropy, chernoff_delta_upper, rounds_for_blocksize
from .channel import (
    bb84_expected_observables,
    bb84_gain_and_error,
    mdi_expected_observables,
    mdi_gain_and_error,
)
from .config import ChannelParams, ProtocolInputs, SecurityBudget, get_preset
from .decoy import bb84_pe, mdi_pe
from .vss import CorruptionModel, make_config

# Number of equal error terms inside the smooth parameter bound, per scheme.
SMOOTH_TERMS = {"MDI": 3 + 9 + 9 + 2, "BB84": 8 + 1}


def ec_leakage(M: float, f_EC: float, E_tol: float) -> float:
    if not 0 <= E_tol <= 1:
        raise ValueError("E_tol must lie in [0, 1]")
    return M * f_EC * binary_entropy(E_tol)


def e_tol_calc(expected_qber: float, M: float, gamma_EC: float, n_q: int) -> float:
    if not 0 <= expected_qber <= 1:
        raise ValueError("expected QBER must lie in [0, 1]")
    return min(1.0, expected_qber + chernoff_delta_upper(expected_qber * M, gamma_EC / n_q) / M)


def _log_penalty(hat_eps_cor: float, eps_PA: float, delta: float, power: int = 1) -> float:
    return -(math.log2(hat_eps_cor) + 2 * math.log2(eps_PA) + power * math.log2(delta))


def key_length_ac(per_pair, hat_eps_cor: float, eps_PA: float, delta: float, *,
                  raw: bool = False) -> float:
    """``per_pair`` is a sequence of (h_eps, lambda)."""
    val = min(h - lam for h, lam in per_pair) - _log_penalty(hat_eps_cor, eps_PA, delta)
    return val if raw else max(math.floor(val), 0)


def key_length_pn(per_pair, hat_eps_cor: float, eps_PA: float, delta: float, *,
                  raw: bool = False) -> float:
    n_q = len(per_pair)
    if n_q < 2:
        raise ValueError("the non-collaborative bound needs at least two pairs")
    terms = [h - lam for h, lam in per_pair]
    total = sum(terms)
    val = min(total - x for x in terms) - _log_penalty(hat_eps_cor, eps_PA, delta, n_q - 1)
    return val if raw else max(math.floor(val), 0)


def auth_key_length(message_lens, gamma_AU: float) -> int:
    return sum(math.ceil(math.log2(2 * max(m, 1) / gamma_AU)) for m in message_lens)


def auth_cost(unit_model, t_c: int, message_lens, gamma_AU: float) -> int:
    """l_AU = R^2 |k|; ``message_lens`` lists every lab-to-lab message."""
    model = CorruptionModel(unit_model)
    R = 2 * t_c + 1 if model.active else 1
    return R * R * auth_key_length(message_lens, gamma_AU)


def key_rate(l: float, l_AU: float, n_q: int, N: float) -> float:
    if N < 1:
        raise ValueError("N must be at least 1")
    return (l - l_AU) / (n_q * N)


@dataclass(frozen=True)
class SecrecySplit:
    gamma_sec: float
    eps_PA: float
    delta: float
    n_terms: int


def split_secrecy_budget(scheme: str, module_model, n_q: int, hat_eps_sec: float) -> SecrecySplit:
    if hat_eps_sec <= 0:
        raise ValueError("hat_eps_sec must be positive")
    eps_terms = SMOOTH_TERMS[scheme]
    if CorruptionModel(module_model) is CorruptionModel.PN:
        n_terms = (n_q - 1) * (2 * eps_terms + 1) + 1
    else:
        n_terms = 2 * eps_terms + 2
    g = hat_eps_sec / n_terms
    return SecrecySplit(gamma_sec=g, eps_PA=g, delta=g, n_terms=n_terms)


@dataclass(frozen=True)
class Scenario:
    """Corruption scenario: models and bounds for modules and CP units."""

    module_model: str = "AC"
    t_q: int = 0
    unit_model: str = "AC"
    t_c: int = 0

    @classmethod
    def honest(cls) -> "Scenario":
        return cls("AC", 0, "AC", 0)

    @classmethod
    def ac(cls, t: int) -> "Scenario":
        return cls("AC", t, "AC", t)

    @classmethod
    def pn(cls, t: int = 2) -> "Scenario":
        return cls("PN", t, "PN", t)

    @property
    def n_q(self) -> int:
        if CorruptionModel(self.module_model) is CorruptionModel.PN:
            return 2
        return self.t_q + 1

    @property
    def unit_config(self):
        return make_config(self.unit_model, self.t_c)

    @property
    def unit_active(self) -> bool:
        return CorruptionModel(self.unit_model).active

    @property
    def label(self) -> str:
        if self == Scenario.honest():
            return "honest"
        return f"{self.module_model}{self.t_q}/{self.unit_model}{self.t_c}"


@dataclass
class KeyLengthResult:
    l: int
    per_pair_h: list
    per_pair_lambda: list
    l_AU: int
    K: float
    N: int
    E_tol: float
    n_q: int
    l_raw: float = 0.0
    auth_key_bits: int = 0
    gamma_sec: float = 0.0
    pe: object = None
    message_lens: list = field(default_factory=list)

    @property
    def has_key(self) -> bool:
        return self.K > 0


def tag_length(hat_eps_cor: float) -> int:
    return math.ceil(math.log2(2 / hat_eps_cor))


def shared_n_etol(params: ChannelParams, inputs: ProtocolInputs, budget: SecurityBudget,
                  M: float, n_q: int) -> tuple:
    """N and E_tol for the given number of pairs, from the expected gains."""
    if inputs.scheme == "MDI":
        g = mdi_gain_and_error(params, inputs)
        y, E = g.G_ZZ, g.E_ZZ
    else:
        g = bb84_gain_and_error(params, inputs)
        y, E = sum(g.G_ZZ.values()), g.E_Z
    if y <= 0:
        raise Infeasible("zero key-basis gain")
    return rounds_for_blocksize(M, y, budget.gamma_sift / n_q), e_tol_calc(E, M, budget.gamma_EC, n_q)


def evaluate(params: ChannelParams, inputs: ProtocolInputs, scenario: Scenario,
             budget: SecurityBudget, M: float | None = None, *, N: float | None = None,
             E_tol: float | None = None) -> KeyLengthResult:
    """Expected-value key length, authentication cost and rate for one point."""
    M = inputs.M if M is None else M
    n_q = scenario.n_q
    if inputs.scheme == "MDI":
        gains = mdi_gain_and_error(params, inputs)
        y, E = gains.G_ZZ, gains.E_ZZ
    else:
        gains = bb84_gain_and_error(params, inputs)
        y, E = sum(gains.G_ZZ.values()), gains.E_Z
    if N is None:
        if y <= 0:
            raise Infeasible("zero key-basis gain")
        N = rounds_for_blocksize(M, y, budget.gamma_sift / n_q)
    if E_tol is None:
        E_tol = e_tol_calc(E, M, budget.gamma_EC, n_q)
    split = split_secrecy_budget(inputs.scheme, scenario.module_model, n_q, budget.hat_eps_sec)
    g = split.gamma_sec

    if inputs.scheme == "MDI":
        obs = mdi_expected_observables(params, inputs, N, gains=gains)
        pe = mdi_pe(obs, inputs, N, M, g)
        msg_a = obs.info_len + obs.rAX_len
    else:
        obs = bb84_expected_observables(params, inputs, N, M, gains=gains)
        pe = bb84_pe(obs, inputs, M, g)
        msg_a = obs.info_len
    h = pe.h_eps
    lam = ec_leakage(M, inputs.f_EC, E_tol)
    per_pair = [(h, lam)] * n_q

    if CorruptionModel(scenario.module_model) is CorruptionModel.PN:
        fn = key_length_pn
    else:
        fn = key_length_ac
    l_raw = fn(per_pair, budget.hat_eps_cor, split.eps_PA, split.delta, raw=True)
    l = max(math.floor(l_raw), 0)

    tag = tag_length(budget.hat_eps_cor)
    m_b = n_q * obs.rAZ_len + n_q * lam + tag + 2 * tag + (M * n_q + l - 1)
    msgs = [msg_a] * n_q + [m_b]
    gamma_au = budget.gamma_AU(scenario.unit_active, scenario.t_c, n_q)
    k_bits = auth_key_length(msgs, gamma_au)
    l_au = auth_cost(scenario.unit_model, scenario.t_c, msgs, gamma_au)
    return KeyLengthResult(
        l=l, per_pair_h=[h] * n_q, per_pair_lambda=[lam] * n_q, l_AU=l_au,
        K=key_rate(l, l_au, n_q, N), N=int(N), E_tol=E_tol, n_q=n_q, l_raw=l_raw,
        auth_key_bits=k_bits, gamma_sec=g, pe=pe, message_lens=msgs,
    )


def auth_rate_gap(l_au_t: float, l_au_h: float, t: int, N: float) -> float:
    """Predicted K_honest/(t+1) - K_AC,t under shared N and E_tol."""
    return (l_au_t - l_au_h) / ((t + 1) * N)


# Optimization

_BOUNDS = {"lam": (1e-3, 1.5), "mu": (1e-3, 1.5), "q_Z": (0.02, 0.995)}


def _sig(x):
    return 1.0 / (1.0 + math.exp(-max(min(x, 40.0), -40.0)))


def _softmax3(a, b):
    m = max(a, b, 0.0)
    e = [math.exp(a - m), math.exp(b - m), math.exp(-m)]
    s = sum(e)
    return [v / s for v in e]


def decode_inputs(z, scheme: str, omega: float, M: float, f_EC: float) -> ProtocolInputs:
    """Map an unconstrained vector onto feasible protocol inputs."""
    z = list(z)
    if scheme == "MDI":
        zl, zm, zn, zq, za, zb = z
        lam = _BOUNDS["lam"][0] + (_BOUNDS["lam"][1] - _BOUNDS["lam"][0]) * _sig(zl)
    else:
        zm, zn, zq, za, zb = z
        lam = 0.0
    lo = 3 * omega
    mu = lo + (_BOUNDS["mu"][1] - lo) * _sig(zm)
    if scheme == "MDI":
        nu = omega + (mu - omega) * (0.001 + 0.998 * _sig(zn))
    else:
        nu = omega + (mu - 2 * omega) * (0.001 + 0.998 * _sig(zn))
    q_Z = _BOUNDS["q_Z"][0] + (_BOUNDS["q_Z"][1] - _BOUNDS["q_Z"][0]) * _sig(zq)
    p = _softmax3(za, zb)
    p = [0.005 + 0.985 * v for v in p]
    p[2] = 1.0 - p[0] - p[1]
    return ProtocolInputs(scheme=scheme, lam=lam, mu=mu, nu=nu, omega=omega, q_Z=q_Z,
                          p_mu=p[0], p_nu=p[1], p_omega=p[2], M=int(M), f_EC=f_EC)


def _inv_sig(u):
    u = min(max(u, 1e-9), 1 - 1e-9)
    return math.log(u / (1 - u))


def encode_inputs(inp: ProtocolInputs) -> np.ndarray:
    omega = inp.omega
    lo = 3 * omega
    zm = _inv_sig((inp.mu - lo) / (_BOUNDS["mu"][1] - lo))
    span = inp.mu - omega if inp.scheme == "MDI" else inp.mu - 2 * omega
    zn = _inv_sig(((inp.nu - omega) / span - 0.001) / 0.998)
    zq = _inv_sig((inp.q_Z - _BOUNDS["q_Z"][0]) / (_BOUNDS["q_Z"][1] - _BOUNDS["q_Z"][0]))
    p = [(v - 0.005) / 0.985 for v in (inp.p_mu, inp.p_nu, inp.p_omega)]
    p = [max(v, 1e-9) for v in p]
    za, zb = math.log(p[0] / p[2]), math.log(p[1] / p[2])
    if inp.scheme == "MDI":
        zl = _inv_sig((inp.lam - _BOUNDS["lam"][0]) / (_BOUNDS["lam"][1] - _BOUNDS["lam"][0]))
        return np.array([zl, zm, zn, zq, za, zb])
    return np.array([zm, zn, zq, za, zb])


def reference_inputs(scheme: str, omega: float = 1e-3, M: float = 10**6,
                     f_EC: float = 1.16) -> ProtocolInputs:
    """Hand-picked reasonable settings used as one optimizer start."""
    if scheme == "MDI":
        return ProtocolInputs("MDI", lam=0.3, mu=0.3, nu=0.05, omega=omega, q_Z=0.7,
                              p_mu=0.2, p_nu=0.4, p_omega=0.4, M=int(M), f_EC=f_EC)
    return ProtocolInputs("BB84", lam=0.0, mu=0.5, nu=0.1, omega=omega, q_Z=0.7,
                          p_mu=0.6, p_nu=0.3, p_omega=0.1, M=int(M), f_EC=f_EC)


@dataclass
class OptimizationResult:
    inputs: ProtocolInputs
    result: KeyLengthResult | None
    K: float
    feasible: bool
    n_evals: int


def _score(params, inputs, scenario, budget, M, shared):
    try:
        if shared is not None:
            n_q_ref = shared
            N, E_tol = shared_n_etol(params, inputs, budget, M, n_q_ref)
            res = evaluate(params, inputs, scenario, budget, M, N=N, E_tol=E_tol)
        else:
            res = evaluate(params, inputs, scenario, budget, M)
    except (Infeasible, ValueError, ZeroDivisionError, OverflowError):
        return -math.inf, None
    smooth = (res.l_raw - res.l_AU) / (res.n_q * res.N)
    return smooth, res


def optimize_inputs(params: ChannelParams, scheme: str, scenario: Scenario,
                    budget: SecurityBudget, M: float, *, omega: float = 1e-3,
                    f_EC: float = 1.16, n_starts: int = 20, seed: int = 0,
                    maxiter: int | None = None, start: ProtocolInputs | None = None,
                    shared_n_q: int | None = None) -> OptimizationResult:
    """Multi-start Nelder-Mead over intensities, basis and decoy probabilities.

    The search maximizes the unfloored rate so that it keeps a slope where
    the integer key length is flat; the returned rate uses the floored length.
    ``shared_n_q`` fixes N and E_tol to the values for that many pairs.
    """
    rng = np.random.default_rng(seed)
    dim = 6 if scheme == "MDI" else 5
    maxiter = maxiter or 120 * dim
    starts = [encode_inputs(start or reference_inputs(scheme, omega, M, f_EC))]
    while len(starts) < n_starts:
        starts.append(rng.uniform(-3, 3, size=dim))
    cache = {}
    n_evals = 0

    def f(z):
        nonlocal n_evals
        key = tuple(np.round(z, 12))
        if key not in cache:
            n_evals += 1
            inp = decode_inputs(z, scheme, omega, M, f_EC)
            s, res = _score(params, inp, scenario, budget, M, shared_n_q)
            cache[key] = (s, res, inp)
        s = cache[key][0]
        return 1e30 if s == -math.inf else -s

    best = None
    for z0 in starts:
        if f(z0) >= 1e30:
            continue
        out = minimize(f, z0, method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-14})
        f(out.x)
        cand = cache[tuple(np.round(out.x, 12))]
        if cand[1] is None:
            continue
        if best is None or (cand[1].K, cand[0]) > (best[1].K, best[0]):
            best = cand
    if best is None:
        inp = start or reference_inputs(scheme, omega, M, f_EC)
        return OptimizationResult(inp, None, -math.inf, False, n_evals)
    # Prefer the best floored rate seen anywhere during the search.
    for s, res, inp in cache.values():
        if res is not None and res.K > best[1].K:
            best = (s, res, inp)
    return OptimizationResult(best[2], best[1], best[1].K, best[1].K > 0, n_evals)


class KeyRateEstimator(BaseEstimator):
    """Fits optimized protocol inputs per channel loss and predicts key rates.

    ``X`` is a column (or 1-d array) of total channel losses in dB.
    """

    def __init__(self, scheme="MDI", module_model="AC", t_q=0, unit_model="AC", t_c=0,
                 M=10**6, preset="paper-2020-defaults", n_starts=20, seed=0, maxiter=None):
        self.scheme = scheme
        self.module_model = module_model
        self.t_q = t_q
        self.unit_model = unit_model
        self.t_c = t_c
        self.M = M
        self.preset = preset
        self.n_starts = n_starts
        self.seed = seed
        self.maxiter = maxiter

    def _scenario(self) -> Scenario:
        return Scenario(self.module_model, self.t_q, self.unit_model, self.t_c)

    @staticmethod
    def _losses(X) -> np.ndarray:
        return np.asarray(X, dtype=float).reshape(-1)

    def fit(self, X, y=None):
        pre = get_preset(self.preset)
        scen = self._scenario()
        self.inputs_ = {}
        self.results_ = {}
        warm = None
        for loss in self._losses(X):
            opt = optimize_inputs(pre.channel.with_loss(loss), self.scheme, scen, pre.budget,
                                  self.M, omega=pre.omega, f_EC=pre.f_EC,
                                  n_starts=self.n_starts, seed=self.seed,
                                  maxiter=self.maxiter, start=warm)
            self.inputs_[float(loss)] = opt.inputs
            self.results_[float(loss)] = opt.result
            if opt.feasible:
                warm = opt.inputs
        return self

    def predict(self, X) -> np.ndarray:
        pre = get_preset(self.preset)
        scen = self._scenario()
        fitted = np.array(sorted(self.inputs_))
        out = []
        for loss in self._losses(X):
            near = float(fitted[np.argmin(np.abs(fitted - loss))])
            try:
                res = evaluate(pre.channel.with_loss(loss), self.inputs_[near], scen,
                               pre.budget, self.M)
                out.append(res.K)
            except (Infeasible, ValueError):
                out.append(-np.inf)
        return np.array(out)
