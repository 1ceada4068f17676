"""The distributed post-processing protocol, run end to end over a simulated network.

Steps: raw-key distribution (Share), sifting, parameter estimation, hash
selection by RBS generation, error correction with share-wise syndromes,
error verification, and share-wise privacy amplification.

Error correction runs in transparent mode: the syndrome map is the
identity, so the error pattern is exact and every stage is exercised. The
leakage charged in the key length always follows the f_EC model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bits import BitString, ToeplitzHash, irreducible_from_seed, lfsr_toeplitz_hash
from .bounds import Infeasible, NumericalFailure, rounds_for_blocksize
from .channel import (
    DECOY_NAMES,
    OMEGA,
    OMEGA_1,
    X_ANGLE,
    Z_ANGLE,
    Bb84Observables,
    MdiObservables,
    _success_table,
    bb84_gain_and_error,
    mdi_eta,
    mdi_gain_and_error,
)
from .config import ChannelParams, ProtocolInputs, SecurityBudget
from .decoy import bb84_pe, mdi_pe
from .keyrate import (
    KeyLengthResult,
    auth_cost,
    auth_key_length,
    e_tol_calc,
    ec_leakage,
    key_length_ac,
    key_length_pn,
    key_rate,
    split_secrecy_budget,
    tag_length,
)
from .network import (
    AdversaryScript,
    DeploymentConfig,
    Network,
    ProtocolAbort,
    build_network,
    inject,
)
from .vss import HONEST_DEALER, AbortState, ShareTable, VssAbort, concat_tables, finalize

# Setting codes: 0 = key basis, 1..3 = test basis with intensity mu, nu, omega.
PSI_MINUS = 2
PSI_PLUS = 1


@dataclass
class PairData:
    """Classical output of one QKD pair after its quantum phase."""

    scheme: str
    settings_A: np.ndarray
    settings_B: np.ndarray
    bits_A: np.ndarray
    bits_B: np.ndarray
    outcome: np.ndarray  # MDI: 0 fail, 1 psi+, 2 psi-. BB84: Bob's detection flag.

    @property
    def N(self) -> int:
        return len(self.bits_A)


def _draw_settings(N, inputs, rng):
    z = rng.random(N) < inputs.q_Z
    dec = rng.choice(3, size=N, p=[inputs.p_mu, inputs.p_nu, inputs.p_omega]) + 1
    return np.where(z, 0, dec).astype(np.int8)


def mdi_round_table(params: ChannelParams, inputs: ProtocolInputs) -> np.ndarray:
    """P[sA, sB, bA, bB, o]: probability of each announced success event."""
    eta = mdi_eta(params)
    amps = [math.sqrt(inputs.lam)] + [math.sqrt(a) for a in inputs.decoys]
    out = np.zeros((4, 4, 2, 2, len(OMEGA)))
    for za in (True, False):
        for zb in (True, False):
            ia = [0] if za else [1, 2, 3]
            ib = [0] if zb else [1, 2, 3]
            pairs = [(a, b) for a in ia for b in ib]
            tab = _success_table([amps[a] for a, _ in pairs], [amps[b] for _, b in pairs],
                                 Z_ANGLE if za else X_ANGLE, Z_ANGLE if zb else X_ANGLE,
                                 params, eta)
            for k, (a, b) in enumerate(pairs):
                out[a, b] = tab[k]
    return out


def sample_mdi_pair(params, inputs, N, rng, table=None) -> PairData:
    P = mdi_round_table(params, inputs) if table is None else table
    sA, sB = _draw_settings(N, inputs, rng), _draw_settings(N, inputs, rng)
    bA = rng.integers(0, 2, N, dtype=np.int8)
    bB = rng.integers(0, 2, N, dtype=np.int8)
    probs = P[sA, sB, bA, bB]  # (N, 4)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(N)
    event = (u[:, None] >= cum).sum(axis=1)  # 4 means no success
    minus = {OMEGA.index(e) for e in OMEGA_1}
    outcome = np.where(event == len(OMEGA), 0,
                       np.where(np.isin(event, list(minus)), PSI_MINUS, PSI_PLUS)).astype(np.int8)
    return PairData("MDI", sA, sB, bA, bB, outcome)


def sample_bb84_pair(params, inputs, N, rng, gains=None) -> PairData:
    g = gains or bb84_gain_and_error(params, inputs)
    sA = _draw_settings(N, inputs, rng)
    zB = rng.random(N) < inputs.q_Z
    bA = rng.integers(0, 2, N, dtype=np.int8)
    inten = np.where(sA == 0, rng.choice(3, size=N, p=[inputs.p_mu, inputs.p_nu, inputs.p_omega]),
                     sA - 1)
    Q = np.array([g.Q[a] for a in DECOY_NAMES])[inten]
    E = np.array([g.E[a] for a in DECOY_NAMES])[inten]
    det = (rng.random(N) < Q).astype(np.int8)
    flip = rng.random(N) < E
    rand = rng.integers(0, 2, N, dtype=np.int8)
    same = (sA == 0) == zB
    bB = np.where(same, bA ^ flip, rand).astype(np.int8)
    bB = np.where(det == 1, bB, 0).astype(np.int8)
    # BB84 settings carry the intensity in both bases: code = 4*basis + intensity.
    codeA = (np.where(sA == 0, 0, 4) + inten).astype(np.int8)
    return PairData("BB84", codeA, np.where(zB, 0, 1).astype(np.int8), bA, bB, det)


# Per-pair index sets.

def _bb84_a_z(d):
    return d.settings_A < 4


def key_positions(d: PairData, lab: str) -> np.ndarray:
    """Rounds whose raw bit the lab's module shares."""
    if d.scheme == "MDI":
        s = d.settings_A if lab == "A" else d.settings_B
        return np.flatnonzero((d.outcome > 0) & (s == 0))
    if lab == "A":
        return np.flatnonzero(_bb84_a_z(d))
    return np.flatnonzero((d.outcome == 1) & (d.settings_B == 0))


def _bits(arr) -> BitString:
    return BitString.from_bits(np.asarray(arr, dtype=np.uint8))


def _codes_to_bits(codes, width) -> BitString:
    codes = np.asarray(codes, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    bits = ((codes[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return _bits(bits)


def _bits_to_codes(b: BitString, width: int) -> np.ndarray:
    if len(b) % width:
        raise InfoError("truncated code string")
    if len(b) == 0:
        return np.zeros(0, dtype=np.int8)
    bits = b.to_numpy().astype(np.int64).reshape(-1, width)
    return (bits @ (1 << np.arange(width - 1, -1, -1))).astype(np.int8)


def module_info(d: PairData, lab: str) -> BitString:
    """What a module hands to its lab's sifting units.

    MDI: the relay announcement (2 bits per round), then the settings on
    successful rounds (2 bits each), then the raw bits of successful
    test-basis rounds. BB84 Alice: basis and intensity per round (3 bits),
    then her test-basis raw bits. BB84 Bob: basis and detection per round,
    then his detected test-basis raw bits.
    """
    if d.scheme == "MDI":
        s = d.settings_A if lab == "A" else d.settings_B
        b = d.bits_A if lab == "A" else d.bits_B
        ok = d.outcome > 0
        return (_codes_to_bits(d.outcome, 2) + _codes_to_bits(s[ok], 2)
                + _bits(b[ok & (s > 0)]))
    if lab == "A":
        return _codes_to_bits(d.settings_A, 3) + _bits(d.bits_A[d.settings_A >= 4])
    code = 2 * d.settings_B + d.outcome
    xdet = (d.settings_B == 1) & (d.outcome == 1)
    return _codes_to_bits(code, 2) + _bits(d.bits_B[xdet])


@dataclass
class ParsedInfo:
    outcome: np.ndarray
    settings: np.ndarray
    test_bits: np.ndarray


class InfoError(ValueError):
    pass


def parse_info(b: BitString, scheme: str, lab: str, N: int, outcome=None) -> ParsedInfo:
    bits = b.to_numpy() if len(b) else np.zeros(0, dtype=np.uint8)
    try:
        if scheme == "MDI":
            pos = 0
            if outcome is None:
                outcome = _bits_to_codes(b[0:2 * N], 2)
                pos = 2 * N
            ok = outcome > 0
            k = int(ok.sum())
            s_ok = _bits_to_codes(b[pos:pos + 2 * k], 2)
            pos += 2 * k
            settings = np.full(N, -1, dtype=np.int8)
            settings[ok] = s_ok
            nt = int((s_ok > 0).sum())
            tb = bits[pos:pos + nt]
            if pos + nt != len(b) or np.any(s_ok > 3):
                raise InfoError("info length mismatch")
            return ParsedInfo(outcome, settings, tb.astype(np.int8))
        if lab == "A":
            codes = _bits_to_codes(b[0:3 * N], 3)
            nt = int((codes >= 4).sum())
            if 3 * N + nt != len(b) or np.any((codes & 3) == 3):
                raise InfoError("info length mismatch")
            return ParsedInfo(np.zeros(N, dtype=np.int8), codes, bits[3 * N:].astype(np.int8))
        codes = _bits_to_codes(b[0:2 * N], 2)
        det, basis = codes & 1, codes >> 1
        nt = int(((basis == 1) & (det == 1)).sum())
        if 2 * N + nt != len(b):
            raise InfoError("info length mismatch")
        return ParsedInfo(det.astype(np.int8), basis.astype(np.int8), bits[2 * N:].astype(np.int8))
    except (ValueError, IndexError) as exc:
        raise InfoError(str(exc)) from None


def alice_message(info_a: ParsedInfo, scheme: str) -> BitString:
    """The part of Alice's info sent to Bob's lab (drops the public announcement)."""
    if scheme == "MDI":
        ok = info_a.outcome > 0
        return _codes_to_bits(info_a.settings[ok], 2) + _bits(info_a.test_bits)
    return _codes_to_bits(info_a.settings, 3) + _bits(info_a.test_bits)


# Sifting and estimation at Bob's units.

@dataclass
class SiftResult:
    Z: np.ndarray  # key rounds, ascending
    Zprime: np.ndarray  # chosen M rounds, ascending
    masks: dict  # lab -> mask over that lab's shared positions
    obs: object


def _mdi_sift(a: ParsedInfo, b: ParsedInfo, N: int):
    ok = b.outcome > 0
    sA, sB = a.settings, b.settings
    Z = np.flatnonzero(ok & (sA == 0) & (sB == 0))
    xa = np.full(N, -1, dtype=np.int8)
    xa[ok & (sA > 0)] = a.test_bits
    xb = np.full(N, -1, dtype=np.int8)
    xb[ok & (sB > 0)] = b.test_bits
    xx = ok & (sA > 0) & (sB > 0)
    bcorr = xb ^ (b.outcome == PSI_MINUS)
    sizes, errors = {}, {}
    for ia, na in enumerate(DECOY_NAMES, 1):
        for ib, nb in enumerate(DECOY_NAMES, 1):
            sel = xx & (sA == ia) & (sB == ib)
            sizes[(na, nb)] = int(sel.sum())
            errors[(na, nb)] = int((xa[sel] != bcorr[sel]).sum())
    n_ok = int(ok.sum())
    n_ax = int((ok & (sA > 0)).sum())
    n_az = int((ok & (sA == 0)).sum())
    obs = MdiObservables(Z_size=len(Z), X_sizes=sizes, X_errors=errors,
                         info_len=2 * n_ok, rAX_len=n_ax, rAZ_len=n_az)
    return Z, obs


def _bb84_sift(a: ParsedInfo, b: ParsedInfo, N: int):
    det = b.outcome == 1
    aZ = a.settings < 4
    bZ = b.settings == 0
    Z = np.flatnonzero(aZ & bZ & det)
    xa = np.full(N, -1, dtype=np.int8)
    xa[~aZ] = a.test_bits
    xb = np.full(N, -1, dtype=np.int8)
    xb[(~bZ) & det] = b.test_bits
    xx = (~aZ) & (~bZ) & det
    inten = a.settings & 3
    sizes = {n: int((xx & (inten == i)).sum()) for i, n in enumerate(DECOY_NAMES)}
    errors = {n: int((xx & (inten == i) & (xa != xb)).sum()) for i, n in enumerate(DECOY_NAMES)}
    obs = Bb84Observables(Zprime_sizes={}, X_sizes=sizes, X_errors=errors, Z_size=len(Z),
                          info_len=3 * N + int((~aZ).sum()), rAZ_len=int(aZ.sum()))
    return Z, obs, inten


def sift(a: ParsedInfo, b: ParsedInfo, scheme: str, N: int, M: int, seed: int) -> SiftResult:
    if scheme == "MDI":
        Z, obs = _mdi_sift(a, b, N)
        posA = np.flatnonzero((b.outcome > 0) & (a.settings == 0))
        posB = np.flatnonzero((b.outcome > 0) & (b.settings == 0))
    else:
        Z, obs, inten = _bb84_sift(a, b, N)
        posA = np.flatnonzero(a.settings < 4)
        posB = np.flatnonzero((b.outcome == 1) & (b.settings == 0))
    if len(Z) < M:
        raise Infeasible(f"only {len(Z)} key rounds for block size {M}")
    pick = np.sort(np.random.default_rng(seed).choice(len(Z), size=M, replace=False))
    Zp = Z[pick]
    if scheme == "BB84":
        obs.Zprime_sizes = {n: int((inten[Zp] == i).sum()) for i, n in enumerate(DECOY_NAMES)}
    masks = {"A": np.isin(posA, Zp).astype(np.int8), "B": np.isin(posB, Zp).astype(np.int8)}
    return SiftResult(Z, Zp, masks, obs)


def estimate(obs, scheme: str, inputs: ProtocolInputs, N: int, M: int, gamma: float) -> tuple:
    """(h_eps, PE result or None). Degenerate toy statistics give zero entropy."""
    try:
        if scheme == "MDI":
            pe = mdi_pe(obs, inputs, N, M, gamma)
        else:
            pe = bb84_pe(obs, inputs, M, gamma)
    except (Infeasible, NumericalFailure, ValueError, ZeroDivisionError, OverflowError):
        return 0.0, None
    return pe.h_eps, pe


# Linear stages, applied to single values or share-wise.

def project(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    return lambda s: s.select(idx)


def ev_hash(desc: BitString, k: int):
    poly = irreducible_from_seed(desc[:k].value, k)
    state = desc[k:].value

    def f(s: BitString) -> BitString:
        return BitString(lfsr_toeplitz_hash(s, poly, state, k), k)
    return f


def pa_hash(desc: BitString, input_len: int, l: int):
    return ToeplitzHash(desc, input_len, l)


def syndrome(s: BitString) -> BitString:
    """Transparent EC: the identity map, trivially linear."""
    return s


# Results

@dataclass
class SessionKeys:
    raw: dict = field(default_factory=dict)  # (lab, j) -> ShareTable of shared raw bits
    sifted: dict = field(default_factory=dict)  # (lab, j) -> ShareTable
    s: dict = field(default_factory=dict)  # lab -> concatenated sifted key
    corrected_A: ShareTable | None = None
    final: dict = field(default_factory=dict)  # lab -> ShareTable
    info: dict = field(default_factory=dict)  # (lab, j) -> BitString
    masks: dict = field(default_factory=dict)  # (lab, j) -> mask
    sy: dict = field(default_factory=dict)  # lab -> BitString
    tags: dict = field(default_factory=dict)  # lab -> BitString
    ev_desc: BitString | None = None
    pa_desc: BitString | None = None
    error_pattern: BitString | None = None


@dataclass
class ProtocolResult:
    status: str  # "completed" or "aborted"
    abort: AbortState | None
    keys: SessionKeys
    length: KeyLengthResult | None
    transcript: list
    network: Network
    pairs: list
    sift: dict = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def final_keys(self) -> tuple:
        return finalize_keys(self.keys.final, self.network.cfg.unit_config)


def finalize_keys(tables: dict, cfg) -> tuple:
    """Per-share MV over every held copy, then XOR; returns (k_A, k_B)."""
    kA, _ = finalize(tables["A"], cfg)
    kB, _ = finalize(tables["B"], cfg)
    return kA, kB


def honest_key_views(res: ProtocolResult) -> dict:
    """Key reconstructed by each honest unit from the copies it would receive."""
    out = {}
    for lab in ("A", "B"):
        sess = res.network.labs[lab]
        k, _ = finalize(res.keys.final[lab], sess.cfg)
        for p in sess.non_active():
            out[(lab, p)] = k
    return out


def toy_inputs(scheme: str, M: int = 64) -> ProtocolInputs:
    """High-gain settings that keep toy sessions to a few thousand rounds."""
    if scheme == "MDI":
        return ProtocolInputs("MDI", lam=0.6, mu=0.5, nu=0.1, omega=1e-3, q_Z=0.85,
                              p_mu=0.4, p_nu=0.4, p_omega=0.2, M=M)
    return ProtocolInputs("BB84", lam=0.0, mu=0.6, nu=0.2, omega=1e-3, q_Z=0.85,
                          p_mu=0.6, p_nu=0.3, p_omega=0.1, M=M)


def _tamper_local(net: Network, lab: str, table: ShareTable) -> ShareTable:
    sess = net.labs[lab]
    for p, strat in sorted(sess.strategies.items()):
        if strat.active:
            for i, v in table.copies[p].items():
                table.copies[p][i] = strat.local_copy(sess, p, i, v)
    return table


def _flip_first_share(table: ShareTable, holders, value: BitString) -> ShareTable:
    copies = {p: dict(c) for p, c in table.copies.items()}
    for p in holders:
        copies[p][0] = copies[p][0] ^ value
    return ShareTable(table.dealer_input_len, copies)


def _mask_index(mask: BitString, n: int, M: int):
    if len(mask) != n:
        return None
    idx = np.flatnonzero(mask.to_numpy()) if n else np.zeros(0, dtype=int)
    return idx if len(idx) == M else None


def _decided(values: dict, net: Network, lab: str, phase: str):
    """The common value of the honest units, aborting if any is missing."""
    for p, v in sorted(values.items()):
        if v is None:
            net.abort(lab, p, phase)
    return values


def run_protocol(deploy: DeploymentConfig, inputs: ProtocolInputs, params: ChannelParams,
                 script: AdversaryScript | None = None, seed: int = 0, *,
                 budget: SecurityBudget | None = None, target_length: int | None = None,
                 N: int | None = None, ev_flip: bool = False,
                 pool_bits: int | None = None) -> ProtocolResult:
    """Run one session. Aborts are reported in the result, never raised."""
    budget = budget or SecurityBudget()
    unit_active = deploy.unit_model.active
    gamma_au = budget.gamma_AU(unit_active, deploy.t_c, deploy.n_q)
    kw = {} if pool_bits is None else {"pool_bits": pool_bits}
    net = build_network(deploy, seed, gamma_au=gamma_au, **kw)
    if script is not None:
        inject(script, net)
    keys = SessionKeys()
    state = {"length": None, "pairs": [], "sift": {}}
    try:
        _run(net, deploy, inputs, params, budget, keys, state, target_length, N, ev_flip)
        status, abort = "completed", None
    except ProtocolAbort as exc:
        status, abort = "aborted", exc.state
    except VssAbort as exc:
        status, abort = "aborted", exc.state
    return ProtocolResult(status, abort, keys, state["length"], net.transcript, net,
                          state["pairs"], state["sift"])


def _run(net, deploy, inputs, params, budget, keys, state, target_length, N, ev_flip):
    scheme = inputs.scheme
    M = int(inputs.M)
    n_q = deploy.n_q
    cfg = deploy.unit_config
    sigma1 = sorted(cfg.sigma[0])
    rng = net.rng

    # Step 1: quantum phase (placeholder) and raw-key distribution.
    if scheme == "MDI":
        table = mdi_round_table(params, inputs)
        y = float(inputs.q_Z ** 2 * 0.25 * table[0, 0].sum())
    else:
        gains = bb84_gain_and_error(params, inputs)
        y = sum(gains.G_ZZ.values())
    if N is None:
        N = rounds_for_blocksize(M, y, budget.gamma_sift / n_q)
    N = int(N)
    for j in range(n_q):
        if scheme == "MDI":
            d = sample_mdi_pair(params, inputs, N, rng, table)
        else:
            d = sample_bb84_pair(params, inputs, N, rng, gains)
        state["pairs"].append(d)

    info = {}
    for j, d in enumerate(state["pairs"]):
        for lab in ("A", "B"):
            strat = net.module_strategy(lab, j)
            raw = _bits((d.bits_A if lab == "A" else d.bits_B)[key_positions(d, lab)])
            if strat is not None:
                raw = strat.raw_key(raw)
            sess = net.labs[lab]
            try:
                keys.raw[(lab, j)] = sess.share(raw, dealer=strat or HONEST_DEALER,
                                                dealer_name=f"{lab}.qkd{j}", length=len(raw),
                                                phase=f"distribute/{lab}{j}")
            except VssAbort as exc:
                net.abort_state = exc.state
                raise ProtocolAbort(exc.state) from None
            keys.raw[(lab, j)] = _tamper_local(net, lab, keys.raw[(lab, j)])
            msg = module_info(d, lab)
            info[(lab, j)] = net.module_broadcast(lab, j, msg, sigma1, f"info/{lab}{j}")
            keys.info[(lab, j)] = msg

    # Step 2: Alice's sifting units send their info to Bob's.
    parsed_A = {}
    msgs_A = []
    for j, d in enumerate(state["pairs"]):
        per_unit = {}
        for u in sigma1:
            try:
                per_unit[u] = parse_info(info[("A", j)][u], scheme, "A", N)
            except InfoError:
                if not net.is_active_unit("A", u):
                    net.abort("A", u, f"info/A{j}/parse")
                per_unit[u] = None
        parsed_A[j] = per_unit
        honest = [u for u in sigma1 if not net.is_active_unit("A", u)]
        msg_len = len(alice_message(per_unit[honest[0]], scheme)) if honest else 0
        msgs_A.append(msg_len)

        def value_of(u, j=j):
            pi = parsed_A[j][u]
            return alice_message(pi, scheme) if pi is not None else BitString()
        got = net.send_auth("A", value_of, f"sift/mA{j}")
        parsed_A[j] = _decided(got, net, "B", f"sift/mA{j}")

    # Steps 2-3 at Bob: sifting, subset selection, estimation, key length.
    z_seed = net.rbs_generate("B", 64, phase="rbs/sift")
    gamma = split_secrecy_budget(scheme, deploy.module_model, n_q, budget.hat_eps_sec).gamma_sec
    E_tol = inputs.E_tol or _expected_etol(params, inputs, M, budget, n_q)
    lam = ec_leakage(M, inputs.f_EC, E_tol)
    per_unit_masks = {}
    decision = {}
    for u in sigma1:
        if net.is_active_unit("B", u):
            continue
        hs = []
        masks = {}
        for j in range(n_q):
            try:
                pb = parse_info(info[("B", j)][u], scheme, "B", N)
                mA = parsed_A[j][u]
                pa = parse_info(mA, scheme, "A", N, outcome=pb.outcome if scheme == "MDI" else None)
                sr = sift(pa, pb, scheme, N, M, z_seed[u].value)
            except InfoError:
                net.abort("B", u, f"sift/parse{j}")
            except Infeasible:
                net.abort("B", u, f"sift/short{j}")
            h, pe = estimate(sr.obs, scheme, inputs, N, M, gamma)
            hs.append((h, lam))
            masks[j] = sr.masks
            state["sift"][j] = sr
            if j not in state.setdefault("pe", {}):
                state["pe"][j] = pe
        split = split_secrecy_budget(scheme, deploy.module_model, n_q, budget.hat_eps_sec)
        fn = key_length_pn if deploy.module_model.value == "PN" else key_length_ac
        l_raw = fn(hs, budget.hat_eps_cor, split.eps_PA, split.delta, raw=True)
        l = max(math.floor(l_raw), 0)
        decision[u] = (l, l_raw, hs)
        per_unit_masks[u] = masks
    if not decision:
        net.abort("B", sigma1[0], "pe")
    u0 = min(decision)
    l, l_raw, hs = decision[u0]
    if target_length is not None:
        l = int(target_length)
    if l <= 0:
        net.abort("B", u0, "pe/no-key")

    tag = tag_length(budget.hat_eps_cor)
    out_len = n_q * M
    ev_desc = net.rbs_generate("B", 2 * tag, phase="rbs/ev")
    pa_desc = net.rbs_generate("B", out_len + l - 1, phase="rbs/pa")

    # Bob's masks reach every Bob unit.
    masks_B = {}
    for j in range(n_q):
        mb = _bits(per_unit_masks[u0][j]["B"])
        masks_B[j] = net.relay("B", sigma1, range(cfg.n), mb, f"sift/maskB{j}")
        keys.masks[("B", j)] = per_unit_masks[u0][j]["B"]
        keys.masks[("A", j)] = per_unit_masks[u0][j]["A"]

    # Step 4/5 at Bob: projection, bit flip, syndrome and tag.
    def bob_table():
        parts = []
        for j in range(n_q):
            t = keys.raw[("B", j)]
            copies = {}
            for p, c in t.copies.items():
                idx = _mask_index(masks_B[j][p], t.dealer_input_len, M)
                if idx is None:
                    if not net.is_active_unit("B", p):
                        net.abort("B", p, "sift/mask")
                    idx = np.arange(M)
                copies[p] = {i: v.select(idx) for i, v in c.items()}
            st = _tamper_local(net, "B", ShareTable(M, copies))
            keys.sifted[("B", j)] = st
            parts.append(st)
        return concat_tables(parts)

    sB = bob_table()
    if scheme == "MDI":
        sB = _flip_first_share(sB, sigma1, BitString.ones(out_len))
    keys.s["B"] = sB
    anyB = min(decision)
    ev_f = ev_hash(ev_desc[anyB], tag)
    syB_t = _tamper_local(net, "B", sB.map(syndrome))
    syB = net.labs["B"].reconstruct(syB_t, phase="ir/syB")
    tagB_t = _tamper_local(net, "B", sB.map(ev_f))
    tagB = net.labs["B"].reconstruct(tagB_t, phase="ev/tagB")

    def m_B(u):
        u = u if u in decision else anyB
        mask_bits = BitString.concat(_bits(per_unit_masks[u][j]["A"]) for j in range(n_q))
        return mask_bits + syB[u] + tagB[u] + ev_desc[u] + pa_desc[u]

    keys.sy["B"] = syB[anyB]
    keys.tags["B"] = tagB[anyB]
    keys.ev_desc = ev_desc[anyB]
    keys.pa_desc = pa_desc[anyB]
    mB_len = len(m_B(anyB))

    got = net.send_auth("B", m_B, "ir/mB")
    got = _decided(got, net, "A", "ir/mB")
    # Alice's sifting units forward m_B to the rest of the lab.
    first = min(got)
    mB_all = net.relay("A", sigma1, range(cfg.n), got[first], "ir/mB/forward")

    # Step 4/5 at Alice.
    a_lens = [keys.raw[("A", j)].dealer_input_len for j in range(n_q)]
    def split_mB(b: BitString):
        pos = 0
        masks = []
        for n in a_lens:
            masks.append(b[pos:pos + n])
            pos += n
        sy = b[pos:pos + out_len]
        pos += out_len
        tg = b[pos:pos + tag]
        pos += tag
        ev = b[pos:pos + 2 * tag]
        pos += 2 * tag
        pa = b[pos:]
        return masks, sy, tg, ev, pa

    parts_A = {}
    views = {}
    for p in range(cfg.n):
        views[p] = split_mB(mB_all[p])
    for j in range(n_q):
        t = keys.raw[("A", j)]
        copies = {}
        for p, c in t.copies.items():
            idx = _mask_index(views[p][0][j], t.dealer_input_len, M)
            if idx is None:
                if not net.is_active_unit("A", p):
                    net.abort("A", p, "sift/mask")
                idx = np.arange(M)
            copies[p] = {i: v.select(idx) for i, v in c.items()}
        parts_A[j] = _tamper_local(net, "A", ShareTable(M, copies))
        keys.sifted[("A", j)] = parts_A[j]
    sA = concat_tables([parts_A[j] for j in range(n_q)])
    keys.s["A"] = sA
    syA_t = _tamper_local(net, "A", sA.map(syndrome))
    syA = net.labs["A"].reconstruct(syA_t, phase="ir/syA")
    honest_A = net.labs["A"].non_active()
    ref = honest_A[0]
    e_hat = syA[ref] ^ views[ref][1]
    keys.error_pattern = e_hat
    keys.sy["A"] = syA[ref]
    corrected = _flip_first_share(sA, sigma1, e_hat)
    if ev_flip:
        pos = int(np.random.default_rng([net.seed, 7]).integers(out_len))
        corrected = _flip_first_share(corrected, sigma1, BitString.zeros(out_len).flip(pos))
    corrected = _tamper_local(net, "A", corrected)
    keys.corrected_A = corrected

    # Step 5: error verification.
    evA = ev_hash(views[ref][3], tag)
    tagA_t = _tamper_local(net, "A", corrected.map(evA))
    tagA = net.labs["A"].reconstruct(tagA_t, phase="ev/tagA")
    keys.tags["A"] = tagA[ref]
    for p in honest_A:
        if tagA[p] != views[p][2]:
            net.abort("A", p, "ev/compare")

    # Step 6: privacy amplification, share-wise.
    hA = pa_hash(views[ref][4], out_len, l)
    hB = pa_hash(pa_desc[anyB], out_len, l)
    keys.final["A"] = _tamper_local(net, "A", corrected.map(hA))
    keys.final["B"] = _tamper_local(net, "B", sB.map(hB))

    msgs = msgs_A + [mB_len]
    k_bits = auth_key_length(msgs, net.gamma_au)
    l_au = auth_cost(deploy.unit_model, deploy.t_c, msgs, net.gamma_au)
    state["length"] = KeyLengthResult(
        l=l, per_pair_h=[h for h, _ in hs], per_pair_lambda=[x for _, x in hs], l_AU=l_au,
        K=key_rate(l, l_au, n_q, N), N=N, E_tol=E_tol, n_q=n_q, l_raw=l_raw,
        auth_key_bits=k_bits, gamma_sec=gamma, pe=state.get("pe"), message_lens=msgs,
    )


def _expected_etol(params, inputs, M, budget, n_q):
    if inputs.scheme == "MDI":
        E = mdi_gain_and_error(params, inputs).E_ZZ
    else:
        E = bb84_gain_and_error(params, inputs).E_Z
    return e_tol_calc(E, M, budget.gamma_EC, n_q)
