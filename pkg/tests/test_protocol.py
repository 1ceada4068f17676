import numpy as np
import pytest

from redqkd.bits import BitString
from redqkd.config import ChannelParams, SecurityBudget
from redqkd.keyrate import tag_length
from redqkd.network import AdversaryScript, DeploymentConfig, PartyId, random_script
from redqkd.protocol import (
    ev_hash,
    finalize_keys,
    honest_key_views,
    pa_hash,
    run_protocol,
    syndrome,
    toy_inputs,
)
from redqkd.vss import finalize

CH = ChannelParams()


def deploy(mm, um):
    return DeploymentConfig.minimal(mm, 2 if mm == "PN" else 1, um, 2 if um == "PN" else 1)


def recon(table, res):
    return finalize(table, res.network.cfg.unit_config)[0]


@pytest.mark.parametrize("scheme", ["MDI", "BB84"])
@pytest.mark.parametrize("mm,um", [("PN", "PN"), ("AC", "AC"), ("AC", "PN"), ("PN", "AC")])
def test_honest_run_completes(scheme, mm, um):
    res = run_protocol(deploy(mm, um), toy_inputs(scheme), CH, seed=4, target_length=16)
    assert res.completed, res.abort
    kA, kB = res.final_keys()
    assert kA == kB and len(kA) == 16
    assert len(set(honest_key_views(res).values())) == 1


def test_honest_run_error_pattern_is_real():
    res = run_protocol(deploy("PN", "PN"), toy_inputs("BB84"), CH.with_loss(3), seed=2,
                       target_length=16)
    sA = recon(res.keys.s["A"], res)
    sB = recon(res.keys.s["B"], res)
    assert res.keys.error_pattern == sA ^ sB
    assert recon(res.keys.corrected_A, res) == sB


def test_model_key_length_aborts_at_toy_scale():
    # at M=64 the finite-size penalties swamp the entropy, so PE finds l <= 0
    res = run_protocol(deploy("PN", "PN"), toy_inputs("MDI"), CH, seed=0)
    assert not res.completed and res.abort.phase == "pe/no-key"
    assert res.length is None


def test_scaled_budget_key_length_positive():
    inp = toy_inputs("BB84", M=16384).replace(q_Z=0.5)
    loose = SecurityBudget(eps_cor=1e-2, eps_sec=1e-1, eps_AU=5e-3)
    res = run_protocol(deploy("PN", "PN"), inp, CH, seed=1, budget=loose)
    assert res.completed, res.abort
    assert res.length.l > 0
    kA, kB = res.final_keys()
    assert kA == kB and len(kA) == res.length.l


def test_deterministic_transcript():
    d = deploy("AC", "AC")
    sc = AdversaryScript({PartyId.parse("A.cp1"): "tamper", PartyId.parse("B.qkd0"): "tamper"})
    a = run_protocol(d, toy_inputs("MDI"), CH, sc, seed=9, target_length=16)
    b = run_protocol(d, toy_inputs("MDI"), CH, sc, seed=9, target_length=16)
    assert a.transcript == b.transcript and a.status == b.status


def test_tampering_unit_is_outvoted():
    d = deploy("PN", "AC")
    ref = run_protocol(d, toy_inputs("BB84"), CH, seed=6, target_length=16)
    for who in ("A.cp0", "B.cp2"):
        sc = AdversaryScript({PartyId.parse(who): "tamper"})
        res = run_protocol(d, toy_inputs("BB84"), CH, sc, seed=6, target_length=16)
        if res.completed:
            assert res.final_keys() == ref.final_keys()


def test_ev_flip_aborts():
    for seed in range(30):
        res = run_protocol(deploy("PN", "PN"), toy_inputs("BB84"), CH, seed=seed,
                           target_length=16, ev_flip=True)
        assert not res.completed and res.abort.phase == "ev/compare"


@pytest.mark.parametrize("mm,um", [("AC", "AC"), ("AC", "PN"), ("PN", "AC"), ("PN", "PN")])
def test_fuzzed_sessions_agree(mm, um):
    d = deploy(mm, um)
    done = 0
    for seed in range(60):
        rng = np.random.default_rng(seed)
        sc = random_script(d, rng)
        scheme = ("MDI", "BB84")[seed % 2]
        res = run_protocol(d, toy_inputs(scheme), CH, sc, seed, target_length=16)
        if res.completed:
            done += 1
            assert len(set(honest_key_views(res).values())) == 1
    assert done > 0


@pytest.mark.parametrize("scheme", ["MDI", "BB84"])
def test_share_wise_linearity(scheme):
    for seed in range(10):
        res = run_protocol(deploy("AC", "AC"), toy_inputs(scheme), CH, seed=seed,
                           target_length=16)
        assert res.completed
        check_linearity(res, scheme)


def check_linearity(res, scheme):
    k = res.keys
    n_q = len(res.pairs)
    for lab in ("A", "B"):
        parts = []
        for j in range(n_q):
            raw = recon(k.raw[(lab, j)], res)
            mask = np.flatnonzero(np.asarray(k.masks[(lab, j)]))
            sifted = recon(k.sifted[(lab, j)], res)
            assert raw.select(mask) == sifted
            parts.append(sifted)
        s = BitString.concat(parts)
        if scheme == "MDI" and lab == "B":
            s = s ^ BitString.ones(len(s))
        assert recon(k.s[lab], res) == s
        assert recon(k.s[lab].map(syndrome), res) == syndrome(s)
    tag = tag_length(SecurityBudget().hat_eps_cor)
    f = ev_hash(k.ev_desc, tag)
    corrected = recon(k.corrected_A, res)
    assert recon(k.corrected_A.map(f), res) == f(corrected) == k.tags["A"]
    assert recon(k.s["B"].map(f), res) == k.tags["B"]
    h = pa_hash(k.pa_desc, len(corrected), res.length.l)
    kA, kB = finalize_keys(k.final, res.network.cfg.unit_config)
    assert h(corrected) == kA == kB
