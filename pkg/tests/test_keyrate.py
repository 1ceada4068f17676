import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from redqkd.config import SecurityBudget, get_preset
from redqkd.keyrate import (
    KeyRateEstimator,
    Scenario,
    auth_cost,
    auth_key_length,
    auth_rate_gap,
    decode_inputs,
    e_tol_calc,
    ec_leakage,
    encode_inputs,
    evaluate,
    key_length_ac,
    key_length_pn,
    key_rate,
    optimize_inputs,
    reference_inputs,
    shared_n_etol,
    split_secrecy_budget,
)

PRE = get_preset("paper-2020-defaults")
B = PRE.budget
pairs = st.lists(st.tuples(st.floats(0, 1e6), st.floats(0, 1e6)), min_size=1, max_size=6)


def test_preset_values():
    assert B.eps_cor == B.eps_sec == 1e-8 and B.eps_AU == 5e-9
    assert B.gamma_sift == B.gamma_EC == 5e-3
    c = PRE.channel
    assert (c.eta_det, c.p_d, c.delta_mis) == (0.65, 7.2e-8, 0.08)
    assert PRE.omega == 1e-3 and PRE.f_EC == 1.16 and PRE.block_sizes == (10**5, 10**6)
    with pytest.raises(ValueError):
        get_preset("nope")


def test_budget_validation():
    with pytest.raises(ValueError):
        SecurityBudget(eps_cor=1e-9, eps_AU=5e-9)
    assert B.hat_eps_cor == pytest.approx(5e-9)
    assert B.gamma_AU(True, 1, 2) == pytest.approx(5e-9 / 12)
    assert B.gamma_AU(False, 2, 2) == pytest.approx(5e-9 / 3)


def test_ec_leakage():
    assert ec_leakage(1e6, 1.16, 0.0) == 0
    assert ec_leakage(1e6, 1.16, 0.5) == pytest.approx(1.16e6)


def test_e_tol():
    assert e_tol_calc(0.02, 1e5, 1.0, 1) == 0.02
    assert e_tol_calc(0.0, 1e5, 1e-3, 1) == pytest.approx(math.log(1e3) / 1e5)
    assert e_tol_calc(0.9, 10, 1e-9, 1) == 1.0


def test_e_tol_coverage():
    rng = np.random.default_rng(0)
    E, M, g, n_q = 0.03, 10**5, 5e-3, 2
    tol = e_tol_calc(E, M, g, n_q)
    assert (rng.binomial(M, E, size=10**4) / M > tol).mean() <= g / n_q


def test_key_length_examples():
    pen = -math.log2(B.hat_eps_cor * 1e-10 ** 2 * 1e-10)
    assert key_length_ac([(pen, 0.0)], B.hat_eps_cor, 1e-10, 1e-10) == 0
    assert key_length_ac([(100.0, 200.0)], B.hat_eps_cor, 1e-10, 1e-10) == 0
    c = 5000.0
    want = math.floor(2 * c + math.log2(B.hat_eps_cor * 1e-20 * 1e-20))
    assert key_length_pn([(c, 0.0)] * 3, B.hat_eps_cor, 1e-10, 1e-10) == want
    # leave-one-out drops the dominant pair
    assert key_length_pn([(9000.0, 0.0), (1000.0, 0.0), (2000.0, 0.0)], 1e-9, 1e-3, 1e-3, raw=True) == \
        pytest.approx(3000 + math.log2(1e-9 * 1e-6 * 1e-6))
    with pytest.raises(ValueError):
        key_length_pn([(1.0, 0.0)], 1e-9, 1e-3, 1e-3)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_pn_two_pairs_equals_ac_one(h, lam):
    g = 1e-10
    assert key_length_pn([(h, lam)] * 2, 5e-9, g, g) == key_length_ac([(h, lam)], 5e-9, g, g)


@given(pairs, st.integers(0, 5), st.floats(0, 1e4))
@settings(max_examples=100)
def test_key_length_monotone(per_pair, j, bump):
    j %= len(per_pair)
    more_h = [(h + bump, l) if i == j else (h, l) for i, (h, l) in enumerate(per_pair)]
    more_l = [(h, l + bump) if i == j else (h, l) for i, (h, l) in enumerate(per_pair)]
    base = key_length_ac(per_pair, 5e-9, 1e-10, 1e-10)
    assert key_length_ac(more_h, 5e-9, 1e-10, 1e-10) >= base >= 0
    assert key_length_ac(more_l, 5e-9, 1e-10, 1e-10) <= base
    if len(per_pair) >= 2:
        pb = key_length_pn(per_pair, 5e-9, 1e-10, 1e-10)
        assert key_length_pn(more_h, 5e-9, 1e-10, 1e-10) >= pb >= 0
        assert key_length_pn(more_l, 5e-9, 1e-10, 1e-10) <= pb


def test_auth_cost():
    msgs = [1000, 5000, 70000]
    k = auth_key_length(msgs, 1e-10)
    assert k == sum(math.ceil(math.log2(2 * m / 1e-10)) for m in msgs)
    assert auth_cost("PN", 2, msgs, 1e-10) == k
    assert auth_cost("AC", 1, msgs, 1e-10) == 9 * k
    assert auth_key_length([0], 1e-10) == math.ceil(math.log2(2 / 1e-10))
    # doubling every message adds one bit per message
    assert auth_key_length([2 * m for m in msgs], 1e-10) == k + len(msgs)


def test_key_rate():
    assert key_rate(500, 500, 2, 1e6) == 0
    assert key_rate(1500, 500, 2, 1e6) == pytest.approx(5e-4)
    with pytest.raises(ValueError):
        key_rate(1, 0, 1, 0)


def test_split_budget():
    s = split_secrecy_budget("MDI", "AC", 2, 1e-8)
    assert s.gamma_sec == pytest.approx(1e-8 / 48)
    assert split_secrecy_budget("BB84", "AC", 4, 1e-8).gamma_sec == pytest.approx(1e-8 / 20)
    assert split_secrecy_budget("MDI", "PN", 2, 1e-8).gamma_sec == pytest.approx(1e-8 / 48)
    assert split_secrecy_budget("BB84", "PN", 2, 1e-8).gamma_sec == pytest.approx(1e-8 / 20)
    for scheme in ("MDI", "BB84"):
        for model, n_q in (("AC", 3), ("PN", 2), ("PN", 3)):
            s = split_secrecy_budget(scheme, model, n_q, 1e-8)
            assert s.n_terms * s.gamma_sec == pytest.approx(1e-8, rel=1e-15)


def test_scenarios():
    assert Scenario.honest().n_q == 1 and Scenario.ac(3).n_q == 4 and Scenario.pn().n_q == 2
    assert Scenario.ac(2).unit_config.n == 7
    assert Scenario.honest().label == "honest" and Scenario.pn().label == "PN2/PN2"


def _shared(scheme, loss, M, inputs):
    p = PRE.channel.with_loss(loss)
    N, E = shared_n_etol(p, inputs, B, M, 1)
    return p, N, E


@pytest.mark.parametrize("scheme", ["MDI", "BB84"])
def test_identities_small_grid(scheme):
    M = 10**6
    inp = reference_inputs(scheme, M=M)
    if scheme == "MDI":
        inp = inp.replace(lam=0.1606, mu=0.1747, nu=0.0416, q_Z=0.2751, p_mu=0.325, p_nu=0.336,
                          p_omega=0.339)
    saw_key = False
    for loss in (0, 10, 30):
        p, N, E = _shared(scheme, loss, M, inp)
        h = evaluate(p, inp, Scenario.honest(), B, M, N=N, E_tol=E)
        pn = evaluate(p, inp, Scenario.pn(), B, M, N=N, E_tol=E)
        ac1 = evaluate(p, inp, Scenario.ac(1), B, M, N=N, E_tol=E)
        assert pn.l == ac1.l
        for t in (1, 3, 5):
            ac = evaluate(p, inp, Scenario.ac(t), B, M, N=N, E_tol=E)
            assert ac.l == h.l
            gap = h.K / (t + 1) - ac.K
            want = auth_rate_gap(ac.l_AU, h.l_AU, t, N)
            assert gap == pytest.approx(want, rel=1e-12)
        saw_key |= h.l > 0
    assert saw_key


def test_rate_formula_consistency():
    inp = reference_inputs("BB84", M=10**5)
    r = evaluate(PRE.channel, inp, Scenario.ac(1), B)
    assert r.K == pytest.approx((r.l - r.l_AU) / (r.n_q * r.N))
    assert r.n_q == 2 and len(r.message_lens) == 3


def test_encode_decode_roundtrip():
    for scheme in ("MDI", "BB84"):
        inp = reference_inputs(scheme)
        back = decode_inputs(encode_inputs(inp), scheme, inp.omega, inp.M, inp.f_EC)
        for f in ("lam", "mu", "nu", "q_Z", "p_mu", "p_nu", "p_omega"):
            assert getattr(back, f) == pytest.approx(getattr(inp, f), rel=1e-6, abs=1e-9)


@given(st.lists(st.floats(-20, 20), min_size=6, max_size=6))
def test_decode_always_feasible(z):
    for scheme, zz in (("MDI", z), ("BB84", z[:5])):
        inp = decode_inputs(zz, scheme, 1e-3, 10**5, 1.16)
        assert inp.mu > inp.nu > inp.omega
        if scheme == "BB84":
            assert inp.mu > inp.nu + inp.omega


def test_optimizer_beats_reference_and_is_deterministic():
    p = PRE.channel.with_loss(0)
    ref = evaluate(p, reference_inputs("MDI", M=10**6), Scenario.honest(), B)
    a = optimize_inputs(p, "MDI", Scenario.honest(), B, 10**6, n_starts=3, seed=1)
    b = optimize_inputs(p, "MDI", Scenario.honest(), B, 10**6, n_starts=3, seed=1)
    assert a.K > 0 and a.K >= ref.K
    assert a.inputs == b.inputs and a.K == b.K


def test_optimizer_monotone_in_loss():
    last = math.inf
    warm = None
    for loss in range(0, 31, 10):
        o = optimize_inputs(PRE.channel.with_loss(loss), "BB84", Scenario.honest(), B, 10**5,
                            n_starts=4, start=warm)
        warm = o.inputs
        assert o.K <= last * 1.01
        last = o.K


def test_optimizer_infeasible_flag():
    o = optimize_inputs(PRE.channel.with_loss(60), "MDI", Scenario.ac(3), B, 10**5, n_starts=2,
                        maxiter=50)
    assert not o.feasible and o.K <= 0


def test_estimator():
    est = KeyRateEstimator(scheme="BB84", M=10**5, n_starts=2)
    assert clone(est).get_params() == est.get_params()
    est.fit(np.array([[0.0], [10.0]]))
    k = est.predict([0.0, 10.0, 9.0])
    assert k[0] > k[1] > 0 and k[2] > 0
    assert set(est.inputs_) == {0.0, 10.0}
