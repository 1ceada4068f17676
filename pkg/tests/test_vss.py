from collections import Counter
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from fuzz import SplitViewDealer, fuzz_session
from redqkd.bits import BitString, ToeplitzHash
from redqkd.network import FalseAbortUnit, LeakSinks, TamperUnit
from redqkd.vss import (
    PartyStrategy,
    SessionAborted,
    VssAbort,
    VssSession,
    deployable,
    finalize,
    majority,
    make_config,
    map_linear,
    resource_row,
    split,
    xor_tables,
)

MODELS = [("AC", 1), ("AC", 2), ("AN", 2), ("AN", 3), ("PC", 1), ("PC", 3), ("PN", 2)]


def test_config_examples():
    c = make_config("AC", 1)
    assert (c.n, c.q, c.R, c.r) == (4, 4, 3, 3)
    c = make_config("AN", 2)
    assert (c.n, c.q, c.R, c.r) == (6, 6, 5, 5)
    c = make_config("PN", 2)
    assert (c.n, c.q, c.R, c.r) == (2, 2, 1, 1)


@pytest.mark.parametrize("model,t", MODELS)
def test_config_invariants(model, t):
    c = make_config(model, t)
    assert all(len(s) == c.R for s in c.sigma)
    assert all(len(c.held_by(p)) == c.r for p in range(c.n))
    assert (c.n, c.R, c.r) == resource_row(model, t)


def test_ac_sigma_order():
    c = make_config("AC", 1)
    assert c.sigma == tuple(frozenset(range(4)) - {i} for i in range(4))


def test_invalid_configs():
    for model, t in [("AN", 1), ("PN", 0), ("AC", -1)]:
        with pytest.raises(ValueError):
            make_config(model, t)
    assert not deployable("AN", 1) and deployable("AC", 0)


def test_split():
    rng = np.random.default_rng(0)
    m = BitString.from_str("1011")
    assert split(m, 1, rng) == [m]
    for q in range(1, 8):
        acc = BitString.zeros(4)
        for s in split(m, q, rng):
            acc = acc ^ s
        assert acc == m


def test_split_marginal_uniform():
    rng = np.random.default_rng(1)
    m = BitString.from_str("0110")
    counts = Counter()
    for _ in range(100_000):
        a, b, _ = split(m, 3, rng)
        counts[(a.value << 4) | b.value] += 1
    assert chisquare([counts[i] for i in range(256)]).pvalue > 0.01


@pytest.mark.parametrize("model,t", MODELS)
def test_honest_roundtrip(model, t):
    cfg = make_config(model, t)
    rng = np.random.default_rng(2)
    s = VssSession(cfg, rng)
    m = BitString.random(13, rng)
    out = s.reconstruct(s.share(m))
    assert set(out.values()) == {m} and len(out) == cfg.n


def test_ac_reconstruct_lie_outvoted():
    cfg = make_config("AC", 1)
    rng = np.random.default_rng(3)

    class Liar(PartyStrategy):
        active = True

        def reconstruct_copy(self, session, party, share_idx, receiver, value):
            return value.flip(0) if share_idx == 1 else value

    s = VssSession(cfg, rng, strategies={0: Liar()})
    m = BitString.random(8, rng)
    out = s.reconstruct(s.share(m))
    assert set(out) == {1, 2, 3} and set(out.values()) == {m}
    assert s.tie_flags == 0


def test_split_view_dealer_commits_or_aborts():
    cfg = make_config("AC", 1)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        sinks = LeakSinks(True)
        s = VssSession(cfg, rng, strategies={0: TamperUnit("P0", sinks, rng, rate=0.0)})
        m = BitString.random(8, rng)
        try:
            out = s.reconstruct(s.share(m, dealer=SplitViewDealer(rng)))
        except VssAbort:
            continue
        assert set(out.values()) == {m}


def test_pc_share_never_aborts():
    cfg = make_config("PC", 2)
    rng = np.random.default_rng(4)
    for _ in range(50):
        s = VssSession(cfg, rng)
        m = BitString.random(8, rng)
        table = s.share(m, dealer=SplitViewDealer(rng))
        assert s.abort_state is None and table is not None


def test_missing_share_defaults_to_zero():
    cfg = make_config("PN", 2)

    class Withhold(SplitViewDealer):
        def deliver(self, session, share_idx, party, value):
            return None if share_idx == 0 else value

    s = VssSession(cfg, np.random.default_rng(5))
    table = s.share(BitString.from_str("1111"), dealer=Withhold(None))
    assert table.copies[0][0] == BitString.zeros(4)


def test_abort_is_sticky_and_logged():
    cfg = make_config("AC", 1)
    rng = np.random.default_rng(6)
    log = []
    fa = FalseAbortUnit("P2", LeakSinks(True), rng, phase_rate=1.0)
    s = VssSession(cfg, rng, strategies={2: fa}, transcript=log)
    with pytest.raises(VssAbort) as e:
        s.share(BitString.zeros(4))
    assert e.value.state.origin == "P2"
    assert any("abort2" in line for line in log)
    with pytest.raises(SessionAborted):
        s.share(BitString.zeros(4))


def test_inconsistent_copies_abort():
    cfg = make_config("AN", 2)
    rng = np.random.default_rng(7)

    class Bad(SplitViewDealer):
        def deliver(self, session, share_idx, party, value):
            return value.flip(0) if party == 0 and share_idx == 1 else value

    with pytest.raises(VssAbort):
        VssSession(cfg, rng).share(BitString.zeros(6), dealer=Bad(rng))


def test_majority():
    a, b = BitString.from_str("10"), BitString.from_str("01")
    assert majority([a, a, b], 3) == (a, False)
    assert majority([a, b, None], 3) == (None, True)
    assert majority([a], 1) == (a, False)


@pytest.mark.parametrize("model,t", MODELS)
def test_map_linear(model, t):
    cfg = make_config(model, t)
    rng = np.random.default_rng(8)
    for _ in range(100):
        s = VssSession(cfg, rng)
        m = BitString.random(24, rng)
        table = s.share(m)
        h = ToeplitzHash.random(24, 9, rng)
        idx = sorted(rng.choice(24, size=10, replace=False).tolist())
        assert finalize(map_linear(h, table), cfg)[0] == h(m)
        assert finalize(map_linear(lambda x: x.select(idx), table), cfg)[0] == m.select(idx)
        assert map_linear(lambda x: x, table).copies == table.copies


@given(st.integers(0, 2**16 - 1), st.integers(0, 2**16 - 1))
@settings(max_examples=40, deadline=None)
def test_xor_tables_sharewise(a, b):
    cfg = make_config("AC", 1)
    s = VssSession(cfg, np.random.default_rng(a ^ b))
    A, B = BitString(a, 16), BitString(b, 16)
    assert finalize(xor_tables([s.share(A), s.share(B)]), cfg)[0] == A ^ B


def _coalitions(cfg):
    if cfg.model.collaborative:
        return [set(c) for c in combinations(range(cfg.n), cfg.t)]
    return [{p} for p in range(cfg.n)]


@pytest.mark.parametrize("model,t", MODELS)
def test_privacy_structural(model, t):
    cfg = make_config(model, t)
    for S in _coalitions(cfg):
        seen = {i for p in S for i in cfg.held_by(p)}
        assert len(seen) < cfg.q


def test_ac_fewer_shares_break_privacy():
    # n=4, t=1 with only 3 shares: some two parties hold the same complement,
    # so some single party sees every share or the sets cannot all have size 3.
    n = 4
    for sigma in combinations([frozenset(c) for c in combinations(range(n), 3)], 3):
        missing = [set(range(n)) - s for s in sigma]
        uncovered = set(range(n)) - set().union(*missing)
        assert uncovered, "every party would miss a share"


@pytest.mark.parametrize("model,t", MODELS)
def test_fuzz_commitment(model, t):
    cfg = make_config(model, t)
    for seed in range(150):
        aborted, honest_dealer, m, out = fuzz_session(cfg, seed)
        if aborted:
            continue
        assert len(set(out.values())) == 1
        if honest_dealer:
            assert set(out.values()) == {m}
