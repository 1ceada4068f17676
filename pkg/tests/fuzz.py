"""Randomized adversaries for VSS-level fuzzing."""

import numpy as np

from redqkd.bits import BitString
from redqkd.network import FalseAbortUnit, LeakSinks, LeakUnit, SilentUnit, TamperUnit
from redqkd.vss import DealerStrategy, VssAbort, VssSession

ACTIVE_KINDS = (TamperUnit, FalseAbortUnit, SilentUnit, LeakUnit)


class ArbitraryDealer(DealerStrategy):
    """Withholds or replaces copies at random."""

    def __init__(self, rng, rate=0.3):
        self.rng, self.rate = rng, rate

    def deliver(self, session, share_idx, party, value):
        u = self.rng.random()
        if u < self.rate / 3:
            return None
        if u < self.rate:
            return BitString.random(len(value), self.rng)
        return value


class SplitViewDealer(DealerStrategy):
    """Honest towards honest parties, a different copy to active ones."""

    def __init__(self, rng):
        self.rng = rng
        self.alt = {}

    def deliver(self, session, share_idx, party, value):
        if session.is_active(party):
            if share_idx not in self.alt:
                self.alt[share_idx] = value ^ BitString.random(len(value), self.rng)
            return self.alt[share_idx]
        return value


def random_parties(cfg, rng):
    """Up to t corrupted parties with random behaviours allowed by the model."""
    k = int(rng.integers(0, cfg.t + 1))
    chosen = rng.choice(cfg.n, size=k, replace=False)
    sinks = LeakSinks(cfg.model.collaborative)
    out = {}
    for p in chosen:
        kind = ACTIVE_KINDS[int(rng.integers(len(ACTIVE_KINDS)))] if cfg.model.active else LeakUnit
        out[int(p)] = kind(f"P{p}", sinks, rng)
    return out


def random_dealer(rng):
    u = rng.random()
    if u < 0.4:
        return None
    if u < 0.7:
        return ArbitraryDealer(rng)
    return SplitViewDealer(rng)


def fuzz_session(cfg, seed, length=8):
    """One Share + Reconstruct under a random adversary.

    Returns (aborted, honest dealer flag, m, outputs of non-active parties).
    """
    rng = np.random.default_rng(seed)
    strategies = random_parties(cfg, rng)
    dealer = random_dealer(rng)
    s = VssSession(cfg, rng, strategies=strategies)
    m = BitString.random(length, rng)
    try:
        table = s.share(m, dealer=dealer) if dealer else s.share(m)
        out = s.reconstruct(table)
    except VssAbort:
        return True, dealer is None, m, {}
    return False, dealer is None, m, out
