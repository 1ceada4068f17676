"""Conditional verifiable secret sharing (Share / Reconstruct with abort).

A :class:`VssSession` is one group of parties (the CP units of a lab) that
runs Share, Reconstruct and local linear maps. Adversarial parties and
dealers are modelled by strategy objects whose default methods behave
honestly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable

import numpy as np

from .bits import BitString


class CorruptionModel(str, enum.Enum):
    AC = "AC"
    AN = "AN"
    PC = "PC"
    PN = "PN"

    @property
    def active(self) -> bool:
        return self in (CorruptionModel.AC, CorruptionModel.AN)

    @property
    def collaborative(self) -> bool:
        return self in (CorruptionModel.AC, CorruptionModel.PC)


@dataclass(frozen=True)
class VssConfig:
    model: CorruptionModel
    t: int
    n: int
    q: int
    sigma: tuple
    R: int
    r: int

    def held_by(self, party: int) -> tuple:
        return tuple(i for i, s in enumerate(self.sigma) if party in s)


def make_config(model, t: int) -> VssConfig:
    model = CorruptionModel(model)
    if t < 0:
        raise ValueError("t must be non-negative")
    if model in (CorruptionModel.AN, CorruptionModel.PN) and t < 2:
        raise ValueError(f"{model.value} requires t >= 2")
    if model is CorruptionModel.AC:
        n = 3 * t + 1
        subsets = list(combinations(range(n), t))
        sigma = tuple(frozenset(range(n)) - frozenset(T) for T in subsets)
        R, r = 2 * t + 1, comb(n - 1, t)
    elif model is CorruptionModel.AN:
        n = 2 * t + 2
        sigma = tuple(frozenset(range(n)) - {i} for i in range(n))
        R, r = 2 * t + 1, n - 1
    elif model is CorruptionModel.PC:
        n = t + 1
        sigma = tuple(frozenset({i}) for i in range(n))
        R, r = 1, 1
    else:
        n = 2
        sigma = (frozenset({0}), frozenset({1}))
        R, r = 1, 1
    return VssConfig(model, t, n, len(sigma), sigma, R, r)


def resource_row(model, t: int) -> tuple:
    """Minimum (n_c, R, r) by formula, without the deployability check on t."""
    model = CorruptionModel(model)
    if t < 0:
        raise ValueError("t must be non-negative")
    if model is CorruptionModel.AC:
        return 3 * t + 1, 2 * t + 1, comb(3 * t, t)
    if model is CorruptionModel.AN:
        return 2 * t + 2, 2 * t + 1, 2 * t + 1
    if model is CorruptionModel.PC:
        return t + 1, 1, 1
    return 2, 1, 1


def deployable(model, t: int) -> bool:
    model = CorruptionModel(model)
    return t >= (2 if model in (CorruptionModel.AN, CorruptionModel.PN) else 0)


def split(m: BitString, q: int, rng: np.random.Generator) -> list:
    if q < 1:
        raise ValueError("q must be at least 1")
    shares = [BitString.random(len(m), rng) for _ in range(q - 1)]
    last = m
    for s in shares:
        last = last ^ s
    return shares + [last]


@dataclass
class AbortState:
    aborted: bool
    origin: str
    phase: str


class VssAbort(Exception):
    def __init__(self, state: AbortState):
        super().__init__(f"aborted in {state.phase} by {state.origin}")
        self.state = state


class SessionAborted(RuntimeError):
    """An operation was attempted on an aborted session."""


class PartyStrategy:
    """Behaviour of a corrupted party. The defaults are honest."""

    active = False

    def consistency_copy(self, session, party, share_idx, peer, value):
        return value

    def reconstruct_copy(self, session, party, share_idx, receiver, value):
        return value

    def abort_targets(self, session, party, phase):
        """Parties to which a false abort order is sent, or None."""
        return None

    def local_copy(self, session, party, share_idx, value):
        """The party's own stored copy after a local computation."""
        return value

    def relay(self, session, party, label, receiver, value):
        """A non-share message forwarded to ``receiver``; None means withheld."""
        return value

    def observe(self, session, party, label, value):
        pass


class DealerStrategy:
    """Behaviour of a (possibly dishonest) dealer. The default is honest."""

    def deliver(self, session, share_idx, party, value):
        """Copy of share ``share_idx`` sent to ``party``; None means withheld."""
        return value


HONEST_DEALER = DealerStrategy()
_HONEST_PARTY = PartyStrategy()


@dataclass
class ShareTable:
    """Copies of each share held by each party: ``copies[p][i]``."""

    dealer_input_len: int
    copies: dict = field(default_factory=dict)

    def allocation(self) -> dict:
        return {p: set(c) for p, c in self.copies.items()}

    def map(self, f: Callable[[BitString], BitString]) -> "ShareTable":
        return ShareTable(
            len(f(BitString.zeros(self.dealer_input_len))),
            {p: {i: f(v) for i, v in c.items()} for p, c in self.copies.items()},
        )


def map_linear(f: Callable[[BitString], BitString], table: ShareTable) -> ShareTable:
    """Apply a GF(2)-linear map to every share copy; no communication."""
    return table.map(f)


def combine(tables, op: Callable) -> ShareTable:
    """Share-wise combination of tables with identical allocation."""
    first = tables[0]
    out = {}
    for p, c in first.copies.items():
        out[p] = {i: op([t.copies[p][i] for t in tables]) for i in c}
    return ShareTable(len(op([BitString.zeros(t.dealer_input_len) for t in tables])), out)


def concat_tables(tables) -> ShareTable:
    return combine(tables, BitString.concat)


def xor_tables(tables) -> ShareTable:
    def op(vals):
        acc = vals[0]
        for v in vals[1:]:
            acc = acc ^ v
        return acc
    return combine(tables, op)


def majority(copies, R: int):
    """Strict-majority vote over R copies. Returns (value or None, tie flag)."""
    counts = {}
    for c in copies:
        if c is not None:
            counts[c] = counts.get(c, 0) + 1
    if counts:
        best, n = max(counts.items(), key=lambda kv: kv[1])
        if 2 * n > R:
            return best, False
    return None, True


class VssSession:
    """One group of parties running conditional VSS."""

    def __init__(self, cfg: VssConfig, rng: np.random.Generator, *, names=None,
                 strategies=None, transcript=None, label=""):
        self.cfg = cfg
        self.rng = rng
        self.names = list(names) if names is not None else [f"P{p}" for p in range(cfg.n)]
        self.strategies = dict(strategies or {})
        self.transcript = transcript
        self.label = label
        self.abort_state = None
        self.tie_flags = 0
        self._held = [cfg.held_by(p) for p in range(cfg.n)]

    # bookkeeping
    def strategy(self, p: int) -> PartyStrategy:
        return self.strategies.get(p, _HONEST_PARTY)

    def is_active(self, p: int) -> bool:
        return p in self.strategies and self.strategies[p].active

    def non_active(self):
        return [p for p in range(self.cfg.n) if not self.is_active(p)]

    def log(self, phase, sender, receiver, payload) -> None:
        if self.transcript is not None:
            if isinstance(payload, BitString):
                payload = payload.to_hex()
            self.transcript.append(f"{phase}\t{sender}\t{receiver}\t{payload}")

    def _check_alive(self) -> None:
        if self.abort_state is not None:
            raise SessionAborted(f"session {self.label!r} already aborted")

    # abort
    def abort(self, origin: int | str, phase: str, targets=None):
        """Two-step abortion; raises :class:`VssAbort`."""
        n = self.cfg.n
        origin_name = self.names[origin] if isinstance(origin, int) else origin
        first = list(range(n)) if targets is None else list(targets)
        received = set()
        for p in first:
            if p != origin:
                self.log(f"{phase}/abort1", origin_name, self.names[p], "abort")
            received.add(p)
        for p in sorted(received):
            if self.is_active(p):
                continue
            for p2 in range(n):
                if p2 != p:
                    self.log(f"{phase}/abort2", self.names[p], self.names[p2], "abort")
        self.abort_state = AbortState(True, origin_name, phase)
        raise VssAbort(self.abort_state)

    def check_false_aborts(self, phase: str) -> None:
        for p, s in sorted(self.strategies.items()):
            if s.active:
                targets = s.abort_targets(self, p, phase)
                if targets:
                    self.abort(p, phase, targets)

    # Share
    def share(self, m: BitString, *, dealer: DealerStrategy = HONEST_DEALER,
              dealer_name: str = "D", length: int | None = None,
              phase: str = "share", expected_len: int | None = None) -> ShareTable:
        self._check_alive()
        cfg = self.cfg
        L = len(m) if length is None else length
        shares = split(m, cfg.q, self.rng)
        copies = {p: {} for p in range(cfg.n)}
        for i, members in enumerate(cfg.sigma):
            for p in sorted(members):
                v = dealer.deliver(self, i, p, shares[i])
                self.log(phase, dealer_name, self.names[p], v if v is not None else "none")
                if v is None:
                    v = BitString.zeros(L)
                copies[p][i] = v
                self.strategy(p).observe(self, p, phase, (i, v))
        # consistency tests
        for i, members in enumerate(cfg.sigma):
            if len(members) < 2:
                continue
            ms = sorted(members)
            for p in ms:
                own = copies[p][i]
                for peer in ms:
                    if peer == p:
                        continue
                    sent = self.strategy(p).consistency_copy(self, p, i, peer, own)
                    self.log(f"{phase}/consistency", self.names[p], self.names[peer], sent)
                    if not self.is_active(peer) and sent != copies[peer][i]:
                        self.abort(peer, f"{phase}/consistency")
        if expected_len is not None:
            for p in self.non_active():
                if any(len(v) != expected_len for v in copies[p].values()):
                    self.abort(p, f"{phase}/length")
        self.check_false_aborts(phase)
        return ShareTable(L, copies)

    # Reconstruct
    def reconstruct(self, table: ShareTable, *, phase: str = "reconstruct",
                    receivers=None) -> dict:
        """Every party broadcasts its copies; receivers decide each share by MV."""
        self._check_alive()
        cfg = self.cfg
        receivers = self.non_active() if receivers is None else receivers
        out = {}
        for recv in receivers:
            acc = BitString()
            for i, members in enumerate(cfg.sigma):
                got = []
                for p in sorted(members):
                    v = table.copies[p][i]
                    if p != recv:
                        v = self.strategy(p).reconstruct_copy(self, p, i, recv, v)
                        self.log(phase, self.names[p], self.names[recv], v if v is not None else "none")
                    got.append(v)
                val, tie = majority(got, cfg.R)
                if tie:
                    self.tie_flags += 1
                    val = BitString.zeros(table.dealer_input_len)
                acc = acc ^ val
            out[recv] = acc
        self.check_false_aborts(phase)
        return out


def finalize(table: ShareTable, cfg: VssConfig) -> tuple:
    """Per-share MV over all held copies, then XOR. Returns (value, tie flag)."""
    acc = BitString.zeros(table.dealer_input_len)
    tie_any = False
    for i, members in enumerate(cfg.sigma):
        val, tie = majority([table.copies[p][i] for p in sorted(members)], cfg.R)
        if tie:
            tie_any = True
            val = BitString.zeros(table.dealer_input_len)
        acc = acc ^ val
    return acc, tie_any
