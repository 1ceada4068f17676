"""Simulated labs: QKD modules, CP units, channels, adversaries and RBS generation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .bits import AuthTag, BitString, InsufficientKeyError, KeyPool, auth_tag, auth_verify
from .vss import (
    AbortState,
    CorruptionModel,
    DealerStrategy,
    PartyStrategy,
    VssAbort,
    VssSession,
    make_config,
    majority,
    xor_tables,
)

LABS = ("A", "B")
BEHAVIORS = ("leak", "tamper", "false-abort", "silent")
DEFAULT_POOL_BITS = 1 << 14


@dataclass(frozen=True, order=True)
class PartyId:
    lab: str
    role: str  # "qkd" or "cp"
    index: int

    def __post_init__(self):
        if self.lab not in ("A", "B", "C"):
            raise ValueError(f"unknown lab {self.lab!r}")
        if self.role not in ("qkd", "cp"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.index < 0:
            raise ValueError("index must be non-negative")

    def __str__(self) -> str:
        return f"{self.lab}.{self.role}{self.index}"

    @classmethod
    def parse(cls, text: str) -> "PartyId":
        m = re.fullmatch(r"\s*([ABC])\.(qkd|cp)(\d+)\s*", text)
        if not m:
            raise ValueError(f"bad party id {text!r}")
        return cls(m.group(1), m.group(2), int(m.group(3)))


@dataclass(frozen=True)
class DeploymentConfig:
    n_q: int
    t_q: int
    n_c: int
    t_c: int
    module_model: CorruptionModel
    unit_model: CorruptionModel

    def __post_init__(self):
        mm = CorruptionModel(self.module_model)
        um = CorruptionModel(self.unit_model)
        object.__setattr__(self, "module_model", mm)
        object.__setattr__(self, "unit_model", um)
        if mm is CorruptionModel.PN:
            if self.n_q != 2:
                raise ValueError("PN modules use exactly two QKD pairs")
        elif self.n_q != self.t_q + 1:
            raise ValueError(f"{mm.value} modules need n_q = t_q + 1")
        if self.n_c != make_config(um, self.t_c).n:
            raise ValueError(f"{um.value} units with t_c={self.t_c} need n_c={make_config(um, self.t_c).n}")

    @classmethod
    def minimal(cls, module_model, t_q: int, unit_model, t_c: int) -> "DeploymentConfig":
        mm = CorruptionModel(module_model)
        n_q = 2 if mm is CorruptionModel.PN else t_q + 1
        return cls(n_q, t_q, make_config(unit_model, t_c).n, t_c, mm, CorruptionModel(unit_model))

    @property
    def unit_config(self):
        return make_config(self.unit_model, self.t_c)

    def units(self, lab: str) -> list:
        return [PartyId(lab, "cp", i) for i in range(self.n_c)]

    def modules(self, lab: str) -> list:
        return [PartyId(lab, "qkd", j) for j in range(self.n_q)]


# Adversaries

class LeakSinks:
    """Leaked views. One shared sink when collaborative, otherwise one per party."""

    def __init__(self, collaborative: bool):
        self.collaborative = collaborative
        self._sinks: dict = {}

    def key_for(self, party: str) -> str:
        return "all" if self.collaborative else party

    def record(self, party: str, label: str, value) -> None:
        self._sinks.setdefault(self.key_for(party), []).append((party, label, value))

    def sink(self, key: str) -> list:
        return list(self._sinks.get(key, []))

    @property
    def keys(self) -> list:
        return sorted(self._sinks)

    def __len__(self) -> int:
        return len(self._sinks)


def _flip_random(value: BitString, rng: np.random.Generator) -> BitString:
    if value is None or len(value) == 0:
        return BitString.ones(1) if value is not None else value
    return value.flip(int(rng.integers(len(value))))


class UnitStrategy(PartyStrategy):
    """Base for corrupted CP units; every behaviour also leaks its view."""

    def __init__(self, name: str, sinks: LeakSinks, rng: np.random.Generator):
        self.name = name
        self.sinks = sinks
        self.rng = rng

    def observe(self, session, party, label, value):
        self.sinks.record(self.name, label, value)


class LeakUnit(UnitStrategy):
    active = False


class TamperUnit(UnitStrategy):
    """Flips a random bit in each outgoing or stored value with probability ``rate``."""

    active = True

    def __init__(self, name, sinks, rng, rate: float = 0.5):
        super().__init__(name, sinks, rng)
        self.rate = rate

    def _maybe(self, value):
        if value is not None and self.rng.random() < self.rate:
            return _flip_random(value, self.rng)
        return value

    def consistency_copy(self, session, party, share_idx, peer, value):
        # Lying here only ever triggers an abort; do it rarely so that runs proceed.
        if self.rng.random() < self.rate / 8:
            return _flip_random(value, self.rng)
        return value

    def reconstruct_copy(self, session, party, share_idx, receiver, value):
        return self._maybe(value)

    def local_copy(self, session, party, share_idx, value):
        return self._maybe(value)

    def relay(self, session, party, label, receiver, value):
        return self._maybe(value)


class FalseAbortUnit(UnitStrategy):
    active = True

    def __init__(self, name, sinks, rng, phase_rate: float = 0.1):
        super().__init__(name, sinks, rng)
        self.phase_rate = phase_rate

    def abort_targets(self, session, party, phase):
        if self.rng.random() < self.phase_rate:
            return list(range(session.cfg.n))
        return None


class SilentUnit(UnitStrategy):
    active = True

    def reconstruct_copy(self, session, party, share_idx, receiver, value):
        return None

    def relay(self, session, party, label, receiver, value):
        return None


class ModuleStrategy(DealerStrategy):
    """Corrupted QKD module acting as dealer of its raw key and sender of its info."""

    active = False

    def __init__(self, name: str, sinks: LeakSinks, rng: np.random.Generator):
        self.name = name
        self.sinks = sinks
        self.rng = rng

    def raw_key(self, value: BitString) -> BitString:
        """The key the module actually deals (it may lie consistently)."""
        self.sinks.record(self.name, "raw", value)
        return value

    def info_copy(self, receiver: int, value: BitString) -> BitString:
        return value


class LeakModule(ModuleStrategy):
    pass


class TamperModule(ModuleStrategy):
    """Deals a consistently altered key, and sometimes inconsistent copies."""

    active = True

    def __init__(self, name, sinks, rng, rate: float = 0.5):
        super().__init__(name, sinks, rng)
        self.rate = rate

    def raw_key(self, value):
        value = super().raw_key(value)
        if len(value) and self.rng.random() < self.rate:
            value = _flip_random(value, self.rng)
        return value

    def deliver(self, session, share_idx, party, value):
        if self.rng.random() < self.rate / 8:
            return _flip_random(value, self.rng)
        return value

    def info_copy(self, receiver, value):
        if self.rng.random() < self.rate / 8:
            return _flip_random(value, self.rng)
        return value


class SilentModule(ModuleStrategy):
    active = True

    def deliver(self, session, share_idx, party, value):
        return None

    def info_copy(self, receiver, value):
        return None


@dataclass
class AdversaryScript:
    corrupted: dict = field(default_factory=dict)  # PartyId -> behaviour
    collaboration: bool = True
    forge_links: bool = False  # an outsider alters one lab-to-lab message

    @classmethod
    def from_spec(cls, spec: str, collaboration: bool = True, forge_links: bool = False):
        corrupted = {}
        for item in filter(None, (s.strip() for s in spec.split(","))):
            who, _, beh = item.partition(":")
            beh = beh.strip() or "leak"
            if beh not in BEHAVIORS:
                raise ValueError(f"unknown behaviour {beh!r}")
            corrupted[PartyId.parse(who)] = beh
        return cls(corrupted, collaboration, forge_links)

    def to_spec(self) -> str:
        return ", ".join(f"{p}:{b}" for p, b in sorted(self.corrupted.items()))


def validate_script(script: AdversaryScript, cfg: DeploymentConfig) -> None:
    pairs = {p.index for p in script.corrupted if p.role == "qkd"}
    for p, beh in script.corrupted.items():
        if p.lab not in LABS:
            raise ValueError(f"{p}: only lab A and B devices can be scripted")
        limit = cfg.n_q if p.role == "qkd" else cfg.n_c
        if p.index >= limit:
            raise ValueError(f"{p}: index out of range")
        model = cfg.module_model if p.role == "qkd" else cfg.unit_model
        if not model.active and beh != "leak":
            raise ValueError(f"{p}: passive {model.value} devices may only leak")
    if len(pairs) > cfg.t_q:
        raise ValueError(f"{len(pairs)} corrupted pairs exceed t_q={cfg.t_q}")
    for lab in LABS:
        n = sum(1 for p in script.corrupted if p.lab == lab and p.role == "cp")
        if n > cfg.t_c:
            raise ValueError(f"{n} corrupted units in lab {lab} exceed t_c={cfg.t_c}")
    if script.collaboration != cfg.unit_model.collaborative and any(
            p.role == "cp" for p in script.corrupted):
        raise ValueError("script collaboration flag contradicts the unit model")


# Channels and links

@dataclass(frozen=True)
class Channel:
    kind: str  # "secure", "authenticated" or "quantum"
    endpoints: tuple


class ProtocolAbort(Exception):
    def __init__(self, state: AbortState):
        super().__init__(f"aborted in {state.phase} by {state.origin}")
        self.state = state


@dataclass
class AuthLink:
    """Key pools of one Alice unit and one Bob unit, kept in lock step."""

    a: PartyId
    b: PartyId
    pools: dict  # sender name -> (sender pool, receiver pool) per direction

    def endpoints(self):
        return (self.a, self.b)


class Network:
    """One simulated session: two labs of CP units and their QKD modules."""

    def __init__(self, cfg: DeploymentConfig, seed: int, *, pool_bits: int = DEFAULT_POOL_BITS,
                 gamma_au: float = 1e-9):
        self.cfg = cfg
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        proto_seed, adv_seed, pool_seed = ss.spawn(3)
        self.rng = np.random.default_rng(proto_seed)
        self._adv_rng = np.random.default_rng(adv_seed)
        self.transcript: list = []
        self.gamma_au = gamma_au
        self.script = AdversaryScript(collaboration=cfg.unit_model.collaborative)
        self.sinks = LeakSinks(self.script.collaboration)
        self.unit_strategies = {lab: {} for lab in LABS}
        self.module_strategies = {lab: {} for lab in LABS}
        self.labs = {}
        ucfg = cfg.unit_config
        for lab in LABS:
            names = [str(p) for p in cfg.units(lab)]
            self.labs[lab] = VssSession(ucfg, self.rng, names=names,
                                        strategies=self.unit_strategies[lab],
                                        transcript=self.transcript, label=lab)
        self.channels = self._topology()
        prng = np.random.default_rng(pool_seed)
        self.links = {}
        for a in self.sigma1("A"):
            for b in self.sigma1("B"):
                pools = {}
                for sender in ("A", "B"):
                    pool = KeyPool(BitString.random(pool_bits, prng))
                    pools[sender] = (pool, pool.copy())
                self.links[(a, b)] = AuthLink(PartyId("A", "cp", a), PartyId("B", "cp", b), pools)
        self.abort_state = None
        self._forged = False

    # topology
    def _topology(self) -> list:
        cfg = self.cfg
        ch = []
        for lab in LABS:
            for m in cfg.modules(lab):
                for u in cfg.units(lab):
                    ch.append(Channel("secure", (m, u)))
            us = cfg.units(lab)
            for i, u in enumerate(us):
                for v in us[i + 1:]:
                    ch.append(Channel("secure", (u, v)))
        for j in range(cfg.n_q):
            ch.append(Channel("quantum", (PartyId("A", "qkd", j), PartyId("B", "qkd", j))))
        for a in cfg.units("A"):
            for b in cfg.units("B"):
                ch.append(Channel("authenticated", (a, b)))
        return ch

    def sigma1(self, lab: str) -> list:
        return sorted(self.cfg.unit_config.sigma[0])

    def unit_name(self, lab: str, i: int) -> str:
        return f"{lab}.cp{i}"

    def unit_strategy(self, lab: str, i: int) -> PartyStrategy:
        return self.labs[lab].strategy(i)

    def is_active_unit(self, lab: str, i: int) -> bool:
        return self.labs[lab].is_active(i)

    def honest_units(self, lab: str) -> list:
        return [i for i in range(self.cfg.n_c) if not self.is_active_unit(lab, i)]

    def module_strategy(self, lab: str, j: int):
        return self.module_strategies[lab].get(j)

    # logging and aborts
    def log(self, phase, sender, receiver, payload) -> None:
        if isinstance(payload, BitString):
            payload = payload.to_hex()
        self.transcript.append(f"{phase}\t{sender}\t{receiver}\t{payload}")

    def abort(self, lab: str, origin, phase: str):
        try:
            self.labs[lab].abort(origin, phase)
        except VssAbort as exc:
            self.abort_state = exc.state
            raise ProtocolAbort(exc.state) from None

    # in-lab messages
    def relay(self, lab: str, senders, receivers, value: BitString, phase: str) -> dict:
        """Each sender forwards ``value`` to each receiver; receivers decide by MV."""
        sess = self.labs[lab]
        out = {}
        for r in receivers:
            got = []
            for s in senders:
                v = value if s == r else sess.strategy(s).relay(sess, s, phase, r, value)
                if s != r:
                    self.log(phase, self.unit_name(lab, s), self.unit_name(lab, r),
                             v if v is not None else "none")
                got.append(v)
            if len(senders) == 1:
                out[r] = got[0] if got[0] is not None else BitString.zeros(len(value))
            else:
                val, tie = majority(got, len(senders))
                out[r] = val if not tie else BitString.zeros(len(value))
        return out

    def module_broadcast(self, lab: str, j: int, value: BitString, receivers, phase: str) -> dict:
        """Module j sends ``value`` to units; receivers in a set cross-check it."""
        strat = self.module_strategy(lab, j)
        sess = self.labs[lab]
        got = {}
        for r in receivers:
            v = strat.info_copy(r, value) if strat is not None else value
            self.log(phase, f"{lab}.qkd{j}", self.unit_name(lab, r), v if v is not None else "none")
            got[r] = v if v is not None else BitString.zeros(len(value))
            sess.strategy(r).observe(sess, r, phase, got[r])
        rs = sorted(receivers)
        for r in rs:
            for peer in rs:
                if peer == r:
                    continue
                sent = sess.strategy(r).consistency_copy(sess, r, -1, peer, got[r])
                self.log(f"{phase}/consistency", self.unit_name(lab, r), self.unit_name(lab, peer), sent)
                if not sess.is_active(peer) and sent != got[peer]:
                    self.abort(lab, peer, f"{phase}/consistency")
        return got

    # lab-to-lab messages
    def send_auth(self, sender_lab: str, value_of, phase: str) -> dict:
        """Every sigma_1 unit of ``sender_lab`` sends its message to every peer sigma_1 unit.

        ``value_of(i)`` is the message held by sender unit i. Returns the
        MV-decided message per honest receiving unit.
        """
        recv_lab = "B" if sender_lab == "A" else "A"
        senders, receivers = self.sigma1(sender_lab), self.sigma1(recv_lab)
        out = {}
        for r in receivers:
            got = []
            for s in senders:
                a, b = (s, r) if sender_lab == "A" else (r, s)
                link = self.links[(a, b)]
                spool, rpool = link.pools[sender_lab]
                sess = self.labs[sender_lab]
                msg = sess.strategy(s).relay(sess, s, phase, r, value_of(s))
                if msg is None:
                    got.append(None)
                    self.log(phase, self.unit_name(sender_lab, s), self.unit_name(recv_lab, r), "none")
                    continue
                try:
                    tag, _ = auth_tag(spool, msg, self.gamma_au)
                except InsufficientKeyError:
                    self.abort(sender_lab, s, f"{phase}/pool")
                wire = msg
                if self.script.forge_links and not self._forged:
                    wire = _flip_random(msg, self._adv_rng)
                    self._forged = True
                self.log(phase, self.unit_name(sender_lab, s), self.unit_name(recv_lab, r),
                         f"{wire.to_hex()}|{tag.tag.to_hex()}")
                try:
                    ok = auth_verify(rpool, wire, AuthTag(tag.tag, len(wire), tag.error_bound))
                except InsufficientKeyError:
                    ok = False
                if not ok and not self.is_active_unit(recv_lab, r):
                    self.abort(recv_lab, r, f"{phase}/auth")
                got.append(wire)
                rs = self.labs[recv_lab]
                rs.strategy(r).observe(rs, r, phase, wire)
            if r in self.honest_units(recv_lab):
                val, tie = majority(got, len(senders))
                if tie:
                    self.labs[recv_lab].tie_flags += 1
                    val = None
                out[r] = val
        self.labs[recv_lab].check_false_aborts(phase)
        return out

    def pool_consumption(self) -> dict:
        return {f"{l.a}-{l.b}:{d}": p[0].consumed for (k, l) in self.links.items()
                for d, p in l.pools.items()}

    # random bit strings
    def rbs_generate(self, lab: str, L: int, *, phase: str = "rbs", dealers=None) -> dict:
        """Common uniform L-bit string for the honest units of ``lab``."""
        return rbs_generate(L, self, lab, phase=phase, dealers=dealers)


def build_network(cfg: DeploymentConfig, seed: int = 0, **kw) -> Network:
    return Network(cfg, seed, **kw)


def inject(script: AdversaryScript, net: Network) -> Network:
    """Attach strategies for the scripted parties; also creates the leak sinks."""
    validate_script(script, net.cfg)
    net.script = script
    net.sinks = LeakSinks(script.collaboration)
    for p, beh in sorted(script.corrupted.items()):
        name = str(p)
        rng = np.random.default_rng([net.seed, p.index, ord(p.lab), len(p.role)])
        if p.role == "cp":
            cls = {"leak": LeakUnit, "tamper": TamperUnit, "false-abort": FalseAbortUnit,
                   "silent": SilentUnit}[beh]
            strat = cls(name, net.sinks, rng)
            net.unit_strategies[p.lab][p.index] = strat
            net.labs[p.lab].strategies[p.index] = strat
        else:
            cls = {"leak": LeakModule, "tamper": TamperModule, "false-abort": TamperModule,
                   "silent": SilentModule}[beh]
            net.module_strategies[p.lab][p.index] = cls(name, net.sinks, rng)
    return net


class _RbsDealer(DealerStrategy):
    """A corrupted unit dealing its RBS contribution: it may cut or alter shares."""

    def __init__(self, strategy, L):
        self.strategy = strategy
        self.L = L

    def deliver(self, session, share_idx, party, value):
        if isinstance(self.strategy, SilentUnit):
            return None
        if isinstance(self.strategy, TamperUnit) and self.strategy.rng.random() < 0.05:
            return BitString(value.value >> 1, max(len(value) - 1, 0))
        return value


def rbs_generate(L: int, net: Network, lab: str, *, phase: str = "rbs", dealers=None,
                 contributions=None) -> dict:
    """Random bit string generation among the units of one lab.

    Active unit models: units 0..t each deal a random L-bit string with Share,
    the shares are XORed share-wise and reconstructed. Passive models: unit 0
    draws the string and hands it to the others. ``contributions`` may fix the
    string dealt by chosen units (an adversarial choice).
    """
    sess = net.labs[lab]
    cfg = sess.cfg
    if not cfg.model.active:
        r = BitString.random(L, net.rng)
        out = {0: r}
        for p in range(1, cfg.n):
            net.log(phase, net.unit_name(lab, 0), net.unit_name(lab, p), r)
            sess.strategy(p).observe(sess, p, phase, r)
            out[p] = r
        sess.strategy(0).observe(sess, 0, phase, r)
        return out
    dealers = list(range(cfg.t + 1)) if dealers is None else list(dealers)
    contributions = contributions or {}
    tables = []
    for d in dealers:
        if d in contributions:
            r = contributions[d]
        else:
            r = BitString.random(L, net.rng)
        dealer = HONEST if not sess.is_active(d) else _RbsDealer(sess.strategy(d), L)
        try:
            tables.append(sess.share(r, dealer=dealer, dealer_name=net.unit_name(lab, d),
                                     length=L, phase=f"{phase}/share{d}", expected_len=L))
        except VssAbort as exc:
            net.abort_state = exc.state
            raise ProtocolAbort(exc.state) from None
    total = xor_tables(tables)
    try:
        return sess.reconstruct(total, phase=f"{phase}/reconstruct")
    except VssAbort as exc:
        net.abort_state = exc.state
        raise ProtocolAbort(exc.state) from None


HONEST = DealerStrategy()


# Scenario files

SCENARIO_KEYS = {
    "scheme": str, "module_model": str, "t_q": int, "unit_model": str, "t_c": int,
    "M": int, "seed": int, "loss_db": float, "corrupt": str, "target_length": int,
    "collaboration": str, "forge_links": str, "pool_bits": int,
}
_REQUIRED = ("scheme", "module_model", "t_q", "unit_model", "t_c", "M", "seed")


@dataclass
class Scenario:
    scheme: str
    module_model: str
    t_q: int
    unit_model: str
    t_c: int
    M: int
    seed: int
    loss_db: float = 0.0
    corrupt: str = ""
    target_length: int | None = None
    collaboration: bool | None = None
    forge_links: bool = False
    pool_bits: int = DEFAULT_POOL_BITS

    def deployment(self) -> DeploymentConfig:
        return DeploymentConfig.minimal(self.module_model, self.t_q, self.unit_model, self.t_c)

    def script(self) -> AdversaryScript:
        collab = self.collaboration
        if collab is None:
            collab = CorruptionModel(self.unit_model).collaborative
        return AdversaryScript.from_spec(self.corrupt, collab, self.forge_links)


class ScenarioError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"not a boolean: {text!r}")


def parse_scenario(text: str) -> Scenario:
    vals = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in SCENARIO_KEYS:
            raise ScenarioError(f"line {n}: unknown key {k!r}")
        if k in vals:
            raise ScenarioError(f"line {n}: duplicate key {k!r}")
        vals[k] = v
    missing = [k for k in _REQUIRED if k not in vals]
    if missing:
        raise ScenarioError(f"missing keys: {', '.join(missing)}")
    out = {}
    try:
        for k, v in vals.items():
            if k in ("collaboration", "forge_links"):
                out[k] = _bool(v)
            else:
                out[k] = SCENARIO_KEYS[k](v)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if out["scheme"] not in ("MDI", "BB84"):
        raise ScenarioError(f"unknown scheme {out['scheme']!r}")
    sc = Scenario(**out)
    try:
        cfg = sc.deployment()
        validate_script(sc.script(), cfg)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if sc.M < 1:
        raise ScenarioError("M must be positive")
    return sc


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def write_scenario(sc: Scenario) -> str:
    lines = [f"scheme = {sc.scheme}", f"module_model = {sc.module_model}", f"t_q = {sc.t_q}",
             f"unit_model = {sc.unit_model}", f"t_c = {sc.t_c}", f"M = {sc.M}",
             f"seed = {sc.seed}", f"loss_db = {sc.loss_db:g}"]
    if sc.corrupt:
        lines.append(f"corrupt = {sc.corrupt}")
    if sc.target_length is not None:
        lines.append(f"target_length = {sc.target_length}")
    if sc.collaboration is not None:
        lines.append(f"collaboration = {str(sc.collaboration).lower()}")
    if sc.forge_links:
        lines.append("forge_links = true")
    if sc.pool_bits != DEFAULT_POOL_BITS:
        lines.append(f"pool_bits = {sc.pool_bits}")
    return "\n".join(lines) + "\n"


def parse_transcript(lines) -> list:
    """Split transcript lines into (phase, sender, receiver, payload) tuples."""
    out = []
    for line in lines:
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"bad transcript line: {line!r}")
        out.append(tuple(parts))
    return out


def pool_bits_needed(message_lens, gamma_au: float) -> int:
    return sum(3 * math.ceil(math.log2(2 * max(m, 1) / gamma_au)) for m in message_lens)


def random_script(cfg: DeploymentConfig, rng: np.random.Generator, *,
                  forge_links: bool = False) -> AdversaryScript:
    """A random adversary within the deployment's corruption bounds."""
    corrupted = {}
    unit_beh = BEHAVIORS if cfg.unit_model.active else ("leak",)
    mod_beh = ("leak", "tamper", "silent") if cfg.module_model.active else ("leak",)
    n_pairs = int(rng.integers(0, min(cfg.t_q, cfg.n_q) + 1))
    for j in rng.choice(cfg.n_q, size=n_pairs, replace=False):
        for lab in LABS:
            if rng.random() < 0.7:
                corrupted[PartyId(lab, "qkd", int(j))] = str(rng.choice(mod_beh))
    for lab in LABS:
        k = int(rng.integers(0, min(cfg.t_c, cfg.n_c) + 1))
        for i in rng.choice(cfg.n_c, size=k, replace=False):
            corrupted[PartyId(lab, "cp", int(i))] = str(rng.choice(unit_beh))
    return AdversaryScript(corrupted, cfg.unit_model.collaborative, forge_links)
