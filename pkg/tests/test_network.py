from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from redqkd.bits import BitString
from redqkd.network import (
    AdversaryScript,
    DeploymentConfig,
    PartyId,
    ProtocolAbort,
    ScenarioError,
    TamperUnit,
    build_network,
    inject,
    parse_scenario,
    parse_transcript,
    random_script,
    rbs_generate,
    write_scenario,
)


def quiet(net, lab="A"):
    net.labs[lab].transcript = None
    return net


def test_party_id_roundtrip():
    p = PartyId.parse("B.cp3")
    assert (p.lab, p.role, p.index) == ("B", "cp", 3) and str(p) == "B.cp3"
    for bad in ("X.cp1", "A.cpu1", "A.cp"):
        with pytest.raises(ValueError):
            PartyId.parse(bad)


def test_deployment_sizes():
    c = DeploymentConfig.minimal("PN", 2, "PN", 2)
    assert (c.n_q, c.n_c) == (2, 2)
    c = DeploymentConfig.minimal("AC", 1, "AC", 1)
    assert (c.n_q, c.n_c) == (2, 4)
    c = DeploymentConfig.minimal("AC", 0, "AC", 0)
    assert (c.n_q, c.n_c) == (1, 1)
    with pytest.raises(ValueError):
        DeploymentConfig(3, 1, 4, 1, "AC", "AC")
    with pytest.raises(ValueError):
        DeploymentConfig(2, 1, 5, 1, "AC", "AC")


def test_topology_pn():
    net = build_network(DeploymentConfig.minimal("PN", 2, "PN", 2))
    kinds = Counter(c.kind for c in net.channels)
    # 2 modules x 2 units + 1 unit pair, per lab
    assert kinds == {"authenticated": 4, "secure": 10, "quantum": 2}


def test_topology_ac():
    cfg = DeploymentConfig.minimal("AC", 1, "AC", 1)
    net = build_network(cfg)
    auth = [c for c in net.channels if c.kind == "authenticated"]
    assert len(auth) == 16
    assert {c.endpoints for c in auth} == {(a, b) for a in cfg.units("A") for b in cfg.units("B")}


def test_script_bounds():
    cfg = DeploymentConfig.minimal("AC", 1, "AC", 1)
    net = build_network(cfg)
    with pytest.raises(ValueError):
        inject(AdversaryScript.from_spec("A.cp0:tamper, A.cp1:leak"), net)
    with pytest.raises(ValueError):
        inject(AdversaryScript.from_spec("A.qkd0:leak, B.qkd1:leak"), net)
    with pytest.raises(ValueError):
        inject(AdversaryScript.from_spec("A.cp9:leak"), net)
    pn = build_network(DeploymentConfig.minimal("PN", 2, "PN", 2))
    with pytest.raises(ValueError):
        inject(AdversaryScript.from_spec("A.cp0:tamper", collaboration=False), pn)
    with pytest.raises(ValueError):
        AdversaryScript.from_spec("A.cp0:explode")


def test_random_scripts_within_bounds():
    rng = np.random.default_rng(0)
    for mm, tq, um, tc in [("AC", 1, "AC", 1), ("PN", 2, "PN", 2), ("AN", 2, "AN", 2)]:
        cfg = DeploymentConfig.minimal(mm, tq, um, tc)
        for _ in range(50):
            inject(random_script(cfg, rng), build_network(cfg))


def test_empty_script_is_honest():
    cfg = DeploymentConfig.minimal("AC", 1, "AC", 1)
    a, b = build_network(cfg, 5), inject(AdversaryScript(), build_network(cfg, 5))
    a.rbs_generate("A", 16)
    b.rbs_generate("A", 16)
    assert a.transcript == b.transcript


def test_noncollaborative_sinks_disjoint():
    cfg = DeploymentConfig.minimal("PN", 2, "PN", 2)
    net = inject(AdversaryScript.from_spec("A.cp0:leak, B.cp1:leak, A.qkd0:leak, A.qkd1:leak",
                                           collaboration=False), build_network(cfg, 1))
    net.rbs_generate("A", 8)
    net.rbs_generate("B", 8)
    assert net.sinks.keys == ["A.cp0", "B.cp1"]
    for k in net.sinks.keys:
        assert {who for who, _, _ in net.sinks.sink(k)} == {k}


def test_rbs_common_and_length():
    for um, tc in [("AC", 1), ("AC", 2), ("AN", 2), ("PC", 2), ("PN", 2)]:
        net = build_network(DeploymentConfig.minimal("PN", 2, um, tc), 3)
        out = net.rbs_generate("B", 8)
        assert len(set(out.values())) == 1 and len(next(iter(out.values()))) == 8


def test_rbs_uniform():
    net = quiet(build_network(DeploymentConfig.minimal("PN", 2, "AC", 1), 4))
    counts = Counter(next(iter(net.rbs_generate("A", 4).values())).value for _ in range(8000))
    assert chisquare([counts[i] for i in range(16)]).pvalue > 0.01


def test_rbs_adversarial_contribution_uniform():
    cfg = DeploymentConfig.minimal("PN", 2, "AC", 1)
    net = quiet(build_network(cfg, 5))
    fixed = {0: BitString.from_str("1111")}
    counts = Counter(rbs_generate(4, net, "A", contributions=fixed)[1].value for _ in range(8000))
    assert chisquare([counts[i] for i in range(16)]).pvalue > 0.01


def test_rbs_short_share_aborts():
    cfg = DeploymentConfig.minimal("PN", 2, "AC", 1)
    net = build_network(cfg, 6)
    with pytest.raises(ProtocolAbort) as e:
        rbs_generate(8, net, "A", contributions={0: BitString.zeros(7)})
    assert "length" in e.value.state.phase


def test_forged_link_aborts():
    cfg = DeploymentConfig.minimal("PN", 2, "PN", 2)
    net = inject(AdversaryScript(collaboration=False, forge_links=True), build_network(cfg, 7))
    with pytest.raises(ProtocolAbort) as e:
        net.send_auth("A", lambda i: BitString.from_str("10110"), "msg")
    assert e.value.state.phase.endswith("/auth")


def test_auth_links_deliver():
    cfg = DeploymentConfig.minimal("AC", 1, "AC", 1)
    net = build_network(cfg, 8)
    msg = BitString.from_str("1100101")
    out = net.send_auth("B", lambda i: msg, "msg")
    assert set(out) == set(net.sigma1("A")) and set(out.values()) == {msg}
    assert all(v > 0 for k, v in net.pool_consumption().items() if k.endswith(":B"))


def test_tampering_sender_outvoted():
    cfg = DeploymentConfig.minimal("AC", 1, "AC", 1)
    for seed in range(30):
        net = inject(AdversaryScript.from_spec("A.cp1:tamper"), build_network(cfg, seed))
        msg = BitString.from_str("1100101")
        assert set(net.send_auth("A", lambda i: msg, "msg").values()) == {msg}


def test_pool_exhaustion_aborts():
    cfg = DeploymentConfig.minimal("PN", 2, "PN", 2)
    net = build_network(cfg, 9, pool_bits=20)
    with pytest.raises(ProtocolAbort) as e:
        net.send_auth("A", lambda i: BitString.zeros(64), "msg")
    assert e.value.state.phase.endswith("/pool")


def test_determinism():
    cfg = DeploymentConfig.minimal("AC", 1, "AC", 1)

    def run():
        net = inject(AdversaryScript.from_spec("A.cp2:tamper, B.cp0:leak"), build_network(cfg, 11))
        try:
            net.rbs_generate("A", 12)
            net.send_auth("A", lambda i: BitString.from_str("0101"), "m")
        except ProtocolAbort:
            pass
        return list(net.transcript)

    assert run() == run()


def test_passive_script_changes_no_payload():
    cfg = DeploymentConfig.minimal("PC", 1, "PC", 1)
    honest = build_network(cfg, 12)
    leaky = inject(AdversaryScript.from_spec("A.cp1:leak, A.qkd0:leak"), build_network(cfg, 12))
    for net in (honest, leaky):
        net.rbs_generate("A", 10)
        net.send_auth("A", lambda i: BitString.from_str("111000"), "m")
    assert honest.transcript == leaky.transcript
    assert len(leaky.sinks.sink("all")) > 0


def test_transcript_format():
    net = build_network(DeploymentConfig.minimal("AC", 1, "AC", 1), 13)
    net.rbs_generate("A", 8)
    rows = parse_transcript(net.transcript)
    assert rows and all(len(r) == 4 for r in rows)
    with pytest.raises(ValueError):
        parse_transcript(["only\ttwo"])


SCN = """
# comment
scheme = MDI
module_model = AC
t_q = 1
unit_model = AC
t_c = 1
M = 64
seed = 3
corrupt = A.cp0:tamper, B.qkd1:leak
target_length = 12
"""


def test_scenario_roundtrip():
    sc = parse_scenario(SCN)
    assert sc.t_c == 1 and sc.corrupt.startswith("A.cp0")
    assert parse_scenario(write_scenario(sc)) == sc


@pytest.mark.parametrize("text", [
    SCN.replace("scheme = MDI", "scheme = B92"),
    SCN.replace("M = 64", "M = lots"),
    SCN.replace("seed = 3", ""),
    SCN + "colour = red\n",
    SCN + "seed = 4\n",
    SCN.replace("t_c = 1", "t_c = 1\nnonsense"),
    SCN.replace("A.cp0:tamper", "A.cp0:tamper, A.cp1:tamper"),
])
def test_scenario_errors(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_tamper_unit_default_rate():
    assert TamperUnit("x", None, np.random.default_rng()).rate == 0.5
