"""Quantum key distribution post-processing with redundant, partly untrusted devices."""

from .bits import BitString, KeyPool, ToeplitzHash, auth_tag, auth_verify
from .config import ChannelParams, ProtocolInputs, SecurityBudget, get_preset
from .keyrate import KeyRateEstimator, Scenario, evaluate, optimize_inputs
from .network import AdversaryScript, DeploymentConfig, PartyId, build_network, inject, rbs_generate
from .protocol import finalize_keys, run_protocol
from .vss import CorruptionModel, VssSession, make_config

__version__ = "0.1.0"

__all__ = [
    "AdversaryScript", "BitString", "ChannelParams", "CorruptionModel", "DeploymentConfig",
    "KeyPool", "KeyRateEstimator", "PartyId", "ProtocolInputs", "Scenario", "SecurityBudget",
    "ToeplitzHash", "VssSession", "auth_tag", "auth_verify", "build_network", "evaluate",
    "finalize_keys", "get_preset", "inject", "make_config", "optimize_inputs",
    "rbs_generate", "run_protocol",
]
