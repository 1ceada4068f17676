"""Shared parameter records: channel, protocol inputs, security budget, presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ChannelParams:
    eta_det: float = 0.65
    p_d: float = 7.2e-8
    delta_mis: float = 0.08  # radians
    alpha_att: float = 0.2  # dB/km, only used to convert distances
    loss_db: float = 0.0

    def __post_init__(self):
        for name in ("eta_det", "p_d"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.loss_db < 0:
            raise ValueError("loss_db must be non-negative")

    def with_loss(self, loss_db: float) -> "ChannelParams":
        return replace(self, loss_db=loss_db)

    def eta(self, loss_db: float | None = None) -> float:
        loss = self.loss_db if loss_db is None else loss_db
        return self.eta_det * 10 ** (-loss / 10)


@dataclass(frozen=True)
class ProtocolInputs:
    """Protocol settings. ``lam`` is the MDI key-basis intensity (unused for BB84)."""

    scheme: str = "MDI"
    lam: float = 0.3
    mu: float = 0.3
    nu: float = 0.05
    omega: float = 1e-3
    q_Z: float = 0.7
    p_mu: float = 1 / 3
    p_nu: float = 1 / 3
    p_omega: float = 1 / 3
    M: int = 10**6
    N: float = 0.0
    E_tol: float = 0.0
    f_EC: float = 1.16

    def __post_init__(self):
        if self.scheme not in ("MDI", "BB84"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.q_Z < 1:
            raise ValueError("q_Z must lie in (0, 1)")
        ps = (self.p_mu, self.p_nu, self.p_omega)
        if min(ps) < 0 or not math.isclose(sum(ps), 1.0, abs_tol=1e-9):
            raise ValueError("decoy probabilities must be non-negative and sum to 1")
        if not self.mu > self.nu > self.omega >= 0:
            raise ValueError("intensities must satisfy mu > nu > omega >= 0")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def q_X(self) -> float:
        return 1.0 - self.q_Z

    @property
    def decoys(self) -> tuple:
        return (self.mu, self.nu, self.omega)

    @property
    def decoy_probs(self) -> dict:
        return {self.mu: self.p_mu, self.nu: self.p_nu, self.omega: self.p_omega}

    def replace(self, **kw) -> "ProtocolInputs":
        return replace(self, **kw)


@dataclass(frozen=True)
class SecurityBudget:
    eps_cor: float = 1e-8
    eps_sec: float = 1e-8
    eps_AU: float = 5e-9
    gamma_sift: float = 5e-3
    gamma_EC: float = 5e-3

    def __post_init__(self):
        if not (0 < self.eps_AU < self.eps_cor and self.eps_AU < self.eps_sec):
            raise ValueError("eps_AU must be positive and below eps_cor and eps_sec")

    @property
    def hat_eps_cor(self) -> float:
        return self.eps_cor - self.eps_AU

    @property
    def hat_eps_sec(self) -> float:
        return self.eps_sec - self.eps_AU

    def gamma_AU(self, unit_active: bool, t_c: int, n_q: int) -> float:
        """Largest per-message authentication error compatible with eps_AU."""
        if unit_active:
            return self.eps_AU / ((t_c + 1) ** 2 * (n_q + 1))
        return self.eps_AU / (n_q + 1)


@dataclass(frozen=True)
class Preset:
    name: str
    channel: ChannelParams
    budget: SecurityBudget
    omega: float
    f_EC: float
    block_sizes: tuple


PRESETS = {
    "paper-2020-defaults": Preset(
        name="paper-2020-defaults",
        channel=ChannelParams(eta_det=0.65, p_d=7.2e-8, delta_mis=0.08),
        budget=SecurityBudget(eps_cor=1e-8, eps_sec=1e-8, eps_AU=5e-9,
                              gamma_sift=5e-3, gamma_EC=5e-3),
        omega=1e-3,
        f_EC=1.16,
        block_sizes=(10**5, 10**6),
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
