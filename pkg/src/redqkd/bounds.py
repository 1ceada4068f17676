"""Concentration inequalities used by the finite-key analysis."""

from __future__ import annotations

import math


class NumericalFailure(ArithmeticError):
    """A numerical routine did not converge."""


def _log_inv(y: float) -> float:
    if not 0 < y <= 1:
        raise ValueError(f"error probability must lie in (0, 1], got {y}")
    return -math.log(y)


def chernoff_delta_upper(x: float, y: float) -> float:
    L = _log_inv(y)
    if L == 0:
        return 0.0
    return 0.5 * L * (1 + math.sqrt(1 + 8 * x / L))


def chernoff_delta_lower(x: float, y: float) -> float:
    return math.sqrt(2 * x * _log_inv(y))


def lambert_w(z: float, branch: int = 0, *, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Real Lambert W on branch 0 (z >= -1/e) or -1 (-1/e <= z < 0), Halley's method."""
    em1 = -math.exp(-1.0)
    if branch not in (0, -1):
        raise ValueError("branch must be 0 or -1")
    if z < em1:
        if z > em1 * (1 + 1e-15):
            z = em1
        else:
            raise ValueError(f"Lambert W undefined below -1/e, got {z}")
    if z == em1:
        return -1.0
    if branch == -1 and z >= 0:
        raise ValueError("branch -1 needs z in [-1/e, 0)")
    if z == 0.0:
        return 0.0

    p2 = 2 * (math.e * z + 1)
    p = math.sqrt(max(p2, 0.0))
    if p < 1e-3:
        # Branch-point series; Halley cannot resolve steps below sqrt(eps) here.
        sp = p if branch == 0 else -p
        return -1 + sp - sp ** 2 / 3 + 11 / 72 * sp ** 3 - 43 / 540 * sp ** 4
    if branch == 0:
        if z < -0.25:
            w = -1 + p - p * p / 3 + 11 / 72 * p ** 3
        elif z < 3:
            w = math.log1p(z)
        else:
            lz = math.log(z)
            w = lz - math.log(lz)
    else:
        if z < -0.25:
            w = -1 - p - p * p / 3 - 11 / 72 * p ** 3
        else:
            lz = math.log(-z)
            w = lz - math.log(-lz)

    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1
        if wp1 == 0:
            return w
        denom = ew * wp1 - (w + 2) * f / (2 * wp1)
        if denom == 0:
            break
        step = f / denom
        w_new = w - step
        if branch == 0 and w_new < -1:
            w_new = (w - 1) / 2 if w > -1 else -1.0
        if branch == -1 and w_new > -1:
            w_new = (w - 1) / 2
        if abs(w_new - w) <= tol * max(abs(w_new), 1e-300):
            return w_new
        w = w_new
    raise NumericalFailure(f"Lambert W (branch {branch}) did not converge at z={z}")


def _g_shift(u: float, s: float) -> float:
    """u + ln(1 - u) + s, summed as a series for small |u| to avoid cancellation."""
    if abs(u) < 0.1:
        acc, term = 0.0, u
        for k in range(2, 18):
            term *= u
            acc -= term / k
        return acc + s
    return u + math.log1p(-u) + s


def _w_plus_one(s: float, branch: int) -> float:
    """W_branch(-exp(-1 - s)) + 1 for s = ln(1/y)/x >= 0.

    Writing u = W + 1 turns w e^w = -e^(-c) into u + ln(1 - u) = -s, which
    stays well conditioned next to the branch point where s -> 0. Solved by
    safeguarded Halley steps from the branch-point series or the asymptote.
    """
    if s == 0:
        return 0.0
    if branch == 0 and s > 30:
        # Fixed point of u = 1 - exp(-s - u) with u = 1 to double precision.
        return -math.expm1(-s - 1.0)
    sign = 1.0 if branch == 0 else -1.0
    if s < 1.5:
        p = sign * math.sqrt(-2 * math.expm1(-s))
        u = p - p * p / 3 + 11 / 72 * p ** 3
    elif branch == 0:
        u = -math.expm1(-s - 1.0)
    else:
        u = -s - math.log1p(s)
    lo, hi = (0.0, 1.0) if branch == 0 else (-math.inf, 0.0)
    if branch == 0:
        u = min(u, 1.0 - math.exp(-s - 1.0) / 2)
    for _ in range(100):
        g = _g_shift(u, s)
        if g == 0:
            return u
        d1 = -u / (1 - u)
        d2 = -1 / (1 - u) ** 2
        step = 2 * g * d1 / (2 * d1 * d1 - g * d2)
        new = u - step
        if not lo < new < hi:
            new = (u + (hi if step < 0 else lo)) / 2 if math.isfinite(hi if step < 0 else lo) else 2 * u
        if abs(new - u) <= 1e-13 * max(abs(new), 1e-300):
            return new
        u = new
    raise NumericalFailure(f"inverse Chernoff root failed for s={s}")


def inverse_chernoff_lower_dev(x: float, y: float) -> float:
    """Width below the observation: mu >= x - this, except with probability y."""
    L = _log_inv(y)
    if x == 0 or L == 0:
        return 0.0
    if L / x > 1e300:
        return x
    return max(x * _w_plus_one(L / x, 0), 0.0)


def inverse_chernoff_upper_dev(x: float, y: float) -> float:
    """Width above the observation: mu <= x + this, except with probability y."""
    L = _log_inv(y)
    if x == 0:
        return L
    if L == 0:
        return 0.0
    if L / x > 1e300:
        return L
    return max(-x * _w_plus_one(L / x, -1), 0.0)


def inverse_chernoff(x: float, eps_lower: float, eps_upper: float) -> tuple[float, float]:
    """Interval for the mean given one observation x.

    The mean lies in ``[x - dev_hat, x + dev]`` except with probability
    ``eps_lower + eps_upper``; ``dev`` is evaluated at ``eps_lower`` and
    ``dev_hat`` at ``eps_upper``.
    """
    return x - inverse_chernoff_lower_dev(x, eps_upper), x + inverse_chernoff_upper_dev(x, eps_lower)


def serfling_upsilon(x: float, y: float, z: float) -> float:
    return math.sqrt((x + 1) * _log_inv(z) / (2 * y * (x + y)))


def serfling_lambda(x: float, y: float, z: float) -> float:
    return math.sqrt((x - y + 1) * _log_inv(z) / (2 * x * y))


def hoeffding_delta(x: float, y: float) -> float:
    return math.sqrt(0.5 * x * _log_inv(y))


def binary_entropy(p: float) -> float:
    if not 0 <= p <= 1:
        raise ValueError(f"probability out of range: {p}")
    if p == 0 or p == 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


class Infeasible(ValueError):
    """No finite number of rounds reaches the requested block size."""


def rounds_for_blocksize(M: float, y: float, z: float) -> int:
    if y <= 0:
        raise Infeasible("success probability is zero")
    L = _log_inv(z)
    if L == 0:
        return math.ceil(M / y)
    return math.ceil(M / y + (L / y) * (1 + math.sqrt(1 + 2 * M / L)))
