"""Closed-form SABR implied volatility (Hagan-style asymptotic expansion).

Two variants of the log-moneyness bracket are supported: ``"numerator"``
multiplies by {1 + (1-b)^2/24 ln^2 + (1-b)^4/1920 ln^4} and
``"denominator"`` divides by it. Both appear in the literature; the
numerator form is the package default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, NegativeVol

__all__ = [
    "BRACKET_MODES",
    "HaganEval",
    "SabrPoint",
    "hagan_atm",
    "hagan_vol",
    "zx_ratio",
]

BRACKET_MODES = ("numerator", "denominator")

# Strikes with |ln(F0/K)| below this are priced with the ATM formula; the
# general expression is 0/0 at z = 0 and cancels catastrophically nearby.
ATM_LOG_THRESHOLD = 1e-8

# Below this |z| the z/x(z) ratio switches to its first-order series.
_Z_SERIES_THRESHOLD = 1e-6

# Powers of (1 - beta) are treated as exactly zero beyond this point, so the
# lognormal edge case never sees spurious (F0*K)^eps factors.
_BETA_ONE_THRESHOLD = 1e-9


@dataclass(frozen=True)
class SabrPoint:
    """One SABR pricing configuration (T, F0, K, alpha, beta, rho, nu)."""

    T: float
    F0: float
    K: float
    alpha: float
    beta: float
    rho: float
    nu: float

    def __post_init__(self) -> None:
        for name in ("T", "F0", "K", "alpha", "beta", "rho", "nu"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.T <= 0 or self.F0 <= 0 or self.K <= 0 or self.alpha <= 0:
            raise ValueError("T, F0, K and alpha must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta!r}")
        if abs(self.rho) > 0.95:
            raise ValueError(f"rho must lie in [-0.95, 0.95], got {self.rho!r}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu!r}")


@dataclass(frozen=True)
class HaganEval:
    """Intermediate quantities of one smile evaluation, kept for diagnostics."""

    z: float
    x_of_z: float
    ratio: float
    sigma: float


def zx_ratio(z: float, rho: float) -> float:
    """The factor z/x(z) with x(z) = ln((sqrt(1-2*rho*z+z^2)+z-rho)/(1-rho)).

    Continuous at z = 0 with value 1. For |z| < 1e-6 the closed form
    cancels catastrophically, so the first-order expansion
    z/x(z) = 1 - rho*z/2 + O(z^2) is used there.
    """
    if abs(rho) > 0.95:
        raise ValueError(f"rho must lie in [-0.95, 0.95], got {rho!r}")
    if abs(z) < _Z_SERIES_THRESHOLD:
        return 1.0 - 0.5 * rho * z
    disc = 1.0 - 2.0 * rho * z + z * z
    if disc < 0.0:
        raise DomainError(f"1 - 2*rho*z + z^2 = {disc!r} < 0 at z={z!r}, rho={rho!r}")
    x = math.log((math.sqrt(disc) + z - rho) / (1.0 - rho))
    return z / x


def _one_minus_beta(beta: float) -> float:
    omb = 1.0 - beta
    return 0.0 if omb < _BETA_ONE_THRESHOLD else omb


def _maturity_bracket(p: SabrPoint, fk_pow_1mb: float, fk_pow_half: float) -> float:
    omb = _one_minus_beta(p.beta)
    term1 = omb * omb * p.alpha * p.alpha / (24.0 * fk_pow_1mb)
    term2 = p.rho * p.beta * p.nu * p.alpha / (4.0 * fk_pow_half)
    term3 = (2.0 - 3.0 * p.rho * p.rho) * p.nu * p.nu / 24.0
    return 1.0 + p.T * (term1 + term2 + term3)


def hagan_atm(p: SabrPoint) -> float:
    """At-the-money closed form; the strike field of ``p`` is ignored.

    Raises NegativeVol when the maturity bracket drives the result to zero
    or below, which signals leaving the expansion's validity domain.
    """
    omb = _one_minus_beta(p.beta)
    f_pow_1mb = p.F0**omb if omb > 0.0 else 1.0
    bracket = _maturity_bracket(p, f_pow_1mb * f_pow_1mb, f_pow_1mb)
    sigma = p.alpha / f_pow_1mb * bracket
    if sigma <= 0.0:
        raise NegativeVol(f"ATM bracket {bracket!r} makes the vol nonpositive")
    return sigma


def hagan_vol(p: SabrPoint, bracket: str = "numerator") -> float:
    """SABR implied volatility for one strike.

    Dispatches to :func:`hagan_atm` when |ln(F0/K)| < 1e-8 so the ATM point
    is evaluated with the exact reduced formula rather than a 0/0 limit.
    """
    return hagan_eval(p, bracket).sigma


def hagan_eval(p: SabrPoint, bracket: str = "numerator") -> HaganEval:
    """Like :func:`hagan_vol` but also returns z, x(z) and z/x(z)."""
    if bracket not in BRACKET_MODES:
        raise ValueError(f"bracket must be one of {BRACKET_MODES}, got {bracket!r}")
    log_fk = math.log(p.F0 / p.K)
    if abs(log_fk) < ATM_LOG_THRESHOLD:
        return HaganEval(z=0.0, x_of_z=0.0, ratio=1.0, sigma=hagan_atm(p))

    omb = _one_minus_beta(p.beta)
    if omb > 0.0:
        fk_pow_half = (p.F0 * p.K) ** (0.5 * omb)
        fk_pow_1mb = (p.F0 * p.K) ** omb
    else:
        fk_pow_half = 1.0
        fk_pow_1mb = 1.0

    z = p.nu / p.alpha * fk_pow_half * log_fk
    ratio = zx_ratio(z, p.rho)
    x_of_z = z / ratio if ratio != 0.0 else 0.0

    log2 = log_fk * log_fk
    moneyness_bracket = 1.0 + omb * omb / 24.0 * log2 + omb**4 / 1920.0 * log2 * log2
    core = p.alpha / fk_pow_half
    if bracket == "numerator":
        core *= moneyness_bracket
    else:
        core /= moneyness_bracket

    sigma = core * ratio * _maturity_bracket(p, fk_pow_1mb, fk_pow_half)
    if sigma <= 0.0:
        raise NegativeVol(f"smile formula returned nonpositive vol {sigma!r}")
    return HaganEval(z=z, x_of_z=x_of_z, ratio=ratio, sigma=sigma)
