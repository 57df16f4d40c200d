"""Geometry-driven smile features.

The SABR state space carries a hyperbolic structure: after flattening the
forward with the CEV integral and rotating out the correlation, the
dynamics live on the Poincare upper half-plane. The quadruple computed
here (flattened strike coordinate, minimizing terminal volatility,
geodesic distance, leading-order implied vol) summarizes that structure
per strike and is used as an enriched network input.

All quantities are evaluated on the strike manifold, i.e. at F = K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .hagan import ATM_LOG_THRESHOLD, SabrPoint

__all__ = [
    "GeomFeatures",
    "HalfPlanePoint",
    "features",
    "geodesic_distance",
    "q_transform",
    "sigma0_leading",
    "sigma_min",
    "to_halfplane",
]

# Same switch point as the CEV integral's closed form: below this the
# power form loses ~1/(1-beta) digits to cancellation.
_BETA_ONE_THRESHOLD = 1e-9


@dataclass(frozen=True)
class GeomFeatures:
    """Feature quadruple (q, sigma_min, d_h, sigma0) for one strike.

    ``d_h`` is signed: negative for strikes below the forward, zero only
    at q = 0. ``sigma0`` stays positive because the log-moneyness flips
    sign together with the distance.
    """

    q: float
    sigma_min: float
    d_h: float
    sigma0: float


@dataclass(frozen=True)
class HalfPlanePoint:
    """Poincare upper half-plane coordinates (u, v), v > 0."""

    u: float
    v: float

    def __post_init__(self) -> None:
        if not self.v > 0.0:
            raise ValueError(f"v must be positive, got {self.v!r}")


def q_transform(F0: float, K: float, beta: float) -> float:
    """CEV-flattened strike coordinate, the integral of f^(-beta) from F0 to K."""
    if F0 <= 0.0 or K <= 0.0:
        raise ValueError("F0 and K must be positive")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta!r}")
    omb = 1.0 - beta
    if omb < _BETA_ONE_THRESHOLD:
        return math.log(K / F0)
    return (K**omb - F0**omb) / omb


def sigma_min(alpha: float, rho: float, q: float) -> float:
    """Terminal volatility minimizing the hyperbolic action to the strike.

    Closed form sqrt(alpha^2 + 2*rho*alpha*q + q^2); bounded below by
    alpha*sqrt(1-rho^2).
    """
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if abs(rho) > 0.95:
        raise ValueError(f"rho must lie in [-0.95, 0.95], got {rho!r}")
    return math.sqrt(alpha * alpha + 2.0 * rho * alpha * q + q * q)


def geodesic_distance(alpha: float, rho: float, q: float) -> float:
    """Signed hyperbolic geodesic distance from (0, alpha) to the strike manifold.

    ln((sigma_min + rho*alpha + q) / ((1+rho)*alpha)); zero exactly at
    q = 0, negative for q < 0. The magnitude equals the half-plane
    distance between (0, alpha) and (q, sigma_min).
    """
    smin = sigma_min(alpha, rho, q)
    arg = (smin + rho * alpha + q) / ((1.0 + rho) * alpha)
    if arg <= 0.0:
        raise DomainError(f"geodesic log argument {arg!r} <= 0 at q={q!r}")
    return math.log(arg)


def sigma0_leading(p: SabrPoint, q: float, d_h: float) -> float:
    """Leading-order implied vol ln(K/F0)/d_h, with ATM limit alpha*F0^(beta-1)."""
    log_kf = math.log(p.K / p.F0)
    if abs(log_kf) < ATM_LOG_THRESHOLD:
        return p.alpha * p.F0 ** (p.beta - 1.0)
    if d_h == 0.0:
        raise DomainError("zero geodesic distance away from the money")
    return log_kf / d_h


def features(p: SabrPoint) -> GeomFeatures:
    """Full feature quadruple for one pricing configuration."""
    q = q_transform(p.F0, p.K, p.beta)
    smin = sigma_min(p.alpha, p.rho, q)
    if abs(math.log(p.K / p.F0)) < ATM_LOG_THRESHOLD:
        # Exact ATM values; the generic path would divide 0 by 0.
        return GeomFeatures(
            q=q,
            sigma_min=smin,
            d_h=0.0,
            sigma0=p.alpha * p.F0 ** (p.beta - 1.0),
        )
    d_h = geodesic_distance(p.alpha, p.rho, q)
    return GeomFeatures(q=q, sigma_min=smin, d_h=d_h, sigma0=sigma0_leading(p, q, d_h))


def to_halfplane(q: float, sigma: float, rho: float) -> HalfPlanePoint:
    """Rotate flattened coordinates (q, sigma) into half-plane coordinates."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if abs(rho) > 0.95:
        raise ValueError(f"rho must lie in [-0.95, 0.95], got {rho!r}")
    return HalfPlanePoint(u=(q - rho * sigma) / math.sqrt(1.0 - rho * rho), v=sigma)
