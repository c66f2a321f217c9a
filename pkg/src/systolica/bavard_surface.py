"""Geometry of Bavard's singular Klein bottle and its coverings.

The singular surface carries the metric ``dphi^2 + f(phi)^2 dtheta^2`` where
``f`` is the ``2*phi0``-periodic extension of ``cos`` on ``[-phi0, phi0]``.
Geometrically it is a stack of spherical zones ``{|z| <= sin(phi0)}`` glued
along their boundary circles (the singular circles).  Three quotients matter:

* the cylinder ``C`` (all zones, longitude mod 2*pi),
* the torus ``T`` (``C`` modulo a shift by two zones),
* the Klein bottle ``K`` (``C`` modulo the antipodal maps about zone centres).

Points are stored zone-locally as ``(theta, phi, patch)`` with ``|phi| <= phi0``;
the global latitude is ``phi + 2 * patch * phi0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import bisect

PHI0 = math.pi / 4
TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)

#: systole and area of (K, b) with phi0 = pi/4
KLEIN_SYSTOLE = math.pi
KLEIN_AREA = 2.0 * math.pi * SQRT2

ROOT_XTOL = 1e-12


def _wrap(theta: float) -> float:
    return theta % TWO_PI


def canonical_angle(angle):
    """Fold an angle into ``[0, pi]`` using ``angle ~ 2*pi - angle``."""
    a = np.mod(angle, TWO_PI)
    return np.where(a > math.pi, TWO_PI - a, a) if np.ndim(a) else float(min(a, TWO_PI - a))


@dataclass(frozen=True)
class SurfacePoint:
    theta: float
    phi: float
    patch: int = 0
    phi0: float = PHI0

    def __post_init__(self):
        if abs(self.phi) > self.phi0 + 1e-12:
            raise ValueError(f"|phi| = {abs(self.phi)} exceeds phi0 = {self.phi0}")

    @classmethod
    def from_global(cls, theta: float, phi_global: float, phi0: float = PHI0) -> "SurfacePoint":
        patch = math.floor((phi_global + phi0) / (2 * phi0))
        local = phi_global - 2 * patch * phi0
        # points on a singular circle are reported in the lower zone's top edge
        if local > phi0:
            local = phi0
        return cls(_wrap(theta), local, patch, phi0)

    @property
    def phi_global(self) -> float:
        return self.phi + 2 * self.patch * self.phi0

    def xyz(self) -> np.ndarray:
        """Position in R^3 on the stacked-spheres model of the cylinder."""
        c = math.cos(self.phi)
        return np.array([
            c * math.cos(self.theta),
            c * math.sin(self.theta),
            math.sin(self.phi) + 2 * self.patch * math.sin(self.phi0),
        ])

    def on_torus(self) -> "SurfacePoint":
        """Representative with global latitude in ``[-phi0, 3*phi0)``."""
        period = 4 * self.phi0
        g = (self.phi_global + self.phi0) % period - self.phi0
        return SurfacePoint.from_global(self.theta, g, self.phi0)

    def on_klein(self) -> "SurfacePoint":
        """Canonical representative on (K, b).

        Global latitude is brought into ``[0, 2*phi0]``; on the two fixed
        circles (latitude 0 and 2*phi0) the longitude is reduced mod pi.
        """
        period = 4 * self.phi0
        theta = self.theta
        g = self.phi_global % period
        if g > 2 * self.phi0:
            # antipody about the centre of zone 1
            g = period - g
            theta += math.pi
        theta = _wrap(theta)
        if math.isclose(g, 0.0, abs_tol=1e-12) or math.isclose(g, 2 * self.phi0, abs_tol=1e-12):
            theta %= math.pi
        return SurfacePoint.from_global(theta, g, self.phi0)


@dataclass(frozen=True)
class CylinderMap:
    """Isometry of the cylinder acting as ``(theta, g) -> (es*theta + a, ps*g + b)``.

    ``g`` is the global latitude; ``b`` must be a multiple of ``2*phi0`` for
    the map to respect the zone structure.
    """

    theta_sign: int
    theta_shift: float
    phi_sign: int
    phi_shift: float
    phi0: float = PHI0

    def __call__(self, p: SurfacePoint) -> SurfacePoint:
        theta = self.theta_sign * p.theta + self.theta_shift
        g = self.phi_sign * p.phi_global + self.phi_shift
        return SurfacePoint.from_global(theta, g, self.phi0)

    def compose(self, other: "CylinderMap") -> "CylinderMap":
        """``self o other``."""
        return CylinderMap(
            self.theta_sign * other.theta_sign,
            _wrap(self.theta_sign * other.theta_shift + self.theta_shift),
            self.phi_sign * other.phi_sign,
            self.phi_sign * other.phi_shift + self.phi_shift,
            self.phi0,
        )

    def inverse(self) -> "CylinderMap":
        return CylinderMap(
            self.theta_sign,
            _wrap(-self.theta_sign * self.theta_shift),
            self.phi_sign,
            -self.phi_sign * self.phi_shift,
            self.phi0,
        )

    def power(self, n: int) -> "CylinderMap":
        if n < 0:
            return self.inverse().power(-n)
        out = CylinderMap(1, 0.0, 1, 0.0, self.phi0)
        for _ in range(n):
            out = self.compose(out)
        return out

    def is_klein_deck(self, tol: float = 1e-9) -> bool:
        """True if the map is a deck transformation of ``C -> K``."""
        if self.theta_sign != 1:
            return False
        k = self.phi_shift / (4 * self.phi0)
        if abs(k - round(k)) > tol:
            return False
        want = 0.0 if self.phi_sign == 1 else math.pi
        a = self.theta_shift % TWO_PI
        return min(abs(a - want), TWO_PI - abs(a - want)) < tol


class Kind(str, Enum):
    ROT = "Rot"
    T = "T"
    S1 = "S1"
    S2 = "S2"
    SIGMA = "Sigma"


@dataclass(frozen=True)
class KleinIsometry:
    """Named isometry of (K, b): rotation r_alpha, screw T_delta, S1, S2, sigma."""

    kind: Kind
    param: float = 0.0
    phi0: float = PHI0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "param", _wrap(self.param))

    def lift(self) -> CylinderMap:
        z = 2 * self.phi0
        if self.kind is Kind.ROT:
            return CylinderMap(1, self.param, 1, 0.0, self.phi0)
        if self.kind is Kind.T:
            return CylinderMap(1, self.param, 1, z, self.phi0)
        if self.kind is Kind.S1:
            # reflection in a meridian plane
            return CylinderMap(-1, 0.0, 1, 0.0, self.phi0)
        if self.kind is Kind.S2:
            # half-turn about a diameter of the singular circle between zones 0 and 1
            return CylinderMap(-1, 0.0, -1, z, self.phi0)
        return CylinderMap(1, math.pi, -1, 0.0, self.phi0)

    def __call__(self, p: SurfacePoint) -> SurfacePoint:
        return self.lift()(p)


def rotation(alpha: float) -> KleinIsometry:
    return KleinIsometry(Kind.ROT, alpha)


def screw(delta: float) -> KleinIsometry:
    return KleinIsometry(Kind.T, delta)


def _check_range(name: str, value: float, lo: float, hi: float, tol: float = 1e-12):
    if not (lo - tol <= value <= hi + tol) or math.isnan(value):
        raise ValueError(f"{name} = {value} outside [{lo}, {hi}]")


def rotation_regime_bound(alpha: float) -> float:
    """Latitude above which the shortest path from p to r_alpha(p) uses the singular circle."""
    return math.atan(math.cos(alpha / 2))


def dist_rotation_regime1(beta: float, alpha: float) -> float:
    """Great-circle distance between two points of latitude beta, longitude gap alpha."""
    # chord form: stays accurate for small alpha where arccos loses half its digits
    return 2 * math.asin(min(1.0, math.cos(beta) * math.sin(alpha / 2)))


def dist_rotation_regime2(beta: float, alpha: float) -> float:
    """Two arcs tangent to the singular circle joined by an arc of that circle.

    ``arccos(tan beta)`` and ``arccos(sqrt2 sin beta)`` are evaluated through
    ``arccos(x) = 2 asin(sqrt((1 - x)/2))`` with ``1 - x`` in product form, so
    the value stays accurate as beta approaches pi/4.
    """
    gap = PHI0 - beta
    one_minus_tan = SQRT2 * math.sin(gap) / math.cos(beta)
    one_minus_sin = 2 * SQRT2 * math.cos((PHI0 + beta) / 2) * math.sin(gap / 2)
    acos_tan = 2 * math.asin(math.sqrt(max(0.0, one_minus_tan) / 2))
    acos_sin = 2 * math.asin(math.sqrt(max(0.0, one_minus_sin) / 2))
    return alpha / SQRT2 - SQRT2 * acos_tan + 2 * acos_sin


def dist_rotation(beta: float, alpha: float) -> float:
    """Distance on (C, b) between a point of latitude beta and its image under r_alpha."""
    _check_range("beta", beta, 0.0, PHI0)
    _check_range("alpha", alpha, 0.0, math.pi)
    beta = min(max(beta, 0.0), PHI0)
    alpha = min(max(alpha, 0.0), math.pi)
    if beta >= rotation_regime_bound(alpha):
        return dist_rotation_regime2(beta, alpha)
    return dist_rotation_regime1(beta, alpha)


def dist_T(delta: float) -> float:
    """Constant value of dist(p, T_delta(p)) on (T, b)."""
    _check_range("delta", delta, 0.0, math.pi)
    return math.acos(min(1.0, max(-1.0, (math.cos(delta) - 1) / 2)))


def delta_from_beta(beta: float) -> float:
    """Rotation angle of the screw T_delta leaving invariant the zig-zag geodesic
    that crosses the singular circles at angle beta.

    Solves ``tan(delta) = -2*sqrt(2)*cot(beta) / (cot(beta)^2 - 2)`` on the
    continuous branch ``delta = 2*arctan(cot(beta)/sqrt(2))``, which decreases
    from pi (beta -> 0) through pi/2 (cot^2 = 2) to 0 (beta = pi/2).
    """
    if not 0.0 < beta <= math.pi / 2:
        raise ValueError(f"beta = {beta} outside (0, pi/2]")
    return 2.0 * math.atan(1.0 / (math.tan(beta) * SQRT2))


def disp_rotation(alpha):
    """Displacement of r_alpha on (K, b): ``min(alpha/sqrt2, pi - alpha)``.

    Accepts arrays; angles are folded into ``[0, pi]`` first.
    """
    a = canonical_angle(alpha)
    return np.minimum(a / SQRT2, math.pi - a) if np.ndim(a) else min(a / SQRT2, math.pi - a)


def disp_T(delta):
    """Displacement of T_delta on (K, b): ``min((pi - delta)/sqrt2, arccos((cos delta - 1)/2))``."""
    d = canonical_angle(delta)
    if np.ndim(d):
        return np.minimum((math.pi - d) / SQRT2, np.arccos((np.cos(d) - 1) / 2))
    return min((math.pi - d) / SQRT2, dist_T(d))


def _t_branch_gap(delta: float) -> float:
    return (math.cos(delta) - 1) / 2 - math.cos((math.pi - delta) / SQRT2)


def solve_delta0() -> tuple[float, float]:
    """Angle maximising disp_T and the matching minimal suspension length.

    Returns ``(delta0, d0)`` with ``d0 = sqrt(pi^2 - disp_T(delta0)^2)``.
    """
    lo, hi = 0.0, math.pi
    if _t_branch_gap(lo) * _t_branch_gap(hi) >= 0:
        raise RuntimeError("crossing equation not bracketed on [0, pi]")
    delta0 = bisect(_t_branch_gap, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    d0 = math.sqrt(math.pi**2 - disp_T(delta0) ** 2)
    return delta0, d0


def rotation_crossing() -> float:
    """Angle where the two branches of disp_rotation meet (the maximiser)."""
    def gap(a):
        return a / SQRT2 - (math.pi - a)

    return bisect(gap, 0.0, math.pi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
