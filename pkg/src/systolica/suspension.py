"""Singular 3-manifolds built as metric suspensions of Bavard's Klein bottle.

The manifold is ``(K, b) x R`` modulo ``(p, t) -> (f(p), t + d)`` for an
isometry ``f`` of the Klein bottle.  Product structure gives the length of
the shortest loop in the class of ``f^n`` as ``sqrt(disp(f^n)^2 + (n d)^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bieberbach_flat as flat
from .bavard_surface import (KLEIN_AREA, KLEIN_SYSTOLE, SQRT2, Kind, KleinIsometry, disp_rotation,
                             disp_T, rotation, rotation_crossing, screw, solve_delta0)
from .scan import ScanResult, grid_refine_max

TYPE_OF_KIND = {Kind.ROT: "B1", Kind.T: "B2", Kind.S1: "B3", Kind.S2: "B4"}
KIND_OF_TYPE = {v: k for k, v in TYPE_OF_KIND.items()}

FLAT_EXACT = {"B1": "2/sqrt(3)", "B2": "8/sqrt(39)", "B3": "1", "B4": "1"}
SINGULAR_EXACT = {
    "B1": "pi/(4*sqrt(sqrt(2)-1))",
    "B2": "pi^2/(2*sqrt(2)*d0)",
    "B3": "pi/(2*sqrt(2))",
    "B4": "pi/(2*sqrt(2))",
}
# required gap between singular and flat optima in the comparison table
TABLE_SLACK = 0.02


class RatioAssertionError(AssertionError):
    pass


@dataclass(frozen=True)
class SuspensionSpec:
    base_iso: KleinIsometry
    d: float

    def __post_init__(self):
        if not (self.d > 0 and math.isfinite(self.d)):
            raise ValueError(f"suspension length d must be positive, got {self.d}")
        if self.base_iso.kind not in TYPE_OF_KIND:
            raise ValueError(f"{self.base_iso.kind.value} does not give a Bieberbach type")

    @property
    def type_tag(self) -> str:
        return TYPE_OF_KIND[self.base_iso.kind]

    def as_dict(self) -> dict:
        out = {"iso": self.base_iso.kind.value, "d": self.d}
        if self.base_iso.kind in (Kind.ROT, Kind.T):
            out["angle"] = self.base_iso.param
        return out


def power_displacement(iso: KleinIsometry, n: int) -> float:
    """Displacement on (K, b) of the n-th power of ``iso``.

    ``T_delta^2`` differs from ``r_{2 delta}`` by a deck translation, so even
    powers of the screw are rotations.  S1 and S2 are involutions with fixed
    points, so all their powers have displacement 0.
    """
    n = abs(int(n))
    if n == 0 or iso.kind in (Kind.S1, Kind.S2):
        return 0.0
    if iso.kind is Kind.ROT:
        return float(disp_rotation(n * iso.param))
    if iso.kind is Kind.T:
        return float(disp_rotation(n * iso.param) if n % 2 == 0 else disp_T(n * iso.param))
    raise ValueError(f"no displacement rule for {iso.kind.value}")


def max_power(d: float) -> int:
    """Last power worth checking: beyond it ``n d`` alone exceeds the base systole."""
    return math.ceil(KLEIN_SYSTOLE / d) + 1


def suspension_volume(spec: SuspensionSpec) -> float:
    return KLEIN_AREA * spec.d


def suspension_systole(spec: SuspensionSpec) -> float:
    best = KLEIN_SYSTOLE
    for n in range(1, max_power(spec.d) + 1):
        best = min(best, math.hypot(power_displacement(spec.base_iso, n), n * spec.d))
    return best


def higher_powers_clear(spec: SuspensionSpec) -> bool:
    """True when ``n d > pi`` for every ``n >= 2``, so only the first power can bind."""
    return 2 * spec.d > KLEIN_SYSTOLE


def singular_ratio(spec: SuspensionSpec) -> float:
    return suspension_systole(spec) ** 3 / suspension_volume(spec)


def optimal_singular_ratio(type_tag: str) -> float:
    """Closed-form value of the best suspension ratio for each type."""
    t = flat.check_type(type_tag)
    if t == "B1":
        return math.pi / (4 * math.sqrt(SQRT2 - 1))
    if t == "B2":
        return math.pi ** 2 / (2 * SQRT2 * solve_delta0()[1])
    return math.pi / (2 * SQRT2)


def optimize_suspension(type_tag: str) -> tuple[SuspensionSpec, float]:
    """Best suspension of the given type with systole pi.

    The ratio at systole pi is ``pi^3 / (area * d)``, so the shortest ``d``
    with ``disp(f)^2 + d^2 >= pi^2`` wins, and the base isometry should have
    the largest displacement.
    """
    t = flat.check_type(type_tag)
    if t == "B1":
        alpha = rotation_crossing()
        d = math.sqrt(math.pi ** 2 - disp_rotation(alpha) ** 2)
        spec = SuspensionSpec(rotation(alpha), d)
    elif t == "B2":
        delta0, d0 = solve_delta0()
        spec = SuspensionSpec(screw(delta0), d0)
    else:
        spec = SuspensionSpec(KleinIsometry(KIND_OF_TYPE[t]), math.pi)
    return spec, singular_ratio(spec)


@dataclass
class RatioReport:
    type_tag: str
    flat_exact: str
    flat_value: float
    singular_exact: str
    singular_value: float
    argmax: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.singular_value > self.flat_value + TABLE_SLACK

    def as_json(self) -> dict:
        return {"type": self.type_tag, "flat_exact": self.flat_exact, "flat_value": self.flat_value,
                "singular_exact": self.singular_exact, "singular_value": self.singular_value,
                "argmax": self.argmax}


def table_report(types=None, check: bool = True) -> list[RatioReport]:
    """Flat versus singular optimum for each type.

    With ``check`` set, raises RatioAssertionError unless every singular ratio
    beats its flat counterpart by at least TABLE_SLACK.
    """
    rows = []
    for t in (flat.TYPES if types is None else [flat.check_type(x) for x in types]):
        fv, fspec = flat.optimal_flat_ratio(t)
        sspec, sv = optimize_suspension(t)
        argmax = {"flat": fspec.as_dict(), "singular": sspec.as_dict()}
        rows.append(RatioReport(t, FLAT_EXACT[t], fv, SINGULAR_EXACT[t], sv, argmax))
    if check:
        bad = [r.type_tag for r in rows if not r.holds]
        if bad:
            raise RatioAssertionError(f"singular ratio does not beat flat optimum for {', '.join(bad)}")
    return rows


# ---------------------------------------------------------------------------
# scans

def _systole_batch(disp_of_power, d: np.ndarray) -> np.ndarray:
    sys = np.full(d.shape, KLEIN_SYSTOLE)
    for n in range(1, max_power(float(d.min())) + 1):
        sys = np.minimum(sys, np.hypot(disp_of_power(n), n * d))
    return sys


def _ratio_rot(x: np.ndarray) -> np.ndarray:
    alpha, d = x[:, 0], x[:, 1]
    sys = _systole_batch(lambda n: disp_rotation(n * alpha), d)
    return sys ** 3 / (KLEIN_AREA * d)


def _ratio_screw(x: np.ndarray) -> np.ndarray:
    delta, d = x[:, 0], x[:, 1]

    def disp(n):
        return disp_rotation(n * delta) if n % 2 == 0 else disp_T(n * delta)

    sys = _systole_batch(disp, d)
    return sys ** 3 / (KLEIN_AREA * d)


def _ratio_fixed(x: np.ndarray) -> np.ndarray:
    d = x[:, 0]
    return np.minimum(KLEIN_SYSTOLE, d) ** 3 / (KLEIN_AREA * d)


D_MIN, D_MAX = 0.1, 2 * math.pi
SINGULAR_DOMAINS = {
    "B1": (("alpha", "d"), (0.0, D_MIN), (math.pi, D_MAX)),
    "B2": (("delta", "d"), (0.0, D_MIN), (math.pi, D_MAX)),
    "B3": (("d",), (D_MIN,), (D_MAX,)),
    "B4": (("d",), (D_MIN,), (D_MAX,)),
}
_OBJECTIVES = {"B1": _ratio_rot, "B2": _ratio_screw, "B3": _ratio_fixed, "B4": _ratio_fixed}


def scan_objective(type_tag: str):
    return _OBJECTIVES[flat.check_type(type_tag)]


def spec_from_scan(type_tag: str, x) -> SuspensionSpec:
    t = flat.check_type(type_tag)
    x = [float(c) for c in x]
    if t == "B1":
        return SuspensionSpec(rotation(x[0]), x[1])
    if t == "B2":
        return SuspensionSpec(screw(x[0]), x[1])
    return SuspensionSpec(KleinIsometry(KIND_OF_TYPE[t]), x[0])


def scan_singular_ratio(type_tag: str, grid: int = 64, rounds: int = 3,
                        keep_history: bool = False) -> tuple[ScanResult, SuspensionSpec]:
    t = flat.check_type(type_tag)
    _, lo, hi = SINGULAR_DOMAINS[t]
    res = grid_refine_max(_OBJECTIVES[t], lo, hi, grid=grid, rounds=rounds, keep_history=keep_history)
    return res, spec_from_scan(t, res.best_x)
