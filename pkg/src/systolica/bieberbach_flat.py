"""The four non-orientable flat 3-manifold families B1-B4.

Each family is a crystallographic group generated by glide reflections and
translations.  Volumes and systoles are available in closed form and, as a
cross-check, by enumerating group elements.  Coordinates: ``a1`` lies on the
x axis, ``a2`` in the xy plane, and the reflection planes are horizontal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .euclid_lattice import (AffineIsometry, Lattice, coset_shortest, fixed_projector)
from .scan import ScanResult, grid_refine_max

TYPES = ("B1", "B2", "B3", "B4")

MODULI_NAMES = {
    "B1": ("a1", "a3", "lam", "v"),
    "B2": ("a1", "lam", "v", "d"),
    "B3": ("a1", "a2", "a3"),
    "B4": ("a1", "a2", "h"),
}
# index of the moduli that are lengths (lam is a dimensionless shear)
_LENGTHS = {"B1": (0, 1, 3), "B2": (0, 2, 3), "B3": (0, 1, 2), "B4": (0, 1, 2)}

REFLECT_Z = np.diag([1.0, 1.0, -1.0])
REFLECT_YZ = np.diag([1.0, -1.0, -1.0])


def check_type(type_tag: str) -> str:
    t = str(type_tag).upper()
    if t not in TYPES:
        raise ValueError(f"unknown type {type_tag!r}; expected one of {', '.join(TYPES)}")
    return t


@dataclass(frozen=True)
class BieberbachSpec:
    """Marked flat metric of type B1-B4.

    Moduli, in order:

    * B1: ``|a1|, |a3|, lam, |v|`` with ``a2 = lam*a1 + v``, ``v`` orthogonal to ``a1``
    * B2: ``|a1|, lam, |v|, d`` with ``a2`` as for B1 and ``d`` the distance
      between the two reflection planes
    * B3: ``|a1|, |a2|, |a3|`` (orthogonal)
    * B4: ``|a1|, |a2|, h`` with ``h`` the distance from the plane of the
      pure glide to the axis of the screw glide, so ``|a3| = 4h``
    """

    type_tag: str
    moduli: tuple[float, ...]

    def __post_init__(self):
        t = check_type(self.type_tag)
        m = tuple(float(x) for x in self.moduli)
        if len(m) != len(MODULI_NAMES[t]):
            raise ValueError(f"{t} takes {len(MODULI_NAMES[t])} moduli {MODULI_NAMES[t]}, got {len(m)}")
        if not all(math.isfinite(x) for x in m):
            raise ValueError("moduli must be finite")
        for i in _LENGTHS[t]:
            if m[i] <= 0:
                raise ValueError(f"{t} modulus {MODULI_NAMES[t][i]} must be > 0, got {m[i]}")
        object.__setattr__(self, "type_tag", t)
        object.__setattr__(self, "moduli", m)

    def scaled(self, t: float) -> "BieberbachSpec":
        if t <= 0:
            raise ValueError("scale must be positive")
        idx = _LENGTHS[self.type_tag]
        return BieberbachSpec(self.type_tag, tuple(x * t if i in idx else x for i, x in enumerate(self.moduli)))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(MODULI_NAMES[self.type_tag], self.moduli))


@dataclass(frozen=True)
class GroupPresentation:
    generators: list[AffineIsometry]
    lattice: Lattice


def lattice_vectors(spec: BieberbachSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The basis ``a1, a2, a3`` of the translation lattice."""
    t, m = spec.type_tag, spec.moduli
    if t == "B1":
        a1, a3, lam, v = m
        return np.array([a1, 0, 0.0]), np.array([lam * a1, v, 0.0]), np.array([0, 0, a3])
    if t == "B2":
        a1, lam, v, d = m
        b1, b2 = np.array([a1, 0, 0.0]), np.array([lam * a1, v, 0.0])
        return b1, b2, (b1 + b2) / 2 + np.array([0, 0, 2 * d])
    if t == "B3":
        a1, a2, a3 = m
    else:
        a1, a2, h = m
        a3 = 4 * h
    return np.array([a1, 0, 0.0]), np.array([0, a2, 0.0]), np.array([0, 0, a3])


def build_group(spec: BieberbachSpec) -> GroupPresentation:
    a1, a2, a3 = lattice_vectors(spec)
    t = spec.type_tag
    if t == "B1":
        gens = [AffineIsometry(REFLECT_Z, a1 / 2), AffineIsometry.translation(a2),
                AffineIsometry.translation(a3)]
    elif t == "B2":
        d = spec.moduli[3]
        gens = [AffineIsometry(REFLECT_Z, a1 / 2),
                AffineIsometry(REFLECT_Z, a2 / 2 + np.array([0, 0, 2 * d]))]
    elif t == "B3":
        gens = [AffineIsometry(REFLECT_YZ, a1 / 2), AffineIsometry(REFLECT_Z, a2 / 2),
                AffineIsometry.translation(a3)]
    else:
        h = spec.moduli[2]
        gens = [AffineIsometry(REFLECT_YZ, a1 / 2 + np.array([0, 0, 2 * h])),
                AffineIsometry(REFLECT_Z, a2 / 2), AffineIsometry.translation(a3)]
    return GroupPresentation(gens, Lattice(np.stack([a1, a2, a3])))


def point_group(group: GroupPresentation) -> list[AffineIsometry]:
    """One element per point-group class, from words of length <= 2.

    The identity comes first.  Raises if the linear parts found are not
    closed under multiplication.
    """
    dim = group.lattice.basis.shape[1]
    words = [AffineIsometry.translation(np.zeros(dim))] + list(group.generators)
    words += [g @ h for g in group.generators for h in group.generators]
    reps: list[AffineIsometry] = []
    for w in words:
        if not any(np.allclose(w.linear, r.linear, atol=1e-12) for r in reps):
            reps.append(w)
    for r in reps:
        for s in reps:
            prod = r.linear @ s.linear
            if not any(np.allclose(prod, q.linear, atol=1e-12) for q in reps):
                raise RuntimeError("point group representatives are not closed")
    return reps


def flat_volume(spec: BieberbachSpec) -> float:
    t, m = spec.type_tag, spec.moduli
    if t == "B1":
        a1, a3, _, v = m
        return 0.5 * a1 * v * a3
    if t == "B2":
        a1, _, v, d = m
        return a1 * v * d
    if t == "B3":
        return m[0] * m[1] * m[2] / 4
    return m[0] * m[1] * m[2]


def presentation_volume(group: GroupPresentation) -> float:
    """Covolume of the lattice divided by the order of the point group."""
    return group.lattice.covolume / len(point_group(group))


def flat_systole_closed(spec: BieberbachSpec) -> float:
    t, m = spec.type_tag, spec.moduli
    a1, a2, _ = lattice_vectors(spec)
    if t == "B1":
        half_torus = Lattice([a1[:2] / 2, a2[:2]])
        return min(m[1], coset_shortest(half_torus))
    if t == "B2":
        d = m[3]
        plane = Lattice([a1[:2], a2[:2]])
        diag = coset_shortest(plane, (a1[:2] + a2[:2]) / 2)
        return min(coset_shortest(plane, a1[:2] / 2), coset_shortest(plane, a2[:2] / 2), 4 * d,
                   math.hypot(diag, 2 * d), coset_shortest(plane))
    a3 = m[2] if t == "B3" else 4 * m[2]
    return min(m[0] / 2, m[1] / 2, a3)


def flat_systole_enum(spec: BieberbachSpec) -> float:
    """Smallest displacement over nontrivial group elements.

    Every element is ``r o t_l`` with ``r`` a point-group representative and
    ``l`` in the lattice; its displacement is the length of the fixed-space
    component of ``shift(r) + linear(r) l``, minimised over ``l`` exactly.
    """
    group = build_group(spec)
    best = math.inf
    for r in point_group(group):
        if r.is_translation():
            best = min(best, coset_shortest(group.lattice))
        else:
            proj = fixed_projector(r.linear)
            best = min(best, coset_shortest(group.lattice, r.shift, proj))
    return best


def flat_ratio(spec: BieberbachSpec) -> float:
    return flat_systole_closed(spec) ** 3 / flat_volume(spec)


COS_B2 = -15 / 24


def optimal_flat_ratio(type_tag: str) -> tuple[float, BieberbachSpec]:
    """Closed-form optimum of the flat ratio and a metric attaining it."""
    t = check_type(type_tag)
    if t == "B1":
        return 2 / math.sqrt(3), BieberbachSpec("B1", (2.0, 1.0, 0.25, math.sqrt(3) / 2))
    if t == "B2":
        return 8 / math.sqrt(39), BieberbachSpec("B2", (1.0, COS_B2, math.sqrt(1 - COS_B2 ** 2), 0.125))
    if t == "B3":
        return 1.0, BieberbachSpec("B3", (2.0, 2.0, 1.0))
    return 1.0, BieberbachSpec("B4", (2.0, 2.0, 0.25))


# ---------------------------------------------------------------------------
# vectorised objectives over normalised moduli

def _gauss_batch(u: np.ndarray, v: np.ndarray, max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    u, v = u.copy(), v.copy()
    for _ in range(max_iter):
        nu, nv = np.einsum("ij,ij->i", u, u), np.einsum("ij,ij->i", v, v)
        swap = nv < nu
        u[swap], v[swap] = v[swap].copy(), u[swap].copy()
        nu = np.where(swap, nv, nu)
        mu = np.einsum("ij,ij->i", u, v) / nu
        k = np.where(np.abs(mu) > 0.5, np.round(mu), 0.0)
        v -= k[:, None] * u
        if not swap.any() and not k.any():
            return u, v
    raise RuntimeError("batched Gauss reduction did not converge")


def _coset_batch(u: np.ndarray, v: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``min |t + l|`` over the planar lattice with reduced basis ``u, v``."""
    det = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    c1 = (t[:, 0] * v[:, 1] - t[:, 1] * v[:, 0]) / det
    c2 = (u[:, 0] * t[:, 1] - u[:, 1] * t[:, 0]) / det
    f1, f2 = np.floor(c1), np.floor(c2)
    best = np.full(len(t), np.inf)
    # the closest point of a reduced lattice is a corner of the enclosing cell
    for i in (-1, 0, 1, 2):
        for j in (-1, 0, 1, 2):
            r = t - (f1 + i)[:, None] * u - (f2 + j)[:, None] * v
            best = np.minimum(best, np.hypot(r[:, 0], r[:, 1]))
    return best


def _ratio_b1(x: np.ndarray) -> np.ndarray:
    a1, lam, v = x[:, 0], x[:, 1], x[:, 2]
    u = np.stack([a1 / 2, np.zeros_like(a1)], axis=1)
    w = np.stack([lam * a1, v], axis=1)
    u, _ = _gauss_batch(u, w)
    s = np.minimum(1.0, np.hypot(u[:, 0], u[:, 1]))
    return s ** 3 / (0.5 * a1 * v)


def _ratio_b2_raw(x: np.ndarray) -> np.ndarray:
    """B2 ratio at ``|a1| = 1`` for any ``(lam, v, d)``, without the normalisation filter."""
    lam, v, d = x[:, 0], x[:, 1], x[:, 2]
    a1 = np.stack([np.ones_like(lam), np.zeros_like(lam)], axis=1)
    a2 = np.stack([lam, v], axis=1)
    u, w = _gauss_batch(a1, a2)
    diag = _coset_batch(u, w, (a1 + a2) / 2)
    s = np.minimum.reduce([_coset_batch(u, w, a1 / 2), _coset_batch(u, w, a2 / 2), 4 * d,
                           np.hypot(diag, 2 * d), np.hypot(u[:, 0], u[:, 1])])
    return s ** 3 / (v * d)


def _ratio_b2(x: np.ndarray) -> np.ndarray:
    out = _ratio_b2_raw(x)
    lam, v = x[:, 0], x[:, 1]
    # |a2| >= |a1| picks one of the two mirror-image optima
    return np.where(lam * lam + v * v >= 1.0, out, -np.inf)


def _ratio_b34(x: np.ndarray) -> np.ndarray:
    a1, a2 = x[:, 0], x[:, 1]
    s = np.minimum.reduce([a1 / 2, a2 / 2, np.ones_like(a1)])
    return s ** 3 / (a1 * a2 / 4)


# normalised scan coordinates, bounds and the map back to moduli
SCAN_DOMAINS = {
    "B1": (("a1", "lam", "v"), (0.25, 0.0, 0.1), (3.0, 0.5, 2.0)),
    "B2": (("lam", "v", "d"), (-1.0, 0.05, 0.01), (0.0, 2.0, 0.5)),
    "B3": (("a1", "a2"), (0.25, 0.25), (4.0, 4.0)),
    "B4": (("a1", "a2"), (0.25, 0.25), (4.0, 4.0)),
}
_OBJECTIVES = {"B1": _ratio_b1, "B2": _ratio_b2, "B3": _ratio_b34, "B4": _ratio_b34}


def scan_objective(type_tag: str):
    """Vectorised flat ratio as a function of the normalised scan coordinates."""
    return _OBJECTIVES[check_type(type_tag)]


def spec_from_scan(type_tag: str, x) -> BieberbachSpec:
    t = check_type(type_tag)
    x = [float(c) for c in x]
    if t == "B1":
        return BieberbachSpec(t, (x[0], 1.0, x[1], x[2]))
    if t == "B2":
        return BieberbachSpec(t, (1.0, x[0], x[1], x[2]))
    if t == "B3":
        return BieberbachSpec(t, (x[0], x[1], 1.0))
    return BieberbachSpec(t, (x[0], x[1], 0.25))


def scan_flat_ratio(type_tag: str, grid: int = 64, rounds: int = 3,
                    keep_history: bool = False) -> tuple[ScanResult, BieberbachSpec]:
    t = check_type(type_tag)
    _, lo, hi = SCAN_DOMAINS[t]
    res = grid_refine_max(_OBJECTIVES[t], lo, hi, grid=grid, rounds=rounds, keep_history=keep_history)
    return res, spec_from_scan(t, res.best_x)


def random_spec(type_tag: str, rng: np.random.Generator) -> BieberbachSpec:
    """A random metric of the given type, with moduli of order one."""
    t = check_type(type_tag)
    if t == "B1":
        m = (rng.uniform(0.2, 3), rng.uniform(0.2, 3), rng.uniform(-2, 2), rng.uniform(0.05, 3))
    elif t == "B2":
        m = (rng.uniform(0.2, 3), rng.uniform(-2, 2), rng.uniform(0.05, 3), rng.uniform(0.02, 1.5))
    else:
        m = tuple(rng.uniform(0.1, 3, size=3))
    return BieberbachSpec(t, m)
