"""Euclidean primitives: affine isometries, lattices and shortest coset vectors.

Everything works in double precision on vectors of dimension 2 or 3.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

ORTHO_TOL = 1e-12
LENGTH_TOL = 1e-9


class DegenerateLatticeError(ValueError):
    pass


def _as_vec(v) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinates: {v!r}")
    return a


class AffineIsometry:
    """Map ``x -> linear @ x + shift`` with an orthogonal linear part."""

    __slots__ = ("linear", "shift")

    def __init__(self, linear, shift):
        lin = np.array(linear, dtype=float)
        sh = _as_vec(shift)
        n = sh.shape[0]
        if lin.shape != (n, n):
            raise ValueError(f"linear part shape {lin.shape} does not match shift dimension {n}")
        if np.max(np.abs(lin.T @ lin - np.eye(n))) > ORTHO_TOL:
            raise ValueError("linear part is not orthogonal")
        lin.flags.writeable = False
        sh.flags.writeable = False
        self.linear = lin
        self.shift = sh

    @classmethod
    def translation(cls, v) -> "AffineIsometry":
        v = _as_vec(v)
        return cls(np.eye(len(v)), v)

    @property
    def dim(self) -> int:
        return self.shift.shape[0]

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.linear.T + self.shift

    def compose(self, other: "AffineIsometry") -> "AffineIsometry":
        """``self o other``."""
        return AffineIsometry(self.linear @ other.linear, self.linear @ other.shift + self.shift)

    __matmul__ = compose

    def inverse(self) -> "AffineIsometry":
        inv = self.linear.T
        return AffineIsometry(inv, -inv @ self.shift)

    def is_translation(self, tol: float = ORTHO_TOL) -> bool:
        return bool(np.max(np.abs(self.linear - np.eye(self.dim))) <= tol)

    def __repr__(self):
        return f"AffineIsometry(linear={self.linear.tolist()}, shift={self.shift.tolist()})"


class Lattice:
    """Integer span of independent basis vectors (rows of ``basis``)."""

    __slots__ = ("basis",)

    def __init__(self, basis):
        b = np.array(basis, dtype=float)
        if b.ndim != 2 or b.shape[0] not in (1, 2, 3) or b.shape[0] > b.shape[1]:
            raise DegenerateLatticeError(f"bad basis shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("non-finite basis entries")
        if gram_determinant(b) <= (1e-12 * np.prod(np.sum(b * b, axis=1))):
            raise DegenerateLatticeError("degenerate lattice")
        b.flags.writeable = False
        self.basis = b

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def covolume(self) -> float:
        return math.sqrt(gram_determinant(self.basis))

    def coordinates(self, v) -> np.ndarray:
        """Real coefficients of ``v`` in the basis (least squares off the span)."""
        return np.linalg.lstsq(self.basis.T, _as_vec(v), rcond=None)[0]

    def contains(self, v, tol: float = 1e-7) -> bool:
        v = _as_vec(v)
        c = self.coordinates(v)
        return bool(np.all(np.abs(c - np.round(c)) < tol) and np.linalg.norm(np.round(c) @ self.basis - v) < tol)

    def same_lattice(self, other: "Lattice", tol: float = 1e-7) -> bool:
        return all(other.contains(v, tol) for v in self.basis) and all(self.contains(v, tol) for v in other.basis)

    def __repr__(self):
        return f"Lattice({self.basis.tolist()})"


def gram_determinant(vectors) -> float:
    b = np.asarray(vectors, dtype=float)
    return float(np.linalg.det(b @ b.T))


def gauss_reduce(b1, b2) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange-Gauss reduction of a planar basis.

    Returns ``(b1, b2)`` with ``|b1| <= |b2| <= |b2 +- b1|``, spanning the same
    lattice; ``|b1|`` and ``|b2|`` are the two successive minima.
    """
    u, v = _as_vec(b1), _as_vec(b2)
    nu, nv = u @ u, v @ v
    cross = nu * nv - (u @ v) ** 2
    if cross <= 1e-24 * nu * nv or nu == 0 or nv == 0:
        raise DegenerateLatticeError("degenerate lattice")
    # slack keeps an already reduced basis unchanged under rounding
    slack = 1e-12
    if nv < nu * (1 - slack):
        u, v, nu, nv = v, u, nv, nu
    for _ in range(10_000):
        mu = (u @ v) / nu
        if abs(mu) > 0.5 + slack:
            v = v - round(mu) * u
            nv = v @ v
        if nv < nu * (1 - slack):
            u, v, nu, nv = v, u, nv, nu
            continue
        return u, v
    raise RuntimeError("Gauss reduction did not terminate")


def _gso(vectors: Sequence[np.ndarray]) -> tuple[list[np.ndarray], list[float]]:
    stars, norms = [], []
    for v in vectors:
        w = v.copy()
        for s, n in zip(stars, norms):
            w -= (v @ s) / n * s
        stars.append(w)
        norms.append(float(w @ w))
    return stars, norms


def lll_reduce(vectors: Iterable, delta: float = 0.99, tol: float | None = None,
               max_iter: int = 10_000) -> list[np.ndarray]:
    """LLL reduction of a generating set, dropping linear dependencies.

    Dependent generators are reduced Euclid-style until they vanish, so the
    result is a basis of the group they generate, provided it is discrete.
    Only meant for a handful of vectors in dimension <= 3.
    """
    b = [_as_vec(v) for v in vectors]
    scale = max((float(np.linalg.norm(v)) for v in b), default=0.0)
    if tol is None:
        tol = 1e-9 * max(scale, 1e-300)
    b = [v for v in b if np.linalg.norm(v) > tol]
    k, it = 1, 0
    while k < len(b):
        it += 1
        if it > max_iter:
            raise DegenerateLatticeError("generators do not span a discrete lattice")
        stars, norms = _gso(b[:k])
        for j in range(k - 1, -1, -1):
            q = round((b[k] @ stars[j]) / norms[j])
            if q:
                b[k] = b[k] - q * b[j]
        if np.linalg.norm(b[k]) <= tol:
            del b[k]
            continue
        w = b[k].copy()
        for s, n in zip(stars, norms):
            w -= (b[k] @ s) / n * s
        mu = (b[k] @ stars[k - 1]) / norms[k - 1]
        if w @ w < (delta - mu * mu) * norms[k - 1]:
            b[k - 1], b[k] = b[k], b[k - 1]
            k = max(k - 1, 1)
        else:
            k += 1
    return b


def _check_projector(p: np.ndarray) -> None:
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("projector must be square")
    if np.max(np.abs(p - p.T)) > 1e-9 or np.max(np.abs(p @ p - p)) > 1e-9:
        raise ValueError("projector must be symmetric and idempotent")


def _range_basis(p: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(p)
    return v[:, w > 0.5]


def _closest(basis: list[np.ndarray], target: np.ndarray, exclude_zero: bool) -> float:
    """Exact ``min |target + sum n_i b_i|`` by Fincke-Pohst enumeration."""
    m = len(basis)
    stars, norms = _gso(basis)
    mu = [[(basis[i] @ stars[j]) / norms[j] for j in range(m)] for i in range(m)]
    c = [(target @ stars[j]) / norms[j] for j in range(m)]
    perp = target - sum((cj * s for cj, s in zip(c, stars)), np.zeros_like(target))
    base = float(perp @ perp)

    # Babai nearest plane for a first radius
    n = [0] * m
    for i in range(m - 1, -1, -1):
        centre = c[i] + sum(n[j] * mu[j][i] for j in range(i + 1, m))
        n[i] = -round(centre)
    if exclude_zero and not any(n):
        best = min(float(v @ v) for v in basis)
    else:
        x = target + sum((ni * bi for ni, bi in zip(n, basis)), np.zeros_like(target))
        best = float(x @ x)

    coeffs = [0] * m

    def search(i: int, partial: float) -> None:
        nonlocal best
        centre = c[i] + sum(coeffs[j] * mu[j][i] for j in range(i + 1, m))
        room = best * (1 + 1e-12) - partial
        if room < 0:
            return
        r = math.sqrt(room / norms[i])
        for ni in range(math.ceil(-centre - r), math.floor(-centre + r) + 1):
            y = centre + ni
            here = partial + y * y * norms[i]
            if here > best * (1 + 1e-12):
                continue
            coeffs[i] = ni
            if i == 0:
                if exclude_zero and not any(coeffs):
                    continue
                best = min(best, here)
            else:
                search(i - 1, here)
        coeffs[i] = 0

    search(m - 1, base)
    return math.sqrt(best)


def coset_shortest(lattice: Lattice, offset=None, projector=None) -> float:
    """``min over lattice points l of |projector @ (offset + l)|``.

    With a zero offset the zero vector (of the projected lattice) is excluded,
    so the result is the shortest nonzero vector.  A projector must be
    symmetric and idempotent, and the projected lattice must be discrete.
    """
    basis = lattice.basis
    dim = basis.shape[1]
    o = np.zeros(dim) if offset is None else _as_vec(offset)
    if o.shape[0] != dim:
        raise ValueError("offset dimension mismatch")
    exclude_zero = not np.any(o)
    if projector is not None:
        p = np.array(projector, dtype=float)
        _check_projector(p)
        q = _range_basis(p)
        if q.shape[1] == 0:
            if exclude_zero:
                raise DegenerateLatticeError("projection onto the zero space")
            return 0.0
        gens = list(basis @ q)
        o = o @ q
        if q.shape[1] < dim:
            red = lll_reduce(gens)
            if not red:
                if exclude_zero:
                    raise DegenerateLatticeError("lattice lies in the projector kernel")
                return float(np.linalg.norm(o))
            return _closest(red, o, exclude_zero)
    red = lll_reduce(basis)
    if len(red) < lattice.rank:
        raise DegenerateLatticeError("degenerate lattice")
    return _closest(red, o, exclude_zero)


def shortest_vector_length(lattice: Lattice) -> float:
    return coset_shortest(lattice)


def fixed_projector(linear) -> np.ndarray:
    """Orthogonal projector onto ``ker(linear - I)``."""
    a = np.asarray(linear, dtype=float)
    n = a.shape[0]
    _, s, vt = np.linalg.svd(a - np.eye(n))
    null = vt[s < 1e-9]
    return null.T @ null


def displacement(iso: AffineIsometry) -> float:
    """``inf_p |iso(p) - p|``: length of the shift's component along the fixed space."""
    return float(np.linalg.norm(fixed_projector(iso.linear) @ iso.shift))
