"""Shortest-path oracle for distances on the singular cylinder (C, b).

Inside one spherical zone the metric is the round one, so any great-circle arc
that stays in the closed zone is an admissible curve of known length.  The
graph therefore keeps nodes on the singular circles only (spacing ``<= h``)
and joins

* consecutive nodes of a circle by the circle arc itself, and
* every bottom/top node pair of a zone whose connecting great-circle arc does
  not leave the zone, weighted by the exact arc length.

Query points are inserted exactly (no snapping), together with extra circle
points graded towards their feet, where a path from a query point close to a
circle is most sensitive to its crossing position.  Every graph path is a
real curve, so graph distances never undershoot true distances; a geodesic
that crosses the singular circles at arbitrary points is matched up to an
error of order ``h**2`` because its length is stationary in the crossing
positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .bavard_surface import (
    PHI0,
    CylinderMap,
    KleinIsometry,
    SurfacePoint,
    dist_rotation,
    dist_rotation_regime1,
    dist_T,
    rotation,
    screw,
)

MAX_NODES = 10**7
MAX_EDGES = 6 * 10**7
VISIBILITY_TOL = 1e-12


class ResourceBoundError(RuntimeError):
    pass


class UnreachableError(RuntimeError):
    pass


def _unit(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    c = np.cos(phi)
    return np.stack([c * np.cos(theta), c * np.sin(theta), np.sin(phi) * np.ones_like(theta)], axis=-1)


def arc_in_band(u: np.ndarray, v: np.ndarray, zmax: float) -> tuple[np.ndarray, np.ndarray]:
    """Length of the minor great-circle arc u->v and whether it keeps ``|z| <= zmax``.

    ``u`` and ``v`` are broadcastable arrays of unit vectors, shape ``(..., 3)``.
    Along the arc ``z(t) = A cos t + B sin t`` for ``t`` in ``[0, L]``; its
    extrema are checked in closed form.  Near-antipodal pairs are rejected.
    """
    u, v = np.broadcast_arrays(u, v)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    length = np.arctan2(cross, dot)
    sin_l = np.sin(length)
    ok = sin_l > 1e-9
    uz, vz = u[..., 2], v[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(ok, (vz - uz * np.cos(length)) / np.where(ok, sin_l, 1.0), 0.0)
    r = np.hypot(uz, b)
    t_max = np.mod(np.arctan2(b, uz), 2 * math.pi)
    t_min = np.mod(t_max + math.pi, 2 * math.pi)
    hi = np.where(t_max <= length, r, np.maximum(uz, vz))
    lo = np.where(t_min <= length, -r, np.minimum(uz, vz))
    inside = ok & (hi <= zmax + VISIBILITY_TOL) & (lo >= -zmax - VISIBILITY_TOL)
    return length, inside


@dataclass
class SurfaceMesh:
    phi0: float
    patches: int
    h: float
    n_theta: int
    graph: csr_matrix = field(repr=False)

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.n_theta) * (2 * math.pi / self.n_theta)

    @property
    def n_rings(self) -> int:
        return self.patches + 1

    @property
    def n_nodes(self) -> int:
        return self.n_rings * self.n_theta

    @property
    def n_edges(self) -> int:
        return self.graph.nnz // 2

    def node(self, ring: int, i: int) -> int:
        return ring * self.n_theta + (i % self.n_theta)

    def ring_units(self, ring: int, patch: int) -> np.ndarray:
        """Unit vectors of a ring's nodes in the local sphere of ``patch``."""
        phi = -self.phi0 if ring == patch else self.phi0
        return _unit(self.thetas, np.full(self.n_theta, phi))


def build_mesh(phi0: float = PHI0, patches: int = 4, h: float = 0.01) -> SurfaceMesh:
    """Graph model of ``patches`` consecutive zones with circle-node spacing ``<= h``."""
    if not h > 0:
        raise ValueError("resolution h must be positive")
    if h >= math.pi / 2:
        raise ValueError(f"resolution h = {h} too coarse (needs h < pi/2)")
    if patches < 3:
        raise ValueError("need at least 3 patches")
    n = math.ceil(2 * math.pi / h)
    n_nodes = n * (patches + 1)
    if n_nodes > MAX_NODES:
        raise ResourceBoundError(f"{n_nodes} nodes exceeds bound {MAX_NODES}")
    if patches * n * n > MAX_EDGES:
        raise ResourceBoundError(f"~{patches * n * n} edges exceeds bound {MAX_EDGES}")

    step = 2 * math.pi / n
    idx = np.arange(n)
    # bottom node 0 to top node k; by rotational symmetry this covers all pairs
    bottom = _unit(0.0, -phi0)
    top = _unit(idx * step, np.full(n, phi0))
    length, visible = arc_in_band(bottom, top, math.sin(phi0))
    ks = idx[visible]
    ws = length[visible]

    rows, cols, data = [], [], []
    ring_w = math.cos(phi0) * step
    for r in range(patches + 1):
        base = r * n
        rows.append(base + idx)
        cols.append(base + (idx + 1) % n)
        data.append(np.full(n, ring_w))
    for p in range(patches):
        lo, hi = p * n, (p + 1) * n
        src = np.repeat(idx, len(ks))
        dst = (src + np.tile(ks, n)) % n
        rows.append(lo + src)
        cols.append(hi + dst)
        data.append(np.tile(ws, n))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(data)
    graph = csr_matrix((np.concatenate([w, w]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                       shape=(n_nodes, n_nodes))
    graph.sum_duplicates()
    mesh = SurfaceMesh(phi0, patches, h, n, graph)
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise RuntimeError("mesh graph is disconnected")
    return mesh


def _ring_index(mesh: SurfaceMesh, g: np.ndarray) -> np.ndarray:
    """Ring number of each global latitude, or -1 off the singular circles."""
    j = np.rint((g + mesh.phi0) / (2 * mesh.phi0))
    on = np.abs(g + mesh.phi0 - j * 2 * mesh.phi0) < 1e-12
    return np.where(on, j, -1).astype(int)


def _check_point(mesh: SurfaceMesh, p: SurfacePoint) -> None:
    if not math.isclose(p.phi0, mesh.phi0):
        raise ValueError("point and mesh use different phi0")
    g = p.phi_global
    if not (-mesh.phi0 - 1e-12 <= g <= (2 * mesh.patches - 1) * mesh.phi0 + 1e-12):
        raise ValueError(f"point {p} lies outside the meshed patches")


def _graded_offsets(eps: float, h: float) -> np.ndarray:
    """Arc-length offsets along a circle at distance ``eps`` from a query point.

    A path leaving the point crosses the circle near its foot, where the
    length is sharply curved in the crossing position (second derivative
    about ``eps**2 / (eps**2 + x**2)**1.5``).  Spacing the offsets inversely
    to the square root of that curvature keeps the error of order ``h**2``.
    """
    if eps <= 1e-12:
        return np.zeros(0)
    xs = [0.0]
    x = 0.0
    while True:
        step = h * (eps * eps + x * x) ** 0.75 / eps
        if step >= h or x + step > math.pi:
            break
        x += step
        xs.append(x)
    pos = np.array(xs)
    return np.concatenate([-pos[:0:-1], pos])


def _with_refinement(mesh: SurfaceMesh, p: SurfacePoint) -> tuple[np.ndarray, np.ndarray]:
    """``p`` followed by graded extra points on the circles bounding its zone."""
    g = p.phi_global
    thetas, lats = [p.theta], [g]
    if _ring_index(mesh, np.array([g]))[0] < 0:
        k = math.floor((g + mesh.phi0) / (2 * mesh.phi0))
        for ring in (k, k + 1):
            ring_g = (2 * ring - 1) * mesh.phi0
            if not 0 <= ring <= mesh.patches:
                continue
            dtheta = _graded_offsets(abs(g - ring_g), mesh.h) / math.cos(mesh.phi0)
            thetas.extend(np.mod(p.theta + dtheta, 2 * math.pi))
            lats.extend([ring_g] * len(dtheta))
    return np.array(thetas, dtype=float), np.array(lats, dtype=float)


def _cross_zone(mesh: SurfaceMesh, dtheta: np.ndarray) -> np.ndarray:
    """Arc between points on the two boundary circles of a zone, ``dtheta`` apart.

    Such an arc is odd about its midpoint in height, hence monotone, so it
    never leaves the zone; only near-antipodal pairs are rejected.
    """
    c, s = math.cos(mesh.phi0), math.sin(mesh.phi0)
    half = np.sin(dtheta / 2)
    length = 2 * np.arcsin(np.minimum(1.0, np.sqrt(c * c * half * half + s * s)))
    return np.where(length < math.pi - 1e-9, length, np.inf)


def _chords(mesh: SurfaceMesh, ta, ga, tb, gb) -> np.ndarray:
    """Shortest in-zone great-circle arc between every pair of points (inf if none)."""
    out = np.full((len(ta), len(tb)), np.inf)
    zmax = math.sin(mesh.phi0)
    ra, rb = _ring_index(mesh, ga), _ring_index(mesh, gb)
    for k in range(mesh.patches):
        c = 2 * k * mesh.phi0
        ia = np.nonzero(np.abs(ga - c) <= mesh.phi0 + 1e-12)[0]
        ib = np.nonzero(np.abs(gb - c) <= mesh.phi0 + 1e-12)[0]
        if len(ia) == 0 or len(ib) == 0:
            continue
        sub = np.ix_(ia, ib)
        ring_a, ring_b = ra[ia][:, None], rb[ib][None, :]
        # pairs on opposite boundary circles
        opposite = (ring_a >= 0) & (ring_b >= 0) & (ring_a != ring_b)
        if opposite.any():
            w = _cross_zone(mesh, ta[ia][:, None] - tb[ib][None, :])
            out[sub] = np.where(opposite, np.minimum(out[sub], w), out[sub])
        # pairs involving an interior point (two points on one circle never see each other)
        ja = np.nonzero(ra[ia] < 0)[0]
        jb = np.nonzero(rb[ib] < 0)[0]
        for rows, cols in ((ia[ja], ib), (ia, ib[jb])):
            if len(rows) == 0 or len(cols) == 0:
                continue
            ua = _unit(ta[rows], ga[rows] - c)
            ub = _unit(tb[cols], gb[cols] - c)
            length, vis = arc_in_band(ua[:, None, :], ub[None, :, :], zmax)
            blk = np.ix_(rows, cols)
            out[blk] = np.minimum(out[blk], np.where(vis, length, np.inf))
    return out


def _links(mesh: SurfaceMesh, ta, ga, tb, gb) -> np.ndarray:
    """Chords, arcs of a common singular circle, and zero for coincident points."""
    w = _chords(mesh, ta, ga, tb, gb)
    ra, rb = _ring_index(mesh, ga), _ring_index(mesh, gb)
    dth = np.mod(np.abs(ta[:, None] - tb[None, :]), 2 * math.pi)
    dth = np.minimum(dth, 2 * math.pi - dth)
    same_ring = (ra[:, None] == rb[None, :]) & (ra[:, None] >= 0)
    w = np.where(same_ring, np.minimum(w, math.cos(mesh.phi0) * dth), w)
    same = (dth < 1e-12) & (np.abs(ga[:, None] - gb[None, :]) < 1e-12)
    return np.where(same, 0.0, w)


def _node_links(mesh: SurfaceMesh, ta, ga) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edges ``(point index, node id, length)`` from points to mesh nodes."""
    n = mesh.n_theta
    thetas = mesh.thetas
    rows, cols, data = [], [], []
    for k in range(mesh.patches):
        c = 2 * k * mesh.phi0
        ia = np.nonzero(np.abs(ga - c) <= mesh.phi0 + 1e-12)[0]
        if len(ia) == 0:
            continue
        tb = np.concatenate([thetas, thetas])
        gb = np.concatenate([np.full(n, c - mesh.phi0), np.full(n, c + mesh.phi0)])
        w = _chords(mesh, ta[ia], ga[ia], tb, gb)
        i, j = np.nonzero(np.isfinite(w))
        rows.append(ia[i])
        cols.append(k * n + j)
        data.append(w[i, j])
    # arcs to the two neighbouring nodes of points on a circle
    ring = _ring_index(mesh, ga)
    on = np.nonzero(ring >= 0)[0]
    step = 2 * math.pi / n
    i0 = np.floor(ta[on] / step)
    for off in (0, 1):
        i = i0 + off
        rows.append(on)
        cols.append(ring[on] * n + np.mod(i, n).astype(int))
        data.append(math.cos(mesh.phi0) * np.abs(ta[on] - i * step))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(data)


# keeps zero-length edges from being dropped as structural zeros
_TINY = 1e-300


@dataclass
class SourceField:
    """Shortest-path lengths from one point to the mesh nodes and its refinement points."""

    p: SurfacePoint
    node_dist: np.ndarray
    extra_theta: np.ndarray
    extra_phi: np.ndarray
    extra_dist: np.ndarray


def _relax_small(links: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Shortest paths within a small point set from given initial distances."""
    m = len(start)
    li, lj = np.nonzero(np.isfinite(links))
    ok = np.nonzero(np.isfinite(start))[0]
    # super source at index m feeding every point
    rows = np.concatenate([li, np.full(len(ok), m)])
    cols = np.concatenate([lj, ok])
    data = np.maximum(np.concatenate([links[li, lj], start[ok]]), _TINY)
    graph = csr_matrix((data, (rows, cols)), shape=(m + 1, m + 1))
    return dijkstra(graph, directed=True, indices=m)[:m]


def distances_from(mesh: SurfaceMesh, p: SurfacePoint) -> SourceField:
    """Single-source run from ``p`` through its refinement points into the mesh.

    Paths are not allowed to come back to the refinement points after leaving
    them; dropping edges can only lengthen paths, so bounds stay valid.
    """
    _check_point(mesh, p)
    ts, gs = _with_refinement(mesh, p)
    m, nn = len(ts), mesh.n_nodes
    ss = _links(mesh, ts, gs, ts, gs)
    np.fill_diagonal(ss, np.inf)
    start = np.full(m, np.inf)
    start[0] = 0.0
    extra = _relax_small(ss, start)
    extra[0] = 0.0
    r, c, w = _node_links(mesh, ts, gs)
    entry = np.full(nn, np.inf)
    np.minimum.at(entry, c, extra[r] + w)
    hit = np.nonzero(np.isfinite(entry))[0]
    g = mesh.graph
    indptr = np.concatenate([g.indptr, [g.indptr[-1] + len(hit)]])
    indices = np.concatenate([g.indices, hit])
    data = np.concatenate([g.data, np.maximum(entry[hit], _TINY)])
    aug = csr_matrix((data, indices, indptr), shape=(nn + 1, nn + 1))
    node_dist = dijkstra(aug, directed=True, indices=nn)[:nn]
    return SourceField(p, node_dist, ts, gs, extra)


def distance_to(mesh: SurfaceMesh, source: SourceField, q: SurfacePoint) -> float:
    """Complete a single-source run with the last hops to ``q`` through its refinement points."""
    if source.p == q:
        return 0.0
    _check_point(mesh, q)
    tt, gt = _with_refinement(mesh, q)
    m = len(tt)
    start = np.full(m, np.inf)
    r, c, w = _node_links(mesh, tt, gt)
    np.minimum.at(start, r, source.node_dist[c] + w)
    sl = _links(mesh, source.extra_theta, source.extra_phi, tt, gt)
    start = np.minimum(start, np.min(source.extra_dist[:, None] + sl, axis=0))
    tl = _links(mesh, tt, gt, tt, gt)
    np.fill_diagonal(tl, np.inf)
    best = float(_relax_small(tl, start)[0])
    if not math.isfinite(best):
        raise UnreachableError(f"{q} unreachable from {source.p}")
    return best


def mesh_distance(mesh: SurfaceMesh, p: SurfacePoint, q: SurfacePoint) -> float:
    """Graph upper bound for the (C, b) distance between ``p`` and ``q``."""
    if p == q:
        return 0.0
    return distance_to(mesh, distances_from(mesh, p), q)


def node_distance(mesh: SurfaceMesh, a: int, b: int) -> float:
    return float(dijkstra(mesh.graph, directed=False, indices=a)[b])


def klein_displacement(mesh: SurfaceMesh, iso: KleinIsometry | CylinderMap,
                       latitudes: Iterable[float], centre_patch: int | None = None) -> float:
    """Estimate the displacement of an isometry on (K, b).

    For each sample point ``p`` (longitude 0, given local latitudes, in
    ``centre_patch``) the distance from ``p`` to every deck translate of
    ``iso(p)`` landing inside the mesh is measured; the minimum is returned.
    Rotational symmetry makes the longitude of ``p`` irrelevant.
    """
    f = iso.lift() if isinstance(iso, KleinIsometry) else iso
    if centre_patch is None:
        centre_patch = mesh.patches // 2
    z = 2 * mesh.phi0
    decks = [CylinderMap(1, 0.0, 1, 4 * k * mesh.phi0, mesh.phi0) for k in (-1, 0, 1)]
    decks += [CylinderMap(1, math.pi, -1, 2 * m * z, mesh.phi0) for m in range(-1, mesh.patches + 1)]
    best = math.inf
    top = mesh.patches * z - mesh.phi0
    for lat in latitudes:
        p = SurfacePoint(0.0, float(lat), centre_patch, mesh.phi0)
        source = None
        for deck in decks:
            q = deck.compose(f)(p)
            if not (-mesh.phi0 - 1e-12 <= q.phi_global <= top + 1e-12):
                continue
            if source is None:
                source = distances_from(mesh, p)
            best = min(best, distance_to(mesh, source, q))
    return best


def dump_mesh(mesh: SurfaceMesh, out: TextIO) -> None:
    """Write nodes (``patch i j theta phi``) then edges (``u v weight``)."""
    out.write(f"# phi0={mesh.phi0!r} patches={mesh.patches} h={mesh.h!r} n_theta={mesh.n_theta}\n")
    out.write(f"# nodes {mesh.n_nodes}\n")
    thetas = mesh.thetas
    for ring in range(mesh.n_rings):
        patch, j, phi = (ring, 0, -mesh.phi0) if ring < mesh.patches else (ring - 1, 1, mesh.phi0)
        for i, t in enumerate(thetas):
            out.write(f"{patch} {i} {j} {float(t)!r} {float(phi)!r}\n")
    out.write(f"# edges {mesh.n_edges}\n")
    coo = mesh.graph.tocoo()
    upper = coo.row < coo.col
    for u, v, w in zip(coo.row[upper], coo.col[upper], coo.data[upper]):
        out.write(f"{int(u)} {int(v)} {float(w)!r}\n")


@dataclass
class OracleReport:
    h: float
    samples: int
    rotation_max_rel_err: float
    screw_max_rel_err: float
    max_undershoot: float
    singular_circle_max_rel_err: float
    alt_sin_form_max_rel_err: float
    alt_times_sqrt2_min_rel_err: float
    tolerance: float

    @property
    def max_rel_err(self) -> float:
        return max(self.rotation_max_rel_err, self.screw_max_rel_err, self.singular_circle_max_rel_err)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance and self.max_undershoot <= 1e-9


def verify_closed_forms(h: float = 0.01, samples: int = 100, seed: int = 42,
                        tolerance: float = 0.02, patches: int = 4) -> OracleReport:
    """Compare the oracle with dist_rotation and dist_T on random samples.

    Also measures the two alternative readings of the rotation formulas
    (``sin(alpha)`` in the great-circle case and ``alpha*sqrt(2)`` on the
    singular circle) against the oracle.
    """
    rng = np.random.default_rng(seed)
    mesh = build_mesh(PHI0, patches, h)
    mid = 1
    rot_err = scr_err = sing_err = 0.0
    undershoot = -math.inf
    sin_err = 0.0
    sqrt2_err = math.inf
    for _ in range(samples):
        beta = rng.uniform(0.0, PHI0)
        alpha = rng.uniform(0.1, math.pi)
        theta = rng.uniform(0.0, 2 * math.pi)
        p = SurfacePoint(theta, beta, mid)
        exact = dist_rotation(beta, alpha)
        got = mesh_distance(mesh, p, rotation(alpha)(p))
        rot_err = max(rot_err, abs(got - exact) / exact)
        undershoot = max(undershoot, exact - got)
        if beta < math.atan(math.cos(alpha / 2)):
            alt = math.acos(min(1.0, math.sin(beta) ** 2 + math.cos(beta) ** 2 * math.sin(alpha)))
            sin_err = max(sin_err, abs(alt - got) / got)

        delta = rng.uniform(0.0, math.pi)
        phi = rng.uniform(-PHI0, PHI0)
        p = SurfacePoint(theta, phi, mid)
        exact = dist_T(delta)
        got = mesh_distance(mesh, p, screw(delta)(p))
        scr_err = max(scr_err, abs(got - exact) / exact)
        undershoot = max(undershoot, exact - got)

        # points on the singular circle
        p = SurfacePoint(theta, PHI0, mid)
        exact = dist_rotation(PHI0, alpha)
        got = mesh_distance(mesh, p, rotation(alpha)(p))
        sing_err = max(sing_err, abs(got - exact) / exact)
        undershoot = max(undershoot, exact - got)
        sqrt2_err = min(sqrt2_err, abs(alpha * math.sqrt(2) - got) / got)
    return OracleReport(h, samples, rot_err, scr_err, max(undershoot, 0.0), sing_err,
                        sin_err, sqrt2_err, tolerance)


__all__ = [
    "SurfaceMesh", "SourceField", "build_mesh", "mesh_distance", "distances_from", "distance_to",
    "node_distance", "klein_displacement", "dump_mesh", "verify_closed_forms",
    "OracleReport", "ResourceBoundError", "UnreachableError", "arc_in_band",
    "dist_rotation_regime1",
]
