import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from systolica import mesh_oracle as mo
from systolica.bavard_surface import PHI0, KleinIsometry, Kind, SurfacePoint, disp_rotation, disp_T, dist_rotation, dist_T, rotation, screw
from systolica.mesh_oracle import ResourceBoundError, build_mesh, klein_displacement, mesh_distance

points = st.builds(SurfacePoint, st.floats(0, 2 * math.pi), st.floats(-PHI0, PHI0), st.integers(1, 2))


class TestBuild:
    def test_shape(self, coarse_mesh):
        m = coarse_mesh
        assert m.n_theta == math.ceil(2 * math.pi / 0.02)
        assert m.n_nodes == 5 * m.n_theta
        assert 2 * math.pi / m.n_theta <= 0.02

    def test_weights_positive_and_symmetric(self, coarse_mesh):
        g = coarse_mesh.graph
        assert np.all(g.data > 0)
        assert abs(g - g.T).max() == 0

    def test_ring_edges_are_arcs(self, coarse_mesh):
        m = coarse_mesh
        w = m.graph[m.node(0, 0), m.node(0, 1)]
        assert w == pytest.approx(math.cos(PHI0) * 2 * math.pi / m.n_theta)

    @pytest.mark.parametrize("kw", [{"h": 0.0}, {"h": -1.0}, {"h": math.pi / 2}, {"patches": 2}])
    def test_rejects_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            build_mesh(**kw)

    def test_resource_bound(self, monkeypatch):
        monkeypatch.setattr(mo, "MAX_NODES", 100)
        with pytest.raises(ResourceBoundError):
            build_mesh(h=0.05)

    def test_dump_format(self):
        m = build_mesh(h=0.5)
        buf = io.StringIO()
        mo.dump_mesh(m, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("# phi0=")
        assert lines[1] == f"# nodes {m.n_nodes}"
        nodes = lines[2:2 + m.n_nodes]
        assert all(len(l.split()) == 5 for l in nodes)
        assert lines[2 + m.n_nodes] == f"# edges {m.n_edges}"
        edges = lines[3 + m.n_nodes:]
        assert len(edges) == m.n_edges
        u, v, w = edges[0].split()
        assert int(u) < int(v) and float(w) > 0


class TestVisibility:
    def test_cross_zone_closed_form(self, coarse_mesh):
        # an arc between opposite circles matches the chord length and stays in the zone
        for dth in np.linspace(0, math.pi - 0.05, 40):
            u = mo._unit(0.0, -PHI0)
            v = mo._unit(dth, PHI0)
            length, vis = mo.arc_in_band(u, v, math.sin(PHI0))
            assert vis
            assert mo._cross_zone(coarse_mesh, np.array([dth]))[0] == pytest.approx(length, abs=1e-12)

    def test_same_circle_arc_leaves_zone(self):
        u = mo._unit(0.0, PHI0)
        v = mo._unit(1.0, PHI0)
        _, vis = mo.arc_in_band(u, v, math.sin(PHI0))
        assert not vis

    def test_graded_offsets(self):
        xs = mo._graded_offsets(0.001, 0.02)
        assert xs[len(xs) // 2] == 0.0
        assert np.all(np.diff(xs) > 0)
        assert np.all(np.diff(xs) <= 0.02 + 1e-15)
        assert np.allclose(xs, -xs[::-1])
        assert len(mo._graded_offsets(0.0, 0.02)) == 0


class TestDistances:
    def test_same_point(self, coarse_mesh):
        p = SurfacePoint(0.4, 0.2, 1)
        assert mesh_distance(coarse_mesh, p, p) == 0.0

    def test_equator(self, coarse_mesh):
        p, q = SurfacePoint(0.0, 0.0, 1), SurfacePoint(1.0, 0.0, 1)
        assert mesh_distance(coarse_mesh, p, q) == pytest.approx(1.0, abs=1e-12)

    def test_along_singular_circle(self, coarse_mesh):
        p, q = SurfacePoint(0.0, PHI0, 1), SurfacePoint(2.0, PHI0, 1)
        assert mesh_distance(coarse_mesh, p, q) == pytest.approx(dist_rotation(PHI0, 2.0), abs=1e-12)

    def test_rejects_points_outside(self, coarse_mesh):
        with pytest.raises(ValueError):
            mesh_distance(coarse_mesh, SurfacePoint(0, 0, 1), SurfacePoint(0, 0, 9))

    @settings(max_examples=15)
    @given(points, points)
    def test_symmetric(self, coarse_mesh, p, q):
        a, b = mesh_distance(coarse_mesh, p, q), mesh_distance(coarse_mesh, q, p)
        assert a == pytest.approx(b, rel=2e-4, abs=1e-12)

    @settings(max_examples=10)
    @given(points, points, points)
    def test_triangle(self, coarse_mesh, p, q, r):
        d = lambda a, b: mesh_distance(coarse_mesh, a, b)
        assert d(p, r) <= d(p, q) + d(q, r) + 1e-3

    @settings(max_examples=10)
    @given(points, points, st.integers(0, 50))
    def test_invariant_under_node_rotation(self, coarse_mesh, p, q, k):
        shift = k * 2 * math.pi / coarse_mesh.n_theta
        mv = lambda s: SurfacePoint((s.theta + shift) % (2 * math.pi), s.phi, s.patch)
        a = mesh_distance(coarse_mesh, p, q)
        b = mesh_distance(coarse_mesh, mv(p), mv(q))
        assert a == pytest.approx(b, rel=1e-9)

    @settings(max_examples=8)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 400)), min_size=3, max_size=3))
    def test_metric_on_nodes(self, coarse_mesh, picks):
        m = coarse_mesh
        step = 2 * math.pi / m.n_theta
        pts = [SurfacePoint.from_global(i * step, (2 * r - 1) * PHI0) for r, i in picks]
        d = lambda a, b: mesh_distance(m, a, b)
        p, q, r = pts
        assert d(p, q) == pytest.approx(d(q, p), rel=1e-12, abs=1e-15)
        assert d(p, r) <= d(p, q) + d(q, r) + 1e-12
        ids = [m.node(rr, i) for rr, i in picks]
        assert d(p, q) == pytest.approx(mo.node_distance(m, ids[0], ids[1]), rel=1e-12, abs=1e-15)

    @settings(max_examples=20)
    @given(st.floats(0, PHI0), st.floats(0.1, math.pi), st.floats(0, 2 * math.pi))
    def test_rotation_closed_form(self, coarse_mesh, beta, alpha, theta):
        p = SurfacePoint(theta, beta, 1)
        got = mesh_distance(coarse_mesh, p, rotation(alpha)(p))
        exact = dist_rotation(beta, alpha)
        assert got >= exact - 1e-9
        assert got <= exact * (1 + 1e-3)

    def test_screw_distance_is_constant(self, coarse_mesh):
        rng = np.random.default_rng(5)
        for delta in (0.3, 1.2, 2.6):
            exact = dist_T(delta)
            for _ in range(50):
                p = SurfacePoint(rng.uniform(0, 2 * math.pi), rng.uniform(-PHI0, PHI0), 1)
                got = mesh_distance(coarse_mesh, p, screw(delta)(p))
                assert exact - 1e-9 <= got <= exact * (1 + 1e-3)


class TestKleinDisplacement:
    lats = (-PHI0, -0.3, 0.0, 0.4, PHI0)

    @pytest.mark.parametrize("alpha", [0.5, math.pi * (2 - math.sqrt(2)), 3.0])
    def test_rotation(self, coarse_mesh, alpha):
        got = klein_displacement(coarse_mesh, rotation(alpha), self.lats)
        assert got == pytest.approx(disp_rotation(alpha), abs=1e-9)

    @pytest.mark.parametrize("delta", [0.2, 0.7364116007537489, 2.5])
    def test_screw(self, coarse_mesh, delta):
        got = klein_displacement(coarse_mesh, screw(delta), self.lats)
        assert got == pytest.approx(disp_T(delta), rel=1e-3)
        assert got >= disp_T(delta) - 1e-9

    @pytest.mark.parametrize("kind", [Kind.S1, Kind.S2])
    def test_reflections_have_fixed_points(self, coarse_mesh, kind):
        lats = np.linspace(-PHI0, PHI0, 9)
        assert klein_displacement(coarse_mesh, KleinIsometry(kind), lats) == pytest.approx(0.0, abs=1e-9)


def test_verify_closed_forms_small():
    rep = mo.verify_closed_forms(h=0.05, samples=10, seed=1)
    assert rep.passed
    assert rep.max_undershoot <= 1e-9
    assert rep.alt_times_sqrt2_min_rel_err > 0.5
