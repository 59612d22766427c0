import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csfmm.errors import ConfigurationError, DimensionMismatchError, EmptyTreeError
from csfmm.geometry import QUARTER_PI, build_grid, face_unproject
from csfmm.interpolation import CellInterpolant
from csfmm.tree import (
    ParticleSet,
    build_tree,
    default_leaf_size,
    downward_pass,
    interpolate_direct,
    upward_pass,
)

from .conftest import random_unit


def clustered(rng, n):
    # anisotropic cloud: dense band near the equator plus a polar cap
    p = rng.standard_normal((n, 3)) * [1.0, 1.0, 0.15]
    p[: n // 5] += [0.0, 0.0, 3.0]
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def direct_proxy_weights(tree, w_tree, c):
    cell = CellInterpolant(tree.face[c], tree.bounds[c], tree.degree)
    s, e = tree.start[c], tree.end[c]
    return cell.basis_local(tree.xi[s:e], tree.eta[s:e]).T @ w_tree[s:e]


class TestBuild:
    def test_default_leaf_size(self):
        assert default_leaf_size(6) == 144

    def test_errors(self):
        with pytest.raises(EmptyTreeError):
            build_tree(np.zeros((0, 3)))
        with pytest.raises(ConfigurationError):
            build_tree(np.eye(3), degree=0)
        with pytest.raises(ConfigurationError):
            build_tree(np.eye(3), leaf_size=0)

    def test_single_populated_face(self, rng):
        xi = rng.uniform(-0.5, 0.5, 144)
        eta = rng.uniform(-0.5, 0.5, 144)
        t = build_tree(face_unproject(np.full(144, 3), xi, eta), degree=6)
        assert t.num_clusters == 6
        assert np.array_equal(t.counts, [0, 0, 0, 144, 0, 0])
        assert np.all(t.nchild == 0)

    def test_cubed_sphere_level4_roots_split(self):
        g = build_grid("cubed_sphere", 4)
        t = build_tree(g.centers, degree=6, leaf_size=144)
        assert np.array_equal(t.counts[:6], [256] * 6)
        assert np.all(t.nchild[:6] == 4)
        # midpoint split of a uniform 16x16 face gives 8x8 children
        assert np.all(t.counts[6:30] == 64)

    @pytest.mark.parametrize("shrink", [True, False])
    def test_structure(self, rng, shrink):
        pts = clustered(rng, 4000)
        t = build_tree(pts, degree=4, shrink=shrink)
        assert np.array_equal(t.face[:6], np.arange(6))
        assert np.array_equal(np.sort(t.perm), np.arange(len(pts)))
        np.testing.assert_array_equal(t.pos, pts[t.perm])
        leaves = t.leaves()
        assert np.all(t.counts[leaves] <= t.leaf_size)
        assert np.all(t.counts[t.nchild > 0] > t.leaf_size)
        assert t.counts[leaves].sum() == len(pts)
        for c in np.flatnonzero(t.nchild > 0):
            kids = t.children[c, : t.nchild[c]]
            assert t.counts[kids].min() > 0
            assert t.start[kids[0]] == t.start[c] and t.end[kids[-1]] == t.end[c]
            assert np.all(t.start[kids[1:]] == t.end[kids[:-1]])
            assert np.all(t.level[kids] == t.level[c] + 1)

    def test_particles_inside_their_cluster(self, rng):
        t = build_tree(clustered(rng, 3000), degree=5)
        for c in range(t.num_clusters):
            s, e = t.start[c], t.end[c]
            if e == s:
                continue
            x0, x1, y0, y1 = t.bounds[c]
            assert np.all((t.xi[s:e] >= x0 - 1e-12) & (t.xi[s:e] <= x1 + 1e-12))
            assert np.all((t.eta[s:e] >= y0 - 1e-12) & (t.eta[s:e] <= y1 + 1e-12))
            assert np.all(t.face_of[s:e] == t.face[c])
            d = np.linalg.norm(t.pos[s:e] - t.center[c], axis=1)
            assert d.max() <= t.radius[c] * (1 + 1e-15)

    def test_proxy_points_in_cells(self, rng):
        t = build_tree(random_unit(rng, 2000), degree=3)
        assert t.proxy_pos.shape == (t.num_clusters, 16, 3)
        assert np.abs(np.linalg.norm(t.proxy_pos, axis=2) - 1).max() < 1e-15
        for c in range(t.num_clusters):
            cell = CellInterpolant(t.face[c], t.bounds[c], 3)
            np.testing.assert_allclose(cell.proxy_points, t.proxy_pos[c], atol=1e-15)

    def test_shrink_nests_rectangles(self, rng):
        pts = clustered(rng, 5000)
        a = build_tree(pts, degree=4, shrink=True)
        b = build_tree(pts, degree=4, shrink=False)
        for c in range(6):
            if a.counts[c] == 0:
                continue
            assert a.bounds[c, 0] >= b.bounds[c, 0] and a.bounds[c, 1] <= b.bounds[c, 1]
            assert a.bounds[c, 2] >= b.bounds[c, 2] and a.bounds[c, 3] <= b.bounds[c, 3]
            # radius bounded by the unshrunk cell's center-to-corner distance
            corners = face_unproject(np.full(4, c), b.bounds[c, [0, 0, 1, 1]], b.bounds[c, [2, 3, 2, 3]])
            assert a.radius[c] <= np.linalg.norm(corners - b.center[c], axis=1).max()

    def test_shrink_identity_on_uniform_grid(self):
        g = build_grid("icosahedral", 4)
        a = build_tree(g.centers, shrink=True)
        b = build_tree(g.centers, shrink=False)
        assert np.all(a.radius[:6] <= b.radius[:6] + 1e-15)

    def test_unshrunk_roots_are_faces(self, rng):
        t = build_tree(random_unit(rng, 500), shrink=False)
        np.testing.assert_array_equal(t.bounds[:6], [[-QUARTER_PI, QUARTER_PI, -QUARTER_PI, QUARTER_PI]] * 6)

    def test_deterministic(self, rng):
        pts = clustered(rng, 3000)
        a, b = build_tree(pts), build_tree(pts.copy())
        for name in ("perm", "start", "end", "children", "bounds", "center", "radius", "proxy_pos"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_coincident_points_terminate(self):
        pts = np.tile([[0.3, 0.4, np.sqrt(0.75)]], (500, 1))
        t = build_tree(pts, degree=2, leaf_size=10)
        assert t.counts[t.leaves()].sum() == 500

    def test_stats(self, ico3):
        s = build_tree(ico3.centers, degree=2).stats()
        assert s["num_particles"] == 642 and s["leaf_size"] == 16
        assert sum(s["leaf_histogram"]["counts"]) == s["num_leaves"]

    def test_particle_set(self, ico3):
        ps = ParticleSet.from_grid(ico3, np.ones(len(ico3)))
        np.testing.assert_array_equal(ps.weights, ico3.areas)
        assert len(build_tree(ps).perm) == 642
        with pytest.raises(DimensionMismatchError):
            ParticleSet(ico3.centers, np.ones(3))


class TestPasses:
    def test_single_particle_at_proxy_point(self):
        n = 4
        cell = CellInterpolant(2, (-0.3, 0.3, -0.3, 0.3), n)
        # a leaf whose shrunk rectangle is this cell: put particles on its corners
        corners = [0, n, n * (n + 1), (n + 1) ** 2 - 1]
        pts = cell.proxy_points[corners + [7]]
        t = build_tree(pts, degree=n, leaf_size=10)
        w = np.zeros(5)
        w[4] = 1.0
        W = upward_pass(t, w)
        expected = np.zeros((n + 1) ** 2)
        expected[7] = 1.0
        np.testing.assert_allclose(W[2], expected, atol=1e-14)

    def test_mass_conservation(self, rng):
        pts = clustered(rng, 5000)
        t = build_tree(pts, degree=6)
        w = rng.standard_normal(len(pts))
        W = upward_pass(t, w)
        wt = w[t.perm]
        sums = np.array([wt[t.start[c]:t.end[c]].sum() for c in range(t.num_clusters)])
        assert np.abs(W.sum(axis=1) - sums).max() < 1e-12 * max(1.0, np.abs(w).sum())

    def test_upward_equals_direct(self, rng):
        g = build_grid("icosahedral", 4)
        t = build_tree(g.centers, degree=6, leaf_size=40)
        w = rng.standard_normal(len(g))
        W = upward_pass(t, w)
        wt = w[t.perm]
        gap = max(np.abs(W[c] - direct_proxy_weights(t, wt, c)).max() for c in range(t.num_clusters))
        assert gap < 1e-11

    def test_upward_shape_check(self, ico3):
        t = build_tree(ico3.centers)
        with pytest.raises(DimensionMismatchError):
            upward_pass(t, np.ones(5))
        with pytest.raises(DimensionMismatchError):
            downward_pass(t, np.ones((2, 2)))

    def test_downward_zero(self, ico3):
        t = build_tree(ico3.centers, degree=3, leaf_size=20)
        assert np.all(downward_pass(t, np.zeros((t.num_clusters, 16))) == 0)

    def test_downward_single_leaf(self, rng, ico3):
        t = build_tree(ico3.centers, degree=3, leaf_size=20)
        leaf = t.leaves()[3]
        Phi = np.zeros((t.num_clusters, 16))
        Phi[leaf] = rng.standard_normal(16)
        out = downward_pass(t, Phi, tree_order=True)
        s, e = t.start[leaf], t.end[leaf]
        cell = CellInterpolant(t.face[leaf], t.bounds[leaf], 3)
        np.testing.assert_allclose(out[s:e], cell.basis_local(t.xi[s:e], t.eta[s:e]) @ Phi[leaf], atol=1e-13)
        mask = np.ones(len(out), bool)
        mask[s:e] = False
        assert np.all(out[mask] == 0)

    def test_downward_root_two_level_identity(self, rng):
        g = build_grid("icosahedral", 5)
        t = build_tree(g.centers, degree=6)
        for root in range(6):
            Phi = np.zeros((t.num_clusters, 49, 3))
            Phi[root] = rng.standard_normal((49, 3))
            got = downward_pass(t, Phi, tree_order=True)
            s, e = t.start[root], t.end[root]
            cell = CellInterpolant(t.face[root], t.bounds[root], 6)
            ref = cell.basis_local(t.xi[s:e], t.eta[s:e]) @ Phi[root]
            assert np.abs(got[s:e] - ref).max() < 1e-11

    def test_downward_equals_direct_interpolation(self, rng):
        t = build_tree(clustered(rng, 6000), degree=6)
        Phi = rng.standard_normal((t.num_clusters, 49))
        assert np.abs(downward_pass(t, Phi) - interpolate_direct(t, Phi)).max() < 1e-11 * np.abs(Phi).max() * 10

    def test_input_order(self, rng, ico3):
        t = build_tree(ico3.centers, degree=2)
        x = rng.standard_normal(len(ico3))
        np.testing.assert_array_equal(t.to_input_order(t.to_tree_order(x)), x)

    @given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
    def test_linearity(self, seed, alpha, beta):
        rng = np.random.default_rng(seed)
        t = _linearity_tree()
        u, v = rng.standard_normal((2, t.num_particles))
        lhs = upward_pass(t, alpha * u + beta * v)
        rhs = alpha * upward_pass(t, u) + beta * upward_pass(t, v)
        assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(rhs).max())
        P, Q = rng.standard_normal((2, t.num_clusters, t.num_proxy))
        lhs = downward_pass(t, alpha * P + beta * Q)
        rhs = alpha * downward_pass(t, P) + beta * downward_pass(t, Q)
        assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(rhs).max())


_TREE = {}


def _linearity_tree():
    if "t" not in _TREE:
        _TREE["t"] = build_tree(build_grid("icosahedral", 3).centers, degree=4, leaf_size=30)
    return _TREE["t"]
