import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexrecon.errors import DataError
from hexrecon.geometry import (Camera, build_bvh, cast_rays, closest_points, coverage_backward,
                               interpolate, interpolate_attributes, interpolate_backward, intersect,
                               intersect_brute_force, look_at, project, projection_jacobian,
                               query_box, ray_for_pixel, refit_bvh, silhouette_coverage)
from hexrecon.geometry.bvh import default_tmin
from hexrecon.geometry.silhouette import band_pixels
from hexrecon.hexmesh import HexMesh, icosphere, quad, uv_torus

from oracles import central_diff, first_hit_oracle, rel_err


def top_down_camera(size=16, f=12.0, c=8.5):
    """Camera at (0, 0, 3) looking down -z; image x along +x, image y along -y."""
    R = np.diag([1.0, -1.0, -1.0])
    return Camera(f, f, c, c, R, [0.0, 0.0, 3.0], size, size)


# -- camera ------------------------------------------------------------------
class TestCamera:
    def test_principal_ray_is_optical_axis(self):
        cam = look_at([1.0, 2.0, 3.0], [0, 0, 0], [0, 0, 1], 50, 50, 64, 48)
        o, d = ray_for_pixel(cam, cam.cx - 0.5, cam.cy - 0.5)
        np.testing.assert_allclose(o, [1, 2, 3], atol=1e-12)
        np.testing.assert_allclose(d, cam.R[2], atol=1e-12)

    def test_identity_pose_corner(self):
        cam = Camera(1, 1, 0, 0, np.eye(3), np.zeros(3), 4, 4)
        _, d = ray_for_pixel(cam, -0.5, -0.5)
        np.testing.assert_allclose(d, [0, 0, 1], atol=1e-15)

    def test_out_of_range_pixel(self):
        cam = Camera(1, 1, 0, 0, np.eye(3), np.zeros(3), 4, 4)
        with pytest.raises(DataError):
            ray_for_pixel(cam, 4, 0)
        with pytest.raises(DataError):
            ray_for_pixel(cam, 0, -1)

    def test_project_axis_point(self):
        cam = look_at([0, 0, -5.0], [0, 0, 0], [0, 1, 0], 40, 40, 32, 32)
        u, v, z, behind = project(cam, cam.center + 2.0 * cam.R[2])
        assert (u, v, z, behind) == pytest.approx((cam.cx, cam.cy, 2.0, False))

    def test_behind_flag(self):
        cam = look_at([0, 0, -5.0], [0, 0, 0], [0, 1, 0], 40, 40, 32, 32)
        u, v, z, behind = project(cam, cam.center - cam.R[2])
        assert behind and np.isnan(u) and z < 0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-0.5, 63.49), st.floats(-0.5, 47.49), st.floats(0.1, 50),
           st.tuples(*[st.floats(-3, 3)] * 3))
    def test_ray_project_round_trip(self, px, py, t, eye):
        eye = np.array(eye) + [0.0, 0.0, 4.0]
        cam = look_at(eye, [0.1, -0.2, 0.3], [0, 0, 1], 70, 65, 64, 48)
        o, d = ray_for_pixel(cam, px, py)
        u, v, _, behind = project(cam, o + t * d)
        assert not behind
        assert abs(u - (px + 0.5)) < 1e-6 and abs(v - (py + 0.5)) < 1e-6

    def test_bad_intrinsics_and_rotation(self):
        with pytest.raises(DataError):
            Camera(0, 1, 0, 0, np.eye(3), np.zeros(3), 4, 4)
        with pytest.raises(DataError):
            Camera(1, 1, 0, 0, np.diag([1, 1, -1.0]), np.zeros(3), 4, 4)

    def test_matrix_round_trip(self):
        cam = look_at([2, 1, 3.0], [0, 0, 0], [0, 0, 1], 80, 70, 64, 48)
        back = Camera.from_matrices(cam.K, cam.world_to_camera, 64, 48)
        np.testing.assert_allclose(back.R, cam.R)
        np.testing.assert_allclose(back.center, cam.center)

    def test_projection_jacobian(self, rng):
        cam = look_at([2, 1, 3.0], [0, 0, 0], [0, 0, 1], 80, 70, 64, 48)
        p = rng.normal(size=(1, 3)) * 0.5
        J = projection_jacobian(cam, p)[0]
        for row in range(2):
            num = central_diff(lambda: project(cam, p)[row][0], p, 1e-6)
            assert rel_err(J[row], num[0]) < 1e-7


# -- BVH and intersection ----------------------------------------------------
def random_rays(rng, n, target_scale=1.0):
    o = rng.normal(size=(n, 3))
    o *= 3.0 / np.linalg.norm(o, axis=1, keepdims=True)
    d = rng.uniform(-target_scale, target_scale, size=(n, 3)) - o
    return o, d / np.linalg.norm(d, axis=1, keepdims=True)


class TestIntersection:
    def test_bvh_matches_independent_oracle(self, rng):
        m = uv_torus(0.7, 0.3, 24, 12)
        bvh = build_bvh(m)
        o, d = random_rays(rng, 300)
        h = cast_rays(bvh, m, o, d)
        tmin = default_tmin(m)
        for i in range(len(o)):
            f, t = first_hit_oracle(m, o[i], d[i], tmin)
            assert h.face[i] == f
            if f >= 0:
                assert h.t[i] == pytest.approx(t, rel=1e-12)

    def test_bvh_matches_brute_force_after_refit(self, rng):
        m = icosphere(3)
        bvh = build_bvh(m)
        m.positions *= 1.0 + 0.1 * rng.random((m.n_vertices, 1))
        refit_bvh(bvh, m)
        o, d = random_rays(rng, 2000)
        a, b = cast_rays(bvh, m, o, d), intersect_brute_force(m, o, d)
        np.testing.assert_array_equal(a.face, b.face)
        np.testing.assert_allclose(a.t[a.hit], b.t[b.hit], rtol=1e-12)

    def test_single_face_tree(self):
        m = HexMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        bvh = build_bvh(m)
        assert bvh.n_nodes == 1
        assert len(bvh.leaves()) == 1

    def test_box_outside_root(self):
        bvh = build_bvh(icosphere(2))
        assert len(query_box(bvh, [5, 5, 5], [6, 6, 6])) == 0
        assert len(query_box(bvh, [-2, -2, -2], [2, 2, 2])) == icosphere(2).n_faces

    def test_ray_through_sphere_center(self):
        m = icosphere(3)
        hit = intersect(build_bvh(m), m, [0.0, 0.0, 3.0], [0.0, 0.0, -1.0])
        assert hit is not None
        _, _, t = hit
        # inradius bounds the chord sag
        P = m.positions[m.faces]
        n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
        sag = 1.0 - np.abs(np.einsum("ij,ij->i", n / np.linalg.norm(n, axis=1, keepdims=True), P[:, 0])).min()
        assert 2.0 - 1e-12 <= t <= 2.0 + sag

    def test_parallel_ray_misses(self):
        m = icosphere(2)
        assert intersect(build_bvh(m), m, [0.0, 1.5, 0.0], [1.0, 0.0, 0.0]) is None

    def test_shared_edge_goes_to_smaller_face(self):
        m = quad(2.0)    # faces (0,1,2) and (0,2,3) share the diagonal through the origin
        h = cast_rays(build_bvh(m), m, [[0.3, 0.3, 1.0], [-0.2, -0.2, -1.0]],
                      [[0, 0, -1.0], [0, 0, 1.0]])
        np.testing.assert_array_equal(h.face, [0, 0])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_hit_invariants(self, seed):
        rng = np.random.default_rng(seed)
        m = icosphere(2)
        o, d = random_rays(rng, 200)
        h = cast_rays(build_bvh(m), m, o, d)
        b = h.bary[h.hit]
        assert np.all((b >= 0) & (b <= 1))
        np.testing.assert_allclose(b.sum(1), 1.0, atol=1e-6)
        assert np.all(h.t[h.hit] > 0)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-9)

    def test_closest_points_against_dense_sampling(self, rng):
        m = uv_torus(0.7, 0.3, 16, 8)
        q = rng.uniform(-1.2, 1.2, size=(40, 3))
        _, dist, pt, _ = closest_points(build_bvh(m), m, q)
        k = 24
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        ok = i + j <= k
        b = np.stack([1 - (i[ok] + j[ok]) / k, i[ok] / k, j[ok] / k], 1)
        samples = np.einsum("sk,fkd->fsd", b, m.positions[m.faces]).reshape(-1, 3)
        e = m.edges
        spacing = np.linalg.norm(m.positions[e[:, 0]] - m.positions[e[:, 1]], axis=1).max() / k
        for n in range(len(q)):
            dense = np.linalg.norm(samples - q[n], axis=1).min()
            assert dist[n] <= dense + 1e-12
            assert dist[n] >= dense - spacing
            assert np.linalg.norm(pt[n] - q[n]) == pytest.approx(dist[n])


# -- interpolation -----------------------------------------------------------
class TestInterpolation:
    def setup_method(self):
        rng = np.random.default_rng(5)
        self.m = icosphere(1)
        self.m.positions += 0.05 * rng.normal(size=self.m.positions.shape)
        self.m.features = rng.normal(size=(self.m.n_vertices, 8))
        self.rng = rng

    def test_hit_at_vertex(self):
        m = self.m
        v = m.faces[7, 0]
        x, n, h = interpolate_attributes(m, (7, np.array([1.0, 0.0, 0.0]), 1.0))
        assert np.array_equal(x, m.positions[v])
        assert np.array_equal(h, m.features[v])
        np.testing.assert_allclose(n, m.vertex_normals()[v], atol=1e-15)

    def test_centroid_with_equal_features(self):
        m = self.m
        m.features[m.faces[3]] = [0.25] * 8
        _, _, h = interpolate_attributes(m, (3, np.full(3, 1 / 3), 1.0))
        np.testing.assert_allclose(h, 0.25, atol=1e-15)

    def test_position_gradient_matches_finite_differences(self):
        m = self.m
        F = self.rng.integers(0, m.n_faces, 25)
        b = self.rng.dirichlet([1, 1, 1], 25)
        gx, gn = self.rng.normal(size=(25, 3)), self.rng.normal(size=(25, 3))
        gh = self.rng.normal(size=(25, 8))

        def loss():
            it = interpolate(m, F, b)
            return (it.x * gx).sum() + (it.n * gn).sum() + (it.h * gh).sum()

        gp, gf = interpolate_backward(m, interpolate(m, F, b), gx, gn, gh)
        assert rel_err(gp, central_diff(loss, m.positions, 1e-6)) < 1e-6
        assert rel_err(gf, central_diff(loss, m.features, 1e-6)) < 1e-6

    def test_superposition(self):
        m = self.m
        F = self.rng.integers(0, m.n_faces, 10)
        b = self.rng.dirichlet([1, 1, 1], 10)
        A, B = self.rng.normal(size=(2, m.n_vertices, 3))
        fa, fb = self.rng.normal(size=(2, m.n_vertices, 8))
        x = lambda P, Fe: interpolate(HexMesh(P, m.faces, Fe), F, b)
        ab, a, bb = x(A + B, fa + fb), x(A, fa), x(B, fb)
        np.testing.assert_allclose(ab.x, a.x + bb.x, atol=1e-12)
        np.testing.assert_allclose(ab.h, a.h + bb.h, atol=1e-12)

    def test_zero_normal_falls_back_to_face_normal(self):
        # two copies of one triangle with opposite orientation cancel every vertex normal
        m = HexMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 1]])
        it = interpolate(m, np.array([0]), np.array([[0.2, 0.3, 0.5]]))
        assert it.fallback[0]
        np.testing.assert_allclose(it.n[0], [0, 0, 1])


# -- silhouette coverage -----------------------------------------------------
class TestCoverage:
    def test_square_facing_camera(self):
        cam = top_down_camera()
        cov = silhouette_coverage(quad(2.0), cam).image
        # edges project onto pixel centers 4.5 and 12.5 in both directions
        assert np.all(cov[5:12, 5:12] == 1.0)
        assert np.all(cov[:4] == 0) and np.all(cov[13:] == 0)
        assert np.all(cov[:, :4] == 0) and np.all(cov[:, 13:] == 0)
        np.testing.assert_allclose(cov[4, 4:13], 0.5)
        np.testing.assert_allclose(cov[4:13, 12], 0.5)

    def test_fractional_band(self):
        cam = top_down_camera()
        # right edge 0.3 px past the center of column 12: that pixel is hit at distance 0.3
        cov = silhouette_coverage(quad(2.0 + 2 * 0.3 * 3 / 12), cam).image
        np.testing.assert_allclose(cov[8, 12], 0.8, atol=1e-12)
        assert cov[8, 13] == 0.0
        # 0.7 px past it: column 13 is missed at distance 0.3
        cov = silhouette_coverage(quad(2.0 + 2 * 0.7 * 3 / 12), cam).image
        assert cov[8, 12] == 1.0
        np.testing.assert_allclose(cov[8, 13], 0.2, atol=1e-12)

    def test_outside_frustum_is_empty(self):
        m = icosphere(2)
        m.positions += [0, 0, 10.0]        # behind the top-down camera
        cov = silhouette_coverage(m, top_down_camera())
        assert not cov.image.any()

    def test_band_pixels(self):
        hit = np.zeros((6, 6), bool)
        hit[2:4, 2:4] = True
        band = np.zeros(36, bool)
        band[band_pixels(hit)] = True
        band = band.reshape(6, 6)
        assert band[1:5, 1:5].all() and band.sum() == 16

    def test_edge_shift_gradient(self, rng):
        cam = top_down_camera(size=24, f=15.0, c=12.0)
        m = quad(1.7)
        m.positions[:, :2] += rng.normal(size=(4, 2)) * 0.05
        cov = silhouette_coverage(m, cam)
        g_img = np.zeros(cam.height * cam.width)
        g_img[cov.pix] = rng.normal(size=len(cov.pix))
        g_img = g_img.reshape(cam.height, cam.width)
        g = coverage_backward(m, cam, cov, g_img)
        f = lambda: float((silhouette_coverage(m, cam).image * g_img).sum())
        num = central_diff(f, m.positions, 1e-5)
        assert rel_err(g, num) < 0.1

    def test_coverage_follows_one_pixel_translation(self):
        cam = top_down_camera()
        px = 3 / 12                      # world units per pixel on the z=0 plane
        m = quad(2.0)
        m.positions[[1, 2], 0] += 0.55 * px   # right edge at u = 13.05
        cov = silhouette_coverage(m, cam)
        g_img = np.zeros((16, 16))
        g_img[8, 13] = 1.0
        g = coverage_backward(m, cam, cov, g_img)
        # shift the edge by most of a pixel (u = 13.95); the pixel flips from miss to hit
        dx = 0.9 * px
        pred = dx * (g[1, 0] + g[2, 0])
        m.positions[[1, 2], 0] += dx
        actual = silhouette_coverage(m, cam).image[8, 13] - cov.image[8, 13]
        assert actual == pytest.approx(pred, rel=0.1)
