import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgimap.errors import ShapeMismatch
from lgimap.geometry import CameraIntrinsics, LightSpec, lift, lift_depth_map
from lgimap.synth import (
    SUITE_SIZE,
    AnalyticScene,
    BoxAA,
    GroundPlane,
    OracleConfig,
    Sphere,
    Wall,
    oracle_shadow_mask,
    render_depth,
    render_ids,
    render_radiance,
    scene_suite,
    shadow_rays_blocked,
    sphere_scene,
    suite_intrinsics,
)


@pytest.fixture(scope="module")
def small_suite():
    return scene_suite(0, count=4, size=96)


class TestPrimitives:
    def test_sphere_on_axis(self):
        K = CameraIntrinsics.default(64, 64)
        depth = render_depth(AnalyticScene((Sphere((0, 0, 2), 0.5),)), K)
        assert depth[32, 32] == 1.5
        assert np.isnan(depth[0, 0])

    def test_ground_closed_form(self):
        K = CameraIntrinsics.default(64, 48)
        h = 0.5
        depth = render_depth(AnalyticScene((GroundPlane(h),)), K)
        v = np.arange(48)
        below = v > K.cy
        expected = K.fy * h / (v[below] - K.cy)
        assert np.allclose(depth[below], expected[:, None], rtol=1e-12)
        assert np.all(np.isnan(depth[~below]))

    def test_wall_is_constant(self):
        K = CameraIntrinsics.default(16, 16)
        assert np.all(render_depth(AnalyticScene((Wall(3.0),)), K) == 3.0)

    def test_nearest_primitive_wins(self):
        K = CameraIntrinsics.default(64, 64)
        scene = AnalyticScene((Wall(3.0), Sphere((0, 0, 2), 0.5)))
        ids = render_ids(scene, K)
        assert ids[32, 32] == 1 and ids[0, 0] == 0

    def test_relift_lies_on_surface(self):
        scene, K = sphere_scene(96)
        depth = render_depth(scene, K)
        ids = render_ids(scene, K)
        points, valid = lift_depth_map(K, depth)
        ground, wall, ball = scene.primitives
        assert np.all(np.abs(points[ids == 0][:, 1] - ground.height) < 1e-6)
        assert np.all(np.abs(points[ids == 1][:, 2] - wall.z) < 1e-6)
        r = np.linalg.norm(points[ids == 2] - np.asarray(ball.center), axis=1)
        assert np.all(np.abs(r - ball.radius) < 1e-6)
        assert np.array_equal(valid, ids >= 0)

    def test_box_front_face(self):
        K = CameraIntrinsics.default(32, 32)
        depth = render_depth(AnalyticScene((BoxAA((-0.5, -0.5, 2.0), (0.5, 0.5, 3.0)),)), K)
        assert depth[16, 16] == 2.0

    @given(
        o=st.tuples(*[st.floats(-2, 2)] * 3),
        d=st.tuples(*[st.floats(-1, 1)] * 3),
    )
    def test_box_interval_matches_sampling(self, o, d):
        box = BoxAA((-0.5, -0.4, 1.0), (0.3, 0.6, 1.5))
        o, d = np.array([o]), np.array([d])
        if np.linalg.norm(d) < 1e-3:
            return
        t0, t1 = box.interval(o, d)
        ts = np.linspace(-10, 10, 4001)
        pts = o + ts[:, None] * d
        inside = np.all((pts >= box.min) & (pts <= box.max), axis=1)
        if np.isnan(t0[0]):
            assert not inside.any()
        else:
            mid = o + 0.5 * (t0 + t1)[:, None] * d
            assert np.all(mid >= np.array(box.min) - 1e-9) and np.all(mid <= np.array(box.max) + 1e-9)
            assert not inside[(ts < t0[0] - 0.01) | (ts > t1[0] + 0.01)].any()

    @pytest.mark.parametrize(
        "make", [lambda: Sphere((0, 0, 1), 0), lambda: BoxAA((0, 0, 0), (1, 0, 1)), lambda: Sphere((0, 0), 1)]
    )
    def test_invalid(self, make):
        with pytest.raises(ValueError):
            make()

    def test_empty_scene(self):
        with pytest.raises(ValueError):
            render_depth(AnalyticScene(()), CameraIntrinsics.default(4, 4))


class TestOracle:
    def test_overhead_sun_shadows_footprint(self):
        scene, K = sphere_scene(96)
        depth = render_depth(scene, K)
        mask = oracle_shadow_mask(scene, depth, K, LightSpec.directional((0.0, -1.0, 0.0))).values
        ids = render_ids(scene, K)
        points, _ = lift_depth_map(K, depth)
        ball = scene.primitives[2]
        cx, _, cz = ball.center
        ground = ids == 0
        r2 = (points[..., 0] - cx) ** 2 + (points[..., 2] - cz) ** 2
        clear = np.abs(r2 - ball.radius**2) > 1e-4
        under = r2 < ball.radius**2
        assert (ground & under).any()
        assert np.all(mask[ground & under & clear] == 1)
        assert np.all(mask[ground & ~under & clear] == 0)

    def test_light_inside_box(self):
        K = CameraIntrinsics.default(64, 64)
        scene = AnalyticScene((GroundPlane(0.5), Wall(4.0), BoxAA((-0.3, -0.3, 1.7), (0.3, 0.3, 2.3))))
        depth = render_depth(scene, K)
        mask = oracle_shadow_mask(scene, depth, K, LightSpec.point((0.0, 0.0, 2.0))).values
        valid = np.isfinite(depth)
        assert np.all(mask[valid] == 1)

    def test_independent_of_lgi_parameters(self):
        # the oracle takes no sampling parameters; it only depends on the scene,
        # depth and light, and is stable to its own ray offset
        scene, K = sphere_scene(96)
        depth = render_depth(scene, K)
        light = LightSpec.point((0.4, -0.4, 0.2))
        a = oracle_shadow_mask(scene, depth, K, light, OracleConfig(shadow_epsilon=1e-5)).values
        b = oracle_shadow_mask(scene, depth, K, light, OracleConfig(shadow_epsilon=1e-7)).values
        assert np.array_equal(a, b)

    def test_invalid_pixels_unshadowed(self):
        scene, K = sphere_scene(32)
        depth = render_depth(scene, K)
        depth[:4] = np.nan
        mask = oracle_shadow_mask(scene, depth, K, LightSpec.directional((0, -1, 0))).values
        assert not mask[:4].any()

    def test_shape_mismatch(self):
        scene, K = sphere_scene(32)
        with pytest.raises(ShapeMismatch):
            oracle_shadow_mask(scene, np.ones((3, 3)), K, LightSpec.point((0, 0, 1)))

    def test_directional(self):
        scene = AnalyticScene((Sphere((0, 0, 2), 0.5),))
        blocked = shadow_rays_blocked(scene, [[0, 0, 3], [2, 0, 3]], LightSpec.directional((0, 0, -1)))
        assert blocked.tolist() == [True, False]


class TestSuite:
    def test_defaults(self):
        assert SUITE_SIZE == 20

    def test_deterministic(self, small_suite):
        again = scene_suite(0, count=4, size=96)
        assert [e.scene for e in again] == [e.scene for e in small_suite]
        assert [e.light for e in again] == [e.light for e in small_suite]
        other = scene_suite(1, count=4, size=96)
        assert [e.scene for e in other] != [e.scene for e in small_suite]

    def test_shadows_visible(self, small_suite):
        for entry in small_suite:
            K = entry.intrinsics
            assert K == suite_intrinsics(96)
            depth = render_depth(entry.scene, K)
            mask = oracle_shadow_mask(entry.scene, depth, K, entry.light).values > 0
            cast = mask & (render_ids(entry.scene, K) != 1)
            assert cast.sum() > 0
            border = np.concatenate([cast[0], cast[-1], cast[:, 0], cast[:, -1]])
            assert not border.any()

    def test_back_lit_lights_behind_occluder(self):
        for entry in scene_suite(0, count=2, size=64, front_lit=False):
            occ = entry.scene.primitives[1]
            center = np.asarray(occ.center) if isinstance(occ, Sphere) else (np.asarray(occ.min) + np.asarray(occ.max)) / 2
            assert entry.light.vector[2] > center[2]


class TestRadiance:
    @pytest.fixture(scope="class")
    @classmethod
    def setup(cls):
        scene, K = sphere_scene(48)
        a = LightSpec.point((0.4, -0.4, 0.2), color=(1.0, 0.5, 0.2))
        b = LightSpec.directional((-0.3, -0.8, -0.5), color=(0.2, 0.4, 1.0), intensity=0.7)
        return scene, K, a, b

    def test_linear_in_lights(self, setup):
        scene, K, a, b = setup
        both = render_radiance(scene, K, [a, b])
        assert np.allclose(both, render_radiance(scene, K, [a]) + render_radiance(scene, K, [b]), atol=1e-15)

    @settings(max_examples=10, deadline=None)
    @given(k=st.floats(0.0, 10.0))
    def test_intensity_scales(self, setup, k):
        scene, K, a, _ = setup
        scaled = LightSpec.point(a.position, color=a.color, intensity=k * a.intensity)
        assert np.allclose(render_radiance(scene, K, [scaled]), k * render_radiance(scene, K, [a]), rtol=1e-12, atol=1e-15)

    def test_shadowed_pixels_dark(self, setup):
        scene, K, a, _ = setup
        img = render_radiance(scene, K, [a])
        mask = oracle_shadow_mask(scene, render_depth(scene, K), K, a).values
        assert np.all(img[mask == 1] == 0)
        assert img.shape == (48, 48, 3) and np.all(img >= 0)

    def test_no_lights_is_black(self, setup):
        scene, K, _, _ = setup
        assert not render_radiance(scene, K, []).any()
