import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lgimap.bridgemath import (
    BridgeParams,
    WeightedL1Config,
    bridge_sample,
    change_weights,
    combined_loss,
    compose_lights,
    display_clamp,
    drift_target,
    latent_mse,
    mask_bce,
    mask_iou_loss,
    retrieve_target,
    weighted_l1,
)
from lgimap.errors import DegenerateDenominator, DegenerateTime, ShapeMismatch
from lgimap.lgi import ShadowMask

from oracles import naive_bce, naive_iou_loss, naive_weighted_l1

vec = arrays(np.float64, 4, elements=st.floats(-10, 10))


class TestBridge:
    def test_endpoints_exact(self):
        rng = np.random.default_rng(0)
        z0, z1, noise = rng.normal(size=(3, 5))
        assert np.array_equal(bridge_sample(z0, z1, 0.0, 3.0, noise), z0)
        assert np.array_equal(bridge_sample(z0, z1, 1.0, 3.0, noise), z1)

    @pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
    def test_variance(self, t):
        rng = np.random.default_rng(1)
        sigma = 2.0
        noise = rng.standard_normal((100_000, 2))
        samples = bridge_sample(np.zeros_like(noise), np.ones_like(noise), t, sigma, noise)
        var = samples.var(axis=0)
        expected = sigma**2 * t * (1 - t)
        assert np.all(np.abs(var - expected) < 0.02 * expected)
        assert np.allclose(samples.mean(axis=0), t, atol=0.02)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bridge_sample(np.zeros(3), np.zeros(4), 0.5, 1.0, np.zeros(3))

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            bridge_sample(np.zeros(2), np.zeros(2), 1.5, 1.0, np.zeros(2))
        with pytest.raises(ValueError):
            bridge_sample(np.zeros(2), np.zeros(2), 0.5, -1.0, np.zeros(2))
        with pytest.raises(ValueError):
            BridgeParams(sigma=-0.1)


class TestDrift:
    def test_examples(self):
        z = np.array([0.3, -1.2])
        assert np.array_equal(drift_target(z, z, 0.4), [0, 0])
        z0 = np.array([1.0, 1.0])
        assert np.array_equal(drift_target(z0, z0 + [2, -2], 0.0), [2, -2])
        assert np.array_equal(drift_target([1.0], [2.0], 0.75), [4.0])

    @pytest.mark.parametrize("t", [1.0, 1.5])
    def test_degenerate_time(self, t):
        with pytest.raises(DegenerateTime):
            drift_target([0.0], [1.0], t)
        with pytest.raises(DegenerateTime):
            retrieve_target([0.0], t, [1.0])

    def test_retrieve_examples(self):
        zt = np.array([0.5, 2.0])
        assert np.array_equal(retrieve_target(zt, 0.3, np.zeros(2)), zt)

    @settings(max_examples=300)
    @given(z0=vec, z1=vec, noise=vec, t=st.floats(0.0, 1 - 1e-6), sigma=st.floats(0, 5))
    def test_retrieve_inverts_drift(self, z0, z1, noise, t, sigma):
        zt = bridge_sample(z0, z1, t, sigma, noise)
        z1_hat = retrieve_target(zt, t, drift_target(zt, z1, t))
        assert np.max(np.abs(z1_hat - z1)) < 1e-9

    def test_latent_mse(self):
        rng = np.random.default_rng(2)
        z0, z1, noise = rng.normal(size=(3, 6, 4))
        t = rng.uniform(0, 0.9, size=6)
        endpoint = {float(ti): b for ti, b in zip(t, z1)}

        def exact(zt, ti):
            return drift_target(zt, endpoint[ti], ti)

        assert latent_mse(exact, z0, z1, t, 0.5, noise) < 1e-24
        zero = lambda zt, ti: np.zeros_like(zt)
        expected = np.mean([np.mean(drift_target(bridge_sample(a, b, ti, 0.5, n), b, ti) ** 2) for a, b, n, ti in zip(z0, z1, noise, t)])
        assert latent_mse(zero, z0, z1, t, 0.5, noise) == pytest.approx(expected, rel=1e-12)
        with pytest.raises(ShapeMismatch):
            latent_mse(zero, z0, z1, t[:3], 0.5, noise)


class TestCombined:
    @pytest.mark.parametrize("lz, lx, expected", [(1, 0, 1), (0, 0.2, 2), (0.5, 0.05, 1.0)])
    def test_examples(self, lz, lx, expected):
        assert combined_loss(lz, lx) == pytest.approx(expected, abs=1e-15)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            combined_loss(1, 1, -1)


class TestWeightedL1:
    def test_no_change_no_loss(self):
        rng = np.random.default_rng(3)
        x = rng.random((8, 8, 3))
        assert weighted_l1(rng.random((8, 8, 3)), x, x.copy()) == 0

    def test_single_pixel_block(self):
        x0 = np.zeros((7, 7, 3))
        x1 = x0.copy()
        x1[3, 3, 1] = 0.5
        w = change_weights(x1, x0, WeightedL1Config(dilation_kernel=3))
        expected = np.zeros((7, 7), bool)
        expected[2:5, 2:5] = True
        assert np.array_equal(w, expected)

    def test_threshold_is_strict(self):
        x0 = np.zeros((3, 3))
        x1 = np.full((3, 3), 0.01)
        assert not change_weights(x1, x0, WeightedL1Config(dilation_kernel=1)).any()

    def test_zero_padding_at_border(self):
        x0 = np.zeros((5, 5))
        x1 = x0.copy()
        x1[0, 0] = 1
        w = change_weights(x1, x0, WeightedL1Config(dilation_kernel=5))
        assert w.sum() == 9 and w[:3, :3].all()

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            x0, x1, x1_hat = rng.random((3, 8, 8, 3))
            x1 = np.where(rng.random((8, 8, 3)) < 0.8, x0, x1)
            for tau, k in [(0.01, 3), (0.3, 5), (0.0, 1), (0.01, 17)]:
                got = weighted_l1(x1_hat, x1, x0, WeightedL1Config(tau, k))
                ref = naive_weighted_l1(x1_hat, x1, x0, tau, k)
                assert got == pytest.approx(ref, rel=1e-12, abs=1e-15)

    @given(
        seed=st.integers(0, 2**32 - 1),
        taus=st.tuples(st.floats(0, 1), st.floats(0, 1)),
        k=st.sampled_from([1, 3, 5, 9]),
    )
    def test_monotone_in_tau_and_kernel(self, seed, taus, k):
        rng = np.random.default_rng(seed)
        x0, x1, x1_hat = rng.random((3, 8, 8, 3))
        lo, hi = sorted(taus)
        assert weighted_l1(x1_hat, x1, x0, WeightedL1Config(lo, k)) >= weighted_l1(x1_hat, x1, x0, WeightedL1Config(hi, k))
        assert weighted_l1(x1_hat, x1, x0, WeightedL1Config(lo, k)) >= weighted_l1(x1_hat, x1, x0, WeightedL1Config(lo, 1))

    def test_grayscale(self):
        x0 = np.zeros((4, 4))
        x1 = np.eye(4)
        assert weighted_l1(np.zeros((4, 4)), x1, x0, WeightedL1Config(0.5, 1)) == 0.25

    @pytest.mark.parametrize("kw", [dict(dilation_kernel=4), dict(dilation_kernel=0), dict(tau=-1), dict(dilation_kernel=2.5)])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            WeightedL1Config(**kw)

    def test_defaults(self):
        cfg = WeightedL1Config()
        assert (cfg.tau, cfg.dilation_kernel) == (0.01, 17)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            weighted_l1(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestMaskLosses:
    def test_bce_examples(self):
        eps = 1e-7
        gt = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert mask_bce(np.where(gt == 1, 1 - eps, eps), gt) <= 2e-7
        assert mask_bce(gt, gt) <= 2e-7
        for g in (gt, np.zeros((2, 2)), np.ones((2, 2))):
            assert mask_bce(np.full((2, 2), 0.5), g) == pytest.approx(math.log(2), rel=1e-15)

    def test_iou_examples(self):
        a = np.array([[1.0, 1.0], [0.0, 0.0]])
        b = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert mask_iou_loss(a, b) == pytest.approx(2 / 3, abs=1e-15)
        assert mask_iou_loss(a, a) == 0
        assert mask_iou_loss(a, 1 - a) == 1

    def test_iou_degenerate(self):
        with pytest.raises(DegenerateDenominator):
            mask_iou_loss(np.zeros((3, 3)), np.zeros((3, 3)))

    def test_accepts_shadow_masks(self):
        pred = ShadowMask(np.full((2, 2), 0.25), "soft")
        gt = ShadowMask(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert mask_iou_loss(pred, gt) == mask_iou_loss(pred.values, gt.values)
        assert mask_bce(pred, gt) == mask_bce(pred.values, gt.values)

    def test_match_naive_oracles(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            pred = rng.random((4, 4))
            gt = (rng.random((4, 4)) < 0.5).astype(float)
            assert mask_bce(pred, gt) == pytest.approx(naive_bce(pred, gt), rel=1e-12)
            if gt.any() or pred.any():
                assert mask_iou_loss(pred, gt) == pytest.approx(naive_iou_loss(pred, gt), rel=1e-12, abs=1e-15)

    @given(
        pred=arrays(np.float64, (3, 3), elements=st.floats(0, 1)),
        gt=arrays(np.float64, (3, 3), elements=st.sampled_from([0.0, 1.0])),
    )
    def test_iou_loss_bounded(self, pred, gt):
        if not (pred.any() or gt.any()):
            return
        assert -1e-12 <= mask_iou_loss(pred, gt) <= 1 + 1e-12
        assert mask_bce(pred, gt) >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mask_bce(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ShapeMismatch):
            mask_iou_loss(np.ones((2, 2)), np.ones((3, 2)))


images = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).random((3, 4, 4, 3)) * 5)


class TestCompose:
    def test_additive_identity(self):
        x = np.random.default_rng(6).random((4, 4, 3))
        assert np.array_equal(compose_lights([x, np.zeros_like(x)]), x)
        assert np.array_equal(compose_lights([x]), x)

    @given(imgs=images)
    def test_permutation_exact(self, imgs):
        a, b, c = imgs
        ref = compose_lights([a, b, c])
        for perm in ([c, b, a], [b, a, c], [a, c, b]):
            assert np.array_equal(compose_lights(perm), ref)

    @given(imgs=images)
    def test_associative(self, imgs):
        a, b, c = imgs
        left = compose_lights([compose_lights([a, b]), c])
        right = compose_lights([a, compose_lights([b, c])])
        assert np.allclose(left, right, rtol=1e-15, atol=0) or np.max(np.abs(left - right)) < 1e-14

    @given(imgs=images, k=st.integers(1, 8))
    def test_copies_scale(self, imgs, k):
        x = imgs[0]
        assert np.allclose(compose_lights([x] * k), k * x, rtol=1e-14, atol=0)

    def test_errors(self):
        with pytest.raises(ValueError):
            compose_lights([])
        with pytest.raises(ShapeMismatch):
            compose_lights([np.zeros((2, 2, 3)), np.zeros((2, 3, 3))])

    def test_display_clamp(self):
        assert display_clamp(np.array([-1.0, 0.5, 2.0])).tolist() == [0.0, 0.5, 1.0]
