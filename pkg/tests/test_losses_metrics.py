import math

import numpy as np
import pytest
import torch

from fdmar.losses import (ContrastiveTriplet, CurriculumSchedule, IdentityExtractor,
                          RandomConvExtractor, cr_loss, joint_loss, make_extractor,
                          masked_l1, sgcr_loss)
from fdmar.metrics import (CNR_CAP, PSNR_CAP_DB, intensity_profile, psnr,
                           roi_std_cnr, ssim)

IDENTITY = IdentityExtractor()


def img(*vals):
    return torch.tensor(vals, dtype=torch.float64).reshape(1, 1, 1, len(vals))


class TestSgcrLoss:
    def test_zero_at_anchor_equals_positive(self):
        x = torch.rand(1, 1, 4, 4)
        triplet = ContrastiveTriplet(x, x.clone(), torch.rand(1, 1, 4, 4))
        for mu in (0.0, 0.3, 1.0):
            assert float(sgcr_loss(triplet, IDENTITY, mu)) == 0.0

    def test_hand_computed_triplet(self):
        # anchor 0.5, positive 0.0, negative 1.0 on 1x1 images, eps = 0,
        # mu = 0: d = 0.5, r = 0.5 / 0.5 = 1 -> loss = 1.5
        triplet = ContrastiveTriplet(img(0.5), img(0.0), img(1.0))
        loss = sgcr_loss(triplet, IDENTITY, mu=0.0, epsilon=0.0)
        assert float(loss) == pytest.approx(1.5, abs=1e-12)

    def test_mu_weighting(self):
        triplet = ContrastiveTriplet(img(0.5), img(0.0), img(1.0))
        # mu = 1: (1 - 1) r + (1 + 1) d = 2 * 0.5 = 1.0
        assert float(sgcr_loss(triplet, IDENTITY, mu=1.0, epsilon=0.0)) == \
            pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_negative_distance(self):
        # pushing the negative away from the anchor shrinks the loss
        prev = math.inf
        for neg in (0.6, 1.0, 2.0, 5.0):
            triplet = ContrastiveTriplet(img(0.5), img(0.0), img(neg))
            val = float(sgcr_loss(triplet, IDENTITY, mu=0.0))
            assert val < prev
            prev = val

    def test_nonnegative_random(self):
        gen = torch.Generator().manual_seed(0)
        extractor = RandomConvExtractor(seed=1)
        for _ in range(10):
            t = ContrastiveTriplet(*(torch.rand(1, 1, 16, 16, generator=gen)
                                     for _ in range(3)))
            assert float(sgcr_loss(t, extractor, mu=0.25)) >= 0.0

    def test_validation(self):
        t = ContrastiveTriplet(img(0.5), img(0.0), img(1.0))
        with pytest.raises(ValueError):
            sgcr_loss(t, IDENTITY, mu=1.5)
        bad = ContrastiveTriplet(img(0.5), img(0.0),
                                 torch.zeros(1, 1, 2, 2, dtype=torch.float64))
        with pytest.raises(ValueError):
            sgcr_loss(bad, IDENTITY, mu=0.0)


class TestJointLoss:
    def test_zero_when_output_matches_gt(self):
        gt = torch.rand(1, 1, 4, 4)
        u0 = torch.rand(1, 1, 4, 4)
        mask = torch.ones_like(gt)
        loss = joint_loss(gt.clone(), u0, gt, mask, lambda_g=0.1, mu=0.0,
                          extractor=IDENTITY)
        assert float(loss) == 0.0

    def test_lambda_zero_is_reconstruction_only(self):
        gen = torch.Generator().manual_seed(1)
        pred, u0, gt = (torch.rand(1, 1, 4, 4, generator=gen) for _ in range(3))
        mask = (torch.rand(1, 1, 4, 4, generator=gen) > 0.3).float()
        loss = joint_loss(pred, u0, gt, mask, lambda_g=0.0, mu=0.0,
                          extractor=IDENTITY)
        assert float(loss) == pytest.approx(float(masked_l1(pred, gt, mask)))

    def test_one_pixel_hand_computed(self):
        pred, u0, gt = img(0.5), img(1.0), img(0.0)
        mask = img(1.0)
        lam = 0.1
        expected = 0.5 + lam * 1.5  # masked L1 + lambda * sgcr at mu=0
        loss = joint_loss(pred, u0, gt, mask, lambda_g=lam, mu=0.0,
                          extractor=IDENTITY, epsilon=0.0)
        assert float(loss) == pytest.approx(expected, abs=1e-12)

    def test_modes(self):
        gen = torch.Generator().manual_seed(2)
        pred, u0, gt = (torch.rand(1, 1, 4, 4, generator=gen, dtype=torch.float64)
                        for _ in range(3))
        mask = torch.ones_like(gt)
        rec = float(masked_l1(pred, gt, mask))
        t = ContrastiveTriplet(pred, gt, u0)
        lam = 0.2
        vals = {mode: float(joint_loss(pred, u0, gt, mask, lam, 0.1, IDENTITY,
                                       1e-7, mode)) for mode in
                ("none", "cr", "sgcr", "cr+sgcr")}
        assert vals["none"] == pytest.approx(rec)
        assert vals["cr"] == pytest.approx(rec + lam * float(cr_loss(t, IDENTITY)))
        assert vals["cr+sgcr"] == pytest.approx(
            vals["cr"] + vals["sgcr"] - rec, rel=1e-9)
        with pytest.raises(ValueError):
            joint_loss(pred, u0, gt, mask, lam, 0.1, IDENTITY, mode="bogus")

    def test_mask_restricts_loss(self):
        pred = img(0.0, 5.0)
        gt = img(0.0, 0.0)
        mask = img(1.0, 0.0)
        assert float(masked_l1(pred, gt, mask)) == 0.0


class TestExtractors:
    def test_random_extractor_deterministic(self):
        a = RandomConvExtractor(seed=3)
        b = RandomConvExtractor(seed=3)
        x = torch.rand(1, 1, 16, 16)
        for fa, fb in zip(a(x), b(x)):
            assert torch.equal(fa, fb)

    def test_random_extractor_frozen(self):
        ext = RandomConvExtractor()
        assert all(not p.requires_grad for p in ext.parameters())

    def test_factory(self):
        assert isinstance(make_extractor("identity"), IdentityExtractor)
        assert isinstance(make_extractor("random"), RandomConvExtractor)
        with pytest.raises(ValueError):
            make_extractor("resnet")


class TestCurriculum:
    def test_endpoints_exact(self):
        sched = CurriculumSchedule(mu_start=0.0, mu_end=0.5, total_epochs=200)
        assert sched.mu_at(0) == 0.0
        assert sched.mu_at(200) == 0.5
        assert sched.mu_at(100) == pytest.approx(0.25)
        assert sched.mu_at(400) == 0.5  # clamped

    def test_linear_in_between(self):
        sched = CurriculumSchedule(0.1, 0.7, 10)
        for e in range(11):
            assert sched.mu_at(e) == pytest.approx(0.1 + 0.06 * e)


class TestPsnr:
    def test_identical_capped(self):
        x = np.random.default_rng(0).random((16, 16))
        assert psnr(x, x.copy()) == PSNR_CAP_DB

    def test_uniform_offset_formula(self):
        x = np.random.default_rng(1).random((16, 16)) * 0.5
        assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_symmetric_translation_consistent_monotone(self):
        rng = np.random.default_rng(2)
        x, y = rng.random((8, 8)), rng.random((8, 8))
        assert psnr(x, y) == pytest.approx(psnr(y, x))
        assert psnr(x + 0.2, y + 0.2) == pytest.approx(psnr(x, y))
        noisy = y + 0.3 * rng.standard_normal((8, 8))
        mse = lambda a, b: np.mean((a - b) ** 2)
        if mse(x, noisy) > mse(x, y):
            assert psnr(x, noisy) < psnr(x, y)

    def test_validation(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), data_range=0.0)


class TestSsim:
    def test_identical_is_one(self):
        x = np.random.default_rng(3).random((32, 32))
        assert ssim(x, x.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        x, y = rng.random((32, 32)), rng.random((32, 32))
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-9)

    def test_heavy_noise_degrades(self):
        rng = np.random.default_rng(5)
        x = np.full((64, 64), 0.5)
        y = x + rng.normal(scale=0.5, size=x.shape)
        assert ssim(x, y, data_range=1.0) < 0.5

    def test_matches_reference_implementation(self):
        skimage = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(6)
        x = rng.random((48, 48))
        y = np.clip(x + rng.normal(scale=0.1, size=x.shape), 0, 1)
        ref = skimage.structural_similarity(
            x, y, data_range=1.0, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False)
        assert ssim(x, y) == pytest.approx(ref, abs=2e-4)


class TestRoiStdCnr:
    def test_constant_image_capped(self):
        image = np.full((16, 16), 0.7)
        fg = np.zeros((16, 16), bool); fg[:4, :4] = True
        bg = np.zeros((16, 16), bool); bg[8:, 8:] = True
        stats = roi_std_cnr(image, fg, bg)
        assert stats.std == 0.0
        assert stats.cnr == CNR_CAP
        assert stats.cnr_capped

    def test_unit_contrast_unit_noise(self):
        rng = np.random.default_rng(7)
        n = 200
        image = np.zeros((n, n))
        fg = np.zeros((n, n), bool); fg[:, :n // 2] = True
        bg = np.zeros((n, n), bool); bg[:, n // 2:] = True
        image[fg] = 1.0
        image[bg] = rng.standard_normal(bg.sum())
        stats = roi_std_cnr(image, fg, bg)
        assert stats.cnr == pytest.approx(1.0, rel=0.1)
        assert not stats.cnr_capped

    def test_validation(self):
        image = np.zeros((8, 8))
        empty = np.zeros((8, 8), bool)
        full = np.ones((8, 8), bool)
        with pytest.raises(ValueError):
            roi_std_cnr(image, empty, full)
        with pytest.raises(ValueError):
            roi_std_cnr(image, full, full)


class TestIntensityProfile:
    def test_constant_image(self):
        image = np.full((16, 16), 0.4)
        series = intensity_profile(image, (8, 1), (8, 14), 21)
        assert np.allclose(series, 0.4)

    def test_ramp_exact(self):
        cols = np.arange(32)
        image = np.tile(0.02 * cols + 0.1, (32, 1))
        series = intensity_profile(image, (10, 2), (10, 29), 28)
        expected = 0.02 * np.linspace(2, 29, 28) + 0.1
        assert np.abs(series - expected).max() < 1e-6

    def test_degenerate_segment(self):
        image = np.arange(64, dtype=float).reshape(8, 8)
        series = intensity_profile(image, (3, 4), (3, 4), 7)
        assert np.allclose(series, image[3, 4])

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            intensity_profile(np.zeros((8, 8)), (0, 0), (9, 3), 5)
