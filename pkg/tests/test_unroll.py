import pytest
import torch

from fdmar.ssm import MambaBlock
from fdmar.unroll import (StageSteps, UnrolledRefiner, WMModule, artifact_update,
                          image_update, init_reconstruction, u_update)
from fdmar.wavelet import concat_hf, dwt2, idwt2


def rand(*shape, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def make_identity_refiner(stages=1, **kw):
    refiner = UnrolledRefiner(stages=stages, band_channels=1, **kw).double()
    for wm in list(refiner.wm_a) + list(refiner.wm_x):
        wm.zero_residuals()
    return refiner


IDENTITY_STEPS = {"tau1": 0.5, "tau2": 0.5, "tau3": 0.5, "gamma": 1.0, "delta": 0.0}


class TestInitReconstruction:
    def test_clean_image_round_trip(self):
        x = rand(2, 1, 16, 16, seed=1)
        bands = dwt2(x)
        u0 = init_reconstruction(bands.ll, concat_hf(bands))
        assert (u0 - x).abs().max() < 1e-6

    def test_zero_bands(self):
        z = torch.zeros(1, 1, 8, 8)
        assert init_reconstruction(z, torch.zeros(1, 3, 8, 8)).abs().max() == 0

    def test_bands_recoverable(self):
        ll = rand(1, 1, 8, 8, seed=2)
        hf = rand(1, 3, 8, 8, seed=3)
        u0 = init_reconstruction(ll, hf)
        back = dwt2(u0)
        assert (back.ll - ll).abs().max() < 1e-6
        assert (concat_hf(back) - hf).abs().max() < 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            init_reconstruction(torch.zeros(1, 1, 8, 8), torch.zeros(1, 3, 4, 4))


class TestArtifactUpdate:
    def test_half_step_is_pure_gradient(self):
        y = rand(1, 1, 8, 8, seed=4)
        x_prev = rand(1, 1, 8, 8, seed=5)
        a_prev = dwt2(rand(1, 1, 8, 8, seed=6))
        out = artifact_update(a_prev, y, x_prev, tau1=0.5)
        expected = dwt2(y - x_prev)
        for o, e in zip(out, expected):
            assert torch.allclose(o, e, atol=1e-12)

    def test_zero_step_keeps_state(self):
        y = rand(1, 1, 8, 8, seed=7)
        x_prev = rand(1, 1, 8, 8, seed=8)
        a_prev = dwt2(rand(1, 1, 8, 8, seed=9))
        out = artifact_update(a_prev, y, x_prev, tau1=0.0)
        for o, e in zip(out, a_prev):
            assert torch.equal(o, e)

    def test_quarter_step_hand_computed(self):
        # tau1 = 0.25: a_tilde = 0.5 a_prev + 0.5 W(y - x)
        y = rand(1, 1, 4, 4, seed=10)
        x_prev = rand(1, 1, 4, 4, seed=11)
        a_prev = dwt2(rand(1, 1, 4, 4, seed=12))
        out = artifact_update(a_prev, y, x_prev, tau1=0.25)
        grad = dwt2(y - x_prev)
        for o, ap, g in zip(out, a_prev, grad):
            assert torch.allclose(o, 0.5 * ap + 0.5 * g, atol=1e-12)


class TestImageUpdate:
    def _state(self):
        y = rand(1, 1, 8, 8, seed=13)
        u_prev = rand(1, 1, 8, 8, seed=14)
        a_k = dwt2(rand(1, 1, 8, 8, seed=15))
        x_prev = dwt2(rand(1, 1, 8, 8, seed=16))
        return y, u_prev, a_k, x_prev

    def test_zero_step_keeps_state(self):
        y, u_prev, a_k, x_prev = self._state()
        out = image_update(x_prev, y, a_k, u_prev, tau2=0.0, gamma=1.0, delta=0.5)
        for o, e in zip(out, x_prev):
            assert torch.equal(o, e)

    def test_pure_data_term(self):
        y, u_prev, a_k, x_prev = self._state()
        out = image_update(x_prev, y, a_k, u_prev, tau2=0.5, gamma=1.0, delta=0.0)
        expected = dwt2(y - idwt2(a_k))
        for o, e in zip(out, expected):
            assert torch.allclose(o, e, atol=1e-12)

    def test_balanced_guidance_hand_computed(self):
        # tau2 = 0.5, gamma = delta = 1: x_tilde = (W(y - A) + W(u_prev)) / 2
        y = rand(1, 1, 4, 4, seed=17)
        u_prev = rand(1, 1, 4, 4, seed=18)
        a_k = dwt2(rand(1, 1, 4, 4, seed=19))
        x_prev = dwt2(rand(1, 1, 4, 4, seed=20))
        out = image_update(x_prev, y, a_k, u_prev, tau2=0.5, gamma=1.0, delta=1.0)
        expected_a = dwt2(y - idwt2(a_k))
        expected_b = dwt2(u_prev)
        for o, ea, eb in zip(out, expected_a, expected_b):
            assert torch.allclose(o, (ea + eb) / 2, atol=1e-12)

    def test_degenerate_weights_rejected(self):
        y, u_prev, a_k, x_prev = self._state()
        with pytest.raises(ValueError):
            image_update(x_prev, y, a_k, u_prev, tau2=0.5, gamma=0.0, delta=0.0)


class TestUUpdate:
    def test_half_step_is_synthesis(self):
        u_prev = rand(1, 1, 8, 8, seed=21)
        x_w = dwt2(rand(1, 1, 8, 8, seed=22))
        out = u_update(u_prev, x_w, tau3=0.5)
        assert torch.allclose(out, idwt2(x_w), atol=1e-12)

    def test_zero_step_keeps_state(self):
        u_prev = rand(1, 1, 8, 8, seed=23)
        x_w = dwt2(rand(1, 1, 8, 8, seed=24))
        assert torch.equal(u_update(u_prev, x_w, tau3=0.0), u_prev)

    def test_fixed_point(self):
        x_w = dwt2(rand(1, 1, 8, 8, seed=25))
        u_prev = idwt2(x_w)
        for tau3 in (0.1, 0.37, 0.9):
            assert torch.allclose(u_update(u_prev, x_w, tau3), u_prev, atol=1e-12)


class TestRefiner:
    def test_identity_reduction(self):
        # with identity proximal modules, tau = 1/2, gamma = 1, delta = 0,
        # one full stage collapses to the identity on u0
        for seed in range(3):
            refiner = make_identity_refiner(stages=1)
            y = rand(1, 1, 16, 16, seed=30 + seed)
            u0 = rand(1, 1, 16, 16, seed=60 + seed)
            out = refiner(y=y, u0=u0, step_overrides=IDENTITY_STEPS)
            assert (out - u0).abs().max() < 1e-5

    def test_identity_reduction_with_mask(self):
        refiner = make_identity_refiner(stages=1)
        y = rand(1, 1, 16, 16, seed=33)
        u0 = rand(1, 1, 16, 16, seed=34)
        mask = (rand(1, 1, 16, 16, seed=35) > 0).double()
        out = refiner(y=y, u0=u0, mask_i=mask, step_overrides=IDENTITY_STEPS)
        assert (out - u0).abs().max() < 1e-5

    def test_multi_stage_identity(self):
        refiner = make_identity_refiner(stages=3)
        y = rand(1, 1, 8, 8, seed=36)
        u0 = rand(1, 1, 8, 8, seed=37)
        out = refiner(y=y, u0=u0, step_overrides=IDENTITY_STEPS)
        assert (out - u0).abs().max() < 1e-5

    def test_stage_count_contract(self):
        with pytest.raises(ValueError):
            UnrolledRefiner(stages=0)
        assert UnrolledRefiner(stages=1).stages == 1
        assert len(UnrolledRefiner(stages=2).steps) == 2

    def test_determinism(self):
        refiner = UnrolledRefiner(stages=2).double()
        y = rand(1, 1, 16, 16, seed=38)
        u0 = rand(1, 1, 16, 16, seed=39)
        assert torch.equal(refiner(y=y, u0=u0), refiner(y=y, u0=u0))

    def test_stability_ten_stages(self):
        torch.manual_seed(40)
        refiner = UnrolledRefiner(stages=10).double()
        with torch.no_grad():
            for p in refiner.parameters():
                p.clamp_(-1.0, 1.0)
        y = rand(1, 1, 16, 16, seed=41)
        u0 = rand(1, 1, 16, 16, seed=42)
        out = refiner(y=y, u0=u0)
        assert torch.isfinite(out).all()

    def test_spatial_domain_identity(self):
        refiner = make_identity_refiner(stages=1, domain="spatial")
        y = rand(1, 1, 8, 8, seed=43)
        u0 = rand(1, 1, 8, 8, seed=44)
        out = refiner(y=y, u0=u0, step_overrides=IDENTITY_STEPS)
        assert (out - u0).abs().max() < 1e-5

    def test_unknown_domain_rejected(self):
        with pytest.raises(ValueError):
            UnrolledRefiner(stages=1, domain="fourier")

    def test_gradients_match_finite_differences(self, fd_check):
        torch.manual_seed(47)
        refiner = UnrolledRefiner(stages=1, wm_blocks=1, state_dim=2).double()
        y = rand(1, 1, 8, 8, seed=48)
        u0 = rand(1, 1, 8, 8, seed=49)
        target = rand(1, 1, 8, 8, seed=50)

        def loss_fn():
            return ((refiner(y=y, u0=u0) - target) ** 2).mean()

        fd_check(refiner, loss_fn, max_entries=4)

    def test_step_parameterization_ranges(self):
        steps = StageSteps()
        with torch.no_grad():
            assert 0.0 < float(steps.tau1) < 1.0
            assert 0.0 < float(steps.tau2) < 1.0
            assert 0.0 < float(steps.tau3) < 1.0
            assert float(steps.gamma) > 0.0
            assert float(steps.delta) > 0.0
            # raw zero puts tau exactly at 1/2
            steps.tau1_raw.zero_()
            assert float(steps.tau1) == 0.5


class TestWMModule:
    def test_wavelet_mode_identity_after_zero(self):
        wm = WMModule(1, n_blocks=2).double()
        wm.zero_residuals()
        bands = dwt2(rand(1, 1, 8, 8, seed=45))
        out = wm(bands)
        for o, e in zip(out, bands):
            assert torch.equal(o, e)

    def test_spatial_mode_identity_at_init(self):
        wm = WMModule(1, n_blocks=1, spatial=True).double()
        x = rand(1, 1, 8, 8, seed=46)
        assert torch.equal(wm(x), x)

    def test_block_width_is_stacked_bands(self):
        wm = WMModule(2, n_blocks=1)
        block = wm.blocks[0]
        assert isinstance(block, MambaBlock)
        assert block.ffn[0].in_channels == 8
