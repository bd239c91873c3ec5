import numpy as np
import pytest
import torch

from fdmar.wavelet import (HaarDownsample, SubBands, concat_bands, concat_hf,
                           crop_padding, dwt2, idwt2, pad_to_even, split_bands,
                           split_hf)


def rand(*shape, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


class TestDwt2:
    def test_constant_image(self):
        c = 0.37
        x = torch.full((1, 8, 8), c, dtype=torch.float64)
        bands = dwt2(x)
        assert torch.allclose(bands.ll, torch.full_like(bands.ll, 2 * c))
        for detail in (bands.lh, bands.hl, bands.hh):
            assert detail.abs().max() < 1e-7

    def test_single_block_oracle(self):
        # direct evaluation of the separable filters on [[a, b], [c, d]];
        # this example pins the row/column filter assignment
        a, b, c, d = 1.0, 2.0, -3.0, 5.0
        x = torch.tensor([[[a, b], [c, d]]], dtype=torch.float64)
        bands = dwt2(x)
        assert bands.ll.item() == pytest.approx((a + b + c + d) / 2)
        assert bands.lh.item() == pytest.approx((a - b + c - d) / 2)
        assert bands.hl.item() == pytest.approx((a + b - c - d) / 2)
        assert bands.hh.item() == pytest.approx((a - b - c + d) / 2)

    def test_parseval(self):
        x = rand(3, 16, 16, seed=1)
        bands = dwt2(x)
        band_energy = sum(float((b ** 2).sum()) for b in bands)
        assert band_energy == pytest.approx(float((x ** 2).sum()), rel=1e-9)

    def test_linearity(self):
        x, y = rand(2, 12, 12, seed=2), rand(2, 12, 12, seed=3)
        left = dwt2(1.7 * x - 0.3 * y)
        right_x, right_y = dwt2(x), dwt2(y)
        for lb, xb, yb in zip(left, right_x, right_y):
            assert torch.allclose(lb, 1.7 * xb - 0.3 * yb, atol=1e-12)

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError):
            dwt2(torch.zeros(1, 7, 8))
        with pytest.raises(ValueError):
            dwt2(torch.zeros(1, 8, 9))


class TestIdwt2:
    def test_round_trip(self):
        x = rand(4, 32, 32, seed=4)
        assert (idwt2(dwt2(x)) - x).abs().max() < 1e-6

    def test_zero_bands(self):
        z = torch.zeros(1, 4, 4, dtype=torch.float64)
        assert idwt2(SubBands(z, z, z, z)).abs().max() == 0

    def test_ll_only_constant(self):
        c = 1.25
        z = torch.zeros(1, 4, 4, dtype=torch.float64)
        out = idwt2(SubBands(torch.full_like(z, 2 * c), z, z, z))
        assert torch.allclose(out, torch.full_like(out, c))

    def test_inconsistent_shapes_rejected(self):
        z = torch.zeros(1, 4, 4)
        with pytest.raises(ValueError):
            idwt2(SubBands(z, z, z, torch.zeros(1, 4, 5)))

    def test_round_trip_many_sizes(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h = 2 * int(rng.integers(4, 33))
            w = 2 * int(rng.integers(4, 33))
            ch = int(rng.integers(1, 5))
            x = rand(ch, h, w, seed=int(rng.integers(1 << 30)))
            assert (idwt2(dwt2(x)) - x).abs().max() < 1e-6


class TestConcat:
    def test_hf_split_exact(self):
        bands = dwt2(rand(3, 8, 8, seed=5))
        lh, hl, hh = split_hf(concat_hf(bands))
        assert torch.equal(lh, bands.lh)
        assert torch.equal(hl, bands.hl)
        assert torch.equal(hh, bands.hh)

    def test_zero_bands(self):
        z = torch.zeros(2, 4, 4)
        assert concat_hf(SubBands(z, z, z, z)).abs().max() == 0

    def test_channel_count(self):
        bands = dwt2(rand(5, 8, 8, seed=6))
        assert concat_hf(bands).shape == (15, 4, 4)
        assert concat_bands(bands).shape == (20, 4, 4)

    def test_split_bands_round_trip(self):
        bands = dwt2(rand(2, 8, 8, seed=7))
        back = split_bands(concat_bands(bands))
        for a, b in zip(back, bands):
            assert torch.equal(a, b)


class TestHaarDownsample:
    def test_identity_mixing_is_band_concat(self):
        hwd = HaarDownsample(3, 12)
        hwd.init_identity()
        x = rand(1, 3, 8, 8, seed=8).float()
        expected = concat_bands(dwt2(x))
        assert torch.allclose(hwd(x), expected, atol=1e-6)

    def test_shape_contract(self):
        hwd = HaarDownsample(4, 7)
        out = hwd(torch.randn(2, 4, 16, 10))
        assert out.shape == (2, 7, 8, 5)

    def test_premix_invertible(self):
        hwd = HaarDownsample(2, 8)
        x = rand(1, 2, 16, 16, seed=9)
        back = idwt2(split_bands(hwd.premix(x)))
        assert (back - x).abs().max() < 1e-6

    def test_identity_requires_matching_channels(self):
        with pytest.raises(ValueError):
            HaarDownsample(3, 8).init_identity()


class TestPadding:
    def test_pad_crop_round_trip(self):
        x = rand(2, 7, 9, seed=10)
        padded, pad = pad_to_even(x)
        assert padded.shape[-2] % 2 == 0 and padded.shape[-1] % 2 == 0
        assert torch.equal(crop_padding(padded, pad), x)

    def test_even_input_untouched(self):
        x = rand(1, 8, 8, seed=11)
        padded, pad = pad_to_even(x)
        assert pad == (0, 0)
        assert torch.equal(padded, x)
