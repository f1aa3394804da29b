import numpy as np
import pytest

from speclift.detect import (
    color_dispersion,
    detect_specular_mask,
    dilate_mask,
    optimal_beta,
)
from speclift.errors import DegenerateInputError
from speclift.model import Frame, ScalarField, SpecularMask, mean_intensity


def gray_frame(values):
    v = np.asarray(values, dtype=np.float64)
    return Frame(np.repeat(v[:, :, None], 3, axis=2))


class TestColorDispersion:
    def test_constant_frame_is_zero(self):
        assert color_dispersion(gray_frame(np.full((4, 4), 0.5))) == 0.0

    def test_two_pixel_half(self):
        f = gray_frame(np.array([[0.0, 1.0]]))
        assert color_dispersion(f) == pytest.approx(0.5)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(11)
        f = Frame(rng.random((5, 5, 3)))
        vals = mean_intensity(f).values.ravel()
        mean = sum(vals) / len(vals)
        var = sum((x - mean) ** 2 for x in vals) / (len(vals) - 1)
        assert color_dispersion(f) == pytest.approx(var, abs=1e-12)

    def test_single_pixel_rejected(self):
        with pytest.raises(DegenerateInputError):
            color_dispersion(Frame(np.zeros((1, 1, 3))))


def brute_force_otsu(values):
    """All 256 candidate thresholds, maximizing between-class variance."""
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = v.min(), v.max()
    hist, edges = np.histogram(v, bins=256, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    best_t, best_sigma = 0, -1.0
    for t in range(255):
        n0 = hist[: t + 1].sum()
        n1 = hist[t + 1:].sum()
        if n0 == 0 or n1 == 0:
            sigma = 0.0
        else:
            mu0 = (hist[: t + 1] * centers[: t + 1]).sum() / n0
            mu1 = (hist[t + 1:] * centers[t + 1:]).sum() / n1
            sigma = n0 * n1 * (mu0 - mu1) ** 2
        if sigma > best_sigma:
            best_sigma, best_t = sigma, t
    return edges[best_t + 1]


class TestOptimalBeta:
    def test_constant_field_sentinel(self):
        assert optimal_beta(ScalarField(np.full((4, 4), 0.2))) is None

    def test_balanced_bimodal_between_modes(self):
        v = np.array([0.1] * 50 + [0.9] * 50).reshape(10, 10)
        beta = optimal_beta(ScalarField(v))
        assert 0.1 < beta < 0.9

    def test_unbalanced_bimodal_matches_oracle_exactly(self):
        v = np.array([0.1] * 90 + [0.9] * 10).reshape(10, 10)
        assert optimal_beta(ScalarField(v)) == brute_force_otsu(v)

    def test_random_field_matches_oracle(self):
        rng = np.random.default_rng(21)
        v = rng.random((12, 12))
        assert optimal_beta(ScalarField(v)) == pytest.approx(
            brute_force_otsu(v), abs=1e-12
        )


class TestDilateMask:
    def test_radius_zero_identity(self):
        rng = np.random.default_rng(1)
        m = SpecularMask(rng.random((6, 6)) > 0.7)
        assert np.array_equal(dilate_mask(m, 0).bits, m.bits)

    def test_single_pixel_becomes_block(self):
        m = np.zeros((5, 5), bool)
        m[2, 2] = True
        out = dilate_mask(SpecularMask(m), 1).bits
        expect = np.zeros((5, 5), bool)
        expect[1:4, 1:4] = True
        assert np.array_equal(out, expect)

    def test_border_clipping(self):
        m = np.zeros((4, 4), bool)
        m[0, 0] = True
        out = dilate_mask(SpecularMask(m), 1).bits
        expect = np.zeros((4, 4), bool)
        expect[0:2, 0:2] = True
        assert np.array_equal(out, expect)

    def test_radius_two_equals_two_radius_one(self):
        rng = np.random.default_rng(8)
        m = SpecularMask(rng.random((9, 9)) > 0.85)
        once = dilate_mask(dilate_mask(m, 1), 1)
        twice = dilate_mask(m, 2)
        assert np.array_equal(once.bits, twice.bits)

    def test_extensive_and_monotone(self):
        rng = np.random.default_rng(12)
        m = SpecularMask(rng.random((8, 8)) > 0.8)
        d1 = dilate_mask(m, 1)
        d2 = dilate_mask(m, 2)
        assert np.all(d1.bits[m.bits])
        assert np.all(d2.bits[d1.bits])


class TestDetectSpecularMask:
    def test_uniform_frame_empty_mask(self):
        mask, stats = detect_specular_mask(gray_frame(np.full((6, 6), 0.5)))
        assert mask.count == 0
        assert stats.dispersion == 0.0
        assert stats.beta is None

    def test_saturated_patch_detected(self):
        v = np.full((8, 8), 0.1)
        v[3:5, 3:5] = 1.0
        mask, stats = detect_specular_mask(gray_frame(v), dilation_radius=1)
        # independent evaluation of both predicates
        f = gray_frame(v)
        intensity = mean_intensity(f).values
        s2 = color_dispersion(f)
        hot = intensity > intensity.max() - s2
        from speclift.model import gradient_magnitude

        grad = gradient_magnitude(mean_intensity(f))
        beta = optimal_beta(grad)
        if beta is not None:
            hot |= grad.values > beta
        expect = dilate_mask(SpecularMask(hot), 1).bits
        assert np.array_equal(mask.bits, expect)
        assert np.all(mask.bits[3:5, 3:5])

    def test_mask_partitions_domain(self):
        rng = np.random.default_rng(4)
        mask, _ = detect_specular_mask(Frame(rng.random((8, 8, 3))))
        comp = mask.complement()
        assert np.all(mask.bits | comp.bits)
        assert not np.any(mask.bits & comp.bits)

    def test_raising_to_new_max_stays_detected(self):
        # raising a pixel above every other keeps it specular
        rng = np.random.default_rng(17)
        v = 0.2 + 0.3 * rng.random((8, 8))
        v[4, 4] = 0.99
        mask, _ = detect_specular_mask(gray_frame(v), dilation_radius=0)
        assert mask.bits[4, 4]

    def test_intensity_triggered_pixels_vanish_after_replacement(self):
        # replace detected pixels with the frame minimum; the intensity
        # predicate must not re-trigger on them
        rng = np.random.default_rng(30)
        v = 0.2 + 0.4 * rng.random((10, 10))
        v[2:4, 6:8] = 0.98
        f = gray_frame(v)
        mask, stats = detect_specular_mask(f, dilation_radius=0)
        repl = v.copy()
        repl[mask.bits] = v.min()
        f2 = gray_frame(repl)
        intensity = mean_intensity(f2).values
        s2 = color_dispersion(f2)
        hot2 = intensity > intensity.max() - s2
        assert not np.any(hot2 & mask.bits)
