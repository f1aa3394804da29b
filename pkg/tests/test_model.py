import numpy as np
import pytest

from speclift.errors import DegenerateInputError, DimensionMismatchError
from speclift.model import (
    Frame,
    ScalarField,
    Sequence,
    SpecularMask,
    gradient_magnitude,
    mean_intensity,
)


def rand_frame(rng, h=4, w=4):
    return Frame(rng.random((h, w, 3)))


class TestFrame:
    def test_valid_construction(self):
        f = Frame(np.zeros((2, 3, 3)))
        assert f.height == 2 and f.width == 3

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(DimensionMismatchError):
            Frame(np.zeros((4, 4, 2)))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Frame(np.full((2, 2, 3), 1.5))

    def test_rejects_nan(self):
        a = np.zeros((2, 2, 3))
        a[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            Frame(a)

    def test_immutable(self):
        f = Frame(np.zeros((2, 2, 3)))
        with pytest.raises(ValueError):
            f.data[0, 0, 0] = 1.0


class TestSequence:
    def test_uniform_dims_enforced(self):
        a = Frame(np.zeros((2, 2, 3)))
        b = Frame(np.zeros((3, 2, 3)))
        with pytest.raises(DimensionMismatchError):
            Sequence((a, b))

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            Sequence(())


class TestSpecularMask:
    def test_partition_of_domain(self):
        rng = np.random.default_rng(0)
        m = SpecularMask(rng.random((6, 6)) > 0.5)
        c = m.complement()
        assert np.all(m.bits | c.bits)
        assert not np.any(m.bits & c.bits)

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            SpecularMask(np.array([[0, 2]]))


class TestMeanIntensity:
    def test_all_white_is_one(self):
        f = Frame(np.ones((3, 3, 3)))
        assert np.allclose(mean_intensity(f).values, 1.0)

    def test_single_red_pixel(self):
        a = np.zeros((1, 1, 3))
        a[0, 0, 0] = 1.0
        assert mean_intensity(Frame(a)).values[0, 0] == pytest.approx(1.0 / 3.0)

    def test_matches_per_pixel_oracle(self):
        rng = np.random.default_rng(42)
        f = rand_frame(rng)
        got = mean_intensity(f).values
        for i in range(4):
            for j in range(4):
                expect = (f.data[i, j, 0] + f.data[i, j, 1] + f.data[i, j, 2]) / 3.0
                assert got[i, j] == pytest.approx(expect, abs=1e-15)

    def test_channel_permutation_invariant(self):
        rng = np.random.default_rng(7)
        f = rand_frame(rng)
        swapped = Frame(f.data[:, :, [2, 0, 1]])
        assert np.allclose(
            mean_intensity(f).values, mean_intensity(swapped).values
        )


class TestGradientMagnitude:
    def test_constant_field_is_zero(self):
        g = gradient_magnitude(ScalarField(np.full((5, 5), 0.3)))
        assert np.allclose(g.values, 0.0)

    def test_linear_ramp(self):
        a = 0.07
        field = ScalarField(a * np.arange(6)[:, None] * np.ones((1, 6)))
        g = gradient_magnitude(field)
        assert np.allclose(g.values, abs(a))

    def test_matches_stencil_oracle(self):
        rng = np.random.default_rng(5)
        v = rng.random((6, 6))
        got = gradient_magnitude(ScalarField(v)).values
        # independent recomputation: central interior, one-sided borders
        gi = np.zeros_like(v)
        gj = np.zeros_like(v)
        gi[1:-1, :] = (v[2:, :] - v[:-2, :]) / 2.0
        gi[0, :] = v[1, :] - v[0, :]
        gi[-1, :] = v[-1, :] - v[-2, :]
        gj[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / 2.0
        gj[:, 0] = v[:, 1] - v[:, 0]
        gj[:, -1] = v[:, -1] - v[:, -2]
        assert np.allclose(got, np.hypot(gi, gj), atol=1e-14)

    def test_homogeneous_in_scaling(self):
        rng = np.random.default_rng(9)
        v = rng.random((5, 7))
        c = -2.5
        g1 = gradient_magnitude(ScalarField(v)).values
        g2 = gradient_magnitude(ScalarField(np.abs(c) * v)).values
        assert np.allclose(g2, abs(c) * g1)

    def test_degenerate_shape_rejected(self):
        with pytest.raises(DegenerateInputError):
            gradient_magnitude(ScalarField(np.zeros((1, 5))))
