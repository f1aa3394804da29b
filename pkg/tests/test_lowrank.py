import numpy as np
import pytest

from speclift.errors import DimensionMismatchError
from speclift.lowrank import (
    build_casorati,
    lowrank_frames,
    select_rank,
    truncated_svd,
    unstack_casorati,
)
from speclift.model import Frame


def gray_frames(rng, count, h, w):
    return [Frame(np.repeat(rng.random((h, w, 1)), 3, axis=2)) for _ in range(count)]


class TestBuildCasorati:
    def test_single_frame_column(self):
        rng = np.random.default_rng(0)
        f = Frame(rng.random((2, 2, 3)))
        c = build_casorati([f], channel=0)
        assert c.data.shape == (4, 1)
        assert np.array_equal(c.data[:, 0], f.channel(0).ravel())

    def test_identical_frames_rank_one(self):
        rng = np.random.default_rng(1)
        f = Frame(rng.random((3, 4, 3)))
        c = build_casorati([f] * 4, channel=1)
        assert np.linalg.matrix_rank(c.data) == 1

    def test_index_arithmetic_oracle(self):
        rng = np.random.default_rng(2)
        frames = [Frame(rng.random((3, 3, 3))) for _ in range(3)]
        c = build_casorati(frames, channel=2)
        for p in range(9):
            for z in range(3):
                assert c.data[p, z] == frames[z].data[p // 3, p % 3, 2]

    def test_unstack_is_inverse(self):
        rng = np.random.default_rng(3)
        frames = [Frame(rng.random((4, 5, 3))) for _ in range(3)]
        c = build_casorati(frames, channel=0)
        planes = unstack_casorati(c.data, 4, 5)
        for z, plane in enumerate(planes):
            assert np.array_equal(plane, frames[z].channel(0))

    def test_mixed_dimensions_rejected(self):
        rng = np.random.default_rng(4)
        a = Frame(rng.random((3, 3, 3)))
        b = Frame(rng.random((4, 3, 3)))
        with pytest.raises(DimensionMismatchError):
            build_casorati([a, b], channel=0)


class FakeCasorati:
    """Bare matrix wrapper for exercising truncated_svd directly."""

    def __init__(self, data):
        self.data = data


class TestTruncatedSVD:
    def test_rank_one_exact(self):
        rng = np.random.default_rng(5)
        u = rng.random((20, 1))
        v = rng.random((4, 1))
        c = FakeCasorati(u @ v.T)
        dec = truncated_svd(c, 1)
        assert np.linalg.norm(c.data - dec.reconstruct()) < 1e-8

    def test_diagonal_eckart_young(self):
        c = FakeCasorati(np.diag([3.0, 2.0, 1.0]))
        dec = truncated_svd(c, 2)
        err = np.linalg.norm(c.data - dec.reconstruct())
        assert err == pytest.approx(1.0, abs=1e-10)

    def test_singular_values_match_dense_gram_oracle(self):
        rng = np.random.default_rng(6)
        a = rng.random((20, 5))
        dec = truncated_svd(FakeCasorati(a), 3)
        evals = np.linalg.eigvalsh(a.T @ a)[::-1]
        oracle = np.sqrt(np.clip(evals[:3], 0, None))
        assert np.allclose(dec.s, oracle, atol=1e-6)

    def test_factors_orthonormal(self):
        rng = np.random.default_rng(7)
        a = rng.random((50, 6))
        dec = truncated_svd(FakeCasorati(a), 4)
        assert np.allclose(dec.u.T @ dec.u, np.eye(4), atol=1e-8)
        assert np.allclose(dec.v.T @ dec.v, np.eye(4), atol=1e-8)

    def test_orthonormal_even_rank_deficient(self):
        rng = np.random.default_rng(8)
        col = rng.random((30, 1))
        a = np.tile(col, (1, 4))  # rank 1
        dec = truncated_svd(FakeCasorati(a), 3)
        assert np.allclose(dec.u.T @ dec.u, np.eye(3), atol=1e-8)
        assert np.linalg.norm(a - dec.reconstruct()) < 1e-8

    def test_eckart_young_identity_random(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(8, 60))
            z = int(rng.integers(2, 8))
            a = rng.normal(size=(n, z))
            r = int(rng.integers(1, z + 1))
            dec = truncated_svd(FakeCasorati(a), r)
            err2 = np.linalg.norm(a - dec.reconstruct(), "fro") ** 2
            evals = np.sort(np.clip(np.linalg.eigvalsh(a.T @ a), 0, None))[::-1]
            assert err2 == pytest.approx(evals[r:].sum(), abs=1e-8)

    def test_error_monotone_in_rank(self):
        rng = np.random.default_rng(10)
        a = rng.random((30, 6))
        errs = []
        for r in range(1, 7):
            dec = truncated_svd(FakeCasorati(a), r)
            errs.append(np.linalg.norm(a - dec.reconstruct(), "fro"))
        assert all(b <= a_ + 1e-12 for a_, b in zip(errs, errs[1:]))

    def test_rank_out_of_range(self):
        with pytest.raises(ValueError):
            truncated_svd(FakeCasorati(np.zeros((4, 3))), 4)


class TestSelectRank:
    def test_single_dominant_value(self):
        assert select_rank(np.array([1.0, 0.0, 0.0]), 0.95) == 1

    def test_cumulative_arithmetic(self):
        # 9 + 4 = 13 >= 0.9 * 14
        assert select_rank(np.array([3.0, 2.0, 1.0]), 0.9) == 2

    def test_full_energy_counts_nonzero(self):
        assert select_rank(np.array([2.0, 1.0, 0.0, 0.0]), 1.0) == 2

    def test_zero_spectrum_returns_one(self):
        assert select_rank(np.zeros(4), 0.9) == 1

    def test_ascending_rejected(self):
        with pytest.raises(ValueError):
            select_rank(np.array([1.0, 2.0]), 0.9)


class TestLowrankFrames:
    def test_static_scene_identity(self):
        rng = np.random.default_rng(11)
        f = Frame(rng.random((6, 6, 3)))
        out = lowrank_frames([f] * 4, rank=1)
        for o in out:
            assert np.abs(o.data - f.data).max() < 1e-6

    def test_full_rank_identity(self):
        rng = np.random.default_rng(12)
        frames = [Frame(rng.random((5, 5, 3))) for _ in range(4)]
        out = lowrank_frames(frames, rank=4)
        for o, f in zip(out, frames):
            assert np.abs(o.data - f.data).max() < 1e-6

    def test_rank_two_mixture(self):
        rng = np.random.default_rng(13)
        a = rng.random((6, 6, 3))
        b = rng.random((6, 6, 3))
        weights = rng.random((5, 2)) + 0.1
        frames = [
            Frame(np.clip(w0 * a / 2 + w1 * b / 2, 0, 1)) for w0, w1 in weights
        ]
        out = lowrank_frames(frames, rank=2)
        for o, f in zip(out, frames):
            assert np.abs(o.data - f.data).max() < 1e-6

    def test_rank_one_error_matches_spectrum_bound(self):
        rng = np.random.default_rng(14)
        a = rng.random((6, 6, 1)) * 0.5
        b = rng.random((6, 6, 1)) * 0.5
        weights = rng.random((4, 2)) + 0.1
        planes = [w0 * a + w1 * b for w0, w1 in weights]
        frames = [Frame(np.repeat(p, 3, axis=2)) for p in planes]
        out = lowrank_frames(frames, rank=1)
        # per-channel truncation error must equal the dropped singular value
        mat = np.stack([p.ravel() for p in planes], axis=1)
        s = np.sqrt(np.clip(np.sort(np.linalg.eigvalsh(mat.T @ mat))[::-1], 0, None))
        err2 = sum(
            np.linalg.norm(o.channel(0) - f.channel(0)) ** 2
            for o, f in zip(out, frames)
        )
        assert err2 == pytest.approx(s[1:] @ s[1:], rel=1e-6)
