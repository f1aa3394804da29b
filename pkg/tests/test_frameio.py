import numpy as np
import pytest
from PIL import Image

from speclift.errors import ConfigError, MaskFormatError, SequenceOrderError
from speclift.frameio import (
    PipelineConfig,
    SequenceSource,
    load_mask,
    load_sequence,
    parse_config,
    save_frame,
    save_mask,
)
from speclift.model import Frame, SpecularMask


def write_frame_png(path, value):
    Image.fromarray(np.full((4, 4, 3), value, np.uint8), "RGB").save(path)


class TestLoadSequence:
    def test_three_frames(self, tmp_path):
        for i in range(1, 4):
            write_frame_png(tmp_path / f"frame_{i:06d}.png", 10 * i)
        seq = load_sequence(SequenceSource(tmp_path))
        assert len(seq) == 3
        assert seq[0].data[0, 0, 0] == pytest.approx(10 / 255)

    def test_gap_reported_with_index(self, tmp_path):
        for i in (1, 2, 4):
            write_frame_png(tmp_path / f"frame_{i:06d}.png", 0)
        with pytest.raises(SequenceOrderError, match="3"):
            load_sequence(SequenceSource(tmp_path))

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_sequence(SequenceSource(tmp_path / "nowhere"))

    def test_gray_128_normalization(self, tmp_path):
        write_frame_png(tmp_path / "frame_000000.png", 128)
        seq = load_sequence(SequenceSource(tmp_path))
        assert np.all(np.abs(seq[0].data - 128 / 255) < 1e-6)

    def test_mixed_dimensions_rejected(self, tmp_path):
        write_frame_png(tmp_path / "frame_000000.png", 0)
        Image.fromarray(np.zeros((6, 4, 3), np.uint8), "RGB").save(
            tmp_path / "frame_000001.png"
        )
        from speclift.errors import DimensionMismatchError

        with pytest.raises(DimensionMismatchError, match="frame 1"):
            load_sequence(SequenceSource(tmp_path))

    def test_frame_roundtrip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(3)
        f = Frame(rng.random((5, 7, 3)))
        save_frame(f, tmp_path / "frame_000000.png")
        back = load_sequence(SequenceSource(tmp_path))[0]
        assert np.abs(back.data - f.data).max() <= 0.5 / 255 + 1e-9


class TestMaskIO:
    def test_all_zero_roundtrip(self, tmp_path):
        m = SpecularMask(np.zeros((4, 4), bool))
        save_mask(m, tmp_path / "m.png")
        assert np.array_equal(load_mask(tmp_path / "m.png").bits, m.bits)

    def test_checkerboard_roundtrip_exact(self, tmp_path):
        ii, jj = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
        m = SpecularMask((ii + jj) % 2 == 0)
        save_mask(m, tmp_path / "m.png")
        assert np.array_equal(load_mask(tmp_path / "m.png").bits, m.bits)

    def test_non_binary_value_rejected(self, tmp_path):
        Image.fromarray(np.full((4, 4), 17, np.uint8), "L").save(tmp_path / "m.png")
        with pytest.raises(MaskFormatError, match="17"):
            load_mask(tmp_path / "m.png")


class TestParseConfig:
    def test_empty_text_gives_defaults(self):
        assert parse_config("") == PipelineConfig()

    def test_partial_override(self):
        cfg = parse_config("prior_count = 5\nrank = 2")
        assert cfg.prior_count == 5 and cfg.rank == 2
        assert cfg.patch_size == PipelineConfig().patch_size

    def test_rank_exceeding_priors_rejected(self):
        with pytest.raises(ConfigError, match="rank"):
            parse_config("prior_count = 5\nrank = 9")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="mystery"):
            parse_config("mystery = 3")

    def test_unparsable_value_rejected(self):
        with pytest.raises(ConfigError, match="gamma"):
            parse_config("gamma = three")

    def test_comments_and_order_insensitive(self):
        a = parse_config("# hi\nprior_count = 4\npatch_size = 9\n")
        b = parse_config("patch_size = 9  # trailing\nprior_count = 4")
        assert a == b

    def test_even_patch_size_rejected(self):
        with pytest.raises(ConfigError, match="patch_size"):
            parse_config("patch_size = 6")
