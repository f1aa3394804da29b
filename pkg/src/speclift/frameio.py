"""Disk I/O for frame sequences, masks and the pipeline config.

Frames live as 8-bit RGB PNGs named by a printf-style pattern
(default ``frame_%06d.png``); masks as 8-bit single-channel PNGs with
255 = specular and 0 = clean.  The config is flat ``key = value`` text
with ``#`` comments.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DimensionMismatchError, MaskFormatError, SequenceOrderError
from .model import Frame, Sequence, SpecularMask

FRAME_PATTERN = "frame_%06d.png"
MASK_PATTERN = "mask_%06d.png"


@dataclass(frozen=True)
class SequenceSource:
    """Where a sequence lives on disk and which indices to take."""

    directory: Path
    pattern: str = FRAME_PATTERN
    start: int | None = None
    stop: int | None = None  # inclusive

    def __post_init__(self):
        object.__setattr__(self, "directory", Path(self.directory))


def _pattern_regex(pattern: str) -> re.Pattern:
    m = re.fullmatch(r"(.*)%0(\d+)d(.*)", pattern)
    if m is None:
        raise ConfigError(f"pattern must contain one %0Nd field, got {pattern!r}")
    prefix, width, suffix = m.group(1), int(m.group(2)), m.group(3)
    return re.compile(re.escape(prefix) + rf"(\d{{{width}}})" + re.escape(suffix))


def _indexed_paths(source: SequenceSource) -> list[tuple[int, Path]]:
    if not source.directory.is_dir():
        raise FileNotFoundError(f"no such directory: {source.directory}")
    rx = _pattern_regex(source.pattern)
    found = []
    for p in sorted(source.directory.iterdir()):
        m = rx.fullmatch(p.name)
        if m:
            found.append((int(m.group(1)), p))
    found.sort()
    if source.start is not None:
        found = [(i, p) for i, p in found if i >= source.start]
    if source.stop is not None:
        found = [(i, p) for i, p in found if i <= source.stop]
    if not found:
        raise FileNotFoundError(
            f"no files matching {source.pattern!r} in {source.directory}"
        )
    indices = [i for i, _ in found]
    for a, b in zip(indices, indices[1:]):
        if b != a + 1:
            raise SequenceOrderError(
                f"frame index {a + 1} missing in {source.directory} (have {a} then {b})"
            )
    return found


def load_frame(path: Path) -> Frame:
    with Image.open(path) as im:
        a = np.asarray(im.convert("RGB"), dtype=np.float64)
    return Frame(a / 255.0)


def save_frame(frame: Frame, path: Path) -> None:
    a = np.rint(frame.data * 255.0).astype(np.uint8)
    Image.fromarray(a, mode="RGB").save(path)


def load_sequence(source: SequenceSource) -> Sequence:
    """Load all frames matched by the source, normalized to [0, 1].

    Raises on a missing directory, a gap in the index run, an unreadable
    file, or mixed frame dimensions; the message names the offender.
    """
    frames = []
    shape = None
    for idx, path in _indexed_paths(source):
        try:
            f = load_frame(path)
        except (OSError, ValueError) as exc:
            raise OSError(f"cannot read frame {idx} from {path}: {exc}") from exc
        if shape is None:
            shape = f.shape
        elif f.shape != shape:
            raise DimensionMismatchError(
                f"frame {idx} ({path}) has shape {f.shape}, expected {shape}"
            )
        frames.append(f)
    return Sequence(tuple(frames))


def save_mask(mask: SpecularMask, path: Path) -> None:
    a = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(a, mode="L").save(path)


def load_mask(path: Path) -> SpecularMask:
    """Read a binary mask; any pixel value other than 0 or 255 is an error."""
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        a = np.asarray(im)
    bad = np.setdiff1d(np.unique(a), (0, 255))
    if bad.size:
        raise MaskFormatError(f"{path}: mask holds non-binary values {bad[:8].tolist()}")
    return SpecularMask(a == 255)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline, with overridable defaults.

    ``rank`` set to an integer pins the truncation rank; left as None the
    rank is chosen per channel as the smallest one retaining ``energy`` of
    the squared singular spectrum.
    """

    prior_count: int = 5          # Z, temporal window length
    rank: int | None = None       # explicit truncation rank, 1..Z
    energy: float = 0.95          # spectral energy fraction when rank is None
    gamma: float = 0.002          # smoothness weight
    delta: float = 1.0            # topology weight
    tukey_c: float = 0.2          # robust cutoff, normalized intensity units
    zeta: float = 0.5             # |det J - 1| margin before topology penalty
    xi: float = 0.01              # expansion balance inside topology penalty
    regrid_tol: float = 0.1       # min det J that triggers a regrid
    patch_size: int = 7
    dilation_radius: int = 1
    levels: int = 3               # registration pyramid depth
    lattice_spacing: int = 8      # control-point spacing at the finest level, px
    reg_max_dim: int = 128        # registration works at <= this resolution
    sweeps: int = 5               # shift-map refinement sweeps
    seed: int = 0

    def validate(self) -> None:
        c = self
        if c.prior_count < 1:
            raise ConfigError(f"prior_count must be >= 1, got {c.prior_count}")
        if c.rank is not None and not 1 <= c.rank <= c.prior_count:
            raise ConfigError(
                f"rank must satisfy 1 <= rank <= prior_count ({c.prior_count}), got {c.rank}"
            )
        if not 0.0 < c.energy <= 1.0:
            raise ConfigError(f"energy must be in (0, 1], got {c.energy}")
        if c.gamma < 0 or c.delta < 0:
            raise ConfigError("gamma and delta must be nonnegative")
        for name in ("tukey_c", "zeta", "xi", "regrid_tol"):
            if getattr(c, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(c, name)}")
        if c.patch_size < 3 or c.patch_size % 2 == 0:
            raise ConfigError(f"patch_size must be odd and >= 3, got {c.patch_size}")
        if c.dilation_radius < 0:
            raise ConfigError(f"dilation_radius must be >= 0, got {c.dilation_radius}")
        if c.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {c.levels}")
        if c.lattice_spacing < 4:
            raise ConfigError(f"lattice_spacing must be >= 4, got {c.lattice_spacing}")
        if c.reg_max_dim < 16:
            raise ConfigError(f"reg_max_dim must be >= 16, got {c.reg_max_dim}")
        if c.sweeps < 1:
            raise ConfigError(f"sweeps must be >= 1, got {c.sweeps}")

    def replace(self, **kw) -> "PipelineConfig":
        out = dataclasses.replace(self, **kw)
        out.validate()
        return out

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_INT_KEYS = {
    "prior_count", "rank", "patch_size", "dilation_radius", "levels",
    "lattice_spacing", "reg_max_dim", "sweeps", "seed",
}
_FLOAT_KEYS = {"energy", "gamma", "delta", "tukey_c", "zeta", "xi", "regrid_tol"}


def parse_config(text: str) -> PipelineConfig:
    """Parse flat ``key = value`` lines into a validated PipelineConfig.

    Absent keys fall back to the defaults; unknown keys, unparsable values
    and invariant violations raise ConfigError naming the line.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _INT_KEYS:
            try:
                values[key] = int(val)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} needs an integer, got {val!r}")
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(val)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} needs a number, got {val!r}")
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: Path | None) -> PipelineConfig:
    if path is None:
        cfg = PipelineConfig()
        cfg.validate()
        return cfg
    return parse_config(Path(path).read_text(encoding="utf-8"))
