"""Binary file formats shared across the pipeline.

SFM1 feature maps
    magic "SFM1" | version u32=1 | grid_h u32 | grid_w u32 | dim u32 |
    tag_len u32 | tag bytes zero-padded to a 4-byte boundary |
    f32 data, row-major over (row, col, channel). All integers and floats
    little-endian.

SSM1 model files are handled in model.py. P5 PGM carries ground-truth masks
(any nonzero pixel = anomalous) and exported anomaly maps. RAWF files carry
un-normalized pixel score grids: "RAWF" | h u32 | w u32 | f32 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionOverflow,
    InvalidHeader,
    NonFiniteValue,
    ShapeMismatch,
    Truncated,
    UnsupportedVersion,
)

SFM_MAGIC = b"SFM1"
RAW_MAGIC = b"RAWF"
SFM_VERSION = 1
MAX_DIM = 2 ** 20


@dataclass
class FeatureMap:
    """Dense grid of patch feature vectors for one image view."""

    grid_h: int
    grid_w: int
    dim: int
    data: np.ndarray  # float32, shape (grid_h, grid_w, dim)
    source_tag: str = ""

    def patch_matrix(self) -> np.ndarray:
        """All patch vectors stacked row-wise, float64, shape (h*w, dim)."""
        return self.data.reshape(-1, self.dim).astype(np.float64)


@dataclass
class GroundTruthMask:
    height: int
    width: int
    pixels: np.ndarray = field(repr=False)  # bool, shape (height, width)


def _slurp(source) -> bytes:
    """Accept a path, raw bytes, or a readable object."""
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return bytes(source.read())


def _emit(destination, payload: bytes) -> int:
    """Accept a path or an object with write(bytes)."""
    if isinstance(destination, (str, Path)):
        Path(destination).write_bytes(payload)
    else:
        destination.write(payload)
    return len(payload)


def _check_dims(*dims: int) -> None:
    for d in dims:
        if d > MAX_DIM:
            raise DimensionOverflow(f"dimension {d} exceeds {MAX_DIM}")
        if d < 1:
            raise InvalidHeader(f"dimension {d} must be >= 1")


def write_feature_map(fmap: FeatureMap, destination) -> int:
    """Serialize to the SFM1 layout. Returns the byte count written.

    destination is a path or any object with a write(bytes) method.
    """
    data = np.ascontiguousarray(fmap.data, dtype=np.float32)
    if data.shape != (fmap.grid_h, fmap.grid_w, fmap.dim):
        raise ShapeMismatch(
            f"data shape {data.shape} does not match header "
            f"({fmap.grid_h}, {fmap.grid_w}, {fmap.dim})")
    _check_dims(fmap.grid_h, fmap.grid_w, fmap.dim)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue("feature map contains NaN or Inf")
    tag = fmap.source_tag.encode("utf-8")
    pad = (-len(tag)) % 4
    header = SFM_MAGIC + struct.pack(
        "<5I", SFM_VERSION, fmap.grid_h, fmap.grid_w, fmap.dim, len(tag))
    payload = data.astype("<f4").tobytes()
    written = header + tag + b"\x00" * pad + payload
    return _emit(destination, written)


def read_feature_map(source) -> FeatureMap:
    """Parse and validate SFM1 content (path, bytes, or readable object)."""
    buf = _slurp(source)
    if len(buf) < 4:
        raise Truncated(f"only {len(buf)} bytes, header needs 24")
    if buf[:4] != SFM_MAGIC:
        raise BadMagic(f"expected {SFM_MAGIC!r}, got {buf[:4]!r}")
    if len(buf) < 24:
        raise Truncated(f"only {len(buf)} bytes, header needs 24")
    version, grid_h, grid_w, dim, tag_len = struct.unpack("<5I", buf[4:24])
    if version != SFM_VERSION:
        raise UnsupportedVersion(f"version {version}, expected {SFM_VERSION}")
    _check_dims(grid_h, grid_w, dim)
    tag_block = tag_len + ((-tag_len) % 4)
    data_start = 24 + tag_block
    data_len = grid_h * grid_w * dim * 4
    if len(buf) < data_start + data_len:
        raise Truncated(
            f"need {data_start + data_len} bytes, have {len(buf)}")
    tag = buf[24:24 + tag_len].decode("utf-8")
    data = np.frombuffer(
        buf, dtype="<f4", count=grid_h * grid_w * dim, offset=data_start)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue("feature map contains NaN or Inf")
    data = data.reshape(grid_h, grid_w, dim).copy()
    return FeatureMap(grid_h=grid_h, grid_w=grid_w, dim=dim, data=data,
                      source_tag=tag)


def _read_pgm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines, then read one token
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos:pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise Truncated("PGM header ended early")
    return buf[start:pos], pos


def read_mask_pgm(source) -> GroundTruthMask:
    """Read a binary (P5) PGM; any nonzero pixel is anomalous."""
    buf = _slurp(source)
    if buf[:2] != b"P5":
        raise BadMagic(f"expected P5 PGM, got {buf[:2]!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise BadMagic(f"non-numeric PGM header token {tok!r}") from None
    width, height, maxval = fields
    if not (0 < maxval <= 255):
        raise BadMagic(f"maxval {maxval} outside (0, 255]")
    if width < 1 or height < 1:
        raise InvalidHeader(f"bad PGM dims {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    if len(buf) < pos + width * height:
        raise Truncated(
            f"need {pos + width * height} bytes, have {len(buf)}")
    raster = np.frombuffer(buf, dtype=np.uint8, count=width * height,
                           offset=pos).reshape(height, width)
    return GroundTruthMask(height=height, width=width, pixels=raster > 0)


def write_mask_pgm(mask: GroundTruthMask, destination) -> int:
    """Write a binary mask as P5 PGM with 0/255 pixels."""
    raster = np.where(mask.pixels, 255, 0).astype(np.uint8)
    out = b"P5\n%d %d\n255\n" % (mask.width, mask.height) + raster.tobytes()
    return _emit(destination, out)


def write_map_pgm(values: np.ndarray, destination) -> int:
    """Export a [0,1] pixel map as P5 PGM, value = round-half-up(v * 255)."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("pixel map contains NaN or Inf")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValueError("pixel map values must lie in [0, 1]")
    h, w = values.shape
    quantized = np.floor(values * 255.0 + 0.5).astype(np.uint8)
    out = b"P5\n%d %d\n255\n" % (w, h) + quantized.tobytes()
    return _emit(destination, out)


def write_raw_map(values: np.ndarray, destination) -> int:
    """Write an un-normalized float grid: "RAWF" | h u32 | w u32 | f32 data."""
    values = np.ascontiguousarray(values, dtype=np.float32)
    h, w = values.shape
    out = RAW_MAGIC + struct.pack("<2I", h, w) + values.astype("<f4").tobytes()
    return _emit(destination, out)


def read_raw_map(source) -> np.ndarray:
    buf = _slurp(source)
    if len(buf) < 4:
        raise Truncated(f"only {len(buf)} bytes, header needs 12")
    if buf[:4] != RAW_MAGIC:
        raise BadMagic(f"expected {RAW_MAGIC!r}, got {buf[:4]!r}")
    if len(buf) < 12:
        raise Truncated(f"only {len(buf)} bytes, header needs 12")
    h, w = struct.unpack("<2I", buf[4:12])
    _check_dims(h, w)
    if len(buf) < 12 + h * w * 4:
        raise Truncated(f"need {12 + h * w * 4} bytes, have {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", count=h * w, offset=12).reshape(
        h, w).astype(np.float64)
