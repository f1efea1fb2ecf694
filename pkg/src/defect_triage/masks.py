"""Certainty-mask ingestion and superpixel feature extraction.

A mask is a grid of per-pixel defect certainties in [0,1]. Pixels at or
above a cutoff are grouped into 8-connected components ("superpixels"),
each of which gets a mass, centroid, normalized center distance and an
ellipse-style eccentricity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import MaskFormatError

DEFAULT_CUTOFF = 0.3

_CONNECT_8 = np.ones((3, 3), dtype=int)


@dataclass
class CertaintyMask:
    """A rectangular grid of defect certainties in [0,1], row-major."""

    image_id: str
    width: int
    height: int
    values: np.ndarray  # shape (height, width), float64
    mass_scale: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be positive")
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 1:
            if arr.size != self.width * self.height:
                raise ValueError(
                    f"expected {self.width * self.height} values, got {arr.size}"
                )
            arr = arr.reshape(self.height, self.width)
        elif arr.shape != (self.height, self.width):
            raise ValueError(f"values shape {arr.shape} != (height, width)")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        if self.mass_scale <= 0:
            raise ValueError("mass_scale must be positive")
        self.values = arr


@dataclass(frozen=True)
class Superpixel:
    """One 8-connected defect region with its derived geometric features."""

    superpixel_id: str
    pixels: frozenset[tuple[int, int]]
    mass: float
    centroid: tuple[float, float]  # (row, col)
    center_distance: float
    eccentricity: float

    def __post_init__(self):
        if not self.pixels:
            raise ValueError("superpixel pixel set must be non-empty")
        if not 0.0 <= self.center_distance <= 1.0:
            raise ValueError("center_distance must lie in [0, 1]")
        if not 0.0 <= self.eccentricity <= 1.0:
            raise ValueError("eccentricity must lie in [0, 1]")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")

    def bounding_box(self) -> tuple[int, int, int, int]:
        """(row_min, col_min, row_max, col_max), inclusive."""
        rows = [p[0] for p in self.pixels]
        cols = [p[1] for p in self.pixels]
        return min(rows), min(cols), max(rows), max(cols)


@dataclass(frozen=True)
class FeatureRecord:
    """Per-image features: the superpixels plus their count and summed mass."""

    image_id: str
    superpixels: tuple[Superpixel, ...]
    num_hps: int
    total_volume: float

    def __post_init__(self):
        if self.num_hps != len(self.superpixels):
            raise ValueError("num_hps must equal the number of superpixels")
        expected = float(sum(sp.mass for sp in self.superpixels))
        if abs(self.total_volume - expected) > 1e-9:
            raise ValueError("total_volume must equal the sum of superpixel masses")


# -- PGM ingestion -----------------------------------------------------------

_WS = b" \t\r\n"


def _skip_ws_and_comments(data: bytes, pos: int) -> int:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c in (b" ", b"\t", b"\r", b"\n"):
            pos += 1
        elif c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_ws_and_comments(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise MaskFormatError(f"malformed header: expected {what}", start)
    return int(data[start:pos]), pos


def _parse_p2_raster(data: bytes, pos: int, count: int, maxval: int) -> np.ndarray:
    # fast path: comment-free rasters split in C; anything irregular falls
    # back to the token walker, which reports precise byte offsets
    tail = data[pos:]
    if b"#" not in tail:
        tokens = tail.split()
        if len(tokens) == count and all(t.isdigit() for t in tokens):
            arr = np.array([int(t) for t in tokens], dtype=float)
            if arr.max(initial=0) <= maxval:
                return arr
    raster: list[int] = []
    for _ in range(count):
        at = _skip_ws_and_comments(data, pos)
        try:
            value, pos = _read_int(data, pos, "pixel value")
        except MaskFormatError:
            raise MaskFormatError(
                f"truncated pixel data: expected {count} values, got {len(raster)}", at
            ) from None
        if value > maxval:
            raise MaskFormatError(f"pixel value {value} exceeds maxval {maxval}", at)
        raster.append(value)
    end = _skip_ws_and_comments(data, pos)
    if end != len(data):
        raise MaskFormatError("trailing data after raster", end)
    return np.array(raster, dtype=float)


def load_mask(data: bytes, image_id: str, mass_scale: float = 1.0) -> CertaintyMask:
    """Parse a grayscale PGM payload (P2 ascii or P5 binary, maxval <= 65535)."""
    pos = _skip_ws_and_comments(data, 0)
    magic = data[pos : pos + 2]
    if magic not in (b"P2", b"P5"):
        raise MaskFormatError(f"malformed header: not a PGM (magic {magic!r})", pos)
    pos += 2
    width, pos = _read_int(data, pos, "width")
    height, pos = _read_int(data, pos, "height")
    maxval_at = _skip_ws_and_comments(data, pos)
    maxval, pos = _read_int(data, pos, "maxval")
    if maxval <= 0:
        raise MaskFormatError(f"maxval must be positive, got {maxval}", maxval_at)
    if maxval > 65535:
        raise MaskFormatError(f"maxval {maxval} exceeds 65535", maxval_at)
    if width < 1 or height < 1:
        raise MaskFormatError(f"invalid dimensions {width}x{height}", 2)
    count = width * height

    if magic == b"P2":
        arr = _parse_p2_raster(data, pos, count, maxval).reshape(height, width)
    else:
        # single whitespace byte separates the maxval from the binary raster
        if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\r", b"\n"):
            raise MaskFormatError("malformed header: missing raster separator", pos)
        pos += 1
        bytes_per = 1 if maxval < 256 else 2
        need = count * bytes_per
        if len(data) - pos < need:
            raise MaskFormatError(
                f"truncated pixel data: expected {need} raster bytes, got {len(data) - pos}",
                len(data),
            )
        raw = data[pos : pos + need]
        if pos + need != len(data):
            raise MaskFormatError("trailing data after raster", pos + need)
        dtype = np.uint8 if bytes_per == 1 else np.dtype(">u2")
        arr = np.frombuffer(raw, dtype=dtype).astype(float).reshape(height, width)
        if arr.max(initial=0) > maxval:
            raise MaskFormatError(f"pixel value exceeds maxval {maxval}", pos)

    return CertaintyMask(image_id, width, height, arr / maxval, mass_scale)


def encode_pgm(mask: CertaintyMask, binary: bool = False, maxval: int = 255) -> bytes:
    """Serialize a mask back to PGM; values are rounded to raw = v * maxval."""
    raw = np.rint(mask.values * maxval).astype(int)
    header = f"{'P5' if binary else 'P2'}\n{mask.width} {mask.height}\n{maxval}\n"
    if binary:
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        return header.encode("ascii") + raw.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in raw)
    return (header + rows + "\n").encode("ascii")


# -- geometry ----------------------------------------------------------------


def compute_center_distance(
    mask_dims: tuple[int, int], centroid: tuple[float, float]
) -> float:
    """Distance from the image center, normalized by the half-diagonal.

    mask_dims is (width, height); centroid is (row, col).
    """
    width, height = mask_dims
    if width < 1 or height < 1:
        raise ValueError("dimensions must be positive")
    center_r = (height - 1) / 2.0
    center_c = (width - 1) / 2.0
    half_diag = math.hypot(center_r, center_c)
    if half_diag == 0.0:
        return 0.0
    d = math.hypot(centroid[0] - center_r, centroid[1] - center_c) / half_diag
    return min(max(d, 0.0), 1.0)


def _major_axis_pairs(pts: np.ndarray) -> tuple[list[tuple[tuple[int, int], tuple[int, int]]], int]:
    """All most-distant pixel pairs plus the squared distance, in
    lexicographic pair order.

    pts must be lexicographically sorted. Uses the convex hull for large sets;
    every maximizing pair lies on the hull, so none are missed.
    """
    candidates = pts
    if len(pts) > 400:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(pts.astype(float))
            candidates = pts[np.sort(hull.vertices)]
        except Exception:
            candidates = pts  # degenerate (collinear) sets: brute force
    diff = candidates[:, None, :] - candidates[None, :, :]
    d2 = (diff * diff).sum(axis=-1)
    best = int(d2.max())
    ii, jj = np.nonzero(d2 == best)
    pairs = sorted(
        (
            (int(candidates[i][0]), int(candidates[i][1])),
            (int(candidates[j][0]), int(candidates[j][1])),
        )
        for i, j in zip(ii, jj)
        if i < j
    )
    return pairs, best


def compute_eccentricity(pixels) -> float:
    """sqrt(1 - b^2/a^2) with a the max pixel-pair distance and b the extent
    of all pixel centers projected orthogonally to that axis. Single pixel: 0.

    When several pairs tie for the maximum distance, the pair with the
    smallest orthogonal extent wins (remaining ties: lexicographic order).
    Rotating the pixel set by a quarter turn maps tied pairs onto tied pairs
    and preserves their extents, so the result is rotation invariant; a
    position-based tie-break would not be.

    Integer coordinates keep the arithmetic exact: with d the major-axis
    vector, the orthogonal projection extent times |d| is an integer, so the
    degenerate cases (b = a and b = 0) come out as exactly 0 and 1.
    """
    pts = np.array(sorted(pixels), dtype=np.int64)
    if pts.size == 0:
        raise ValueError("pixel set must be non-empty")
    if len(pts) == 1:
        return 0.0
    pairs, d2_max = _major_axis_pairs(pts)
    if d2_max == 0:
        return 0.0
    extent = None
    for p, q in pairs:
        ortho = np.array([-(q[1] - p[1]), q[0] - p[0]], dtype=np.int64)
        proj = pts @ ortho
        candidate = int(proj.max()) - int(proj.min())  # equals b * |d|, exactly
        if extent is None or candidate < extent:
            extent = candidate
    numerator = d2_max * d2_max - extent * extent  # = (a^2)^2 * (1 - b^2/a^2)
    if numerator <= 0:
        return 0.0
    return min(math.sqrt(numerator) / d2_max, 1.0)


def extract_superpixels(mask: CertaintyMask, cutoff: float = DEFAULT_CUTOFF) -> list[Superpixel]:
    """8-connected components of pixels with value >= cutoff.

    Components are ordered by (min row, min col) of their pixel sets; ids are
    hp_<image_id>_<k> with k starting at 1 in that order.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError("cutoff must lie in [0, 1]")
    keep = mask.values >= cutoff
    labels, n = ndimage.label(keep, structure=_CONNECT_8)
    comps = []
    for lbl in range(1, n + 1):
        rows, cols = np.nonzero(labels == lbl)
        key = (int(rows.min()), int(cols.min()), (int(rows[0]), int(cols[0])))
        comps.append((key, rows, cols))
    comps.sort(key=lambda c: c[0])

    out = []
    for k, (_, rows, cols) in enumerate(comps, start=1):
        mass = float(mask.values[rows, cols].sum()) * mask.mass_scale
        centroid = (float(rows.mean()), float(cols.mean()))
        out.append(
            Superpixel(
                superpixel_id=f"hp_{mask.image_id}_{k}",
                pixels=frozenset(zip(rows.tolist(), cols.tolist())),
                mass=mass,
                centroid=centroid,
                center_distance=compute_center_distance((mask.width, mask.height), centroid),
                eccentricity=compute_eccentricity(zip(rows.tolist(), cols.tolist())),
            )
        )
    return out


def build_feature_record(mask: CertaintyMask, cutoff: float = DEFAULT_CUTOFF) -> FeatureRecord:
    sps = tuple(extract_superpixels(mask, cutoff))
    return FeatureRecord(
        image_id=mask.image_id,
        superpixels=sps,
        num_hps=len(sps),
        total_volume=float(sum(sp.mass for sp in sps)),
    )
