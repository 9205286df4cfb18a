"""Bi-temporal cube handling: differencing, normalization, patches, splits.

File formats (the sole ingestion path for real datasets):

* Cube: a JSON header file ``{"height", "width", "bands", "dtype":
  "f32le", "order": "band-interleaved-by-pixel", "payload": <file>}``
  next to a raw payload of ``h*w*b`` little-endian float32 values in
  row-major pixel order, band fastest.
* Label map: binary PGM (P5, maxval 255) whose pixel values are the
  labels themselves: 0 unchanged, 1 changed, 255 unknown.

Patches are windows centered on the classified pixel; positions falling
outside the raster are filled by mirroring across the image boundary
(the edge row/column is duplicated next to itself).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ContractError, DataError, DimensionOverflowError,
                     DomainError, MalformedHeaderError, TruncatedPayloadError)

UNKNOWN = 255
_MAX_ELEMENTS = 1 << 40  # reject absurd header dimensions before allocating


@dataclass
class HsiCube:
    """A raster cube of shape (height, width, bands), float32 in memory."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ContractError(
                f"cube must be (h, w, b) with positive dims, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("cube values must be finite")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


@dataclass
class LabelMap:
    """Ground truth grid with entries 0 (unchanged), 1 (changed), 255 (unknown)."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.ndim != 2 or min(self.labels.shape) < 1:
            raise ContractError(
                f"label map must be 2-D with positive dims, got {self.labels.shape}")
        if not np.all(np.isin(self.labels, (0, 1, UNKNOWN))):
            raise ContractError("labels must be 0, 1 or 255")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def known_coords(self) -> np.ndarray:
        return np.argwhere(self.labels != UNKNOWN)


@dataclass
class SplitSpec:
    """Disjoint train/test pixel coordinates drawn from the known labels."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    fraction: float
    seed: int


@dataclass
class PatchSet:
    """Patches with their labels and source pixel coordinates."""

    patches: np.ndarray
    labels: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        if len(self.patches) != len(self.labels) or len(self.labels) != len(self.coords):
            raise ContractError("patches, labels and coords must align 1:1")

    def __len__(self) -> int:
        return len(self.labels)


def difference(x1: HsiCube, x2: HsiCube) -> HsiCube:
    """Elementwise first-epoch minus second-epoch cube."""
    if x1.values.shape != x2.values.shape:
        raise ContractError(
            f"cube shapes differ: {x1.values.shape} vs {x2.values.shape}")
    return HsiCube(x1.values - x2.values)


def normalize(cube: HsiCube) -> HsiCube:
    """Affinely map each band to [-1, 1]; constant bands map to 0."""
    v = cube.values
    lo = v.min(axis=(0, 1))
    hi = v.max(axis=(0, 1))
    span = hi - lo
    flat = span == 0
    safe = np.where(flat, 1.0, span).astype(np.float32)
    out = 2.0 * ((v - lo) / safe) - 1.0
    out[:, :, flat] = 0.0
    return HsiCube(out)


def _fold(i: int, n: int) -> int:
    # Mirror an out-of-range index back into [0, n) across the boundary.
    while i < 0 or i >= n:
        if i < 0:
            i = -1 - i
        else:
            i = 2 * n - 1 - i
    return i


def extract_patch(cube: HsiCube, row: int, col: int, p: int) -> np.ndarray:
    """The p x p x b window centered at (row, col), mirror-padded at edges."""
    if p < 1 or p % 2 == 0:
        raise ContractError(f"patch size must be odd and positive, got {p}")
    h, w = cube.height, cube.width
    if not (0 <= row < h and 0 <= col < w):
        raise ContractError(f"center ({row}, {col}) outside {h}x{w} raster")
    half = p // 2
    rows = np.array([_fold(r, h) for r in range(row - half, row + half + 1)])
    cols = np.array([_fold(c, w) for c in range(col - half, col + half + 1)])
    return cube.values[np.ix_(rows, cols)].copy()


def extract_patches(cube: HsiCube, coords: np.ndarray, p: int) -> np.ndarray:
    """Windows for many centers at once; pads the cube a single time."""
    if p < 1 or p % 2 == 0:
        raise ContractError(f"patch size must be odd and positive, got {p}")
    coords = np.asarray(coords)
    half = p // 2
    if len(coords) == 0:
        return np.empty((0, p, p, cube.bands), dtype=cube.values.dtype)
    if half == 0:
        return cube.values[coords[:, 0], coords[:, 1]].reshape(
            len(coords), 1, 1, cube.bands).copy()
    if half <= min(cube.height, cube.width):
        padded = np.pad(cube.values, ((half, half), (half, half), (0, 0)),
                        mode="symmetric")
        out = np.empty((len(coords), p, p, cube.bands), dtype=cube.values.dtype)
        for i, (r, c) in enumerate(coords):
            out[i] = padded[r:r + p, c:c + p]
        return out
    return np.stack([extract_patch(cube, r, c, p) for r, c in coords])


def patch_set(cube: HsiCube, label_map: LabelMap, coords: np.ndarray,
              p: int) -> PatchSet:
    """Bundle float64 patches with the labels found at ``coords``."""
    if (label_map.height, label_map.width) != (cube.height, cube.width):
        raise ContractError("label map does not match the cube dimensions")
    coords = np.asarray(coords, dtype=np.int64)
    patches = extract_patches(cube, coords, p).astype(np.float64)
    labels = label_map.labels[coords[:, 0], coords[:, 1]]
    if np.any(labels == UNKNOWN):
        raise ContractError("patch set coordinates include unknown pixels")
    return PatchSet(patches, labels.astype(np.int64), coords)


def stratified_split(labels: LabelMap, fraction: float, seed: int = 0) -> SplitSpec:
    """Sample ``floor(fraction * count)`` training pixels per class.

    Unknown pixels are excluded entirely; the remaining known pixels form
    the test set. Classes are processed in label order (0 then 1) with a
    single seeded generator, so splits are reproducible.
    """
    if not (0.0 < fraction < 1.0):
        raise ContractError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for cls in (0, 1):
        coords = np.argwhere(labels.labels == cls)
        n_train = math.floor(fraction * len(coords))
        if n_train == 0:
            raise ContractError(
                f"class {cls} yields no training pixels "
                f"({len(coords)} available at fraction {fraction})")
        pick = rng.choice(len(coords), size=n_train, replace=False)
        mask = np.zeros(len(coords), dtype=bool)
        mask[pick] = True
        train_parts.append(coords[mask])
        test_parts.append(coords[~mask])
    return SplitSpec(train_indices=np.concatenate(train_parts),
                     test_indices=np.concatenate(test_parts),
                     fraction=fraction, seed=seed)


def _smooth(field: np.ndarray, passes: int = 12) -> np.ndarray:
    # Repeated 3x3 box blur with wrap-around; enough to form soft blobs.
    for _ in range(passes):
        acc = field.copy()
        for axis in (0, 1):
            acc += np.roll(field, 1, axis=axis) + np.roll(field, -1, axis=axis)
        field = acc / 5.0
    return field


def _wave_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    # Superpose the three lowest-frequency modes with random weights: level
    # sets give a few large coherent regions with short boundaries instead
    # of speckle.
    rr, cc = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    field = np.zeros((h, w))
    for direction in (rr, cc, rr + cc):
        amp, phase = rng.standard_normal(), rng.uniform(0.0, 2.0 * np.pi)
        field += amp * np.cos(2.0 * np.pi * direction + phase)
    return field


def synth_dataset(h: int, w: int, b: int, change_fraction: float = 0.3,
                  noise_sigma: float = 0.1, seed: int = 0
                  ) -> tuple[HsiCube, HsiCube, LabelMap]:
    """Generate a bi-temporal cube pair with blob-shaped changed regions.

    The base image mixes two smooth spectral signatures through a smooth
    spatial field. Changed pixels receive an additional distinct
    signature in the second epoch. Both epochs carry independent Gaussian
    noise of the given sigma. Deterministic per seed.
    """
    if h < 1 or w < 1 or b < 1:
        raise ContractError("synthetic dimensions must be positive")
    if not (0.0 <= change_fraction <= 1.0):
        raise ContractError("change_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    u = np.linspace(0.0, 1.0, b)
    sig_a = 0.8 * np.sin(2.0 * np.pi * u) + 0.2 * u
    sig_b = 0.7 * np.cos(2.0 * np.pi * u) - 0.2 * (1.0 - u)
    delta = 2.4 * np.sin(3.0 * np.pi * u + 0.7) + 1.0

    mix = _smooth(rng.standard_normal((h, w)))
    mix = (mix - mix.min()) / max(mix.max() - mix.min(), 1e-12)
    base = mix[..., None] * sig_a + (1.0 - mix[..., None]) * sig_b

    blob_field = _wave_field(rng, h, w)
    n_changed = int(round(change_fraction * h * w))
    changed = np.zeros((h, w), dtype=bool)
    if n_changed > 0:
        order = np.argsort(blob_field.ravel(), kind="stable")
        changed.ravel()[order[-n_changed:]] = True

    x1 = base + noise_sigma * rng.standard_normal((h, w, b))
    x2 = base + changed[..., None] * delta \
        + noise_sigma * rng.standard_normal((h, w, b))
    return (HsiCube(x1.astype(np.float32)), HsiCube(x2.astype(np.float32)),
            LabelMap(changed.astype(np.uint8)))


# ---------------------------------------------------------------------------
# Cube files: JSON header + raw float32 payload.

def save_cube(cube: HsiCube, header_path) -> None:
    header_path = Path(header_path)
    payload_name = header_path.stem + ".raw"
    header = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": "f32le",
        "order": "band-interleaved-by-pixel",
        "payload": payload_name,
    }
    header_path.write_text(json.dumps(header, sort_keys=True, indent=1) + "\n")
    data = np.ascontiguousarray(cube.values, dtype="<f4")
    (header_path.parent / payload_name).write_bytes(data.tobytes())


def load_cube(header_path) -> HsiCube:
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except ValueError as exc:
        raise MalformedHeaderError(f"{header_path}: invalid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"{header_path}: header is not an object")
    for key in ("height", "width", "bands", "dtype", "order", "payload"):
        if key not in header:
            raise MalformedHeaderError(f"{header_path}: missing field {key!r}")
    if header["dtype"] != "f32le":
        raise MalformedHeaderError(
            f"{header_path}: unsupported dtype {header['dtype']!r}")
    if header["order"] != "band-interleaved-by-pixel":
        raise MalformedHeaderError(
            f"{header_path}: unsupported order {header['order']!r}")
    try:
        h, w, b = (int(header[k]) for k in ("height", "width", "bands"))
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{header_path}: non-integer dims") from exc
    if h < 1 or w < 1 or b < 1:
        raise DimensionOverflowError(f"{header_path}: non-positive dimensions")
    if h * w * b > _MAX_ELEMENTS:
        raise DimensionOverflowError(
            f"{header_path}: {h}x{w}x{b} exceeds the supported size")
    payload_path = header_path.parent / str(header["payload"])
    blob = payload_path.read_bytes()
    expected = h * w * b * 4
    if len(blob) != expected:
        raise TruncatedPayloadError(
            f"{payload_path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4").reshape(h, w, b)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{payload_path}: payload contains non-finite values")
    return HsiCube(values.copy())


# ---------------------------------------------------------------------------
# PGM (P5) rasters for label maps and rendered change maps.

def save_pgm(grid: np.ndarray, path) -> None:
    grid = np.asarray(grid, dtype=np.uint8)
    if grid.ndim != 2:
        raise ContractError("PGM grids must be 2-D")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(grid.tobytes())


def load_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(blob):
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":  # comment runs to end of line
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if len(fields) < 4 or fields[0] != b"P5":
        raise MalformedHeaderError(f"{path}: not a binary PGM")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise MalformedHeaderError(f"{path}: expected maxval 255, got {maxval}")
    if h < 1 or w < 1:
        raise DimensionOverflowError(f"{path}: non-positive PGM dimensions")
    pos += 1  # single whitespace byte after maxval
    data = blob[pos:pos + h * w]
    if len(data) != h * w:
        raise TruncatedPayloadError(
            f"{path}: expected {h * w} pixel bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def save_labels(labels: LabelMap, path) -> None:
    save_pgm(labels.labels, path)


def load_labels(path) -> LabelMap:
    grid = load_pgm(path)
    if not np.all(np.isin(grid, (0, 1, UNKNOWN))):
        raise DataError(f"{path}: label values must be 0, 1 or 255")
    return LabelMap(grid)
