"""Binary mask geometry: RLE persistence, filtering functionals, composite masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_CATEGORY_NAMES = (
    "barn",
    "manure_pond",
    "silo",
    "feedlot",
    "silage_storage",
    "dry_lot",
    "equipment_other",
)


class EmptyMaskError(ValueError):
    """Mask has no foreground pixels."""


class UnknownCategoryError(ValueError):
    """Category id outside the taxonomy."""


class DimensionMismatchError(ValueError):
    """Masks or tensors with inconsistent spatial dimensions."""


# ---------------------------------------------------------------------------
# COCO-style run-length encoding (column-major runs, compressed counts string)
# ---------------------------------------------------------------------------

def _compress_counts(counts: Sequence[int]) -> str:
    """Pack run lengths into the compact char encoding used by COCO tools."""
    out = []
    for i, x in enumerate(counts):
        if i > 2:
            x -= counts[i - 2]
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def _decompress_counts(s: str) -> list[int]:
    counts: list[int] = []
    i = 0
    while i < len(s):
        x = 0
        k = 0
        while True:
            c = ord(s[i]) - 48
            x |= (c & 0x1F) << (5 * k)
            i += 1
            k += 1
            if not (c & 0x20):
                if c & 0x10:
                    x |= -1 << (5 * k)
                break
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def rle_encode(mask: np.ndarray) -> dict:
    """Encode a {0,1} array (H, W) as {"size": [H, W], "counts": str}."""
    arr = np.asarray(mask, dtype=np.uint8)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected 2-D mask, got shape {arr.shape}")
    h, w = arr.shape
    flat = arr.flatten(order="F")
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size])))
    counts = runs.tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {"size": [h, w], "counts": _compress_counts(counts)}


def rle_decode(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    counts = rle["counts"]
    if isinstance(counts, str):
        counts = _decompress_counts(counts)
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    val = 0
    for c in counts:
        if val:
            flat[pos:pos + c] = 1
        pos += c
        val ^= 1
    if pos != h * w:
        raise ValueError(f"RLE counts sum to {pos}, expected {h * w}")
    return flat.reshape((h, w), order="F")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InfraCategory:
    id: int
    name: str


class Taxonomy:
    """Dense, uniquely named infrastructure categories."""

    def __init__(self, names: Iterable[str] = DEFAULT_CATEGORY_NAMES):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique")
        if not names:
            raise ValueError("taxonomy must not be empty")
        self.categories = tuple(InfraCategory(i, n) for i, n in enumerate(names))

    def __len__(self) -> int:
        return len(self.categories)

    def __getitem__(self, i: int) -> InfraCategory:
        return self.categories[i]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.categories)

    def index(self, name: str) -> int:
        for c in self.categories:
            if c.name == name:
                return c.id
        raise UnknownCategoryError(f"no category named {name!r}")

    def __eq__(self, other) -> bool:
        return isinstance(other, Taxonomy) and self.names == other.names


class BinaryMask:
    """Single-instance foreground mask backed by a dense {0,1} array."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError(f"invalid mask shape {arr.shape}")
        if arr.max(initial=0) > 1:
            raise ValueError("mask values must be 0 or 1")
        self.data = arr

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels: Iterable[tuple[int, int]]) -> "BinaryMask":
        arr = np.zeros((height, width), dtype=np.uint8)
        for x, y in pixels:
            if not (0 <= x < width and 0 <= y < height):
                raise ValueError(f"pixel ({x}, {y}) outside {width}x{height} image")
            arr[y, x] = 1
        return cls(arr)

    @classmethod
    def from_rle(cls, rle: dict) -> "BinaryMask":
        return cls(rle_decode(rle))

    def to_rle(self) -> dict:
        return rle_encode(self.data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def area(self) -> int:
        return int(self.data.sum())

    @property
    def is_empty(self) -> bool:
        return not self.data.any()

    def bbox(self) -> tuple[int, int, int, int]:
        """Tight axis-aligned bounding box (x0, y0, x1, y1), half-open."""
        ys, xs = np.nonzero(self.data)
        if ys.size == 0:
            raise EmptyMaskError("empty mask has no bounding box")
        return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class DetectionBox:
    """Half-open pixel rectangle [x0, x1) x [y0, y1) with category and score."""

    x0: int
    y0: int
    x1: int
    y1: int
    category: int
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box ({self.x0},{self.y0},{self.x1},{self.y1})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass(frozen=True)
class Candidate:
    """A (mask, box) proposal; the category lives on the box."""

    mask: BinaryMask
    box: DetectionBox


@dataclass
class FilterThresholds:
    """Per-category geometric acceptance thresholds (config-overridable)."""

    barn_containment: float = 0.90
    barn_rectangularity: float = 0.70
    barn_size_min: float = 0.50
    barn_size_max: float = 1.50
    pond_coverage: float = 0.60
    silo_containment: float = 0.90
    silo_rectangularity: float = 0.60
    silo_size_max: float = 0.50
    feedlot_overlap: float = 0.50
    feedlot_size_min: float = 0.50
    silage_overlap: float = 0.30
    default_overlap: float = 0.30

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ValueError(f"threshold {f.name} must be >= 0, got {v}")
        for name in ("barn_containment", "barn_rectangularity", "pond_coverage",
                     "silo_containment", "silo_rectangularity"):
            v = getattr(self, name)
            if v > 1:
                raise ValueError(f"threshold {name} must be in [0, 1], got {v}")
        if self.barn_size_min > self.barn_size_max:
            raise ValueError("barn_size_min must not exceed barn_size_max")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "FilterThresholds":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def geometric_functionals(mask: BinaryMask, box: DetectionBox) -> tuple[float, float, float, float]:
    """Containment, coverage, rectangularity and relative size of a candidate.

    phi  = A(mask ∩ box) / A(mask)
    psi  = A(mask ∩ box) / A(box)
    rho  = A(mask) / A(bbox(mask))
    sigma = A(bbox(mask)) / A(box)
    """
    if mask.is_empty:
        raise EmptyMaskError("cannot score an empty mask")
    a_m = mask.area
    y0 = max(box.y0, 0)
    x0 = max(box.x0, 0)
    inter = int(mask.data[y0:box.y1, x0:box.x1].sum())
    a_o = box.area
    bx0, by0, bx1, by1 = mask.bbox()
    a_bb = (bx1 - bx0) * (by1 - by0)
    return inter / a_m, inter / a_o, a_m / a_bb, a_bb / a_o


def _rule_accepts(name: str, phi: float, psi: float, rho: float, sigma: float,
                  th: FilterThresholds) -> bool:
    if name == "barn":
        return (phi >= th.barn_containment and rho >= th.barn_rectangularity
                and th.barn_size_min <= sigma <= th.barn_size_max)
    if name == "silo":
        return (phi >= th.silo_containment and rho >= th.silo_rectangularity
                and sigma <= th.silo_size_max)
    if name == "feedlot":
        return psi >= th.feedlot_overlap and sigma >= th.feedlot_size_min
    if name == "silage_storage":
        return psi >= th.silage_overlap
    return psi >= th.default_overlap


def filter_candidates(cands: Sequence[Candidate], th: FilterThresholds,
                      taxonomy: Taxonomy | None = None) -> list[Candidate]:
    """Apply per-category geometric rules; ponds keep only the max-coverage mask per box."""
    taxonomy = taxonomy or Taxonomy()
    k_count = len(taxonomy)
    accepted: set[int] = set()
    pond_best: dict[tuple[int, int, int, int], tuple[float, int]] = {}
    for idx, cand in enumerate(cands):
        k = cand.box.category
        if not 0 <= k < k_count:
            raise UnknownCategoryError(f"category {k} outside [0, {k_count})")
        if cand.mask.is_empty:
            log.warning("skipping empty mask for candidate %d (category %s)",
                        idx, taxonomy[k].name)
            continue
        phi, psi, rho, sigma = geometric_functionals(cand.mask, cand.box)
        name = taxonomy[k].name
        if name == "manure_pond":
            # per-box argmax on coverage; ties keep the lowest index
            key = (cand.box.x0, cand.box.y0, cand.box.x1, cand.box.y1)
            cur = pond_best.get(key)
            if cur is None or psi > cur[0]:
                pond_best[key] = (psi, idx)
        elif _rule_accepts(name, phi, psi, rho, sigma, th):
            accepted.add(idx)
    for psi, idx in pond_best.values():
        if psi >= th.pond_coverage:
            accepted.add(idx)
    return [cands[i] for i in sorted(accepted)]


def composite_masks(accepted: Sequence[Candidate], height: int, width: int,
                    k_count: int) -> np.ndarray:
    """Pixel-wise OR of accepted masks per category; shape (H, W, K) in {0,1}."""
    c = np.zeros((height, width, k_count), dtype=np.uint8)
    for cand in accepted:
        if cand.mask.data.shape != (height, width):
            raise DimensionMismatchError(
                f"mask shape {cand.mask.data.shape} != ({height}, {width})")
        k = cand.box.category
        if not 0 <= k < k_count:
            raise UnknownCategoryError(f"category {k} outside [0, {k_count})")
        np.maximum(c[:, :, k], cand.mask.data, out=c[:, :, k])
    return c


def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of fractional cell overlaps."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_in)
        for j in range(j0, j1):
            m[i, j] = max(0.0, min(hi, j + 1) - max(lo, j))
    return m / scale


def resize_composite(c: np.ndarray, h_out: int, w_out: int) -> np.ndarray:
    """Area-average (box-filter) resample per channel; output values in [0, 1]."""
    if h_out < 1 or w_out < 1:
        raise ValueError("target dimensions must be >= 1")
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 3:
        raise DimensionMismatchError(f"expected (H, W, K) composite, got {c.shape}")
    h, w, _ = c.shape
    if (h_out, w_out) == (h, w):
        return c.copy()
    a_y = _overlap_matrix(h, h_out)
    a_x = _overlap_matrix(w, w_out)
    out = np.einsum("ah,hwk,bw->abk", a_y, c, a_x)
    return np.clip(out, 0.0, 1.0)
