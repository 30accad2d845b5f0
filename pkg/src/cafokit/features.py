"""Engineered prior features: area ratios, barn-pond proximity, county priors."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from .masks import DimensionMismatchError

log = logging.getLogger(__name__)

COUNTY_CSV_HEADER = ("county_fips", "q_swine", "q_poultry", "q_dairy", "q_beef")
UNIFORM_COUNTY_PRIOR = np.full(4, 0.25)

BARN_CHANNEL = 0
POND_CHANNEL = 1


class InsufficientDataError(ValueError):
    """Not enough samples to fit statistics."""


def load_county_table(path) -> dict[str, np.ndarray]:
    """Load county livestock-mix priors from CSV; rows must lie on the simplex."""
    table: dict[str, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COUNTY_CSV_HEADER:
            raise ValueError(
                f"county CSV header must be {','.join(COUNTY_CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            fips = row[0].strip()
            q = np.array([float(v) for v in row[1:5]])
            if np.any(q < 0) or np.any(q > 1) or abs(q.sum() - 1.0) > 1e-6:
                raise ValueError(
                    f"county CSV line {lineno} ({fips}): priors {q.tolist()} "
                    "must be in [0,1] and sum to 1")
            table[fips] = q
    return table


def save_county_table(path, table: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COUNTY_CSV_HEADER)
        for fips in table:
            writer.writerow([fips] + [repr(float(v)) for v in table[fips]])


def resolve_county(table: dict[str, np.ndarray], fips: str | None) -> np.ndarray:
    """County priors with a uniform fallback for unknown counties."""
    if fips is not None and fips in table:
        return np.asarray(table[fips], dtype=np.float64)
    log.warning("county %r not in prior table; using uniform priors", fips)
    return UNIFORM_COUNTY_PRIOR.copy()


def area_ratios(c: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Soft per-channel area divided by total soft area plus eps."""
    c = np.asarray(c, dtype=np.float64)
    soft = c.mean(axis=(0, 1))
    return soft / (soft.sum() + eps)


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Chamfer distance between foregrounds, normalized by the image diagonal.

    Empty masks yield the maximal-distance sentinel 1.0.
    """
    fa = np.asarray(a).astype(bool)
    fb = np.asarray(b).astype(bool)
    if fa.shape != fb.shape:
        raise DimensionMismatchError(f"mask shapes differ: {fa.shape} vs {fb.shape}")
    if not fa.any() or not fb.any():
        return 1.0
    dist_to_b = distance_transform_edt(~fb)
    dist_to_a = distance_transform_edt(~fa)
    raw = 0.5 * (dist_to_b[fa].mean() + dist_to_a[fb].mean())
    h, w = fa.shape
    return float(raw / math.hypot(h, w))


def feature_slot_names(category_names: Sequence[str]) -> list[str]:
    """Named slots of the prior vector, frozen in serialization order."""
    return ([f"area_ratio_{n}" for n in category_names]
            + ["barn_pond_proximity"]
            + ["county_prior_swine", "county_prior_poultry",
               "county_prior_dairy", "county_prior_beef"])


def assemble_features(c: np.ndarray, q: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Prior vector [r_1..r_K, d_bp, q]; barn/pond channels binarized at 0.5."""
    r = area_ratios(c, eps)
    barn = np.asarray(c)[:, :, BARN_CHANNEL] >= 0.5
    pond = np.asarray(c)[:, :, POND_CHANNEL] >= 0.5
    d_bp = chamfer_distance(barn, pond)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"county priors must have 4 entries, got shape {q.shape}")
    return np.concatenate([r, [d_bp], q])


@dataclass
class FeatureStandardizer:
    """Per-dimension training-set mean/std with a variance floor of 1e-6."""

    mean: np.ndarray
    std: np.ndarray

    STD_FLOOR = 1e-6

    @classmethod
    def fit(cls, rows: Sequence[np.ndarray]) -> "FeatureStandardizer":
        if len(rows) < 2:
            raise InsufficientDataError(
                f"need >= 2 samples to fit a standardizer, got {len(rows)}")
        x = np.asarray(rows, dtype=np.float64)
        return cls(mean=x.mean(axis=0),
                   std=np.maximum(x.std(axis=0), cls.STD_FLOOR))

    def transform(self, f: np.ndarray) -> np.ndarray:
        return (np.asarray(f, dtype=np.float64) - self.mean) / self.std

    def inverse(self, f_hat: np.ndarray) -> np.ndarray:
        return np.asarray(f_hat, dtype=np.float64) * self.std + self.mean
