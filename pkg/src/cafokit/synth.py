"""Deterministic synthetic scene generator with layout-determined class labels.

Archetypes (on the composite mask alone):
  poultry  - three or more long parallel barn rectangles (aspect >= 4)
  swine    - a barn with an adjacent elliptical pond (small barn-pond distance)
  dairy    - barns plus silos plus silage bunkers
  beef     - one dominant notched feedlot polygon
  negative - only clutter candidates, all of which fail the filter rules

Every scene also carries distractor detections that the geometric filter must
reject, so the emitted composites exercise the full filtering path.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .features import save_county_table
from .io import (DatasetManifest, ManifestRecord, save_composite,
                 save_detections, save_feature_tensor, save_manifest)
from .masks import (BinaryMask, Candidate, DetectionBox, FilterThresholds,
                    Taxonomy, composite_masks, filter_candidates,
                    resize_composite)
from .model import CLASS_NAMES


@dataclass
class SynthConfig:
    image_size: int = 64
    grid_size: int = 8
    feat_dim: int = 16
    noise_sigma: float = 0.1
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "split_fractions" in d:
            d["split_fractions"] = tuple(d["split_fractions"])
        return cls(**d)


@dataclass(frozen=True)
class SceneRecipe:
    label: str
    seed: int
    config: SynthConfig


BARN, POND, SILO, FEEDLOT, SILAGE, DRY_LOT, OTHER = range(7)


def _rect(size: int, y: int, x: int, h: int, w: int) -> np.ndarray:
    m = np.zeros((size, size), dtype=np.uint8)
    m[y:y + h, x:x + w] = 1
    return m


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    m = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return m.astype(np.uint8)


def _bbox_box(mask: np.ndarray, category: int, score: float,
              pad: int = 0, size: int | None = None) -> DetectionBox:
    ys, xs = np.nonzero(mask)
    x0, y0 = int(xs.min()) - pad, int(ys.min()) - pad
    x1, y1 = int(xs.max()) + 1 + pad, int(ys.max()) + 1 + pad
    if size is not None:
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, size), min(y1, size)
    return DetectionBox(x0, y0, x1, y1, category, score)


def _score(rng) -> float:
    return round(float(rng.uniform(0.6, 0.99)), 4)


def _barn(size: int, rng, long: bool) -> np.ndarray:
    if long:
        h = int(rng.integers(3, 5))
        w = int(rng.integers(4 * h + 2, 27))
    else:
        h = int(rng.integers(4, 6))
        w = int(rng.integers(10, 15))
    y = int(rng.integers(2, size - h - 2))
    x = int(rng.integers(2, size - w - 2))
    return _rect(size, y, x, h, w)


def _poultry_scene(size: int, rng) -> list[Candidate]:
    nb = int(rng.integers(3, 6))
    h = int(rng.integers(3, 5))
    w = int(rng.integers(4 * h + 2, 27))
    spacing = h + int(rng.integers(3, 6))
    total = nb * spacing
    y0 = int(rng.integers(2, max(3, size - total - 2)))
    x0 = int(rng.integers(4, size - w - 4))
    cands = []
    for i in range(nb):
        x = x0 + int(rng.integers(-2, 3))
        m = _rect(size, y0 + i * spacing, x, h, w)
        cands.append(Candidate(BinaryMask(m), _bbox_box(m, BARN, _score(rng))))
    return cands


def _swine_scene(size: int, rng) -> list[Candidate]:
    h = int(rng.integers(4, 6))
    w = int(rng.integers(10, 15))
    y = int(rng.integers(2, size // 2 - h))
    x = int(rng.integers(10, size - w - 10))
    barn = _rect(size, y, x, h, w)
    ry = float(rng.integers(4, 7))
    rx = float(rng.integers(5, 8))
    gap = int(rng.integers(1, 3))
    cy = y + h + gap + ry
    cx = x + w / 2 + float(rng.integers(-2, 3))
    cy = min(cy, size - ry - 2)
    cx = min(max(cx, rx + 2), size - rx - 2)
    pond = _ellipse(size, cy, cx, ry, rx)
    return [
        Candidate(BinaryMask(barn), _bbox_box(barn, BARN, _score(rng))),
        Candidate(BinaryMask(pond), _bbox_box(pond, POND, _score(rng))),
    ]


def _silo(size: int, rng) -> tuple[np.ndarray, DetectionBox]:
    cy = int(rng.integers(6, size - 6))
    cx = int(rng.integers(6, size - 6))
    m = _ellipse(size, cy, cx, 2.5, 2.5)
    return m, _bbox_box(m, SILO, _score(rng), pad=2, size=size)


def _dairy_scene(size: int, rng) -> list[Candidate]:
    cands = []
    for _ in range(int(rng.integers(1, 3))):
        m = _barn(size, rng, long=False)
        cands.append(Candidate(BinaryMask(m), _bbox_box(m, BARN, _score(rng))))
    for _ in range(int(rng.integers(2, 4))):
        m, box = _silo(size, rng)
        cands.append(Candidate(BinaryMask(m), box))
    for _ in range(int(rng.integers(1, 3))):
        h = int(rng.integers(3, 5))
        w = int(rng.integers(6, 9))
        y = int(rng.integers(2, size - h - 2))
        x = int(rng.integers(2, size - w - 2))
        m = _rect(size, y, x, h, w)
        cands.append(Candidate(BinaryMask(m), _bbox_box(m, SILAGE, _score(rng))))
    return cands


def _beef_scene(size: int, rng) -> list[Candidate]:
    h = int(rng.integers(20, 27))
    w = int(rng.integers(24, 31))
    y = int(rng.integers(2, size - h - 2))
    x = int(rng.integers(2, size - w - 2))
    m = _rect(size, y, x, h, w)
    # notch one corner so the footprint is a polygon, not a plain rectangle
    m[y:y + h // 3, x:x + w // 3] = 0
    return [Candidate(BinaryMask(m), _bbox_box(m, FEEDLOT, _score(rng)))]


def _distractor(size: int, rng) -> Candidate:
    """A candidate guaranteed to fail its category's filter rule."""
    kind = int(rng.integers(0, 5))
    score = round(float(rng.uniform(0.3, 0.6)), 4)
    if kind == 0:
        # barn rule: box shifted so containment is far below threshold
        h, w = 4, 10
        y = int(rng.integers(2, size - h - 2))
        x = int(rng.integers(2, size - w - 8))
        m = _rect(size, y, x, h, w)
        box = DetectionBox(x + 6, y, min(x + 6 + w, size), y + h, BARN, score)
        return Candidate(BinaryMask(m), box)
    if kind == 1:
        # pond rule: tiny blob in an oversized box, coverage far below threshold
        cy = int(rng.integers(12, size - 12))
        cx = int(rng.integers(12, size - 12))
        m = _ellipse(size, cy, cx, 3, 3)
        box = _bbox_box(m, POND, score, pad=8, size=size)
        return Candidate(BinaryMask(m), box)
    if kind == 2:
        # default rule: box disjoint from the mask, zero coverage
        m = _rect(size, 2, 2, 5, 8)
        box = DetectionBox(size - 14, size - 10, size - 2, size - 2, DRY_LOT, score)
        return Candidate(BinaryMask(m), box)
    if kind == 3:
        # feedlot rule: small mask in a huge box
        y = int(rng.integers(14, size - 20))
        x = int(rng.integers(14, size - 20))
        m = _rect(size, y, x, 6, 6)
        box = DetectionBox(max(x - 12, 0), max(y - 12, 0),
                           min(x + 18, size), min(y + 18, size), FEEDLOT, score)
        return Candidate(BinaryMask(m), box)
    # silo rule: tight box makes relative size exceed the maximum
    y = int(rng.integers(4, size - 12))
    x = int(rng.integers(4, size - 12))
    m = _rect(size, y, x, 8, 8)
    return Candidate(BinaryMask(m), _bbox_box(m, SILO, score))


_SCENE_BUILDERS = {
    "poultry": _poultry_scene,
    "swine": _swine_scene,
    "dairy": _dairy_scene,
    "beef": _beef_scene,
    "negative": lambda size, rng: [],
}


def build_scene(recipe: SceneRecipe) -> list[Candidate]:
    """All candidates (true structures plus distractors) for one scene."""
    rng = np.random.default_rng(recipe.seed)
    size = recipe.config.image_size
    cands = _SCENE_BUILDERS[recipe.label](size, rng)
    lo, hi = (2, 5) if recipe.label == "negative" else (1, 4)
    for _ in range(int(rng.integers(lo, hi))):
        cands.append(_distractor(size, rng))
    return cands


def _build_county_table(rng) -> tuple[dict[str, np.ndarray], dict[str, list[str]], list[str]]:
    """Counties with class-dominant mixes plus mixed background counties."""
    table: dict[str, np.ndarray] = {}
    by_class: dict[str, list[str]] = {}
    idx = 0
    for ci, cname in enumerate(CLASS_NAMES[:4]):
        by_class[cname] = []
        for _ in range(2):
            q = rng.dirichlet(np.ones(4)) * 0.3
            q[ci] += 0.7
            q = q / q.sum()
            fips = f"99{idx:03d}"
            table[fips] = q
            by_class[cname].append(fips)
            idx += 1
    mixed = []
    for _ in range(4):
        q = rng.dirichlet(np.ones(4))
        fips = f"99{idx:03d}"
        table[fips] = q / q.sum()
        mixed.append(fips)
        idx += 1
    return table, by_class, mixed


def generate_dataset(out_dir, n: int, seed: int,
                     config: SynthConfig | None = None,
                     thresholds: FilterThresholds | None = None,
                     taxonomy: Taxonomy | None = None) -> Path:
    """Write a complete dataset tree (masks, composites, features, county CSV,
    manifest) under out_dir; byte-identical for identical seeds."""
    config = config or SynthConfig()
    thresholds = thresholds or FilterThresholds()
    taxonomy = taxonomy or Taxonomy()
    out = Path(out_dir)
    for sub in ("detections", "composites", "features"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    ss = np.random.SeedSequence(seed)
    shared, *children = ss.spawn(n + 1)
    shared_rng = np.random.default_rng(shared)
    proj = shared_rng.standard_normal((len(taxonomy), config.feat_dim))
    table, by_class, mixed = _build_county_table(shared_rng)
    save_county_table(out / "county_priors.csv", table)

    labels = [CLASS_NAMES[int(shared_rng.integers(0, len(CLASS_NAMES)))]
              for _ in range(n)]
    splits = [str(shared_rng.choice(["train", "val", "test"],
                                    p=list(config.split_fractions)))
              for _ in range(n)]

    records = []
    g = config.grid_size
    for i in range(n):
        label = labels[i]
        image_id = f"scene_{i:05d}"
        sample_seed = int(children[i].generate_state(1)[0])
        recipe = SceneRecipe(label=label, seed=sample_seed, config=config)
        cands = build_scene(recipe)
        rng = np.random.default_rng(sample_seed + 1)

        accepted = filter_candidates(cands, thresholds, taxonomy)
        comp = composite_masks(accepted, config.image_size, config.image_size,
                               len(taxonomy))
        cp_grid = resize_composite(comp, g, g)
        e = np.einsum("hwk,kd->hwd", cp_grid, proj)
        e = e + config.noise_sigma * rng.standard_normal(e.shape)

        if label == "negative":
            county = mixed[int(rng.integers(0, len(mixed)))] \
                if rng.random() < 0.5 else \
                f"99{int(rng.integers(0, 8)):03d}"
        elif rng.random() < 0.85:
            county = by_class[label][int(rng.integers(0, 2))]
        else:
            county = mixed[int(rng.integers(0, len(mixed)))]

        save_detections(out / "detections" / f"{image_id}.jsonl", image_id, cands)
        save_composite(out / "composites" / f"{image_id}.json", comp)
        save_feature_tensor(out / "features" / f"{image_id}.bin", e)
        records.append(ManifestRecord(
            image_id=image_id,
            county_fips=county,
            label=label,
            split=splits[i],
            detections=f"detections/{image_id}.jsonl",
            features=f"features/{image_id}.bin",
            composite=f"composites/{image_id}.json",
        ))

    manifest = DatasetManifest(root=out, county_priors="county_priors.csv",
                               categories=list(taxonomy.names), records=records)
    manifest_path = out / "manifest.json"
    save_manifest(manifest_path, manifest)
    return manifest_path
