"""Run the model pipeline over an image directory and write cafokit files."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from cafokit.io import (DatasetManifest, ManifestRecord, save_detections,
                        save_feature_tensor, save_manifest)
from cafokit.masks import BinaryMask, Candidate, DetectionBox

from .models import build_backbone, build_detector, build_segmenter

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff")


class ExportFailedError(RuntimeError):
    """Every image in the job failed to export."""


@dataclass
class ExportJob:
    image_dir: Path
    out_dir: Path
    detector: str = "stub"
    segmenter: str = "stub"
    backbone: str = "stub"
    patch_size: int = 833
    stride: int = 104
    feat_dim: int = 16
    threads: int = 1


def load_patch(path: Path, patch_size: int) -> np.ndarray:
    """Grayscale [0, 1] array, center-cropped / padded to patch_size if larger.

    Images smaller than patch_size are kept at their native size; the feature
    grid contract only depends on the actual array shape.
    """
    with Image.open(path) as img:
        gray = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    h, w = gray.shape
    if h > patch_size or w > patch_size:
        y0 = max((h - patch_size) // 2, 0)
        x0 = max((w - patch_size) // 2, 0)
        gray = gray[y0:y0 + patch_size, x0:x0 + patch_size]
    return gray


def export(job: ExportJob) -> Path:
    """Process every image under job.image_dir; returns the manifest path.

    Per-image failures are logged and skipped; ExportFailedError is raised
    only when images were found and none exported.
    """
    detector = build_detector(job.detector)
    segmenter = build_segmenter(job.segmenter)
    backbone = build_backbone(job.backbone, dim=job.feat_dim)

    out = Path(job.out_dir)
    (out / "detections").mkdir(parents=True, exist_ok=True)
    (out / "features").mkdir(parents=True, exist_ok=True)

    images = sorted(p for p in Path(job.image_dir).iterdir()
                    if p.suffix.lower() in IMAGE_SUFFIXES)

    def process(path: Path) -> ManifestRecord | None:
        try:
            gray = load_patch(path, job.patch_size)
            cands = []
            for x0, y0, x1, y1, cat, score in detector.detect(gray):
                mask = segmenter.segment(gray, (x0, y0, x1, y1))
                if not mask.any():
                    log.warning("%s: empty mask for box %s, dropping",
                                path.name, (x0, y0, x1, y1))
                    continue
                cands.append(Candidate(BinaryMask(mask),
                                       DetectionBox(x0, y0, x1, y1, cat, score)))
            e = backbone.features(gray, job.stride)
            image_id = path.stem
            save_detections(out / "detections" / f"{image_id}.jsonl",
                            image_id, cands)
            save_feature_tensor(out / "features" / f"{image_id}.bin", e)
            return ManifestRecord(
                image_id=image_id, county_fips=None, label=None, split="test",
                detections=f"detections/{image_id}.jsonl",
                features=f"features/{image_id}.bin", composite=None)
        except Exception:
            log.exception("failed to export %s, skipping", path.name)
            return None

    if job.threads > 1:
        with ThreadPoolExecutor(max_workers=job.threads) as pool:
            results = list(pool.map(process, images))
    else:
        results = [process(p) for p in images]

    records = [r for r in results if r is not None]
    if images and not records:
        raise ExportFailedError(f"all {len(images)} images failed to export")

    manifest = DatasetManifest(root=out, county_priors=None, categories=[],
                               records=records)
    manifest_path = out / "manifest.json"
    save_manifest(manifest_path, manifest)
    log.info("exported %d/%d images to %s", len(records), len(images), out)
    return manifest_path
