"""Interchange formats: feature tensors, detection streams, composites,
manifests and checksummed model-state files."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureStandardizer
from .masks import (BinaryMask, Candidate, DetectionBox, rle_decode, rle_encode)
from .model import (ModelConfig, ModelState, init_params, param_items,
                    set_param, zeros_like_params)

log = logging.getLogger(__name__)

MODEL_MAGIC = b"CAFOKITM"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Feature tensors: little-endian float32 row-major blob + JSON sidecar
# ---------------------------------------------------------------------------

def sidecar_path(bin_path: Path) -> Path:
    return Path(bin_path).with_suffix(".json")


def save_feature_tensor(bin_path, e: np.ndarray) -> None:
    bin_path = Path(bin_path)
    e32 = np.ascontiguousarray(e, dtype="<f4")
    atomic_write_bytes(bin_path, e32.tobytes(order="C"))
    meta = {"shape": list(e.shape), "dtype": "f32", "order": "row-major"}
    atomic_write_text(sidecar_path(bin_path), dumps(meta) + "\n")


def load_feature_tensor(bin_path) -> np.ndarray:
    bin_path = Path(bin_path)
    meta = json.loads(sidecar_path(bin_path).read_text())
    if meta.get("dtype") != "f32" or meta.get("order") != "row-major":
        raise ValueError(f"unsupported feature tensor metadata: {meta}")
    shape = tuple(meta["shape"])
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise ValueError(
            f"{bin_path}: blob has {raw.size} floats, sidecar shape {shape}")
    return raw.reshape(shape).astype(np.float64)


# ---------------------------------------------------------------------------
# Detection streams (JSON lines, RLE masks)
# ---------------------------------------------------------------------------

def save_detections(path, image_id: str, candidates: list[Candidate]) -> None:
    lines = []
    for cand in candidates:
        rec = {
            "image_id": image_id,
            "category_id": cand.box.category,
            "rle": cand.mask.to_rle(),
            "box": [cand.box.x0, cand.box.y0, cand.box.x1, cand.box.y1],
            "score": cand.box.confidence,
        }
        lines.append(dumps(rec))
    atomic_write_text(Path(path), "".join(line + "\n" for line in lines))


def load_detections(path) -> list[Candidate]:
    """Load candidates, skipping empty masks and degenerate boxes with a warning."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            mask = BinaryMask.from_rle(rec["rle"])
            if mask.is_empty:
                log.warning("%s:%d: skipping empty mask", path, lineno)
                continue
            x0, y0, x1, y1 = rec["box"]
            if not (x0 < x1 and y0 < y1):
                log.warning("%s:%d: skipping degenerate box %s", path, lineno, rec["box"])
                continue
            box = DetectionBox(x0, y0, x1, y1, rec["category_id"],
                               rec.get("score", 1.0))
            out.append(Candidate(mask, box))
    return out


# ---------------------------------------------------------------------------
# Composite masks (per-channel RLE in one JSON file)
# ---------------------------------------------------------------------------

def save_composite(path, c: np.ndarray) -> None:
    h, w, k = c.shape
    channels = [rle_encode(c[:, :, j])["counts"] for j in range(k)]
    atomic_write_text(Path(path), dumps({"size": [h, w, k], "channels": channels}) + "\n")


def load_composite(path) -> np.ndarray:
    rec = json.loads(Path(path).read_text())
    h, w, k = rec["size"]
    if len(rec["channels"]) != k:
        raise ValueError(f"{path}: {len(rec['channels'])} channels, header says {k}")
    c = np.zeros((h, w, k), dtype=np.uint8)
    for j, counts in enumerate(rec["channels"]):
        c[:, :, j] = rle_decode({"size": [h, w], "counts": counts})
    return c


# ---------------------------------------------------------------------------
# JSON-lines helpers (feature vectors, predictions, reports)
# ---------------------------------------------------------------------------

def save_jsonl(path, records: list[dict]) -> None:
    atomic_write_text(Path(path), "".join(dumps(r) + "\n" for r in records))


def load_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestRecord:
    image_id: str
    county_fips: str | None
    label: str | None
    split: str
    detections: str
    features: str
    composite: str | None


@dataclass
class DatasetManifest:
    root: Path
    county_priors: str | None
    categories: list[str]
    records: list[ManifestRecord]

    def path(self, rel: str) -> Path:
        return self.root / rel


def save_manifest(path, manifest: DatasetManifest) -> None:
    doc = {
        "county_priors": manifest.county_priors,
        "categories": manifest.categories,
        "records": [
            {
                "image_id": r.image_id,
                "county_fips": r.county_fips,
                "label": r.label,
                "split": r.split,
                "detections": r.detections,
                "features": r.features,
                "composite": r.composite,
            }
            for r in manifest.records
        ],
    }
    atomic_write_text(Path(path), dumps(doc) + "\n")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    root = path.parent
    records = [ManifestRecord(**r) for r in doc["records"]]
    ids = [r.image_id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate image_ids in manifest")
    manifest = DatasetManifest(root=root, county_priors=doc.get("county_priors"),
                               categories=list(doc.get("categories", [])),
                               records=records)
    if check_files:
        for r in records:
            for rel in (r.detections, r.features, r.composite):
                if rel is not None and not (root / rel).exists():
                    raise FileNotFoundError(f"{path}: missing file {rel} "
                                            f"for record {r.image_id}")
            if not sidecar_path(root / r.features).exists():
                raise FileNotFoundError(
                    f"{path}: missing feature sidecar for record {r.image_id}")
        if manifest.county_priors is not None and not (root / manifest.county_priors).exists():
            raise FileNotFoundError(f"{path}: missing county priors file")
    return manifest


# ---------------------------------------------------------------------------
# Model state: JSON header + ordered float64 blobs with per-blob checksums
# ---------------------------------------------------------------------------

def save_model_state(path, state: ModelState) -> None:
    blobs = []
    entries = []
    for name, arr in param_items(state.params):
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        blobs.append(raw)
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "f64",
            "sha256": hashlib.sha256(raw).hexdigest(),
        })
    header = {
        "format_version": 1,
        "config": state.config.to_dict(),
        "class_names": list(state.class_names),
        "category_names": list(state.category_names),
        "standardizer": (
            None if state.standardizer is None else
            {"mean": state.standardizer.mean.tolist(),
             "std": state.standardizer.std.tolist()}
        ),
        "params": entries,
    }
    hbytes = dumps(header).encode()
    payload = MODEL_MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(blobs)
    atomic_write_bytes(Path(path), payload)


def load_model_state(path) -> ModelState:
    raw = Path(path).read_bytes()
    if raw[:8] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model state file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode())
    if header.get("format_version") != 1:
        raise ValueError(f"{path}: unsupported format version")
    cfg = ModelConfig.from_dict(header["config"])
    params = zeros_like_params(init_params(cfg, seed=0))
    offset = 16 + hlen
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        blob = raw[offset:offset + nbytes]
        offset += nbytes
        if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise ValueError(f"{path}: checksum mismatch for {entry['name']}")
        arr = np.frombuffer(blob, dtype="<f8").reshape(shape).copy()
        set_param(params, entry["name"], arr)
    std = None
    if header["standardizer"] is not None:
        std = FeatureStandardizer(mean=np.array(header["standardizer"]["mean"]),
                                  std=np.array(header["standardizer"]["std"]))
    return ModelState(params=params, config=cfg, standardizer=std,
                      class_names=tuple(header["class_names"]),
                      category_names=tuple(header["category_names"]))
