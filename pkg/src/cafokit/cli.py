"""Command-line surface: synth, filter, features, train, predict, eval, explain."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import explain as explain_mod
from .features import assemble_features, load_county_table, resolve_county
from .io import (DatasetManifest, ManifestRecord, load_composite,
                 load_detections, load_feature_tensor, load_jsonl,
                 load_manifest, load_model_state, save_composite,
                 save_detections, save_feature_tensor, save_jsonl,
                 save_manifest, save_model_state)
from .masks import (FilterThresholds, Taxonomy, composite_masks,
                    filter_candidates, resize_composite)
from .metrics import macro_f1, per_class_f1
from .model import CLASS_NAMES, ModelConfig
from .synth import SynthConfig, generate_dataset
from .train import TrainConfig, TrainSample, predict, train

log = logging.getLogger(__name__)


class ValidationError(ValueError):
    """Bad inputs or configuration; maps to exit code 2."""


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {path}")
    return json.loads(p.read_text())


def _thresholds(cfg: dict) -> FilterThresholds:
    return FilterThresholds.from_dict(cfg.get("thresholds", {}))


def _taxonomy(cfg: dict) -> Taxonomy:
    names = cfg.get("taxonomy")
    return Taxonomy(names) if names else Taxonomy()


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_samples(manifest: DatasetManifest, eps: float,
                  threads: int = 1) -> list[TrainSample]:
    table = {}
    if manifest.county_priors is not None:
        table = load_county_table(manifest.path(manifest.county_priors))

    def build(rec: ManifestRecord) -> TrainSample:
        try:
            e = load_feature_tensor(manifest.path(rec.features))
            if rec.composite is None:
                raise ValidationError("record has no composite mask")
            comp = load_composite(manifest.path(rec.composite))
            q = resolve_county(table, rec.county_fips)
            f_raw = assemble_features(comp, q, eps)
            cp = resize_composite(comp, e.shape[0], e.shape[1])
            label = CLASS_NAMES.index(rec.label) if rec.label is not None else -1
            return TrainSample(image_id=rec.image_id, e=e, cp=cp, f_raw=f_raw,
                               label=label, split=rec.split)
        except Exception as exc:
            raise type(exc)(f"record {rec.image_id}: {exc}") from exc

    return _parallel_map(build, manifest.records, threads)


def cmd_synth(args, cfg: dict) -> int:
    synth_cfg = SynthConfig.from_dict(cfg.get("synth", {})) if cfg.get("synth") \
        else SynthConfig()
    generate_dataset(args.out, args.n, args.seed, config=synth_cfg,
                     thresholds=_thresholds(cfg), taxonomy=_taxonomy(cfg))
    print(f"wrote {args.n} scenes to {args.out}")
    return 0


def cmd_filter(args, cfg: dict) -> int:
    manifest = load_manifest(args.manifest, check_files=False)
    th = _thresholds(cfg)
    if cfg.get("taxonomy"):
        taxonomy = _taxonomy(cfg)
    elif manifest.categories:
        taxonomy = Taxonomy(manifest.categories)
    else:
        taxonomy = Taxonomy()
    out = Path(args.out)
    (out / "accepted").mkdir(parents=True, exist_ok=True)
    (out / "composites").mkdir(parents=True, exist_ok=True)

    def process(rec: ManifestRecord) -> int:
        cands = load_detections(manifest.path(rec.detections))
        accepted = filter_candidates(cands, th, taxonomy)
        if cands:
            h, w = cands[0].mask.data.shape
        elif rec.composite is not None:
            h, w = load_composite(manifest.path(rec.composite)).shape[:2]
        else:
            raise ValidationError(
                f"record {rec.image_id}: cannot infer image size "
                "(no detections and no composite)")
        comp = composite_masks(accepted, h, w, len(taxonomy))
        save_detections(out / "accepted" / f"{rec.image_id}.jsonl",
                        rec.image_id, accepted)
        save_composite(out / "composites" / f"{rec.image_id}.json", comp)
        return len(accepted)

    counts = _parallel_map(process, manifest.records, args.threads)
    county_rel = manifest.county_priors
    if county_rel is not None:
        (out / Path(county_rel).name).write_bytes(
            manifest.path(county_rel).read_bytes())
        county_rel = Path(county_rel).name
    new_records = [
        ManifestRecord(
            image_id=rec.image_id, county_fips=rec.county_fips, label=rec.label,
            split=rec.split,
            detections=f"accepted/{rec.image_id}.jsonl",
            features=str(manifest.path(rec.features).resolve()),
            composite=f"composites/{rec.image_id}.json")
        for rec in manifest.records
    ]
    save_manifest(out / "manifest.json",
                  DatasetManifest(root=out, county_priors=county_rel,
                                  categories=list(taxonomy.names),
                                  records=new_records))
    print(f"accepted {sum(counts)} candidates over {len(manifest.records)} records")
    return 0


def cmd_features(args, cfg: dict) -> int:
    manifest = load_manifest(args.manifest)
    eps = float(cfg.get("model", {}).get("eps", 1e-6))
    table = {}
    if manifest.county_priors is not None:
        table = load_county_table(manifest.path(manifest.county_priors))

    def build(rec: ManifestRecord) -> dict:
        comp = load_composite(manifest.path(rec.composite))
        q = resolve_county(table, rec.county_fips)
        f = assemble_features(comp, q, eps)
        return {"image_id": rec.image_id, "county_fips": rec.county_fips,
                "f": [float(v) for v in f]}

    rows = _parallel_map(build, manifest.records, args.threads)
    save_jsonl(args.out, rows)
    print(f"wrote {len(rows)} feature vectors to {args.out}")
    return 0


def _model_config(cfg: dict, feat_dim: int, n_categories: int) -> ModelConfig:
    d = dict(cfg.get("model", {}))
    d.setdefault("feat_dim", feat_dim)
    d.setdefault("n_categories", n_categories)
    return ModelConfig.from_dict(d)


def cmd_train(args, cfg: dict) -> int:
    manifest = load_manifest(args.manifest)
    eps = float(cfg.get("model", {}).get("eps", 1e-6))
    samples = _load_samples(manifest, eps, args.threads)
    if any(s.label < 0 for s in samples):
        raise ValidationError("training manifest has records without labels")
    feat_dim = samples[0].e.shape[2]
    n_categories = samples[0].cp.shape[2]
    model_cfg = _model_config(cfg, feat_dim, n_categories)
    train_cfg = TrainConfig.from_dict(cfg.get("training", {}))
    if args.seed is not None:
        train_cfg.seed = args.seed
    state = train(samples, model_cfg, train_cfg,
                  category_names=tuple(manifest.categories))
    save_model_state(args.out, state)
    print(f"wrote model state to {args.out}")
    return 0


def cmd_predict(args, cfg: dict) -> int:
    manifest = load_manifest(args.manifest)
    state = load_model_state(args.model)
    samples = _load_samples(manifest, state.config.eps, args.threads)
    if args.split:
        samples = [s for s in samples if s.split == args.split]
    rows = []
    for s in samples:
        label, p = predict(s.e, s.cp, s.f_raw, state)
        rows.append({"image_id": s.image_id, "label": CLASS_NAMES[label],
                     "p": [float(v) for v in p]})
    save_jsonl(args.out, rows)
    print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def cmd_eval(args, cfg: dict) -> int:
    manifest = load_manifest(args.manifest, check_files=False)
    label_by_id = {r.image_id: r.label for r in manifest.records}
    preds = load_jsonl(args.predictions)
    y_true, y_pred = [], []
    for row in preds:
        true = label_by_id.get(row["image_id"])
        if true is None:
            raise ValidationError(f"no label for predicted id {row['image_id']}")
        y_true.append(CLASS_NAMES.index(true))
        y_pred.append(CLASS_NAMES.index(row["label"]))
    f1 = per_class_f1(y_true, y_pred, len(CLASS_NAMES))
    macro = macro_f1(y_true, y_pred, len(CLASS_NAMES))
    header = "  ".join(f"{n:>8s}" for n in CLASS_NAMES)
    values = "  ".join(f"{v:8.3f}" for v in f1)
    print(f"{'':8s}{header}  {'macro':>8s}")
    print(f"{'F1':8s}{values}  {macro:8.3f}")
    if args.out:
        save_jsonl(args.out, [{"per_class_f1": f1.tolist(), "macro_f1": macro,
                               "class_names": list(CLASS_NAMES)}])
    return 0


def cmd_explain(args, cfg: dict) -> int:
    manifest = load_manifest(args.manifest)
    state = load_model_state(args.model)
    eps = state.config.eps
    table = {}
    if manifest.county_priors is not None:
        table = load_county_table(manifest.path(manifest.county_priors))
    out = Path(args.out)
    (out / "heatmaps").mkdir(parents=True, exist_ok=True)
    feature_rows, mask_rows = [], []
    records = manifest.records
    if args.split:
        records = [r for r in records if r.split == args.split]
    for rec in records:
        e = load_feature_tensor(manifest.path(rec.features))
        comp = load_composite(manifest.path(rec.composite))
        q = resolve_county(table, rec.county_fips)
        f_raw = assemble_features(comp, q, eps)
        cp = resize_composite(comp, e.shape[0], e.shape[1])
        feature_rows.append(explain_mod.gradient_activation(
            rec.image_id, e, cp, f_raw, state).to_dict())
        mask_rows.append(explain_mod.probability_drop(
            rec.image_id, e, comp, q, state).to_dict())
        heat = explain_mod.saliency_heatmap(e, cp, f_raw, state)
        explain_mod.save_heatmap_pgm(out / "heatmaps" / f"{rec.image_id}.pgm", heat)
        save_feature_tensor(out / "heatmaps" / f"{rec.image_id}.bin", heat[:, :, None])
    save_jsonl(out / "feature_importance.jsonl", feature_rows)
    save_jsonl(out / "mask_importance.jsonl", mask_rows)
    print(f"wrote explanations for {len(records)} records to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cafokit",
        description="Infrastructure-mask filtering, prior features, "
                    "mask-guided attention classification and explainability.")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-record stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", help="filter detections into composite masks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("features", help="compute prior feature vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the attention classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict classes for manifest records")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="per-class F1 and macro-F1 table")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="feature/mask importance and heatmaps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None)
    p.set_defaults(func=cmd_explain)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        return args.func(args, cfg)
    except (ValidationError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.exception("runtime error")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
