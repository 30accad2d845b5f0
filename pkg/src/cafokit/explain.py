"""Explainability: gradient-activation importance, channel probability drop,
and saliency heatmaps over the fused feature grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .features import assemble_features, feature_slot_names
from .masks import resize_composite
from .model import (NEGATIVE_CLASS, POSITIVE_CLASSES, ModelState,
                    UntrainedModelError, classify_forward)

log = logging.getLogger(__name__)


def _require_trained(state: ModelState) -> None:
    if state.config.enable_pfv and state.standardizer is None:
        raise UntrainedModelError("standardizer missing; model not trained")


def _forward(e, cp, f_raw, state: ModelState):
    cfg = state.config
    f_hat = None
    if cfg.enable_pfv:
        f_hat = state.standardizer.transform(f_raw)
    return classify_forward(e, cp, f_hat, state.params, cfg)


@dataclass
class FeatureImportanceReport:
    image_id: str
    predicted_class: str
    flagged_negative: bool
    z_scores: np.ndarray
    z_total: float
    prior_scores: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "predicted_class": self.predicted_class,
            "flagged_negative": self.flagged_negative,
            "z_scores": self.z_scores.tolist(),
            "z_total": self.z_total,
            "prior_scores": self.prior_scores,
        }


@dataclass
class MaskImportanceReport:
    image_id: str
    predicted_class: str
    delta: dict[str, float]
    delta_minus: dict[str, float]
    delta_plus: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "predicted_class": self.predicted_class,
            "delta": self.delta,
            "delta_minus": self.delta_minus,
            "delta_plus": self.delta_plus,
        }


def gradient_activation(image_id: str, e: np.ndarray, cp: np.ndarray | None,
                        f_raw: np.ndarray | None,
                        state: ModelState) -> FeatureImportanceReport:
    """Importance s = |g| * |h| where g is the head-weight row of the chosen class.

    The class is the predicted one restricted to the positive classes; a
    negative argmax falls back to the best positive class and is flagged.
    """
    _require_trained(state)
    p, _, cache = _forward(e, cp, f_raw, state)
    c_star = int(np.argmax(p))
    flagged = False
    if c_star == NEGATIVE_CLASS:
        c_star = int(POSITIVE_CLASSES[int(np.argmax(p[list(POSITIVE_CLASSES)]))])
        flagged = True
    h = cache["h"]
    g = state.params.head.w[c_star]
    s = np.abs(g) * np.abs(h)
    d = state.config.feat_dim
    z_scores = s[:d]
    prior_scores = {}
    if state.config.enable_pfv:
        names = feature_slot_names(state.category_names or
                                   [f"category_{k}" for k in range(state.config.n_categories)])
        prior_scores = {name: float(v) for name, v in zip(names, s[d:])}
    return FeatureImportanceReport(
        image_id=image_id,
        predicted_class=state.class_names[c_star],
        flagged_negative=flagged,
        z_scores=z_scores,
        z_total=float(z_scores.sum()),
        prior_scores=prior_scores,
    )


def probability_drop(image_id: str, e: np.ndarray, c: np.ndarray,
                     q: np.ndarray, state: ModelState) -> MaskImportanceReport:
    """Mean positive probability decrease when each channel is zeroed / saturated.

    Channel edits are applied to the full-resolution composite before resizing,
    and the prior vector is recomputed from the edited composite.
    """
    _require_trained(state)
    cfg = state.config
    hp, wp, _ = np.asarray(e).shape
    k_count = c.shape[2]
    names = list(state.category_names) or [f"category_{k}" for k in range(k_count)]

    def run(comp):
        cp = resize_composite(comp, hp, wp)
        f_raw = assemble_features(comp, q, cfg.eps)
        p, _, _ = _forward(e, cp, f_raw, state)
        return p

    p_base = run(c)
    c_star = int(np.argmax(p_base))
    delta, delta_minus, delta_plus = {}, {}, {}
    for k in range(k_count):
        c_minus = c.copy()
        c_minus[:, :, k] = 0
        c_plus = c.copy()
        c_plus[:, :, k] = 1
        dm = max(float(p_base[c_star] - run(c_minus)[c_star]), 0.0)
        dp = max(float(p_base[c_star] - run(c_plus)[c_star]), 0.0)
        delta_minus[names[k]] = dm
        delta_plus[names[k]] = dp
        delta[names[k]] = 0.5 * (dm + dp)
    return MaskImportanceReport(
        image_id=image_id,
        predicted_class=state.class_names[c_star],
        delta=delta,
        delta_minus=delta_minus,
        delta_plus=delta_plus,
    )


def saliency_heatmap(e: np.ndarray, cp: np.ndarray | None,
                     f_raw: np.ndarray | None, state: ModelState) -> np.ndarray:
    """Non-negative (H', W') map of |d y_cstar / d E'| * |E'| summed over channels,
    max-normalized to [0, 1]."""
    _require_trained(state)
    p, _, cache = _forward(e, cp, f_raw, state)
    c_star = int(np.argmax(p))
    ep = cache["ep"]
    hp, wp, d = ep.shape
    w_row = state.params.head.w[c_star, :d]
    if state.config.enable_map:
        a = cache["a_map"]
        weight = a / (a.sum() + state.config.eps)
    else:
        weight = np.full((hp, wp), 1.0 / (hp * wp))
    grad = weight[:, :, None] * w_row
    heat = np.abs(grad * ep).sum(axis=2)
    peak = heat.max()
    if peak > 0:
        heat = heat / peak
    return heat


def save_heatmap_pgm(path, heat: np.ndarray) -> None:
    """Write a binary PGM (maxval 255) of a [0, 1] heatmap."""
    h, w = heat.shape
    data = np.clip(np.round(heat * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())
