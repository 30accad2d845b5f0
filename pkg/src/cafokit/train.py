"""Mini-batch training with an Adam optimizer, seeded and deterministic."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, fields

import numpy as np

from .features import FeatureStandardizer
from .metrics import macro_f1
from .model import (ModelConfig, ModelParams, ModelState,
                    UntrainedModelError, classify_forward, init_params,
                    loss_and_gradients, param_items)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    class_balanced: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainSample:
    """One training record with the mask grid already resized to the feature grid."""

    image_id: str
    e: np.ndarray        # (H', W', D)
    cp: np.ndarray       # (H', W', K)
    f_raw: np.ndarray    # unstandardized prior vector
    label: int
    split: str


class Adam:
    """Per-parameter adaptive steps; update order is fixed for determinism."""

    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in param_items(params)}
        self.v = {name: np.zeros_like(arr) for name, arr in param_items(params)}

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        grad_map = dict(param_items(grads))
        for name, p in param_items(params):
            g = grad_map[name]
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)


def _as_batch(samples: list[TrainSample], std: FeatureStandardizer | None,
              cfg: ModelConfig) -> list[tuple]:
    out = []
    for s in samples:
        f_hat = std.transform(s.f_raw) if (cfg.enable_pfv and std is not None) else None
        out.append((s.e, s.cp, f_hat, s.label))
    return out


def evaluate_samples(samples: list[TrainSample], state: ModelState) -> float:
    """Macro-F1 of argmax predictions over the given samples."""
    preds, labels = [], []
    for s in samples:
        label_pred, _ = predict(s.e, s.cp, s.f_raw, state)
        preds.append(label_pred)
        labels.append(s.label)
    return macro_f1(labels, preds, state.config.n_classes)


def train(samples: list[TrainSample], model_cfg: ModelConfig,
          train_cfg: TrainConfig,
          category_names: tuple[str, ...] = ()) -> ModelState:
    """Adam training on the train split; returns the best-validation-macro-F1 state."""
    train_set = [s for s in samples if s.split == "train"]
    val_set = [s for s in samples if s.split == "val"]
    if not train_set:
        raise ValueError("no records with split == 'train'")

    std = None
    if model_cfg.enable_pfv:
        std = FeatureStandardizer.fit([s.f_raw for s in train_set])

    ss = np.random.SeedSequence(train_cfg.seed)
    init_seed, shuffle_seed = [int(c.generate_state(1)[0]) for c in ss.spawn(2)]
    params = init_params(model_cfg, init_seed)
    rng = np.random.default_rng(shuffle_seed)
    opt = Adam(params, train_cfg)

    state = ModelState(params=params, config=model_cfg, standardizer=std,
                       category_names=tuple(category_names))
    best_params = copy.deepcopy(params)
    best_f1 = -1.0

    n = len(train_set)
    if train_cfg.class_balanced:
        counts = np.bincount([s.label for s in train_set], minlength=model_cfg.n_classes)
        weights = np.array([1.0 / counts[s.label] for s in train_set])
        weights /= weights.sum()

    for epoch in range(train_cfg.epochs):
        if train_cfg.class_balanced:
            order = rng.choice(n, size=n, replace=True, p=weights)
        else:
            order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            batch = _as_batch([train_set[i] for i in idx], std, model_cfg)
            loss, grads = loss_and_gradients(batch, params, model_cfg)
            opt.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        if val_set:
            f1 = evaluate_samples(val_set, state)
            if f1 > best_f1:
                best_f1 = f1
                best_params = copy.deepcopy(params)
            log.info("epoch %d: loss %.4f, val macro-F1 %.4f",
                     epoch, epoch_loss / n_batches, f1)
        else:
            log.info("epoch %d: loss %.4f", epoch, epoch_loss / n_batches)

    if val_set:
        state.params = best_params
    return state


def predict(e: np.ndarray, cp: np.ndarray | None, f_raw: np.ndarray | None,
            state: ModelState) -> tuple[int, np.ndarray]:
    """Class index (lowest-index tie-break) and probability vector."""
    cfg = state.config
    f_hat = None
    if cfg.enable_pfv:
        if state.standardizer is None:
            raise UntrainedModelError("standardizer missing; model not trained")
        if f_raw is None:
            raise ValueError("prior vector required when enable_pfv is on")
        f_hat = state.standardizer.transform(f_raw)
    p, _, _ = classify_forward(e, cp, f_hat, state.params, cfg)
    return int(np.argmax(p)), p
