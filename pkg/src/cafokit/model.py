"""Mask-guided attention classifier: forward pass and exact analytic gradients.

All math runs in float64 numpy. The architecture:

  E' = W_o(softmax(Q K^T / sqrt(d_a)) V) + E        (spatial attention, residual)
  A  = sigmoid(conv3x3(relu(conv3x3(C'))))           (scalar attention map)
  z  = sum(A * E') / (sum(A) + eps)                  (attention-weighted pooling)
  y  = W [z || f_hat] + b,  p = softmax(y)

with ablation flags that bypass individual stages.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .features import FeatureStandardizer

CLASS_NAMES = ("swine", "poultry", "dairy", "beef", "negative")
NEGATIVE_CLASS = CLASS_NAMES.index("negative")
POSITIVE_CLASSES = tuple(i for i in range(len(CLASS_NAMES)) if i != NEGATIVE_CLASS)


class ShapeMismatchError(ValueError):
    """Tensor shapes inconsistent with the model configuration."""


class ConfigMismatchError(ValueError):
    """Parameter dimensions disagree with the ablation flags."""


class NonFiniteLossError(FloatingPointError):
    """A forward value became NaN or infinite."""


class UntrainedModelError(RuntimeError):
    """Operation requires a trained model state."""


@dataclass
class ModelConfig:
    """Dimensions and ablation flags; the linear head is always active."""

    feat_dim: int
    n_categories: int = 7
    attn_dim: int = 64
    proj_hidden: int = 0   # 0 -> max(feat_dim // 2, 8)
    pool_hidden: int = 16
    n_classes: int = 5
    n_priors: int = 12
    eps: float = 1e-6
    enable_mgsa: bool = True
    enable_map: bool = True
    enable_sim: bool = True
    enable_pfv: bool = True

    def __post_init__(self):
        if self.proj_hidden == 0:
            self.proj_hidden = max(self.feat_dim // 2, 8)
        for name in ("feat_dim", "n_categories", "attn_dim", "proj_hidden",
                     "pool_hidden", "n_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def head_in_dim(self) -> int:
        return self.feat_dim + (self.n_priors if self.enable_pfv else 0)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class AttentionParams:
    w_q: np.ndarray   # (D, d_a)
    w_k: np.ndarray   # (K, d_a)
    w_v: np.ndarray   # (K, D)
    w_o1: np.ndarray  # (D, D_h)
    b_o1: np.ndarray  # (D_h,)
    w_o2: np.ndarray  # (D_h, D)
    b_o2: np.ndarray  # (D,)


@dataclass
class PoolingParams:
    w1: np.ndarray  # (3, 3, K, h_p)
    b1: np.ndarray  # (h_p,)
    w2: np.ndarray  # (3, 3, h_p, 1)
    b2: np.ndarray  # (1,)


@dataclass
class ClassifierParams:
    w: np.ndarray  # (n_classes, head_in)
    b: np.ndarray  # (n_classes,)


@dataclass
class ModelParams:
    attention: AttentionParams
    pooling: PoolingParams
    head: ClassifierParams


@dataclass
class ModelState:
    params: ModelParams
    config: ModelConfig
    standardizer: FeatureStandardizer | None = None
    class_names: tuple[str, ...] = CLASS_NAMES
    category_names: tuple[str, ...] = ()


def param_items(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Flat, deterministically ordered (dotted-name, array) view of all parameters."""
    items = []
    for group_field in fields(params):
        group = getattr(params, group_field.name)
        for f in fields(group):
            items.append((f"{group_field.name}.{f.name}", getattr(group, f.name)))
    return items


def get_param(params: ModelParams, name: str) -> np.ndarray:
    group, leaf = name.split(".")
    return getattr(getattr(params, group), leaf)


def set_param(params: ModelParams, name: str, value: np.ndarray) -> None:
    group, leaf = name.split(".")
    setattr(getattr(params, group), leaf, value)


def zeros_like_params(params: ModelParams) -> ModelParams:
    p = copy.deepcopy(params)
    for name, arr in param_items(p):
        set_param(p, name, np.zeros_like(arr))
    return p


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Kaiming-uniform fan-in initialization for weights, zero biases."""
    rng = np.random.default_rng(seed)

    def kaiming(shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    d, k = cfg.feat_dim, cfg.n_categories
    d_a, d_h, h_p = cfg.attn_dim, cfg.proj_hidden, cfg.pool_hidden
    attention = AttentionParams(
        w_q=kaiming((d, d_a), d),
        w_k=kaiming((k, d_a), k),
        w_v=kaiming((k, d), k),
        w_o1=kaiming((d, d_h), d),
        b_o1=np.zeros(d_h),
        w_o2=kaiming((d_h, d), d_h),
        b_o2=np.zeros(d),
    )
    pooling = PoolingParams(
        w1=kaiming((3, 3, k, h_p), 9 * k),
        b1=np.zeros(h_p),
        w2=kaiming((3, 3, h_p, 1), 9 * h_p),
        b2=np.zeros(1),
    )
    head = ClassifierParams(
        w=kaiming((cfg.n_classes, cfg.head_in_dim), cfg.head_in_dim),
        b=np.zeros(cfg.n_classes),
    )
    return ModelParams(attention, pooling, head)


# ---------------------------------------------------------------------------
# Primitive layers
# ---------------------------------------------------------------------------

def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """3x3 convolution with zero padding; x (H, W, Cin), w (3, 3, Cin, Cout)."""
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))  # (H, W, Cin, 3, 3)
    out = np.einsum("hwcij,ijco->hwo", win, w)
    if b is not None:
        out = out + b
    return out


def conv3x3_param_grad(x: np.ndarray, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))
    dw = np.einsum("hwcij,hwo->ijco", win, dout)
    db = dout.sum(axis=(0, 1))
    return dw, db


def conv3x3_input_grad(dout: np.ndarray, w: np.ndarray) -> np.ndarray:
    # full correlation with the spatially flipped kernel, channels transposed
    w_back = w[::-1, ::-1].transpose(0, 1, 3, 2)
    return conv3x3(dout, w_back)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def mgsa_forward(e: np.ndarray, cp: np.ndarray, p: AttentionParams,
                 attn_dim: int) -> tuple[np.ndarray, dict]:
    """Mask-guided spatial attention with residual fusion; returns (E', cache)."""
    if e.ndim != 3 or cp.ndim != 3 or e.shape[:2] != cp.shape[:2]:
        raise ShapeMismatchError(
            f"feature grid {e.shape} and mask grid {cp.shape} disagree")
    hp, wp, d = e.shape
    n = hp * wp
    ef = e.reshape(n, d)
    cf = cp.reshape(n, cp.shape[2])
    q = ef @ p.w_q
    kk = cf @ p.w_k
    v = cf @ p.w_v
    scale = 1.0 / np.sqrt(attn_dim)
    a = softmax(q @ kk.T * scale, axis=1)
    o = a @ v
    h1 = o @ p.w_o1 + p.b_o1
    h1r = np.maximum(h1, 0.0)
    oo = h1r @ p.w_o2 + p.b_o2
    ep = (oo + ef).reshape(hp, wp, d)
    cache = {"ef": ef, "cf": cf, "q": q, "kk": kk, "v": v, "a": a, "o": o,
             "h1": h1, "h1r": h1r, "scale": scale}
    return ep, cache


def map_forward(ep: np.ndarray, cp: np.ndarray, p: PoolingParams,
                eps: float) -> tuple[np.ndarray, np.ndarray, dict]:
    """Mask attention pooling; returns (z, attention map A, cache)."""
    if ep.shape[:2] != cp.shape[:2]:
        raise ShapeMismatchError(
            f"feature grid {ep.shape} and mask grid {cp.shape} disagree")
    pre1 = conv3x3(cp, p.w1, p.b1)
    act1 = np.maximum(pre1, 0.0)
    pre2 = conv3x3(act1, p.w2, p.b2)[:, :, 0]
    a = 1.0 / (1.0 + np.exp(-pre2))
    s = a.sum() + eps
    z = (a[:, :, None] * ep).sum(axis=(0, 1)) / s
    cache = {"pre1": pre1, "act1": act1, "a": a, "s": s, "cp": cp}
    return z, a, cache


def classify_forward(e: np.ndarray, cp: np.ndarray | None, f_hat: np.ndarray | None,
                     params: ModelParams, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, dict]:
    """Full forward pass under the ablation flags; returns (p, logits, cache)."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 3 or e.shape[2] != cfg.feat_dim:
        raise ShapeMismatchError(
            f"feature tensor {e.shape} incompatible with feat_dim={cfg.feat_dim}")
    hp, wp, d = e.shape
    if cfg.enable_sim:
        if cp is None:
            raise ShapeMismatchError("mask grid required when enable_sim is on")
        cp = np.asarray(cp, dtype=np.float64)
        if cp.shape != (hp, wp, cfg.n_categories):
            raise ShapeMismatchError(
                f"mask grid {cp.shape} != {(hp, wp, cfg.n_categories)}")
    else:
        cp = np.ones((hp, wp, cfg.n_categories))

    if params.head.w.shape != (cfg.n_classes, cfg.head_in_dim):
        raise ConfigMismatchError(
            f"head weight {params.head.w.shape} != "
            f"{(cfg.n_classes, cfg.head_in_dim)} implied by flags")

    if cfg.enable_mgsa:
        ep, mgsa_cache = mgsa_forward(e, cp, params.attention, cfg.attn_dim)
    else:
        ep, mgsa_cache = e, None

    if cfg.enable_map:
        z, a_map, map_cache = map_forward(ep, cp, params.pooling, cfg.eps)
    else:
        z, a_map, map_cache = ep.mean(axis=(0, 1)), None, None

    if cfg.enable_pfv:
        if f_hat is None:
            raise ConfigMismatchError("prior vector required when enable_pfv is on")
        f_hat = np.asarray(f_hat, dtype=np.float64)
        if f_hat.shape != (cfg.n_priors,):
            raise ShapeMismatchError(
                f"prior vector shape {f_hat.shape} != ({cfg.n_priors},)")
        h = np.concatenate([z, f_hat])
    else:
        h = z

    y = params.head.w @ h + params.head.b
    p = softmax(y)
    cache = {"e": e, "cp": cp, "ep": ep, "z": z, "a_map": a_map, "h": h,
             "y": y, "p": p, "mgsa": mgsa_cache, "map": map_cache}
    return p, y, cache


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _backward_sample(cache: dict, label: int, params: ModelParams,
                     cfg: ModelConfig, grads: ModelParams) -> None:
    """Accumulate cross-entropy gradients for one sample into `grads`."""
    p, h = cache["p"], cache["h"]
    ep = cache["ep"]
    hp, wp, d = ep.shape
    n = hp * wp

    dy = p.copy()
    dy[label] -= 1.0
    grads.head.w += np.outer(dy, h)
    grads.head.b += dy
    dh = params.head.w.T @ dy
    dz = dh[:d]

    if cfg.enable_map:
        mc = cache["map"]
        a, s = mc["a"], mc["s"]
        dep = (a[:, :, None] / s) * dz
        da = ((ep - cache["z"]) * dz).sum(axis=2) / s
        dpre2 = da * a * (1.0 - a)
        dw2, db2 = conv3x3_param_grad(mc["act1"], dpre2[:, :, None])
        grads.pooling.w2 += dw2
        grads.pooling.b2 += db2
        dact1 = conv3x3_input_grad(dpre2[:, :, None], params.pooling.w2)
        dpre1 = dact1 * (mc["pre1"] > 0)
        dw1, db1 = conv3x3_param_grad(mc["cp"], dpre1)
        grads.pooling.w1 += dw1
        grads.pooling.b1 += db1
    else:
        dep = np.broadcast_to(dz / n, (hp, wp, d)).copy()

    if cfg.enable_mgsa:
        ac = cache["mgsa"]
        doo = dep.reshape(n, d)
        grads.attention.w_o2 += ac["h1r"].T @ doo
        grads.attention.b_o2 += doo.sum(axis=0)
        dh1 = (doo @ params.attention.w_o2.T) * (ac["h1"] > 0)
        grads.attention.w_o1 += ac["o"].T @ dh1
        grads.attention.b_o1 += dh1.sum(axis=0)
        do = dh1 @ params.attention.w_o1.T
        a_att = ac["a"]
        da_att = do @ ac["v"].T
        grads.attention.w_v += ac["cf"].T @ (a_att.T @ do)
        ds = a_att * (da_att - (da_att * a_att).sum(axis=1, keepdims=True))
        ds *= ac["scale"]
        grads.attention.w_q += ac["ef"].T @ (ds @ ac["kk"])
        grads.attention.w_k += ac["cf"].T @ (ds.T @ ac["q"])


def loss_and_gradients(batch: Sequence[tuple], params: ModelParams,
                       cfg: ModelConfig) -> tuple[float, ModelParams]:
    """Mean cross-entropy and exact gradients over (E, C', f_hat, label) samples."""
    grads = zeros_like_params(params)
    total = 0.0
    for e, cp, f_hat, label in batch:
        if not 0 <= label < cfg.n_classes:
            raise ValueError(f"label {label} outside [0, {cfg.n_classes})")
        p, y, cache = classify_forward(e, cp, f_hat, params, cfg)
        if not np.all(np.isfinite(y)):
            raise NonFiniteLossError(f"non-finite logits {y}")
        total += -np.log(max(p[label], 1e-300))
        _backward_sample(cache, label, params, cfg, grads)
    m = len(batch)
    for name, arr in param_items(grads):
        arr /= m
    loss = total / m
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}")
    return loss, grads
