"""Independent brute-force oracles used to verify the library implementations.

These deliberately avoid the library's own code paths: plain loops over
pixels, pairwise distance scans, and a straight-line re-implementation of the
classifier math.
"""

import math

import numpy as np


def brute_functionals(mask: np.ndarray, box: tuple[int, int, int, int]):
    """Per-pixel enumeration of containment/coverage/rectangularity/size."""
    x0, y0, x1, y1 = box
    h, w = mask.shape
    fg = [(x, y) for y in range(h) for x in range(w) if mask[y, x]]
    assert fg, "oracle requires a non-empty mask"
    a_m = len(fg)
    inter = sum(1 for (x, y) in fg if x0 <= x < x1 and y0 <= y < y1)
    a_o = (x1 - x0) * (y1 - y0)
    xs = [x for x, _ in fg]
    ys = [y for _, y in fg]
    a_bb = (max(xs) - min(xs) + 1) * (max(ys) - min(ys) + 1)
    return inter / a_m, inter / a_o, a_m / a_bb, a_bb / a_o


def brute_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """O(|a| * |b|) pairwise-min symmetric Chamfer, diagonal-normalized."""
    pa = np.argwhere(np.asarray(a).astype(bool))
    pb = np.argwhere(np.asarray(b).astype(bool))
    if len(pa) == 0 or len(pb) == 0:
        return 1.0
    d_ab = np.mean([min(math.dist(p, q) for q in pb) for p in pa])
    d_ba = np.mean([min(math.dist(q, p) for p in pa) for q in pb])
    h, w = np.asarray(a).shape
    return 0.5 * (d_ab + d_ba) / math.hypot(h, w)


def _softmax(v):
    e = np.exp(v - np.max(v))
    return e / e.sum()


def ref_classify_forward(e, cp, f_hat, params, cfg):
    """Straight-line scalar re-implementation of the full forward pass."""
    hp, wp, d = e.shape
    k = cfg.n_categories
    n = hp * wp
    if not cfg.enable_sim:
        cp = np.ones((hp, wp, k))

    if cfg.enable_mgsa:
        at = params.attention
        ef = np.array([[e[i, j, c] for c in range(d)]
                       for i in range(hp) for j in range(wp)])
        cf = np.array([[cp[i, j, c] for c in range(k)]
                       for i in range(hp) for j in range(wp)])
        q = np.zeros((n, at.w_q.shape[1]))
        kk = np.zeros((n, at.w_k.shape[1]))
        v = np.zeros((n, d))
        for p in range(n):
            for a in range(at.w_q.shape[1]):
                q[p, a] = sum(ef[p, c] * at.w_q[c, a] for c in range(d))
                kk[p, a] = sum(cf[p, c] * at.w_k[c, a] for c in range(k))
            for c in range(d):
                v[p, c] = sum(cf[p, j] * at.w_v[j, c] for j in range(k))
        ep = np.zeros((n, d))
        for p in range(n):
            logits = np.array([
                sum(q[p, a] * kk[r, a] for a in range(q.shape[1]))
                / math.sqrt(cfg.attn_dim) for r in range(n)])
            attn = _softmax(logits)
            o = np.array([sum(attn[r] * v[r, c] for r in range(n))
                          for c in range(d)])
            hid = np.array([max(0.0, sum(o[c] * at.w_o1[c, j] for c in range(d))
                                 + at.b_o1[j])
                            for j in range(at.w_o1.shape[1])])
            out = np.array([sum(hid[j] * at.w_o2[j, c]
                                for j in range(at.w_o1.shape[1])) + at.b_o2[c]
                            for c in range(d)])
            ep[p] = out + ef[p]
        ep = ep.reshape(hp, wp, d)
    else:
        ep = e

    if cfg.enable_map:
        po = params.pooling
        h_p = po.w1.shape[3]
        pad = np.zeros((hp + 2, wp + 2, k))
        pad[1:-1, 1:-1] = cp
        act1 = np.zeros((hp, wp, h_p))
        for i in range(hp):
            for j in range(wp):
                for o in range(h_p):
                    s = po.b1[o]
                    for di in range(3):
                        for dj in range(3):
                            for c in range(k):
                                s += pad[i + di, j + dj, c] * po.w1[di, dj, c, o]
                    act1[i, j, o] = max(0.0, s)
        pad2 = np.zeros((hp + 2, wp + 2, h_p))
        pad2[1:-1, 1:-1] = act1
        amap = np.zeros((hp, wp))
        for i in range(hp):
            for j in range(wp):
                s = po.b2[0]
                for di in range(3):
                    for dj in range(3):
                        for c in range(h_p):
                            s += pad2[i + di, j + dj, c] * po.w2[di, dj, c, 0]
                amap[i, j] = 1.0 / (1.0 + math.exp(-s))
        denom = amap.sum() + cfg.eps
        z = np.array([(amap * ep[:, :, c]).sum() / denom for c in range(d)])
    else:
        z = np.array([ep[:, :, c].mean() for c in range(d)])

    h = np.concatenate([z, f_hat]) if cfg.enable_pfv else z
    y = params.head.w @ h + params.head.b
    return _softmax(y), y


def oracle_label(composite: np.ndarray) -> str:
    """Rule-based synthetic-class decision from the ground-truth composite alone."""
    from scipy.ndimage import label as cc_label

    present = composite.reshape(-1, composite.shape[2]).max(axis=0)
    barn, pond, silo, feedlot, silage = present[0], present[1], present[2], \
        present[3], present[4]
    if feedlot:
        return "beef"
    if barn and pond:
        return "swine"
    if silo or silage:
        return "dairy"
    if barn:
        n_comp = cc_label(composite[:, :, 0])[1]
        if n_comp >= 3:
            return "poultry"
    return "negative"
