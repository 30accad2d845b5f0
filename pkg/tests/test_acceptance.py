"""End-to-end acceptance gate.

Each test prints a single PASS/FAIL line for its criterion; the heavy
fixtures (1000-scene dataset, two trained models) are shared module-wide.
"""

import time

import numpy as np
import pytest

from cafokit.cli import _load_samples
from cafokit.explain import gradient_activation, probability_drop
from cafokit.features import chamfer_distance, resolve_county
from cafokit.io import (load_composite, load_feature_tensor, load_manifest,
                        load_model_state, save_model_state)
from cafokit.masks import BinaryMask, DetectionBox, geometric_functionals
from cafokit.model import (CLASS_NAMES, ModelConfig,
                           classify_forward, get_param, init_params,
                           loss_and_gradients, map_forward, mgsa_forward,
                           param_items)
from cafokit.synth import generate_dataset
from cafokit.train import TrainConfig, predict, train
from oracles import brute_chamfer, brute_functionals

pytestmark = pytest.mark.slow

TIMINGS: dict[str, float] = {}


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    t0 = time.perf_counter()
    root = tmp_path_factory.mktemp("bench")
    manifest_path = generate_dataset(root, n=1000, seed=7)
    TIMINGS["synth"] = time.perf_counter() - t0
    return load_manifest(manifest_path)


@pytest.fixture(scope="module")
def samples(dataset):
    return _load_samples(dataset, eps=1e-6)


def bench_model_config(**flags) -> ModelConfig:
    return ModelConfig(feat_dim=16, n_categories=7, attn_dim=16,
                       pool_hidden=8, **flags)


@pytest.fixture(scope="module")
def state_on(dataset, samples):
    t0 = time.perf_counter()
    state = train(samples, bench_model_config(), TrainConfig(seed=0),
                  category_names=tuple(dataset.categories))
    TIMINGS["train_on"] = time.perf_counter() - t0
    return state


@pytest.fixture(scope="module")
def state_off(dataset, samples):
    t0 = time.perf_counter()
    cfg = bench_model_config(enable_mgsa=False, enable_map=False,
                             enable_sim=False, enable_pfv=False)
    state = train(samples, cfg, TrainConfig(seed=0),
                  category_names=tuple(dataset.categories))
    TIMINGS["train_off"] = time.perf_counter() - t0
    return state


def test_geometric_oracle():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    n = 0
    while n < 1000:
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        m = (rng.random((h, w)) < rng.uniform(0.05, 0.9)).astype(np.uint8)
        if not m.any():
            continue
        x0 = int(rng.integers(0, w))
        y0 = int(rng.integers(0, h))
        x1 = int(rng.integers(x0 + 1, w + 1))
        y1 = int(rng.integers(y0 + 1, h + 1))
        box = DetectionBox(x0, y0, x1, y1, 0, 1.0)
        got = geometric_functionals(BinaryMask(m), box)
        want = brute_functionals(m, (x0, y0, x1, y1))
        assert got == want, (n, got, want)
        n += 1
    dt = time.perf_counter() - t0
    report("geometric-oracle", dt < 10.0,
           f"{n} masks exact, {dt:.2f}s < 10s")


def test_chamfer_oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(200):
        h = int(rng.integers(1, 33))
        w = int(rng.integers(1, 33))
        a = (rng.random((h, w)) < 0.3).astype(np.uint8)
        b = (rng.random((h, w)) < 0.3).astype(np.uint8)
        d = chamfer_distance(a, b)
        worst = max(worst, abs(d - brute_chamfer(a, b)))
        assert d == chamfer_distance(b, a)
        assert chamfer_distance(a, a) == (0.0 if a.any() else 1.0)
    report("chamfer-oracle", worst < 1e-9,
           f"200 pairs, worst abs err {worst:.2e} < 1e-9")


def test_gradient_check():
    cfg = ModelConfig(feat_dim=8, n_categories=7, attn_dim=8, proj_hidden=4,
                      pool_hidden=3)
    params = init_params(cfg, 0)
    rng = np.random.default_rng(2)
    batch = []
    for label in (0, 3):
        e = rng.standard_normal((4, 4, cfg.feat_dim))
        cp = rng.random((4, 4, cfg.n_categories))
        f = rng.standard_normal(cfg.n_priors)
        batch.append((e, cp, f, label))
    t0 = time.perf_counter()
    _, grads = loss_and_gradients(batch, params, cfg)
    step = 1e-4
    worst = 0.0
    for name, arr in param_items(params):
        g = get_param(grads, name).reshape(-1)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            lp, _ = loss_and_gradients(batch, params, cfg)
            flat[i] = old - step
            lm, _ = loss_and_gradients(batch, params, cfg)
            flat[i] = old
            num = (lp - lm) / (2 * step)
            worst = max(worst, abs(g[i] - num) / max(abs(g[i]), abs(num), 1e-6))
    dt = time.perf_counter() - t0
    report("gradient-check", worst < 1e-4 and dt < 60.0,
           f"max rel err {worst:.2e} < 1e-4, {dt:.1f}s < 60s")


def test_structural_identities():
    cfg = ModelConfig(feat_dim=8, n_categories=7, attn_dim=8, proj_hidden=4,
                      pool_hidden=3)
    params = init_params(cfg, 3)
    rng = np.random.default_rng(3)
    e = rng.standard_normal((4, 4, cfg.feat_dim))
    cp = rng.random((4, 4, cfg.n_categories))
    f = rng.standard_normal(cfg.n_priors)

    _, cache = mgsa_forward(e, cp, params.attention, cfg.attn_dim)
    rows_ok = np.all(np.abs(cache["a"].sum(axis=1) - 1.0) <= 1e-9)

    import copy
    p2 = copy.deepcopy(params)
    p2.attention.w_o2[:] = 0
    p2.attention.b_o2[:] = 0
    ep, _ = mgsa_forward(e, cp, p2.attention, cfg.attn_dim)
    residual_ok = np.array_equal(ep, e)

    p3 = copy.deepcopy(params)
    for name in ("w1", "b1", "w2", "b2"):
        getattr(p3.pooling, name)[:] = 0
    z, a, _ = map_forward(e, cp, p3.pooling, cfg.eps)
    n = e.shape[0] * e.shape[1]
    bound = cfg.eps * np.abs(e).max() / (0.5 * n) + 1e-15
    gap_ok = np.allclose(a, 0.5) and \
        np.all(np.abs(z - e.mean(axis=(0, 1))) <= bound)

    cfg_off = ModelConfig(feat_dim=8, n_categories=7, attn_dim=8,
                          proj_hidden=4, pool_hidden=3, enable_mgsa=False,
                          enable_map=False, enable_sim=False, enable_pfv=False)
    p4 = init_params(cfg_off, 3)
    prob, y, _ = classify_forward(e, None, None, p4, cfg_off)
    z0 = e.mean(axis=(0, 1))
    y_ref = p4.head.w @ z0 + p4.head.b
    exp = np.exp(y_ref - y_ref.max())
    baseline_ok = np.array_equal(y, y_ref) and \
        np.array_equal(prob, exp / exp.sum())

    ok = rows_ok and residual_ok and gap_ok and baseline_ok
    report("structural-identities", ok,
           f"softmax rows {rows_ok}, residual {residual_ok}, "
           f"gap bound {gap_ok}, flags-off bit-equal {baseline_ok}")


def test_synthetic_end_to_end(samples, state_on, state_off):
    test_set = [s for s in samples if s.split == "test"]
    f1_on = _macro_f1(test_set, state_on)
    f1_off = _macro_f1(test_set, state_off)
    total = TIMINGS["synth"] + TIMINGS["train_on"] + TIMINGS["train_off"]
    ok = f1_on >= 0.95 and f1_on >= f1_off and total < 600.0
    report("synthetic-end-to-end", ok,
           f"n=1000 seed=7: all-on macro-F1 {f1_on:.4f} >= 0.95, "
           f"all-off {f1_off:.4f}, total {total:.0f}s < 600s")


def _macro_f1(test_set, state):
    from cafokit.metrics import macro_f1
    preds = [predict(s.e, s.cp, s.f_raw, state)[0] for s in test_set]
    return macro_f1([s.label for s in test_set], preds, len(CLASS_NAMES))


def test_explainability_sanity(dataset, samples, state_on, state_off):
    # flags-off model: channel edits cannot move the probabilities
    rec = dataset.records[0]
    comp = load_composite(dataset.path(rec.composite))
    e = load_feature_tensor(dataset.path(rec.features))
    rep_off = probability_drop(rec.image_id, e, comp, np.full(4, 0.25),
                               state_off)
    zeros_ok = all(v == 0.0 for v in rep_off.delta.values())

    # trained model: barn/pond dominate channel importance on swine scenes
    from cafokit.features import load_county_table
    table = load_county_table(dataset.path(dataset.county_priors))
    swine = [r for r in dataset.records
             if r.label == "swine" and r.split == "test"]
    hits = 0
    for r in swine:
        comp = load_composite(dataset.path(r.composite))
        e = load_feature_tensor(dataset.path(r.features))
        q = resolve_county(table, r.county_fips)
        rep = probability_drop(r.image_id, e, comp, q, state_on)
        top = max(rep.delta, key=rep.delta.get)
        hits += top in ("barn", "manure_pond")
    frac = hits / len(swine)

    # gradient-activation g is the raw head-weight row, bit for bit
    s0 = samples[0]
    rep_g = gradient_activation(s0.image_id, s0.e, s0.cp, s0.f_raw, state_on)
    c_star = CLASS_NAMES.index(rep_g.predicted_class)
    row = state_on.params.head.w[c_star]
    f_hat = state_on.standardizer.transform(s0.f_raw)
    _, _, cache = classify_forward(s0.e, s0.cp, f_hat, state_on.params,
                                   state_on.config)
    expected = np.abs(row) * np.abs(cache["h"])
    d = state_on.config.feat_dim
    g_ok = np.array_equal(rep_g.z_scores, expected[:d]) and np.array_equal(
        np.array(list(rep_g.prior_scores.values())), expected[d:])

    ok = zeros_ok and frac >= 0.8 and g_ok
    report("explainability-sanity", ok,
           f"flags-off deltas zero {zeros_ok}, swine top-channel barn/pond "
           f"{frac:.0%} >= 80% over {len(swine)} scenes, g bit-exact {g_ok}")


def test_determinism_and_roundtrip(tmp_path, samples, state_on):
    p1 = generate_dataset(tmp_path / "a", n=25, seed=13)
    p2 = generate_dataset(tmp_path / "b", n=13 + 12, seed=13)
    data_ok = p1.read_bytes() == p2.read_bytes()
    for sub in ("detections", "composites", "features"):
        for f1 in sorted((tmp_path / "a" / sub).iterdir()):
            f2 = tmp_path / "b" / sub / f1.name
            data_ok = data_ok and f1.read_bytes() == f2.read_bytes()

    subset = samples[:80]
    cfg = bench_model_config()
    tc = TrainConfig(epochs=3, seed=21)
    sa = train(subset, cfg, tc)
    sb = train(subset, cfg, tc)
    train_ok = all(np.array_equal(x, y) for (_, x), (_, y) in
                   zip(param_items(sa.params), param_items(sb.params)))

    ckpt = tmp_path / "model.ckpt"
    save_model_state(ckpt, state_on)
    back = load_model_state(ckpt)
    state_ok = all(np.array_equal(x, y) for (_, x), (_, y) in
                   zip(param_items(state_on.params), param_items(back.params)))
    state_ok = state_ok and np.array_equal(back.standardizer.mean,
                                           state_on.standardizer.mean)
    raw = bytearray(ckpt.read_bytes())
    raw[-3] ^= 0x01
    ckpt.write_bytes(bytes(raw))
    try:
        load_model_state(ckpt)
        checksum_ok = False
    except ValueError:
        checksum_ok = True

    man = load_manifest(p1)
    rec = man.records[0]
    comp = load_composite(man.path(rec.composite))
    e = load_feature_tensor(man.path(rec.features))
    files_ok = comp.dtype == np.uint8 and e.dtype == np.float64

    ok = data_ok and train_ok and state_ok and checksum_ok and files_ok
    report("determinism-roundtrip", ok,
           f"dataset bytes {data_ok}, training bit-identical {train_ok}, "
           f"model state round-trip {state_ok}, checksum guard {checksum_ok}")
