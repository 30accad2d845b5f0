#!/usr/bin/env python3
"""Render one synthetic scene as ASCII art and show per-candidate geometry.

Usage:
    python scripts/inspect_scene.py --label swine --seed 4
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cafokit.masks import (FilterThresholds, Taxonomy, composite_masks,  # noqa: E402
                           filter_candidates, geometric_functionals)
from cafokit.model import CLASS_NAMES  # noqa: E402
from cafokit.synth import SceneRecipe, SynthConfig, build_scene  # noqa: E402

GLYPHS = "BPSFGDQ"  # one letter per category channel


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--label", choices=CLASS_NAMES, default="swine")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SynthConfig()
    taxonomy = Taxonomy()
    cands = build_scene(SceneRecipe(label=args.label, seed=args.seed, config=cfg))
    thresholds = FilterThresholds()
    accepted = filter_candidates(cands, thresholds, taxonomy)
    accepted_set = {id(c) for c in accepted}

    print(f"scene label={args.label} seed={args.seed}: "
          f"{len(cands)} candidates, {len(accepted)} accepted\n")
    print(f"{'category':16s} {'score':>5s} {'phi':>6s} {'psi':>6s} "
          f"{'rho':>6s} {'sigma':>6s}  kept")
    for c in cands:
        phi, psi, rho, sigma = geometric_functionals(c.mask, c.box)
        name = taxonomy[c.box.category].name
        kept = "yes" if id(c) in accepted_set else "no"
        print(f"{name:16s} {c.box.confidence:5.2f} {phi:6.2f} {psi:6.2f} "
              f"{rho:6.2f} {sigma:6.2f}  {kept}")

    comp = composite_masks(accepted, cfg.image_size, cfg.image_size,
                           len(taxonomy))
    print()
    for row in range(cfg.image_size):
        line = []
        for col in range(cfg.image_size):
            ch = "."
            for k in range(comp.shape[2]):
                if comp[row, col, k]:
                    ch = GLYPHS[k]
                    break
            line.append(ch)
        print("".join(line))
    return 0


if __name__ == "__main__":
    sys.exit(main())
