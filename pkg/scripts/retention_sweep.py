"""Retention ratio over a (tau_s, tau_t) lattice on a synthetic video."""

from __future__ import annotations

import argparse

import numpy as np

from stmerge.pipeline import retained_count, spatial_stage
from stmerge.synth import SCENARIOS, SynthSpec, synth_video


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="mixed", choices=SCENARIOS)
    ap.add_argument("-T", type=int, default=16)
    ap.add_argument("-H", type=int, default=14)
    ap.add_argument("-W", type=int, default=14)
    ap.add_argument("-C", type=int, default=64)
    ap.add_argument("--redundancy", type=float, default=0.6)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--root-scale", type=int, default=4, choices=(2, 4))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    video = synth_video(SynthSpec(args.T, args.H, args.W, args.C, args.scenario, args.seed, redundancy=args.redundancy))
    n_in = video.grid.n_tokens
    taus = np.linspace(0.0, 1.0, args.steps)
    print(f"planted redundancy {video.planted_redundancy:.3f}; rows tau_s, columns tau_t")
    print("tau_s\\tau_t " + " ".join(f"{t:6.2f}" for t in taus))
    for ts in taus:
        spatial = spatial_stage(video.grid, float(ts), args.root_scale, 1)
        ratios = [retained_count(spatial, float(tt)) / n_in for tt in taus]
        print(f"{ts:10.2f}  " + " ".join(f"{r:6.3f}" for r in ratios))


if __name__ == "__main__":
    main()
