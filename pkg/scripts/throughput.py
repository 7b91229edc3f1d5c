"""Time the merge on random (T, 14, 14, C) grids and fit runtime against T."""

from __future__ import annotations

import argparse
import time

import numpy as np

from stmerge import MergeConfig, TokenGrid, merge_video


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--size", type=int, default=14)
    ap.add_argument("--channels", type=int, default=896)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    full = rng.standard_normal((max(args.frames), args.size, args.size, args.channels), dtype=np.float32)
    cfg = MergeConfig(threads=args.threads)
    times = []
    for T in args.frames:
        grid = TokenGrid(full[:T])
        best = float("inf")
        for _ in range(args.repeats):
            start = time.perf_counter()
            res = merge_video(grid, cfg)
            best = min(best, time.perf_counter() - start)
        times.append(best)
        print(f"T={T:4d}  {best * 1000:8.1f} ms  tokens {res.n_input_tokens} -> {res.n_output_tokens}")

    if len(args.frames) >= 2:
        x, y = np.array(args.frames, dtype=float), np.array(times)
        slope, intercept = np.polyfit(x, y, 1)
        pred = slope * x + intercept
        r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
        print(f"fit: {slope * 1000:.2f} ms/frame + {intercept * 1000:.1f} ms, R^2 = {r2:.4f}")


if __name__ == "__main__":
    main()
