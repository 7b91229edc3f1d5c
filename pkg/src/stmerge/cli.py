"""Command-line front end.

Exit codes: 0 success, 2 bad input (format or argument errors), 3 internal
invariant violation.  ``verify`` exits 1 when the oracle disagrees.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .calibration import CalibrationConfig, calibrate
from .errors import InputError, InvariantViolation, IoFailure
from .npyio import (
    metadata_from_result,
    read_matrix,
    read_metadata,
    read_tensor,
    write_metadata,
    write_tensor,
)
from .oracle import compare, oracle_merge
from .pipeline import MergeConfig, merge_video
from .synth import SCENARIOS, SynthSpec, synth_video

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3
VERIFY_LIMITS = (4, 8, 8)  # T, H, W


def _add_merge_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-s", type=float, default=0.80, help="spatial threshold (default 0.80)")
    p.add_argument("--tau-t", type=float, default=0.90, help="temporal threshold (default 0.90)")
    p.add_argument("--root-scale", type=int, default=4, choices=(2, 4))
    p.add_argument("--policy", default="top_left", choices=("top_left", "optimal"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stmerge", description="Spatio-temporal video token merging.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("merge", help="merge a (T, H, W, C) token tensor")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="merged features (.npy, shape (N, C))")
    p.add_argument("-m", "--metadata", required=True, help="metadata JSON")
    _add_merge_options(p)
    p.add_argument("--position", default="reassigned", choices=("merged", "survived", "reassigned"))
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--budget", type=float, default=None, help="target retention ratio; calibrates tau_t")
    p.add_argument("--timing", action="store_true", help="record wall time in the metadata")

    p = sub.add_parser("synth", help="write a synthetic token tensor")
    p.add_argument("output")
    p.add_argument("--scenario", default="static", choices=SCENARIOS)
    for dim, default in (("T", 4), ("H", 8), ("W", 8), ("C", 16)):
        p.add_argument(f"-{dim}", type=int, default=default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cut-frames", type=int, nargs="*", default=[])
    p.add_argument("--block-size", type=int, default=2)
    p.add_argument("--block-start", type=int, nargs=2, default=[0, 0])
    p.add_argument("--velocity", type=int, nargs=2, default=[0, 1])
    p.add_argument("--needle-frame", type=int, default=0)
    p.add_argument("--needle-rect", type=int, nargs=4, default=[0, 0, 1, 1], metavar=("Y0", "X0", "H", "W"))
    p.add_argument("--redundancy", type=float, default=0.5)

    p = sub.add_parser("verify", help="check the engine against the brute-force oracle")
    p.add_argument("input")
    _add_merge_options(p)

    p = sub.add_parser("calibrate", help="search thresholds for a token budget")
    p.add_argument("input")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--tau-s", type=float, default=0.80)
    p.add_argument("--mode", default="tau_t", choices=("tau_t", "coupled"))
    p.add_argument("--delta", type=float, default=0.10)
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--root-scale", type=int, default=4, choices=(2, 4))
    p.add_argument("--policy", default="top_left", choices=("top_left", "optimal"))
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("stats", help="summarize a metadata file")
    p.add_argument("metadata")
    p.add_argument("--features", default=None, help="features file to cross-check row count")
    return parser


def cmd_merge(args) -> int:
    grid = read_tensor(args.input)
    tau_s, tau_t = args.tau_s, args.tau_t
    if args.budget is not None:
        cal = calibrate(grid, args.budget, CalibrationConfig(
            tau_s=tau_s, root_scale=args.root_scale, policy=args.policy, threads=args.threads,
        ))
        tau_s, tau_t = cal.tau_s, cal.tau_t
    config = MergeConfig(
        tau_s=tau_s, tau_t=tau_t, root_scale=args.root_scale, policy=args.policy,
        position=args.position, threads=args.threads,
    )
    result = merge_video(grid, config)
    features = result.output_features()
    meta = metadata_from_result(result, timing=args.timing)
    if len(meta.tokens) != features.shape[0]:
        raise InvariantViolation("metadata token count differs from feature rows")
    write_tensor(features, args.output)
    write_metadata(meta, args.metadata)
    print(
        f"{result.n_input_tokens} {result.n_output_tokens} {result.retention_ratio:.6f} "
        f"{result.spatial_comparisons} {result.temporal_comparisons} {result.wall_time_ms:.1f}"
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(
        T=args.T, H=args.H, W=args.W, C=args.C, scenario=args.scenario, seed=args.seed,
        cut_frames=tuple(args.cut_frames), block_size=args.block_size,
        block_start=tuple(args.block_start), velocity=tuple(args.velocity),
        needle_frame=args.needle_frame, needle_rect=tuple(args.needle_rect),
        redundancy=args.redundancy,
    )
    video = synth_video(spec)
    write_tensor(video.grid.data, args.output)
    print(json.dumps({"shape": list(video.grid.shape), "planted_redundancy": video.planted_redundancy}))
    return EXIT_OK


def cmd_verify(args) -> int:
    grid = read_tensor(args.input)
    T, H, W, _ = grid.shape
    if T > VERIFY_LIMITS[0] or H > VERIFY_LIMITS[1] or W > VERIFY_LIMITS[2]:
        print(f"verify supports grids up to T={VERIFY_LIMITS[0]}, H={VERIFY_LIMITS[1]}, W={VERIFY_LIMITS[2]}", file=sys.stderr)
        return EXIT_INPUT
    config = MergeConfig(tau_s=args.tau_s, tau_t=args.tau_t, root_scale=args.root_scale, policy=args.policy)
    result = merge_video(grid, config)
    problems = compare(result, oracle_merge(grid.data, args.tau_s, args.tau_t, args.root_scale, args.policy))
    if problems:
        print("FAIL")
        for line in problems:
            print(f"  {line}")
        return EXIT_MISMATCH
    print("PASS")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    grid = read_tensor(args.input)
    config = CalibrationConfig(
        tau_s=args.tau_s, mode=args.mode, delta=args.delta, tol=args.tol, max_iter=args.max_iter,
        root_scale=args.root_scale, policy=args.policy, threads=args.threads,
    )
    print(json.dumps(calibrate(grid, args.budget, config).to_dict()))
    return EXIT_OK


def cmd_stats(args) -> int:
    meta = read_metadata(args.metadata)
    s = meta.stats
    n_in = meta.grid[0] * meta.grid[1] * meta.grid[2]
    n_out = len(meta.tokens)
    ratio = n_out / n_in
    consistent = (
        s.get("n_input_tokens") == n_in
        and s.get("n_output_tokens") == n_out
        and abs(s.get("retention_ratio", -1.0) - ratio) <= 1e-8
    )
    if args.features is not None:
        consistent = consistent and read_matrix(args.features).shape[0] == n_out
    print(f"{n_in} {n_out} {ratio:.6f} {s.get('spatial_comparisons')} {s.get('temporal_comparisons')} "
          f"{'consistent' if consistent else 'INCONSISTENT'}")
    return EXIT_OK if consistent else EXIT_INVARIANT


COMMANDS = {
    "merge": cmd_merge,
    "synth": cmd_synth,
    "verify": cmd_verify,
    "calibrate": cmd_calibrate,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, IoFailure, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
