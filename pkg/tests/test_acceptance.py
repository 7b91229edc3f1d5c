"""Acceptance suite.

Each check returns ``(ok, detail)``; the pytest wrappers assert ``ok`` and the
results are printed as one PASS/FAIL line per criterion at the end of the
session (or when this file is run directly with ``python3``).
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import clustered_grid, leaf_mean, random_instance, rel_err  # noqa: E402
from stmerge import MergeConfig, TokenGrid, merge_video  # noqa: E402
from stmerge.calibration import calibrate  # noqa: E402
from stmerge.errors import BadMagic, FormatError, NonFinitePayload, TruncatedPayload, UnsupportedDtype, WrongRank  # noqa: E402
from stmerge.npyio import decode_npy, encode_npy, read_tensor, write_tensor  # noqa: E402
from stmerge.oracle import compare, oracle_merge  # noqa: E402
from stmerge.pipeline import retained_count, spatial_stage  # noqa: E402
from stmerge.quadtree import spatial_cost_bound  # noqa: E402
from stmerge.synth import SynthSpec, orthogonal_unit, synth_video  # noqa: E402

RESULTS: dict[str, tuple[bool, str]] = {}
SEED = 1234


def record(name, ok, detail):
    RESULTS[name] = (bool(ok), detail)
    return bool(ok), detail


def orthogonal_grid(T, H, W):
    eye = np.eye(H * W, dtype=np.float32).reshape(1, H, W, H * W)
    return TokenGrid(np.repeat(eye, T, axis=0))


# 1 -----------------------------------------------------------------------

def check_oracle_equivalence(n=1000):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    bad = []
    for i in range(n):
        g = random_instance(rng, max_t=4, max_hw=8, max_c=16)
        tau_s, tau_t = (float(x) for x in rng.uniform(0, 1, 2))
        root = int(rng.choice([2, 4]))
        policy = str(rng.choice(["top_left", "optimal"]))
        res = merge_video(g, MergeConfig(tau_s, tau_t, root, policy, threads=1))
        if compare(res, oracle_merge(g.data, tau_s, tau_t, root, policy), rtol=1e-5):
            bad.append(i)
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 60
    return record("1", ok, f"oracle equivalence: {n - len(bad)}/{n} instances match, {elapsed:.1f} s (limit 60 s)")


# 2 -----------------------------------------------------------------------

def _bound_violations(g, tau_s, tau_t, root):
    res = merge_video(g, MergeConfig(tau_s, tau_t, root, threads=1))
    T, H, W, _ = g.shape
    per_frame = res.spatial.comparisons
    issues = []
    if per_frame.max() > spatial_cost_bound(H, W):
        issues.append(f"{H}x{W} root {root}: spatial {int(per_frame.max())} > {spatial_cost_bound(H, W)}")
    if res.temporal_comparisons > (T - 1) * H * W:
        issues.append(f"{T}x{H}x{W}: temporal {res.temporal_comparisons} > {(T - 1) * H * W}")
    return issues


def check_complexity_bound():
    rng = np.random.default_rng(SEED + 2)
    issues, n = [], 0
    worst = [(2, 8, 8, 2), (2, 16, 16, 2), (2, 16, 16, 4), (2, 14, 14, 2), (2, 14, 14, 4), (3, 4, 4, 2)]
    for T, H, W, root in worst:
        issues += _bound_violations(orthogonal_grid(T, H, W), 1.0, 1.0, root)
        n += 1
    while n < 20:
        H, W = (int(x) for x in rng.integers(1, 9, 2))
        issues += _bound_violations(orthogonal_grid(2, H, W), 1.0, 1.0, 4)
        n += 1
    while n < 200:
        g = random_instance(rng)
        tau_s, tau_t = (float(x) for x in rng.uniform(0, 1, 2))
        issues += _bound_violations(g, tau_s, tau_t, 4)
        n += 1
    return record("2", not issues, f"comparison bounds on {n} inputs (20 worst-case orthogonal, random ones at root_scale 4): "
                  f"{len(issues)} violations {issues[:2]}")


def check_complexity_bound_ragged():
    """Worst-case orthogonal grids whose ceil-halved pyramids are ragged."""
    cases = [(1, 5, 2), (3, 5, 2), (8, 1, 2), (1, 8, 2), (13, 13, 2), (1, 9, 4)]
    issues = []
    for H, W, root in cases:
        issues += _bound_violations(orthogonal_grid(2, H, W), 1.0, 1.0, root)
    return record("2-ragged", not issues, f"ragged worst-case grids {[f'{h}x{w}/r{r}' for h, w, r in cases]}: "
                  f"{len(issues)} violations {issues}")


# 3, 4 --------------------------------------------------------------------

def _test_inputs(n=300):
    rng = np.random.default_rng(SEED + 3)
    for _ in range(n):
        T, H, W = int(rng.integers(1, 9)), int(rng.integers(1, 17)), int(rng.integers(1, 17))
        g = clustered_grid(rng, T, H, W, int(rng.integers(1, 17)))
        tau_s, tau_t = (float(x) for x in rng.uniform(0, 1, 2))
        cfg = MergeConfig(tau_s, tau_t, int(rng.choice([2, 4])), str(rng.choice(["top_left", "optimal"])), threads=1)
        yield g, merge_video(g, cfg)


def check_mean_preservation():
    worst, n_tokens = 0.0, 0
    for g, res in _test_inputs():
        for tok in res.output.tokens:
            worst = max(worst, rel_err(tok.feature, leaf_mean(g, tok.regions)))
            n_tokens += 1
    return record("3", worst <= 1e-5, f"mean preservation: max relative error {worst:.2e} over {n_tokens} tokens (limit 1e-5)")


def check_coverage():
    bad, n = 0, 0
    for g, res in _test_inputs():
        occ = np.zeros(g.shape[:3], dtype=np.int64)
        for tok in res.output.tokens:
            for t, y0, x0, h, w in tok.regions:
                occ[t, y0 : y0 + h, x0 : x0 + w] += 1
        bad += int(not (occ == 1).all())
        n += 1
    return record("4", bad == 0, f"coverage: {n - bad}/{n} outputs tile T x H x W exactly once")


# 5 -----------------------------------------------------------------------

def check_static_collapse():
    wrong = []
    for T in range(1, 65):
        g = TokenGrid(np.ones((T, 16, 16, 4), dtype=np.float32))
        res = merge_video(g, MergeConfig(threads=1))
        if res.n_output_tokens != 16 or not math.isclose(res.retention_ratio, 16 / (T * 256)):
            wrong.append(T)
    return record("5", not wrong, f"static collapse: 16 tokens for {64 - len(wrong)}/64 values of T, failing T={wrong[:5]}")


# 6 -----------------------------------------------------------------------

def _cos(a, b):
    return float(a @ b / np.linalg.norm(a) / np.linalg.norm(b))


def _needle_preserved(res, frame, rect, background, needle):
    """Every needle cell lies in a token that is not the dominant background
    tracklet and that points closer to the needle than to the background."""
    tokens = res.output.tokens
    largest = int(np.argmax(tokens.area))
    _, H, W, _ = res.grid_shape
    owner = np.full((H, W), -1)
    for k in range(len(tokens)):
        for t, y0, x0, h, w in tokens.regions(k):
            if t == frame:
                owner[y0 : y0 + h, x0 : x0 + w] = k
    y0, x0, h, w = rect
    for k in set(owner[y0 : y0 + h, x0 : x0 + w].ravel().tolist()):
        f = tokens.features[k]
        if k == largest or _cos(f, needle) <= _cos(f, background):
            return False
    return True


def _needle_trials(dominant, n=100):
    rng = np.random.default_rng(SEED + 6 + int(dominant))
    T, H, W, C = 6, 16, 16, 8
    failures = 0
    for i in range(n):
        frame = int(rng.integers(0, T))
        h, w = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        rect = (int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - w + 1)), h, w)
        spec = SynthSpec(T, H, W, C, "needle", seed=i, needle_frame=frame, needle_rect=rect)
        background = synth_video(spec).grid.data[0, 0, 0].astype(np.float64)
        if dominant:
            s = rng.uniform(-0.9, -0.1)
            needle = (s * background + math.sqrt(1 - s * s) * orthogonal_unit(rng, background)) * 4 * H * W
        else:
            needle = orthogonal_unit(rng, background)
        spec.needle_feature = needle
        g = synth_video(spec).grid
        lo = max(_cos(background, needle), 0.0)
        tau_s, tau_t = (float(x) for x in rng.uniform(lo, 1.0, 2))
        res = merge_video(g, MergeConfig(tau_s, tau_t, threads=1))
        failures += not _needle_preserved(res, frame, rect, background, needle)
    return failures


def check_needle_unit():
    fails = _needle_trials(dominant=False)
    return record("6-unit", fails == 0, f"needle preservation, unit-norm needle orthogonal to background: "
                  f"{100 - fails}/100 placements preserved")


def check_needle_dominant():
    fails = _needle_trials(dominant=True)
    return record("6-dominant", fails == 0, f"needle preservation, needle dominating every pooled mixture: "
                  f"{100 - fails}/100 placements preserved")


# 7 -----------------------------------------------------------------------

def check_monotonicity():
    rng = np.random.default_rng(SEED + 7)
    taus = np.linspace(0.0, 1.0, 10)
    bad_s, bad_t = 0, 0
    for _ in range(20):
        g = random_instance(rng)
        grid = np.empty((10, 10), dtype=np.int64)
        for i, ts in enumerate(taus):
            sp = spatial_stage(g, float(ts), 4, 1)
            for j, tt in enumerate(taus):
                grid[i, j] = retained_count(sp, float(tt))
        bad_s += int((np.diff(grid, axis=0) < 0).any())
        bad_t += int((np.diff(grid, axis=1) < 0).any())
    ok = bad_s == 0 and bad_t == 0
    return record("7", ok, f"monotonicity on 10x10 lattice: tau_t non-decreasing on {20 - bad_t}/20 inputs, "
                  f"tau_s non-decreasing on {20 - bad_s}/20 inputs")


# 8 -----------------------------------------------------------------------

def check_calibration():
    problems, runs = [], 0
    for seed in range(4):
        for redundancy in (0.5, 0.8):
            g = synth_video(SynthSpec(8, 14, 14, 32, "mixed", seed, redundancy=redundancy)).grid
            for budget in (0.5, 0.3):
                res = calibrate(g, budget)
                runs += 1
                ok = (abs(res.achieved_ratio - budget) <= 0.02 or res.achieved_ratio < budget) and res.iterations <= 22
                if not ok:
                    problems.append((seed, redundancy, budget, round(res.achieved_ratio, 4), res.iterations))
    return record("8", not problems, f"calibration: {runs - len(problems)}/{runs} budget runs within tolerance "
                  f"and <= 22 evaluations {problems[:3]}")


# 9 -----------------------------------------------------------------------

def _cli(*args):
    return subprocess.run([sys.executable, "-m", "stmerge.cli", *args], capture_output=True, text=True, check=True)


def check_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        _cli("synth", str(tmp / "in.npy"), "--scenario", "mixed", "-T", "16", "-H", "14", "-W", "14", "-C", "32", "--seed", "9")
        blobs = []
        for threads in (1, 2, 8):
            out, meta = tmp / f"f{threads}.npy", tmp / f"m{threads}.json"
            _cli("merge", str(tmp / "in.npy"), "-o", str(out), "-m", str(meta), "--threads", str(threads))
            blobs.append((out.read_bytes(), meta.read_bytes()))
    same = all(b == blobs[0] for b in blobs)
    return record("9", same, f"determinism: feature and metadata files {'identical' if same else 'DIFFER'} across 1, 2, 8 threads")


# 10 ----------------------------------------------------------------------

def _header(text):
    body = text.encode("latin1")
    body += b" " * ((-(10 + len(body) + 1)) % 64) + b"\n"
    return b"\x93NUMPY\x01\x00" + len(body).to_bytes(2, "little") + body


def check_format_roundtrip():
    rng = np.random.default_rng(SEED + 10)
    identical = 0
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "x.npy"
        for _ in range(100):
            shape = tuple(int(d) for d in rng.integers(1, 9, 4))
            arr = (rng.standard_normal(shape) * 10.0 ** rng.integers(-20, 20)).astype(np.float32)
            write_tensor(arr, path)
            back = read_tensor(path).data
            identical += back.tobytes() == arr.tobytes() and back.shape == arr.shape
    nan = np.ones((1, 1, 1, 2), dtype=np.float32)
    nan[0, 0, 0, 0] = np.nan
    good = encode_npy(np.ones((1, 2, 2, 2), dtype=np.float32))
    malformed = [
        (b"GIF89a" + good[6:], BadMagic),
        (_header("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1, 1), }") + b"\0" * 8, UnsupportedDtype),
        (_header("{'descr': '>f4', 'fortran_order': False, 'shape': (1, 1, 1, 1), }") + b"\0" * 4, UnsupportedDtype),
        (_header("{'descr': '<f4', 'fortran_order': True, 'shape': (1, 1, 1, 1), }") + b"\0" * 4, UnsupportedDtype),
        (encode_npy(np.ones((2, 2), dtype=np.float32)), WrongRank),
        (encode_npy(nan), NonFinitePayload),
        (good[:-3], TruncatedPayload),
        (_header("{'descr': '<f4'"), FormatError),
    ]
    rejected = 0
    for raw, cls in malformed:
        try:
            decode_npy(raw, rank=4)
        except cls:
            rejected += 1
        except FormatError:
            pass
    ok = identical == 100 and rejected == len(malformed)
    return record("10", ok, f"format: {identical}/100 bit-identical round trips, "
                  f"{rejected}/{len(malformed)} malformed files rejected with the expected error class")


# 11 ----------------------------------------------------------------------

def _timed_merge(g, repeats=3):
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        merge_video(g, MergeConfig())
        best = min(best, time.perf_counter() - start)
    return best


def check_throughput():
    rng = np.random.default_rng(SEED + 11)
    full = rng.standard_normal((128, 14, 14, 896), dtype=np.float32)
    Ts = [16, 32, 64, 128]
    times = [_timed_merge(TokenGrid(full[:T])) for T in Ts]
    slope, intercept = np.polyfit(Ts, times, 1)
    pred = slope * np.array(Ts) + intercept
    r2 = 1 - np.sum((np.array(times) - pred) ** 2) / np.sum((np.array(times) - np.mean(times)) ** 2)
    ok = times[-1] < 2.0 and r2 >= 0.95
    return record("11", ok, f"throughput: 128x14x14x896 in {times[-1]:.2f} s (limit 2 s) on {os.cpu_count()} core(s), "
                  f"runtime vs T R^2 = {r2:.4f} (limit 0.95)")


CHECKS = {
    "1": check_oracle_equivalence,
    "2": check_complexity_bound,
    "2-ragged": check_complexity_bound_ragged,
    "3": check_mean_preservation,
    "4": check_coverage,
    "5": check_static_collapse,
    "6-unit": check_needle_unit,
    "6-dominant": check_needle_dominant,
    "7": check_monotonicity,
    "8": check_calibration,
    "9": check_determinism,
    "10": check_format_roundtrip,
    "11": check_throughput,
}


@pytest.mark.slow
@pytest.mark.parametrize("name", list(CHECKS))
def test_criterion(name):
    ok, detail = CHECKS[name]()
    assert ok, detail


def format_line(name, ok, detail):
    return f"criterion {name:<10} {'PASS' if ok else 'FAIL'}  {detail}"


if __name__ == "__main__":
    for name, fn in CHECKS.items():
        ok, detail = fn()
        print(format_line(name, ok, detail), flush=True)
