"""Threshold search toward a target retention ratio.

Retention is non-decreasing in each threshold, so a bisection over one
threshold suffices.  By default ``tau_s`` stays fixed and ``tau_t`` is searched;
the ``coupled`` mode moves both with ``tau_s = tau_t - delta``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import InvalidConfig, InvalidTarget
from .pipeline import default_threads, retained_count, spatial_stage
from .tensor import TokenGrid

MODES = ("tau_t", "coupled")


@dataclass
class CalibrationConfig:
    tau_s: float = 0.80
    mode: str = "tau_t"
    delta: float = 0.10
    tol: float = 0.02
    max_iter: int = 20
    root_scale: int = 4
    policy: str = "top_left"
    threads: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_iter < 0 or self.tol < 0:
            raise InvalidConfig("max_iter and tol must be non-negative")


@dataclass
class CalibrationResult:
    tau_s: float
    tau_t: float
    achieved_ratio: float
    target: float
    iterations: int  # pipeline evaluations
    met: bool  # achieved <= target + tol
    converged: bool  # |achieved - target| <= tol
    exhausted: bool  # search ended without converging

    def to_dict(self) -> dict:
        return asdict(self)


def calibrate(grid: TokenGrid, target_ratio: float, config: CalibrationConfig | None = None) -> CalibrationResult:
    """Bisect the searched threshold on [0, 1].

    Both endpoints are evaluated first; if even the most aggressive setting
    overshoots, or the least aggressive one already fits the budget, no
    bisection is needed.  Otherwise the interval is halved until the ratio is
    within ``tol`` of the target or ``max_iter`` steps have run.  Among all
    evaluations the one closest to the target without exceeding
    ``target + tol`` is returned (the closest overall if none qualifies).
    """
    config = config or CalibrationConfig()
    if not 0.0 < target_ratio <= 1.0:
        raise InvalidTarget(f"target ratio must lie in (0, 1], got {target_ratio}")
    threads = config.threads or default_threads()
    n_input = grid.n_tokens
    cache = {}

    def thresholds(x: float) -> tuple[float, float]:
        if config.mode == "tau_t":
            return config.tau_s, x
        return min(max(x - config.delta, 0.0), 1.0), x

    def spatial_for(tau_s):
        if tau_s not in cache:
            cache.clear()
            cache[tau_s] = spatial_stage(grid, tau_s, config.root_scale, threads)
        return cache[tau_s]

    evaluations: list[tuple[float, float, float]] = []

    def evaluate(x: float) -> float:
        tau_s, tau_t = thresholds(x)
        ratio = retained_count(spatial_for(tau_s), tau_t, config.policy) / n_input
        evaluations.append((tau_s, tau_t, ratio))
        return ratio

    def close(r: float) -> bool:
        return abs(r - target_ratio) <= config.tol

    lo, hi = 0.0, 1.0
    r_lo = evaluate(lo)
    r_hi = evaluate(hi)
    converged = close(r_lo) or close(r_hi)
    if not converged and r_lo < target_ratio < r_hi:
        for _ in range(config.max_iter):
            mid = 0.5 * (lo + hi)
            r = evaluate(mid)
            if close(r):
                converged = True
                break
            if r > target_ratio:
                hi = mid
            else:
                lo = mid

    feasible = [e for e in evaluations if e[2] <= target_ratio + config.tol]
    pool = feasible or evaluations
    tau_s, tau_t, ratio = min(pool, key=lambda e: (abs(e[2] - target_ratio), -e[1]))
    return CalibrationResult(
        tau_s=tau_s, tau_t=tau_t, achieved_ratio=ratio, target=target_ratio,
        iterations=len(evaluations), met=ratio <= target_ratio + config.tol,
        converged=close(ratio), exhausted=not close(ratio),
    )
