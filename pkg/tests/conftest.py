import sys

import numpy as np
import pytest

from stmerge import TokenGrid


def clustered_grid(rng, T, H, W, C, n_base=3):
    """Random grid whose cells mix a few shared directions with noise, so that
    similarities spread over the whole [-1, 1] range."""
    base = rng.standard_normal((n_base, C))
    data = base[rng.integers(0, n_base, (T, H, W))]
    data = data + rng.uniform(0.0, 1.0) * rng.standard_normal((T, H, W, C))
    return TokenGrid(data.astype(np.float32))


def random_instance(rng, max_t=4, max_hw=8, max_c=16):
    T = int(rng.integers(1, max_t + 1))
    H = int(rng.integers(1, max_hw + 1))
    W = int(rng.integers(1, max_hw + 1))
    C = int(rng.integers(1, max_c + 1))
    return clustered_grid(rng, T, H, W, C)


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def leaf_mean(grid, regions):
    """Plain mean of the raw leaf features under a list of (t, y0, x0, h, w)."""
    cells = [grid.data[t, y0 : y0 + h, x0 : x0 + w].reshape(-1, grid.C) for t, y0, x0, h, w in regions]
    return np.concatenate(cells).astype(np.float64).mean(axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in module.CHECKS:
        if name in module.RESULTS:
            terminalreporter.write_line(module.format_line(name, *module.RESULTS[name]))
