import itertools

import numpy as np
import pytest

from pepsim import tensor as tc

_REPORT = []


def random_grid(nrow, ncol, bond, seed, bonds=None):
    """One-layer grid (up, left, down, right) with random interior bonds."""
    rng = np.random.default_rng(seed)
    h = bonds if bonds is not None else {}
    grid = []
    for i in range(nrow):
        row = []
        for j in range(ncol):
            up = 1 if i == 0 else h.get(("v", i - 1, j), bond)
            left = 1 if j == 0 else h.get(("h", i, j - 1), bond)
            down = 1 if i == nrow - 1 else h.get(("v", i, j), bond)
            right = 1 if j == ncol - 1 else h.get(("h", i, j), bond)
            shape = (up, left, down, right)
            row.append(rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape))
        grid.append(row)
    return grid


def brute_force(grid):
    """Sum over every assignment of every bond index (tiny grids only)."""
    nr, nc = len(grid), len(grid[0])
    edges = []
    for i in range(nr):
        for j in range(nc):
            if j + 1 < nc:
                edges.append(("h", i, j, grid[i][j].shape[3]))
            if i + 1 < nr:
                edges.append(("v", i, j, grid[i][j].shape[2]))
    total = 0j
    for assign in itertools.product(*[range(e[3]) for e in edges]):
        idx = {e[:3]: a for e, a in zip(edges, assign)}
        prod = 1 + 0j
        for i in range(nr):
            for j in range(nc):
                u = idx.get(("v", i - 1, j), 0)
                l = idx.get(("h", i, j - 1), 0)
                d = idx.get(("v", i, j), 0)
                r = idx.get(("h", i, j), 0)
                prod *= grid[i][j][u, l, d, r]
        total += prod
    return total


def single_einsum(grid):
    """Whole network in one numpy einsum call."""
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    nr, nc = len(grid), len(grid[0])
    h = {(i, j): next(letters) for i in range(nr) for j in range(nc + 1)}
    v = {(i, j): next(letters) for i in range(nr + 1) for j in range(nc)}
    specs = [v[i, j] + h[i, j] + v[i + 1, j] + h[i, j + 1] for i in range(nr) for j in range(nc)]
    tensors = [grid[i][j] for i in range(nr) for j in range(nc)]
    return complex(np.einsum(",".join(specs) + "->", *tensors, optimize=True))


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture
def report():
    def add(criterion, ok, detail):
        _REPORT.append((criterion, ok, detail))
    return add


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(_REPORT, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(autouse=True)
def _fresh_backend():
    tc.set_backend(tc.Backend())
    yield
