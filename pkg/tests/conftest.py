import numpy as np
import pytest

from kbpomdp.gridworld import load_map
from kbpomdp.knowledge import compute_bias, derive_knowledge_from_map

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" -- {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid():
    return load_map()


@pytest.fixture(scope="session")
def kb(grid):
    return derive_knowledge_from_map(grid)


@pytest.fixture(scope="session")
def bias(kb):
    return compute_bias(kb)


def random_simplex(rng, n):
    return rng.dirichlet(np.ones(n))


def random_stochastic(rng, rows, cols=None):
    cols = rows if cols is None else cols
    return rng.dirichlet(np.ones(cols), size=rows)
