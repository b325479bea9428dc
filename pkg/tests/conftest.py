from __future__ import annotations

import sys
from collections import deque
from pathlib import Path

import pytest
from hypothesis import strategies as st

from bethe.lattice import BetheLattice

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def vertices(kappa: int, max_level: int = 6):
    """Hypothesis strategy for valid vertices."""

    @st.composite
    def strat(draw):
        level = draw(st.integers(0, max_level))
        if level == 0:
            return ()
        first = draw(st.integers(0, kappa))
        rest = draw(st.lists(st.integers(0, kappa - 1), min_size=level - 1, max_size=level - 1))
        return (first, *rest)

    return strat()


def bfs_distances(lat: BetheLattice, source, radius: int) -> dict:
    """Brute-force graph distances from ``source`` within ``ball(radius)``."""
    ball = set(lat.ball(radius))
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for u in lat.neighbors(v):
            if u in ball and u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


@pytest.fixture(params=[1, 2, 3], ids=lambda k: f"kappa{k}")
def lattice(request):
    return BetheLattice(request.param)
