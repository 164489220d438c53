import functools

import pytest

from macgame.config import TABLE2_GAMES, load_config, table2_preset
from macgame.solver import solve


@functools.lru_cache(maxsize=None)
def solved(game: str, mode: str):
    """Solve one reference configuration once per test session."""
    cfg = load_config(table2_preset(game, mode))
    spec = cfg.game()
    return spec, solve(spec, eps=cfg.solver["eps"], max_sweeps=cfg.solver["max_sweeps"])


@pytest.fixture(scope="session")
def reference_solution():
    return solved


@pytest.fixture(params=[(g, m) for m in ("saturated", "unsaturated") for g in TABLE2_GAMES], ids=lambda p: f"{p[1]}-{p[0]}")
def reference_case(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
