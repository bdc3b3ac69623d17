"""Shared builders for the test suite.

Most integration tests drive a whole World from a plain config dict; the
helpers here keep those dicts short. The criterion summary hook collects
one line per acceptance criterion and prints them after the run, outside
pytest's output capture.
"""

import pytest

from ctsim.scenario import load_config
from ctsim.sim import World

_criterion_lines: list[str] = []


def record_criterion(line: str) -> None:
    _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


def four_nodes():
    return [
        {"name": "alpha", "stake": 0.4, "weights": [0.6, 0.4]},
        {"name": "beta", "stake": 0.3},
        {"name": "gamma", "stake": 0.2},
        {"name": "delta", "stake": 0.1, "weights": [0.4, 0.6]},
    ]


def base_cfg(**overrides):
    cfg = {
        "seed": 7,
        "duration_ms": 10_000,
        "nodes": four_nodes(),
    }
    cfg.update(overrides)
    return cfg


def make_world(cfg_dict) -> World:
    return World(load_config(cfg_dict))


def run_cfg(cfg_dict) -> World:
    world = make_world(cfg_dict)
    world.run()
    return world


@pytest.fixture
def world_10s():
    """One plain honest run, shared by read-only assertions."""
    return run_cfg(base_cfg())
