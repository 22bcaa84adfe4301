import numpy as np
import pytest

from apla.game import Game, stag_hunt

ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]

_acceptance_lines: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    _acceptance_lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    print(_acceptance_lines[-1])


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def sh() -> Game:
    return stag_hunt()


@pytest.fixture
def constant_game() -> Game:
    return Game(np.full((2, 2, 2), 2.0))


@pytest.fixture
def pennies() -> Game:
    # matching pennies shifted to positive payoffs
    u = np.array([[[2, 0], [0, 2]], [[0, 2], [2, 0]]], dtype=float) + 1
    return Game(u)


@pytest.fixture
def single_nash() -> Game:
    common = np.array([[4.0, 2.0], [3.0, 1.0]])
    return Game(np.stack([common, common], axis=-1))


@pytest.fixture
def three_player() -> Game:
    # identical-interest 2x2x2: (0,0,0) pays 5, (1,1,1) pays 4, mixed profiles pay 1
    u = np.ones((2, 2, 2, 3))
    u[0, 0, 0] = 5
    u[1, 1, 1] = 4
    return Game(u)
