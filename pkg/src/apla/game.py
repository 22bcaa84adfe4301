"""Finite strategic-form games: payoff storage, Nash enumeration, coordination checks.

Games are stored as a dense utility tensor of shape ``(|A_1|, ..., |A_n|, n)``.
All enumerations are exhaustive scans over the joint action space, so their
cost grows as ``prod(|A_i|)``; that is fine for the desk-scale games used here
and hopeless for large ``n``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

JointAction = tuple[int, ...]


class InvalidProfileError(ValueError):
    """A joint action does not index into the game's action sets."""


class GameFormatError(ValueError):
    """A game file could not be parsed into a valid game."""


@dataclass(frozen=True, eq=False)
class Game:
    utilities: np.ndarray
    action_labels: tuple[tuple[str, ...], ...] | None = None
    name: str = ""

    def __post_init__(self) -> None:
        u = np.array(self.utilities, dtype=float)
        if u.ndim < 3:
            raise ValueError("utility tensor needs at least 2 players: shape (|A_1|, ..., |A_n|, n)")
        n = u.ndim - 1
        if u.shape[-1] != n:
            raise ValueError(f"last axis must hold {n} payoffs, got {u.shape[-1]}")
        if any(k < 2 for k in u.shape[:-1]):
            raise ValueError(f"every player needs at least 2 actions, got {u.shape[:-1]}")
        if not np.all(np.isfinite(u)):
            raise ValueError("utility tensor contains non-finite entries")
        u.setflags(write=False)
        object.__setattr__(self, "utilities", u)
        if self.action_labels is not None:
            labels = tuple(tuple(str(a) for a in row) for row in self.action_labels)
            if len(labels) != n or any(len(row) != k for row, k in zip(labels, u.shape[:-1])):
                raise ValueError("action_labels must give one label per action of every player")
            object.__setattr__(self, "action_labels", labels)

    @property
    def n_players(self) -> int:
        return self.utilities.ndim - 1

    @property
    def actions(self) -> tuple[int, ...]:
        return self.utilities.shape[:-1]

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.actions))

    def profiles(self):
        """All joint actions in lexicographic order."""
        return itertools.product(*(range(k) for k in self.actions))

    def flat_utilities(self) -> np.ndarray:
        """Utilities as ``(n_profiles, n)`` in lexicographic (C) profile order."""
        return self.utilities.reshape(self.n_profiles, self.n_players)

    def profile_index(self, profile: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(profile), self.actions))

    def label(self, profile: Sequence[int]) -> str:
        if self.action_labels is None:
            parts = [str(a) for a in profile]
        else:
            parts = [self.action_labels[i][a] for i, a in enumerate(profile)]
        return "(" + ",".join(parts) + ")"

    @property
    def utility_range(self) -> tuple[float, float]:
        return float(self.utilities.min()), float(self.utilities.max())

    def check_profile(self, profile: Sequence[int]) -> JointAction:
        prof = tuple(int(a) for a in profile)
        if len(prof) != self.n_players:
            raise InvalidProfileError(f"profile {prof} has {len(prof)} entries, game has {self.n_players} players")
        for i, (a, k) in enumerate(zip(prof, self.actions)):
            if not 0 <= a < k:
                raise InvalidProfileError(f"action {a} out of range for player {i} with {k} actions")
        return prof


def utility(game: Game, profile: Sequence[int]) -> np.ndarray:
    prof = game.check_profile(profile)
    return game.utilities[prof].copy()


def best_response(game: Game, player: int, profile: Sequence[int], tol: float = 0.0) -> list[int]:
    """All actions of ``player`` maximizing its payoff against ``profile``'s other entries.

    Ties (within ``tol``) are all returned, so the result is never empty.
    """
    prof = game.check_profile(profile)
    if not 0 <= player < game.n_players:
        raise InvalidProfileError(f"no player {player}")
    idx = list(prof)
    idx[player] = slice(None)
    payoffs = game.utilities[tuple(idx) + (player,)]
    best = payoffs.max()
    return [int(a) for a in np.flatnonzero(payoffs >= best - tol)]


def is_nash(game: Game, profile: Sequence[int], tol: float = 0.0) -> bool:
    prof = game.check_profile(profile)
    return all(prof[i] in best_response(game, i, prof, tol) for i in range(game.n_players))


def pure_nash_equilibria(game: Game, tol: float = 0.0) -> list[JointAction]:
    """Every pure Nash equilibrium, in lexicographic order."""
    return [p for p in game.profiles() if is_nash(game, p, tol)]


def check_positive_utility(game: Game) -> tuple[bool, tuple[int, JointAction] | None]:
    """Whether every payoff is strictly positive; otherwise the first ``(player, profile)`` that is not."""
    for p in game.profiles():
        for i, v in enumerate(game.utilities[p]):
            if not v > 0:
                return False, (i, p)
    return True, None


@dataclass
class GameClassReport:
    is_positive_utility: bool
    is_coordination: bool
    nash_set: list[JointAction]
    payoff_dominant_set: list[JointAction]
    # non-Nash profile -> (player, best-response action) satisfying condition (a)
    improvement_witnesses: dict[JointAction, tuple[int, int]] = field(default_factory=dict)
    # Nash profile -> (player, action) that strictly hurts every player
    punishment_witnesses: dict[JointAction, tuple[int, int]] = field(default_factory=dict)
    violations: dict[str, object] = field(default_factory=dict)
    # condition (a) with the deviation allowed to equal the current action
    is_coordination_lenient: bool = False

    def to_dict(self, game: Game | None = None) -> dict:
        lab = game.label if game is not None else (lambda p: "(" + ",".join(map(str, p)) + ")")

        def viol(v):
            if v is None:
                return None
            if isinstance(v, tuple) and len(v) == 2 and isinstance(v[1], tuple):
                return {"player": v[0], "profile": lab(v[1])}
            return {"profile": lab(v)}

        return {
            "positive_utility": self.is_positive_utility,
            "coordination": self.is_coordination,
            "coordination_lenient": self.is_coordination_lenient,
            "nash": [lab(p) for p in self.nash_set],
            "payoff_dominant": [lab(p) for p in self.payoff_dominant_set],
            "improvement_witnesses": {
                lab(p): {"player": i, "action": a} for p, (i, a) in self.improvement_witnesses.items()
            },
            "punishment_witnesses": {
                lab(p): {"player": i, "action": a} for p, (i, a) in self.punishment_witnesses.items()
            },
            "violations": {k: viol(v) for k, v in self.violations.items()},
        }


def _improvement_witness(game, profile, tol, require_change):
    u = game.utilities
    for i in range(game.n_players):
        for a in best_response(game, i, profile, tol):
            if require_change and a == profile[i]:
                continue
            dev = profile[:i] + (a,) + profile[i + 1:]
            if all(u[dev][j] >= u[profile][j] - tol for j in range(game.n_players) if j != i):
                return i, a
    return None


def _punishment_witness(game, profile, tol):
    u = game.utilities
    for i in range(game.n_players):
        for a in range(game.actions[i]):
            if a == profile[i]:
                continue
            dev = profile[:i] + (a,) + profile[i + 1:]
            if np.all(u[dev] < u[profile] - tol):
                return i, a
    return None


def payoff_dominant_states(game: Game, nash: list[JointAction] | None = None, tol: float = 0.0) -> list[JointAction]:
    """Nash profiles that strictly beat, for every player, all the Nash profiles left out.

    Sets with this property are nested, so the smallest one is returned. When
    only the whole Nash set qualifies, the whole set comes back.
    """
    if nash is None:
        nash = pure_nash_equilibria(game, tol)
    u = game.utilities

    def beats(a, b):
        return bool(np.all(u[a] > u[b] + tol))

    best = list(nash)
    for seed in nash:
        # smallest qualifying set containing `seed`: pull in anything some member fails to beat
        members = {seed}
        grew = True
        while grew:
            grew = False
            for r in nash:
                if r not in members and any(not beats(m, r) for m in members):
                    members.add(r)
                    grew = True
        if len(members) < len(best):
            best = list(members)
    return sorted(best)


def check_coordination(game: Game, tol: float = 0.0) -> GameClassReport:
    positive, pos_violation = check_positive_utility(game)
    nash = pure_nash_equilibria(game, tol)
    nash_set = set(nash)
    report = GameClassReport(
        is_positive_utility=positive,
        is_coordination=False,
        nash_set=nash,
        payoff_dominant_set=payoff_dominant_states(game, nash, tol),
    )
    if not positive:
        report.violations["positive_utility"] = pos_violation

    ok_a, ok_a_lenient = True, True
    for p in game.profiles():
        if p in nash_set:
            continue
        w = _improvement_witness(game, p, tol, require_change=True)
        if w is not None:
            report.improvement_witnesses[p] = w
        else:
            if ok_a:
                report.violations["condition_a"] = p
            ok_a = False
            if _improvement_witness(game, p, tol, require_change=False) is None:
                ok_a_lenient = False

    ok_b = True
    for p in nash:
        w = _punishment_witness(game, p, tol)
        if w is not None:
            report.punishment_witnesses[p] = w
        else:
            report.violations.setdefault("condition_b", p)
            ok_b = False

    report.is_coordination = ok_a and ok_b and bool(nash)
    report.is_coordination_lenient = ok_a_lenient and ok_b and bool(nash)
    return report


def witness_path(game: Game, report: GameClassReport, start: Sequence[int]) -> list[JointAction]:
    """Follow improvement witnesses from ``start`` until a Nash profile (or a repeat) is hit."""
    path = [game.check_profile(start)]
    seen = {path[0]}
    nash = set(report.nash_set)
    while path[-1] not in nash:
        w = report.improvement_witnesses.get(path[-1])
        if w is None:
            break
        i, a = w
        cur = path[-1]
        nxt = cur[:i] + (a,) + cur[i + 1:]
        path.append(nxt)
        if nxt in seen:
            break
        seen.add(nxt)
    return path


# -- file format --------------------------------------------------------------

def game_from_dict(data: dict) -> Game:
    try:
        n = int(data["players"])
        actions = [int(k) for k in data["actions"]]
        raw = data["utilities"]
    except KeyError as exc:
        raise GameFormatError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise GameFormatError(f"bad 'players'/'actions' field: {exc}") from None
    if len(actions) != n:
        raise GameFormatError(f"'actions' has {len(actions)} entries but 'players' is {n}")
    try:
        u = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise GameFormatError(f"'utilities' is not a regular numeric array: {exc}") from None
    expected = tuple(actions) + (n,)
    if u.shape != expected:
        raise GameFormatError(f"'utilities' has shape {u.shape}, expected {expected}")
    labels = data.get("action_labels")
    try:
        return Game(u, action_labels=labels, name=str(data.get("name", "")))
    except ValueError as exc:
        raise GameFormatError(str(exc)) from None


def game_to_dict(game: Game) -> dict:
    out = {
        "players": game.n_players,
        "actions": list(game.actions),
        "utilities": game.utilities.tolist(),
    }
    if game.name:
        out["name"] = game.name
    if game.action_labels is not None:
        out["action_labels"] = [list(row) for row in game.action_labels]
    return out


def load_game(path: str | Path) -> Game:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise GameFormatError(f"{path}: top level must be a JSON object")
    try:
        return game_from_dict(data)
    except GameFormatError as exc:
        raise GameFormatError(f"{path}: {exc}") from None


def save_game(game: Game, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=2) + "\n")


def stag_hunt() -> Game:
    """The 2x2 Stag-Hunt: (A,A) payoff-dominant, (B,B) risk-dominant."""
    u = [[[5, 5], [1, 3]],
         [[3, 1], [4, 4]]]
    return Game(np.array(u, dtype=float), action_labels=(("A", "B"), ("A", "B")), name="stag_hunt")
