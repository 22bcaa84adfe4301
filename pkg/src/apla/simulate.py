"""Long Monte-Carlo runs of the APLA process and their occupation statistics."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from apla import _kernel
from apla.dynamics import (
    ConfigError,
    SimConfig,
    SystemState,
    draws_per_agent,
    initial_state,
    validate_step_sizes,
)
from apla.game import Game, JointAction, check_positive_utility, payoff_dominant_states, pure_nash_equilibria

log = logging.getLogger(__name__)

BLOCK_STEPS = 1 << 16
TRAJECTORY_POINTS = 2000


class EmptyRunError(ValueError):
    pass


class StepSizeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PureStrategyState:
    """A joint action together with the vertex strategies and realized-payoff aspirations it induces."""

    profile: JointAction
    aspirations: tuple[float, ...]

    @classmethod
    def of(cls, game: Game, profile: Sequence[int]) -> "PureStrategyState":
        prof = game.check_profile(profile)
        return cls(prof, tuple(float(v) for v in game.utilities[prof]))

    def strategies(self, game: Game) -> list[np.ndarray]:
        out = []
        for a, k in zip(self.profile, game.actions):
            e = np.zeros(k)
            e[a] = 1.0
            out.append(e)
        return out


def in_neighborhood(state: SystemState, target: PureStrategyState, delta: float) -> bool:
    if not delta > 0:
        raise ConfigError("delta must be > 0")
    if state.joint_action != target.profile:
        return False
    dx = 0.0
    for agent, a in zip(state.agents, target.profile):
        d = agent.strategy.copy()
        d[a] -= 1.0
        dx += float(d @ d)
    dr = state.aspirations - np.asarray(target.aspirations)
    return bool(np.sqrt(dx) < delta and np.sqrt(dr @ dr) < delta)


@dataclass
class OccupationStats:
    profiles: list[JointAction]
    labels: list[str]
    # per-profile neighborhood visit counts followed by the "elsewhere" count
    counts: np.ndarray
    plays: np.ndarray
    window: tuple[int, int]
    total_steps: int

    @property
    def window_steps(self) -> int:
        return self.window[1] - self.window[0]

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.window_steps

    @property
    def elsewhere(self) -> float:
        return float(self.fractions[-1])

    @property
    def play_frequencies(self) -> np.ndarray:
        return self.plays / self.window_steps

    def occupation(self, profile: Sequence[int]) -> float:
        return float(self.fractions[self.profiles.index(tuple(profile))])

    def occupation_of(self, profiles: Iterable[Sequence[int]]) -> float:
        return float(sum(self.occupation(p) for p in profiles))

    def dominant(self) -> JointAction:
        """Pure state whose neighborhood was occupied the most."""
        return self.profiles[int(np.argmax(self.counts[:-1]))]

    def renormalized(self, profiles: Sequence[Sequence[int]]) -> np.ndarray:
        """Occupation restricted to ``profiles`` and rescaled to sum to one."""
        v = np.array([self.occupation(p) for p in profiles])
        total = v.sum()
        if total == 0:
            raise EmptyRunError("no visits to any of the requested neighborhoods")
        return v / total

    def rows(self) -> list[dict]:
        frac = self.fractions
        freq = self.play_frequencies
        out = [
            {"state_label": lab, "occupation": float(frac[k]), "play_frequency": float(freq[k])}
            for k, lab in enumerate(self.labels)
        ]
        out.append({"state_label": "elsewhere", "occupation": float(frac[-1]), "play_frequency": 0.0})
        return out


@dataclass
class Trajectory:
    t: np.ndarray
    actions: np.ndarray
    # (points, n, max_actions), zero-padded
    x: np.ndarray
    rho: np.ndarray
    n_actions: tuple[int, ...] = field(default=())

    def header(self) -> list[str]:
        n = self.actions.shape[1]
        cols = ["t"] + [f"action_{i + 1}" for i in range(n)]
        cols += [f"x_{i + 1}_{a + 1}" for i in range(n) for a in range(self.n_actions[i])]
        cols += [f"rho_{i + 1}" for i in range(n)]
        return cols

    def write_csv(self, path: str | Path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if meta is not None:
                fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(self.header())
            n = self.actions.shape[1]
            for k in range(len(self.t)):
                row = [int(self.t[k])] + [int(a) for a in self.actions[k]]
                row += [repr(float(self.x[k, i, a])) for i in range(n) for a in range(self.n_actions[i])]
                row += [repr(float(r)) for r in self.rho[k]]
                w.writerow(row)


def _game_arrays(game: Game):
    n_act = np.array(game.actions, dtype=np.int64)
    strides = np.ones(game.n_players, dtype=np.int64)
    for i in range(game.n_players - 2, -1, -1):
        strides[i] = strides[i + 1] * n_act[i + 1]
    U = np.ascontiguousarray(game.flat_utilities())
    return U, strides, n_act


def check_preconditions(game: Game, config: SimConfig, strict: bool = False) -> None:
    ok, violation = check_positive_utility(game)
    if not ok:
        raise ConfigError(f"positive-utility property fails at player/profile {violation}")
    config.check_game(game)
    try:
        chk = validate_step_sizes(game, config.epsilon, config.nu, config.delta)
        msg = None if chk.ok else (
            f"step sizes violate the aspiration/strategy timescale condition: "
            f"{chk.lhs:.4g} > {chk.rhs:.4g}"
        )
    except ConfigError as exc:
        msg = f"step-size condition not checkable: {exc}"
    if msg is not None:
        if strict:
            raise ConfigError(msg)
        warnings.warn(msg, StepSizeWarning, stacklevel=3)


def run(
    game: Game,
    config: SimConfig,
    init: SystemState | None = None,
    record_trajectory: bool = True,
    strict: bool = False,
) -> tuple[OccupationStats, Trajectory | None]:
    """Simulate ``config.horizon`` perturbed steps from ``init`` (default: uniform strategies).

    Deterministic in ``config.seed``.
    """
    if config.horizon == 0:
        raise EmptyRunError("horizon is 0: nothing to measure")
    check_preconditions(game, config, strict)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    state = initial_state(game, config, rng) if init is None else init
    U, strides, n_act = _game_arrays(game)
    actions, x, rho = state.to_arrays(int(n_act.max()))
    n = game.n_players
    horizon = config.horizon
    window_lo = int(config.window_start * horizon)
    occ = np.zeros(game.n_profiles + 1, dtype=np.int64)
    plays = np.zeros(game.n_profiles, dtype=np.int64)

    stride = 0
    if record_trajectory:
        stride = config.stride or max(1, horizon // TRAJECTORY_POINTS)
    points = horizon // stride + 2 if stride else 1
    traj_t = np.zeros(points, dtype=np.int64)
    traj_a = np.zeros((points, n), dtype=np.int64)
    traj_x = np.zeros((points, n, x.shape[1]))
    traj_r = np.zeros((points, n))
    traj_pos = np.zeros(1, dtype=np.int64)
    if stride:
        traj_t[0] = state.time
        traj_a[0], traj_x[0], traj_r[0] = actions, x, rho
        traj_pos[0] = 1

    k = draws_per_agent(config)
    done = 0
    while done < horizon:
        b = min(BLOCK_STEPS, horizon - done)
        draws = rng.random((b, n, k))
        _kernel.run_block(
            draws, done, horizon, x, rho, actions, U, strides, n_act,
            config.epsilon, config.nu, config.lam, config.h, config.noise,
            window_lo, config.delta, occ, plays,
            stride, traj_t, traj_a, traj_x, traj_r, traj_pos,
        )
        done += b

    profiles = list(game.profiles())
    stats = OccupationStats(
        profiles=profiles,
        labels=[game.label(p) for p in profiles],
        counts=occ,
        plays=plays,
        window=(window_lo, horizon),
        total_steps=horizon,
    )
    traj = None
    if stride:
        m = int(traj_pos[0])
        traj = Trajectory(traj_t[:m], traj_a[:m], traj_x[:m], traj_r[:m], tuple(game.actions))
    return stats, traj


def final_state(game: Game, traj: Trajectory) -> SystemState:
    return SystemState.from_arrays(game, traj.actions[-1], traj.x[-1], traj.rho[-1], int(traj.t[-1]))


def replicate_seed(base_seed: int, replicate: int) -> int:
    return int(np.random.SeedSequence([base_seed, replicate]).generate_state(1, np.uint64)[0])


@dataclass
class SweepCell:
    lam: float
    h: float
    replicate: int
    seed: int
    stats: OccupationStats


@dataclass
class SweepResult:
    cells: list[SweepCell]
    target: list[JointAction]
    base: SimConfig

    def summary(self) -> list[dict]:
        """Mean and spread of the target-set occupation per (lambda, h), in grid order."""
        groups: dict[tuple[float, float], list[float]] = {}
        for c in self.cells:
            groups.setdefault((c.lam, c.h), []).append(c.stats.occupation_of(self.target))
        out = []
        for (lam, h), vals in groups.items():
            v = np.array(vals)
            out.append({
                "lambda": lam, "h": h, "replicates": len(v),
                "mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
            })
        return out

    def write_csv(self, path: str | Path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if meta is not None:
                fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["lambda", "h", "replicate", "state_label", "occupation"])
            for c in self.cells:
                for row in c.stats.rows():
                    w.writerow([c.lam, c.h, c.replicate, row["state_label"], repr(row["occupation"])])


def sweep(
    game: Game,
    base: SimConfig,
    lambdas: Sequence[float],
    hs: Sequence[float],
    replicates: int = 10,
    threads: int = 1,
    derive_seeds: bool = True,
    target: Sequence[JointAction] | None = None,
) -> SweepResult:
    """Run every (lambda, h, replicate) combination; replicate r uses the same seed in every cell."""
    if not lambdas or not hs:
        raise ValueError("sweep grid is empty")
    if replicates < 1:
        raise ValueError("need at least one replicate")
    if target is None:
        target = payoff_dominant_states(game, pure_nash_equilibria(game))
    jobs = []
    for lam in lambdas:
        for h in hs:
            for r in range(replicates):
                seed = replicate_seed(base.seed, r) if derive_seeds else base.seed
                jobs.append((float(lam), float(h), r, seed))

    def work(job):
        lam, h, r, seed = job
        cfg = base.replace(lam=lam, h=h, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StepSizeWarning)
            stats, _ = run(game, cfg, record_trajectory=False)
        return SweepCell(lam, h, r, seed, stats)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            cells = list(pool.map(work, jobs))
    else:
        cells = [work(j) for j in jobs]
    return SweepResult(cells, list(target), base)


def write_occupation_csv(stats: OccupationStats, path: str | Path, meta: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.DictWriter(fh, fieldnames=["state_label", "occupation", "play_frequency"])
        w.writeheader()
        for row in stats.rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_occupation_csv(path: str | Path) -> dict[str, float]:
    """``state_label -> occupation`` from a file written by :func:`write_occupation_csv`."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return {row["state_label"]: float(row["occupation"]) for row in csv.DictReader(lines)}
