"""Finite Markov chain over pure Nash equilibrium states, estimated by simulation.

Each entry ``P[s, s']`` is the fraction of episodes that, started from the pure
Nash state ``s`` with one step in which at least two agents tremble (the
"kick"), first come to rest in the delta-neighborhood of ``s'`` when the
dynamics then run with at most one agent trembling per step. The stationary
vector of that chain is what long-run occupation should approach as the
tremble rate goes to zero.
"""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from apla import _kernel
from apla.dynamics import (
    AgentState,
    ConfigError,
    SimConfig,
    SystemState,
    _pick_action,
    aspiration_update,
    pure_state,
    strategy_update,
    validate_step_sizes,
)
from apla.game import Game, pure_nash_equilibria
from apla.simulate import OccupationStats, PureStrategyState, _game_arrays

log = logging.getLogger(__name__)

# Per-agent tremble probability used to shape the distribution of kick subsets.
KICK_LAMBDA = 0.1


class ClassificationError(ValueError):
    """The game has no pure Nash equilibrium to build a chain over."""


class EstimationError(RuntimeError):
    def __init__(self, message: str, rows: list[int] | None = None, escapes: np.ndarray | None = None):
        super().__init__(message)
        self.rows = rows or []
        self.escapes = escapes


class SolverError(RuntimeError):
    pass


def kick_subsets(n: int, lam: float = KICK_LAMBDA) -> tuple[np.ndarray, np.ndarray]:
    """Subsets of at least two agents, with i.i.d. Bernoulli(lam) weights conditioned on size >= 2.

    Returns ``(masks, probs)`` where ``masks`` is ``(k, n)`` boolean.
    """
    if n < 2:
        raise ClassificationError("a kick needs at least two agents")
    if not 0 < lam <= 1:
        raise ConfigError("kick lambda must lie in (0, 1]")
    masks, weights = [], []
    for bits in itertools.product((False, True), repeat=n):
        k = sum(bits)
        if k >= 2:
            masks.append(bits)
            weights.append(lam**k * (1 - lam) ** (n - k))
    w = np.array(weights)
    return np.array(masks, dtype=bool), w / w.sum()


def sample_q_kick(
    state: PureStrategyState,
    game: Game,
    config: SimConfig,
    rng: np.random.Generator,
    kick_lambda: float = KICK_LAMBDA,
    subsets: tuple[np.ndarray, np.ndarray] | None = None,
) -> SystemState:
    """One step from a pure state in which a random set of at least two agents trembles.

    Tremblers draw uniformly; everyone else plays its (vertex) strategy. The
    usual strategy and aspiration updates are then applied.
    """
    masks, probs = subsets if subsets is not None else kick_subsets(game.n_players, kick_lambda)
    current = pure_state(game, state.profile)
    u = rng.random(game.n_players + 1)
    k = min(int(np.searchsorted(np.cumsum(probs), u[0], side="right")), len(probs) - 1)
    trembles = masks[k]
    joint = tuple(
        _pick_action(a.strategy, 1.0 if trembles[i] else 0.0, 0.5, u[i + 1])
        for i, a in enumerate(current.agents)
    )
    payoffs = game.utilities[joint]
    agents = []
    for i, agent in enumerate(current.agents):
        payoff = float(payoffs[i])
        x_new = strategy_update(agent, joint[i], payoff, config.epsilon, config.h)
        agents.append(AgentState(x_new, aspiration_update(agent, payoff, config.nu), joint[i]))
    return SystemState(agents, 1)


@dataclass
class EmpiricalChain:
    states: list[PureStrategyState]
    labels: list[str]
    counts: np.ndarray
    escapes: np.ndarray
    episodes: int
    mean_steps: np.ndarray = field(default=None)

    @property
    def resolved(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def matrix(self) -> np.ndarray:
        res = self.resolved
        if np.any(res == 0):
            bad = [self.labels[k] for k in np.flatnonzero(res == 0)]
            raise EstimationError(f"no resolved episodes for rows {bad}", list(np.flatnonzero(res == 0)), self.escapes)
        return self.counts / res[:, None]

    def standard_errors(self) -> np.ndarray:
        """Binomial standard error of each entry."""
        p = self.matrix
        return np.sqrt(p * (1 - p) / self.resolved[:, None])


def _episode(game, arrays, config, source, targets, cap, subsets, rng, probs):
    U, strides, n_act = arrays
    kicked = sample_q_kick(source, game, config, rng, subsets=subsets)
    actions, x, rho = kicked.to_arrays(int(n_act.max()))
    hit = _kernel.nash_hit(x, rho, actions, U, strides, n_act, targets, config.delta)
    if hit >= 0:
        return hit, 0
    p_none, p_one = probs
    used = 0
    block = 64
    n = game.n_players
    while used < cap:
        b = min(block, cap - used)
        draws = rng.random((b, n + 1))
        hit, steps = _kernel.unperturbed_block(
            draws, x, rho, actions, U, strides, n_act,
            config.epsilon, config.nu, config.h, p_none, p_one, targets, config.delta,
        )
        used += steps
        if hit >= 0:
            return hit, used
        block = min(block * 4, 1 << 16)
    return -1, used


def default_episode_cap(game: Game, config: SimConfig) -> int:
    """Ten times the fewest steps any player needs to get within delta of a vertex."""
    lo, hi = game.utility_range
    try:
        rhs = validate_step_sizes(game, config.epsilon, min(config.nu, 0.5), min(config.delta, hi - lo)).rhs
    except ConfigError:
        rhs = float(np.log(config.delta) / np.log(1 - config.epsilon * hi))
    return max(1000, int(np.ceil(10 * rhs)))


def estimate_phat(
    game: Game,
    config: SimConfig,
    episodes: int,
    episode_cap: int | None = None,
    seed: int | None = None,
    threads: int = 1,
    kick_lambda: float = KICK_LAMBDA,
) -> EmpiricalChain:
    """Tally where kicked episodes from each pure Nash state come to rest.

    Between kicks the process runs with the tremble pattern of the perturbed
    dynamics conditioned on at most one agent trembling, at ``config.lam``.
    Every episode has its own random stream spawned from ``seed`` (default
    ``config.seed``), so results do not depend on ``threads``.
    """
    nash = pure_nash_equilibria(game)
    if not nash:
        raise ClassificationError("game has no pure Nash equilibrium")
    config.check_game(game)
    if episodes < 1:
        raise ValueError("need at least one episode per row")
    cap = default_episode_cap(game, config) if episode_cap is None else int(episode_cap)
    n = game.n_players
    lam = config.lam
    p_none = (1 - lam) ** n
    p_one = lam * (1 - lam) ** (n - 1)
    if p_none + n * p_one <= 0:
        raise ConfigError("lambda = 1 leaves no mass on at-most-one-tremble steps")
    states = [PureStrategyState.of(game, p) for p in nash]
    arrays = _game_arrays(game)
    targets = np.array([game.profile_index(p) for p in nash], dtype=np.int64)
    subsets = kick_subsets(n, kick_lambda)
    root = np.random.SeedSequence(config.seed if seed is None else seed)
    row_seqs = root.spawn(len(states))

    def do_row(r):
        counts = np.zeros(len(states), dtype=np.int64)
        escapes = 0
        steps = 0
        for ss in row_seqs[r].spawn(episodes):
            rng = np.random.Generator(np.random.PCG64(ss))
            hit, used = _episode(game, arrays, config, states[r], targets, cap, subsets, rng, (p_none, p_one))
            steps += used
            if hit >= 0:
                counts[hit] += 1
            else:
                escapes += 1
        return counts, escapes, steps / episodes

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(do_row, range(len(states))))
    else:
        rows = [do_row(r) for r in range(len(states))]
    return EmpiricalChain(
        states=states,
        labels=[game.label(p) for p in nash],
        counts=np.array([r[0] for r in rows]),
        escapes=np.array([r[1] for r in rows]),
        episodes=episodes,
        mean_steps=np.array([r[2] for r in rows]),
    )


@dataclass
class StationaryResult:
    pi: np.ndarray
    residual: float
    iterations: int
    unique: bool = True
    closed_classes: list[list[int]] = field(default_factory=list)


def _closed_classes(P: np.ndarray) -> list[list[int]]:
    k, comp = connected_components(P > 0, directed=True, connection="strong")
    classes = []
    for c in range(k):
        members = np.flatnonzero(comp == c)
        outside = np.setdiff1d(np.arange(len(P)), members)
        if not np.any(P[np.ix_(members, outside)] > 0):
            classes.append(members.tolist())
    return classes


def _solve_irreducible(P: np.ndarray) -> np.ndarray:
    m = len(P)
    A = np.vstack([P.T - np.eye(m), np.ones(m)])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution(
    matrix: np.ndarray | EmpiricalChain,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    direct_limit: int = 32,
) -> StationaryResult:
    """Invariant probability vector of a row-stochastic matrix.

    Small chains are solved directly. When several closed classes exist the
    invariant vector is not unique; the one returned is the long-run average
    started from the uniform distribution, and ``unique`` is False.
    """
    P = matrix.matrix if isinstance(matrix, EmpiricalChain) else np.asarray(matrix, dtype=float)
    m = P.shape[0]
    if P.shape != (m, m) or np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("matrix is not row-stochastic")
    classes = _closed_classes(P)

    if m <= direct_limit:
        if len(classes) == 1 and len(classes[0]) == m:
            pi = _solve_irreducible(P)
        else:
            pi = _cesaro_from_uniform(P, classes)
        # a few power sweeps polish rounding from the solve
        it = 0
        for it in range(1, 51):
            nxt = pi @ P
            nxt /= nxt.sum()
            if np.max(np.abs(nxt - pi)) <= tol * 1e-2:
                pi = nxt
                break
            pi = nxt
        residual = float(np.max(np.abs(pi - pi @ P)))
        return StationaryResult(pi, residual, it, len(classes) == 1, classes)

    # lazy chain removes periodicity without changing the invariant vector
    L = 0.5 * (np.eye(m) + P)
    pi = np.full(m, 1.0 / m)
    for it in range(1, max_iter + 1):
        nxt = pi @ L
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - nxt @ P)) <= tol:
            return StationaryResult(nxt, float(np.max(np.abs(nxt - nxt @ P))), it, len(classes) == 1, classes)
        pi = nxt
    ev = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    gap = 1.0 - (ev[1] if len(ev) > 1 else 0.0)
    raise SolverError(f"power iteration did not converge in {max_iter} sweeps (spectral gap ~ {gap:.3g})")


def _cesaro_from_uniform(P: np.ndarray, classes: list[list[int]]) -> np.ndarray:
    m = len(P)
    closed = sorted(i for c in classes for i in c)
    transient = [i for i in range(m) if i not in set(closed)]
    start = np.full(m, 1.0 / m)
    # probability of ending in each closed class
    mass = np.array([start[c].sum() for c in classes])
    if transient:
        T = P[np.ix_(transient, transient)]
        N = np.linalg.inv(np.eye(len(transient)) - T)
        for k, c in enumerate(classes):
            absorb = N @ P[np.ix_(transient, c)].sum(axis=1)
            mass[k] += start[transient] @ absorb
    pi = np.zeros(m)
    for k, c in enumerate(classes):
        sub = P[np.ix_(c, c)]
        pi[c] = mass[k] * _solve_irreducible(sub)
    return pi / pi.sum()


@dataclass
class CrossValidation:
    labels: list[str]
    pi: np.ndarray
    occupation: np.ndarray
    discrepancy: float

    def to_dict(self) -> dict:
        return {
            "states": self.labels,
            "pi": self.pi.tolist(),
            "occupation": self.occupation.tolist(),
            "discrepancy": self.discrepancy,
        }


def cross_validate(
    game: Game,
    chain: EmpiricalChain,
    result: StationaryResult,
    occupation: OccupationStats | dict[str, float],
) -> CrossValidation:
    """Max-abs gap between the chain's stationary vector and occupation renormalized over Nash neighborhoods."""
    if isinstance(occupation, OccupationStats):
        occ = occupation.renormalized([s.profile for s in chain.states])
    else:
        try:
            v = np.array([occupation[lab] for lab in chain.labels], dtype=float)
        except KeyError as exc:
            raise ValueError(f"occupation has no entry for state {exc.args[0]}") from None
        if v.sum() == 0:
            raise ValueError("occupation never visited a Nash neighborhood")
        occ = v / v.sum()
    return CrossValidation(chain.labels, result.pi, occ, float(np.max(np.abs(result.pi - occ))))


def chain_report(chain: EmpiricalChain, result: StationaryResult | None, config: SimConfig, extra: dict | None = None) -> dict:
    out = {
        "states": chain.labels,
        "matrix": chain.matrix.tolist() if np.all(chain.resolved > 0) else None,
        "counts": chain.counts.tolist(),
        "pi": result.pi.tolist() if result is not None else None,
        "residual": result.residual if result is not None else None,
        "unique": result.unique if result is not None else None,
        "escapes": chain.escapes.tolist(),
        "episodes": chain.episodes,
        "config": config.to_dict(),
    }
    if extra:
        out.update(extra)
    return out


def write_chain_json(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
