"""One step of aspiration-based perturbed learning automata (APLA).

Each agent keeps a mixed strategy ``x_i`` and an aspiration level ``rho_i``.
Per step every agent, simultaneously:

1. draws an action from ``x_i`` (or, with probability ``lam``, uniformly),
2. observes its payoff at the new joint action,
3. moves ``x_i`` toward the vertex of the action it played by
   ``epsilon * payoff * phi(payoff - rho_i)``,
4. moves ``rho_i`` toward the payoff by a fraction ``nu``.

``phi`` damps reinforcement of payoffs that fall short of the aspiration; with
``h = 1`` it is identically 1 and the scheme reduces to plain perturbed
learning automata (PLA).

Random numbers are consumed in a fixed layout so that the pure-numpy path here
and the compiled loops in :mod:`apla._kernel` produce bit-identical runs: each
step draws ``rng.random((n, k))`` where column 0 decides the tremble, column 1
picks the action and, when payoff noise is on, column 2 sets the noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from apla.game import Game

# Noisy payoffs are clamped here so payoffs stay strictly positive.
NOISE_FLOOR = 1e-12


class ConfigError(ValueError):
    pass


class PositiveUtilityError(ValueError):
    """A payoff fed to the strategy update was not strictly positive."""


@dataclass(frozen=True)
class SimConfig:
    epsilon: float = 1e-4
    nu: float = 1e-3
    lam: float = 0.01
    h: float = 0.01
    horizon: int = 2_000_000
    seed: int = 0
    delta: float = 0.05
    # occupation is measured over steps t > window_start * horizon
    window_start: float = 0.5
    # trajectory sampling stride; 0 means horizon // 2000
    stride: int = 0
    # half-width of the bounded zero-mean additive payoff noise
    noise: float = 0.0
    init_strategies: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.nu <= 1:
            raise ConfigError(f"nu must be in (0, 1], got {self.nu}")
        if not 0 <= self.lam <= 1:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if not 0 < self.h <= 1:
            raise ConfigError(f"h must be in (0, 1], got {self.h}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if not 0 <= self.window_start < 1:
            raise ConfigError(f"window_start must be in [0, 1), got {self.window_start}")
        if self.stride < 0:
            raise ConfigError("stride must be >= 0")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["lambda"] = d.pop("lam")
        if d["init_strategies"] is not None:
            d["init_strategies"] = [list(s) for s in d["init_strategies"]]
        return d

    def check_game(self, game: Game) -> None:
        """Runtime preconditions: positive payoffs and ``epsilon * u < 1`` everywhere."""
        lo, hi = game.utility_range
        if not lo > 0:
            raise PositiveUtilityError(f"game has non-positive payoff {lo}")
        if not self.epsilon * hi < 1:
            raise ConfigError(f"epsilon * max utility = {self.epsilon * hi} must be < 1")


@dataclass
class AgentState:
    strategy: np.ndarray
    aspiration: float
    action: int

    def __post_init__(self) -> None:
        self.strategy = np.asarray(self.strategy, dtype=float)


@dataclass
class SystemState:
    agents: list[AgentState]
    time: int = 0

    @property
    def joint_action(self) -> tuple[int, ...]:
        return tuple(a.action for a in self.agents)

    @property
    def aspirations(self) -> np.ndarray:
        return np.array([a.aspiration for a in self.agents])

    def copy(self) -> "SystemState":
        return SystemState(
            [AgentState(a.strategy.copy(), a.aspiration, a.action) for a in self.agents], self.time
        )

    def to_arrays(self, max_actions: int | None = None):
        """``(actions, x, rho)`` with strategies zero-padded to ``max_actions`` columns."""
        m = max_actions or max(len(a.strategy) for a in self.agents)
        x = np.zeros((len(self.agents), m))
        for i, a in enumerate(self.agents):
            x[i, : len(a.strategy)] = a.strategy
        actions = np.array([a.action for a in self.agents], dtype=np.int64)
        rho = np.array([a.aspiration for a in self.agents], dtype=float)
        return actions, x, rho

    @classmethod
    def from_arrays(cls, game: Game, actions, x, rho, time: int = 0) -> "SystemState":
        agents = [
            AgentState(np.array(x[i, :k], dtype=float), float(rho[i]), int(actions[i]))
            for i, k in enumerate(game.actions)
        ]
        return cls(agents, time)


def phi(y: float, h: float) -> float:
    """Satisfaction multiplier: 1 when the payoff meets the aspiration, down to ``h`` otherwise."""
    if not h > 0:
        raise ConfigError(f"h must be > 0, got {h}")
    if y >= 0:
        return 1.0
    return max(h, 1.0 + y / h)


def _pick_action(strategy: np.ndarray, lam: float, u_tremble: float, u_action: float) -> int:
    m = len(strategy)
    if u_tremble < lam:
        return min(int(u_action * m), m - 1)
    cum = 0.0
    for a in range(m):
        cum += strategy[a]
        if u_action < cum:
            return a
    return m - 1


def sample_action(agent: AgentState, lam: float, rng: np.random.Generator) -> int:
    u = rng.random(2)
    return _pick_action(agent.strategy, lam, u[0], u[1])


def _renormalize(x: np.ndarray) -> np.ndarray:
    total = 0.0
    for v in x:
        total += v
    return x / total


def strategy_update(agent: AgentState, chosen: int, payoff: float, epsilon: float, h: float) -> np.ndarray:
    if not payoff > 0:
        raise PositiveUtilityError(f"payoff {payoff} is not positive")
    x = agent.strategy
    gain = epsilon * payoff * phi(payoff - agent.aspiration, h)
    target = np.zeros_like(x)
    target[chosen] = 1.0
    return _renormalize(x + gain * (target - x))


def aspiration_update(agent: AgentState, payoff: float, nu: float) -> float:
    return agent.aspiration + nu * (payoff - agent.aspiration)


def draws_per_agent(config: SimConfig) -> int:
    return 3 if config.noise > 0 else 2


def step(state: SystemState, game: Game, config: SimConfig, rng: np.random.Generator) -> SystemState:
    n = game.n_players
    draws = rng.random((n, draws_per_agent(config)))
    joint = tuple(_pick_action(a.strategy, config.lam, draws[i, 0], draws[i, 1]) for i, a in enumerate(state.agents))
    payoffs = game.utilities[joint]
    agents = []
    for i, agent in enumerate(state.agents):
        payoff = float(payoffs[i])
        if config.noise > 0:
            payoff = max(payoff + config.noise * (2.0 * draws[i, 2] - 1.0), NOISE_FLOOR)
        # strategy update reads the old aspiration
        x_new = strategy_update(agent, joint[i], payoff, config.epsilon, config.h)
        rho_new = aspiration_update(agent, payoff, config.nu)
        agents.append(AgentState(x_new, rho_new, joint[i]))
    return SystemState(agents, state.time + 1)


def initial_state(game: Game, config: SimConfig, rng: np.random.Generator) -> SystemState:
    """Uniform (or configured) strategies, a first joint action drawn from them, aspirations at its payoffs."""
    if config.init_strategies is not None:
        strategies = [np.array(s, dtype=float) for s in config.init_strategies]
        if len(strategies) != game.n_players or any(
            len(s) != k for s, k in zip(strategies, game.actions)
        ):
            raise ConfigError("init_strategies must give one distribution per player")
        for s in strategies:
            if np.any(s < 0) or abs(s.sum() - 1.0) > 1e-9:
                raise ConfigError(f"init strategy {s.tolist()} is not on the simplex")
    else:
        strategies = [np.full(k, 1.0 / k) for k in game.actions]
    draws = rng.random(game.n_players)
    joint = tuple(_pick_action(s, 0.0, 1.0, draws[i]) for i, s in enumerate(strategies))
    payoffs = game.utilities[joint]
    return SystemState([AgentState(s, float(payoffs[i]), joint[i]) for i, s in enumerate(strategies)], 0)


def pure_state(game: Game, profile: Sequence[int]) -> SystemState:
    """The pure strategy state of ``profile``: vertex strategies, aspirations at the realized payoffs."""
    prof = game.check_profile(profile)
    payoffs = game.utilities[prof]
    agents = []
    for i, (a, k) in enumerate(zip(prof, game.actions)):
        x = np.zeros(k)
        x[a] = 1.0
        agents.append(AgentState(x, float(payoffs[i]), a))
    return SystemState(agents, 0)


@dataclass(frozen=True)
class StepSizeCheck:
    ok: bool
    lhs: float
    rhs: float
    # per-profile, per-player step counts whose minimum is rhs
    strategy_steps: np.ndarray = field(repr=False, compare=False, default=None)


def validate_step_sizes(game: Game, epsilon: float, nu: float, delta: float) -> StepSizeCheck:
    """Check that aspirations settle (in steps) no slower than strategies reach a vertex.

    ``lhs`` counts the steps the aspiration needs to close a gap of the full
    utility spread down to ``delta``; ``rhs`` is the fewest steps any player
    needs to come within ``delta`` of a vertex when one profile is played
    repeatedly.
    """
    if not 0 < epsilon < 1 or not 0 < nu < 1:
        raise ConfigError("epsilon and nu must lie in (0, 1)")
    lo, hi = game.utility_range
    spread = abs(hi - lo)
    if spread == 0:
        raise ConfigError("constant-utility game: aspiration bracket is degenerate")
    if not 0 < delta <= spread:
        raise ConfigError(f"delta must lie in (0, {spread}], got {delta}")
    contraction = 1.0 - epsilon * game.utilities
    if np.any(contraction <= 0):
        raise ConfigError("epsilon * u_i(alpha) >= 1 for some entry")
    lhs = math.log(delta / spread) / math.log(1.0 - nu)
    steps = math.log(delta) / np.log(contraction)
    rhs = float(steps.min())
    return StepSizeCheck(lhs <= rhs, lhs, rhs, steps)
