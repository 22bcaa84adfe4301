import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apla.dynamics import (
    AgentState,
    ConfigError,
    PositiveUtilityError,
    SimConfig,
    SystemState,
    aspiration_update,
    initial_state,
    phi,
    pure_state,
    sample_action,
    step,
    strategy_update,
    validate_step_sizes,
)
from apla.game import Game


# -- phi -----------------------------------------------------------------------

def test_phi_examples():
    assert phi(0.5, 0.01) == 1.0
    assert phi(-0.005, 0.1) == pytest.approx(0.95, abs=1e-15)
    assert phi(-10, 0.1) == 0.1


def test_phi_rejects_nonpositive_h():
    with pytest.raises(ConfigError):
        phi(0.0, 0.0)
    with pytest.raises(ConfigError):
        phi(-1.0, -0.5)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(1e-6, 1.0))
def test_phi_range(y, h):
    v = phi(y, h)
    assert h <= v <= 1.0
    if y >= 0:
        assert v == 1.0


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(1e-4, 1.0))
def test_phi_monotone(y1, y2, h):
    lo, hi = sorted((y1, y2))
    assert phi(lo, h) <= phi(hi, h)


def test_phi_left_continuous_at_zero():
    for h in (0.01, 0.3, 1.0):
        assert phi(-1e-12, h) == pytest.approx(1.0, abs=1e-9)


def test_phi_is_one_when_h_is_one():
    for y in np.linspace(-50, 50, 1001):
        assert phi(float(y), 1.0) == 1.0


# -- action sampling -----------------------------------------------------------

def test_sample_action_vertex_no_tremble():
    rng = np.random.default_rng(0)
    agent = AgentState(np.array([1.0, 0.0]), 1.0, 0)
    assert all(sample_action(agent, 0.0, rng) == 0 for _ in range(2000))


def test_sample_action_tremble_frequency():
    # P(action 0) = (1 - lam) * 1 + lam * 1/2 = 0.75
    rng = np.random.default_rng(1)
    agent = AgentState(np.array([1.0, 0.0]), 1.0, 0)
    draws = 1_000_000
    hits = sum(sample_action(agent, 0.5, rng) == 0 for _ in range(draws))
    sigma = math.sqrt(0.75 * 0.25 / draws)
    assert abs(hits / draws - 0.75) < 3 * sigma


@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
def test_sample_action_uniform_strategy(lam):
    rng = np.random.default_rng(2)
    agent = AgentState(np.array([0.5, 0.5]), 1.0, 0)
    draws = 100_000
    freq = sum(sample_action(agent, lam, rng) == 0 for _ in range(draws)) / draws
    assert abs(freq - 0.5) < 3 * math.sqrt(0.25 / draws)


# -- strategy / aspiration updates ---------------------------------------------

def test_strategy_update_half_half():
    agent = AgentState(np.array([0.5, 0.5]), 4.0, 0)
    new = strategy_update(agent, 0, 5.0, 0.1, 0.01)
    np.testing.assert_allclose(new, [0.75, 0.25], rtol=0, atol=1e-15)


@pytest.mark.parametrize("payoff, rho, h", [(5.0, 4.0, 0.5), (3.0, 4.0, 0.5), (1.0, 4.0, 0.01), (2.0, 2.0, 1.0)])
def test_strategy_update_toy_formula(payoff, rho, h):
    eps = 0.05
    agent = AgentState(np.array([0.5, 0.5]), rho, 0)
    g = eps * payoff * phi(payoff - rho, h)
    np.testing.assert_allclose(strategy_update(agent, 0, payoff, eps, h), [0.5 * (1 + g), 0.5 * (1 - g)], atol=1e-15)


def test_strategy_update_vertex_fixed():
    agent = AgentState(np.array([1.0, 0.0, 0.0]), 2.0, 0)
    for payoff, rho in [(1.0, 5.0), (7.0, 0.5), (3.0, 3.0)]:
        agent.aspiration = rho
        assert strategy_update(agent, 0, payoff, 0.1, 0.2).tolist() == [1.0, 0.0, 0.0]


def test_strategy_update_rejects_nonpositive_payoff():
    agent = AgentState(np.array([0.5, 0.5]), 1.0, 0)
    with pytest.raises(PositiveUtilityError):
        strategy_update(agent, 0, 0.0, 0.1, 0.5)
    with pytest.raises(PositiveUtilityError):
        strategy_update(agent, 0, -2.0, 0.1, 0.5)


def test_aspiration_examples():
    assert aspiration_update(AgentState([0.5, 0.5], 4.0, 0), 5.0, 0.1) == pytest.approx(4.1, abs=1e-15)
    assert aspiration_update(AgentState([0.5, 0.5], 3.25, 0), 3.25, 0.37) == 3.25
    assert aspiration_update(AgentState([0.5, 0.5], 5.0, 0), 1.0, 1.0) == 1.0


@given(
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5).filter(lambda v: sum(v) > 1e-3),
    st.floats(0.01, 20.0),
    st.floats(0.0, 25.0),
    st.floats(1e-3, 1.0),
    st.data(),
)
@settings(max_examples=300)
def test_strategy_update_stays_on_simplex(raw, payoff, rho, h, data):
    x = np.array(raw) / sum(raw)
    eps = data.draw(st.floats(1e-6, 0.999 / payoff))
    chosen = data.draw(st.integers(0, len(x) - 1))
    new = strategy_update(AgentState(x, rho, 0), chosen, payoff, eps, h)
    assert np.all(new >= 0) and np.all(new <= 1)
    assert abs(new.sum() - 1) <= 1e-9


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(1e-4, 0.999))
def test_aspiration_contraction(rho, u, nu):
    new = aspiration_update(AgentState([1.0, 0.0], rho, 0), u, nu)
    assert abs(new - u) == pytest.approx((1 - nu) * abs(rho - u), rel=1e-9, abs=1e-12)
    assert min(rho, u) - 1e-12 <= new <= max(rho, u) + 1e-12


def test_aspiration_geometric_convergence():
    agent = AgentState([1.0, 0.0], 1.0, 0)
    nu, u = 0.01, 5.0
    for t in range(1, 2001):
        agent.aspiration = aspiration_update(agent, u, nu)
        if t % 500 == 0:
            assert abs(agent.aspiration - u) == pytest.approx(4.0 * (1 - nu) ** t, rel=1e-9)


@given(st.floats(1e-3, 0.99), st.floats(1e-3, 1.0), st.floats(0.1, 4.0), st.floats(-4.0, 4.0))
def test_increment_monotone_in_satisfaction(eps_scale, h, payoff, gap):
    # for a fixed state and action, a larger (payoff - aspiration) never shrinks the step
    eps = eps_scale / payoff
    x = np.array([0.3, 0.7])
    small = strategy_update(AgentState(x, payoff - gap, 0), 0, payoff, eps, h)
    large = strategy_update(AgentState(x, payoff - gap - 0.5, 0), 0, payoff, eps, h)
    assert large[0] - x[0] >= small[0] - x[0] - 1e-15


# -- step ----------------------------------------------------------------------

def test_step_pure_nash_state_is_fixed(sh):
    cfg = SimConfig(lam=0.0, h=0.01)
    rng = np.random.default_rng(3)
    for prof in [(0, 0), (1, 1)]:
        s = pure_state(sh, prof)
        for _ in range(200):
            nxt = step(s, sh, cfg, rng)
            assert nxt.joint_action == prof
            for a, b in zip(nxt.agents, s.agents):
                assert a.strategy.tolist() == b.strategy.tolist()
                assert a.aspiration == b.aspiration
            assert nxt.time == s.time + 1
            s = nxt


def test_step_uniform_when_lambda_one(sh):
    cfg = SimConfig(lam=1.0)
    rng = np.random.default_rng(4)
    s = pure_state(sh, (0, 0))
    counts = np.zeros((2, 2))
    trials = 40_000
    for _ in range(trials):
        counts[step(s, sh, cfg, rng).joint_action] += 1
    freq = counts / trials
    assert np.all(np.abs(freq - 0.25) < 3 * math.sqrt(0.25 * 0.75 / trials))


def test_step_reproduces_toy_update(sh):
    # from (1/2, 1/2) the chosen action's weight becomes (1 + eps*u*phi)/2
    cfg = SimConfig(epsilon=0.01, nu=0.1, lam=0.0, h=0.5)
    rng = np.random.default_rng(5)
    s = SystemState([AgentState([0.5, 0.5], 4.5, 0), AgentState([0.5, 0.5], 2.0, 0)])
    nxt = step(s, sh, cfg, rng)
    joint = nxt.joint_action
    for i, agent in enumerate(nxt.agents):
        u = sh.utilities[joint][i]
        g = cfg.epsilon * u * phi(u - s.agents[i].aspiration, cfg.h)
        expected = np.full(2, 0.5 * (1 - g))
        expected[joint[i]] = 0.5 * (1 + g)
        np.testing.assert_allclose(agent.strategy, expected, atol=1e-15)
        # aspiration moves after the strategy update used the old value
        assert agent.aspiration == pytest.approx(s.agents[i].aspiration + cfg.nu * (u - s.agents[i].aspiration))


def test_step_propagates_positive_utility_violation():
    g = Game(np.array([[[1, 1], [0, 1]], [[1, 1], [1, 1]]], dtype=float))
    s = SystemState([AgentState([0.0, 1.0], 1.0, 1), AgentState([1.0, 0.0], 1.0, 0)])
    s.agents[0].strategy = np.array([1.0, 0.0])
    s.agents[1].strategy = np.array([0.0, 1.0])
    with pytest.raises(PositiveUtilityError):
        step(s, g, SimConfig(lam=0.0), np.random.default_rng(0))


def pla_step(state, game, cfg, rng):
    """Perturbed learning automata without any satisfaction term, written independently."""
    n = game.n_players
    draws = rng.random((n, 2))
    joint = []
    for i, agent in enumerate(state.agents):
        m = len(agent.strategy)
        if draws[i, 0] < cfg.lam:
            joint.append(min(int(draws[i, 1] * m), m - 1))
        else:
            acc, pick = 0.0, m - 1
            for a in range(m):
                acc += agent.strategy[a]
                if draws[i, 1] < acc:
                    pick = a
                    break
            joint.append(pick)
    joint = tuple(joint)
    agents = []
    for i, agent in enumerate(state.agents):
        u = float(game.utilities[joint][i])
        x = [agent.strategy[a] + cfg.epsilon * u * ((1.0 if a == joint[i] else 0.0) - agent.strategy[a])
             for a in range(len(agent.strategy))]
        total = 0.0
        for v in x:
            total += v
        agents.append(AgentState(np.array([v / total for v in x]), agent.aspiration + cfg.nu * (u - agent.aspiration), joint[i]))
    return SystemState(agents, state.time + 1)


def test_h_one_matches_pla_bitwise(sh):
    cfg = SimConfig(epsilon=0.01, nu=0.05, lam=0.1, h=1.0)
    r1, r2 = np.random.default_rng(11), np.random.default_rng(11)
    a = initial_state(sh, cfg, r1)
    b = initial_state(sh, cfg, r2)
    for _ in range(2000):
        a = step(a, sh, cfg, r1)
        b = pla_step(b, sh, cfg, r2)
        assert a.joint_action == b.joint_action
        for x, y in zip(a.agents, b.agents):
            assert x.strategy.tobytes() == y.strategy.tobytes()
            assert x.aspiration == y.aspiration


def test_small_h_differs_from_pla(sh):
    cfg = SimConfig(epsilon=0.01, nu=0.05, lam=0.1, h=0.01)
    r1, r2 = np.random.default_rng(11), np.random.default_rng(11)
    a = initial_state(sh, cfg, r1)
    b = initial_state(sh, cfg, r2)
    for _ in range(50):
        a = step(a, sh, cfg, r1)
        b = pla_step(b, sh, cfg, r2)
    assert any(x.strategy.tobytes() != y.strategy.tobytes() for x, y in zip(a.agents, b.agents))


def test_noise_keeps_payoffs_positive():
    g = Game(np.full((2, 2, 2), 0.01))
    cfg = SimConfig(epsilon=0.1, lam=0.5, noise=1.0)
    rng = np.random.default_rng(0)
    s = initial_state(g, cfg, rng)
    for _ in range(500):
        s = step(s, g, cfg, rng)
        for a in s.agents:
            assert abs(a.strategy.sum() - 1) < 1e-12


def test_initial_state(sh):
    s = initial_state(sh, SimConfig(), np.random.default_rng(0))
    for i, a in enumerate(s.agents):
        assert a.strategy.tolist() == [0.5, 0.5]
        assert a.aspiration == sh.utilities[s.joint_action][i]
    cfg = SimConfig(init_strategies=((0.2, 0.8), (1.0, 0.0)))
    s = initial_state(sh, cfg, np.random.default_rng(0))
    assert s.agents[0].strategy.tolist() == [0.2, 0.8]
    assert s.joint_action[1] == 0
    with pytest.raises(ConfigError):
        initial_state(sh, SimConfig(init_strategies=((0.5, 0.6), (1.0, 0.0))), np.random.default_rng(0))


# -- config / step-size condition ----------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(epsilon=0), dict(nu=0), dict(nu=1.5), dict(lam=-0.1), dict(lam=1.1),
    dict(h=0), dict(h=1.5), dict(delta=0), dict(horizon=-1), dict(window_start=1.0),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_config_checks_epsilon_against_game(sh):
    SimConfig(epsilon=0.19).check_game(sh)
    with pytest.raises(ConfigError):
        SimConfig(epsilon=0.2).check_game(sh)


def test_validate_step_sizes_published_parameters(sh):
    chk = validate_step_sizes(sh, 1e-4, 1e-3, 0.01)
    lhs = math.log(0.01 / 4) / math.log(1 - 1e-3)
    per_entry = [math.log(0.01) / math.log(1 - 1e-4 * u) for u in sh.utilities.ravel()]
    assert chk.ok
    assert chk.lhs == pytest.approx(lhs, rel=1e-12) and chk.lhs == pytest.approx(5.99e3, rel=1e-3)
    assert chk.rhs == pytest.approx(min(per_entry), rel=1e-12)
    assert max(per_entry) == pytest.approx(4.6e4, rel=2e-3)


def test_validate_step_sizes_nu_equal_epsilon_fails(sh):
    assert not validate_step_sizes(sh, 0.01, 0.01, 0.05).ok


def test_validate_step_sizes_lhs_monotone_in_nu(sh):
    lhs = [validate_step_sizes(sh, 1e-4, nu, 0.01).lhs for nu in np.linspace(1e-4, 0.5, 50)]
    assert all(b <= a for a, b in zip(lhs, lhs[1:]))


def test_validate_step_sizes_delta_at_spread(sh):
    assert validate_step_sizes(sh, 1e-4, 1e-3, 4.0).lhs == 0


def test_validate_step_sizes_domain_errors(sh):
    with pytest.raises(ConfigError):
        validate_step_sizes(Game(sh.utilities * 1e5), 1e-4, 1e-3, 0.01)
    with pytest.raises(ConfigError):
        validate_step_sizes(sh, 1e-4, 1e-3, 5.0)
