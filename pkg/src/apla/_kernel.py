"""Compiled inner loops for long APLA runs.

These mirror :func:`apla.dynamics.step` operation for operation (same random
number layout, same floating-point evaluation order) so a compiled run is
bit-identical to iterating ``step``. State lives in flat arrays:
``actions (n,)``, ``x (n, m)`` zero-padded strategies and ``rho (n,)``.
"""

import math

import numpy as np
from numba import njit

NOISE_FLOOR = 1e-12


@njit(cache=True, nogil=True)
def joint_index(actions, strides):
    p = 0
    for i in range(actions.shape[0]):
        p += actions[i] * strides[i]
    return p


@njit(cache=True, nogil=True)
def pick_action(x_i, m, lam, u_tremble, u_action):
    if u_tremble < lam:
        a = int(u_action * m)
        return a if a < m else m - 1
    cum = 0.0
    for a in range(m):
        cum += x_i[a]
        if u_action < cum:
            return a
    return m - 1


@njit(cache=True, nogil=True)
def phi(y, h):
    if y >= 0:
        return 1.0
    return max(h, 1.0 + y / h)


@njit(cache=True, nogil=True)
def update(x, rho, actions, U, strides, n_act, eps, nu, h, noise, noise_draws):
    """Strategy then aspiration update at the current joint action. Returns the profile index."""
    p = joint_index(actions, strides)
    for i in range(actions.shape[0]):
        payoff = U[p, i]
        if noise > 0:
            payoff = max(payoff + noise * (2.0 * noise_draws[i] - 1.0), NOISE_FLOOR)
        if not payoff > 0:
            raise ValueError("non-positive payoff in strategy update")
        gain = eps * payoff * phi(payoff - rho[i], h)
        m = n_act[i]
        chosen = actions[i]
        for a in range(m):
            target = 1.0 if a == chosen else 0.0
            x[i, a] = x[i, a] + gain * (target - x[i, a])
        total = 0.0
        for a in range(m):
            total += x[i, a]
        for a in range(m):
            x[i, a] = x[i, a] / total
        rho[i] = rho[i] + nu * (payoff - rho[i])
    return p


@njit(cache=True, nogil=True)
def pure_distance(x, rho, actions, U, p, n_act):
    """Euclidean distances of (x, rho) to the pure strategy state of the current joint action."""
    dx = 0.0
    dr = 0.0
    for i in range(actions.shape[0]):
        for a in range(n_act[i]):
            d = x[i, a] - (1.0 if a == actions[i] else 0.0)
            dx += d * d
        d = rho[i] - U[p, i]
        dr += d * d
    return math.sqrt(dx), math.sqrt(dr)


@njit(cache=True, nogil=True)
def run_block(draws, t0, horizon, x, rho, actions, U, strides, n_act,
              eps, nu, lam, h, noise, window_lo, delta, occ, plays,
              stride, traj_t, traj_a, traj_x, traj_r, traj_pos):
    """Advance ``draws.shape[0]`` perturbed steps, tallying occupation and sampling the trajectory."""
    n = actions.shape[0]
    n_profiles = U.shape[0]
    nd = np.zeros(n)
    for s in range(draws.shape[0]):
        t = t0 + s + 1
        for i in range(n):
            actions[i] = pick_action(x[i], n_act[i], lam, draws[s, i, 0], draws[s, i, 1])
        if noise > 0:
            for i in range(n):
                nd[i] = draws[s, i, 2]
        p = update(x, rho, actions, U, strides, n_act, eps, nu, h, noise, nd)
        if t > window_lo:
            plays[p] += 1
            dx, dr = pure_distance(x, rho, actions, U, p, n_act)
            if dx < delta and dr < delta:
                occ[p] += 1
            else:
                occ[n_profiles] += 1
        if stride > 0 and (t % stride == 0 or t == horizon):
            k = traj_pos[0]
            traj_t[k] = t
            for i in range(n):
                traj_a[k, i] = actions[i]
                traj_r[k, i] = rho[i]
                for a in range(x.shape[1]):
                    traj_x[k, i, a] = x[i, a]
            traj_pos[0] = k + 1


@njit(cache=True, nogil=True)
def nash_hit(x, rho, actions, U, strides, n_act, targets, delta):
    """Index into ``targets`` of the Nash neighborhood the state is in, or -1."""
    p = joint_index(actions, strides)
    for k in range(targets.shape[0]):
        if targets[k] == p:
            dx, dr = pure_distance(x, rho, actions, U, p, n_act)
            if dx < delta and dr < delta:
                return k
            return -1
    return -1


@njit(cache=True, nogil=True)
def unperturbed_block(draws, x, rho, actions, U, strides, n_act,
                      eps, nu, h, p_none, p_one, targets, delta):
    """Run the at-most-one-tremble process until a Nash neighborhood is entered.

    ``draws`` has shape ``(steps, n + 1)``: column 0 picks the tremble
    pattern, column ``i + 1`` agent i's action. Returns ``(hit, steps_used)``
    with ``hit = -1`` when the block ran out first.
    """
    n = actions.shape[0]
    nd = np.zeros(n)
    total = p_none + n * p_one
    for s in range(draws.shape[0]):
        c = draws[s, 0] * total
        trembler = -1
        if c >= p_none:
            trembler = int((c - p_none) / p_one)
            if trembler >= n:
                trembler = n - 1
        for i in range(n):
            lam_i = 1.0 if i == trembler else 0.0
            # u_tremble = 0.5 with lam_i in {0, 1} selects the branch deterministically
            actions[i] = pick_action(x[i], n_act[i], lam_i, 0.5, draws[s, i + 1])
        update(x, rho, actions, U, strides, n_act, eps, nu, h, 0.0, nd)
        hit = nash_hit(x, rho, actions, U, strides, n_act, targets, delta)
        if hit >= 0:
            return hit, s + 1
    return -1, draws.shape[0]
