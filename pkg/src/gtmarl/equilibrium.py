"""Equilibrium computations on matrix games.

minimax_solve handles two-player zero-sum games through the value LP in its
normalized form: after shifting the payoff matrix to be strictly positive,
each player's optimal mixture is the scaled solution of a one-phase LP
(max 1'q subject to Aq <= 1, q >= 0). correlated_eq_solve optimizes a linear
welfare objective over the correlated-equilibrium polytope. A support
enumeration oracle covers small general-sum two-player games.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, SpecError
from .games import MatrixGame, MixedProfile, expected_payoff, mixed_profile
from .linprog import OPTIMAL, LinearProgram, linear_program, solve_lp

UTILITARIAN = "utilitarian_sum"
EGALITARIAN = "egalitarian_min"
PLUTOCRATIC = "plutocratic_max"
CE_OBJECTIVES = (UTILITARIAN, EGALITARIAN, PLUTOCRATIC)

MAX_JOINT_ACTIONS = 4096
MAX_ENUM_ACTIONS = 4


@dataclass(frozen=True)
class MinimaxSolution:
    value: float
    strategies: MixedProfile


@dataclass(frozen=True)
class CorrelatedPolicy:
    """Distribution over joint actions, flat joint-action order."""

    probs: np.ndarray


@dataclass(frozen=True)
class NashCheckReport:
    passed: bool
    gains: np.ndarray  # per-agent best-response improvement
    eps: float


@dataclass(frozen=True)
class CeCheckReport:
    passed: bool
    max_violation: float
    violations: tuple  # (agent, recommended, alternative, violation)


def stage_minimax(matrix) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and maximin mixtures of a zero-sum stage game given the row
    player's payoff matrix. Used directly on Q-table slices by learners.

    With the matrix shifted strictly positive, max 1'q s.t. (A + k)q <= 1
    yields the column mixture as q scaled and the row mixture as the scaled
    dual multipliers; the shifted value is 1 / sum(q).
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise SpecError("stage payoff matrix must be 2-D and nonempty")
    if not np.all(np.isfinite(a)):
        raise SpecError("stage payoff matrix has non-finite entries")
    k1, k2 = a.shape
    shift = 1.0 - a.min()
    lp = LinearProgram(
        objective=np.ones(k2),
        a_matrix=a + shift,
        senses=("<=",) * k1,
        rhs=np.ones(k1),
        lower=np.zeros(k2),
        upper=np.full(k2, np.inf),
    )
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise NumericalError(f"value LP ended with status {sol.status}")
    duals = np.where(sol.row_duals > 0.0, sol.row_duals, 0.0)  # clip -1e-11 drift
    total = float(sol.x.sum())
    dual_total = float(duals.sum())
    if total <= 0.0 or dual_total <= 0.0:
        raise NumericalError("value LP returned a degenerate mixture")
    y = sol.x / total
    x = duals / dual_total
    return 1.0 / total - shift, x, y


def minimax_solve(game: MatrixGame) -> MinimaxSolution:
    """Exact value and optimal mixtures of a two-player zero-sum game."""
    if game.num_agents != 2:
        raise SpecError("minimax_solve needs exactly two agents")
    if not game.zero_sum:
        raise SpecError("minimax_solve needs a zero-sum game")
    value, x, y = stage_minimax(game.payoffs[0])
    return MinimaxSolution(value=float(value), strategies=mixed_profile([x, y]))


def _own_action_values(
    game: MatrixGame, mixtures, agent: int
) -> np.ndarray:
    """Expected payoff of each of the agent's pure actions against the
    other agents' mixtures."""
    t = np.moveaxis(game.payoffs[agent], agent, 0)
    for other in range(game.num_agents):
        if other == agent:
            continue
        m = np.asarray(mixtures[other], dtype=float)
        # after moveaxis, the next non-own axis is always axis 1
        t = np.tensordot(t, m, axes=(1, 0))
    return t


def best_response(game: MatrixGame, profile: MixedProfile, agent: int) -> tuple[int, float]:
    """Best pure response against the others' mixtures; ties break toward
    the lowest action index."""
    if not 0 <= agent < game.num_agents:
        raise SpecError(f"agent {agent} out of range")
    values = _own_action_values(game, profile.mixtures, agent)
    idx = int(np.argmax(values))
    return idx, float(values[idx])


def epsilon_nash_check(game: MatrixGame, profile: MixedProfile, eps: float) -> NashCheckReport:
    """Per-agent unilateral improvement against the profile; passes iff the
    largest gain is at most eps."""
    if eps < 0:
        raise SpecError("eps must be nonnegative")
    current = expected_payoff(game, profile)
    gains = np.empty(game.num_agents)
    for i in range(game.num_agents):
        _, br_value = best_response(game, profile, i)
        gains[i] = br_value - current[i]
    return NashCheckReport(passed=bool(gains.max() <= eps), gains=gains, eps=eps)


def _incentive_rows(actions: tuple[int, ...], payoffs_flat) -> tuple[np.ndarray, list]:
    """Rows of the correlated-equilibrium constraint system over flat joint
    actions: one row per (agent, recommended action, alternative action)."""
    count = int(np.prod(actions))
    digits = np.stack(np.unravel_index(np.arange(count), actions))
    strides = np.ones(len(actions), dtype=int)
    for i in range(len(actions) - 2, -1, -1):
        strides[i] = strides[i + 1] * actions[i + 1]
    rows = []
    labels = []
    for i, k in enumerate(actions):
        u = np.asarray(payoffs_flat[i], dtype=float)
        for a in range(k):
            mask = digits[i] == a
            idx = np.flatnonzero(mask)
            for alt in range(k):
                if alt == a:
                    continue
                swapped = idx + (alt - a) * strides[i]
                row = np.zeros(count)
                row[idx] = u[idx] - u[swapped]
                rows.append(row)
                labels.append((i, a, alt))
    if rows:
        return np.stack(rows), labels
    return np.zeros((0, count)), labels


def solve_ce_distribution(actions, payoffs_flat, objective: str) -> np.ndarray:
    """Optimal correlated distribution over flat joint actions for raw payoff
    vectors. Shared by correlated_eq_solve and the correlated-Q learner."""
    actions = tuple(int(k) for k in actions)
    count = int(np.prod(actions))
    if count > MAX_JOINT_ACTIONS:
        raise SpecError(f"{count} joint actions exceed the cap {MAX_JOINT_ACTIONS}")
    if objective not in CE_OBJECTIVES:
        raise SpecError(f"unknown objective {objective!r}")
    inc, _ = _incentive_rows(actions, payoffs_flat)
    n_inc = inc.shape[0]

    def solve_with(weights: np.ndarray) -> tuple[np.ndarray, float]:
        a = np.vstack([inc, np.ones((1, count))])
        senses = (">=",) * n_inc + ("==",)
        rhs = np.zeros(n_inc + 1)
        rhs[-1] = 1.0
        lp = linear_program(weights, a, senses, rhs)
        sol = solve_lp(lp)
        if sol.status != OPTIMAL:
            raise NumericalError(f"CE LP ended with status {sol.status}")
        return sol.x, sol.objective_value

    if objective == UTILITARIAN:
        weights = np.sum([np.asarray(u, dtype=float) for u in payoffs_flat], axis=0)
        lam, _ = solve_with(weights)
    elif objective == PLUTOCRATIC:
        best_lam, best_val = None, -np.inf
        for u in payoffs_flat:
            lam, val = solve_with(np.asarray(u, dtype=float))
            if val > best_val:
                best_lam, best_val = lam, val
        lam = best_lam
    else:  # egalitarian: maximize a free floor z below every agent's payoff
        n_agents = len(payoffs_flat)
        a = np.zeros((n_inc + 1 + n_agents, count + 1))
        a[:n_inc, :count] = inc
        a[n_inc, :count] = 1.0
        for i, u in enumerate(payoffs_flat):
            a[n_inc + 1 + i, :count] = -np.asarray(u, dtype=float)
            a[n_inc + 1 + i, count] = 1.0
        senses = (">=",) * n_inc + ("==",) + ("<=",) * n_agents
        rhs = np.zeros(n_inc + 1 + n_agents)
        rhs[n_inc] = 1.0
        c = np.zeros(count + 1)
        c[count] = 1.0
        lower = np.zeros(count + 1)
        lower[count] = -np.inf
        sol = solve_lp(linear_program(c, a, senses, rhs, lower=lower))
        if sol.status != OPTIMAL:
            raise NumericalError(f"CE LP ended with status {sol.status}")
        lam = sol.x[:count]

    lam = np.where(lam > 0.0, lam, 0.0)
    total = lam.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalError("CE LP returned a degenerate distribution")
    return lam / total


def correlated_eq_solve(game: MatrixGame, objective: str = UTILITARIAN) -> CorrelatedPolicy:
    """Correlated equilibrium optimizing the requested welfare objective."""
    payoffs = [game.payoff_flat(i) for i in range(game.num_agents)]
    lam = solve_ce_distribution(game.actions, payoffs, objective)
    return CorrelatedPolicy(probs=lam)


def ce_violations(actions, payoffs_flat, lam) -> tuple[float, list]:
    """Worst incentive violation and the per-constraint breakdown."""
    inc, labels = _incentive_rows(tuple(actions), payoffs_flat)
    lam = np.asarray(lam, dtype=float)
    values = inc @ lam if inc.shape[0] else np.zeros(0)
    worst = 0.0
    detail = []
    for (agent, a, alt), val in zip(labels, values):
        gap = max(0.0, -float(val))
        worst = max(worst, gap)
        detail.append((agent, a, alt, gap))
    return worst, detail


def ce_check(game: MatrixGame, policy, eps: float) -> CeCheckReport:
    """Evaluate every correlated-equilibrium incentive constraint."""
    if eps < 0:
        raise SpecError("eps must be nonnegative")
    lam = policy.probs if isinstance(policy, CorrelatedPolicy) else np.asarray(policy, float)
    if lam.size != game.joint_actions:
        raise SpecError("distribution length does not match the joint action count")
    payoffs = [game.payoff_flat(i) for i in range(game.num_agents)]
    worst, detail = ce_violations(game.actions, payoffs, lam)
    flagged = tuple(v for v in detail if v[3] > eps)
    return CeCheckReport(passed=worst <= eps, max_violation=worst, violations=flagged)


def support_enumeration_nash(game: MatrixGame) -> list[MixedProfile]:
    """All Nash equilibria of a small two-player game found by support
    enumeration (indifference systems filtered by best-response checks).
    Deduplicates at 1e-9 in the sup norm."""
    if game.num_agents != 2:
        raise SpecError("support enumeration covers two-player games only")
    k1, k2 = game.actions
    if max(k1, k2) > MAX_ENUM_ACTIONS:
        raise SpecError(f"support enumeration caps at {MAX_ENUM_ACTIONS} actions")
    a_mat, b_mat = game.payoffs
    found: list[tuple[np.ndarray, np.ndarray]] = []

    def supports(k):
        for size in range(1, k + 1):
            yield from itertools.combinations(range(k), size)

    def solve_indifference(payoff_cols: np.ndarray, own, other) -> np.ndarray | None:
        # unknowns: mixture over `own`, plus the opponent's common payoff
        rows = []
        rhs = []
        for j in other:
            row = np.zeros(len(own) + 1)
            row[: len(own)] = payoff_cols[np.ix_(own, [j])].ravel()
            row[-1] = -1.0
            rows.append(row)
            rhs.append(0.0)
        rows.append(np.concatenate([np.ones(len(own)), [0.0]]))
        rhs.append(1.0)
        m = np.stack(rows)
        r = np.asarray(rhs)
        sol, residual, rank, _ = np.linalg.lstsq(m, r, rcond=None)
        if not np.all(np.isfinite(sol)):
            return None
        if np.max(np.abs(m @ sol - r)) > 1e-9:
            return None
        mix = sol[:-1]
        if mix.min() < -1e-9:
            return None
        return np.where(mix > 0.0, mix, 0.0)

    for s1 in supports(k1):
        for s2 in supports(k2):
            x_part = solve_indifference(b_mat, s1, s2)
            if x_part is None:
                continue
            y_part = solve_indifference(a_mat.T, s2, s1)
            if y_part is None:
                continue
            x = np.zeros(k1)
            x[list(s1)] = x_part
            y = np.zeros(k2)
            y[list(s2)] = y_part
            x /= x.sum()
            y /= y.sum()
            profile = mixed_profile([x, y])
            report = epsilon_nash_check(game, profile, 1e-9)
            if not report.passed:
                continue
            if any(
                np.max(np.abs(x - px)) <= 1e-9 and np.max(np.abs(y - py)) <= 1e-9
                for px, py in found
            ):
                continue
            found.append((x, y))
    return [mixed_profile([x, y]) for x, y in found]
