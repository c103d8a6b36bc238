"""Equilibrium solvers vs independent oracles: closed-form 2x2 Nash,
CE polytope vertex enumeration, and primal-dual gap bounds."""

import itertools

import numpy as np
import pytest

from gtmarl.equilibrium import (
    EGALITARIAN,
    PLUTOCRATIC,
    UTILITARIAN,
    best_response,
    ce_check,
    ce_violations,
    correlated_eq_solve,
    epsilon_nash_check,
    minimax_solve,
    solve_ce_distribution,
    stage_minimax,
    support_enumeration_nash,
)
from gtmarl.errors import SpecError
from gtmarl.games import build_matrix_game, classic_game, mixed_profile, random_game


# --- independent oracles ------------------------------------------------------

def nash_2x2_oracle(u1, u2):
    """All Nash equilibria of a 2x2 game by direct case analysis: the four
    pure cells plus the interior indifference point when it exists."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    found = []
    for a in range(2):
        for b in range(2):
            if u1[a, b] >= u1[1 - a, b] - 1e-12 and u2[a, b] >= u2[a, 1 - b] - 1e-12:
                x = np.eye(2)[a]
                y = np.eye(2)[b]
                found.append((x, y))
    # interior mixed: opponent mixture makes each player indifferent
    dy = (u1[0, 0] - u1[1, 0]) + (u1[1, 1] - u1[0, 1])
    dx = (u2[0, 0] - u2[0, 1]) + (u2[1, 1] - u2[1, 0])
    if abs(dx) > 1e-12 and abs(dy) > 1e-12:
        q = (u1[1, 1] - u1[0, 1]) / dy  # P(col plays 0)
        p = (u2[1, 1] - u2[1, 0]) / dx  # P(row plays 0)
        if 1e-12 < p < 1 - 1e-12 and 1e-12 < q < 1 - 1e-12:
            found.append((np.array([p, 1 - p]), np.array([q, 1 - q])))
    return found


def ce_incentive_rows_2x2(u1, u2):
    """CE incentive constraints for a 2x2 game over flat lambda order
    (a1, a2) -> 2*a1 + a2. Row r says: expected gain of following the
    recommendation over one deviation map, must be >= 0."""
    rows = []
    for a in range(2):  # agent 1 recommended a, deviates to 1-a
        row = np.zeros(4)
        for b in range(2):
            row[2 * a + b] = u1[a, b] - u1[1 - a, b]
        rows.append(row)
    for b in range(2):  # agent 2 recommended b, deviates to 1-b
        row = np.zeros(4)
        for a in range(2):
            row[2 * a + b] = u2[a, b] - u2[a, 1 - b]
        rows.append(row)
    return np.asarray(rows)


def ce_polytope_vertices_2x2(u1, u2):
    """Vertices of the CE polytope: active-set enumeration of the simplex
    facets (lambda_j = 0) and incentive facets, three at a time, together
    with the normalization equality."""
    incentives = ce_incentive_rows_2x2(u1, u2)
    facets = [np.eye(4)[j] for j in range(4)] + [incentives[r] for r in range(4)]
    vertices = []
    for combo in itertools.combinations(range(8), 3):
        a_sq = np.vstack([np.ones(4)] + [facets[c] for c in combo])
        b = np.array([1.0, 0.0, 0.0, 0.0])
        if abs(np.linalg.det(a_sq)) < 1e-10:
            continue
        lam = np.linalg.solve(a_sq, b)
        if lam.min() < -1e-9:
            continue
        if np.any(incentives @ lam < -1e-9):
            continue
        if not any(np.allclose(lam, v, atol=1e-9) for v in vertices):
            vertices.append(lam)
    return vertices


def utilitarian_ce_oracle_2x2(u1, u2):
    vertices = ce_polytope_vertices_2x2(u1, u2)
    welfare = u1.reshape(-1) + u2.reshape(-1)
    return max(float(welfare @ v) for v in vertices)


# --- minimax ------------------------------------------------------------------

class TestMinimax:
    def test_fixed_game_frozen_values(self):
        # saddle-free 2x2: row mixes (1/4, 3/4), value 1.5
        value, x, y = stage_minimax([[3.0, 0.0], [1.0, 2.0]])
        assert value == pytest.approx(1.5, abs=1e-9)
        assert x == pytest.approx([0.25, 0.75], abs=1e-9)
        assert y == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_matching_pennies(self):
        sol = minimax_solve(classic_game("matching_pennies"))
        assert sol.value == pytest.approx(0.0, abs=1e-9)
        assert sol.strategies.mixtures[0] == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_rps_uniform(self):
        sol = minimax_solve(classic_game("rps"))
        assert sol.value == pytest.approx(0.0, abs=1e-9)
        for mix in sol.strategies.mixtures:
            assert mix == pytest.approx([1 / 3] * 3, abs=1e-9)

    def test_saddle_point_game(self):
        # strictly dominant row: pure saddle at (row 0, col 1), value 2
        value, x, y = stage_minimax([[3.0, 2.0], [1.0, 0.0]])
        assert value == pytest.approx(2.0, abs=1e-9)
        assert x == pytest.approx([1.0, 0.0], abs=1e-9)

    def test_primal_dual_gap_random(self):
        rng = np.random.default_rng(2024)
        for _ in range(40):
            k = int(rng.integers(2, 4))
            a = rng.uniform(-1, 1, size=(k, k))
            value, x, y = stage_minimax(a)
            guaranteed = float(np.min(x @ a))
            exposed = float(np.max(a @ y))
            assert exposed - guaranteed <= 1e-8
            assert guaranteed - 1e-8 <= value <= exposed + 1e-8

    def test_rejects_general_sum(self):
        with pytest.raises(SpecError):
            minimax_solve(classic_game("chicken"))

    def test_shift_invariance(self):
        a = np.array([[3.0, 0.0], [1.0, 2.0]])
        v0, x0, _ = stage_minimax(a)
        v1, x1, _ = stage_minimax(a - 10.0)
        assert v1 == pytest.approx(v0 - 10.0, abs=1e-9)
        assert x1 == pytest.approx(x0, abs=1e-9)


# --- Nash ----------------------------------------------------------------------

class TestSupportEnumeration:
    def test_matching_pennies_unique_mixed(self):
        eqs = support_enumeration_nash(classic_game("matching_pennies"))
        assert len(eqs) == 1
        assert eqs[0].mixtures[0] == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_pd_unique_pure(self):
        eqs = support_enumeration_nash(classic_game("prisoners_dilemma"))
        assert len(eqs) == 1
        assert eqs[0].mixtures[0] == pytest.approx([0.0, 1.0], abs=0)
        assert eqs[0].mixtures[1] == pytest.approx([0.0, 1.0], abs=0)

    def test_chicken_three_equilibria(self):
        eqs = support_enumeration_nash(classic_game("chicken"))
        assert len(eqs) == 3
        mixed = [e for e in eqs if all(m.min() > 1e-9 for m in e.mixtures)]
        assert len(mixed) == 1
        assert mixed[0].mixtures[0] == pytest.approx([2 / 3, 1 / 3], abs=1e-9)
        assert mixed[0].mixtures[1] == pytest.approx([2 / 3, 1 / 3], abs=1e-9)

    def test_matches_closed_form_oracle_on_random_games(self):
        rng = np.random.default_rng(55)
        for _ in range(30):
            g = random_game(int(rng.integers(1 << 30)), (2, 2))
            mine = support_enumeration_nash(g)
            oracle = nash_2x2_oracle(g.payoffs[0], g.payoffs[1])
            # every oracle equilibrium appears in the returned list
            for x, y in oracle:
                assert any(
                    np.allclose(e.mixtures[0], x, atol=1e-7)
                    and np.allclose(e.mixtures[1], y, atol=1e-7)
                    for e in mine
                )
            # and everything returned really is an equilibrium
            for e in mine:
                assert epsilon_nash_check(g, e, 1e-8).passed

    def test_action_cap(self):
        g = random_game(0, (5, 2))
        with pytest.raises(SpecError):
            support_enumeration_nash(g)

    def test_best_response_tie_goes_low(self):
        g = build_matrix_game((2, 2), [[1.0, 1.0, 1.0, 1.0], [0, 0, 0, 0]])
        action, value = best_response(g, mixed_profile([[0.5, 0.5], [0.5, 0.5]]), 0)
        assert action == 0
        assert value == pytest.approx(1.0)


# --- correlated equilibria -------------------------------------------------------

class TestCorrelatedEquilibria:
    def test_chicken_utilitarian_frozen(self):
        g = classic_game("chicken")
        policy = correlated_eq_solve(g, UTILITARIAN)
        assert policy.probs == pytest.approx([0.5, 0.25, 0.25, 0.0], abs=1e-9)
        welfare = float(policy.probs @ (g.payoff_flat(0) + g.payoff_flat(1)))
        assert welfare == pytest.approx(10.5, abs=1e-6)
        oracle = utilitarian_ce_oracle_2x2(g.payoffs[0], g.payoffs[1])
        assert welfare == pytest.approx(oracle, abs=1e-9)

    def test_pd_utilitarian_is_dd_point_mass(self):
        g = classic_game("prisoners_dilemma")
        policy = correlated_eq_solve(g, UTILITARIAN)
        assert policy.probs == pytest.approx([0.0, 0.0, 0.0, 1.0], abs=0)
        welfare = float(policy.probs @ (g.payoff_flat(0) + g.payoff_flat(1)))
        assert welfare == 2.0

    def test_utilitarian_matches_vertex_oracle_random(self):
        rng = np.random.default_rng(321)
        for _ in range(25):
            g = random_game(int(rng.integers(1 << 30)), (2, 2))
            policy = correlated_eq_solve(g, UTILITARIAN)
            welfare = float(policy.probs @ (g.payoff_flat(0) + g.payoff_flat(1)))
            oracle = utilitarian_ce_oracle_2x2(g.payoffs[0], g.payoffs[1])
            assert welfare == pytest.approx(oracle, abs=1e-7)
            assert ce_check(g, policy, 1e-9).passed

    def test_egalitarian_chicken(self):
        g = classic_game("chicken")
        policy = correlated_eq_solve(g, EGALITARIAN)
        per_agent = [float(policy.probs @ g.payoff_flat(i)) for i in range(2)]
        assert min(per_agent) == pytest.approx(5.25, abs=1e-6)
        assert ce_check(g, policy, 1e-9).passed

    def test_egalitarian_battle_of_sexes(self):
        g = build_matrix_game((2, 2), [[3, 0, 0, 2], [2, 0, 0, 3]])
        policy = correlated_eq_solve(g, EGALITARIAN)
        per_agent = [float(policy.probs @ g.payoff_flat(i)) for i in range(2)]
        assert min(per_agent) == pytest.approx(2.5, abs=1e-6)
        assert policy.probs == pytest.approx([0.5, 0.0, 0.0, 0.5], abs=1e-7)

    def test_plutocratic_battle_of_sexes(self):
        g = build_matrix_game((2, 2), [[3, 0, 0, 2], [2, 0, 0, 3]])
        policy = correlated_eq_solve(g, PLUTOCRATIC)
        best = max(float(policy.probs @ g.payoff_flat(i)) for i in range(2))
        assert best == pytest.approx(3.0, abs=1e-6)
        assert ce_check(g, policy, 1e-9).passed

    def test_plutocratic_chicken(self):
        g = classic_game("chicken")
        policy = correlated_eq_solve(g, PLUTOCRATIC)
        best = max(float(policy.probs @ g.payoff_flat(i)) for i in range(2))
        assert best == pytest.approx(7.0, abs=1e-6)

    def test_nash_subset_of_ce_random(self):
        rng = np.random.default_rng(777)
        for _ in range(50):
            g = random_game(int(rng.integers(1 << 30)), (2, 2))
            for x, y in nash_2x2_oracle(g.payoffs[0], g.payoffs[1]):
                product = np.outer(x, y).reshape(-1)
                assert ce_check(g, product, 1e-8).passed

    def test_point_mass_violation_magnitude(self):
        # telling both chicken drivers to cooperate invites a unit deviation
        g = classic_game("chicken")
        report = ce_check(g, np.array([1.0, 0.0, 0.0, 0.0]), 1e-9)
        assert not report.passed
        assert report.max_violation == pytest.approx(1.0, abs=1e-12)

    def test_unknown_objective(self):
        with pytest.raises(SpecError):
            correlated_eq_solve(classic_game("chicken"), "dictatorial")

    def test_ce_violations_raw_interface(self):
        g = classic_game("prisoners_dilemma")
        worst, detail = ce_violations(
            g.actions, [g.payoff_flat(0), g.payoff_flat(1)], np.array([1.0, 0, 0, 0])
        )
        # both players gain 2 by defecting from enforced (C, C)
        assert worst == pytest.approx(2.0, abs=1e-12)
        assert len(detail) > 0

    def test_three_agent_ce(self):
        g = random_game(12, (2, 2, 2))
        policy = correlated_eq_solve(g, UTILITARIAN)
        assert policy.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert ce_check(g, policy, 1e-9).passed
