import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcprob import ast as A
from rcprob.build import MarkovModel, Move
from rcprob.exact import (ExactChecker, UnsupportedError, check_AE,
                          check_property, check_state_formula, expected_reward,
                          prob_path)
from rcprob.props import parse_expression, ProbProperty, RewardsDecl

from conftest import make_srw
from oracles import (StubContext, brute_ae, dense_reach, dense_reach_reward,
                     explicit_dtmc_matrix, mdp_extremal_reach, parse_explicit,
                     random_dtmc, random_mdp, var_eq, var_in)


def chain(moves_spec, kind="dtmc"):
    """Tiny model builder: moves_spec[s] = [(action, [(prob, dst), ...])]."""
    n = len(moves_spec)
    moves = []
    for s, actions in enumerate(moves_spec):
        row = []
        for a, branches in actions:
            row.append(Move(a, tuple(
                (Fraction(str(p)) if isinstance(p, float) else Fraction(p), d)
                for p, d in branches)))
        moves.append(row)
    mm = MarkovModel(kind, ("x",), [(i,) for i in range(n)], moves,
                     [False] * n, [False] * n)
    mm.check_stochastic()
    return mm, StubContext(("x",))


def F(e):
    return A.Finally_(None, e)


def G(e):
    return A.Globally(None, e)


# --- state formulas -----------------------------------------------------------


def test_initial_state_formula(srw_mdp):
    closed, mm = srw_mdp
    sat = check_state_formula(mm, closed, parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck"))
    pc_i = closed.index["ctrl_ref.stm_ref.pc"]
    for i, st in enumerate(mm.states):
        assert sat[i] == (st[pc_i] == "Stuck")


def test_next_move_false_at_init(srw_mdp):
    closed, mm = srw_mdp
    # X(pc=Move) is false at the initial state: the successor is Move_entering
    is_in_move = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Move")
    sat = check_AE(mm, closed, "A", A.Next(is_in_move))
    assert not sat[mm.initial]


def test_true_everywhere(srw_small):
    closed, mm = srw_small
    sat = check_state_formula(mm, closed, A.Lit(True))
    assert sat.all()


def test_prob_bound_as_state_formula():
    mm, ctx = chain([
        [("a", [(0.3, 1), (0.7, 2)])],
        [("loop", [(1, 1)])],
        [("loop", [(1, 2)])],
    ])
    sat = check_state_formula(mm, ctx, A.ProbFormula(A.Bound(">=", A.Lit(Fraction(1, 4))),
                                                     None, F(var_eq("x", 1))))
    assert sat[0] and sat[1] and not sat[2]


# --- probability computation -----------------------------------------------------


def test_single_step_reachability():
    mm, ctx = chain([
        [("a", [(0.3, 1), (0.7, 2)])],
        [("loop", [(1, 1)])],
        [("loop", [(1, 2)])],
    ])
    values = prob_path(mm, ctx, F(var_eq("x", 1)))
    assert values[0] == pytest.approx(0.3, abs=1e-12)
    assert values[1] == 1.0 and values[2] == 0.0


def test_srw_stuck_probability_one(srw_default):
    closed, mm = srw_default
    stuck = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck")
    values = prob_path(mm, closed, F(stuck))
    assert values[mm.initial] == pytest.approx(1.0, abs=1e-6)


def test_small_instance_matches_export_oracle(srw_small):
    closed, mm = srw_small
    target_expr = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck "
        "/\\ SRWMod::SRWRP::x != 0")
    values = prob_path(mm, closed, F(target_expr), tol=1e-13)
    parsed = parse_explicit(mm.export_text())
    mat = explicit_dtmc_matrix(parsed)
    pc = [st["ctrl_ref.stm_ref.pc"] for st in parsed["states"]]
    x = [st["SRWRP.x"] for st in parsed["states"]]
    target = np.array([p == "Stuck" and v != "0" for p, v in zip(pc, x)])
    oracle = dense_reach(mat, target)
    assert np.max(np.abs(values - oracle)) < 1e-9


def test_bounded_zero_steps():
    mm, ctx = chain([
        [("a", [(0.5, 1), (0.5, 0)])],
        [("loop", [(1, 1)])],
    ])
    target = var_eq("x", 1)
    values = prob_path(mm, ctx, A.Finally_(A.Bound("<=", A.Lit(0)), target))
    assert values[0] == 0.0 and values[1] == 1.0


def brute_force_bounded_reach(mm, target, k):
    """Exhaustive enumeration of all paths of length <= k."""
    n = mm.num_states
    out = np.zeros(n)
    for s0 in range(n):
        total = Fraction(0)
        stack = [(s0, Fraction(1), 0)]
        while stack:
            s, p, depth = stack.pop()
            if target[s]:
                total += p
                continue
            if depth == k:
                continue
            for d, q in mm.row(s).items():
                stack.append((d, p * q, depth + 1))
        out[s0] = float(total)
    return out


def test_bounded_matches_path_enumeration(srw_model, srw_spec):
    closed, mm = make_srw(srw_model, srw_spec, maxdist=2, maxsteps=2)
    stuck = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck")
    checker = ExactChecker(mm, closed)
    target = checker.sat(stuck)
    values = prob_path(mm, closed, A.Finally_(A.Bound("<=", A.Lit(10)), stuck))
    brute = brute_force_bounded_reach(mm, target, 10)
    assert np.max(np.abs(values - brute)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 8))
def test_bounded_globally_duality(seed, k):
    rng = random.Random(seed)
    mm = random_dtmc(rng, rng.randint(3, 12))
    ctx = StubContext(("x",))
    phi = var_in("x", [0, 2])
    g = prob_path(mm, ctx, A.Globally(A.Bound("<=", A.Lit(k)), phi))
    f = prob_path(mm, ctx, A.Finally_(A.Bound("<=", A.Lit(k)),
                                      A.Unary("not", phi)))
    assert np.max(np.abs(g - (1.0 - f))) < 1e-12


def test_unbounded_duality_dtmc():
    rng = random.Random(7)
    for _ in range(25):
        mm = random_dtmc(rng, rng.randint(3, 30))
        ctx = StubContext(("x",))
        phi = var_in("x", [0, 1, 4])
        g = prob_path(mm, ctx, G(phi), tol=1e-13)
        f = prob_path(mm, ctx, F(A.Unary("not", phi)), tol=1e-13)
        assert np.max(np.abs(g + f - 1.0)) < 1e-9


def test_unbounded_duality_mdp():
    rng = random.Random(11)
    for _ in range(15):
        mm = random_mdp(rng, rng.randint(3, 12))
        ctx = StubContext(("x",))
        phi = var_in("x", [0, 1])
        gmin = prob_path(mm, ctx, G(phi), mode="min", tol=1e-13)
        fmax = prob_path(mm, ctx, F(A.Unary("not", phi)), mode="max", tol=1e-13)
        assert np.max(np.abs(gmin - (1.0 - fmax))) < 1e-9


def test_monotone_in_bound(srw_small):
    closed, mm = srw_small
    stuck = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck")
    prev = np.zeros(mm.num_states)
    for k in (0, 2, 5, 10, 25, 60):
        cur = prob_path(mm, closed, A.Finally_(A.Bound("<=", A.Lit(k)), stuck))
        assert (cur >= prev - 1e-12).all()
        prev = cur
    unbounded = prob_path(mm, closed, F(stuck), tol=1e-10)
    assert (prev <= unbounded + 1e-6).all()


def test_value_iteration_matches_dense_solve():
    rng = random.Random(123)
    for trial in range(120):
        mm = random_dtmc(rng, rng.randint(3, 60))
        ctx = StubContext(("x",))
        target_vals = rng.sample(range(mm.num_states), max(1, mm.num_states // 6))
        phi = var_in("x", target_vals)
        values = prob_path(mm, ctx, F(phi), tol=1e-13)
        mat = explicit_dtmc_matrix(parse_explicit(mm.export_text()))
        target = np.zeros(mm.num_states, dtype=bool)
        target[target_vals] = True
        oracle = dense_reach(mat, target)
        assert np.max(np.abs(values - oracle)) < 1e-9, trial


def test_mdp_extrema_match_adversary_enumeration():
    rng = random.Random(321)
    for trial in range(40):
        mm = random_mdp(rng, rng.randint(3, 9), max_nondet_states=6)
        ctx = StubContext(("x",))
        target_vals = rng.sample(range(mm.num_states), max(1, mm.num_states // 4))
        phi = var_in("x", target_vals)
        target = np.zeros(mm.num_states, dtype=bool)
        target[target_vals] = True
        for mode in ("min", "max"):
            engine = prob_path(mm, ctx, F(phi), mode=mode, tol=1e-13)
            oracle = mdp_extremal_reach(mm, target, mode)
            assert np.max(np.abs(engine - oracle)) < 1e-9, (trial, mode)


def test_weak_until_release_identities():
    rng = random.Random(5)
    for _ in range(15):
        mm = random_dtmc(rng, rng.randint(3, 20))
        ctx = StubContext(("x",))
        p = var_in("x", [0, 1, 5])
        q = var_eq("x", 2)
        w = prob_path(mm, ctx, A.WeakUntil(p, None, q), tol=1e-13)
        u = prob_path(mm, ctx, A.Until(p, None, q), tol=1e-13)
        g = prob_path(mm, ctx, G(p), tol=1e-13)
        # W >= max(U, G) and W <= U + G
        assert (w >= np.maximum(u, g) - 1e-9).all()
        assert (w <= u + g + 1e-9).all()
        r = prob_path(mm, ctx, A.Release(p, None, q), tol=1e-13)
        dual = prob_path(mm, ctx, A.Until(A.Unary("not", p), None,
                                          A.Unary("not", q)), tol=1e-13)
        assert np.max(np.abs(r - (1.0 - dual))) < 1e-9


def test_nested_temporal_under_p_rejected(srw_small):
    closed, mm = srw_small
    with pytest.raises(UnsupportedError, match="nested"):
        prob_path(mm, closed, F(G(A.Lit(True))))


def test_plain_query_on_nondeterministic_mdp_rejected():
    mm, ctx = chain([
        [("a", [(1, 1)]), ("b", [(1, 2)])],
        [("loop", [(1, 1)])],
        [("loop", [(1, 2)])],
    ], kind="mdp")
    from rcprob.exact import CheckError
    with pytest.raises(CheckError, match="min =\\? or max =\\?"):
        prob_path(mm, ctx, F(var_eq("x", 1)), mode="exact")


# --- A/E checking -------------------------------------------------------------------


def test_ae_fragment_against_lasso_oracle():
    rng = random.Random(42)
    shapes = ["F", "G", "GF", "FG", "X"]
    for trial in range(60):
        mm = random_mdp(rng, rng.randint(2, 10), max_nondet_states=4)
        ctx = StubContext(("x",))
        n = mm.num_states
        p_vals = rng.sample(range(n), max(1, n // 3))
        q_vals = rng.sample(range(n), max(1, n // 3))
        p = np.zeros(n, dtype=bool)
        p[p_vals] = True
        q = np.zeros(n, dtype=bool)
        q[q_vals] = True
        sats = {"p": p, "q": q}
        pe, qe = var_in("x", p_vals), var_in("x", q_vals)
        formulas = {
            ("F", "p"): F(pe),
            ("G", "p"): G(pe),
            ("U", "p", "q"): A.Until(pe, None, qe),
            ("GF", "p"): G(F(pe)),
            ("FG", "p"): F(G(pe)),
            ("X", "p"): A.Next(pe),
            ("GF=>GF", "p", "q"): A.Binary("=>", G(F(pe)), G(F(qe))),
            ("FG=>GF", "p", "q"): A.Binary("=>", F(G(pe)), G(F(qe))),
            ("G=>F", "p", "q"): G(A.Binary("=>", pe, F(qe))),
        }
        for shape, formula in formulas.items():
            for quant in ("A", "E"):
                engine = check_AE(mm, ctx, quant, formula)
                oracle = brute_ae(mm, quant, shape, sats)
                assert (engine == oracle).all(), (trial, quant, shape)


def test_ae_one_cycle_graph():
    # single absorbing state with a self-loop where phi holds
    mm, ctx = chain([
        [("a", [(1, 1)])],
        [("loop", [(1, 1)])],
    ])
    phi = var_eq("x", 1)
    assert check_AE(mm, ctx, "E", F(G(phi)))[0]
    assert not check_AE(mm, ctx, "A", G(F(A.Unary("not", phi))))[0]


def test_ae_bounded():
    mm, ctx = chain([
        [("a", [(1, 1)])],
        [("b", [(1, 2)])],
        [("loop", [(1, 2)])],
    ])
    target = var_eq("x", 2)
    assert not check_AE(mm, ctx, "A", A.Finally_(A.Bound("<=", A.Lit(1)), target))[0]
    assert check_AE(mm, ctx, "A", A.Finally_(A.Bound("<=", A.Lit(2)), target))[0]


def test_ae_unsupported_shape(srw_small):
    closed, mm = srw_small
    with pytest.raises(UnsupportedError, match="fragment"):
        check_AE(mm, closed, "A", G(F(G(A.Lit(True)))))


# --- rewards ------------------------------------------------------------------------


def geometric_chain(p):
    mm, ctx = chain([
        [("a", [(p, 1), (1 - p, 0)])],
        [("loop", [(1, 1)])],
    ])
    mm.rewards["R"] = __import__("rcprob.build", fromlist=["RewardStructure"]) \
        .RewardStructure("R", [Fraction(1), Fraction(0)], {})
    return mm, ctx


def test_geometric_expected_reward():
    for p, expected in ((0.5, 2.0), (0.25, 4.0)):
        mm, ctx = geometric_chain(Fraction(p))
        values = expected_reward(mm, ctx, "R", A.Reachable(var_eq("x", 1)), tol=1e-13)
        assert values[0] == pytest.approx(expected, abs=1e-9)


def test_reward_zero_structure(srw_small):
    closed, mm = srw_small
    from rcprob.props import parse_spec
    decl = parse_spec("rewards R_zero = false : 1; endrewards").statements[0]
    from rcprob.build import attach_rewards
    attach_rewards(mm, decl, closed)
    stuck = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck")
    values = expected_reward(mm, closed, "R_zero", A.Reachable(stuck))
    reach = prob_path(mm, closed, F(stuck), tol=1e-12)
    assert (values[reach > 1 - 1e-9] == 0).all()


def test_unreachable_target_infinite_reward():
    mm, ctx = chain([
        [("a", [(1, 0)])],
        [("loop", [(1, 1)])],
    ])
    from rcprob.build import RewardStructure
    mm.rewards["R"] = RewardStructure("R", [Fraction(1), Fraction(0)], {})
    values = expected_reward(mm, ctx, "R", A.Reachable(var_eq("x", 1)))
    assert values[0] == np.inf


def test_reward_matches_dense_solve(srw_default, srw_spec):
    closed, mm = srw_default
    decl = srw_spec.find(RewardsDecl, "R_origins")
    from rcprob.build import attach_rewards
    attach_rewards(mm, decl, closed)
    target_expr = parse_expression(
        "SRWMod::ctrl_ref::stm_ref is in SRWMod::ctrl_ref::stm_ref::Stuck "
        "/\\ SRWMod::SRWRP::x != 0")
    values = expected_reward(mm, closed, "R_origins", A.Reachable(target_expr),
                             tol=1e-13)
    parsed = parse_explicit(mm.export_text())
    mat = explicit_dtmc_matrix(parsed)
    checker = ExactChecker(mm, closed)
    target = checker.sat(target_expr)
    state_r, move_r = checker._reward_arrays("R_origins")
    step = checker._dtmc_reward_base(state_r, move_r)
    oracle = dense_reach_reward(mat, target, step)
    finite = ~np.isinf(oracle)
    assert np.max(np.abs(values[finite] - oracle[finite])) < 1e-7


def test_cumulative_reward():
    mm, ctx = chain([
        [("a", [(1, 1)])],
        [("b", [(1, 0)])],
    ])
    from rcprob.build import RewardStructure
    mm.rewards["R"] = RewardStructure("R", [Fraction(2), Fraction(3)], {})
    values = expected_reward(mm, ctx, "R", A.Cumul(A.Lit(4)))
    assert values[0] == pytest.approx(2 + 3 + 2 + 3)
    assert values[1] == pytest.approx(3 + 2 + 3 + 2)


def test_total_reward():
    mm, ctx = chain([
        [("a", [(0.5, 1), (0.5, 0)])],
        [("loop", [(1, 1)])],
    ])
    from rcprob.build import RewardStructure
    # reward only in the transient state: total = expected visits of s0 = 2
    mm.rewards["R"] = RewardStructure("R", [Fraction(1), Fraction(0)], {})
    values = expected_reward(mm, ctx, "R", A.TotalReward(), tol=1e-13)
    assert values[0] == pytest.approx(2.0, abs=1e-8)
    # positive reward in the absorbing state diverges
    mm.rewards["R2"] = RewardStructure("R2", [Fraction(0), Fraction(1)], {})
    values = expected_reward(mm, ctx, "R2", A.TotalReward())
    assert values[0] == np.inf and values[1] == np.inf


def test_ltl_reward_restricted():
    mm, ctx = geometric_chain(Fraction(1, 2))
    values = expected_reward(mm, ctx, "R", A.LTLReward(F(var_eq("x", 1))), tol=1e-13)
    assert values[0] == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(UnsupportedError, match="Finally"):
        expected_reward(mm, ctx, "R", A.LTLReward(G(var_eq("x", 1))))


# --- property-level checks -----------------------------------------------------------


def test_check_property_deadlock_free(srw_default, srw_spec):
    closed, mm = srw_default
    prop = srw_spec.find(ProbProperty, "P_deadlock_free")
    result = check_property(mm, closed, prop, "cfg")
    assert result.verdict is True
    assert result.engine == "graph"


def test_check_property_query(srw_default, srw_spec):
    closed, mm = srw_default
    prop = srw_spec.find(ProbProperty, "P_stuck")
    result = check_property(mm, closed, prop, "cfg")
    assert result.verdict == pytest.approx(1.0, abs=1e-6)
    assert result.mode == "exact"


def test_forall_globally_trivial(srw_small):
    closed, mm = srw_small
    prop = ProbProperty("P", parse_expression("Forall [Globally true]"))
    result = check_property(mm, closed, prop)
    assert result.verdict is True


def test_min_max_collapse_on_dtmc(srw_small):
    closed, mm = srw_small
    stuck_text = ("Prob min =? of [Finally SRWMod::ctrl_ref::stm_ref is in "
                  "SRWMod::ctrl_ref::stm_ref::Stuck]")
    prop = ProbProperty("P", parse_expression(stuck_text))
    result = check_property(mm, closed, prop)
    assert result.mode == "exact"
    assert result.verdict == pytest.approx(1.0, abs=1e-6)


def test_mdp_bound_direction_uses_worst_adversary():
    # s0: action a reaches the goal surely, action b loops forever
    mm, ctx = chain([
        [("a", [(1, 1)]), ("b", [(1, 0)])],
        [("loop", [(1, 1)])],
    ], kind="mdp")
    goal = var_eq("x", 1)
    # >= bounds quantify over the minimum (which is 0 here)
    sat = check_state_formula(mm, ctx, A.ProbFormula(A.Bound(">=", A.Lit(Fraction(1, 2))),
                                                     None, F(goal)))
    assert not sat[0]
    # <= bounds quantify over the maximum (which is 1 here)
    sat = check_state_formula(mm, ctx, A.ProbFormula(A.Bound("<=", A.Lit(Fraction(1, 2))),
                                                     None, F(goal)))
    assert not sat[0]


def test_mdp_reward_extremes():
    from rcprob.build import RewardStructure
    mm, ctx = chain([
        [("a", [(1, 1)]), ("b", [(1, 0)])],
        [("loop", [(1, 1)])],
    ], kind="mdp")
    mm.rewards["R"] = RewardStructure("R", [Fraction(1), Fraction(0)], {})
    goal = var_eq("x", 1)
    rmin = expected_reward(mm, ctx, "R", A.Reachable(goal), mode="min", tol=1e-12)
    assert rmin[0] == pytest.approx(1.0, abs=1e-9)
    rmax = expected_reward(mm, ctx, "R", A.Reachable(goal), mode="max")
    assert rmax[0] == np.inf  # the adversary can loop forever


def test_bounded_weak_until_and_release_ae():
    # 0 -> 1 -> 2(absorbing); p holds on {0,1}, q on {2}
    mm, ctx = chain([
        [("a", [(1, 1)])],
        [("b", [(1, 2)])],
        [("loop", [(1, 2)])],
    ])
    p = var_in("x", [0, 1])
    q = var_eq("x", 2)
    # p W<=1 q: within one step we neither reach q nor fail p -> still fine,
    # the weak form allows "globally p" over the horizon
    assert check_AE(mm, ctx, "A", A.WeakUntil(p, A.Bound("<=", A.Lit(1)), q))[0]
    # p U<=1 q fails from state 0 (q needs two steps)
    assert not check_AE(mm, ctx, "A", A.Until(p, A.Bound("<=", A.Lit(1)), q))[0]
    assert check_AE(mm, ctx, "A", A.Until(p, A.Bound("<=", A.Lit(2)), q))[0]
    # q R p: p must hold up to and including the first q-state; here p never
    # fails before q, but q and p never overlap, so release demands G p on
    # the q-free prefix; state 2 breaks p exactly when q arrives
    rel = check_AE(mm, ctx, "A", A.Release(q, None, p))
    assert not rel[0]
    rel2 = check_AE(mm, ctx, "A", A.Release(q, None, var_in("x", [0, 1, 2])))
    assert rel2[0]


def test_qualitative_zero_one_exactness():
    rng = random.Random(77)
    for _ in range(30):
        mm = random_dtmc(rng, rng.randint(4, 40))
        ctx = StubContext(("x",))
        targets = rng.sample(range(mm.num_states), max(1, mm.num_states // 5))
        phi = var_in("x", targets)
        values = prob_path(mm, ctx, F(phi), tol=1e-10)
        sat = np.zeros(mm.num_states, dtype=bool)
        sat[targets] = True
        assert (values[sat] == 1.0).all()
        # states that cannot reach the target must be exactly zero
        mat = explicit_dtmc_matrix(parse_explicit(mm.export_text()))
        can = sat.copy()
        changed = True
        while changed:
            changed = False
            for s in range(mm.num_states):
                if not can[s] and (mat[s][can] > 0).any():
                    can[s] = True
                    changed = True
        assert (values[~can] == 0.0).all()
        assert (values >= 0).all() and (values <= 1).all()


def test_formula_and_label_refs_in_checking(srw_small):
    closed, mm = srw_small
    # l_stuck/l_origin come from the fixture property file; formulas inline
    sat = check_state_formula(mm, closed, parse_expression("#l_stuck /\\ not #l_origin"))
    pc_i = closed.index["ctrl_ref.stm_ref.pc"]
    x_i = closed.index["SRWRP.x"]
    for i, st in enumerate(mm.states):
        assert sat[i] == (st[pc_i] == "Stuck" and st[x_i] != 0)


def test_formula_ref_resolution(srw_model):
    from rcprob.build import instantiate, build_markov
    from rcprob.props import parse_spec
    spec = parse_spec("""
    formula f_origin = SRWMod::SRWRP::x == 0
    defs D:
      pfunction Plus(v, maxv) = { return (if ``v < ``maxv then ``v + 1 else ``v end) }
      pfunction Minus(v, minv) = { return (if ``v > ``minv then ``v - 1 else ``v end) }
      pfunction Update(v, maxv, origin) = { return ``v + 1 }
    """)
    from rcprob.props import DefinitionsDecl
    closed = instantiate(srw_model, {"MaxDist": 1, "MaxSteps": 1, "Pl": Fraction(1, 2)},
                         spec.find(DefinitionsDecl, "D"), None, "dtmc", spec)
    mm = build_markov(closed)
    sat = check_state_formula(mm, closed, parse_expression("`f_origin \\/ false"))
    x_i = closed.index["SRWRP.x"]
    for i, st in enumerate(mm.states):
        assert sat[i] == (st[x_i] == 0)


def test_prob_path_bounded_entrypoint():
    from rcprob.exact import prob_path_bounded, CheckError
    mm, ctx = chain([
        [("a", [(0.5, 1), (0.5, 0)])],
        [("loop", [(1, 1)])],
    ])
    goal = var_eq("x", 1)
    values = prob_path_bounded(mm, ctx, A.Finally_(A.Bound("<=", A.Lit(2)), goal))
    assert values[0] == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(CheckError, match="step bound"):
        prob_path_bounded(mm, ctx, F(goal))


def test_mdp_until_matches_adversary_enumeration():
    rng = random.Random(999)
    for trial in range(25):
        mm = random_mdp(rng, rng.randint(3, 8), max_nondet_states=5)
        ctx = StubContext(("x",))
        n = mm.num_states
        hold = rng.sample(range(n), max(2, 2 * n // 3))
        goal = rng.sample(range(n), max(1, n // 4))
        pe, qe = var_in("x", hold), var_in("x", goal)
        hold_a = np.zeros(n, dtype=bool)
        hold_a[hold] = True
        goal_a = np.zeros(n, dtype=bool)
        goal_a[goal] = True
        for mode in ("min", "max"):
            engine = prob_path(mm, ctx, A.Until(pe, None, qe), mode=mode, tol=1e-13)
            best = None
            for combo in itertools.product(*[range(len(mm.moves[s])) for s in range(n)]):
                mat = np.zeros((n, n))
                for s in range(n):
                    for p, d in mm.moves[s][combo[s]].branches:
                        mat[s, d] += float(p)
                # dense until on the induced chain: zero out escapes
                vals = np.zeros(n)
                vals[goal_a] = 1.0
                run = hold_a & ~goal_a
                # iterate to convergence on the small chain
                for _ in range(4000):
                    new = np.where(goal_a, 1.0, np.where(run, mat.dot(vals), 0.0))
                    if np.max(np.abs(new - vals)) < 1e-14:
                        vals = new
                        break
                    vals = new
                best = vals if best is None else (
                    np.maximum(best, vals) if mode == "max" else np.minimum(best, vals))
            assert np.max(np.abs(engine - best)) < 1e-7, (trial, mode)
