"""Exact property checking over explicit Markov models.

Probability operators run numeric value iteration after qualitative
prob-0/prob-1 graph precomputation; A/E path quantifiers run pure graph
analysis (fixpoints and strongly connected components) over the
positive-probability edge relation of the deadlock-completed model; reward
operators combine reachability analysis with value iteration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import ast as A
from . import props as P
from .build import ClosedModel, MarkovModel, attach_rewards

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10 ** 6

AE_FRAGMENT = ("X, U, F, G with state operands (optionally bounded), GF, FG, "
               "GF=>GF, FG=>GF, and G(p => F q)")


class UnsupportedError(ValueError):
    pass


class CheckError(ValueError):
    pass


@dataclass
class CheckResult:
    prop: str
    config: str
    verdict: object  # bool | float | the string "inf"
    mode: str  # exact | minOverAdversaries | maxOverAdversaries
    engine: str  # numeric | graph
    iterations: int = 0
    wall_time: float = 0.0

    def verdict_json(self):
        if isinstance(self.verdict, bool):
            return self.verdict
        if self.verdict == math.inf:
            return "inf"
        return self.verdict


def _is_state_expr(e: A.Expr) -> bool:
    for node in A.walk(e):
        if isinstance(node, A.PATH_NODES + A.REWARD_PATH_NODES):
            return False
    return True


class ExactChecker:
    def __init__(self, mm: MarkovModel, closed: ClosedModel,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
        self.mm = mm
        self.closed = closed
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0
        self.engine = "graph"
        self.n = mm.num_states
        self._sat_cache: dict[int, np.ndarray] = {}
        self._succ = None
        self._pred = None
        self._dtmc_csr = None
        self._mdp_arrays = None
        self._deterministic = all(len(row) <= 1 for row in mm.moves)

    # --- graph structure -------------------------------------------------

    def succ(self) -> list[list[int]]:
        if self._succ is None:
            out = []
            for row in self.mm.moves:
                dests = set()
                for mv in row:
                    for p, d in mv.branches:
                        if p > 0:
                            dests.add(d)
                out.append(sorted(dests))
            self._succ = out
        return self._succ

    def pred(self) -> list[list[int]]:
        if self._pred is None:
            out = [[] for _ in range(self.n)]
            for s, dests in enumerate(self.succ()):
                for d in dests:
                    out[d].append(s)
            self._pred = out
        return self._pred

    def dtmc_matrix(self):
        if self._dtmc_csr is None:
            rows, cols, data = [], [], []
            for s in range(self.n):
                for d, p in sorted(self.mm.row(s).items()):
                    rows.append(s)
                    cols.append(d)
                    data.append(float(p))
            self._dtmc_csr = sparse.csr_matrix(
                (data, (rows, cols)), shape=(self.n, self.n))
        return self._dtmc_csr

    def mdp_arrays(self):
        """Flattened move structure: per-move owner and branch CSR."""
        if self._mdp_arrays is None:
            owners = []
            starts = [0]
            rows, cols, data = [], [], []
            mi = 0
            for s in range(self.n):
                for mv in self.mm.moves[s]:
                    owners.append(s)
                    for p, d in mv.branches:
                        rows.append(mi)
                        cols.append(d)
                        data.append(float(p))
                    mi += 1
                starts.append(mi)
            mat = sparse.csr_matrix((data, (rows, cols)), shape=(mi, self.n))
            bounds = np.zeros(self.n + 1, dtype=np.int64)
            pos = 0
            for s in range(self.n):
                bounds[s] = pos
                pos += len(self.mm.moves[s])
            bounds[self.n] = pos
            self._mdp_arrays = (np.array(owners, dtype=np.int64), mat, bounds)
        return self._mdp_arrays

    def _reduce_moves(self, per_move: np.ndarray, mode: str) -> np.ndarray:
        owners, mat, bounds = self.mdp_arrays()
        groups = bounds[:-1]
        if mode == "max":
            return np.maximum.reduceat(per_move, groups)
        return np.minimum.reduceat(per_move, groups)

    # --- state formulas ----------------------------------------------------

    def sat(self, e: A.Expr) -> np.ndarray:
        # keyed by node identity; the node is pinned so ids cannot be recycled
        key = id(e)
        if key in self._sat_cache:
            return self._sat_cache[key][1]
        out = self._sat(e)
        self._sat_cache[key] = (e, out)
        return out

    def _atom(self, e: A.Expr) -> np.ndarray:
        fn = self.closed.spec_expr(e)
        out = np.zeros(self.n, dtype=bool)
        for i, st in enumerate(self.mm.states):
            out[i] = bool(fn(st))
        return out

    def _sat(self, e: A.Expr) -> np.ndarray:
        mm = self.mm
        if isinstance(e, A.Lit):
            if not isinstance(e.value, bool):
                raise CheckError("a numeric literal is not a state formula")
            return np.full(self.n, e.value, dtype=bool)
        if isinstance(e, A.DeadlockRef):
            return np.array(mm.deadlock, dtype=bool)
        if isinstance(e, A.InitRef):
            out = np.zeros(self.n, dtype=bool)
            out[mm.initial] = True
            return out
        if isinstance(e, A.LabelRef):
            decl = self.closed.spec.find(P.LabelDecl, e.name)
            if decl is None:
                raise CheckError(f"unknown label #{e.name}")
            return self.sat(decl.body)
        if isinstance(e, A.FormulaRef):
            decl = self.closed.spec.find(P.FormulaDecl, e.name)
            if decl is None:
                raise CheckError(f"unknown formula `{e.name}")
            return self.sat(decl.body)
        if isinstance(e, A.Unary) and e.op == "not":
            return ~self.sat(e.operand)
        if isinstance(e, A.Binary) and e.op in ("/\\", "\\/", "=>", "iff"):
            l = self.sat(e.left)
            r = self.sat(e.right)
            if e.op == "/\\":
                return l & r
            if e.op == "\\/":
                return l | r
            if e.op == "=>":
                return ~l | r
            return l == r
        if isinstance(e, A.ProbFormula):
            return self._prob_formula(e)
        if isinstance(e, A.RewardFormula):
            return self._reward_formula(e)
        if isinstance(e, A.Forall):
            return self.check_ae("A", e.path)
        if isinstance(e, A.Exists):
            return self.check_ae("E", e.path)
        if isinstance(e, A.PATH_NODES):
            raise UnsupportedError(
                "a path formula is not a state formula; wrap it in Prob/Forall/Exists")
        # plain boolean state expression over the valuation
        return self._atom(e)

    def _bound_value(self, bound: A.Bound) -> float:
        value = self.closed.spec_expr(bound.expr)(None)
        return float(value)

    def _step_bound(self, bound: A.Bound | None) -> int | None:
        if bound is None:
            return None
        value = self.closed.spec_expr(bound.expr)(None)
        k = int(value)
        if k != value:
            raise CheckError(f"step bound must be an integer, got {value}")
        if bound.op == "<=":
            pass
        elif bound.op == "<":
            k = k - 1
        else:
            raise UnsupportedError(f"step bound {bound.op!r} is not supported (use <= or <)")
        if k < 0:
            k = -1  # empty horizon
        return k

    def _prob_formula(self, e: A.ProbFormula) -> np.ndarray:
        if e.query is not None:
            raise CheckError("a probability query is not a state formula; "
                             "queries are only allowed at the top level of a property")
        bound = e.bound
        p = self._bound_value(bound)
        # upper bounds quantify over the worst (largest) adversary, lower
        # bounds over the smallest
        if self.mm.kind == "mdp" and not self._deterministic:
            mode = "max" if bound.op in ("<", "<=") else "min"
        else:
            mode = "exact"
        values = self.prob_path(e.path, mode)
        if bound.op == "<":
            return values < p
        if bound.op == "<=":
            return values <= p + 1e-12
        if bound.op == ">":
            return values > p
        return values >= p - 1e-12

    def _reward_formula(self, e: A.RewardFormula) -> np.ndarray:
        if e.query is not None:
            raise CheckError("a reward query is not a state formula; "
                             "queries are only allowed at the top level of a property")
        p = self._bound_value(e.bound)
        if self.mm.kind == "mdp" and not self._deterministic:
            mode = "max" if e.bound.op in ("<", "<=") else "min"
        else:
            mode = "exact"
        values = self.expected_reward(e.rewards, e.path, mode)
        if e.bound.op == "<":
            return values < p
        if e.bound.op == "<=":
            return values <= p + 1e-9
        if e.bound.op == ">":
            return values > p
        return values >= p - 1e-9

    # --- probability computation ---------------------------------------------

    def prob_path(self, path: A.Expr, mode: str) -> np.ndarray:
        """Per-state probability of a path formula; mode in exact|min|max."""
        self.engine = "numeric"
        if self.mm.kind == "dtmc" or self._deterministic:
            mode = "exact"
        elif mode == "exact":
            raise CheckError("plain probabilities are underspecified on an mdp; "
                             "use min =? or max =?")
        if isinstance(path, A.Next):
            if not _is_state_expr(path.operand):
                raise UnsupportedError("nested temporal operators under P are not supported")
            target = self.sat(path.operand).astype(float)
            return self._one_step(target, mode)
        if isinstance(path, A.Finally_):
            return self._until(A.Lit(True), path.operand, self._step_bound(path.bound), mode)
        if isinstance(path, A.Globally):
            k = self._step_bound(path.bound)
            inner = self._until(A.Lit(True), A.Unary("not", path.operand), k,
                                _flip(mode))
            return np.clip(1.0 - inner, 0.0, 1.0)
        if isinstance(path, A.Until):
            return self._until(path.left, path.right, self._step_bound(path.bound), mode)
        if isinstance(path, A.WeakUntil):
            k = self._step_bound(path.bound)
            l, r = path.left, path.right
            bad_src = A.Binary("/\\", l, A.Unary("not", r))
            bad_tgt = A.Binary("/\\", A.Unary("not", l), A.Unary("not", r))
            inner = self._until(bad_src, bad_tgt, k, _flip(mode))
            return np.clip(1.0 - inner, 0.0, 1.0)
        if isinstance(path, A.Release):
            k = self._step_bound(path.bound)
            inner = self._until(A.Unary("not", path.left), A.Unary("not", path.right),
                                k, _flip(mode))
            return np.clip(1.0 - inner, 0.0, 1.0)
        raise UnsupportedError(
            f"{type(path).__name__} is not a supported path formula under P")

    def _one_step(self, target: np.ndarray, mode: str) -> np.ndarray:
        if mode == "exact":
            return self.dtmc_matrix().dot(target)
        owners, mat, bounds = self.mdp_arrays()
        per_move = mat.dot(target)
        return self._reduce_moves(per_move, mode)

    def _until(self, left: A.Expr, right: A.Expr, k: int | None, mode: str) -> np.ndarray:
        if not (_is_state_expr(left) and _is_state_expr(right)):
            raise UnsupportedError("nested temporal operators under P are not supported")
        sat1 = self.sat(left)
        sat2 = self.sat(right)
        if k is not None:
            return self._bounded_until(sat1, sat2, k, mode)
        if mode == "exact":
            return self._until_dtmc(sat1, sat2)
        return self._until_mdp(sat1, sat2, mode)

    def _bounded_until(self, sat1, sat2, k: int, mode: str) -> np.ndarray:
        x = sat2.astype(float)
        if k < 0:
            return np.zeros(self.n)
        run = sat1 & ~sat2
        self.iterations = k
        for _ in range(k):
            step = self._one_step(x, mode)
            x = np.where(sat2, 1.0, np.where(run, step, 0.0))
        return x

    # qualitative precomputation ------------------------------------------------

    def _reach_exists(self, sat1: np.ndarray, sat2: np.ndarray) -> np.ndarray:
        """States with a positive-probability path to sat2 through sat1."""
        pred = self.pred()
        out = sat2.copy()
        stack = list(np.flatnonzero(sat2))
        while stack:
            s = stack.pop()
            for q in pred[s]:
                if not out[q] and sat1[q]:
                    out[q] = True
                    stack.append(q)
        return out

    def _prob0_min(self, sat1, sat2):
        """States where the minimum until-probability is 0."""
        # least fixpoint of states where EVERY action keeps a positive chance
        sure = sat2.copy()
        changed = True
        while changed:
            changed = False
            for s in range(self.n):
                if sure[s] or not sat1[s] or sat2[s]:
                    continue
                ok = True
                for mv in self.mm.moves[s]:
                    if not any(p > 0 and sure[d] for p, d in mv.branches):
                        ok = False
                        break
                if ok and self.mm.moves[s]:
                    sure[s] = True
                    changed = True
        return ~sure

    def _prob1_dtmc(self, sat1, sat2, prob0):
        bad_src = sat1 & ~sat2
        pred = self.pred()
        reach_bad = prob0.copy()
        stack = list(np.flatnonzero(prob0))
        while stack:
            s = stack.pop()
            for q in pred[s]:
                if not reach_bad[q] and bad_src[q]:
                    reach_bad[q] = True
                    stack.append(q)
        return ~reach_bad

    def _prob1_max(self, sat1, sat2):
        """Prob1E: states where some adversary reaches sat2 almost surely."""
        u = np.ones(self.n, dtype=bool)
        while True:
            v = sat2.copy()
            changed = True
            while changed:
                changed = False
                for s in range(self.n):
                    if v[s] or not sat1[s] or sat2[s]:
                        continue
                    for mv in self.mm.moves[s]:
                        stays = all(u[d] for p, d in mv.branches if p > 0)
                        hits = any(v[d] for p, d in mv.branches if p > 0)
                        if stays and hits:
                            v[s] = True
                            changed = True
                            break
            if np.array_equal(u, v):
                return u
            u = v

    def _prob1_min(self, sat1, sat2):
        """Prob1A: states where every adversary reaches sat2 almost surely."""
        non2 = ~sat2
        bad = ~sat1 & ~sat2
        # greatest existential invariant inside sat1 & ~sat2
        inv = sat1 & ~sat2
        changed = True
        while changed:
            changed = False
            for s in np.flatnonzero(inv):
                ok = False
                for mv in self.mm.moves[s]:
                    if all(inv[d] for p, d in mv.branches if p > 0):
                        ok = True
                        break
                if not ok:
                    inv[s] = False
                    changed = True
        # existential reach (within ~sat2) of a bad state or the invariant
        target = bad | inv
        reach = self._reach_exists(sat1 & non2, target)
        return ~reach

    def _until_dtmc(self, sat1, sat2) -> np.ndarray:
        reach = self._reach_exists(sat1 & ~sat2, sat2)
        prob0 = ~reach
        prob1 = self._prob1_dtmc(sat1, sat2, prob0)
        x = np.zeros(self.n)
        x[prob1] = 1.0
        unknown = ~prob0 & ~prob1
        if not unknown.any():
            self.iterations = 0
            return x
        mat = self.dtmc_matrix()
        idx = np.flatnonzero(unknown)
        sub = mat[idx, :]
        self.iterations = 0
        for it in range(self.max_iter):
            new_vals = sub.dot(x)
            delta = np.max(np.abs(new_vals - x[idx]) / np.maximum(np.abs(new_vals), 1.0))
            x[idx] = new_vals
            self.iterations = it + 1
            if delta < self.tol:
                break
        else:
            raise CheckError(f"value iteration hit the cap; last residual {delta:g}")
        return np.clip(x, 0.0, 1.0)

    def _until_mdp(self, sat1, sat2, mode) -> np.ndarray:
        if mode == "max":
            reach = self._reach_exists(sat1 & ~sat2, sat2)
            prob0 = ~reach
            prob1 = self._prob1_max(sat1, sat2)
        else:
            prob0 = self._prob0_min(sat1, sat2)
            prob1 = self._prob1_min(sat1, sat2)
        x = np.zeros(self.n)
        x[prob1] = 1.0
        unknown = ~prob0 & ~prob1
        if not unknown.any():
            self.iterations = 0
            return x
        owners, mat, bounds = self.mdp_arrays()
        self.iterations = 0
        for it in range(self.max_iter):
            per_move = mat.dot(x)
            agg = self._reduce_moves(per_move, mode)
            new_vals = np.where(sat2, 1.0, np.where(sat1, agg, 0.0))
            new_vals[prob1] = 1.0
            new_vals[prob0] = 0.0
            delta = np.max(np.abs(new_vals - x) / np.maximum(np.abs(new_vals), 1.0))
            x = new_vals
            self.iterations = it + 1
            if delta < self.tol:
                break
        else:
            raise CheckError(f"value iteration hit the cap; last residual {delta:g}")
        return np.clip(x, 0.0, 1.0)

    # --- A/E path quantifiers ----------------------------------------------------

    def check_ae(self, quant: str, path: A.Expr) -> np.ndarray:
        self.engine = "graph"
        shape = self._ae_shape(path)
        if shape is None:
            raise UnsupportedError(
                f"path formula outside the supported A/E fragment ({AE_FRAGMENT})")
        kind = shape[0]
        if kind == "X":
            target = self.sat(shape[1])
            out = np.zeros(self.n, dtype=bool)
            for s, dests in enumerate(self.succ()):
                values = [target[d] for d in dests]
                out[s] = any(values) if quant == "E" else all(values)
            return out
        if kind == "U":
            _, left, right, k = shape
            sat1, sat2 = self.sat(left), self.sat(right)
            if k is not None:
                return self._ae_bounded_until(sat1, sat2, k, quant)
            if quant == "E":
                return self._reach_exists(sat1 & ~sat2, sat2)
            bad = self._reach_exists(~sat2, ~sat1 & ~sat2) | self._eg(~sat2)
            return ~bad
        if kind == "W":
            _, left, right, k = shape
            sat1, sat2 = self.sat(left), self.sat(right)
            if k is not None:
                if quant == "A":
                    return ~self._ae_bounded_until(sat1 & ~sat2, ~sat1 & ~sat2, k, "E")
                return self._ae_weak_bounded(sat1, sat2, k)
            if quant == "A":
                return ~self._reach_exists(sat1 & ~sat2, ~sat1 & ~sat2)
            return self._reach_exists(sat1 & ~sat2, sat2) | self._eg(sat1)
        if kind == "R":
            _, left, right, k = shape
            inner = ("U", A.Unary("not", left), A.Unary("not", right), k)
            flipped = self._ae_from_shape(inner, "E" if quant == "A" else "A")
            return ~flipped
        if kind == "GF":
            target = self.sat(shape[1])
            if quant == "E":
                return self._e_gf(target)
            return ~self._e_fg(~target)
        if kind == "FG":
            target = self.sat(shape[1])
            if quant == "E":
                return self._e_fg(target)
            return ~self._e_gf(~target)
        if kind == "GF=>GF":
            p, q = self.sat(shape[1]), self.sat(shape[2])
            if quant == "A":
                # no reachable cycle through a p-state inside the ~q subgraph
                bad_cycle = self._cycle_states(~q) & p
                return ~self._reach_exists(np.ones(self.n, dtype=bool), bad_cycle)
            return self._e_fg(~p) | self._e_gf(q)
        if kind == "FG=>GF":
            p, q = self.sat(shape[1]), self.sat(shape[2])
            if quant == "A":
                return ~self._e_fg(p & ~q)
            return self._e_gf(~p) | self._e_gf(q)
        if kind == "G=>F":
            p, q = self.sat(shape[1]), self.sat(shape[2])
            if quant == "A":
                bad = p & self._eg(~q)
                return ~self._reach_exists(np.ones(self.n, dtype=bool), bad)
            return self._e_response(p, q)
        if kind == "G":
            target = self.sat(shape[1])
            k = shape[2]
            if k is not None:
                bad = self._ae_bounded_until(np.ones(self.n, dtype=bool), ~target, k,
                                             "E" if quant == "A" else "A")
                return ~bad
            if quant == "E":
                return self._eg(target)
            return ~self._reach_exists(np.ones(self.n, dtype=bool), ~target)
        raise AssertionError(kind)

    def _ae_from_shape(self, shape, quant):
        kind = shape[0]
        if kind == "U":
            _, left, right, k = shape
            sat1, sat2 = self.sat(left), self.sat(right)
            if k is not None:
                return self._ae_bounded_until(sat1, sat2, k, quant)
            if quant == "E":
                return self._reach_exists(sat1 & ~sat2, sat2)
            bad = self._reach_exists(~sat2, ~sat1 & ~sat2) | self._eg(~sat2)
            return ~bad
        raise AssertionError(kind)

    def _ae_shape(self, path: A.Expr):
        """Normalize a path formula into one of the supported A/E shapes."""
        if isinstance(path, A.Next) and _is_state_expr(path.operand):
            return ("X", path.operand)
        if isinstance(path, A.Until):
            if _is_state_expr(path.left) and _is_state_expr(path.right):
                return ("U", path.left, path.right, self._step_bound(path.bound))
            return None
        if isinstance(path, A.WeakUntil):
            if _is_state_expr(path.left) and _is_state_expr(path.right):
                return ("W", path.left, path.right, self._step_bound(path.bound))
            return None
        if isinstance(path, A.Release):
            if _is_state_expr(path.left) and _is_state_expr(path.right):
                return ("R", path.left, path.right, self._step_bound(path.bound))
            return None
        if isinstance(path, A.Finally_):
            op = path.operand
            if isinstance(op, A.Globally) and path.bound is None and op.bound is None \
                    and _is_state_expr(op.operand):
                return ("FG", op.operand)
            if _is_state_expr(op):
                return ("U", A.Lit(True), op, self._step_bound(path.bound))
            return None
        if isinstance(path, A.Globally):
            op = path.operand
            if isinstance(op, A.Finally_) and path.bound is None and op.bound is None \
                    and _is_state_expr(op.operand):
                return ("GF", op.operand)
            if isinstance(op, A.Binary) and op.op == "=>" and path.bound is None \
                    and isinstance(op.right, A.Finally_) and op.right.bound is None \
                    and _is_state_expr(op.left) and _is_state_expr(op.right.operand):
                return ("G=>F", op.left, op.right.operand)
            if _is_state_expr(op):
                return ("G", op, self._step_bound(path.bound))
            return None
        if isinstance(path, A.Binary) and path.op == "=>":
            left = self._gf_or_fg(path.left)
            right = self._gf_or_fg(path.right)
            if left is not None and right is not None and right[0] == "GF":
                return (f"{left[0]}=>GF", left[1], right[1])
            return None
        return None

    def _gf_or_fg(self, e: A.Expr):
        if isinstance(e, A.Globally) and e.bound is None and isinstance(e.operand, A.Finally_) \
                and e.operand.bound is None and _is_state_expr(e.operand.operand):
            return ("GF", e.operand.operand)
        if isinstance(e, A.Finally_) and e.bound is None and isinstance(e.operand, A.Globally) \
                and e.operand.bound is None and _is_state_expr(e.operand.operand):
            return ("FG", e.operand.operand)
        return None

    def _ae_bounded_until(self, sat1, sat2, k: int, quant: str) -> np.ndarray:
        if k < 0:
            return np.zeros(self.n, dtype=bool)
        x = sat2.copy()
        succ = self.succ()
        for _ in range(k):
            new = sat2.copy()
            for s in range(self.n):
                if new[s] or not sat1[s]:
                    continue
                values = [x[d] for d in succ[s]]
                new[s] = any(values) if quant == "E" else (bool(values) and all(values))
            if np.array_equal(new, x):
                break
            x = new
        return x

    def _ae_weak_bounded(self, sat1, sat2, k) -> np.ndarray:
        unt = self._ae_bounded_until(sat1, sat2, k, "E")
        glob = ~self._ae_bounded_until(np.ones(self.n, dtype=bool), ~sat1, k, "A")
        return unt | glob

    def _eg(self, target: np.ndarray) -> np.ndarray:
        """Greatest fixpoint: states with an infinite path staying in target."""
        alive = target.copy()
        succ = self.succ()
        changed = True
        while changed:
            changed = False
            for s in np.flatnonzero(alive):
                if not any(alive[d] for d in succ[s]):
                    alive[s] = False
                    changed = True
        return alive

    def _sccs(self, restrict: np.ndarray | None = None) -> list[list[int]]:
        """Iterative Tarjan over the (optionally restricted) support graph."""
        succ = self.succ()
        allowed = restrict if restrict is not None else np.ones(self.n, dtype=bool)
        index = {}
        low = {}
        on_stack = set()
        stack = []
        sccs = []
        counter = [0]
        for root in range(self.n):
            if not allowed[root] or root in index:
                continue
            work = [(root, iter([d for d in succ[root] if allowed[d]]))]
            index[root] = low[root] = counter[0]
            counter[0] += 1
            stack.append(root)
            on_stack.add(root)
            while work:
                node, it = work[-1]
                advanced = False
                for child in it:
                    if child not in index:
                        index[child] = low[child] = counter[0]
                        counter[0] += 1
                        stack.append(child)
                        on_stack.add(child)
                        work.append((child, iter([d for d in succ[child] if allowed[d]])))
                        advanced = True
                        break
                    if child in on_stack:
                        low[node] = min(low[node], index[child])
                if advanced:
                    continue
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[node])
                if low[node] == index[node]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        comp.append(w)
                        if w == node:
                            break
                    sccs.append(comp)
        return sccs

    def _cycle_states(self, restrict: np.ndarray | None = None) -> np.ndarray:
        """States on a cycle of the (restricted) graph: members of an SCC
        with an internal edge."""
        succ = self.succ()
        allowed = restrict if restrict is not None else np.ones(self.n, dtype=bool)
        out = np.zeros(self.n, dtype=bool)
        for comp in self._sccs(restrict):
            members = set(comp)
            nontrivial = len(comp) > 1 or any(
                d in members and allowed[d] for d in succ[comp[0]])
            if nontrivial:
                for s in comp:
                    out[s] = True
        return out

    def _e_gf(self, target: np.ndarray) -> np.ndarray:
        # reach a nontrivial SCC containing a target state, then loop through it
        succ = self.succ()
        good = np.zeros(self.n, dtype=bool)
        for comp in self._sccs():
            members = set(comp)
            nontrivial = len(comp) > 1 or any(d in members for d in succ[comp[0]])
            if nontrivial and any(target[s] for s in comp):
                for s in comp:
                    good[s] = True
        return self._reach_exists(np.ones(self.n, dtype=bool), good)

    def _e_fg(self, target: np.ndarray) -> np.ndarray:
        return self._reach_exists(np.ones(self.n, dtype=bool), self._eg(target))

    def _e_response(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """E[G (p => F q)] via a one-bit obligation monitor product."""
        succ = self.succ()
        n = self.n

        def owing_after(dst, bit):
            return (bit or p[dst]) and not q[dst]

        # product node = s * 2 + bit; find cycles with a clean (bit=0) node
        psucc: list[list[int]] = [[] for _ in range(2 * n)]
        for s in range(n):
            for bit in (0, 1):
                node = s * 2 + bit
                for d in succ[s]:
                    nbit = 1 if owing_after(d, bool(bit)) else 0
                    psucc[node].append(d * 2 + nbit)
        index = {}
        low = {}
        on_stack = set()
        stack = []
        good_nodes = set()
        counter = [0]
        for root in range(2 * n):
            if root in index:
                continue
            work = [(root, iter(psucc[root]))]
            index[root] = low[root] = counter[0]
            counter[0] += 1
            stack.append(root)
            on_stack.add(root)
            while work:
                node, it = work[-1]
                advanced = False
                for child in it:
                    if child not in index:
                        index[child] = low[child] = counter[0]
                        counter[0] += 1
                        stack.append(child)
                        on_stack.add(child)
                        work.append((child, iter(psucc[child])))
                        advanced = True
                        break
                    if child in on_stack:
                        low[node] = min(low[node], index[child])
                if advanced:
                    continue
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[node])
                if low[node] == index[node]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        comp.append(w)
                        if w == node:
                            break
                    members = set(comp)
                    nontrivial = len(comp) > 1 or any(c in members for c in psucc[comp[0]])
                    if nontrivial and any(c % 2 == 0 for c in comp):
                        good_nodes.update(comp)
        # backward reachability to a good component in the product
        ppred: list[list[int]] = [[] for _ in range(2 * n)]
        for node, dests in enumerate(psucc):
            for d in dests:
                ppred[d].append(node)
        reach = [False] * (2 * n)
        work2 = list(good_nodes)
        for g in good_nodes:
            reach[g] = True
        while work2:
            node = work2.pop()
            for q2 in ppred[node]:
                if not reach[q2]:
                    reach[q2] = True
                    work2.append(q2)
        out = np.zeros(n, dtype=bool)
        for s in range(n):
            bit0 = 1 if (p[s] and not q[s]) else 0
            out[s] = reach[s * 2 + bit0]
        return out

    # --- rewards ---------------------------------------------------------------

    def _reward_arrays(self, rname: str | None):
        mm = self.mm
        if rname is None:
            names = list(mm.rewards)
            if len(names) != 1:
                raise CheckError("the reward formula needs a rewards name "
                                 f"(attached: {names or 'none'})")
            rname = names[0]
        if rname not in mm.rewards:
            decl = self.closed.spec.find(P.RewardsDecl, rname)
            if decl is None:
                raise CheckError(f"unknown rewards {rname!r}")
            attach_rewards(mm, decl, self.closed)
        rs = mm.rewards[rname]
        state_r = np.array([float(v) for v in rs.state])
        move_r = []
        for s in range(self.n):
            for mi, _ in enumerate(mm.moves[s]):
                move_r.append(float(rs.move.get((s, mi), 0)))
        return state_r, np.array(move_r)

    def expected_reward(self, rname: str | None, rpath: A.Expr, mode: str) -> np.ndarray:
        self.engine = "numeric"
        if self.mm.kind == "dtmc" or self._deterministic:
            mode = "exact"
        elif mode == "exact":
            raise CheckError("plain reward queries are underspecified on an mdp; "
                             "use min =? or max =?")
        state_r, move_r = self._reward_arrays(rname)
        if isinstance(rpath, A.LTLReward):
            op = rpath.operand
            if isinstance(op, A.Finally_) and op.bound is None and _is_state_expr(op.operand):
                rpath = A.Reachable(op.operand)
            else:
                raise UnsupportedError(
                    "LTL rewards are restricted to a plain Finally; "
                    "use Reachable, Cumul, or Total")
        if isinstance(rpath, A.Reachable):
            return self._reach_reward(self.sat(rpath.operand), state_r, move_r, mode)
        if isinstance(rpath, A.Cumul):
            k = int(self.closed.spec_expr(rpath.operand)(None))
            return self._cumul_reward(k, state_r, move_r, mode)
        if isinstance(rpath, A.TotalReward):
            return self._total_reward(state_r, move_r, mode)
        raise UnsupportedError(f"{type(rpath).__name__} is not a reward path formula")

    def _dtmc_reward_base(self, state_r, move_r) -> np.ndarray:
        """Per-state expected one-step reward under the uniform move mixture."""
        owners, mat, bounds = self.mdp_arrays()
        counts = np.diff(bounds).astype(float)
        sums = np.add.reduceat(move_r, bounds[:-1])
        return state_r + sums / counts

    def _expected_move_reward(self, state_r, move_r, x, mode):
        """One Bellman backup of expected reward per state."""
        if mode == "exact":
            return self._dtmc_reward_base(state_r, move_r) + self.dtmc_matrix().dot(x)
        owners, mat, bounds = self.mdp_arrays()
        per_move = move_r + mat.dot(x)
        return state_r + self._reduce_moves(per_move, mode)

    def _reach_reward(self, target: np.ndarray, state_r, move_r, mode) -> np.ndarray:
        ones = np.ones(self.n, dtype=bool)
        if mode == "exact":
            reach = self._until_dtmc(ones, target)
        elif mode == "max":
            # sup over adversaries is infinite when some adversary misses the target
            reach = np.where(self._prob1_min(ones, target), 1.0, 0.0)
        else:
            reach = np.where(self._prob1_max(ones, target), 1.0, 0.0)
        finite = (reach > 1.0 - 1e-9) | target
        x = np.zeros(self.n)
        x[~finite] = np.inf
        idx = np.flatnonzero(finite & ~target)
        if idx.size == 0:
            out = np.where(finite, 0.0, np.inf)
            out[target] = 0.0
            return out
        self.iterations = 0
        # value iteration over the finite region; moves into the infinite
        # region are excluded (max) or poison the move (min handled by inf)
        for it in range(self.max_iter):
            backup = self._expected_move_reward(state_r, move_r, np.where(target, 0.0, x), mode)
            new = x.copy()
            new[idx] = backup[idx]
            delta = np.max(np.abs(new[idx] - x[idx]) / np.maximum(np.abs(new[idx]), 1.0))
            x = new
            self.iterations = it + 1
            if delta < self.tol:
                break
        else:
            raise CheckError(f"value iteration hit the cap; last residual {delta:g}")
        x[target] = 0.0
        return x

    def _cumul_reward(self, k: int, state_r, move_r, mode) -> np.ndarray:
        x = np.zeros(self.n)
        for _ in range(k):
            x = self._expected_move_reward(state_r, move_r, x, mode)
        self.iterations = k
        return x

    def _total_reward(self, state_r, move_r, mode) -> np.ndarray:
        if mode != "exact":
            raise UnsupportedError("Total rewards are supported on dtmc models only")
        # positive-reward bottom SCCs diverge
        sccs = self._sccs()
        succ = self.succ()
        in_bscc = np.zeros(self.n, dtype=bool)
        positive = np.zeros(self.n, dtype=bool)
        move_index = {}
        mi = 0
        for s in range(self.n):
            for j in range(len(self.mm.moves[s])):
                move_index[(s, j)] = mi
                mi += 1
        for comp in sccs:
            members = set(comp)
            if any(d not in members for s in comp for d in succ[s]):
                continue
            for s in comp:
                in_bscc[s] = True
            has_reward = any(state_r[s] > 0 for s in comp) or any(
                move_r[move_index[(s, j)]] > 0
                for s in comp for j in range(len(self.mm.moves[s])))
            if has_reward:
                for s in comp:
                    positive[s] = True
        diverge = self._reach_exists(np.ones(self.n, dtype=bool), positive)
        x = np.zeros(self.n)
        x[diverge] = np.inf
        zero_zone = in_bscc & ~positive
        idx = np.flatnonzero(~diverge & ~zero_zone)
        self.iterations = 0
        for it in range(self.max_iter):
            backup = self._expected_move_reward(state_r, move_r,
                                                np.where(np.isinf(x), 0.0, x), mode)
            new = x.copy()
            new[idx] = backup[idx]
            delta = np.max(np.abs(new[idx] - x[idx]) / np.maximum(np.abs(new[idx]), 1.0)) \
                if idx.size else 0.0
            x = new
            self.iterations = it + 1
            if delta < self.tol:
                break
        else:
            raise CheckError(f"value iteration hit the cap; last residual {delta:g}")
        return x


def _flip(mode: str) -> str:
    if mode == "min":
        return "max"
    if mode == "max":
        return "min"
    return mode


# --- public operations ------------------------------------------------------------


def check_state_formula(mm: MarkovModel, closed: ClosedModel, expr: A.Expr,
                        tol: float = DEFAULT_TOL) -> np.ndarray:
    """Per-state satisfaction of a boolean state formula."""
    return ExactChecker(mm, closed, tol).sat(expr)


def prob_path(mm: MarkovModel, closed: ClosedModel, path: A.Expr,
              mode: str = "exact", tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Per-state probability of an unbounded or bounded path formula."""
    return ExactChecker(mm, closed, tol, max_iter).prob_path(path, mode)


def prob_path_bounded(mm: MarkovModel, closed: ClosedModel, path: A.Expr,
                      mode: str = "exact") -> np.ndarray:
    """Per-state probability of a step-bounded path formula.

    Exact in k backward steps, no convergence threshold involved."""
    if isinstance(path, (A.Finally_, A.Globally, A.Until, A.WeakUntil, A.Release)) \
            and path.bound is None:
        raise CheckError("prob_path_bounded needs a step bound on the formula")
    return ExactChecker(mm, closed).prob_path(path, mode)


def check_AE(mm: MarkovModel, closed: ClosedModel, quant: str, path: A.Expr) -> np.ndarray:
    """Per-state verdict of a Forall/Exists path quantifier."""
    return ExactChecker(mm, closed).check_ae(quant, path)


def expected_reward(mm: MarkovModel, closed: ClosedModel, rname: str | None,
                    rpath: A.Expr, mode: str = "exact",
                    tol: float = DEFAULT_TOL) -> np.ndarray:
    """Per-state expected reward (+inf where accumulation diverges)."""
    return ExactChecker(mm, closed, tol).expected_reward(rname, rpath, mode)


def check_property(mm: MarkovModel, closed: ClosedModel, prop: P.ProbProperty,
                   config_id: str = "", tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> CheckResult:
    """Judge a property at the initial state of a built model."""
    t0 = time.perf_counter()
    checker = ExactChecker(mm, closed, tol, max_iter)
    body = prop.body
    mode_name = "exact"
    if isinstance(body, A.ProbFormula) and body.query is not None:
        mode = {A.QUERY_PLAIN: "exact", A.QUERY_MIN: "min", A.QUERY_MAX: "max"}[body.query]
        if mm.kind == "dtmc" and mode != "exact":
            mode = "exact"  # a dtmc has a single adversary
        values = checker.prob_path(body.path, mode)
        verdict = float(values[mm.initial])
        mode_name = {"exact": "exact", "min": "minOverAdversaries",
                     "max": "maxOverAdversaries"}[mode]
    elif isinstance(body, A.RewardFormula) and body.query is not None:
        mode = {A.QUERY_PLAIN: "exact", A.QUERY_MIN: "min", A.QUERY_MAX: "max"}[body.query]
        if mm.kind == "dtmc" and mode != "exact":
            mode = "exact"
        values = checker.expected_reward(body.rewards, body.path, mode)
        v = values[mm.initial]
        verdict = math.inf if np.isinf(v) else float(v)
        mode_name = {"exact": "exact", "min": "minOverAdversaries",
                     "max": "maxOverAdversaries"}[mode]
    else:
        sat = checker.sat(body)
        verdict = bool(sat[mm.initial])
    return CheckResult(prop.name, config_id, verdict, mode_name, checker.engine,
                       checker.iterations, time.perf_counter() - t0)
