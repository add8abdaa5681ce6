"""PRISM emission: model file, properties file, and name map.

Emission is structural (module per machine, module per environment module)
from a closed model; the program counter, lock, and exit variables get
integer encodings recorded in the name map.  Variable ranges are harvested
from the explored state space, which is why emission requires a successful
build.  Typed events use a two-step synchronise-then-exchange encoding with
a sender-owned exchange variable.  Correctness is checked syntactically by
the bundled subset validator; no external checker is invoked.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import ast as A
from . import model as M
from . import props as P
from .build import ClosedModel, MarkovModel, build_markov, _attach_decode


class EmitError(ValueError):
    pass


class Mangler:
    """Flattens qualified names to PRISM identifiers; collisions get a
    numeric suffix and every pair lands in the (bijective) name map."""

    def __init__(self):
        self.name_map: dict[str, str] = {}
        self._taken: set[str] = set()
        self._by_qualified: dict[str, str] = {}

    def mangle(self, qualified: str) -> str:
        if qualified in self._by_qualified:
            return self._by_qualified[qualified]
        base = qualified.replace("::", "_").replace(".", "_")
        candidate = base
        suffix = 2
        while candidate in self._taken:
            candidate = f"{base}_{suffix}"
            suffix += 1
        self._taken.add(candidate)
        self.name_map[candidate] = qualified
        self._by_qualified[qualified] = candidate
        return candidate

    def record(self, mangled: str, qualified: str):
        if mangled in self.name_map and self.name_map[mangled] != qualified:
            raise EmitError(f"name map collision on {mangled!r}")
        self.name_map[mangled] = qualified

    def check_bijective(self):
        values = list(self.name_map.values())
        if len(set(values)) != len(values):
            raise EmitError("name map is not a bijection")

    def tsv(self) -> str:
        lines = [f"{m}\t{q}" for m, q in sorted(self.name_map.items())]
        return "\n".join(lines) + "\n"


def mangle(qn: A.QName | str) -> str:
    """Join qualified-name segments with underscores."""
    text = str(qn)
    return text.replace("::", "_").replace(".", "_")


@dataclass
class EmittedPair:
    model_text: str
    props_text: str
    mangler: Mangler
    sweep_text: str | None = None


# --- model emission ------------------------------------------------------------


class _ModelEmitter:
    def __init__(self, closed: ClosedModel, bounds: dict | None,
                 sweep_names: set[str] | None, mangler: Mangler):
        self.c = closed
        self.mangler = mangler
        self.sweep_names = sweep_names or set()
        if bounds is None:
            mm = build_markov(closed)
            bounds = observed_bounds(mm)
        else:
            for m in closed.machines:
                if not hasattr(m, "decode_pc"):
                    _attach_decode(m)
        self.bounds = bounds
        self.enum_codes: dict[str, int] = {}
        for enum in closed.model.enums:
            for i, lit in enumerate(enum.literals):
                self.enum_codes[f"{enum.name}::{lit}"] = i
        self.pc_codes: dict[str, dict[str, int]] = {}
        self.lk_codes: dict[str, dict[object, int]] = {}
        for m in closed.machines:
            if not hasattr(m, "static_pcs"):
                _attach_decode(m)
            self.pc_codes[m.name] = {pc: i for i, pc in enumerate(m.static_pcs)}
            codes = {0: 0}
            for i, t in enumerate(sorted(m.trans_by_id), start=1):
                codes[t] = i
            self.lk_codes[m.name] = codes

    # name helpers --------------------------------------------------------

    def var_id(self, flat: str) -> str:
        qualified = self._qualify_flat(flat)
        return self.mangler.mangle(qualified)

    def _qualify_flat(self, flat: str) -> str:
        mod = self.c.model.name
        if flat.startswith("env."):
            _, pmod, var = flat.split(".", 2)
            return f"{pmod}::{var}"
        if flat.startswith("latch."):
            return flat.replace("latch.", "") + "::val"
        parts = flat.split(".")
        return "::".join([mod] + parts)

    def closure_action(self, closure) -> str:
        flow = "out"
        for (ep, d) in closure.tags:
            kind = self.c.closures._endpoint_info[ep][0]
            if kind == "platform" and d == "out":
                flow = "in"  # the platform drives this event into the model
        return self.mangler.mangle(f"{closure.cid}.{flow}")

    def expr(self, e: A.Expr, scope, params: dict | None = None) -> str:
        return _emit_expr(self, e, scope, params)

    # emission --------------------------------------------------------------

    def emit(self) -> str:
        c = self.c
        out = [c.kind, ""]
        for name in sorted(c.consts):
            value = c.consts[name]
            ident = self.mangler.mangle(name)
            if name in self.sweep_names:
                out.append(f"const {_const_type(value)} {ident};")
            else:
                out.append(f"const {_const_type(value)} {ident} = {_const_text(value)};")
        for enum in c.model.enums:
            for i, lit in enumerate(enum.literals):
                ident = self.mangler.mangle(f"{enum.name}::{lit}")
                out.append(f"const int {ident} = {i};")
        out.append("")
        for v in c.vars:
            if v.kind == "shared":
                out.append(f"global {self.var_id(v.name)} : {self._range(v)};")
        for v in c.vars:
            if v.kind == "latch":
                out.append(f"global {self.var_id(v.name)} : {self._range(v)};")
        out.append("")
        for m in c.machines:
            out.extend(self._module(m))
            out.append("")
        if c.env is not None:
            for mod in c.env.modules:
                out.extend(self._env_module(mod))
                out.append("")
        return "\n".join(out).rstrip() + "\n"

    def _range(self, info) -> str:
        k = info.domain[0]
        init = info.init
        if k == "bool":
            return f"bool init {_bool_text(init)}"
        if k == "enum":
            lo, hi = 0, len(info.domain[1]) - 1
            init_code = self.enum_codes[init]
            return f"[{lo}..{hi}] init {init_code}"
        lo, hi = self.bounds.get(info.name, (init, init))
        if k == "nat":
            lo = max(0, lo)
        if k == "range":
            lo, hi = info.domain[1], info.domain[2]
        return f"[{lo}..{hi}] init {init}"

    def _module(self, m) -> list[str]:
        c = self.c
        mod_name = self.mangler.mangle(f"{c.model.name}::{m.ctrl.name}::{m.mach.name}")
        out = [f"module {mod_name}"]
        for v in c.vars:
            if v.kind == "machine" and v.name.startswith(f"{m.ctrl.name}.{m.mach.name}."):
                out.append(f"  {self.var_id(v.name)} : {self._range(v)};")
        pc_id = self.var_id(f"{m.ctrl.name}.{m.mach.name}.pc")
        lk_id = self.var_id(f"{m.ctrl.name}.{m.mach.name}.lk")
        pc_codes = self.pc_codes[m.name]
        lk_codes = self.lk_codes[m.name]
        for pc, code in sorted(pc_codes.items(), key=lambda kv: kv[1]):
            self.mangler.record(f"{pc_id}={code}",
                                f"{c.model.name}::{m.ctrl.name}::{m.mach.name}::pc::{pc}")
        for lk, code in sorted(lk_codes.items(), key=lambda kv: kv[1]):
            if lk == 0:
                continue
            self.mangler.record(f"{lk_id}={code}",
                                f"{c.model.name}::{m.ctrl.name}::{m.mach.name}::lk::{lk}")
        init_pc = pc_codes[m.mach.initial]
        out.append(f"  {pc_id} : [0..{len(pc_codes) - 1}] init {init_pc};")
        out.append(f"  {lk_id} : [0..{len(lk_codes) - 1}] init 0;")
        exit_flat = f"{m.ctrl.name}.{m.mach.name}.exit"
        has_exit = exit_flat in c.index
        if has_exit:
            out.append(f"  {self.var_id(exit_flat)} : [0..2] init 0;")
        out.append("")
        out.extend(self._commands(m, pc_id, lk_id, pc_codes, lk_codes, has_exit))
        out.append("endmodule")
        return out

    def _commands(self, m, pc_id, lk_id, pc_codes, lk_codes, has_exit) -> list[str]:
        out = []
        exit_id = self.var_id(f"{m.ctrl.name}.{m.mach.name}.exit") if has_exit else None
        scope = m.scope

        def upd(pairs):
            return " & ".join(f"({k}'={v})" for k, v in pairs)

        for t in sorted(m.mach.transitions, key=lambda t: t.id):
            rt = m.rt[t.id]
            if t.source in m.junctions:
                continue  # branches are emitted at the junction command
            guard = [f"{pc_id}={pc_codes[t.source]}", f"{lk_id}=0"]
            if has_exit:
                guard.append(f"{exit_id}=0")
            if t.guard is not None:
                guard.append(self.expr(t.guard, scope))
            label = "[] "
            recv_detour = False
            if rt.trigger_comm is not None:
                comm = rt.trigger_comm
                label = f"[{self.closure_action(comm.closure)}] "
                if comm.bind_idx is not None:
                    recv_detour = True
            src_exit = rt.src_exit and t.source in m.states
            updates = []
            if recv_detour:
                recv_pc = f"{t.id}_recv"
                if recv_pc not in pc_codes:
                    pc_codes[recv_pc] = len(pc_codes)
                updates = [(lk_id, lk_codes[t.id]), (pc_id, pc_codes[recv_pc])]
                bind_id = self.var_id(self.c.vars[rt.trigger_comm.bind_idx].name)
                latch = rt.trigger_comm.closure.latch
                latch_id = self.var_id(latch) if latch else None
                after = self._initial_target_updates(m, t, rt, pc_id, lk_id, pc_codes,
                                                     lk_codes, exit_id, keep_lock=True)
                out.append(f"  [] {pc_id}={pc_codes[recv_pc]} -> "
                           f"{upd([(bind_id, latch_id)] + after)};")
            else:
                updates = self._initiation_updates(m, t, rt, pc_id, lk_id, pc_codes,
                                                   lk_codes, exit_id, src_exit)
                if rt.trigger_comm is not None and rt.trigger_comm.value_fn is not None:
                    latch = rt.trigger_comm.closure.latch
                    if latch is not None:
                        updates.append((self.var_id(latch),
                                        self.expr(t.trigger.value, scope)))
            out.append(f"  {label}{' & '.join(guard)} -> {upd(updates)};")
        for j in sorted(m.junctions):
            alts = []
            for t, w in m.junction_weights[j]:
                rt = m.rt[t.id]
                if rt.parts:
                    pc = m.act_pc(t.id, 0)
                elif rt.target_is_junction:
                    pc = t.target
                else:
                    pc = m.entering_pc(t.target)
                alts.append(f"{_prob_text(w)}:({pc_id}'={pc_codes[pc]})")
            out.append(f"  [] {pc_id}={pc_codes[j]} & {lk_id}>0 -> {' + '.join(alts)};")
        # chain steps: action constituents, entry and exit actions
        for t in sorted(m.mach.transitions, key=lambda t: t.id):
            rt = m.rt[t.id]
            for k, part in enumerate(rt.parts):
                src_code = pc_codes[m.act_pc(t.id, k)]
                if k + 1 < len(rt.parts):
                    next_pc = m.act_pc(t.id, k + 1)
                elif rt.target_is_junction:
                    next_pc = t.target
                else:
                    next_pc = m.entering_pc(t.target)
                out.extend(self._constituent_command(
                    m, part, f"{pc_id}={src_code}",
                    [(pc_id, pc_codes[next_pc])], pc_id, pc_codes))
        for s in sorted(m.states):
            st = m.states[s]
            entry = m.entry[s]
            for k, part in enumerate(entry):
                guard = f"{pc_id}={pc_codes[m.entering_pc(s)]}" if k == 0 \
                    else f"{pc_id}={pc_codes[m.entry_pc(s, k)]}"
                if k + 1 == len(entry):
                    post = [(pc_id, pc_codes[s]), (lk_id, 0)]
                else:
                    post = [(pc_id, pc_codes[m.entry_pc(s, k + 1)])]
                out.extend(self._constituent_command(m, part, guard, post, pc_id, pc_codes))
            if not entry and m._state_needs_entering(s):
                out.append(f"  [] {pc_id}={pc_codes[m.entering_pc(s)]} -> "
                           f"({pc_id}'={pc_codes[s]}) & ({lk_id}'=0);")
            exit_chain = m.exit[s]
            for k, part in enumerate(exit_chain):
                if k == 0:
                    guard = f"{pc_id}={pc_codes[s]} & {exit_id}=1"
                else:
                    guard = f"{pc_id}={pc_codes[m.exit_pc(s, k)]} & {exit_id}=1"
                post = [(pc_id, pc_codes[m.exit_pc(s, k + 1)])]
                if k + 1 == len(exit_chain):
                    post.append((exit_id, 2))
                out.extend(self._constituent_command(m, part, guard, post, pc_id, pc_codes))
            if exit_chain:
                # continuation after the exit completes, one command per locking transition
                for t in sorted(m.mach.transitions, key=lambda t: t.id):
                    if t.source != s or not m.rt[t.id].src_exit:
                        continue
                    rt = m.rt[t.id]
                    if rt.parts:
                        pc = m.act_pc(t.id, 0)
                    elif rt.target_is_junction:
                        pc = t.target
                    else:
                        pc = m.entering_pc(t.target)
                    out.append(
                        f"  [] {pc_id}={pc_codes[m.exit_pc(s, len(exit_chain))]} & "
                        f"{exit_id}=2 & {lk_id}={lk_codes[t.id]} -> "
                        f"({pc_id}'={pc_codes[pc]}) & ({exit_id}'=0);")
        # idle self-loops for terminal stable states
        for s in sorted(m.states):
            if not m.trans_from.get(s):
                out.append(f"  [] {pc_id}={pc_codes[s]} & {lk_id}=0 -> true;")
        return out

    def _initiation_updates(self, m, t, rt, pc_id, lk_id, pc_codes, lk_codes,
                            exit_id, src_exit):
        if src_exit:
            return [(lk_id, lk_codes[t.id]), (exit_id, 1)]
        return self._initial_target_updates(m, t, rt, pc_id, lk_id, pc_codes,
                                            lk_codes, exit_id, keep_lock=False)

    def _initial_target_updates(self, m, t, rt, pc_id, lk_id, pc_codes, lk_codes,
                                exit_id, keep_lock):
        if rt.parts:
            return [(lk_id, lk_codes[t.id]), (pc_id, pc_codes[m.act_pc(t.id, 0)])] \
                if not keep_lock else [(pc_id, pc_codes[m.act_pc(t.id, 0)])]
        if rt.target_is_junction:
            base = [(pc_id, pc_codes[t.target])]
            return base if keep_lock else [(lk_id, lk_codes[t.id])] + base
        if rt.tgt_entry_len > 0 or m._state_needs_entering(t.target):
            base = [(pc_id, pc_codes[m.entering_pc(t.target)])]
            return base if keep_lock else [(lk_id, lk_codes[t.id])] + base
        base = [(pc_id, pc_codes[t.target])]
        if keep_lock:
            return base + [(lk_id, 0)]
        return base

    def _constituent_command(self, m, part, guard, post, pc_id, pc_codes) -> list[str]:
        scope = m.scope

        def upd(pairs):
            if not pairs:
                return "true"
            return " & ".join(f"({k}'={v})" for k, v in pairs)

        if part.kind == "update":
            pairs = list(post)
            pairs.extend(self._update_pairs(m, part))
            return [f"  [] {guard} -> {upd(pairs)};"]
        comm = part.comm
        label = self.closure_action(comm.closure)
        pairs = list(post)
        if comm.value_fn is not None and comm.closure.latch is not None:
            pairs.append((self.var_id(comm.closure.latch),
                          self.expr(part_value_expr(part), scope)))
        if comm.bind_idx is not None:
            # receive: synchronise first, copy the exchanged value second
            recv_pc = f"recv_{id(part) % 10000}"
            if recv_pc not in pc_codes:
                pc_codes[recv_pc] = len(pc_codes)
            bind_id = self.var_id(self.c.vars[comm.bind_idx].name)
            latch_id = self.var_id(comm.closure.latch) if comm.closure.latch else "0"
            return [
                f"  [{label}] {guard} -> ({pc_id}'={pc_codes[recv_pc]});",
                f"  [] {pc_id}={pc_codes[recv_pc]} -> "
                f"{upd([(bind_id, latch_id)] + post)};",
            ]
        return [f"  [{label}] {guard} -> {upd(pairs)};"]

    def _update_pairs(self, m, part) -> list[tuple[str, str]]:
        action = part.source_action
        scope = m.scope
        if isinstance(action, M.Assign):
            flat, _ = scope.vars[action.target]
            return [(self.var_id(flat), self.expr(action.expr, scope))]
        if isinstance(action, M.OpCall):
            op = self.c.operations[action.name]
            params = {p: self.expr(a, scope) for p, a in zip(op.params, action.args)}
            pairs = []
            for target_qn, value in op.assignments:
                ref, _ = self.c.resolver.resolve_fqn(target_qn)
                pairs.append((self.var_id(ref.flat), self.expr(value, None, params)))
            return pairs
        if isinstance(action, M.IfAction):
            cond = self.expr(action.cond, scope)
            then_pairs = {}
            for p in M.atomic_parts(action.then):
                for k, v in self._update_pairs(m, _fake_part(p)):
                    then_pairs[k] = v
            else_pairs = {}
            for p in M.atomic_parts(action.orelse):
                for k, v in self._update_pairs(m, _fake_part(p)):
                    else_pairs[k] = v
            pairs = []
            for key in sorted(set(then_pairs) | set(else_pairs)):
                a = then_pairs.get(key, key)
                b = else_pairs.get(key, key)
                pairs.append((key, f"({cond} ? {a} : {b})"))
            return pairs
        if isinstance(action, M.Skip):
            return []
        raise EmitError(f"cannot emit update for {type(action).__name__}")

    def _env_module(self, mod: P.PModule) -> list[str]:
        out = [f"module {self.mangler.mangle(mod.name)}"]
        for v in mod.variables:
            flat = f"env.{mod.name}.{v.name}"
            info = self.c.var_named(flat)
            out.append(f"  {self.var_id(flat)} : {self._range(info)};")
        out.append("")
        for cmd in self.c.env_commands[mod.name]:
            raw = mod.commands[cmd.index]
            label = ""
            if raw.label is not None:
                ref, _ = self.c.resolver.resolve_event(raw.label)
                closure = self.c.closures.by_endpoint[ref.qualified()]
                label = f"[{self.closure_action(closure)}] "
            guard = self.expr(raw.guard, None)
            if not raw.updates:
                rhs = "true"
            else:
                with_prob = [u for u in raw.updates if u.prob is not None]
                if with_prob:
                    rhs = " + ".join(
                        f"{self.expr(u.prob, None)}:"
                        f"({self.var_id(f'env.{mod.name}.{u.var}')}'={self.expr(u.expr, None)})"
                        for u in raw.updates)
                else:
                    rhs = " & ".join(
                        f"({self.var_id(f'env.{mod.name}.{u.var}')}'={self.expr(u.expr, None)})"
                        for u in raw.updates)
            out.append(f"  {label}{guard} -> {rhs};")
        out.append("endmodule")
        return out


def _fake_part(action):
    @dataclass
    class _Part:
        source_action: object
        kind: str = "update"
    return _Part(action)


def part_value_expr(part):
    return part.source_action.value


def observed_bounds(mm: MarkovModel) -> dict[str, tuple[int, int]]:
    """Per-variable min/max over the reachable states (integer variables)."""
    bounds = {}
    for i, name in enumerate(mm.var_names):
        values = [st[i] for st in mm.states]
        ints = [v for v in values if isinstance(v, int) and not isinstance(v, bool)]
        if ints:
            bounds[name] = (min(ints), max(ints))
    return bounds


def _const_type(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, Fraction) and value.denominator != 1:
        return "double"
    if isinstance(value, Fraction) or isinstance(value, int):
        return "int"
    return "double"


def _const_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return _prob_text(value)
    return str(value)


def _prob_text(w: Fraction) -> str:
    if w.denominator == 1:
        return str(w.numerator)
    return f"{w.numerator}/{w.denominator}"


# expression emission with PRISM operators
_PRISM_BIN = {"/\\": "&", "\\/": "|", "==": "=", "!=": "!=", "=>": "=>", "iff": "<=>",
              "<": "<", "<=": "<=", ">": ">", ">=": ">=", "+": "+", "-": "-",
              "*": "*", "/": "/"}
_PRISM_PREC = {"iff": 1, "=>": 2, "\\/": 4, "/\\": 5,
               "==": 7, "!=": 7, "<": 7, "<=": 7, ">": 7, ">=": 7,
               "+": 8, "-": 8, "*": 9, "/": 9, "%": 9}


def _emit_expr(em: _ModelEmitter, e: A.Expr, scope, params=None, parent=0) -> str:
    text, prec = _emit_expr2(em, e, scope, params)
    return f"({text})" if prec < parent else text


def _emit_expr2(em: _ModelEmitter, e: A.Expr, scope, params=None):
    go = lambda x, parent=0: _emit_expr(em, x, scope, params, parent)
    if isinstance(e, A.Lit):
        if isinstance(e.value, bool):
            return _bool_text(e.value), 11
        if isinstance(e.value, Fraction) and e.value.denominator != 1:
            return _prob_text(e.value), 9
        return str(e.value), 11
    if isinstance(e, A.Ref):
        segs = e.name.segments
        model = em.c.model
        if len(segs) == 2 and model.enum(segs[0]) is not None:
            return em.mangler.mangle(str(e.name)), 11
        if scope is not None and len(segs) == 1:
            name = segs[0]
            if params is not None and name in params:
                return params[name], 11
            if name in scope.consts:
                return em.mangler.mangle(name), 11
            if name in scope.vars:
                return em.var_id(scope.vars[name][0]), 11
            raise EmitError(f"unknown name {name!r}")
        if len(segs) == 1 and segs[0] in em.c.consts:
            return em.mangler.mangle(segs[0]), 11
        ref, diags = em.c.resolver.resolve_fqn(e.name)
        if ref is None:
            raise EmitError(f"cannot resolve {e.name}")
        if ref.kind == "variable":
            return em.var_id(ref.flat), 11
        if ref.kind == "constant":
            return em.mangler.mangle(ref.path[-1]), 11
        raise EmitError(f"{e.name} is not emittable")
    if isinstance(e, A.ParamRef):
        if params is None or e.name not in params:
            raise EmitError(f"``{e.name} out of scope")
        return params[e.name], 11
    if isinstance(e, A.Unary):
        if e.op == "not":
            return f"!{go(e.operand, 10)}", 6
        return f"-{go(e.operand, 10)}", 10
    if isinstance(e, A.Binary):
        if e.op == "%":
            return f"mod({go(e.left)}, {go(e.right)})", 11
        prec = _PRISM_PREC[e.op]
        return f"{go(e.left, prec)} {_PRISM_BIN[e.op]} {go(e.right, prec + 1)}", prec
    if isinstance(e, A.Cond):
        return f"({go(e.cond)} ? {go(e.then)} : {go(e.orelse)})", 11
    if isinstance(e, A.FunCall):
        fdef = em.c.functions.get(e.name)
        if fdef is None:
            raise EmitError(f"function {e.name!r} has no definition")
        args = {p: go(a, 11) for p, a in zip(fdef.params, e.args)}
        return _emit_expr2(em, fdef.body, None, args)
    if isinstance(e, A.IsIn):
        left, _ = em.c.resolver.resolve_fqn(e.container)
        right, _ = em.c.resolver.resolve_fqn(e.state)
        ctrl = left.owner
        mach = left.decl
        m = next(x for x in em.c.machines if x.mach is mach)
        pc_id = em.var_id(f"{ctrl.name}.{mach.name}.pc")
        code = em.pc_codes[m.name][right.decl.name]
        return f"{pc_id}={code}", 7
    if isinstance(e, A.ModVarRef):
        for mod in em.c.env.modules if em.c.env else ():
            if e.module is not None and mod.name != e.module:
                continue
            for v in mod.variables:
                if v.name == e.var:
                    return em.var_id(f"env.{mod.name}.{v.name}"), 11
        raise EmitError(f"unknown module variable @{e.var}")
    if isinstance(e, A.EventVal):
        ref, _ = em.c.resolver.resolve_event(e.event)
        closure = em.c.closures.by_endpoint[ref.qualified()]
        if closure.latch is None:
            raise EmitError(f"{e.event} carries no value")
        return em.var_id(closure.latch), 11
    raise EmitError(f"cannot emit {type(e).__name__} in the model")


def _bool_text(v) -> str:
    return "true" if v else "false"


def emit_model(closed: ClosedModel, bounds: dict | None = None,
               sweep_names: set[str] | None = None,
               mangler: Mangler | None = None) -> str:
    """Emit the PRISM model text for a closed model."""
    em = _ModelEmitter(closed, bounds, sweep_names, mangler or Mangler())
    text = em.emit()
    em.mangler.check_bijective()
    return text


# --- property emission -----------------------------------------------------------


class _PropsEmitter:
    def __init__(self, closed: ClosedModel, model_emitter: _ModelEmitter):
        self.c = closed
        self.em = model_emitter

    def emit(self, spec: P.SpecAst) -> str:
        out = []
        for st in spec.statements:
            if isinstance(st, P.LabelDecl):
                out.append(f'label "{st.name}" = {self.state_expr(st.body)};')
            elif isinstance(st, P.FormulaDecl):
                out.append(f"formula {st.name} = {self.state_expr(st.body)};")
            elif isinstance(st, P.RewardsDecl):
                out.append(f'rewards "{st.name}"')
                for item in st.items:
                    prefix = ""
                    if item.event is not None:
                        ref, _ = self.c.resolver.resolve_event(item.event)
                        closure = self.c.closures.by_endpoint[ref.qualified()]
                        prefix = f"[{self.em.closure_action(closure)}] "
                    out.append(f"  {prefix}{self.state_expr(item.guard)} : "
                               f"{self.state_expr(item.value)};")
                out.append("endrewards")
        for prop in spec.properties:
            out.append(f"// {prop.name}")
            out.append(self.property_line(prop.body))
        return "\n".join(out) + "\n"

    def property_line(self, body: A.Expr) -> str:
        return self.state_expr(body)

    def state_expr(self, e: A.Expr, parent: int = 0) -> str:
        text, prec = self._expr2(e)
        return f"({text})" if prec < parent else text

    def _expr2(self, e: A.Expr):
        if isinstance(e, A.LabelRef):
            return f'"{e.name}"', 11
        if isinstance(e, A.DeadlockRef):
            return '"deadlock"', 11
        if isinstance(e, A.InitRef):
            return '"init"', 11
        if isinstance(e, A.FormulaRef):
            return e.name, 11
        if isinstance(e, A.Unary) and e.op == "not":
            return f"!{self.state_expr(e.operand, 10)}", 6
        if isinstance(e, A.Binary):
            if e.op == "%":
                return f"mod({self.state_expr(e.left)}, {self.state_expr(e.right)})", 11
            prec = _PRISM_PREC[e.op]
            left = self.state_expr(e.left, prec)
            right = self.state_expr(e.right, prec + 1)
            return f"{left} {_PRISM_BIN[e.op]} {right}", prec
        if isinstance(e, A.ProbFormula):
            head = self._pquery("P", e.query, e.bound)
            return f"{head} [ {self.path_expr(e.path)} ]", 11
        if isinstance(e, A.RewardFormula):
            name = f'{{"{e.rewards}"}}' if e.rewards else ""
            head = self._pquery(f"R{name}", e.query, e.bound)
            return f"{head} [ {self.rpath_expr(e.path)} ]", 11
        if isinstance(e, A.Forall):
            return f"A [ {self.path_expr(e.path)} ]", 11
        if isinstance(e, A.Exists):
            return f"E [ {self.path_expr(e.path)} ]", 11
        return _emit_expr2(self.em, e, None, None)

    def _pquery(self, head: str, query: str | None, bound: A.Bound | None) -> str:
        if query is not None:
            if query == A.QUERY_MIN:
                return f"{head[0]}min{head[1:]}=?"
            if query == A.QUERY_MAX:
                return f"{head[0]}max{head[1:]}=?"
            return f"{head}=?"
        return f"{head}{bound.op}{self.state_expr(bound.expr, 9)}"

    def path_expr(self, e: A.Expr, parent: int = 0) -> str:
        if isinstance(e, A.Next):
            return f"X {self.path_expr(e.operand, 3)}"
        if isinstance(e, A.Finally_):
            return f"F{self._bound(e.bound)} {self.path_expr(e.operand, 3)}"
        if isinstance(e, A.Globally):
            return f"G{self._bound(e.bound)} {self.path_expr(e.operand, 3)}"
        if isinstance(e, (A.Until, A.WeakUntil, A.Release)):
            word = {A.Until: "U", A.WeakUntil: "W", A.Release: "R"}[type(e)]
            left = self.path_expr(e.left, 4)
            right = self.path_expr(e.right, 3)
            text = f"{left} {word}{self._bound(e.bound)} {right}"
            return f"({text})" if parent > 3 else text
        if isinstance(e, A.Binary) and e.op in ("=>", "/\\", "\\/"):
            prec = _PRISM_PREC[e.op]
            left = self.path_expr(e.left, prec)
            right = self.path_expr(e.right, prec + 1)
            text = f"{left} {_PRISM_BIN[e.op]} {right}"
            return f"({text})" if prec < parent else text
        if isinstance(e, A.Unary) and e.op == "not":
            return f"!{self.path_expr(e.operand, 10)}"
        return self.state_expr(e, parent)

    def _bound(self, b: A.Bound | None) -> str:
        if b is None:
            return ""
        return f"{b.op}{self.state_expr(b.expr, 9)}"

    def rpath_expr(self, e: A.Expr) -> str:
        if isinstance(e, A.Reachable):
            return f"F {self.path_expr(e.operand, 3)}"
        if isinstance(e, A.LTLReward):
            return self.path_expr(e.operand)
        if isinstance(e, A.Cumul):
            return f"C<={self.state_expr(e.operand, 9)}"
        if isinstance(e, A.TotalReward):
            return "C"
        raise EmitError(f"{type(e).__name__} is not a reward path")


def emit_properties(closed: ClosedModel, spec: P.SpecAst,
                    mangler: Mangler | None = None,
                    bounds: dict | None = None) -> str:
    """Emit the PRISM properties text (labels, formulas, rewards, properties)."""
    em = _ModelEmitter(closed, bounds, None, mangler or Mangler())
    return _PropsEmitter(closed, em).emit(spec)


def emit_pair(closed: ClosedModel, spec: P.SpecAst,
              sweep_names: set[str] | None = None,
              bounds: dict | None = None) -> EmittedPair:
    mangler = Mangler()
    em = _ModelEmitter(closed, bounds, sweep_names, mangler)
    model_text = em.emit()
    props_text = _PropsEmitter(closed, em).emit(closed.spec if spec is None else spec)
    mangler.check_bijective()
    return EmittedPair(model_text, props_text, mangler)


# --- PRISM-subset grammar validator ------------------------------------------------


class PrismSyntaxError(ValueError):
    pass


def check_prism_model(text: str) -> list[str]:
    """Syntactic validation of an emitted PRISM model; returns error strings."""
    errors: list[str] = []
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("//")]
    if not lines or lines[0] not in ("dtmc", "mdp", "ctmc"):
        errors.append("missing model kind header (dtmc|mdp)")
        return errors
    declared: set[str] = set()
    actions: set[str] = set()
    in_module = False
    for i, ln in enumerate(lines[1:], start=2):
        try:
            if ln.startswith("const "):
                rest = ln[len("const "):]
                parts = rest.split()
                if parts[0] not in ("int", "double", "bool"):
                    raise PrismSyntaxError(f"bad const type {parts[0]!r}")
                declared.add(parts[1].rstrip(";"))
                _check_decl_semicolon(ln)
            elif ln.startswith("global "):
                name = ln[len("global "):].split(":")[0].strip()
                declared.add(name)
                _check_decl_semicolon(ln)
                _check_var_decl(ln.split(":", 1)[1])
            elif ln.startswith("module "):
                if in_module:
                    raise PrismSyntaxError("nested module")
                in_module = True
                name = ln.split()[1]
                if not name.isidentifier():
                    raise PrismSyntaxError(f"bad module name {name!r}")
            elif ln == "endmodule":
                if not in_module:
                    raise PrismSyntaxError("endmodule outside a module")
                in_module = False
            elif in_module and ln.startswith("["):
                _check_command(ln, declared, actions)
            elif in_module:
                name = ln.split(":")[0].strip()
                if not name.isidentifier():
                    raise PrismSyntaxError(f"bad variable name {name!r}")
                declared.add(name)
                _check_decl_semicolon(ln)
                _check_var_decl(ln.split(":", 1)[1])
            elif ln.startswith("rewards"):
                pass
            elif ln == "endrewards" or ln.endswith(";"):
                pass
            else:
                raise PrismSyntaxError(f"unrecognised line {ln!r}")
        except PrismSyntaxError as exc:
            errors.append(f"line {i}: {exc}")
    if in_module:
        errors.append("unterminated module")
    return errors


def _check_decl_semicolon(ln: str):
    if not ln.endswith(";"):
        raise PrismSyntaxError("declaration must end with ';'")


def _check_var_decl(rest: str):
    rest = rest.strip().rstrip(";")
    if rest.startswith("bool"):
        return
    if not rest.startswith("["):
        raise PrismSyntaxError(f"bad variable range {rest!r}")
    if ".." not in rest:
        raise PrismSyntaxError("integer ranges need '..'")


def _check_command(ln: str, declared: set[str], actions: set[str]):
    if not ln.endswith(";"):
        raise PrismSyntaxError("command must end with ';'")
    if "]" not in ln:
        raise PrismSyntaxError("command needs a '[label]' prefix")
    label = ln[1:ln.index("]")].strip()
    if label:
        if not label.isidentifier():
            raise PrismSyntaxError(f"bad action label {label!r}")
        actions.add(label)
    body = ln[ln.index("]") + 1: -1]
    if "->" not in body:
        raise PrismSyntaxError("command needs '->'")
    guard, updates = body.split("->", 1)
    _check_balanced(guard)
    _check_balanced(updates)
    for alt in _split_top(updates, "+"):
        alt = alt.strip()
        if ":" in alt and not alt.startswith("("):
            alt = alt.split(":", 1)[1]
        alt = alt.strip()
        if alt == "true":
            continue
        for assign in _split_top(alt, "&"):
            assign = assign.strip()
            if not (assign.startswith("(") and assign.endswith(")")):
                raise PrismSyntaxError(f"update {assign!r} must be parenthesised")
            if "'" not in assign:
                raise PrismSyntaxError(f"update {assign!r} must assign a primed variable")


def _split_top(text: str, sep: str) -> list[str]:
    """Split on a separator at parenthesis depth zero."""
    parts = []
    depth = 0
    current = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return parts


def _check_balanced(text: str):
    depth = 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if depth < 0:
            raise PrismSyntaxError(f"unbalanced parentheses in {text!r}")
    if depth != 0:
        raise PrismSyntaxError(f"unbalanced parentheses in {text!r}")


def check_prism_props(text: str) -> list[str]:
    """Syntactic validation of an emitted PRISM properties file."""
    errors: list[str] = []
    in_rewards = False
    for i, raw in enumerate(text.splitlines(), start=1):
        ln = raw.strip()
        if not ln or ln.startswith("//"):
            continue
        try:
            if in_rewards:
                if ln == "endrewards":
                    in_rewards = False
                elif not ln.endswith(";") or ":" not in ln:
                    raise PrismSyntaxError("reward item needs 'guard : value;'")
                continue
            if ln.startswith("rewards"):
                if not (ln.startswith('rewards "') and ln.rstrip().endswith('"')):
                    raise PrismSyntaxError('rewards header must be: rewards "name"')
                in_rewards = True
                continue
            if ln.startswith("label "):
                if "=" not in ln or not ln.endswith(";") or '"' not in ln:
                    raise PrismSyntaxError('labels look like: label "n" = expr;')
                continue
            if ln.startswith("formula "):
                if "=" not in ln or not ln.endswith(";"):
                    raise PrismSyntaxError("formulas look like: formula n = expr;")
                continue
            if ln.startswith("const "):
                continue
            if "=?" in ln and not any(ln.lstrip("!(").startswith(h)
                                      for h in ("P", "R")):
                raise PrismSyntaxError(f"unrecognised property line {ln!r}")
            _check_balanced(ln)
            if ln.count("[") != ln.count("]"):
                raise PrismSyntaxError("unbalanced brackets")
        except PrismSyntaxError as exc:
            errors.append(f"line {i}: {exc}")
    if in_rewards:
        errors.append("unterminated rewards block")
    return errors
