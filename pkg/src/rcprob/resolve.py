"""Name resolution against the model and well-formedness validation.

Qualified names in properties are resolved by walking containment from the
module root (WFREF-1/2).  `validate` runs every well-formedness condition
over a parsed model/property pair and returns an ordered, deterministic
diagnostic sequence; it never raises.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import ast as A
from . import model as M
from . import props as P
from .ast import Expr, QName

# --- diagnostics --------------------------------------------------------------


@dataclass
class Diagnostic:
    code: str
    severity: str  # "error" | "warning"
    message: str
    pos: tuple[int, int] = (0, 0)

    def to_json(self, file: str | None = None) -> str:
        rec = {
            "code": self.code,
            "severity": self.severity,
            "message": self.message,
            "file": file,
            "line": self.pos[0],
            "col": self.pos[1],
        }
        return json.dumps(rec, sort_keys=True)

    def __str__(self):
        return f"{self.pos[0]}:{self.pos[1]}: {self.severity} [{self.code}] {self.message}"


class ResolveError(Exception):
    def __init__(self, diagnostics):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = list(diagnostics)


# --- type classes --------------------------------------------------------------


@dataclass(frozen=True)
class TypeClass:
    kind: str  # bool | num | set | enum | query | path | any
    param: object = None

    def __str__(self):
        if self.kind == "set":
            return f"set({self.param})"
        if self.kind == "enum":
            return f"enum({self.param})"
        return {"bool": "boolean", "num": "numeric", "query": "formulaQuery",
                "path": "pathFormula", "any": "any"}[self.kind]


BOOL = TypeClass("bool")
NUM = TypeClass("num")
QUERY = TypeClass("query")
PATH = TypeClass("path")
ANY = TypeClass("any")


def set_of(elem: TypeClass) -> TypeClass:
    return TypeClass("set", elem)


def enum_of(name: str) -> TypeClass:
    return TypeClass("enum", name)


def type_of_typeref(t: M.TypeRef, model: M.ModelAst) -> TypeClass:
    if t.name in ("int", "nat", "real"):
        return NUM
    if t.name == "bool":
        return BOOL
    if model.enum(t.name) is not None:
        return enum_of(t.name)
    return ANY


def _is_bool(tc):  # PATH counts as boolean in temporal contexts, handled separately
    return tc.kind in ("bool", "any")


def _is_num(tc):
    return tc.kind in ("num", "any")


def _same(a, b):
    if a.kind == "any" or b.kind == "any":
        return True
    return a == b


# --- resolved references --------------------------------------------------------


@dataclass
class ResolvedRef:
    kind: str
    path: tuple[str, ...]
    decl: object = None
    type: TypeClass = ANY
    flat: str | None = None  # flat state-variable identity for vars
    owner: object = None  # containing machine/platform/controller

    def qualified(self) -> str:
        return "::".join(self.path)


_CHILD_KINDS = {
    "module", "platform", "controllerInstance", "machineInstance", "enum",
}


class Resolver:
    """Resolves qualified names and event references against a model."""

    def __init__(self, model: M.ModelAst, spec: P.SpecAst | None = None):
        self.model = model
        self.spec = spec if spec is not None else P.SpecAst()
        self._head_entities = {}
        for p in model.platforms:
            self._head_entities[p.name] = ("platform", p)
        for c in model.controllers:
            self._head_entities[c.name] = ("controllerInstance", c)
        for e in model.enums:
            self._head_entities[e.name] = ("enum", e)

    # flat identities -----------------------------------------------------

    def flat_platform_var(self, platform: M.Platform, var: str) -> str:
        return f"{platform.name}.{var}"

    def flat_machine_var(self, ctrl: M.Controller, mach: M.Machine, var: str) -> str:
        return f"{ctrl.name}.{mach.name}.{var}"

    def machine_path(self, ctrl: M.Controller, mach: M.Machine) -> tuple[str, ...]:
        return (self.model.name, ctrl.name, mach.name)

    # FQN resolution --------------------------------------------------------

    def resolve_fqn(self, qn: QName) -> tuple[ResolvedRef | None, list[Diagnostic]]:
        segs = qn.segments
        diags: list[Diagnostic] = []
        # Enum literals are type references, exempt from the module-rooted walk.
        if len(segs) == 2 and self.model.enum(segs[0]) is not None:
            enum = self.model.enum(segs[0])
            if segs[1] in enum.literals:
                return (
                    ResolvedRef("enumLiteral", (segs[0], segs[1]), enum, enum_of(enum.name)),
                    diags,
                )
        if segs[0] == self.model.name:
            entity = ("module", self.model)
        elif segs[0] in self._head_entities:
            diags.append(Diagnostic(
                "WFREF-1", "error",
                f"first segment {segs[0]!r} must be the module {self.model.name!r}",
                qn.pos,
            ))
            entity = self._head_entities[segs[0]]
        elif len(segs) == 1:
            # bare names resolve against property-file constant declarations
            decl = self.spec.find(P.ConstantDecl, segs[0])
            if decl is not None:
                return (
                    ResolvedRef("constant", (segs[0],), decl,
                                type_of_typeref(decl.type, self.model)),
                    diags,
                )
            diags.append(Diagnostic("SCOPE", "error", f"unknown name {segs[0]!r}", qn.pos))
            return None, diags
        else:
            diags.append(Diagnostic(
                "WFREF-1", "error",
                f"first segment {segs[0]!r} must be the module {self.model.name!r}",
                qn.pos,
            ))
            diags.append(Diagnostic(
                "WFREF-2", "error",
                f"{segs[1]!r} is not a child of {segs[0]!r}",
                qn.pos,
            ))
            return None, diags
        path = [segs[0]]
        for i in range(1, len(segs)):
            child = self._child(entity, segs[i])
            if child is None:
                diags.append(Diagnostic(
                    "WFREF-2", "error",
                    f"{segs[i]!r} is not a child of {segs[i - 1]!r}",
                    qn.pos,
                ))
                return None, diags
            entity = child
            path.append(segs[i])
        ref = self._make_ref(entity, tuple(path))
        if len(segs) == 1 and ref.kind != "module":
            # a known non-module head alone (e.g. a bare platform name)
            pass
        return ref, diags

    def _child(self, entity, name):
        kind, node = entity
        if kind == "module":
            got = self._head_entities.get(name)
            return got
        if kind == "platform":
            for c in node.constants:
                if c.name == name:
                    return ("constant", (node, c))
            for v in node.variables:
                if v.name == name:
                    return ("variable", (node, v))
            for e in node.events:
                if e.name == name:
                    return ("event", (node, e))
            for o in node.operations:
                if o.name == name:
                    return ("operation", (node, o))
            return None
        if kind == "controllerInstance":
            for m in node.machines:
                if m.name == name:
                    return ("machineInstance", (node, m))
            for e in node.events:
                if e.name == name:
                    return ("event", (node, e))
            return None
        if kind == "machineInstance":
            ctrl, mach = node
            for v in mach.variables:
                if v.name == name:
                    return ("variable", (ctrl, mach, v))
            for e in mach.events:
                if e.name == name:
                    return ("event", ((ctrl, mach), e))
            for f in mach.functions:
                if f.name == name:
                    return ("function", (mach, f))
            if name == mach.initial or name in mach.junctions:
                return ("junction", (ctrl, mach, name))
            st = mach.state(name)
            if st is not None:
                return ("state", (ctrl, mach, st))
            for t in mach.transitions:
                if t.id == name:
                    return ("transition", (ctrl, mach, t))
            return None
        if kind == "enum":
            if name in node.literals:
                return ("enumLiteral", (node, name))
            return None
        return None

    def _make_ref(self, entity, path) -> ResolvedRef:
        kind, node = entity
        if kind == "module":
            return ResolvedRef("module", path, node)
        if kind == "platform":
            return ResolvedRef("platform", path, node)
        if kind == "controllerInstance":
            return ResolvedRef("controllerInstance", path, node)
        if kind == "machineInstance":
            ctrl, mach = node
            return ResolvedRef("machineInstance", path, mach, owner=ctrl)
        if kind == "enum":
            return ResolvedRef("enum", path, node)
        if kind == "enumLiteral":
            enum, lit = node
            return ResolvedRef("enumLiteral", path, enum, enum_of(enum.name))
        if kind == "constant":
            owner, decl = node
            return ResolvedRef("constant", path, decl,
                               type_of_typeref(decl.type, self.model), owner=owner)
        if kind == "variable":
            if len(node) == 2:
                owner, decl = node
                flat = self.flat_platform_var(owner, decl.name)
            else:
                ctrl, mach, decl = node
                owner = mach
                flat = self.flat_machine_var(ctrl, mach, decl.name)
            return ResolvedRef("variable", path, decl,
                               type_of_typeref(decl.type, self.model), flat=flat, owner=owner)
        if kind == "event":
            owner, decl = node
            tc = type_of_typeref(decl.payload, self.model) if decl.payload else ANY
            return ResolvedRef("event", path, decl, tc, owner=owner)
        if kind == "function":
            mach, decl = node
            return ResolvedRef("function", path, decl,
                               type_of_typeref(decl.result, self.model), owner=mach)
        if kind == "operation":
            owner, decl = node
            return ResolvedRef("operation", path, decl, owner=owner)
        if kind == "junction":
            ctrl, mach, name = node
            return ResolvedRef("junction", path, name, owner=(ctrl, mach))
        if kind == "state":
            ctrl, mach, st = node
            return ResolvedRef("state", path, st, owner=(ctrl, mach))
        if kind == "transition":
            ctrl, mach, t = node
            return ResolvedRef("transition", path, t, owner=(ctrl, mach))
        raise AssertionError(kind)

    def resolve_event(self, ev: A.EventRef) -> tuple[ResolvedRef | None, list[Diagnostic]]:
        ref, diags = self.resolve_fqn(ev.name)
        if ref is not None and ref.kind != "event":
            diags.append(Diagnostic(
                "TYPE", "error", f"{ev.name} does not name an event", ev.name.pos,
            ))
            return None, diags
        if ref is not None and ev.valued and ref.decl.payload is None:
            diags.append(Diagnostic(
                "TYPE", "error",
                f"event {ev.name} has no payload, '.val' is not applicable",
                ev.name.pos,
            ))
            return None, diags
        return ref, diags


def resolve_fqn(model: M.ModelAst, spec: P.SpecAst, qn: QName) -> ResolvedRef:
    """Resolve one qualified name; raise ResolveError on any diagnostic."""
    ref, diags = Resolver(model, spec).resolve_fqn(qn)
    if diags:
        raise ResolveError(diags)
    return ref


# --- expression classification ---------------------------------------------------


@dataclass
class ClassifyCtx:
    resolver: Resolver
    params: frozenset = frozenset()
    modules: P.PModulesDecl | None = None
    definitions: P.DefinitionsDecl | None = None
    in_formula: bool = False
    _formula_stack: tuple = ()


class _Classifier:
    def __init__(self, ctx: ClassifyCtx, diags: list[Diagnostic]):
        self.ctx = ctx
        self.diags = diags
        self.resolver = ctx.resolver

    def err(self, code, msg, pos):
        self.diags.append(Diagnostic(code, "error", msg, pos))

    def classify(self, e: Expr) -> TypeClass:
        ctx = self.ctx
        if isinstance(e, A.Lit):
            if isinstance(e.value, bool):
                return BOOL
            return NUM
        if isinstance(e, A.Ref):
            ref, diags = self.resolver.resolve_fqn(e.name)
            self.diags.extend(diags)
            if ref is None:
                return ANY
            if ref.kind in ("variable", "constant", "enumLiteral"):
                return ref.type
            if ref.kind in ("module", "platform", "controllerInstance",
                            "machineInstance", "state", "junction", "transition",
                            "event", "function", "operation", "enum"):
                self.err("TYPE", f"{e.name} is a {ref.kind}, not a value", e.pos)
            return ANY
        if isinstance(e, A.Unary):
            if e.op == "not":
                t = self.classify(e.operand)
                if t.kind == "path":
                    return PATH
                if not _is_bool(t):
                    self.err("WFExp-1", f"operand of 'not' must be boolean, got {t}", e.pos)
                return BOOL
            t = self.classify(e.operand)
            if not _is_num(t):
                self.err("WFExp-3", f"operand of unary '-' must be numeric, got {t}", e.pos)
            return NUM
        if isinstance(e, A.Binary):
            return self._binary(e)
        if isinstance(e, A.Cond):
            c = self.classify(e.cond)
            if not _is_bool(c):
                self.err("WFExp-1", f"conditional guard must be boolean, got {c}", e.pos)
            t1 = self.classify(e.then)
            t2 = self.classify(e.orelse)
            if not _same(t1, t2):
                self.err("TYPE", f"conditional branches differ: {t1} vs {t2}", e.pos)
            return t1 if t1.kind != "any" else t2
        if isinstance(e, A.SetExt):
            elems = [self.classify(x) for x in e.items]
            base = elems[0]
            for t in elems[1:]:
                if not _same(base, t):
                    self.err("WFExp-4", f"set extension mixes {base} and {t}", e.pos)
                if base.kind == "any":
                    base = t
            return set_of(base)
        if isinstance(e, A.SetRange):
            for part in (e.lo, e.hi, e.step):
                if part is not None and not _is_num(self.classify(part)):
                    self.err("WFExp-3", "set range bounds must be numeric", e.pos)
            return set_of(NUM)
        if isinstance(e, A.IsIn):
            return self._is_in(e)
        if isinstance(e, A.ModVarRef):
            return self._modvar(e)
        if isinstance(e, A.LabelRef):
            decl = self.resolver.spec.find(P.LabelDecl, e.name)
            if decl is None:
                self.err("SCOPE", f"unknown label #{e.name}", e.pos)
            return BOOL
        if isinstance(e, (A.DeadlockRef, A.InitRef)):
            return BOOL
        if isinstance(e, A.FormulaRef):
            decl = self.resolver.spec.find(P.FormulaDecl, e.name)
            if decl is None:
                self.err("SCOPE", f"unknown formula `{e.name}", e.pos)
                return ANY
            if decl in self.ctx._formula_stack:
                self.err("SCOPE", f"cyclic formula reference `{e.name}", e.pos)
                return ANY
            inner = _Classifier(
                ClassifyCtx(self.resolver, self.ctx.params, self.ctx.modules,
                            self.ctx.definitions, self.ctx.in_formula,
                            self.ctx._formula_stack + (decl,)),
                self.diags,
            )
            return inner.classify(decl.body)
        if isinstance(e, A.ParamRef):
            if e.name not in ctx.params:
                self.err("SCOPE", f"``{e.name} does not name a declared parameter", e.pos)
            return ANY
        if isinstance(e, A.FunCall):
            return self._call(e)
        if isinstance(e, A.EventVal):
            ref, diags = self.resolver.resolve_event(e.event)
            self.diags.extend(diags)
            return ref.type if ref is not None else ANY
        if isinstance(e, A.Index):
            self.err("UNSUPPORTED", "array indexing is not supported", e.pos)
            return ANY
        if isinstance(e, (A.ProbFormula, A.RewardFormula)):
            return self._prob_or_reward(e)
        if isinstance(e, (A.Forall, A.Exists)):
            t = self.classify(e.path)
            if t.kind != "path":
                self.err("WFExp-6", "the bracket of Forall/Exists needs a path formula", e.pos)
            return BOOL
        if isinstance(e, A.Next):
            self.classify_bool_or_path(e.operand, e.pos)
            return PATH
        if isinstance(e, (A.Finally_, A.Globally)):
            self._bound(e.bound, e.pos)
            self.classify_bool_or_path(e.operand, e.pos)
            return PATH
        if isinstance(e, (A.Until, A.WeakUntil, A.Release)):
            self._bound(e.bound, e.pos)
            self.classify_bool_or_path(e.left, e.pos)
            self.classify_bool_or_path(e.right, e.pos)
            return PATH
        if isinstance(e, (A.Reachable, A.LTLReward, A.Cumul)):
            if isinstance(e, A.Cumul):
                if not _is_num(self.classify(e.operand)):
                    self.err("WFExp-7", "Cumul bound must be numeric", e.pos)
            else:
                self.classify_bool_or_path(e.operand, e.pos)
            return PATH
        if isinstance(e, A.TotalReward):
            return PATH
        raise AssertionError(type(e).__name__)

    def classify_bool_or_path(self, e: Expr, pos) -> TypeClass:
        t = self.classify(e)
        if t.kind == "path":
            return t
        if not _is_bool(t):
            self.err("WFExp-1", f"formula operand must be boolean, got {t}", pos)
        return BOOL

    def _binary(self, e: A.Binary) -> TypeClass:
        op = e.op
        if op in ("/\\", "\\/", "=>", "iff"):
            t1 = self.classify(e.left)
            t2 = self.classify(e.right)
            if t1.kind == "path" or t2.kind == "path":
                for t in (t1, t2):
                    if t.kind not in ("path", "bool", "any"):
                        self.err("WFExp-1", f"operands of {op!r} must be boolean, got {t}", e.pos)
                return PATH
            for t in (t1, t2):
                if not _is_bool(t):
                    self.err("WFExp-1", f"operands of {op!r} must be boolean, got {t}", e.pos)
            return BOOL
        if op in ("==", "!="):
            t1 = self.classify(e.left)
            t2 = self.classify(e.right)
            if not _same(t1, t2):
                self.err("WFExp-2", f"equality compares {t1} with {t2}", e.pos)
            return BOOL
        if op in ("<", "<=", ">", ">="):
            for side in (e.left, e.right):
                t = self.classify(side)
                if not _is_num(t):
                    self.err("WFExp-3", f"comparison operand must be numeric, got {t}", e.pos)
            return BOOL
        if op in ("+", "-", "*", "/", "%"):
            for side in (e.left, e.right):
                t = self.classify(side)
                if not _is_num(t):
                    self.err("WFExp-3", f"arithmetic operand must be numeric, got {t}", e.pos)
            return NUM
        raise AssertionError(op)

    def _is_in(self, e: A.IsIn) -> TypeClass:
        left, d1 = self.resolver.resolve_fqn(e.container)
        right, d2 = self.resolver.resolve_fqn(e.state)
        self.diags.extend(d1)
        self.diags.extend(d2)
        if left is None or right is None:
            return BOOL
        if left.kind != "machineInstance":
            self.err("WFExp-5",
                     f"the first reference of 'is in' must be a state machine, got {left.kind}",
                     e.pos)
            return BOOL
        if right.kind != "state" or right.owner[1] is not left.decl:
            self.err("WFExp-5",
                     f"{e.state} is not an immediate substate of {e.container}",
                     e.pos)
        return BOOL

    def _modvar(self, e: A.ModVarRef) -> TypeClass:
        decls = []
        if e.group is not None:
            group = self.resolver.spec.find(P.PModulesDecl, e.group)
            if group is None and self.ctx.modules is not None and self.ctx.modules.name == e.group:
                group = self.ctx.modules
            if group is None:
                self.err("SCOPE", f"unknown pmodules group {e.group!r}", e.pos)
                return ANY
            for mod in group.modules:
                if mod.name == e.module:
                    decls = [v for v in mod.variables if v.name == e.var]
        else:
            scopes = [self.ctx.modules] if self.ctx.modules is not None \
                else self.resolver.spec.of_kind(P.PModulesDecl)
            for group in scopes:
                for mod in group.modules:
                    decls.extend(v for v in mod.variables if v.name == e.var)
        if not decls:
            self.err("SCOPE", f"unknown module variable @{e.var}", e.pos)
            return ANY
        if len(decls) > 1:
            self.err("SCOPE", f"module variable @{e.var} is ambiguous", e.pos)
        v = decls[0]
        return BOOL if v.type == "bool" else NUM

    def _call(self, e: A.FunCall) -> TypeClass:
        fdef = None
        if self.ctx.definitions is not None:
            for f in self.ctx.definitions.functions:
                if f.name == e.name:
                    fdef = f
        if fdef is None:
            for decl in self.resolver.spec.of_kind(P.DefinitionsDecl):
                for f in decl.functions:
                    if f.name == e.name:
                        fdef = f
        model_fn = None
        for _, mach in self.resolver.model.machines():
            for f in mach.functions:
                if f.name == e.name:
                    model_fn = f
        if fdef is None and model_fn is None:
            self.err("SCOPE", f"unknown function &{e.name}", e.pos)
            return ANY
        if fdef is not None and len(e.args) != len(fdef.params):
            self.err("TYPE", f"&{e.name} expects {len(fdef.params)} arguments, got {len(e.args)}",
                     e.pos)
        for a in e.args:
            self.classify(a)
        if model_fn is not None:
            return type_of_typeref(model_fn.result, self.resolver.model)
        return ANY

    def _bound(self, b: A.Bound | None, pos):
        if b is None:
            return
        t = self.classify(b.expr)
        if not _is_num(t):
            self.err("WFExp-7", f"bound must be numeric, got {t}", pos)

    def _prob_or_reward(self, e) -> TypeClass:
        if isinstance(e, A.ProbFormula):
            t = self.classify(e.path)
            if t.kind != "path":
                self.err("WFExp-6", "the bracket of Prob needs a path formula", e.pos)
        else:
            if e.rewards is not None and self.resolver.spec.find(P.RewardsDecl, e.rewards) is None:
                self.err("SCOPE", f"unknown rewards {e.rewards!r}", e.pos)
            if not isinstance(e.path, A.REWARD_PATH_NODES):
                self.err("TYPE", "the bracket of Reward needs a reward path formula", e.pos)
            else:
                self.classify(e.path)
        if e.bound is not None:
            self._bound(e.bound, e.pos)
            return BOOL
        return QUERY


def classify(model: M.ModelAst, spec: P.SpecAst, expr: Expr,
             params: frozenset = frozenset(),
             modules: P.PModulesDecl | None = None,
             definitions: P.DefinitionsDecl | None = None) -> TypeClass:
    """Classify one expression; raise ResolveError on the first type error."""
    diags: list[Diagnostic] = []
    ctx = ClassifyCtx(Resolver(model, spec), params, modules, definitions)
    tc = _Classifier(ctx, diags).classify(expr)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ResolveError(errors)
    return tc


# --- model-scope expression checking ---------------------------------------------


class ModelScope:
    """Lexical scope for expressions written inside one machine."""

    def __init__(self, model: M.ModelAst, ctrl: M.Controller, mach: M.Machine):
        self.model = model
        self.ctrl = ctrl
        self.mach = mach
        self.vars: dict[str, tuple[str, M.VarDecl]] = {}
        self.consts: dict[str, M.ConstDecl] = {}
        self.functions = {f.name: f for f in mach.functions}
        self.operations: dict[str, M.OperationDecl] = {}
        platform = model.platform(ctrl.requires) if ctrl.requires else None
        if platform is not None:
            for v in platform.variables:
                self.vars[v.name] = (f"{platform.name}.{v.name}", v)
            for c in platform.constants:
                self.consts[c.name] = c
            for o in platform.operations:
                self.operations[o.name] = o
        for v in mach.variables:
            self.vars[v.name] = (f"{ctrl.name}.{mach.name}.{v.name}", v)
        self.events = {e.name: e for e in mach.events}

    def var_type(self, name: str) -> M.TypeRef | None:
        got = self.vars.get(name)
        return got[1].type if got else None


def _check_model_expr(scope: ModelScope, e: Expr, diags: list[Diagnostic],
                      const_only: bool = False) -> TypeClass:
    model = scope.model

    def go(e) -> TypeClass:
        if isinstance(e, A.Lit):
            return BOOL if isinstance(e.value, bool) else NUM
        if isinstance(e, A.Ref):
            segs = e.name.segments
            if len(segs) == 2 and model.enum(segs[0]) is not None:
                enum = model.enum(segs[0])
                if segs[1] in enum.literals:
                    return enum_of(enum.name)
                diags.append(Diagnostic("SCOPE", "error",
                                        f"enum {segs[0]} has no literal {segs[1]}", e.pos))
                return ANY
            if len(segs) != 1:
                diags.append(Diagnostic("SCOPE", "error",
                                        f"unknown name {e.name} in machine {scope.mach.name}",
                                        e.pos))
                return ANY
            name = segs[0]
            if name in scope.consts:
                return type_of_typeref(scope.consts[name].type, model)
            if name in scope.vars:
                if const_only:
                    diags.append(Diagnostic(
                        "TYPE", "error",
                        f"{name!r}: junction probabilities may only reference constants",
                        e.pos))
                return type_of_typeref(scope.vars[name][1].type, model)
            diags.append(Diagnostic("SCOPE", "error",
                                    f"unknown name {name!r} in machine {scope.mach.name}",
                                    e.pos))
            return ANY
        if isinstance(e, A.Unary):
            t = go(e.operand)
            if e.op == "not":
                if not _is_bool(t):
                    diags.append(Diagnostic("TYPE", "error",
                                            "operand of 'not' must be boolean", e.pos))
                return BOOL
            if not _is_num(t):
                diags.append(Diagnostic("TYPE", "error",
                                        "operand of unary '-' must be numeric", e.pos))
            return NUM
        if isinstance(e, A.Binary):
            t1, t2 = go(e.left), go(e.right)
            if e.op in ("/\\", "\\/"):
                for t in (t1, t2):
                    if not _is_bool(t):
                        diags.append(Diagnostic("TYPE", "error",
                                                f"operands of {e.op!r} must be boolean", e.pos))
                return BOOL
            if e.op in ("==", "!="):
                if not _same(t1, t2):
                    diags.append(Diagnostic("TYPE", "error",
                                            f"equality compares {t1} with {t2}", e.pos))
                return BOOL
            if e.op in ("<", "<=", ">", ">="):
                for t in (t1, t2):
                    if not _is_num(t):
                        diags.append(Diagnostic("TYPE", "error",
                                                "comparison operands must be numeric", e.pos))
                return BOOL
            for t in (t1, t2):
                if not _is_num(t):
                    diags.append(Diagnostic("TYPE", "error",
                                            "arithmetic operands must be numeric", e.pos))
            return NUM
        if isinstance(e, A.Cond):
            if not _is_bool(go(e.cond)):
                diags.append(Diagnostic("TYPE", "error",
                                        "conditional guard must be boolean", e.pos))
            t1, t2 = go(e.then), go(e.orelse)
            if not _same(t1, t2):
                diags.append(Diagnostic("TYPE", "error",
                                        f"conditional branches differ: {t1} vs {t2}", e.pos))
            return t1 if t1.kind != "any" else t2
        if isinstance(e, A.FunCall):
            f = scope.functions.get(e.name)
            if f is None:
                diags.append(Diagnostic("SCOPE", "error",
                                        f"unknown function {e.name!r}", e.pos))
                return ANY
            if len(e.args) != len(f.params):
                diags.append(Diagnostic("TYPE", "error",
                                        f"{e.name} expects {len(f.params)} arguments", e.pos))
            for a in e.args:
                go(a)
            return type_of_typeref(f.result, model)
        diags.append(Diagnostic("TYPE", "error",
                                f"{type(e).__name__} is not a model expression", e.pos))
        return ANY

    return go(e)


# --- full validation --------------------------------------------------------------


def validate(model: M.ModelAst, spec: P.SpecAst) -> list[Diagnostic]:
    """Run every well-formedness check; returns a deterministic diagnostic list."""
    diags: list[Diagnostic] = []
    resolver = Resolver(model, spec)
    _validate_model(model, diags)
    for st in spec.statements:
        if isinstance(st, P.ConstantDecl):
            _check_type_name(st.type, model, diags)
        elif isinstance(st, P.ConstantsConfig):
            _validate_config(resolver, st, diags)
        elif isinstance(st, P.LabelDecl):
            t = _classify_in(resolver, st.body, diags)
            if not _is_bool(t):
                diags.append(Diagnostic("TYPE", "error",
                                        f"label {st.name} must be boolean, got {t}", st.pos))
        elif isinstance(st, P.FormulaDecl):
            t = _classify_in(resolver, st.body, diags)
            if t.kind in ("path", "query"):
                diags.append(Diagnostic("TYPE", "error",
                                        f"formula {st.name} cannot be a {t}", st.pos))
        elif isinstance(st, P.RewardsDecl):
            _validate_rewards(resolver, st, diags)
        elif isinstance(st, P.DefinitionsDecl):
            _validate_defs(resolver, st, diags)
        elif isinstance(st, P.PModulesDecl):
            _validate_pmodules(resolver, st, diags)
        elif isinstance(st, P.ProbProperty):
            _validate_property(resolver, st, diags)
    return diags


def _check_type_name(t: M.TypeRef, model: M.ModelAst, diags):
    if t.name not in M.BASE_TYPES and model.enum(t.name) is None:
        diags.append(Diagnostic("TYPE", "error", f"unknown type {t.name!r}", t.pos))


def _classify_in(resolver, expr, diags, params=frozenset(), modules=None, definitions=None):
    ctx = ClassifyCtx(resolver, params, modules, definitions)
    return _Classifier(ctx, diags).classify(expr)


def _validate_model(model: M.ModelAst, diags: list[Diagnostic]):
    for e in model.enums:
        if len(set(e.literals)) != len(e.literals):
            diags.append(Diagnostic("TYPE", "error",
                                    f"enum {e.name} repeats a literal", e.pos))
    for conn in model.connections:
        if conn.is_async:
            diags.append(Diagnostic(
                "UNSUPPORTED", "error",
                "asynchronous connections are not supported; model buffering with an "
                "environment module instead", conn.pos))
    for p in model.platforms:
        for c in p.constants:
            _check_type_name(c.type, model, diags)
        for v in p.variables:
            _check_type_name(v.type, model, diags)
            if v.type.name == "real":
                diags.append(Diagnostic("TYPE", "error",
                                        "real is restricted to constants and probabilities",
                                        v.pos))
        for ev in p.events:
            if ev.payload is not None:
                _check_type_name(ev.payload, model, diags)
                if ev.payload.name == "real":
                    diags.append(Diagnostic("TYPE", "error",
                                            "real event payloads are not supported", ev.pos))
    for ctrl in model.controllers:
        for conn in ctrl.connections:
            if conn.is_async:
                diags.append(Diagnostic(
                    "UNSUPPORTED", "error",
                    "asynchronous connections are not supported; model buffering with an "
                    "environment module instead", conn.pos))
        for mach in ctrl.machines:
            _validate_machine(model, ctrl, mach, diags)


def _validate_machine(model, ctrl, mach, diags):
    scope = ModelScope(model, ctrl, mach)
    for v in mach.variables:
        _check_type_name(v.type, model, diags)
        if v.type.name == "real":
            diags.append(Diagnostic("TYPE", "error",
                                    "real is restricted to constants and probabilities", v.pos))
        _check_model_expr(scope, v.init, diags)
    junctions = set(mach.junctions)
    for t in mach.transitions:
        if t.guard is not None:
            tc = _check_model_expr(scope, t.guard, diags)
            if not _is_bool(tc):
                diags.append(Diagnostic("TYPE", "error",
                                        f"guard of {t.id} must be boolean", t.pos))
        if t.prob is not None:
            _check_model_expr(scope, t.prob, diags, const_only=True)
        if t.trigger is not None:
            _validate_trigger(scope, t, diags)
        if t.action is not None:
            _validate_action(scope, t.action, diags, f"transition {t.id}")
    for s in mach.states:
        for kind, action in (("entry", s.entry), ("exit", s.exit)):
            if action is not None:
                _validate_action(scope, action, diags, f"{kind} of {s.name}")
    # junction branches must cover each junction
    for j in mach.junctions:
        if not any(t.source == j for t in mach.transitions):
            diags.append(Diagnostic("SCOPE", "error",
                                    f"probabilistic junction {j} has no outgoing transitions",
                                    mach.pos))
    _reachability_warning(mach, diags)


def _validate_trigger(scope: ModelScope, t: M.Transition, diags):
    ev = scope.events.get(t.trigger.event)
    if ev is None:
        diags.append(Diagnostic("SCOPE", "error",
                                f"transition {t.id}: unknown trigger event {t.trigger.event!r}",
                                t.pos))
        return
    if t.trigger.op == "?":
        if ev.payload is None:
            diags.append(Diagnostic("TYPE", "error",
                                    f"transition {t.id}: input trigger on untyped event",
                                    t.pos))
        if t.trigger.var not in scope.vars:
            diags.append(Diagnostic("SCOPE", "error",
                                    f"transition {t.id}: unknown input variable {t.trigger.var!r}",
                                    t.pos))
    elif t.trigger.op == "!":
        if ev.payload is None:
            diags.append(Diagnostic("TYPE", "error",
                                    f"transition {t.id}: output trigger on untyped event",
                                    t.pos))
        else:
            _check_model_expr(scope, t.trigger.value, diags)


def _validate_action(scope: ModelScope, action: M.Action, diags, where: str):
    if isinstance(action, M.Seq):
        for p in action.parts:
            _validate_action(scope, p, diags, where)
        return
    if isinstance(action, M.Skip):
        return
    if isinstance(action, M.Assign):
        if action.target not in scope.vars:
            diags.append(Diagnostic("SCOPE", "error",
                                    f"{where}: assignment to unknown variable {action.target!r}",
                                    action.pos))
            return
        vt = type_of_typeref(scope.vars[action.target][1].type, scope.model)
        et = _check_model_expr(scope, action.expr, diags)
        if not _same(vt, et):
            diags.append(Diagnostic("TYPE", "error",
                                    f"{where}: assigning {et} to {vt} variable "
                                    f"{action.target!r}", action.pos))
        return
    if isinstance(action, M.Comm):
        ev = scope.events.get(action.event)
        if ev is None:
            diags.append(Diagnostic("SCOPE", "error",
                                    f"{where}: unknown event {action.event!r}", action.pos))
            return
        if action.op == "!":
            if ev.payload is None:
                diags.append(Diagnostic("TYPE", "error",
                                        f"{where}: output on untyped event {action.event!r}",
                                        action.pos))
            else:
                _check_model_expr(scope, action.value, diags)
        elif action.op == "?":
            if ev.payload is None:
                diags.append(Diagnostic("TYPE", "error",
                                        f"{where}: input on untyped event {action.event!r}",
                                        action.pos))
            if action.var not in scope.vars:
                diags.append(Diagnostic("SCOPE", "error",
                                        f"{where}: unknown input variable {action.var!r}",
                                        action.pos))
        return
    if isinstance(action, M.OpCall):
        op = scope.operations.get(action.name)
        if op is None:
            diags.append(Diagnostic("SCOPE", "error",
                                    f"{where}: unknown operation {action.name!r}", action.pos))
            return
        if len(action.args) != len(op.params):
            diags.append(Diagnostic("TYPE", "error",
                                    f"{where}: {action.name} expects {len(op.params)} arguments",
                                    action.pos))
        for a in action.args:
            _check_model_expr(scope, a, diags)
        return
    if isinstance(action, M.IfAction):
        tc = _check_model_expr(scope, action.cond, diags)
        if not _is_bool(tc):
            diags.append(Diagnostic("TYPE", "error",
                                    f"{where}: conditional guard must be boolean", action.pos))
        _validate_action(scope, action.then, diags, where)
        _validate_action(scope, action.orelse, diags, where)
        if not M.is_atomic(action):
            diags.append(Diagnostic("UNSUPPORTED", "error",
                                    f"{where}: conditional actions with non-atomic branches "
                                    "are not supported", action.pos))
        return
    raise AssertionError(type(action).__name__)


def _reachability_warning(mach: M.Machine, diags):
    succ: dict[str, set[str]] = {}
    for t in mach.transitions:
        succ.setdefault(t.source, set()).add(t.target)
    seen = {mach.initial}
    frontier = [mach.initial]
    while frontier:
        node = frontier.pop()
        for nxt in succ.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    for s in mach.states:
        if s.name not in seen:
            diags.append(Diagnostic("SCOPE", "warning",
                                    f"state {s.name} is unreachable in the node graph of "
                                    f"{mach.name}", s.pos))


def _const_value_type(resolver, expr, diags) -> TypeClass:
    cls = _Classifier(ClassifyCtx(resolver), diags)
    return cls.classify(expr)


def _literal_value(expr):
    if isinstance(expr, A.Lit):
        return expr.value
    if isinstance(expr, A.Unary) and expr.op == "neg":
        inner = _literal_value(expr.operand)
        if inner is not None and not isinstance(inner, bool):
            return -inner
    if isinstance(expr, A.Ref) and len(expr.name.segments) == 2:
        return str(expr.name)  # enum literal
    return None


def _validate_config(resolver: Resolver, cfg: P.ConstantsConfig, diags):
    seen = set()
    for entry in cfg.entries:
        key = str(entry.name)
        if key in seen:
            diags.append(Diagnostic("SCOPE", "error",
                                    f"configuration {cfg.name} sets {key} twice", entry.pos))
        seen.add(key)
        ref, rdiags = resolver.resolve_fqn(entry.name)
        diags.extend(rdiags)
        if ref is not None and ref.kind != "constant":
            diags.append(Diagnostic("TYPE", "error",
                                    f"{key} is a {ref.kind}, not a constant", entry.pos))
            continue
        spec = entry.spec
        if isinstance(spec, P.Exactly):
            _const_value_type(resolver, spec.value, diags)
            if _literal_value(spec.value) is None:
                diags.append(Diagnostic("TYPE", "error",
                                        f"configuration value for {key} must be a literal",
                                        entry.pos))
        elif isinstance(spec, P.FromSet):
            if not spec.values:
                diags.append(Diagnostic("TYPE", "error",
                                        f"empty value set for {key}", entry.pos))
            for v in spec.values:
                if _literal_value(v) is None:
                    diags.append(Diagnostic("TYPE", "error",
                                            f"set values for {key} must be literals", entry.pos))
        elif isinstance(spec, P.FromRange):
            lo = _literal_value(spec.lo)
            hi = _literal_value(spec.hi)
            step = _literal_value(spec.step) if spec.step is not None else 1
            if lo is None or hi is None or step is None:
                diags.append(Diagnostic("TYPE", "error",
                                        f"range bounds for {key} must be literals", entry.pos))
                continue
            if step <= 0:
                diags.append(Diagnostic("TYPE", "error",
                                        f"range step for {key} must be positive", entry.pos))
            elif lo > hi:
                diags.append(Diagnostic("TYPE", "error",
                                        f"empty range for {key}: {lo} > {hi}", entry.pos))


def _validate_rewards(resolver: Resolver, decl: P.RewardsDecl, diags):
    for item in decl.items:
        if item.event is not None:
            _, ediags = resolver.resolve_event(item.event)
            diags.extend(ediags)
        t = _classify_in(resolver, item.guard, diags)
        if not _is_bool(t):
            diags.append(Diagnostic("TYPE", "error",
                                    f"reward guard in {decl.name} must be boolean", item.pos))
        tv = _classify_in(resolver, item.value, diags)
        if not _is_num(tv):
            diags.append(Diagnostic("TYPE", "error",
                                    f"reward value in {decl.name} must be numeric", item.pos))


def _validate_defs(resolver: Resolver, decl: P.DefinitionsDecl, diags):
    for f in decl.functions:
        if len(set(f.params)) != len(f.params):
            diags.append(Diagnostic("SCOPE", "error",
                                    f"pfunction {f.name} repeats a parameter", f.pos))
        _classify_in(resolver, f.body, diags, params=frozenset(f.params), definitions=decl)
    for op in decl.operations:
        if len(set(op.params)) != len(op.params):
            diags.append(Diagnostic("SCOPE", "error",
                                    f"poperation {op.name} repeats a parameter", op.pos))
        for target, value in op.assignments:
            ref, rdiags = resolver.resolve_fqn(target)
            diags.extend(rdiags)
            if ref is not None and ref.kind != "variable":
                diags.append(Diagnostic("TYPE", "error",
                                        f"poperation {op.name} assigns to {ref.kind} {target}",
                                        op.pos))
            _classify_in(resolver, value, diags, params=frozenset(op.params), definitions=decl)


def _validate_pmodules(resolver: Resolver, decl: P.PModulesDecl, diags):
    names = set()
    for mod in decl.modules:
        if mod.name in names:
            diags.append(Diagnostic("SCOPE", "error",
                                    f"duplicate pmodule name {mod.name!r}", mod.pos))
        names.add(mod.name)
        vnames = set()
        for v in mod.variables:
            if v.name in vnames:
                diags.append(Diagnostic("SCOPE", "error",
                                        f"pmodule {mod.name} repeats variable {v.name!r}", v.pos))
            vnames.add(v.name)
            if v.type != "bool":
                lo = _literal_value(v.type[0])
                hi = _literal_value(v.type[1])
                if lo is None or hi is None:
                    diags.append(Diagnostic("TYPE", "error",
                                            f"range bounds of @{v.name} must be literals", v.pos))
                elif lo > hi:
                    diags.append(Diagnostic("TYPE", "error",
                                            f"empty range for @{v.name}: {lo} > {hi}", v.pos))
        for cmd in mod.commands:
            if cmd.label is not None:
                _, ediags = resolver.resolve_event(cmd.label)
                diags.extend(ediags)
            t = _classify_in(resolver, cmd.guard, diags, modules=decl)
            if not _is_bool(t):
                diags.append(Diagnostic("TYPE", "error",
                                        f"guard in pmodule {mod.name} must be boolean", cmd.pos))
            with_prob = [u for u in cmd.updates if u.prob is not None]
            if with_prob and len(with_prob) != len(cmd.updates):
                diags.append(Diagnostic("TYPE", "error",
                                        f"pmodule {mod.name}: either all updates of a command "
                                        "carry probabilities or none do", cmd.pos))
            for u in cmd.updates:
                if u.var not in vnames:
                    diags.append(Diagnostic("SCOPE", "error",
                                            f"pmodule {mod.name}: update target @{u.var} is not "
                                            "declared in this module", u.pos))
                if u.prob is not None:
                    _classify_in(resolver, u.prob, diags, modules=decl)
                _classify_in(resolver, u.expr, diags, modules=decl)


def _effective_clause(resolver, clause, ref_kind, wf_code, what, diags, pos):
    """Resolve a with-clause to its statement, checking WFProp-2/3/4."""
    if clause is None:
        return None
    if clause.inline is not None:
        return clause.inline
    target = None
    for kind in (P.ConstantsConfig, P.DefinitionsDecl, P.PModulesDecl):
        found = resolver.spec.find(kind, clause.ref)
        if found is not None:
            target = found
            break
    if target is None:
        diags.append(Diagnostic("SCOPE", "error",
                                f"unknown {what} reference {clause.ref!r}", pos))
        return None
    if not isinstance(target, ref_kind):
        diags.append(Diagnostic(wf_code, "error",
                                f"{clause.ref!r} after 'with {what}' must name a "
                                f"{ref_kind.__name__}, found {type(target).__name__}", pos))
        return None
    return target


def property_context(resolver: Resolver, prop: P.ProbProperty, diags):
    """Resolve a property's with-clauses (WFProp-2/3/4)."""
    config = _effective_clause(resolver, prop.with_constants, P.ConstantsConfig,
                               "WFProp-2", "constants", diags, prop.pos)
    defs = _effective_clause(resolver, prop.with_definitions, P.DefinitionsDecl,
                             "WFProp-3", "definitions", diags, prop.pos)
    modules = _effective_clause(resolver, prop.with_modules, P.PModulesDecl,
                                "WFProp-4", "modules", diags, prop.pos)
    return config, defs, modules


def _validate_property(resolver: Resolver, prop: P.ProbProperty, diags):
    config, defs, modules = property_context(resolver, prop, diags)
    # inline with-clause content gets the same checks as named statements
    if prop.with_constants is not None and prop.with_constants.inline is not None:
        _validate_config(resolver, config, diags)
    if prop.with_definitions is not None and prop.with_definitions.inline is not None:
        _validate_defs(resolver, defs, diags)
    if prop.with_modules is not None and prop.with_modules.inline is not None:
        _validate_pmodules(resolver, modules, diags)
    t = _classify_in(resolver, prop.body, diags, modules=modules, definitions=defs)
    if not (_is_bool(t) or t.kind == "query"):
        diags.append(Diagnostic("WFProp-1", "error",
                                f"property {prop.name} must be boolean or a query, got {t}",
                                prop.pos))
    # completeness: all loose symbols must be covered by the attached context
    loose_consts, loose_funcs, loose_ops = M.loose_symbols(resolver.model)
    covered = set()
    if config is not None:
        for entry in config.entries:
            covered.add(entry.name.segments[-1])
    for name in sorted(loose_consts - covered):
        diags.append(Diagnostic("SCOPE", "error",
                                f"property {prop.name}: loose constant {name!r} is not covered "
                                "by its constant configuration", prop.pos))
    defined = set()
    if defs is not None:
        defined |= {f.name for f in defs.functions}
        defined |= {o.name for o in defs.operations}
    for name in sorted(loose_funcs - defined):
        diags.append(Diagnostic("SCOPE", "error",
                                f"property {prop.name}: loose function {name!r} is not defined "
                                "by its definitions", prop.pos))
    for name in sorted(loose_ops - defined):
        diags.append(Diagnostic("SCOPE", "error",
                                f"property {prop.name}: loose operation {name!r} is not defined "
                                "by its definitions", prop.pos))
    # property-file constants used by the body must be configured as well
    used = _spec_consts_used(resolver, prop.body)
    for name in sorted(used - covered):
        diags.append(Diagnostic("SCOPE", "error",
                                f"property {prop.name}: constant {name!r} is not covered "
                                "by its constant configuration", prop.pos))


def _spec_consts_used(resolver: Resolver, body: Expr) -> set[str]:
    used = set()
    names = {s.name for s in resolver.spec.of_kind(P.ConstantDecl)}
    stack = [body]
    seen_formulas = set()
    while stack:
        e = stack.pop()
        for node in A.walk(e):
            if isinstance(node, A.Ref) and len(node.name.segments) == 1 \
                    and node.name.segments[0] in names:
                used.add(node.name.segments[0])
            elif isinstance(node, A.LabelRef):
                decl = resolver.spec.find(P.LabelDecl, node.name)
                if decl is not None and node.name not in seen_formulas:
                    seen_formulas.add(node.name)
                    stack.append(decl.body)
            elif isinstance(node, A.FormulaRef):
                decl = resolver.spec.find(P.FormulaDecl, node.name)
                if decl is not None and ("f:" + node.name) not in seen_formulas:
                    seen_formulas.add("f:" + node.name)
                    stack.append(decl.body)
    return used
