"""Core strategy language and the desugaring that targets it.

The core has no sugar: rules, where-clauses, term applications `<s> p`,
anonymous rules and `s => p` are all eliminated here.  Desugaring also
canonicalizes formal parameter names to `$s0..`/`$t0..` so that a
definition's core body is self-contained; user identifiers can never
start with `$`, so generated names are capture-free by construction.

Core strategies and patterns serialize to the universal term syntax;
compiled unit files are the canonical printing of these terms.
"""

from __future__ import annotations

from dataclasses import dataclass

from .terms import Appl, FreshNames, IntLit, ListTerm, StrLit, Term, appl, lst
from . import syntax as S
from .syntax import ConstructorKey, StrategyKey

# -- core nodes ---------------------------------------------------------------


@dataclass(frozen=True)
class Id:
    pass


@dataclass(frozen=True)
class Fail:
    pass


@dataclass(frozen=True)
class Match:
    pat: object


@dataclass(frozen=True)
class Build:
    pat: object


@dataclass(frozen=True)
class Seq:
    left: object
    right: object


@dataclass(frozen=True)
class LChoice:
    left: object
    right: object


@dataclass(frozen=True)
class Scope:
    names: tuple
    body: object


@dataclass(frozen=True)
class Call:
    key: StrategyKey
    sargs: tuple = ()
    targs: tuple = ()


@dataclass(frozen=True)
class AmbRef:
    name: str


@dataclass(frozen=True)
class CallPrim:
    name: str
    targs: tuple = ()


@dataclass(frozen=True)
class All:
    body: object


@dataclass(frozen=True)
class DefineDR:
    name: str
    lhs: object
    rhs: object


@dataclass(frozen=True)
class UndefineDR:
    name: str
    key: object


@dataclass(frozen=True)
class ScopeDR:
    name: str
    body: object


class DesugarError(Exception):
    pass


# -- desugaring ---------------------------------------------------------------


class _Desugarer:
    def __init__(self, key: StrategyKey, smap, tmap, modifier, fresh: FreshNames):
        self.key = key
        self.smap = smap  # sparam name -> canonical $s name
        self.tmap = tmap  # tparam name -> canonical $t name
        self.modifier = modifier
        self.fresh = fresh

    def shadowed(self, names):
        if not any(n in self.smap or n in self.tmap for n in names):
            return self
        child = _Desugarer(self.key, dict(self.smap), dict(self.tmap), self.modifier, self.fresh)
        for n in names:
            child.smap.pop(n, None)
            child.tmap.pop(n, None)
        return child

    # patterns: rename term parameters, reject leftover applications

    def pat(self, p):
        if isinstance(p, S.PVar):
            return S.PVar(self.tmap.get(p.name, p.name))
        if isinstance(p, (S.PWild, S.PInt, S.PStr)):
            return p
        if isinstance(p, S.PAppl):
            return S.PAppl(p.constructor, tuple(self.pat(a) for a in p.args))
        if isinstance(p, S.PList):
            return S.PList(tuple(self.pat(a) for a in p.items),
                           self.pat(p.tail) if p.tail is not None else None)
        if isinstance(p, S.PTuple):
            return S.PTuple(tuple(self.pat(a) for a in p.items))
        if isinstance(p, S.PAs):
            return S.PAs(self.tmap.get(p.name, p.name), self.pat(p.pat))
        if isinstance(p, S.PGeneric):
            return S.PGeneric(self.pat(p.fun), self.pat(p.args))
        if isinstance(p, S.PApply):
            raise DesugarError("term application is not allowed in this position")
        raise TypeError(f"not a pattern: {p!r}")

    # build positions: lift nested applications out, then build

    def build(self, p):
        if isinstance(p, S.PApply):
            return Seq(self.build(p.pat), self.strategy(p.strategy))
        lifted = []
        stripped = self._strip_applies(p, lifted)
        built = Build(self.pat(stripped))
        if not lifted:
            return built
        body = built
        for var, s, inner in reversed(lifted):
            apply_core = Seq(Seq(self.build(inner), self.strategy(s)), Match(S.PVar(var)))
            body = Seq(self._where(apply_core), body)
        return Scope(tuple(v for v, _, _ in lifted), body)

    def _strip_applies(self, p, lifted):
        if isinstance(p, S.PApply):
            var = self.fresh.next("$v")
            lifted.append((var, p.strategy, p.pat))
            return S.PVar(var)
        if isinstance(p, S.PAppl):
            return S.PAppl(p.constructor, tuple(self._strip_applies(a, lifted) for a in p.args))
        if isinstance(p, S.PList):
            tail = self._strip_applies(p.tail, lifted) if p.tail is not None else None
            return S.PList(tuple(self._strip_applies(a, lifted) for a in p.items), tail)
        if isinstance(p, S.PTuple):
            return S.PTuple(tuple(self._strip_applies(a, lifted) for a in p.items))
        if isinstance(p, S.PAs):
            return S.PAs(p.name, self._strip_applies(p.pat, lifted))
        if isinstance(p, S.PGeneric):
            return S.PGeneric(self._strip_applies(p.fun, lifted),
                              self._strip_applies(p.args, lifted))
        return p

    def _where(self, body):
        w = self.fresh.next("$w")
        return Scope((w,), Seq(Match(S.PVar(w)), Seq(body, Build(S.PVar(w)))))

    # strategy expressions

    def strategy(self, s):
        if isinstance(s, S.SId):
            return Id()
        if isinstance(s, S.SFail):
            return Fail()
        if isinstance(s, S.SMatch):
            return Match(self.pat(s.pat))
        if isinstance(s, S.SBuild):
            return self.build(s.pat)
        if isinstance(s, S.SSeq):
            return Seq(self.strategy(s.left), self.strategy(s.right))
        if isinstance(s, S.SChoice):
            return LChoice(self.strategy(s.left), self.strategy(s.right))
        if isinstance(s, S.SScope):
            inner = self.shadowed(s.names)
            return Scope(s.names, inner.strategy(s.body))
        if isinstance(s, S.SApply):
            return Seq(self.build(s.pat), self.strategy(s.strategy))
        if isinstance(s, S.SArrow):
            return Seq(self.strategy(s.strategy), Match(self.pat(s.pat)))
        if isinstance(s, S.SWhere):
            return self._where(self.strategy(s.body))
        if isinstance(s, S.SLambdaRule):
            params = set(self.smap) | set(self.tmap)
            names = tuple(v for v in pattern_vars(s.lhs) if v not in params)
            inner = self.shadowed(names)
            return Scope(names, Seq(Match(inner.pat(s.lhs)), inner.build(s.rhs)))
        if isinstance(s, S.SAll):
            return All(self.strategy(s.body))
        if isinstance(s, S.SPrim):
            return CallPrim(s.name, tuple(self.pat(t) for t in s.targs))
        if isinstance(s, S.SBareName):
            return self.name_ref(s.name, in_arg=False)
        if isinstance(s, S.SCall):
            if s.name in self.smap:
                raise DesugarError(f"strategy parameter {s.name!r} cannot take arguments")
            sargs = tuple(self.strategy_arg(a) for a in s.sargs)
            targs = tuple(self.pat(t) for t in s.targs)
            return Call(StrategyKey(s.name, len(sargs), len(targs)), sargs, targs)
        if isinstance(s, S.SProceed):
            return self.proceed(s)
        if isinstance(s, S.SDefineDR):
            return DefineDR(s.name, self.pat(s.lhs), self.pat(s.rhs))
        if isinstance(s, S.SUndefineDR):
            return UndefineDR(s.name, self.pat(s.key))
        if isinstance(s, S.SScopeDR):
            return ScopeDR(s.name, self.strategy(s.body))
        raise TypeError(f"not a strategy expression: {s!r}")

    def strategy_arg(self, a):
        # Only a bare name directly in argument position is ambiguous.
        if isinstance(a, S.SBareName):
            return self.name_ref(a.name, in_arg=True)
        return self.strategy(a)

    def name_ref(self, name, in_arg):
        if name in self.smap:
            return Call(StrategyKey(self.smap[name], 0, 0))
        if in_arg:
            return AmbRef(name)
        return Call(StrategyKey(name, 0, 0))

    def proceed(self, s: S.SProceed):
        if self.modifier != S.EXTEND:
            raise DesugarError("'proceed' is only allowed inside an extend definition")
        orig = StrategyKey(self.key.name + "$orig", self.key.sarity, self.key.tarity)
        if not s.explicit:
            sargs = tuple(Call(StrategyKey(f"$s{i}", 0, 0)) for i in range(self.key.sarity))
            targs = tuple(S.PVar(f"$t{i}") for i in range(self.key.tarity))
            return Call(orig, sargs, targs)
        if len(s.sargs) != self.key.sarity or len(s.targs) != self.key.tarity:
            raise DesugarError("'proceed' arguments must match the enclosing definition's arity")
        return Call(orig,
                    tuple(self.strategy_arg(a) for a in s.sargs),
                    tuple(self.pat(t) for t in s.targs))


def pattern_vars(p, out=None) -> list[str]:
    """Variable names in a surface pattern, first occurrence first.

    Descends into embedded applications, both their argument pattern and
    any patterns inside the applied strategy.
    """
    if out is None:
        out = []
    if isinstance(p, S.PVar):
        if p.name not in out:
            out.append(p.name)
    elif isinstance(p, S.PAppl):
        for a in p.args:
            pattern_vars(a, out)
    elif isinstance(p, S.PList):
        for a in p.items:
            pattern_vars(a, out)
        if p.tail is not None:
            pattern_vars(p.tail, out)
    elif isinstance(p, S.PTuple):
        for a in p.items:
            pattern_vars(a, out)
    elif isinstance(p, S.PAs):
        if p.name not in out:
            out.append(p.name)
        pattern_vars(p.pat, out)
    elif isinstance(p, S.PGeneric):
        pattern_vars(p.fun, out)
        pattern_vars(p.args, out)
    elif isinstance(p, S.PApply):
        _expr_pattern_vars(p.strategy, out)
        pattern_vars(p.pat, out)
    return out


def _expr_pattern_vars(s, out):
    if isinstance(s, (S.SMatch, S.SBuild)):
        pattern_vars(s.pat, out)
    elif isinstance(s, (S.SSeq, S.SChoice)):
        _expr_pattern_vars(s.left, out)
        _expr_pattern_vars(s.right, out)
    elif isinstance(s, (S.SApply, S.SArrow)):
        _expr_pattern_vars(s.strategy, out)
        pattern_vars(s.pat, out)
    elif isinstance(s, (S.SScope, S.SScopeDR, S.SAll, S.SWhere)):
        _expr_pattern_vars(s.body, out)
    elif isinstance(s, S.SCall):
        for a in s.sargs:
            _expr_pattern_vars(a, out)
        for t in s.targs:
            pattern_vars(t, out)
    elif isinstance(s, S.SPrim):
        for t in s.targs:
            pattern_vars(t, out)
    elif isinstance(s, S.SDefineDR):
        pattern_vars(s.lhs, out)
        pattern_vars(s.rhs, out)
    elif isinstance(s, S.SUndefineDR):
        pattern_vars(s.key, out)
    elif isinstance(s, S.SLambdaRule):
        pass  # scopes its own variables
    return out


def _canonical_params(sparams, tparams):
    seen = set()
    for name in list(sparams) + list(tparams):
        if name in seen:
            raise DesugarError(f"duplicate parameter name {name!r}")
        seen.add(name)
    smap = {name: f"$s{i}" for i, name in enumerate(sparams)}
    tmap = {name: f"$t{i}" for i, name in enumerate(tparams)}
    return smap, tmap


def desugar_to_core(d, fresh: FreshNames):
    """Desugar one definition.

    Strategy and rule definitions yield `(StrategyKey, core)`; overlay
    definitions pass through as `(ConstructorKey, OverlayDef)` after a
    hygiene check (an overlay body may only mention its parameters).
    """
    if isinstance(d, S.OverlayDef):
        if len(set(d.params)) != len(d.params):
            raise DesugarError(f"duplicate overlay parameter in {d.name!r}")
        free = [v for v in pattern_vars(d.body) if v not in d.params]
        if free:
            raise DesugarError(
                f"overlay {d.name!r} body uses undeclared variables: {', '.join(free)}")
        return d.key(), d
    if isinstance(d, S.StrategyDef):
        key = d.key()
        smap, tmap = _canonical_params(d.sparams, d.tparams)
        ds = _Desugarer(key, smap, tmap, d.modifier, fresh)
        return key, ds.strategy(d.body)
    if isinstance(d, S.RuleDef):
        key = d.key()
        smap, tmap = _canonical_params(d.sparams, d.tparams)
        ds = _Desugarer(key, smap, tmap, d.modifier, fresh)
        scope_vars = []
        pattern_vars(d.lhs, scope_vars)
        pattern_vars(d.rhs, scope_vars)
        if d.where is not None:
            _expr_pattern_vars(d.where, scope_vars)
        scope_vars = tuple(v for v in scope_vars if v not in smap and v not in tmap)
        tail = ds.build(d.rhs)
        if d.where is not None:
            tail = Seq(ds._where(ds.strategy(d.where)), tail)
        body = Seq(Match(ds.pat(d.lhs)), tail)
        if scope_vars:
            body = Scope(scope_vars, body)
        return key, body
    raise TypeError(f"cannot desugar {d!r}")


# -- usage collection ---------------------------------------------------------


@dataclass
class UsageInfo:
    used_strs: set
    used_cons: set
    amb_sites: set
    uses_dr: set


def collect_usage(core) -> UsageInfo:
    """Over-approximate the names a core body can touch.

    Compiler-generated calls (`$s0`, `f$orig`) are resolved by other
    means and are not usage.
    """
    info = UsageInfo(set(), set(), set(), set())
    _walk_core(core, info)
    return info


def _walk_core(c, info):
    if isinstance(c, (Id, Fail, AmbRef)):
        if isinstance(c, AmbRef):
            info.amb_sites.add(c.name)
        return
    if isinstance(c, (Match, Build)):
        _walk_pat(c.pat, info)
    elif isinstance(c, (Seq, LChoice)):
        _walk_core(c.left, info)
        _walk_core(c.right, info)
    elif isinstance(c, (Scope, All, ScopeDR)):
        if isinstance(c, ScopeDR):
            info.uses_dr.add(c.name)
        _walk_core(c.body, info)
    elif isinstance(c, Call):
        if "$" not in c.key.name:
            info.used_strs.add(c.key)
        for a in c.sargs:
            _walk_core(a, info)
        for t in c.targs:
            _walk_pat(t, info)
    elif isinstance(c, CallPrim):
        for t in c.targs:
            _walk_pat(t, info)
    elif isinstance(c, DefineDR):
        info.uses_dr.add(c.name)
        _walk_pat(c.lhs, info)
        _walk_pat(c.rhs, info)
    elif isinstance(c, UndefineDR):
        info.uses_dr.add(c.name)
        _walk_pat(c.key, info)
    else:
        raise TypeError(f"not a core strategy: {c!r}")


def _walk_pat(p, info):
    if isinstance(p, S.PAppl):
        info.used_cons.add(p.key())
        for a in p.args:
            _walk_pat(a, info)
    elif isinstance(p, S.PList):
        for a in p.items:
            _walk_pat(a, info)
        if p.tail is not None:
            _walk_pat(p.tail, info)
    elif isinstance(p, S.PTuple):
        for a in p.items:
            _walk_pat(a, info)
    elif isinstance(p, S.PAs):
        _walk_pat(p.pat, info)
    elif isinstance(p, S.PGeneric):
        _walk_pat(p.fun, info)
        _walk_pat(p.args, info)


def pattern_constructors(p, out=None) -> set:
    if out is None:
        out = set()
    info = UsageInfo(set(), out, set(), set())
    _walk_pat(p, info)
    return out


# -- term (de)serialization ---------------------------------------------------


def skey_to_term(k: StrategyKey) -> Term:
    return appl("Key", StrLit(k.name), IntLit(k.sarity), IntLit(k.tarity))


def skey_from_term(t: Term) -> StrategyKey:
    assert isinstance(t, Appl) and t.constructor == "Key" and len(t.children) == 3
    name, s, a = t.children
    return StrategyKey(name.value, s.value, a.value)


def ckey_to_term(k: ConstructorKey) -> Term:
    return appl("CKey", StrLit(k.name), IntLit(k.arity))


def ckey_from_term(t: Term) -> ConstructorKey:
    assert isinstance(t, Appl) and t.constructor == "CKey" and len(t.children) == 2
    return ConstructorKey(t.children[0].value, t.children[1].value)


def pattern_to_term(p) -> Term:
    if isinstance(p, S.PVar):
        return appl("PVar", StrLit(p.name))
    if isinstance(p, S.PWild):
        return appl("PWild")
    if isinstance(p, S.PAppl):
        return appl("PAppl", StrLit(p.constructor), ListTerm(tuple(pattern_to_term(a) for a in p.args)))
    if isinstance(p, S.PInt):
        return appl("PInt", IntLit(p.value))
    if isinstance(p, S.PStr):
        return appl("PStr", StrLit(p.value))
    if isinstance(p, S.PList):
        tail = appl("Tail", pattern_to_term(p.tail)) if p.tail is not None else appl("NoTail")
        return appl("PList", ListTerm(tuple(pattern_to_term(a) for a in p.items)), tail)
    if isinstance(p, S.PTuple):
        return appl("PTuple", ListTerm(tuple(pattern_to_term(a) for a in p.items)))
    if isinstance(p, S.PAs):
        return appl("PAs", StrLit(p.name), pattern_to_term(p.pat))
    if isinstance(p, S.PGeneric):
        return appl("PGeneric", pattern_to_term(p.fun), pattern_to_term(p.args))
    raise TypeError(f"cannot serialize pattern {p!r}")


def pattern_from_term(t: Term):
    c = t.constructor
    k = t.children
    if c == "PVar":
        return S.PVar(k[0].value)
    if c == "PWild":
        return S.PWild()
    if c == "PAppl":
        return S.PAppl(k[0].value, tuple(pattern_from_term(a) for a in k[1].items))
    if c == "PInt":
        return S.PInt(k[0].value)
    if c == "PStr":
        return S.PStr(k[0].value)
    if c == "PList":
        tail = pattern_from_term(k[1].children[0]) if k[1].constructor == "Tail" else None
        return S.PList(tuple(pattern_from_term(a) for a in k[0].items), tail)
    if c == "PTuple":
        return S.PTuple(tuple(pattern_from_term(a) for a in k[0].items))
    if c == "PAs":
        return S.PAs(k[0].value, pattern_from_term(k[1]))
    if c == "PGeneric":
        return S.PGeneric(pattern_from_term(k[0]), pattern_from_term(k[1]))
    raise ValueError(f"not a pattern term: {c}")


def core_to_term(s) -> Term:
    if isinstance(s, Id):
        return appl("Id")
    if isinstance(s, Fail):
        return appl("Fail")
    if isinstance(s, Match):
        return appl("Match", pattern_to_term(s.pat))
    if isinstance(s, Build):
        return appl("Build", pattern_to_term(s.pat))
    if isinstance(s, Seq):
        return appl("Seq", core_to_term(s.left), core_to_term(s.right))
    if isinstance(s, LChoice):
        return appl("LChoice", core_to_term(s.left), core_to_term(s.right))
    if isinstance(s, Scope):
        return appl("Scope", ListTerm(tuple(StrLit(n) for n in s.names)), core_to_term(s.body))
    if isinstance(s, Call):
        return appl("Call", skey_to_term(s.key),
                    ListTerm(tuple(core_to_term(a) for a in s.sargs)),
                    ListTerm(tuple(pattern_to_term(t) for t in s.targs)))
    if isinstance(s, AmbRef):
        return appl("AmbRef", StrLit(s.name))
    if isinstance(s, CallPrim):
        return appl("CallPrim", StrLit(s.name), ListTerm(tuple(pattern_to_term(t) for t in s.targs)))
    if isinstance(s, All):
        return appl("All", core_to_term(s.body))
    if isinstance(s, DefineDR):
        return appl("DefineDR", StrLit(s.name), pattern_to_term(s.lhs), pattern_to_term(s.rhs))
    if isinstance(s, UndefineDR):
        return appl("UndefineDR", StrLit(s.name), pattern_to_term(s.key))
    if isinstance(s, ScopeDR):
        return appl("ScopeDR", StrLit(s.name), core_to_term(s.body))
    raise TypeError(f"cannot serialize core strategy {s!r}")


def core_from_term(t: Term):
    c = t.constructor
    k = t.children
    if c == "Id":
        return Id()
    if c == "Fail":
        return Fail()
    if c == "Match":
        return Match(pattern_from_term(k[0]))
    if c == "Build":
        return Build(pattern_from_term(k[0]))
    if c == "Seq":
        return Seq(core_from_term(k[0]), core_from_term(k[1]))
    if c == "LChoice":
        return LChoice(core_from_term(k[0]), core_from_term(k[1]))
    if c == "Scope":
        return Scope(tuple(n.value for n in k[0].items), core_from_term(k[1]))
    if c == "Call":
        return Call(skey_from_term(k[0]),
                    tuple(core_from_term(a) for a in k[1].items),
                    tuple(pattern_from_term(a) for a in k[2].items))
    if c == "AmbRef":
        return AmbRef(k[0].value)
    if c == "CallPrim":
        return CallPrim(k[0].value, tuple(pattern_from_term(a) for a in k[1].items))
    if c == "All":
        return All(core_from_term(k[0]))
    if c == "DefineDR":
        return DefineDR(k[0].value, pattern_from_term(k[1]), pattern_from_term(k[2]))
    if c == "UndefineDR":
        return UndefineDR(k[0].value, pattern_from_term(k[1]))
    if c == "ScopeDR":
        return ScopeDR(k[0].value, core_from_term(k[1]))
    raise ValueError(f"not a core strategy term: {c}")


def overlay_to_term(o: S.OverlayDef) -> Term:
    return appl("Overlay", StrLit(o.name),
                ListTerm(tuple(StrLit(p) for p in o.params)),
                pattern_to_term(o.body))


def overlay_from_term(t: Term) -> S.OverlayDef:
    assert t.constructor == "Overlay"
    name, params, body = t.children
    return S.OverlayDef(name.value, tuple(p.value for p in params.items),
                        pattern_from_term(body))
