"""Per-strategy code generation.

Each distinct strategy key becomes exactly one compiled unit: its
definitions (possibly from several modules) merge into one body by
left-choice, bare references are replaced with their resolved keys, and
overlays are expanded away.  Units and the program manifest print
canonically, so equal inputs always produce byte-identical files.

Unit file: `Unit(Key("<name>",<s>,<t>),<body>)`, one line plus newline,
named `<name>.<s>.<t>.unit`.  Manifest: `Program([U(Key(..),"file"),..],
[Con("name",a),..],[DR("name"),..],[ExtLib("name",s,t,"dir"),..])`.
"""

from __future__ import annotations

from . import core as C
from . import syntax as S
from .syntax import ConstructorKey, StrategyKey
from .terms import Appl, IntLit, ListTerm, StrLit, Term, appl, print_term


class BackendError(Exception):
    pass


def unit_file_name(key: StrategyKey) -> str:
    return f"{key.name}.{key.sarity}.{key.tarity}.unit"


def merge_definitions(key: StrategyKey, defs) -> C.Call:
    """Merge same-key definitions into one body.

    `defs` is a list of (module, index, core) triples.  Cross-module
    order is fixed to (module, index) lexicographic so that merged output
    is deterministic; bodies fold right-associatively with left-choice.
    Parameter names are already canonical from desugaring.
    """
    assert defs, "merge of zero definitions"
    ordered = sorted(defs, key=lambda d: (d[0], d[1]))
    bodies = [body for _, _, body in ordered]
    merged = bodies[-1]
    for body in reversed(bodies[:-1]):
        merged = C.LChoice(body, merged)
    return merged


def resolve_refs(body, resolutions: dict, enclosing: StrategyKey):
    """Replace every bare reference with a call to its resolved key."""
    def walk(c):
        if isinstance(c, C.AmbRef):
            target = resolutions.get((enclosing, c.name))
            if target is None:
                raise BackendError(
                    f"missing resolution for bare name {c.name!r} in {enclosing.text()}")
            return C.Call(target)
        if isinstance(c, (C.Seq, C.LChoice)):
            return type(c)(walk(c.left), walk(c.right))
        if isinstance(c, C.Scope):
            return C.Scope(c.names, walk(c.body))
        if isinstance(c, C.All):
            return C.All(walk(c.body))
        if isinstance(c, C.ScopeDR):
            return C.ScopeDR(c.name, walk(c.body))
        if isinstance(c, C.Call):
            return C.Call(c.key, tuple(walk(a) for a in c.sargs), c.targs)
        return c
    return walk(body)


def expand_overlays(body, overlays: dict):
    """Expand every overlay application to fixpoint, in match and build
    positions alike.  `overlays` maps ConstructorKey to OverlayDef and
    must already be cycle-checked.
    """
    if not overlays:
        return body

    def expand_pat(p):
        if isinstance(p, S.PAppl):
            args = tuple(expand_pat(a) for a in p.args)
            overlay = overlays.get(ConstructorKey(p.constructor, len(args)))
            if overlay is not None:
                substitution = dict(zip(overlay.params, args))
                return expand_pat(_substitute(overlay.body, substitution))
            return S.PAppl(p.constructor, args)
        if isinstance(p, S.PList):
            return S.PList(tuple(expand_pat(a) for a in p.items),
                           expand_pat(p.tail) if p.tail is not None else None)
        if isinstance(p, S.PTuple):
            return S.PTuple(tuple(expand_pat(a) for a in p.items))
        if isinstance(p, S.PAs):
            return S.PAs(p.name, expand_pat(p.pat))
        if isinstance(p, S.PGeneric):
            return S.PGeneric(expand_pat(p.fun), expand_pat(p.args))
        return p

    def walk(c):
        if isinstance(c, (C.Match, C.Build)):
            return type(c)(expand_pat(c.pat))
        if isinstance(c, (C.Seq, C.LChoice)):
            return type(c)(walk(c.left), walk(c.right))
        if isinstance(c, C.Scope):
            return C.Scope(c.names, walk(c.body))
        if isinstance(c, C.All):
            return C.All(walk(c.body))
        if isinstance(c, C.ScopeDR):
            return C.ScopeDR(c.name, walk(c.body))
        if isinstance(c, C.Call):
            ck = ConstructorKey(c.key.name, c.key.sarity)
            if c.key.tarity == 0 and ck in overlays:
                raise BackendError(f"overlay {ck.text()} cannot be used as a strategy")
            return C.Call(c.key, tuple(walk(a) for a in c.sargs),
                          tuple(expand_pat(t) for t in c.targs))
        if isinstance(c, C.CallPrim):
            return C.CallPrim(c.name, tuple(expand_pat(t) for t in c.targs))
        if isinstance(c, C.DefineDR):
            return C.DefineDR(c.name, expand_pat(c.lhs), expand_pat(c.rhs))
        if isinstance(c, C.UndefineDR):
            return C.UndefineDR(c.name, expand_pat(c.key))
        return c

    return walk(body)


def _substitute(p, substitution: dict):
    if isinstance(p, S.PVar):
        return substitution[p.name]
    if isinstance(p, S.PAppl):
        return S.PAppl(p.constructor, tuple(_substitute(a, substitution) for a in p.args))
    if isinstance(p, S.PList):
        return S.PList(tuple(_substitute(a, substitution) for a in p.items),
                       _substitute(p.tail, substitution) if p.tail is not None else None)
    if isinstance(p, S.PTuple):
        return S.PTuple(tuple(_substitute(a, substitution) for a in p.items))
    if isinstance(p, S.PAs):
        return S.PAs(p.name, _substitute(p.pat, substitution))
    if isinstance(p, S.PGeneric):
        return S.PGeneric(_substitute(p.fun, substitution), _substitute(p.args, substitution))
    return p


def gen_congruence(ck: ConstructorKey) -> tuple[StrategyKey, object]:
    """A constructor used as a strategy: match the constructor, apply the
    i-th strategy argument to the i-th child, rebuild.
    """
    n = ck.arity
    xs = [f"$x{i}" for i in range(n)]
    ys = [f"$y{i}" for i in range(n)]
    match = C.Match(S.PAppl(ck.name, tuple(S.PVar(x) for x in xs)))
    body = C.Build(S.PAppl(ck.name, tuple(S.PVar(y) for y in ys)))
    for i in reversed(range(n)):
        step = C.Seq(C.Seq(C.Build(S.PVar(xs[i])), C.Call(StrategyKey(f"$s{i}", 0, 0))),
                     C.Match(S.PVar(ys[i])))
        body = C.Seq(step, body)
    body = C.Seq(match, body)
    if n:
        body = C.Scope(tuple(xs + ys), body)
    return StrategyKey(ck.name, n, 0), body


def gen_dynrule_support(name: str) -> tuple[StrategyKey, object]:
    """The applicator for a dynamic rule name; exactly one per name no
    matter how many modules contribute definitions.
    """
    return StrategyKey(name, 0, 0), C.CallPrim("dr-apply", (S.PStr(name),))


def unit_term(key: StrategyKey, body) -> Term:
    return appl("Unit", C.skey_to_term(key), C.core_to_term(body))


def unit_bytes(key: StrategyKey, body) -> bytes:
    return (print_term(unit_term(key, body)) + "\n").encode("utf-8")


def compile_strategy(key: StrategyKey, defs, resolutions: dict, overlays: dict):
    """merge -> resolve -> expand; the full back-end for one strategy."""
    merged = merge_definitions(key, [(m, i, b) for m, i, b, _ in defs])
    modifiers = {modifier for _, _, _, modifier in defs}
    if S.OVERRIDE in modifiers or S.EXTEND in modifiers:
        # checked upstream: exactly one definition exists for this key
        _, _, merged, _ = defs[0]
    resolved = resolve_refs(merged, resolutions, key)
    return expand_overlays(resolved, overlays)


def manifest_term(units, constructors, dyn_rules, externals) -> Term:
    """Deterministic program manifest.

    units: iterable of StrategyKey; constructors: iterable of
    ConstructorKey; dyn_rules: iterable of names; externals: iterable of
    (StrategyKey, unit directory).
    """
    unit_entries = tuple(
        appl("U", C.skey_to_term(k), StrLit(unit_file_name(k)))
        for k in sorted(units, key=StrategyKey.text))
    con_entries = tuple(
        appl("Con", StrLit(c.name), IntLit(c.arity))
        for c in sorted(constructors, key=ConstructorKey.text))
    dr_entries = tuple(appl("DR", StrLit(n)) for n in sorted(dyn_rules))
    ext_entries = tuple(
        appl("ExtLib", StrLit(k.name), IntLit(k.sarity), IntLit(k.tarity), StrLit(d))
        for k, d in sorted(externals, key=lambda kd: (kd[0].text(), kd[1])))
    return appl("Program", ListTerm(unit_entries), ListTerm(con_entries),
                ListTerm(dr_entries), ListTerm(ext_entries))


def library_manifest_term(strategies, constructors) -> Term:
    ext = tuple(appl("Ext", StrLit(k.name), IntLit(k.sarity), IntLit(k.tarity))
                for k in sorted(strategies, key=StrategyKey.text))
    con = tuple(appl("Con", StrLit(c.name), IntLit(c.arity))
                for c in sorted(constructors, key=ConstructorKey.text))
    return appl("Library", ListTerm(ext), ListTerm(con))
