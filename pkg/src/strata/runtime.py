"""Load compiled programs and execute strategies on terms.

Execution is big-step over the core language.  A strategy either
succeeds with a new term, fails (first-class, represented by the FAILED
sentinel), or raises StrataRuntimeError for genuine errors: building an
unbound variable, arithmetic overflow, a non-list spine in a list build,
an unknown primitive, or exceeding the recursion budget.

Variable bindings are immutable maps threaded through evaluation, so
left-choice backtracking restores them for free; the dynamic-rule store
is the one global, mutable piece of state and is deliberately *not*
rolled back by choice, only by `{| N : s |}` scoping.  Strategy
arguments are closures over the caller's environment; bindings made
inside a closure do not escape the call.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

from . import core as C
from . import syntax as S
from .syntax import ConstructorKey, StrategyKey
from .terms import (Appl, FreshNames, IDENT_RE, INT64_MAX, INT64_MIN, IntLit,
                    ListTerm, StrLit, Term, TupleTerm, parse_term, print_term)

PRIMITIVES = ("addi", "subti", "muli", "lti", "gti", "eqi", "new", "dr-apply", "debug")

DEFAULT_MAX_DEPTH = 100_000


class _Failed:
    __slots__ = ()

    def __repr__(self):
        return "FAILED"


FAILED = _Failed()


class StrataRuntimeError(Exception):
    pass


class ProgramLoadError(Exception):
    pass


@dataclass(frozen=True)
class Program:
    units: dict
    constructors: frozenset
    dyn_rule_names: frozenset


@dataclass(frozen=True)
class Closure:
    body: object
    binds: dict
    sbinds: dict


@dataclass
class ExecState:
    """Mutable state of one execution: the dynamic-rule store (newest
    entry first per name), the fresh-name counter, and the call-depth
    budget."""

    dr_store: dict = field(default_factory=dict)
    fresh: FreshNames = field(default_factory=FreshNames)
    depth: int = 0
    max_depth: int = DEFAULT_MAX_DEPTH
    debug_out: object = None


def load_program(out_dir: str, lib_dirs=()) -> Program:
    """Load a manifest plus all unit files it names, including library
    units (an extended strategy's original loads under `name$orig`).
    Every call target must resolve to a loaded unit."""
    manifest_path = os.path.join(out_dir, "program.manifest")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = parse_term(f.read())
    except FileNotFoundError:
        raise ProgramLoadError(f"no program manifest at {manifest_path}") from None
    if manifest.constructor != "Program" or len(manifest.children) != 4:
        raise ProgramLoadError(f"malformed manifest {manifest_path}")
    unit_list, con_list, dr_list, ext_list = manifest.children

    units = {}
    for entry in unit_list.items:
        key = C.skey_from_term(entry.children[0])
        path = os.path.join(out_dir, entry.children[1].value)
        units[key] = _load_unit(path, key)
    for entry in ext_list.items:
        name = entry.children[0].value
        key = StrategyKey(name, entry.children[1].value, entry.children[2].value)
        if key in units:
            continue
        recorded = entry.children[3].value
        src_name = name[:-5] if name.endswith("$orig") else name
        file_name = f"{src_name}.{key.sarity}.{key.tarity}.unit"
        candidates = [os.path.join(d, os.path.basename(recorded)) for d in lib_dirs]
        candidates.append(recorded)
        for d in candidates:
            path = os.path.join(d, file_name)
            if os.path.exists(path):
                units[key] = _load_unit(path, None)
                break
        else:
            raise ProgramLoadError(f"missing library unit for {key.text()} (looked in {recorded})")

    constructors = frozenset(
        ConstructorKey(c.children[0].value, c.children[1].value) for c in con_list.items)
    dyn_rules = frozenset(d.children[0].value for d in dr_list.items)

    for key, body in units.items():
        for target in _call_targets(body):
            if target.name.startswith("$"):
                continue  # strategy parameter reference
            if target not in units:
                raise ProgramLoadError(
                    f"unit {key.text()} calls {target.text()}, which is not loaded")
    return Program(units, constructors, dyn_rules)


def _load_unit(path: str, expect: StrategyKey | None):
    try:
        with open(path, "r", encoding="utf-8") as f:
            t = parse_term(f.read())
    except FileNotFoundError:
        raise ProgramLoadError(f"missing unit file {path}") from None
    if t.constructor != "Unit" or len(t.children) != 2:
        raise ProgramLoadError(f"malformed unit file {path}")
    key = C.skey_from_term(t.children[0])
    if expect is not None and key != expect:
        raise ProgramLoadError(f"unit file {path} holds {key.text()}, expected {expect.text()}")
    return C.core_from_term(t.children[1])


def _call_targets(body, out=None):
    if out is None:
        out = set()
    if isinstance(body, (C.Seq, C.LChoice)):
        _call_targets(body.left, out)
        _call_targets(body.right, out)
    elif isinstance(body, (C.Scope, C.All, C.ScopeDR)):
        _call_targets(body.body, out)
    elif isinstance(body, C.Call):
        out.add(body.key)
        for a in body.sargs:
            _call_targets(a, out)
    elif isinstance(body, C.AmbRef):
        raise ProgramLoadError("unit contains an unresolved bare reference")
    return out


# -- matching and building -----------------------------------------------------


def match(pat, subject: Term, binds: dict):
    """Unify `pat` with `subject`; returns extended bindings or None.
    No partial bindings escape a failed match."""
    if isinstance(pat, S.PVar):
        bound = binds.get(pat.name)
        if bound is None:
            new = dict(binds)
            new[pat.name] = subject
            return new
        return binds if bound == subject else None
    if isinstance(pat, S.PWild):
        return binds
    if isinstance(pat, S.PAppl):
        if not isinstance(subject, Appl) or subject.constructor != pat.constructor \
                or len(subject.children) != len(pat.args):
            return None
        for p, t in zip(pat.args, subject.children):
            binds = match(p, t, binds)
            if binds is None:
                return None
        return binds
    if isinstance(pat, S.PInt):
        return binds if isinstance(subject, IntLit) and subject.value == pat.value else None
    if isinstance(pat, S.PStr):
        return binds if isinstance(subject, StrLit) and subject.value == pat.value else None
    if isinstance(pat, S.PList):
        if not isinstance(subject, ListTerm):
            return None
        if pat.tail is None:
            if len(subject.items) != len(pat.items):
                return None
            rest = None
        else:
            if len(subject.items) < len(pat.items):
                return None
            rest = ListTerm(subject.items[len(pat.items):])
        for p, t in zip(pat.items, subject.items):
            binds = match(p, t, binds)
            if binds is None:
                return None
        if rest is not None:
            binds = match(pat.tail, rest, binds)
        return binds
    if isinstance(pat, S.PTuple):
        if not isinstance(subject, TupleTerm) or len(subject.items) != len(pat.items):
            return None
        for p, t in zip(pat.items, subject.items):
            binds = match(p, t, binds)
            if binds is None:
                return None
        return binds
    if isinstance(pat, S.PAs):
        binds = match(S.PVar(pat.name), subject, binds)
        if binds is None:
            return None
        return match(pat.pat, subject, binds)
    if isinstance(pat, S.PGeneric):
        if not isinstance(subject, Appl):
            return None
        binds = match(pat.fun, StrLit(subject.constructor), binds)
        if binds is None:
            return None
        return match(pat.args, ListTerm(subject.children), binds)
    raise StrataRuntimeError(f"cannot match against {pat!r}")


def instantiate(pat, binds: dict) -> Term:
    """Build a term from a pattern under bindings; unbound variables are
    a runtime error, never a failure."""
    if isinstance(pat, S.PVar):
        value = binds.get(pat.name)
        if value is None:
            raise StrataRuntimeError(f"unbound variable {pat.name!r} in build")
        return value
    if isinstance(pat, S.PWild):
        raise StrataRuntimeError("cannot build a wildcard pattern")
    if isinstance(pat, S.PAppl):
        return Appl(pat.constructor, tuple(instantiate(p, binds) for p in pat.args))
    if isinstance(pat, S.PInt):
        return IntLit(pat.value)
    if isinstance(pat, S.PStr):
        return StrLit(pat.value)
    if isinstance(pat, S.PList):
        items = [instantiate(p, binds) for p in pat.items]
        if pat.tail is not None:
            tail = instantiate(pat.tail, binds)
            if not isinstance(tail, ListTerm):
                raise StrataRuntimeError("list tail did not build a list")
            items.extend(tail.items)
        return ListTerm(tuple(items))
    if isinstance(pat, S.PTuple):
        return TupleTerm(tuple(instantiate(p, binds) for p in pat.items))
    if isinstance(pat, S.PAs):
        raise StrataRuntimeError("as-pattern in build position")
    if isinstance(pat, S.PGeneric):
        fun = instantiate(pat.fun, binds)
        args = instantiate(pat.args, binds)
        if not isinstance(fun, StrLit) or not IDENT_RE.match(fun.value):
            raise StrataRuntimeError("generic build needs a constructor-name string")
        if not isinstance(args, ListTerm):
            raise StrataRuntimeError("generic build needs a list of children")
        return Appl(fun.value, args.items)
    raise StrataRuntimeError(f"cannot build {pat!r}")


# -- evaluation ------------------------------------------------------------------


class _Evaluator:
    def __init__(self, program: Program, state: ExecState):
        self.program = program
        self.state = state

    def eval(self, s, subject: Term, binds: dict, sbinds: dict):
        if isinstance(s, C.Id):
            return subject, binds
        if isinstance(s, C.Fail):
            return FAILED
        if isinstance(s, C.Match):
            new = match(s.pat, subject, binds)
            return FAILED if new is None else (subject, new)
        if isinstance(s, C.Build):
            return instantiate(s.pat, binds), binds
        if isinstance(s, C.Seq):
            r = self.eval(s.left, subject, binds, sbinds)
            if r is FAILED:
                return FAILED
            return self.eval(s.right, r[0], r[1], sbinds)
        if isinstance(s, C.LChoice):
            r = self.eval(s.left, subject, binds, sbinds)
            if r is not FAILED:
                return r
            # term and bindings restore to the snapshot; the dynamic-rule
            # store deliberately does not
            return self.eval(s.right, subject, binds, sbinds)
        if isinstance(s, C.Scope):
            inner = dict(binds)
            for name in s.names:
                inner.pop(name, None)
            r = self.eval(s.body, subject, inner, sbinds)
            if r is FAILED:
                return FAILED
            term, out = r
            restored = dict(out)
            for name in s.names:
                if name in binds:
                    restored[name] = binds[name]
                else:
                    restored.pop(name, None)
            return term, restored
        if isinstance(s, C.Call):
            return self.call(s, subject, binds, sbinds)
        if isinstance(s, C.CallPrim):
            targs = [instantiate(t, binds) for t in s.targs]
            r = call_primitive(s.name, subject, targs, self.state)
            return FAILED if r is FAILED else (r, binds)
        if isinstance(s, C.All):
            return self.eval_all(s.body, subject, binds, sbinds)
        if isinstance(s, C.DefineDR):
            key = instantiate(s.lhs, binds)
            self.state.dr_store.setdefault(s.name, []).insert(0, (key, s.rhs, binds))
            return subject, binds
        if isinstance(s, C.UndefineDR):
            key = instantiate(s.key, binds)
            entries = self.state.dr_store.get(s.name)
            if entries:
                self.state.dr_store[s.name] = [e for e in entries if e[0] != key]
            return subject, binds
        if isinstance(s, C.ScopeDR):
            snapshot = list(self.state.dr_store.get(s.name, []))
            try:
                return self.eval(s.body, subject, binds, sbinds)
            finally:
                self.state.dr_store[s.name] = snapshot
        if isinstance(s, C.AmbRef):
            raise StrataRuntimeError(f"unresolved reference {s.name!r} reached the runtime")
        raise StrataRuntimeError(f"cannot evaluate {s!r}")

    def call(self, s: C.Call, subject, binds, sbinds):
        key = s.key
        closure = sbinds.get(key.name)
        if closure is not None:
            if key.sarity or key.tarity or s.sargs or s.targs:
                raise StrataRuntimeError(
                    f"strategy parameter {key.name!r} takes no arguments")
            r = self.invoke(closure.body, subject, closure.binds, closure.sbinds)
            return FAILED if r is FAILED else (r[0], binds)
        body = self.program.units.get(key)
        if body is None:
            raise StrataRuntimeError(f"call to unknown strategy {key.text()}")
        if len(s.sargs) != key.sarity or len(s.targs) != key.tarity:
            raise StrataRuntimeError(f"arity mismatch calling {key.text()}")
        new_binds = {f"$t{i}": instantiate(t, binds) for i, t in enumerate(s.targs)}
        new_sbinds = {f"$s{i}": Closure(a, binds, sbinds) for i, a in enumerate(s.sargs)}
        r = self.invoke(body, subject, new_binds, new_sbinds)
        return FAILED if r is FAILED else (r[0], binds)

    def invoke(self, body, subject, binds, sbinds):
        state = self.state
        state.depth += 1
        if state.depth > state.max_depth:
            raise StrataRuntimeError(
                f"stack overflow: recursion exceeded {state.max_depth} frames")
        try:
            return self.eval(body, subject, binds, sbinds)
        finally:
            state.depth -= 1

    def eval_all(self, body, subject, binds, sbinds):
        if isinstance(subject, (IntLit, StrLit)):
            return subject, binds
        if isinstance(subject, Appl):
            children = subject.children
        elif isinstance(subject, (ListTerm, TupleTerm)):
            children = subject.items
        else:
            raise StrataRuntimeError(f"not a term: {subject!r}")
        out = []
        for child in children:
            r = self.eval(body, child, binds, sbinds)
            if r is FAILED:
                return FAILED
            out.append(r[0])
            binds = r[1]
        if isinstance(subject, Appl):
            return Appl(subject.constructor, tuple(out)), binds
        if isinstance(subject, ListTerm):
            return ListTerm(tuple(out)), binds
        return TupleTerm(tuple(out)), binds


def call_primitive(name: str, subject: Term, targs, state: ExecState):
    if name in ("addi", "subti", "muli"):
        i, j = _int_pair(name, subject)
        if name == "addi":
            value = i + j
        elif name == "subti":
            value = i - j
        else:
            value = i * j
        if not (INT64_MIN <= value <= INT64_MAX):
            raise StrataRuntimeError(f"{name}: 64-bit integer overflow")
        return IntLit(value)
    if name in ("lti", "gti", "eqi"):
        i, j = _int_pair(name, subject)
        ok = (i < j) if name == "lti" else (i > j) if name == "gti" else (i == j)
        return subject if ok else FAILED
    if name == "new":
        return StrLit(state.fresh.next("$new"))
    if name == "dr-apply":
        if len(targs) != 1 or not isinstance(targs[0], StrLit):
            raise StrataRuntimeError("dr-apply expects one rule-name argument")
        for key, rhs, binds in state.dr_store.get(targs[0].value, ()):
            if key == subject:
                return instantiate(rhs, binds)
        return FAILED
    if name == "debug":
        out = state.debug_out or sys.stderr
        print(print_term(subject), file=out)
        return subject
    raise StrataRuntimeError(f"unknown primitive {name!r}")


def _int_pair(name, subject):
    if (isinstance(subject, TupleTerm) and len(subject.items) == 2
            and all(isinstance(x, IntLit) for x in subject.items)):
        return subject.items[0].value, subject.items[1].value
    raise StrataRuntimeError(f"{name} needs an (int,int) subject, got {print_term(subject)}")


def apply_strategy(program: Program, key: StrategyKey, subject: Term,
                   sargs=(), targs=(), state: ExecState | None = None):
    """Apply a compiled strategy to a subject term.

    Returns the result term, or FAILED for strategy failure.  Genuine
    errors raise StrataRuntimeError; Python's own recursion guard is
    translated to the same clean error.
    """
    body = program.units.get(key)
    if body is None:
        raise StrataRuntimeError(f"unknown strategy {key.text()}")
    if len(sargs) != key.sarity or len(targs) != key.tarity:
        raise StrataRuntimeError(f"arity mismatch applying {key.text()}")
    state = state or ExecState()
    binds = {f"$t{i}": t for i, t in enumerate(targs)}
    sbinds = {f"$s{i}": c for i, c in enumerate(sargs)}
    ev = _Evaluator(program, state)
    try:
        r = ev.invoke(body, subject, binds, sbinds)
    except RecursionError:
        raise StrataRuntimeError("stack overflow: interpreter recursion limit") from None
    return FAILED if r is FAILED else r[0]
