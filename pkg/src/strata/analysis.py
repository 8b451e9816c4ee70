"""Whole-program static checks over the combined per-module information.

Visibility follows transitive imports: the import graph's strongly
connected components are processed dependencies-first, each component's
modules sharing one visibility set, so mutually importing modules see
each other's definitions.  On top of visibility sit the checks that the
back-end relies on: every used name resolves, bare strategy references
resolve to exactly one arity, extend/override definitions pair up with
library externals, and overlay expansion terminates.

All checks aggregate errors into the result; nothing here throws.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from . import syntax as S
from .syntax import ConstructorKey, StrategyKey

UNRESOLVED_STRATEGY = "UnresolvedStrategy"
UNRESOLVED_CONSTRUCTOR = "UnresolvedConstructor"
AMBIGUOUS_REFERENCE = "AmbiguousReference"
OVERLAY_CYCLE = "OverlayCycle"
DUPLICATE_OVERLAY = "DuplicateOverlay"
EXTEND_OVERRIDE_VIOLATION = "ExtendOverrideViolation"
DYNRULE_COLLISION = "DynRuleCollision"


@dataclass(frozen=True)
class StaticError:
    kind: str
    subject: str
    module: str
    detail: str

    def render(self) -> str:
        return f"error: {self.kind}: {self.subject} in {self.module} — {self.detail}"


@dataclass
class AnalysisResult:
    vis_strs: dict = field(default_factory=dict)
    vis_cons: dict = field(default_factory=dict)
    resolutions: dict = field(default_factory=dict)  # (key, bare name) -> StrategyKey
    congruences_in_use: set = field(default_factory=set)
    errors: list = field(default_factory=list)


def sort_errors(errors) -> list:
    return sorted(errors, key=lambda e: (e.module, e.kind, e.subject))


def topo_sccs(main: str, imps: dict) -> list[list[str]]:
    """Strongly connected components of the import graph reachable from
    `main`, dependencies first; ties between independent components go to
    the one with the lexicographically smallest member.
    """
    index = {}
    lowlink = {}
    stack = []
    on_stack = set()
    sccs = []
    counter = [0]

    def connect(node):
        index[node] = lowlink[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)
        for succ in sorted(imps.get(node, ())):
            if succ not in imps and succ not in index:
                continue  # edges to unknown modules are diagnosed elsewhere
            if succ not in index:
                connect(succ)
                lowlink[node] = min(lowlink[node], lowlink[succ])
            elif succ in on_stack:
                lowlink[node] = min(lowlink[node], index[succ])
        if lowlink[node] == index[node]:
            comp = []
            while True:
                n = stack.pop()
                on_stack.discard(n)
                comp.append(n)
                if n == node:
                    break
            sccs.append(sorted(comp))

    if main in imps:
        connect(main)
    for node in sorted(imps):
        if node not in index:
            connect(node)

    # Deterministic dependencies-first order over the condensation.
    comp_of = {}
    for i, comp in enumerate(sccs):
        for m in comp:
            comp_of[m] = i
    dependents = {i: set() for i in range(len(sccs))}
    missing_deps = {i: 0 for i in range(len(sccs))}
    for i, comp in enumerate(sccs):
        deps = set()
        for m in comp:
            for succ in imps.get(m, ()):
                j = comp_of.get(succ)
                if j is not None and j != i:
                    deps.add(j)
        missing_deps[i] = len(deps)
        for j in deps:
            dependents[j].add(i)
    ready = [(sccs[i][0], i) for i in range(len(sccs)) if missing_deps[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(sccs[i])
        for j in dependents[i]:
            missing_deps[j] -= 1
            if missing_deps[j] == 0:
                heapq.heappush(ready, (sccs[j][0], j))
    return order


def compute_visibility(main: str, si) -> tuple[dict, dict]:
    vis_strs = {m: set(si.def_strs.get(m, ())) for m in si.imps}
    vis_cons = {m: set(si.def_cons.get(m, ())) for m in si.imps}
    for scc in topo_sccs(main, si.imps):
        strs = set()
        cons = set()
        for m in scc:
            strs |= vis_strs[m]
            cons |= vis_cons[m]
            for imported in si.imps.get(m, ()):
                strs |= vis_strs.get(imported, set())
                cons |= vis_cons.get(imported, set())
        for m in scc:
            vis_strs[m] = strs
            vis_cons[m] = cons
    return vis_strs, vis_cons


def static_checks(main: str, si) -> AnalysisResult:
    result = AnalysisResult()
    result.vis_strs, result.vis_cons = compute_visibility(main, si)
    overlay_keys = set(si.olay_asts)
    errors = []

    for mod in sorted(si.imps):
        vis_s = result.vis_strs[mod]
        vis_c = result.vis_cons[mod]
        for key in sorted(si.used_strs.get(mod, ()), key=StrategyKey.text):
            if key in vis_s:
                continue
            ck = ConstructorKey(key.name, key.sarity)
            if key.tarity == 0 and ck in vis_c:
                result.congruences_in_use.add(ck)
                continue
            if key.sarity == 0 and key.tarity == 0 and key.name in si.dyn_rules:
                continue
            errors.append(StaticError(UNRESOLVED_STRATEGY, key.text(), mod,
                                      "strategy is not visible from this module"))
        for ck in sorted(si.used_cons.get(mod, ()), key=ConstructorKey.text):
            if ck in vis_c or ck in overlay_keys:
                continue
            errors.append(StaticError(UNRESOLVED_CONSTRUCTOR, ck.text(), mod,
                                      "constructor is not declared with this arity"))

    resolutions, amb_errors = resolve_ambiguous(si, result)
    result.resolutions = resolutions
    errors.extend(amb_errors)
    errors.extend(check_extend_override(si))
    errors.extend(check_overlay_cycles(si.olay_asts))
    errors.extend(_check_dynrule_collisions(si))
    result.errors = sort_errors(errors)
    return result


def resolve_ambiguous(si, result: AnalysisResult):
    """Resolve bare strategy names used in argument position.

    Candidates carry arity: a 0/0 strategy always wins; otherwise a
    single candidate of any arity resolves; zero or several is an error.
    """
    resolutions = {}
    errors = []
    for enclosing, name in sorted(si.amb_sites, key=lambda kv: (kv[0].text(), kv[1])):
        defining = {mod for mod, _, _, _ in si.str_asts.get(enclosing, ())}
        vis_s = set()
        vis_c = set()
        for mod in defining:
            vis_s |= result.vis_strs.get(mod, set())
            vis_c |= result.vis_cons.get(mod, set())
        candidates = {k for k in vis_s if k.name == name}
        via_congruence = ConstructorKey(name, 0) in vis_c
        if via_congruence or name in si.dyn_rules:
            candidates.add(StrategyKey(name, 0, 0))
        zero_zero = StrategyKey(name, 0, 0)
        if zero_zero in candidates:
            resolutions[(enclosing, name)] = zero_zero
            if via_congruence and zero_zero not in vis_s and name not in si.dyn_rules:
                result.congruences_in_use.add(ConstructorKey(name, 0))
        elif len(candidates) == 1:
            resolutions[(enclosing, name)] = next(iter(candidates))
        else:
            mod = min(defining) if defining else "?"
            if candidates:
                listed = ", ".join(sorted(k.text() for k in candidates))
                detail = f"name could be any of: {listed}"
            else:
                detail = "no strategy with this name is visible"
            errors.append(StaticError(AMBIGUOUS_REFERENCE, name, mod, detail))
    return resolutions, errors


def check_extend_override(si) -> list:
    """The four extend/override rules:

    (a) extend/override requires a matching library external;
    (b) at most one extend/override definition per key;
    (c) a plain definition may not share a key with an external;
    (d) extend and override may not both target one key.
    """
    errors = []
    for key in sorted(si.str_asts, key=StrategyKey.text):
        defs = si.str_asts[key]
        extends = [mod for mod, _, _, modifier in defs if modifier == S.EXTEND]
        overrides = [mod for mod, _, _, modifier in defs if modifier == S.OVERRIDE]
        plains = [mod for mod, _, _, modifier in defs if modifier == S.PLAIN]
        is_external = key in si.externals
        if extends and overrides:
            errors.append(StaticError(
                EXTEND_OVERRIDE_VIOLATION, key.text(), min(extends + overrides),
                "clause (d): both extend and override target this definition"))
        elif len(extends) + len(overrides) > 1:
            errors.append(StaticError(
                EXTEND_OVERRIDE_VIOLATION, key.text(), min(extends + overrides),
                "clause (b): more than one extend/override definition"))
        if (extends or overrides) and not is_external:
            errors.append(StaticError(
                EXTEND_OVERRIDE_VIOLATION, key.text(), min(extends + overrides),
                "clause (a): no library external with this key"))
        if plains and is_external:
            errors.append(StaticError(
                EXTEND_OVERRIDE_VIOLATION, key.text(), min(plains),
                "clause (c): plain definition shares a key with a library external"))
    return errors


def overlay_body_keys(body, overlay_keys: set) -> set:
    """Overlay keys that occur in an overlay body (its expansion edges)."""
    from .core import pattern_constructors
    return pattern_constructors(body) & overlay_keys


def check_overlay_cycles(olay_asts) -> list:
    """Overlay expansion is a pure substitution, so cycle freedom of the
    overlay dependency graph is exactly termination of expansion.
    """
    errors = []
    for key in sorted(olay_asts, key=ConstructorKey.text):
        entries = olay_asts[key]
        if len(entries) > 1:
            mods = sorted(mod for mod, _ in entries)
            errors.append(StaticError(DUPLICATE_OVERLAY, key.text(), mods[0],
                                      f"overlay defined in: {', '.join(mods)}"))
    overlay_keys = set(olay_asts)
    edges = {}
    for key, entries in olay_asts.items():
        _, overlay = entries[0]
        edges[key] = overlay_body_keys(overlay.body, overlay_keys)

    index = {}
    lowlink = {}
    stack = []
    on_stack = set()
    counter = [0]
    cycles = []

    def connect(node):
        index[node] = lowlink[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)
        for succ in sorted(edges.get(node, ()), key=ConstructorKey.text):
            if succ not in index:
                connect(succ)
                lowlink[node] = min(lowlink[node], lowlink[succ])
            elif succ in on_stack:
                lowlink[node] = min(lowlink[node], index[succ])
        if lowlink[node] == index[node]:
            comp = []
            while True:
                n = stack.pop()
                on_stack.discard(n)
                comp.append(n)
                if n == node:
                    break
            if len(comp) > 1 or node in edges.get(node, ()):
                cycles.append(sorted(comp, key=ConstructorKey.text))

    for node in sorted(edges, key=ConstructorKey.text):
        if node not in index:
            connect(node)

    for comp in cycles:
        members = ", ".join(k.text() for k in comp)
        mod = min(olay_asts[comp[0]][0][0] for _ in comp)
        errors.append(StaticError(OVERLAY_CYCLE, comp[0].text(), mod,
                                  f"overlay expansion would loop through: {members}"))
    return errors


def _check_dynrule_collisions(si) -> list:
    errors = []
    defined = set(si.str_asts) | set(si.externals)
    for name in sorted(si.dyn_rules):
        key = StrategyKey(name, 0, 0)
        if key in defined:
            errors.append(StaticError(DYNRULE_COLLISION, key.text(), "?",
                                      "dynamic rule name collides with a strategy definition"))
    return errors
