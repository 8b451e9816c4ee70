"""The compiler's task layer.

From the outside `compile_program` behaves like a whole-program
compiler; internally every step is a build-engine task so recompilation
cost tracks the size of a change:

  * one front-end task per module file: read, parse, split;
  * one sub-front-end task per definition, keyed on the definition's own
    source slice, so editing one definition re-runs one task (and a
    whitespace-only edit inside it re-runs that task but changes no
    output, cutting the build off early);
  * whole-program static checks as a plain function (their input is
    global and changes almost every build, so caching would buy nothing);
  * one back-end task per merged strategy, keyed on exactly the merged
    inputs, plus one per congruence in use and per dynamic-rule name.

Module resolution: `<srcRoot>/<id>.str`, falling back to the compiler's
bundled source tree (which ships `lib/std`, the default import).  A
module is a library when some library dir contains `<id>/lib.manifest`;
libraries shadow source files.
"""

from __future__ import annotations

import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import analysis, backend, core, syntax
from .analysis import AnalysisResult, StaticError
from .core import collect_usage, desugar_to_core
from .engine import CACHED, EXECUTED, Store, TaskKey, build, open_store, trace_counts
from .syntax import ConstructorKey, StrategyKey, split_module
from .terms import (Appl, FreshNames, IntLit, ListTerm, StrLit, Term, appl,
                    print_term, term_digest)

DEFAULT_IMPORTS = ("lib/std",)
BUILTIN_SRC = os.path.join(os.path.dirname(__file__), "stdlib")

FRONTEND_KINDS = ("frontEnd",)
SUBFRONTEND_KINDS = ("subFrontEnd",)
BACKEND_KINDS = ("backEnd", "congruence", "dynRule")


class CompileError(Exception):
    """A front-end failure: unparseable file, bad definition, missing module."""


class ModuleNotFound(CompileError):
    def __init__(self, module: str, chain=()):
        self.module = module
        self.chain = tuple(chain)
        via = " (imported via: " + " -> ".join(self.chain) + ")" if self.chain else ""
        super().__init__(f"module {module!r} not found{via}")


@dataclass
class Config:
    src_root: str
    out_dir: str
    lib_dirs: tuple = ()
    store_file: str | None = None
    default_imports: tuple = DEFAULT_IMPORTS
    builtin_src: str = BUILTIN_SRC

    def __post_init__(self):
        self.src_root = os.path.abspath(self.src_root)
        self.out_dir = os.path.abspath(self.out_dir)
        self.lib_dirs = tuple(os.path.abspath(d) for d in self.lib_dirs)
        if self.store_file is not None:
            self.store_file = os.path.abspath(self.store_file)

    @property
    def digest(self) -> str:
        t = appl("Config", StrLit(self.src_root),
                 ListTerm(tuple(StrLit(d) for d in self.lib_dirs)),
                 StrLit(self.out_dir),
                 ListTerm(tuple(StrLit(m) for m in sorted(self.default_imports))))
        return term_digest(t)

    def store_path(self) -> str:
        return self.store_file or os.path.join(self.out_dir, ".store")

    def manifest_path(self) -> str:
        return os.path.join(self.out_dir, "program.manifest")


class StageClock:
    """Wall time per compiler stage; re-entrant frames of the same stage
    count once (sub-front-ends run inside their front-end)."""

    def __init__(self):
        self.acc = {"frontend": 0, "static": 0, "backend": 0}
        self._depth = {"frontend": 0, "static": 0, "backend": 0}
        self._began = {}

    @contextmanager
    def stage(self, name):
        if self._depth[name] == 0:
            self._began[name] = time.perf_counter_ns()
        self._depth[name] += 1
        try:
            yield
        finally:
            self._depth[name] -= 1
            if self._depth[name] == 0:
                self.acc[name] += time.perf_counter_ns() - self._began[name]

    def ms(self, name) -> int:
        return self.acc[name] // 1_000_000


# -- per-module / whole-program information -----------------------------------


@dataclass
class FrontInfo:
    imps: set = field(default_factory=set)
    def_strs: set = field(default_factory=set)
    def_cons: set = field(default_factory=set)
    used_strs: set = field(default_factory=set)
    used_cons: set = field(default_factory=set)
    str_used_cons: dict = field(default_factory=dict)  # StrategyKey -> set[ConstructorKey]
    str_asts: dict = field(default_factory=dict)       # StrategyKey -> [(index, core, modifier)]
    olay_asts: dict = field(default_factory=dict)      # ConstructorKey -> [OverlayDef]
    dyn_rules: set = field(default_factory=set)
    amb_sites: set = field(default_factory=set)        # (StrategyKey, name)

    def merge(self, other: "FrontInfo"):
        self.imps |= other.imps
        self.def_strs |= other.def_strs
        self.def_cons |= other.def_cons
        self.used_strs |= other.used_strs
        self.used_cons |= other.used_cons
        for key, cons in other.str_used_cons.items():
            self.str_used_cons.setdefault(key, set()).update(cons)
        for key, entries in other.str_asts.items():
            self.str_asts.setdefault(key, []).extend(entries)
        for key, overlays in other.olay_asts.items():
            self.olay_asts.setdefault(key, []).extend(overlays)
        self.dyn_rules |= other.dyn_rules
        self.amb_sites |= other.amb_sites

    def to_term(self) -> Term:
        def skeys(keys):
            return ListTerm(tuple(core.skey_to_term(k)
                                  for k in sorted(keys, key=StrategyKey.text)))

        def ckeys(keys):
            return ListTerm(tuple(core.ckey_to_term(k)
                                  for k in sorted(keys, key=ConstructorKey.text)))

        suc = ListTerm(tuple(
            appl("SUC", core.skey_to_term(k), ckeys(self.str_used_cons[k]))
            for k in sorted(self.str_used_cons, key=StrategyKey.text)))
        asts = ListTerm(tuple(
            appl("SA", core.skey_to_term(k), ListTerm(tuple(
                appl("D", IntLit(i), core.core_to_term(body), StrLit(modifier))
                for i, body, modifier in sorted(self.str_asts[k]))))
            for k in sorted(self.str_asts, key=StrategyKey.text)))
        olays = ListTerm(tuple(
            appl("OA", core.ckey_to_term(k), ListTerm(tuple(
                core.overlay_to_term(o) for o in self.olay_asts[k])))
            for k in sorted(self.olay_asts, key=ConstructorKey.text)))
        ambs = ListTerm(tuple(
            appl("AS", core.skey_to_term(k), StrLit(name))
            for k, name in sorted(self.amb_sites, key=lambda kn: (kn[0].text(), kn[1]))))
        return appl(
            "FI",
            ListTerm(tuple(StrLit(m) for m in sorted(self.imps))),
            skeys(self.def_strs), ckeys(self.def_cons),
            skeys(self.used_strs), ckeys(self.used_cons),
            suc, asts, olays,
            ListTerm(tuple(StrLit(n) for n in sorted(self.dyn_rules))),
            ambs,
        )

    @staticmethod
    def from_term(t: Term) -> "FrontInfo":
        imps, dstr, dcon, ustr, ucon, suc, asts, olays, dyn, ambs = t.children
        fi = FrontInfo()
        fi.imps = {m.value for m in imps.items}
        fi.def_strs = {core.skey_from_term(k) for k in dstr.items}
        fi.def_cons = {core.ckey_from_term(k) for k in dcon.items}
        fi.used_strs = {core.skey_from_term(k) for k in ustr.items}
        fi.used_cons = {core.ckey_from_term(k) for k in ucon.items}
        for e in suc.items:
            fi.str_used_cons[core.skey_from_term(e.children[0])] = {
                core.ckey_from_term(c) for c in e.children[1].items}
        for e in asts.items:
            key = core.skey_from_term(e.children[0])
            fi.str_asts[key] = [
                (d.children[0].value, core.core_from_term(d.children[1]), d.children[2].value)
                for d in e.children[1].items]
        for e in olays.items:
            key = core.ckey_from_term(e.children[0])
            fi.olay_asts[key] = [core.overlay_from_term(o) for o in e.children[1].items]
        fi.dyn_rules = {n.value for n in dyn.items}
        fi.amb_sites = {(core.skey_from_term(e.children[0]), e.children[1].value)
                        for e in ambs.items}
        return fi


@dataclass
class LibInfo:
    def_strs: set
    def_cons: set
    unit_dir: str

    def to_term(self) -> Term:
        return appl("LI",
                    ListTerm(tuple(core.skey_to_term(k)
                                   for k in sorted(self.def_strs, key=StrategyKey.text))),
                    ListTerm(tuple(core.ckey_to_term(k)
                                   for k in sorted(self.def_cons, key=ConstructorKey.text))),
                    StrLit(self.unit_dir))

    @staticmethod
    def from_term(t: Term) -> "LibInfo":
        s, c, d = t.children
        return LibInfo({core.skey_from_term(k) for k in s.items},
                       {core.ckey_from_term(k) for k in c.items},
                       d.value)


@dataclass
class StaticInfo:
    imps: dict = field(default_factory=dict)
    def_strs: dict = field(default_factory=dict)
    def_cons: dict = field(default_factory=dict)
    used_strs: dict = field(default_factory=dict)
    used_cons: dict = field(default_factory=dict)
    str_used_cons: dict = field(default_factory=dict)
    str_asts: dict = field(default_factory=dict)   # StrategyKey -> [(module, index, core, modifier)]
    olay_asts: dict = field(default_factory=dict)  # ConstructorKey -> [(module, OverlayDef)]
    dyn_rules: set = field(default_factory=set)
    externals: set = field(default_factory=set)
    amb_sites: set = field(default_factory=set)
    lib_modules: set = field(default_factory=set)
    lib_unit_dirs: dict = field(default_factory=dict)


def combine_info(si: StaticInfo, mod: str, fi: FrontInfo, default_imports=DEFAULT_IMPORTS):
    """Fold one module's front-end information into the whole-program
    view.  Re-combining the same module replaces its old contribution,
    so the operation is idempotent.
    """
    si.imps[mod] = set(fi.imps) | set(default_imports)
    si.def_strs[mod] = set(fi.def_strs)
    si.def_cons[mod] = set(fi.def_cons)
    si.used_strs[mod] = set(fi.used_strs)
    si.used_cons[mod] = set(fi.used_cons)
    for key, cons in fi.str_used_cons.items():
        si.str_used_cons.setdefault(key, set()).update(cons)
    for key, entries in fi.str_asts.items():
        kept = [e for e in si.str_asts.get(key, []) if e[0] != mod]
        kept.extend((mod, i, body, modifier) for i, body, modifier in entries)
        si.str_asts[key] = sorted(kept, key=lambda e: (e[0], e[1]))
    for key, overlays in fi.olay_asts.items():
        kept = [e for e in si.olay_asts.get(key, []) if e[0] != mod]
        kept.extend((mod, o) for o in overlays)
        si.olay_asts[key] = kept
    si.dyn_rules |= fi.dyn_rules
    si.amb_sites |= fi.amb_sites


def combine_info_lib(si: StaticInfo, mod: str, li: LibInfo):
    si.imps[mod] = set()
    si.def_strs[mod] = set(li.def_strs)
    si.def_cons[mod] = set(li.def_cons)
    si.used_strs[mod] = set()
    si.used_cons[mod] = set()
    si.externals |= li.def_strs
    si.lib_modules.add(mod)
    si.lib_unit_dirs[mod] = li.unit_dir


# -- task implementations ------------------------------------------------------


def sub_front_end(input_term: Term) -> Term:
    """Desugar one definition and collect its usage facts.

    The input carries the definition's exact source slice, so the task
    key changes with any byte of the definition, while the output is a
    function of the parsed form only.
    """
    module, kind, name, index, text = (
        input_term.children[0].value, input_term.children[1].value,
        input_term.children[2].value, input_term.children[3].value,
        input_term.children[4].value)
    d = syntax.parse_definition(text, kind, module)
    fi = FrontInfo()
    if isinstance(d, syntax.SigDef):
        fi.def_cons |= set(d.constructors)
        return fi.to_term()
    try:
        key, result = desugar_to_core(d, FreshNames())
    except core.DesugarError as e:
        raise CompileError(f"{module}: {name} (definition {index}): {e}") from None
    if isinstance(d, syntax.OverlayDef):
        fi.olay_asts[key] = [result]
        fi.used_cons |= core.pattern_constructors(result.body)
        return fi.to_term()
    usage = collect_usage(result)
    fi.def_strs.add(key)
    fi.str_asts[key] = [(index, result, d.modifier)]
    fi.used_strs |= usage.used_strs
    fi.used_cons |= usage.used_cons
    fi.str_used_cons[key] = set(usage.used_cons)
    fi.dyn_rules |= usage.uses_dr
    fi.amb_sites |= {(key, n) for n in usage.amb_sites}
    return fi.to_term()


def _sub_front_input(module, unit) -> Term:
    return appl("SubFront", StrLit(module), StrLit(unit.kind), StrLit(unit.name),
                IntLit(unit.index), StrLit(unit.text))


def make_registry(cfg: Config, clock: StageClock) -> dict:
    def resolve_source(ctx, module):
        rel = os.path.join(*module.split("/")) + ".str"
        for root in (cfg.src_root, cfg.builtin_src):
            path = os.path.join(root, rel)
            data, _ = ctx.require_file(path)
            if data is not None:
                return path, data
        return None, None

    def front_end(ctx, input_term):
        with clock.stage("frontend"):
            module = input_term.children[0].value
            path, data = resolve_source(ctx, module)
            if path is None:
                raise ModuleNotFound(module)
            try:
                text = data.decode("utf-8")
            except UnicodeDecodeError as e:
                raise CompileError(f"{module}: source is not valid UTF-8: {e}") from None
            m = syntax.parse_module(text, module)
            imports, units = split_module(m)
            fi = FrontInfo()
            fi.imps = set(imports)
            for unit in units:
                frag = ctx.require_task(TaskKey("subFrontEnd", _sub_front_input(module, unit)))
                fi.merge(FrontInfo.from_term(frag))
            return fi.to_term()

    def sub_front_end_task(ctx, input_term):
        with clock.stage("frontend"):
            return sub_front_end(input_term)

    def front_end_lib(ctx, input_term):
        with clock.stage("frontend"):
            module = input_term.children[0].value
            for lib_dir in cfg.lib_dirs:
                unit_dir = os.path.join(lib_dir, *module.split("/"))
                data, _ = ctx.require_file(os.path.join(unit_dir, "lib.manifest"))
                if data is None:
                    continue
                return parse_lib_manifest(module, data, unit_dir).to_term()
            raise ModuleNotFound(module)

    def back_end(ctx, input_term):
        with clock.stage("backend"):
            _, key_t, defs_t, res_t, olays_t = input_term.children
            key = core.skey_from_term(key_t)
            defs = [(d.children[0].value, d.children[1].value,
                     core.core_from_term(d.children[2]), d.children[3].value)
                    for d in defs_t.items]
            resolutions = {(key, r.children[0].value): core.skey_from_term(r.children[1])
                           for r in res_t.items}
            overlays = {}
            for o in olays_t.items:
                overlay = core.overlay_from_term(o)
                overlays[overlay.key()] = overlay
            body = backend.compile_strategy(key, defs, resolutions, overlays)
            path = os.path.join(cfg.out_dir, backend.unit_file_name(key))
            ctx.provide_file(path, backend.unit_bytes(key, body))
            return StrLit(path)

    def congruence_task(ctx, input_term):
        with clock.stage("backend"):
            ck = core.ckey_from_term(input_term.children[1])
            key, body = backend.gen_congruence(ck)
            path = os.path.join(cfg.out_dir, backend.unit_file_name(key))
            ctx.provide_file(path, backend.unit_bytes(key, body))
            return StrLit(path)

    def dynrule_task(ctx, input_term):
        with clock.stage("backend"):
            name = input_term.children[1].value
            key, body = backend.gen_dynrule_support(name)
            path = os.path.join(cfg.out_dir, backend.unit_file_name(key))
            ctx.provide_file(path, backend.unit_bytes(key, body))
            return StrLit(path)

    def main_task(ctx, input_term):
        main_module = input_term.children[0].value
        si = gather_info(ctx, cfg, main_module)
        with clock.stage("static"):
            result = analysis.static_checks(main_module, si)
        if result.errors:
            return compile_result_term(result.errors, [])
        units = require_back_ends(ctx, cfg, si, result)
        manifest, externals = build_manifest(cfg, si, units)
        ctx.provide_file(cfg.manifest_path(), manifest)
        remove_stale_units(cfg.out_dir, units)
        return compile_result_term([], sorted(units, key=StrategyKey.text))

    def stats_task(ctx, input_term):
        main_module = input_term.children[0].value
        si = gather_info(ctx, cfg, main_module)
        with clock.stage("static"):
            result = analysis.static_checks(main_module, si)
        return stats_term(si, result)

    return {
        "frontEnd": front_end,
        "subFrontEnd": sub_front_end_task,
        "frontEndLib": front_end_lib,
        "backEnd": back_end,
        "congruence": congruence_task,
        "dynRule": dynrule_task,
        "main": main_task,
        "statsMain": stats_task,
    }


def parse_lib_manifest(module, data: bytes, unit_dir: str) -> LibInfo:
    from .terms import parse_term, ParseError
    try:
        t = parse_term(data.decode("utf-8"))
        if t.constructor != "Library" or len(t.children) != 2:
            raise ValueError("expected Library([...],[...])")
        ext, con = t.children
        strategies = {StrategyKey(e.children[0].value, e.children[1].value, e.children[2].value)
                      for e in ext.items}
        constructors = {ConstructorKey(c.children[0].value, c.children[1].value)
                        for c in con.items}
    except (ParseError, ValueError, AttributeError, IndexError, UnicodeDecodeError) as e:
        raise CompileError(f"{module}: malformed library manifest: {e}") from None
    return LibInfo(strategies, constructors, unit_dir)


def gather_info(ctx, cfg: Config, main_module: str) -> StaticInfo:
    """Worklist over the import graph from the main module; cyclic
    imports terminate through the seen set.
    """
    si = StaticInfo()
    worklist = [main_module]
    seen = {main_module}
    importer = {main_module: None}

    def chain(mod):
        out = []
        cur = mod
        while cur is not None:
            out.append(cur)
            cur = importer.get(cur)
        return tuple(reversed(out))

    while worklist:
        mod = worklist.pop(0)
        unit_dir = None
        for lib_dir in cfg.lib_dirs:
            candidate = os.path.join(lib_dir, *mod.split("/"))
            data, _ = ctx.require_file(os.path.join(candidate, "lib.manifest"))
            if data is not None:
                unit_dir = candidate
                break
        if unit_dir is not None:
            li = LibInfo.from_term(ctx.require_task(
                TaskKey("frontEndLib", appl("FrontLib", StrLit(mod), StrLit(cfg.digest)))))
            combine_info_lib(si, mod, li)
            continue
        try:
            fi_term = ctx.require_task(
                TaskKey("frontEnd", appl("Front", StrLit(mod), StrLit(cfg.digest))))
        except ModuleNotFound as e:
            raise ModuleNotFound(e.module, chain(mod)) from None
        fi = FrontInfo.from_term(fi_term)
        combine_info(si, mod, fi, cfg.default_imports)
        for imported in sorted(si.imps[mod]):
            if imported not in seen:
                seen.add(imported)
                importer[imported] = mod
                worklist.append(imported)
    return si


def overlay_closure(si: StaticInfo, cons) -> dict:
    """Transitively all overlays reachable from a set of constructor uses."""
    firsts = {key: entries[0][1] for key, entries in si.olay_asts.items()}
    out = {}
    work = list(cons)
    while work:
        ck = work.pop()
        overlay = firsts.get(ck)
        if overlay is not None and ck not in out:
            out[ck] = overlay
            work.extend(core.pattern_constructors(overlay.body))
    return out


def require_back_ends(ctx, cfg: Config, si: StaticInfo, result: AnalysisResult) -> list:
    units = []
    src_keys = sorted(si.str_asts, key=StrategyKey.text)
    for key in src_keys:
        defs = si.str_asts[key]
        closure = overlay_closure(si, si.str_used_cons.get(key, ()))
        defs_t = ListTerm(tuple(
            appl("D", StrLit(mod), IntLit(idx), core.core_to_term(body), StrLit(modifier))
            for mod, idx, body, modifier in sorted(defs, key=lambda e: (e[0], e[1]))))
        res_t = ListTerm(tuple(
            appl("R", StrLit(name), core.skey_to_term(target))
            for (k, name), target in sorted(result.resolutions.items(),
                                            key=lambda kv: (kv[0][0].text(), kv[0][1]))
            if k == key))
        olays_t = ListTerm(tuple(
            core.overlay_to_term(o)
            for _, o in sorted(closure.items(), key=lambda kv: kv[0].text())))
        input_term = appl("Back", StrLit(cfg.digest), core.skey_to_term(key),
                          defs_t, res_t, olays_t)
        ctx.require_task(TaskKey("backEnd", input_term))
        units.append(key)
    taken = set(units)
    for name in sorted(si.dyn_rules):
        key = StrategyKey(name, 0, 0)
        if key in taken:
            continue
        ctx.require_task(TaskKey("dynRule", appl("DynRuleU", StrLit(cfg.digest), StrLit(name))))
        units.append(key)
        taken.add(key)
    for ck in sorted(result.congruences_in_use, key=ConstructorKey.text):
        key = StrategyKey(ck.name, ck.arity, 0)
        if key in taken:
            continue  # a user strategy of the same key wins program-wide
        ctx.require_task(TaskKey("congruence",
                                 appl("CongU", StrLit(cfg.digest), core.ckey_to_term(ck))))
        units.append(key)
        taken.add(key)
    return units


def build_manifest(cfg: Config, si: StaticInfo, units) -> tuple[bytes, list]:
    extended = {key for key, defs in si.str_asts.items()
                if any(modifier == syntax.EXTEND for _, _, _, modifier in defs)}
    local = set(si.str_asts)
    externals = []
    for mod in sorted(si.lib_modules):
        unit_dir = si.lib_unit_dirs[mod]
        for key in sorted(si.def_strs[mod], key=StrategyKey.text):
            if key in extended:
                externals.append((StrategyKey(key.name + "$orig", key.sarity, key.tarity), unit_dir))
            elif key not in local:
                externals.append((key, unit_dir))
    constructors = set()
    for cons in si.def_cons.values():
        constructors |= cons
    manifest = backend.manifest_term(units, constructors, si.dyn_rules, externals)
    return (print_term(manifest) + "\n").encode("utf-8"), externals


def remove_stale_units(out_dir: str, units):
    expected = {backend.unit_file_name(k) for k in units}
    try:
        entries = os.listdir(out_dir)
    except FileNotFoundError:
        return
    for name in entries:
        if name.endswith(".unit") and name not in expected:
            os.unlink(os.path.join(out_dir, name))


def compile_result_term(errors, units) -> Term:
    err_terms = tuple(
        appl("Err", StrLit(e.kind), StrLit(e.subject), StrLit(e.module), StrLit(e.detail))
        for e in errors)
    unit_terms = tuple(core.skey_to_term(k) for k in units)
    return appl("Result", ListTerm(err_terms), IntLit(len(units)), ListTerm(unit_terms))


def errors_from_result(t: Term) -> list:
    return [StaticError(e.children[0].value, e.children[1].value,
                        e.children[2].value, e.children[3].value)
            for e in t.children[0].items]


# -- stats ---------------------------------------------------------------------


def _dynrule_contributions(body, out: set):
    if isinstance(body, (core.Seq, core.LChoice)):
        _dynrule_contributions(body.left, out)
        _dynrule_contributions(body.right, out)
    elif isinstance(body, (core.Scope, core.All, core.ScopeDR)):
        _dynrule_contributions(body.body, out)
    elif isinstance(body, core.Call):
        for a in body.sargs:
            _dynrule_contributions(a, out)
    elif isinstance(body, (core.DefineDR, core.UndefineDR)):
        out.add(body.name)


def stats_term(si: StaticInfo, result: AnalysisResult) -> Term:
    source_modules = sorted(m for m in si.imps if m not in si.lib_modules)
    keys = sorted(si.str_asts, key=StrategyKey.text)
    contributions = {}
    for key in keys:
        for _, _, body, _ in si.str_asts[key]:
            names = set()
            _dynrule_contributions(body, names)
            for n in names:
                contributions[n] = contributions.get(n, 0) + 1
    for n in si.dyn_rules:
        contributions.setdefault(n, 0)
    contribution_hist = {}
    for n, count in contributions.items():
        contribution_hist[count] = contribution_hist.get(count, 0) + 1
    spread_hist = {}
    for key in keys:
        nmods = len({mod for mod, _, _, _ in si.str_asts[key]})
        spread_hist[nmods] = spread_hist.get(nmods, 0) + 1
    overlay_keys = sorted(si.olay_asts, key=ConstructorKey.text)
    overlay_hist = {}
    for ok in overlay_keys:
        users = len({mod for mod, cons in si.used_cons.items() if ok in cons})
        overlay_hist[users] = overlay_hist.get(users, 0) + 1

    def hist_term(hist):
        return ListTerm(tuple(appl("H", IntLit(n), IntLit(count))
                              for n, count in sorted(hist.items())))

    err_terms = tuple(
        appl("Err", StrLit(e.kind), StrLit(e.subject), StrLit(e.module), StrLit(e.detail))
        for e in result.errors)
    return appl(
        "Stats",
        IntLit(len(source_modules)),
        IntLit(len(keys)),
        IntLit(len(result.congruences_in_use)),
        IntLit(len(si.amb_sites)),
        IntLit(len(si.dyn_rules)),
        hist_term(contribution_hist),
        hist_term(spread_hist),
        IntLit(len(si.olay_asts)),
        hist_term(overlay_hist),
        ListTerm(err_terms),
    )


# -- top-level entry points ------------------------------------------------------


@dataclass
class BuildReport:
    errors: list
    units: list
    counts: dict        # {"fe": {...}, "sfe": {...}, "be": {...}}
    times_ms: dict      # frontend/static/backend/orchestration/total
    trace: list

    @property
    def ok(self) -> bool:
        return not self.errors


def _report(clock: StageClock, trace, total_ns: int, errors, units) -> BuildReport:
    def bucket(kinds):
        executed = cached = 0
        counts = trace_counts(trace, kinds=set(kinds))
        for entry in counts.values():
            executed += entry[EXECUTED]
            cached += entry[CACHED]
        return {"executed": executed, "cached": cached}

    total_ms = total_ns // 1_000_000
    times = {
        "frontend": clock.ms("frontend"),
        "static": clock.ms("static"),
        "backend": clock.ms("backend"),
        "total": total_ms,
    }
    times["orchestration"] = max(
        0, total_ms - times["frontend"] - times["static"] - times["backend"])
    return BuildReport(
        errors=errors,
        units=units,
        counts={"fe": bucket(FRONTEND_KINDS), "sfe": bucket(SUBFRONTEND_KINDS),
                "be": bucket(BACKEND_KINDS)},
        times_ms=times,
        trace=trace,
    )


def compile_program(cfg: Config, main_module: str, store: Store | None = None) -> BuildReport:
    """Run a (re)compile of `main_module`; incremental against the store."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    if store is None:
        store = open_store(cfg.store_path())
    clock = StageClock()
    registry = make_registry(cfg, clock)
    root = TaskKey("main", appl("Main", StrLit(main_module), StrLit(cfg.digest)))
    began = time.perf_counter_ns()
    output, trace = build(store, root, registry)
    total = time.perf_counter_ns() - began
    errors = errors_from_result(output)
    units = [core.skey_from_term(k) for k in output.children[2].items]
    return _report(clock, trace, total, errors, units)


def gather_stats(cfg: Config, main_module: str, store: Store | None = None):
    """Front-end plus static analysis only; returns (stats term, report)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    if store is None:
        store = open_store(cfg.store_path())
    clock = StageClock()
    registry = make_registry(cfg, clock)
    root = TaskKey("statsMain", appl("StatsMain", StrLit(main_module), StrLit(cfg.digest)))
    began = time.perf_counter_ns()
    output, trace = build(store, root, registry)
    total = time.perf_counter_ns() - began
    errors = [StaticError(e.children[0].value, e.children[1].value,
                          e.children[2].value, e.children[3].value)
              for e in output.children[9].items]
    return output, _report(clock, trace, total, errors, [])
