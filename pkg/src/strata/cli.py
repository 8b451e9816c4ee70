"""Command-line interface.

    strata compile --main M --src DIR --out DIR [--lib DIR]... [--store F] [--clean] [--trace F]
    strata run     --program OUTDIR --strategy NAME --input FILE [--lib DIR]...
    strata bench   --script DIR <compile flags> [--csv F] [--repeat N] [--warmup K] [--verify] [--plot F]
    strata stats   <compile flags>
    strata clean   --out DIR [--store F]

Exit codes: 0 success, 1 compile errors or strategy failure, 2 usage,
3 internal/store/runtime errors.  Diagnostics go to stderr; result data
(terms, stats, CSV paths) to stdout.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
import threading

from . import report, runtime
from .analysis import sort_errors
from .engine import BuildError, StoreCorrupt, StoreLocked
from .pipeline import BuildReport, CompileError, Config, compile_program, gather_stats
from .syntax import MODULE_ID_RE, ModuleParseError, StrategyKey
from .terms import ParseError, parse_term, print_term, term_digest

EXIT_OK = 0
EXIT_COMPILE = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def _add_compile_flags(p: argparse.ArgumentParser):
    p.add_argument("--main", required=True, help="main module id, e.g. desugar/main")
    p.add_argument("--src", required=True, help="source root directory")
    p.add_argument("--lib", action="append", default=[], help="library directory (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--store", default=None, help="store file (default <out>/.store)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strata", description="Strata incremental compiler")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a program")
    _add_compile_flags(p)
    p.add_argument("--clean", action="store_true", help="discard the store first")
    p.add_argument("--trace", default=None, help="write the task trace to a file")

    p = sub.add_parser("run", help="run a strategy from a compiled program")
    p.add_argument("--program", required=True, help="compiled output directory")
    p.add_argument("--strategy", required=True, help="strategy name (0/0 arity)")
    p.add_argument("--input", required=True, help="file holding the subject term")
    p.add_argument("--lib", action="append", default=[], help="extra library root (repeatable)")
    p.add_argument("--max-depth", type=int, default=runtime.DEFAULT_MAX_DEPTH,
                   help="recursion budget in logical frames")

    p = sub.add_parser("bench", help="replay an edit script, timing each rebuild")
    _add_compile_flags(p)
    p.add_argument("--script", required=True, help="edit script directory")
    p.add_argument("--csv", default=None, help="CSV output file (default <out>/bench.csv)")
    p.add_argument("--repeat", type=int, default=1, help="replay passes")
    p.add_argument("--warmup", type=int, default=0, help="apply first K steps untimed")
    p.add_argument("--verify", action="store_true",
                   help="byte-compare each step against a from-scratch build")
    p.add_argument("--plot", default=None, help="render stage times to an image file")

    p = sub.add_parser("stats", help="code metrics for a corpus")
    _add_compile_flags(p)

    p = sub.add_parser("clean", help="remove compiled output and the store")
    p.add_argument("--out", required=True)
    p.add_argument("--store", default=None)
    return parser


def _config(args) -> Config:
    if not MODULE_ID_RE.match(args.main):
        raise SystemExit(_usage_error(f"invalid module id: {args.main!r}"))
    return Config(src_root=args.src, out_dir=args.out, lib_dirs=tuple(args.lib),
                  store_file=args.store)


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _print_errors(errors):
    for e in sort_errors(errors):
        print(e.render(), file=sys.stderr)


def _write_trace(path: str, trace):
    with open(path, "w", encoding="utf-8") as f:
        for key, outcome in trace:
            f.write(f"{outcome}\t{key.kind}\t{term_digest(key.input)}\n")


def _compile_once(cfg: Config, main_module: str) -> BuildReport:
    return compile_program(cfg, main_module)


def cmd_compile(args) -> int:
    cfg = _config(args)
    if args.clean and os.path.exists(cfg.store_path()):
        os.unlink(cfg.store_path())
    try:
        rep = _compile_once(cfg, args.main)
    except (CompileError, ModuleParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    except (StoreCorrupt, StoreLocked) as e:
        print(f"error: {e} (try --clean)", file=sys.stderr)
        return EXIT_INTERNAL
    except BuildError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    if args.trace:
        _write_trace(args.trace, rep.trace)
    if rep.errors:
        _print_errors(rep.errors)
        return EXIT_COMPILE
    print(f"compiled {len(rep.units)} units to {cfg.out_dir}", file=sys.stderr)
    return EXIT_OK


def _in_deep_thread(fn):
    """Run fn on a thread with a large stack so legitimately deep
    programs do not hit the platform's main-thread limits."""
    result = {}

    def worker():
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(10_000_000)
        try:
            result["value"] = fn()
        except BaseException as e:  # re-raised on the calling thread
            result["error"] = e
        finally:
            sys.setrecursionlimit(old)

    old_size = threading.stack_size(512 * 1024 * 1024)
    try:
        t = threading.Thread(target=worker, name="strata-run")
        t.start()
        t.join()
    finally:
        threading.stack_size(old_size)
    if "error" in result:
        raise result["error"]
    return result["value"]


def cmd_run(args) -> int:
    try:
        program = runtime.load_program(args.program, tuple(args.lib))
    except runtime.ProgramLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    key = StrategyKey(args.strategy, 0, 0)
    if key not in program.units:
        print(f"error: unknown strategy {key.text()}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with open(args.input, "r", encoding="utf-8") as f:
            subject = parse_term(f.read())
    except FileNotFoundError:
        return _usage_error(f"input file not found: {args.input}")
    except ParseError as e:
        return _usage_error(f"bad input term: {e}")
    state = runtime.ExecState(max_depth=args.max_depth)
    try:
        result = _in_deep_thread(
            lambda: runtime.apply_strategy(program, key, subject, state=state))
    except runtime.StrataRuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    if result is runtime.FAILED:
        print("failure")
        return EXIT_COMPILE
    print(print_term(result))
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _config(args)
    try:
        stats, rep = gather_stats(cfg, args.main)
    except (CompileError, ModuleParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    except BuildError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    if rep.errors:
        _print_errors(rep.errors)
        return EXIT_COMPILE
    ch = stats.children

    def plural(n, word):
        return f"{n} {word}" if n == 1 else f"{n} {word}s"

    def hist_lines(hist_term, word):
        return [f"  {plural(h.children[0].value, word)}: {h.children[1].value}"
                for h in hist_term.items]

    lines = [
        f"modules: {ch[0].value}",
        f"strategy keys: {ch[1].value}",
        f"congruences in use: {ch[2].value}",
        f"ambiguous use sites: {ch[3].value}",
        f"dynamic rules: {ch[4].value}",
        "dynamic rule contributions:",
        *hist_lines(ch[5], "contribution"),
        "strategy definition spread:",
        *hist_lines(ch[6], "module"),
        f"overlay definitions: {ch[7].value}",
        "overlay usage spread:",
        *hist_lines(ch[8], "module"),
    ]
    print("\n".join(lines))
    return EXIT_OK


def _copy_tree(src: str, dst: str):
    if os.path.exists(dst):
        shutil.rmtree(dst)
    shutil.copytree(src, dst)


def cmd_bench(args) -> int:
    try:
        script = report.load_edit_script(args.script)
    except report.EditScriptError as e:
        return _usage_error(str(e))
    if args.repeat < 1:
        return _usage_error("--repeat must be at least 1")

    workdir = tempfile.mkdtemp(prefix="strata-bench-")
    rows = []
    failed = False
    try:
        work_src = os.path.join(workdir, "src")
        _copy_tree(args.src, work_src)
        out_dir = os.path.abspath(args.out)
        os.makedirs(out_dir, exist_ok=True)
        for name in os.listdir(out_dir):
            path = os.path.join(out_dir, name)
            if os.path.isfile(path):
                os.unlink(path)
        cfg = Config(src_root=work_src, out_dir=out_dir, lib_dirs=tuple(args.lib),
                     store_file=args.store)

        def compile_step(step_name, files_changed, record):
            nonlocal failed
            try:
                rep = _compile_once(cfg, args.main)
            except (CompileError, ModuleParseError) as e:
                print(f"error: step {step_name}: {e}", file=sys.stderr)
                failed = True
                return None
            if rep.errors:
                print(f"error: step {step_name}:", file=sys.stderr)
                _print_errors(rep.errors)
                failed = True
                return None
            if not record:
                return rep
            row = report.row_from_report(step_name, files_changed, rep)
            if args.verify:
                verify_out = os.path.join(workdir, "verify-out")
                if os.path.exists(verify_out):
                    shutil.rmtree(verify_out)
                vcfg = Config(src_root=work_src, out_dir=verify_out,
                              lib_dirs=tuple(args.lib))
                try:
                    vrep = compile_program(vcfg, args.main)
                except (CompileError, ModuleParseError) as e:
                    print(f"error: verify build failed at {step_name}: {e}", file=sys.stderr)
                    failed = True
                    return None
                if vrep.errors:
                    print(f"error: verify build failed at {step_name}", file=sys.stderr)
                    failed = True
                    return None
                diffs = report.compare_trees(out_dir, verify_out)
                if diffs:
                    row.verify = "fail"
                    failed = True
                    for rel in diffs:
                        print(f"verify mismatch at {step_name}: {rel}", file=sys.stderr)
                else:
                    row.verify = "ok"
            rows.append(row)
            return rep

        if compile_step("CLEAN", 0, record=True) is None:
            return EXIT_COMPILE

        pristine_src = os.path.join(workdir, "pristine-src")
        snapshot_out = os.path.join(workdir, "snapshot-out")
        _copy_tree(work_src, pristine_src)
        _copy_tree(out_dir, snapshot_out)

        for _pass in range(args.repeat):
            if _pass > 0:
                _copy_tree(pristine_src, work_src)
                _copy_tree(snapshot_out, out_dir)
            for i, step in enumerate(script.steps):
                files_changed = report.apply_step(script, step, work_src)
                if compile_step(step, files_changed, record=(i >= args.warmup)) is None:
                    return EXIT_COMPILE

        csv_path = args.csv or os.path.join(out_dir, "bench.csv")
        report.write_csv(rows, csv_path)
        print(csv_path)
        if args.plot:
            report.render_figure(rows, args.plot)
            print(args.plot)
        return EXIT_COMPILE if failed else EXIT_OK
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def cmd_clean(args) -> int:
    out_dir = os.path.abspath(args.out)
    store = args.store or os.path.join(out_dir, ".store")
    for path in (store, store + ".lock", store + ".tmp"):
        if os.path.exists(path):
            os.unlink(path)
    if os.path.isdir(out_dir):
        for name in os.listdir(out_dir):
            if name.endswith(".unit") or name == "program.manifest":
                os.unlink(os.path.join(out_dir, name))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        if args.command == "compile":
            return cmd_compile(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "stats":
            return cmd_stats(args)
        if args.command == "clean":
            return cmd_clean(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
