import os
import shutil

import pytest

from strata.cli import main
from strata.terms import parse_term, print_term
from conftest import write_tree

TFA_SRC = os.path.join(os.path.dirname(__file__), "fixtures", "tfa")


@pytest.fixture
def tfa(tmp_path):
    src = tmp_path / "src"
    shutil.copytree(TFA_SRC, src)
    out = tmp_path / "out"
    return {"src": str(src), "out": str(out)}


def compile_args(t, *extra):
    return ["compile", "--main", "tfa/main", "--src", t["src"], "--out", t["out"], *extra]


def test_compile_tfa(tfa):
    assert main(compile_args(tfa)) == 0
    assert os.path.exists(os.path.join(tfa["out"], "program.manifest"))
    units = [f for f in os.listdir(tfa["out"]) if f.endswith(".unit")]
    assert "desugar.0.0.unit" in units
    assert "EvalVar.0.0.unit" in units  # dynamic-rule applicator
    assert "Begin.1.0.unit" in units    # congruence in use


def test_recompile_all_cached(tfa, tmp_path):
    trace = str(tmp_path / "trace.txt")
    assert main(compile_args(tfa)) == 0
    assert main(compile_args(tfa, "--trace", trace)) == 0
    lines = open(trace).read().strip().splitlines()
    assert lines and all(line.startswith("cached\t") for line in lines)


def test_missing_main_is_usage_error(tfa, capsys):
    code = main(["compile", "--src", tfa["src"], "--out", tfa["out"]])
    assert code == 2


def test_invalid_module_id_is_usage_error(tfa):
    assert main(["compile", "--main", "no/../good", "--src", tfa["src"],
                 "--out", tfa["out"]]) == 2


def test_compile_error_exit_code(tfa, capsys):
    write_tree(tfa["src"], {"tfa/main.str": "module tfa/main strategies main = ghost"})
    assert main(compile_args(tfa)) == 1
    err = capsys.readouterr().err
    assert "UnresolvedStrategy" in err
    assert "ghost/0-0" in err


def test_parse_error_exit_code(tfa, capsys):
    write_tree(tfa["src"], {"tfa/main.str": "module tfa/main strategies main = "})
    assert main(compile_args(tfa)) == 1
    assert "error" in capsys.readouterr().err


def run_args(t, strategy, input_file, *extra):
    return ["run", "--program", t["out"], "--strategy", strategy,
            "--input", input_file, *extra]


def _write_term(tmp_path, text):
    path = tmp_path / "input.trm"
    path.write_text(text)
    return str(path)


def test_run_desugar_for_loop(tfa, tmp_path, capsys):
    assert main(compile_args(tfa)) == 0
    inp = _write_term(tmp_path, 'For("i",Int(1),Int(3),[Call("print",[Var("i")])])')
    assert main(run_args(tfa, "desugar", inp)) == 0
    out = capsys.readouterr().out.strip()
    want = ('Begin([VarDecl("i"),VarDecl("$new0"),Assign("i",Int(1)),'
            'Assign("$new0",Int(3)),While(Leq(Var("i"),Var("$new0")),'
            '[Call("print",[Var("i")]),Assign("i",Call("Add",[Var("i"),Int(1)]))])])')
    assert out == want


def test_run_eval_arithmetic(tfa, tmp_path, capsys):
    assert main(compile_args(tfa)) == 0
    inp = _write_term(tmp_path, "Add(Int(1),Mul(Int(2),Int(3)))")
    assert main(run_args(tfa, "main", inp)) == 0
    assert capsys.readouterr().out.strip() == "Int(7)"


def test_run_failure_exit_code(tfa, tmp_path, capsys):
    assert main(compile_args(tfa)) == 0
    inp = _write_term(tmp_path, "Int(1)")
    assert main(run_args(tfa, "always-fail", inp)) == 1
    assert capsys.readouterr().out.strip() == "failure"


def test_run_unknown_strategy(tfa, tmp_path, capsys):
    assert main(compile_args(tfa)) == 0
    inp = _write_term(tmp_path, "Int(1)")
    assert main(run_args(tfa, "no-such", inp)) == 2


def test_run_bad_input_term(tfa, tmp_path):
    assert main(compile_args(tfa)) == 0
    inp = _write_term(tmp_path, "NotATerm(")
    assert main(run_args(tfa, "main", inp)) == 2


def test_stats_tfa(tfa, capsys):
    assert main(["stats", "--main", "tfa/main", "--src", tfa["src"],
                 "--out", tfa["out"]]) == 0
    out = capsys.readouterr().out
    assert "modules: " in out
    assert "ambiguous use sites: " in out
    assert "dynamic rules: 1" in out


def test_clean_removes_outputs(tfa):
    assert main(compile_args(tfa)) == 0
    assert main(["clean", "--out", tfa["out"]]) == 0
    leftover = [f for f in os.listdir(tfa["out"])
                if f.endswith(".unit") or f == "program.manifest" or f == ".store"]
    assert leftover == []


# -- bench -----------------------------------------------------------------------


@pytest.fixture
def bench_setup(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    write_tree(str(src), {
        "main.str": "module main imports util strategies go = helper",
        "util.str": "module util strategies helper = !1 spare = !2",
    })
    script = tmp_path / "script"
    script.mkdir()
    (script / "steps.list").write_text("edit-helper\nadd-def\nrevert\n")
    write_tree(str(script / "edit-helper"), {
        "util.str": "module util strategies helper = !10 spare = !2"})
    write_tree(str(script / "add-def"), {
        "util.str": "module util strategies helper = !10 spare = !2 extra = !3"})
    write_tree(str(script / "revert"), {
        "util.str": "module util strategies helper = !1 spare = !2"})
    return {"src": str(src), "out": str(tmp_path / "out"),
            "script": str(script), "csv": str(tmp_path / "bench.csv")}


def bench_args(b, *extra):
    return ["bench", "--main", "main", "--src", b["src"], "--out", b["out"],
            "--script", b["script"], "--csv", b["csv"], *extra]


def test_bench_rows_and_columns(bench_setup):
    b = bench_setup
    assert main(bench_args(b)) == 0
    lines = open(b["csv"]).read().strip().splitlines()
    header = lines[0]
    assert header == ("step,files_changed,fe_exec,fe_cached,sfe_exec,sfe_cached,"
                      "be_exec,be_cached,fe_ms,static_ms,be_ms,orch_ms,total_ms,verify")
    assert len(lines) == 1 + 1 + 3  # header, CLEAN, 3 steps
    assert lines[1].startswith("CLEAN,")
    assert [l.split(",")[0] for l in lines[2:]] == ["edit-helper", "add-def", "revert"]


def test_bench_step_counts(bench_setup):
    b = bench_setup
    assert main(bench_args(b)) == 0
    lines = open(b["csv"]).read().strip().splitlines()
    rows = {l.split(",")[0]: l.split(",") for l in lines[1:]}
    # editing one definition body: 1 front-end, 1 sub-front-end, 1 back-end
    edit = rows["edit-helper"]
    assert edit[1] == "1"   # files changed
    assert edit[2] == "1"   # fe_exec
    assert edit[4] == "1"   # sfe_exec
    assert edit[6] == "1"   # be_exec


def test_bench_verify_ok(bench_setup):
    b = bench_setup
    assert main(bench_args(b, "--verify")) == 0
    lines = open(b["csv"]).read().strip().splitlines()
    assert all(l.rsplit(",", 1)[1] == "ok" for l in lines[1:])


def test_bench_repeat_restores_state(bench_setup):
    b = bench_setup
    assert main(bench_args(b, "--repeat", "2")) == 0
    lines = open(b["csv"]).read().strip().splitlines()
    assert len(lines) == 1 + 1 + 6  # header + CLEAN + 3 steps x 2 passes
    first = [l.split(",")[:8] for l in lines[2:5]]
    second = [l.split(",")[:8] for l in lines[5:8]]
    assert first == second  # identical counts in every pass


def test_bench_warmup_skips_rows(bench_setup):
    b = bench_setup
    assert main(bench_args(b, "--warmup", "1")) == 0
    lines = open(b["csv"]).read().strip().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["CLEAN", "add-def", "revert"]


def test_bench_plot(bench_setup, tmp_path):
    b = bench_setup
    plot = str(tmp_path / "bench.png")
    assert main(bench_args(b, "--plot", plot)) == 0
    assert os.path.getsize(plot) > 0


def test_bench_bad_script(bench_setup, tmp_path):
    b = bench_setup
    empty = tmp_path / "empty-script"
    empty.mkdir()
    assert main(bench_args({**b, "script": str(empty)})) == 2


def test_bench_failing_step_exits_nonzero(bench_setup, capsys):
    b = bench_setup
    write_tree(os.path.join(b["script"], "edit-helper"),
               {"util.str": "module util strategies helper = nope spare = !2"})
    assert main(bench_args(b)) == 1
