"""Benchmark replay support: edit scripts, CSV rows, and figures.

An edit script is a directory with a `steps.list` file naming one step
per line; each step is a subdirectory whose files overlay the source
root (by relative path) and whose optional `deleted.list` names files to
remove.  Replaying a script simulates a commit history.

The CSV column layout is fixed; `render_figure` draws the per-step stage
times as stacked bars next to it.
"""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass

CSV_HEADER = ("step,files_changed,fe_exec,fe_cached,sfe_exec,sfe_cached,"
              "be_exec,be_cached,fe_ms,static_ms,be_ms,orch_ms,total_ms,verify")


@dataclass
class BenchRow:
    step: str
    files_changed: int
    fe_exec: int
    fe_cached: int
    sfe_exec: int
    sfe_cached: int
    be_exec: int
    be_cached: int
    fe_ms: int
    static_ms: int
    be_ms: int
    orch_ms: int
    total_ms: int
    verify: str = "skipped"

    def csv(self) -> str:
        return ",".join(str(v) for v in (
            self.step, self.files_changed, self.fe_exec, self.fe_cached,
            self.sfe_exec, self.sfe_cached, self.be_exec, self.be_cached,
            self.fe_ms, self.static_ms, self.be_ms, self.orch_ms,
            self.total_ms, self.verify))


def row_from_report(step: str, files_changed: int, report) -> BenchRow:
    c = report.counts
    t = report.times_ms
    return BenchRow(
        step=step, files_changed=files_changed,
        fe_exec=c["fe"]["executed"], fe_cached=c["fe"]["cached"],
        sfe_exec=c["sfe"]["executed"], sfe_cached=c["sfe"]["cached"],
        be_exec=c["be"]["executed"], be_cached=c["be"]["cached"],
        fe_ms=t["frontend"], static_ms=t["static"], be_ms=t["backend"],
        orch_ms=t["orchestration"], total_ms=t["total"])


def write_csv(rows, path: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(row.csv() + "\n")


@dataclass
class EditScript:
    root: str
    steps: list

    def step_dir(self, step: str) -> str:
        return os.path.join(self.root, step)


class EditScriptError(Exception):
    pass


def load_edit_script(root: str) -> EditScript:
    steps_file = os.path.join(root, "steps.list")
    if not os.path.isfile(steps_file):
        raise EditScriptError(f"no steps.list in {root}")
    with open(steps_file, "r", encoding="utf-8") as f:
        steps = [line.strip() for line in f if line.strip()]
    for step in steps:
        if not os.path.isdir(os.path.join(root, step)):
            raise EditScriptError(f"step directory missing: {step}")
    return EditScript(root, steps)


def apply_step(script: EditScript, step: str, src_root: str) -> int:
    """Overlay one step onto the source tree; returns files touched."""
    step_dir = script.step_dir(step)
    changed = 0
    for dirpath, _, filenames in os.walk(step_dir):
        for name in filenames:
            if dirpath == step_dir and name == "deleted.list":
                continue
            src = os.path.join(dirpath, name)
            rel = os.path.relpath(src, step_dir)
            dst = os.path.join(src_root, rel)
            os.makedirs(os.path.dirname(dst), exist_ok=True)
            shutil.copyfile(src, dst)
            changed += 1
    deleted_list = os.path.join(step_dir, "deleted.list")
    if os.path.isfile(deleted_list):
        with open(deleted_list, "r", encoding="utf-8") as f:
            for line in f:
                rel = line.strip()
                if not rel:
                    continue
                target = os.path.join(src_root, rel)
                if os.path.exists(target):
                    os.unlink(target)
                changed += 1
    return changed


def list_output_files(root: str) -> dict:
    """Relative path -> bytes for every non-hidden file under root."""
    out = {}
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = [d for d in dirnames if not d.startswith(".")]
        for name in filenames:
            if name.startswith("."):
                continue
            path = os.path.join(dirpath, name)
            with open(path, "rb") as f:
                out[os.path.relpath(path, root)] = f.read()
    return out


def compare_trees(a: str, b: str) -> list:
    """Relative paths of non-hidden files that differ between two trees."""
    fa = list_output_files(a)
    fb = list_output_files(b)
    diffs = []
    for rel in sorted(set(fa) | set(fb)):
        if fa.get(rel) != fb.get(rel):
            diffs.append(rel)
    return diffs


def render_figure(rows, path: str):
    """Stacked per-step stage times, written as an image next to the CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r.step for r in rows]
    stages = [
        ("front-end", [r.fe_ms for r in rows], "#4878a8"),
        ("static", [r.static_ms for r in rows], "#e8a33d"),
        ("back-end", [r.be_ms for r in rows], "#6aa84f"),
        ("orchestration", [r.orch_ms for r in rows], "#999999"),
    ]
    xs = range(len(rows))
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(rows) + 2), 4.5))
    bottom = [0] * len(rows)
    for label, values, color in stages:
        ax.bar(xs, values, bottom=bottom, label=label, color=color, width=0.8)
        bottom = [b + v for b, v in zip(bottom, values)]
    ax.set_xticks(list(xs))
    ax.set_xticklabels(steps, rotation=90, fontsize=7)
    ax.set_ylabel("time (ms)")
    ax.set_xlabel("step")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
