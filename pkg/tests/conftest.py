import os

import pytest

from strata.backend import library_manifest_term
from strata.core import skey_from_term
from strata.pipeline import Config, compile_program
from strata.terms import parse_term, print_term


def write_tree(root, files: dict):
    """Materialize {relative path: text} under root."""
    for rel, text in files.items():
        path = os.path.join(root, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return root


def make_library(base_dir, module_id, text):
    """Compile a module into a library directory and return the lib root.

    The build shadows lib/std with an empty module so the library's unit
    set never overlaps the std units of an importing program.
    """
    base_dir = str(base_dir)
    src = os.path.join(base_dir, f"libsrc-{module_id.replace('/', '_')}")
    write_tree(src, {module_id + ".str": text, "lib/std.str": "module lib/std"})
    lib_root = os.path.join(base_dir, "libs")
    unit_dir = os.path.join(lib_root, *module_id.split("/"))
    cfg = Config(src_root=src, out_dir=unit_dir)
    rep = compile_program(cfg, module_id)
    assert not rep.errors, rep.errors
    with open(os.path.join(unit_dir, "program.manifest"), encoding="utf-8") as f:
        manifest = parse_term(f.read())
    strategies = [skey_from_term(u.children[0]) for u in manifest.children[0].items]
    from strata.syntax import ConstructorKey
    cons = [ConstructorKey(c.children[0].value, c.children[1].value)
            for c in manifest.children[1].items]
    with open(os.path.join(unit_dir, "lib.manifest"), "w", encoding="utf-8") as f:
        f.write(print_term(library_manifest_term(strategies, cons)) + "\n")
    os.unlink(os.path.join(unit_dir, "program.manifest"))
    for hidden in (".store", ".store.lock"):
        p = os.path.join(unit_dir, hidden)
        if os.path.exists(p):
            os.unlink(p)
    return lib_root


@pytest.fixture
def project(tmp_path):
    """A tiny project scaffold: returns (make, cfg-factory) helpers."""
    src = tmp_path / "src"
    out = tmp_path / "out"
    src.mkdir()

    class Project:
        src_root = str(src)
        out_dir = str(out)

        def write(self, files):
            write_tree(self.src_root, files)
            return self

        def config(self, **kw):
            return Config(src_root=self.src_root, out_dir=self.out_dir, **kw)

        def compile(self, main, **kw):
            return compile_program(self.config(**kw), main)

    return Project()
