import os
import random

import pytest

from strata.engine import (ABSENT, CACHED, EXECUTED, BuildError, CycleError, FileRequire,
                           HiddenDependencyError, OverlappingProviderError, Store,
                           StoreCorrupt, TaskDep, TaskKey, build, open_store)
from strata.terms import IntLit, StrLit, appl, print_term


def key(kind, value):
    return TaskKey(kind, IntLit(value) if isinstance(value, int) else StrLit(value))


def executed(trace):
    return {k for k, outcome in trace if outcome == EXECUTED}


def cached(trace):
    return {k for k, outcome in trace if outcome == CACHED}


def test_second_build_all_cached(tmp_path):
    f = tmp_path / "input.txt"
    f.write_bytes(b"hello")

    def leaf(ctx, input):
        data, _ = ctx.require_file(str(f))
        return IntLit(len(data))

    def root(ctx, input):
        out = ctx.require_task(key("leaf", 0))
        return IntLit(out.value + 1)

    registry = {"leaf": leaf, "root": root}
    store = Store()
    out1, t1 = build(store, key("root", 0), registry)
    assert out1 == IntLit(6)
    assert executed(t1) == {key("root", 0), key("leaf", 0)}
    out2, t2 = build(store, key("root", 0), registry)
    assert out2 == IntLit(6)
    assert executed(t2) == set()
    assert cached(t2) == {key("root", 0), key("leaf", 0)}


def test_rewrite_with_identical_bytes_stays_cached(tmp_path):
    f = tmp_path / "input.txt"
    f.write_bytes(b"same")

    def leaf(ctx, input):
        data, _ = ctx.require_file(str(f))
        return IntLit(len(data))

    store = Store()
    build(store, key("leaf", 0), {"leaf": leaf})
    f.write_bytes(b"same")  # touch with identical content
    _, t2 = build(store, key("leaf", 0), {"leaf": leaf})
    assert executed(t2) == set()


def test_early_cutoff_three_node_chain(tmp_path):
    # A requires B requires file f; B's output is len(f) mod 2, so an
    # edit that keeps the parity re-executes B but leaves A cached.
    f = tmp_path / "f"
    f.write_bytes(b"x")

    def b_task(ctx, input):
        data, _ = ctx.require_file(str(f))
        return IntLit(len(data) % 2)

    def a_task(ctx, input):
        out = ctx.require_task(key("b", 0))
        return IntLit(out.value + 10)

    registry = {"a": a_task, "b": b_task}
    store = Store()
    out, _ = build(store, key("a", 0), registry)
    assert out == IntLit(11)

    f.write_bytes(b"xyz")  # parity unchanged
    _, t2 = build(store, key("a", 0), registry)
    assert executed(t2) == {key("b", 0)}
    assert key("a", 0) in cached(t2)

    f.write_bytes(b"xy")  # parity flips
    out3, t3 = build(store, key("a", 0), registry)
    assert executed(t3) == {key("b", 0), key("a", 0)}
    assert out3 == IntLit(10)


def test_require_same_callee_twice(tmp_path):
    calls = []

    def leaf(ctx, input):
        calls.append(1)
        return IntLit(7)

    def root(ctx, input):
        a = ctx.require_task(key("leaf", 0))
        b = ctx.require_task(key("leaf", 0))
        assert a == b
        return a

    store = Store()
    out, trace = build(store, key("root", 0), {"leaf": leaf, "root": root})
    assert len(calls) == 1
    record = store.records[key("root", 0)]
    task_deps = [d for d in record.deps if isinstance(d, TaskDep)]
    assert len(task_deps) == 2


def test_changed_input_is_new_task(tmp_path):
    def leaf(ctx, input):
        return IntLit(input.value * 2)

    store = Store()
    build(store, key("leaf", 1), {"leaf": leaf})
    _, t2 = build(store, key("leaf", 2), {"leaf": leaf})
    assert executed(t2) == {key("leaf", 2)}


def test_absent_file_then_created(tmp_path):
    f = tmp_path / "maybe.txt"

    def leaf(ctx, input):
        data, stamp = ctx.require_file(str(f))
        if data is None:
            assert stamp == ABSENT
            return IntLit(-1)
        return IntLit(len(data))

    store = Store()
    out1, _ = build(store, key("leaf", 0), {"leaf": leaf})
    assert out1 == IntLit(-1)
    _, t2 = build(store, key("leaf", 0), {"leaf": leaf})
    assert executed(t2) == set()
    f.write_bytes(b"now")
    out3, t3 = build(store, key("leaf", 0), {"leaf": leaf})
    assert executed(t3) == {key("leaf", 0)}
    assert out3 == IntLit(3)


def test_provided_file_edited_externally_reprovides(tmp_path):
    target = tmp_path / "gen.txt"

    def gen(ctx, input):
        ctx.provide_file(str(target), b"generated")
        return IntLit(0)

    store = Store()
    build(store, key("gen", 0), {"gen": gen})
    target.write_bytes(b"tampered")
    _, t2 = build(store, key("gen", 0), {"gen": gen})
    assert executed(t2) == {key("gen", 0)}
    assert target.read_bytes() == b"generated"


def test_hidden_dependency_read_after_provide(tmp_path):
    target = tmp_path / "gen.txt"

    def gen(ctx, input):
        ctx.provide_file(str(target), b"data")
        return IntLit(0)

    def reader(ctx, input):
        data, _ = ctx.require_file(str(target))
        return IntLit(0 if data is None else len(data))

    def root(ctx, input):
        ctx.require_task(key("gen", 0))
        ctx.require_task(key("reader", 0))  # reader never required gen
        return IntLit(0)

    with pytest.raises(HiddenDependencyError):
        build(Store(), key("root", 0), {"gen": gen, "reader": reader, "root": root})


def test_hidden_dependency_provide_after_read(tmp_path):
    target = tmp_path / "gen.txt"

    def gen(ctx, input):
        ctx.provide_file(str(target), b"data")
        return IntLit(0)

    def reader(ctx, input):
        ctx.require_file(str(target))
        return IntLit(0)

    def root(ctx, input):
        ctx.require_task(key("reader", 0))
        ctx.require_task(key("gen", 0))
        return IntLit(0)

    with pytest.raises(HiddenDependencyError):
        build(Store(), key("root", 0), {"gen": gen, "reader": reader, "root": root})


def test_legal_generated_file_read(tmp_path):
    target = tmp_path / "gen.txt"

    def gen(ctx, input):
        ctx.provide_file(str(target), b"data")
        return IntLit(0)

    def reader(ctx, input):
        ctx.require_task(key("gen", 0))
        data, _ = ctx.require_file(str(target))
        return IntLit(len(data))

    store = Store()
    out, _ = build(store, key("reader", 0), {"gen": gen, "reader": reader})
    assert out == IntLit(4)
    _, t2 = build(store, key("reader", 0), {"gen": gen, "reader": reader})
    assert executed(t2) == set()


def test_overlapping_provider(tmp_path):
    target = tmp_path / "out.txt"

    def w1(ctx, input):
        ctx.provide_file(str(target), b"one")
        return IntLit(1)

    def w2(ctx, input):
        ctx.provide_file(str(target), b"two")
        return IntLit(2)

    def root(ctx, input):
        ctx.require_task(key("w1", 0))
        ctx.require_task(key("w2", 0))
        return IntLit(0)

    with pytest.raises(OverlappingProviderError):
        build(Store(), key("root", 0), {"w1": w1, "w2": w2, "root": root})


def test_provider_handoff_across_sessions(tmp_path):
    # The same logical generator under a new task input may take over a
    # path when its previous provider is not live in the session.
    target = tmp_path / "out.txt"

    def writer(ctx, input):
        ctx.provide_file(str(target), print_term(input).encode())
        return input

    store = Store()
    build(store, key("writer", 1), {"writer": writer})
    build(store, key("writer", 2), {"writer": writer})
    assert store.providers[str(target)] == key("writer", 2)
    assert target.read_bytes() == b"2"


def test_cycle_error():
    def a(ctx, input):
        return ctx.require_task(key("b", 0))

    def b(ctx, input):
        return ctx.require_task(key("a", 0))

    with pytest.raises(CycleError):
        build(Store(), key("a", 0), {"a": a, "b": b})


def test_task_exception_leaves_task_unrecorded(tmp_path):
    boom = [True]

    def leaf(ctx, input):
        if boom[0]:
            raise RuntimeError("boom")
        return IntLit(1)

    store = Store()
    with pytest.raises(RuntimeError):
        build(store, key("leaf", 0), {"leaf": leaf})
    assert key("leaf", 0) not in store.records
    boom[0] = False
    out, _ = build(store, key("leaf", 0), {"leaf": leaf})
    assert out == IntLit(1)


def test_missing_implementation():
    with pytest.raises(BuildError):
        build(Store(), key("nope", 0), {})


def test_store_roundtrip(tmp_path):
    f = tmp_path / "file.txt"
    f.write_bytes(b"abc")

    def leaf(ctx, input):
        data, _ = ctx.require_file(str(f))
        ctx.provide_file(str(tmp_path / "out.txt"), data.upper())
        return StrLit(data.decode())

    path = str(tmp_path / "store")
    store = open_store(path)
    build(store, key("leaf", 0), {"leaf": leaf})
    reloaded = open_store(path)
    assert reloaded.records == store.records
    assert reloaded.providers == store.providers


def test_missing_store_is_empty(tmp_path):
    store = open_store(str(tmp_path / "absent.store"))
    assert store.records == {}


def test_corrupt_store(tmp_path):
    path = tmp_path / "store"
    path.write_text("Store(Header(")
    with pytest.raises(StoreCorrupt):
        open_store(str(path))
    path.write_text("NotAStore(1)")
    with pytest.raises(StoreCorrupt):
        open_store(str(path))


def test_incompatible_version_rebuilds(tmp_path):
    path = tmp_path / "store"
    path.write_text('Store(Header("strind-store",99,"sha256"),[],[])\n')
    warnings = []
    store = open_store(str(path), warn=warnings.append)
    assert store.records == {}
    assert warnings


def test_truncated_store_is_corrupt(tmp_path):
    f = tmp_path / "f"
    f.write_bytes(b"x")

    def leaf(ctx, input):
        ctx.require_file(str(f))
        return IntLit(1)

    path = str(tmp_path / "store")
    store = open_store(path)
    build(store, key("leaf", 0), {"leaf": leaf})
    data = open(path, "rb").read()
    with open(path, "wb") as out:
        out.write(data[: len(data) // 2])
    with pytest.raises(StoreCorrupt):
        open_store(path)


def test_store_lock(tmp_path):
    path = str(tmp_path / "store")
    lock = path + ".lock"
    open(lock, "w").close()
    store = open_store(path)
    from strata.engine import StoreLocked
    with pytest.raises(StoreLocked):
        build(store, key("x", 0), {"x": lambda ctx, i: IntLit(1)})
    os.unlink(lock)


# -- randomized DAGs against a mark-and-sweep oracle ---------------------------


class RandomDag:
    """Tasks 0..n-1; task i requires children with larger indices and
    reads a random subset of files.  Output is a small modular sum, so
    early cutoff genuinely happens."""

    def __init__(self, rng, tmp_path, n_tasks, n_files):
        self.rng = rng
        self.n = n_tasks
        self.files = [os.path.join(tmp_path, f"f{i}.txt") for i in range(n_files)]
        for path in self.files:
            with open(path, "wb") as f:
                f.write(bytes([rng.randrange(256)]))
        self.children = {0: set()}
        self.file_deps = {i: set(rng.sample(range(n_files), rng.randrange(0, min(3, n_files) + 1)))
                          for i in range(n_tasks)}
        for j in range(1, n_tasks):
            parent = rng.randrange(0, j)
            self.children.setdefault(j, set())
            self.children.setdefault(parent, set()).add(j)
        for i in range(n_tasks):
            extra = rng.sample(range(i + 1, n_tasks), k=rng.randrange(0, max(1, min(3, n_tasks - i))))
            self.children[i] |= set(extra)

    def registry(self):
        def impl(ctx, input):
            i = input.value
            total = 0
            for fi in sorted(self.file_deps[i]):
                data, _ = ctx.require_file(self.files[fi])
                total += sum(data) if data else 0
            for j in sorted(self.children[i]):
                total += ctx.require_task(key("node", j)).value
            return IntLit(total % 7)
        return {"node": impl}

    def oracle_values(self):
        values = {}
        contents = []
        for path in self.files:
            with open(path, "rb") as f:
                contents.append(f.read())
        def val(i):
            if i in values:
                return values[i]
            total = sum(sum(contents[fi]) for fi in self.file_deps[i])
            total += sum(val(j) for j in self.children[i])
            values[i] = total % 7
            return values[i]
        for i in range(self.n):
            val(i)
        return values, contents

    def predict_executed(self, old_values, old_contents, new_values, new_contents):
        out = set()
        for i in range(self.n):
            file_changed = any(old_contents[fi] != new_contents[fi] for fi in self.file_deps[i])
            child_changed = any(new_values[j] != old_values[j] for j in self.children[i])
            if file_changed or child_changed:
                out.add(i)
        return out

    def edit_random_file(self):
        path = self.rng.choice(self.files)
        with open(path, "wb") as f:
            f.write(bytes([self.rng.randrange(256)]))


def run_random_dag_property(seed, tmp_path, dags=100, edits=3):
    rng = random.Random(seed)
    for trial in range(dags):
        dag_dir = os.path.join(tmp_path, f"dag{trial}")
        os.makedirs(dag_dir)
        dag = RandomDag(rng, dag_dir, n_tasks=rng.randrange(2, 13), n_files=rng.randrange(1, 4))
        store = Store()
        registry = dag.registry()
        build(store, key("node", 0), registry)
        old_values, old_contents = dag.oracle_values()

        _, trace = build(store, key("node", 0), registry)
        assert executed(trace) == set(), f"no-change rebuild executed tasks (dag {trial})"

        for _ in range(edits):
            dag.edit_random_file()
            new_values, new_contents = dag.oracle_values()
            want = {key("node", i) for i in
                    dag.predict_executed(old_values, old_contents, new_values, new_contents)}
            _, trace = build(store, key("node", 0), registry)
            assert executed(trace) == want, f"dag {trial}"
            old_values, old_contents = new_values, new_contents


def test_random_dags_match_oracle(tmp_path):
    run_random_dag_property(seed=1234, tmp_path=str(tmp_path), dags=60, edits=3)
