"""Persistent incremental build engine with dynamic dependencies.

Tasks are plain functions registered per kind.  While executing, a task
can require other tasks, require files, and provide (write) files; every
such call records a dependency in the task's record.  A later build
re-executes a task only when a recorded dependency no longer validates:
a required task's output stamp changed, or a required/provided file's
content stamp changed.  Stamps are content digests, never timestamps,
so rewriting a file with identical bytes invalidates nothing.

The store persists as one canonical term:

    Store(Header("strind-store",1,"sha256"),
          [Record(key,output,[dep...]),...],
          [Provider(path,key),...])

A lock file `<store>.lock` guards the store for the duration of a build.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

from .terms import (Appl, IntLit, ListTerm, ParseError, StrLit, Term, appl,
                    parse_term, print_term, term_digest)

STORE_FORMAT = "strind-store"
STORE_VERSION = 1
STAMP_ALG = "sha256"
ABSENT = "absent"

EXECUTED = "executed"
CACHED = "cached"


@dataclass(frozen=True)
class TaskKey:
    kind: str
    input: Term


@dataclass(frozen=True)
class TaskDep:
    callee: TaskKey
    stamp: str


@dataclass(frozen=True)
class FileRequire:
    path: str
    stamp: str


@dataclass(frozen=True)
class FileProvide:
    path: str
    stamp: str


@dataclass
class TaskRecord:
    key: TaskKey
    output: Term
    deps: list


class BuildError(Exception):
    pass


class CycleError(BuildError):
    def __init__(self, cycle):
        super().__init__("task dependency cycle: " + " -> ".join(k.kind for k in cycle))
        self.cycle = cycle


class HiddenDependencyError(BuildError):
    pass


class OverlappingProviderError(BuildError):
    pass


class StoreCorrupt(BuildError):
    pass


class StoreLocked(BuildError):
    pass


def file_stamp(path: str) -> str:
    try:
        with open(path, "rb") as f:
            return hashlib.sha256(f.read()).hexdigest()
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError):
        return ABSENT


@dataclass
class Store:
    path: str | None = None
    records: dict = field(default_factory=dict)   # TaskKey -> TaskRecord
    providers: dict = field(default_factory=dict)  # path -> TaskKey
    dirty: bool = False

    def persist(self):
        if self.path is None or not self.dirty:
            return
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(print_term(store_to_term(self)))
            f.write("\n")
        os.replace(tmp, self.path)
        self.dirty = False


def store_to_term(store: Store) -> Term:
    records = sorted(store.records.values(), key=lambda r: print_term(_key_term(r.key)))
    rec_terms = tuple(
        appl("Record", _key_term(r.key), r.output, ListTerm(tuple(_dep_term(d) for d in r.deps)))
        for r in records
    )
    prov_terms = tuple(
        appl("Provider", StrLit(path), _key_term(key))
        for path, key in sorted(store.providers.items())
    )
    header = appl("Header", StrLit(STORE_FORMAT), IntLit(STORE_VERSION), StrLit(STAMP_ALG))
    return appl("Store", header, ListTerm(rec_terms), ListTerm(prov_terms))


def _key_term(k: TaskKey) -> Term:
    return appl("TaskKey", StrLit(k.kind), k.input)


def _key_from_term(t: Term) -> TaskKey:
    return TaskKey(t.children[0].value, t.children[1])


def _dep_term(d) -> Term:
    if isinstance(d, TaskDep):
        return appl("TaskDep", _key_term(d.callee), StrLit(d.stamp))
    if isinstance(d, FileRequire):
        return appl("FileReq", StrLit(d.path), StrLit(d.stamp))
    return appl("FileProv", StrLit(d.path), StrLit(d.stamp))


def _dep_from_term(t: Term):
    c = t.constructor
    if c == "TaskDep":
        return TaskDep(_key_from_term(t.children[0]), t.children[1].value)
    if c == "FileReq":
        return FileRequire(t.children[0].value, t.children[1].value)
    if c == "FileProv":
        return FileProvide(t.children[0].value, t.children[1].value)
    raise ValueError(f"not a dependency term: {c}")


def open_store(path: str, warn=None) -> Store:
    """Load a store file; a missing file yields an empty store.

    An incompatible format version falls back to an empty store (full
    rebuild) with a warning; anything unreadable raises StoreCorrupt.
    """
    if not os.path.exists(path):
        return Store(path=path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        t = parse_term(text)
        header, records, providers = t.children
        fmt, version, alg = header.children
        if fmt.value != STORE_FORMAT:
            raise ValueError(f"not a {STORE_FORMAT} file")
        if version.value != STORE_VERSION or alg.value != STAMP_ALG:
            if warn:
                warn(f"store format {version.value}/{alg.value} is incompatible; rebuilding from scratch")
            return Store(path=path)
        store = Store(path=path)
        for rt in records.items:
            key = _key_from_term(rt.children[0])
            store.records[key] = TaskRecord(key, rt.children[1],
                                            [_dep_from_term(d) for d in rt.children[2].items])
        for pt in providers.items:
            store.providers[pt.children[0].value] = _key_from_term(pt.children[1])
        return store
    except (OSError, ParseError, ValueError, AssertionError, AttributeError,
            IndexError, TypeError) as e:
        raise StoreCorrupt(f"cannot read store {path}: {e}") from None


class BuildContext:
    """Handed to an executing task; records its dependencies in order."""

    def __init__(self, session: "_Session", key: TaskKey):
        self._session = session
        self._key = key
        self.deps = []
        self.reached = set()  # tasks transitively required so far

    def require_task(self, callee: TaskKey) -> Term:
        output = self._session.require(callee)
        self.deps.append(TaskDep(callee, self._session.output_stamp(callee, output)))
        self.reached.add(callee)
        self.reached |= self._session.closure(callee)
        return output

    def require_file(self, path: str):
        path = os.fspath(path)
        provider = self._session.store.providers.get(path)
        if provider is not None and provider != self._key and provider not in self.reached:
            raise HiddenDependencyError(
                f"{self._key.kind} reads {path} without requiring its provider {provider.kind}")
        stamp = file_stamp(path)
        self.deps.append(FileRequire(path, stamp))
        self._session.file_readers.setdefault(path, []).append((self._key, self.reached))
        if stamp == ABSENT:
            return None, stamp
        with open(path, "rb") as f:
            return f.read(), stamp

    def provide_file(self, path: str, data: bytes) -> str:
        path = os.fspath(path)
        session = self._session
        existing = session.store.providers.get(path)
        if existing is not None and existing != self._key and existing in session.visited:
            raise OverlappingProviderError(
                f"{path} provided by both {existing.kind} and {self._key.kind}")
        for reader, reached in session.file_readers.get(path, []):
            if reader != self._key and self._key not in reached:
                raise HiddenDependencyError(
                    f"{reader.kind} read {path} before {self._key.kind} provided it")
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "wb") as f:
            f.write(data)
        stamp = hashlib.sha256(data).hexdigest()
        self.deps.append(FileProvide(path, stamp))
        session.store.providers[path] = self._key
        session.store.dirty = True
        return stamp


class _Session:
    def __init__(self, store: Store, registry: dict):
        self.store = store
        self.registry = registry
        self.trace = []
        self.done = {}
        self.stack = []
        self.visited = set()
        self.file_readers = {}
        self._stamp_cache = {}
        self._closure_cache = {}

    def output_stamp(self, key: TaskKey, output: Term) -> str:
        stamp = self._stamp_cache.get(key)
        if stamp is None:
            stamp = term_digest(output)
            self._stamp_cache[key] = stamp
        return stamp

    def closure(self, key: TaskKey) -> set:
        """All task keys reachable from `key` through recorded task deps."""
        cached = self._closure_cache.get(key)
        if cached is not None:
            return cached
        out = set()
        work = [key]
        while work:
            k = work.pop()
            rec = self.store.records.get(k)
            if rec is None:
                continue
            for d in rec.deps:
                if isinstance(d, TaskDep) and d.callee not in out:
                    out.add(d.callee)
                    work.append(d.callee)
        self._closure_cache[key] = out
        return out

    def require(self, key: TaskKey) -> Term:
        if key in self.done:
            return self.done[key]
        if key in self.stack:
            raise CycleError(self.stack[self.stack.index(key):] + [key])
        self.stack.append(key)
        try:
            record = self.store.records.get(key)
            if record is not None and self._validate(record):
                output = record.output
                outcome = CACHED
            else:
                output = self._execute(key)
                outcome = EXECUTED
        finally:
            self.stack.pop()
        self.done[key] = output
        self.visited.add(key)
        self.trace.append((key, outcome))
        return output

    def _validate(self, record: TaskRecord) -> bool:
        for dep in record.deps:
            if isinstance(dep, TaskDep):
                out = self.require(dep.callee)
                if self.output_stamp(dep.callee, out) != dep.stamp:
                    return False
            elif file_stamp(dep.path) != dep.stamp:
                return False
        return True

    def _execute(self, key: TaskKey) -> Term:
        impl = self.registry.get(key.kind)
        if impl is None:
            raise BuildError(f"no task implementation registered for kind {key.kind!r}")
        ctx = BuildContext(self, key)
        output = impl(ctx, key.input)
        old = self.store.records.get(key)
        if old is not None:
            new_provides = {d.path for d in ctx.deps if isinstance(d, FileProvide)}
            for d in old.deps:
                if isinstance(d, FileProvide) and d.path not in new_provides:
                    if self.store.providers.get(d.path) == key:
                        del self.store.providers[d.path]
        self.store.records[key] = TaskRecord(key, output, ctx.deps)
        self.store.dirty = True
        self._stamp_cache.pop(key, None)
        self._closure_cache.clear()
        return output


def build(store: Store, root: TaskKey, registry: dict):
    """Bring `root` up to date; returns its output and the session trace.

    The trace lists every task visited this session, in completion
    order, with outcome "executed" or "cached".  Each task runs at most
    once per session.  New records persist even when a task fails, so
    completed work is never repeated.
    """
    lock_path = store.path + ".lock" if store.path is not None else None
    if lock_path is not None:
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.close(fd)
        except FileExistsError:
            raise StoreLocked(f"store is locked by another build: {lock_path}") from None
    try:
        session = _Session(store, registry)
        try:
            output = session.require(root)
        finally:
            store.persist()
        return output, session.trace
    finally:
        if lock_path is not None:
            try:
                os.unlink(lock_path)
            except FileNotFoundError:
                pass


def trace_counts(trace, kinds=None) -> dict:
    """Per-kind executed/cached counts from a session trace."""
    counts = {}
    for key, outcome in trace:
        if kinds is not None and key.kind not in kinds:
            continue
        entry = counts.setdefault(key.kind, {EXECUTED: 0, CACHED: 0})
        entry[outcome] += 1
    return counts
