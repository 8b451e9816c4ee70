"""Surface syntax for Strata modules.

A module file looks like:

    module desugar/core
    imports lib/std other/mod
    signature constructors
      Add : 2
      Nil : 0
    overlays
      Pair2(a, b) = Pair(a, b, Nil)
    strategies
      desugar = innermost(Desugar)
    rules
      swap: Add(x, y) -> Add(y, x)

Identifiers may contain dashes and primes (`eval-exp`, `x'`).  In
patterns, a capitalized identifier is a constructor and a lowercase one
is a variable; `_` is a wildcard.  `//` starts a line comment.

`parse_module` keeps the source slice of every definition so the
splitter can hand each definition's exact text to its own build task;
whitespace inside a definition therefore re-runs only that definition's
task.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .terms import ParseError

PLAIN = "plain"
EXTEND = "extend"
OVERRIDE = "override"

MODULE_ID_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-']*(/[A-Za-z_][A-Za-z0-9_\-']*)*\Z")

KEYWORDS = {
    "module", "imports", "signature", "constructors", "overlays",
    "strategies", "rules", "where", "all", "id", "fail", "prim",
    "extend", "override", "proceed",
}

SECTION_KEYWORDS = {"signature", "overlays", "strategies", "rules"}


@dataclass(frozen=True)
class StrategyKey:
    name: str
    sarity: int
    tarity: int

    def text(self) -> str:
        return f"{self.name}/{self.sarity}-{self.tarity}"


@dataclass(frozen=True)
class ConstructorKey:
    name: str
    arity: int

    def text(self) -> str:
        return f"{self.name}/{self.arity}"


# -- patterns ---------------------------------------------------------------
# PApply only ever appears in build positions of the sugared surface form;
# desugaring lifts it away, so core patterns never contain it.

@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PWild:
    pass


@dataclass(frozen=True)
class PAppl:
    constructor: str
    args: tuple

    def key(self) -> ConstructorKey:
        return ConstructorKey(self.constructor, len(self.args))


@dataclass(frozen=True)
class PInt:
    value: int


@dataclass(frozen=True)
class PStr:
    value: str


@dataclass(frozen=True)
class PList:
    items: tuple
    tail: object = None


@dataclass(frozen=True)
class PTuple:
    items: tuple


@dataclass(frozen=True)
class PAs:
    name: str
    pat: object


@dataclass(frozen=True)
class PGeneric:
    fun: object
    args: object


@dataclass(frozen=True)
class PApply:
    strategy: object
    pat: object


# -- sugared strategy expressions -------------------------------------------

@dataclass(frozen=True)
class SId:
    pass


@dataclass(frozen=True)
class SFail:
    pass


@dataclass(frozen=True)
class SMatch:
    pat: object


@dataclass(frozen=True)
class SBuild:
    pat: object


@dataclass(frozen=True)
class SSeq:
    left: object
    right: object


@dataclass(frozen=True)
class SChoice:
    left: object
    right: object


@dataclass(frozen=True)
class SScope:
    names: tuple
    body: object


@dataclass(frozen=True)
class SCall:
    name: str
    sargs: tuple
    targs: tuple


@dataclass(frozen=True)
class SBareName:
    name: str


@dataclass(frozen=True)
class SApply:
    strategy: object
    pat: object


@dataclass(frozen=True)
class SArrow:
    strategy: object
    pat: object


@dataclass(frozen=True)
class SWhere:
    body: object


@dataclass(frozen=True)
class SLambdaRule:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class SAll:
    body: object


@dataclass(frozen=True)
class SPrim:
    name: str
    targs: tuple


@dataclass(frozen=True)
class SProceed:
    sargs: tuple
    targs: tuple
    explicit: bool


@dataclass(frozen=True)
class SDefineDR:
    name: str
    lhs: object
    rhs: object


@dataclass(frozen=True)
class SUndefineDR:
    name: str
    key: object


@dataclass(frozen=True)
class SScopeDR:
    name: str
    body: object


# -- definitions -------------------------------------------------------------

@dataclass(frozen=True)
class SigDef:
    constructors: tuple


@dataclass(frozen=True)
class OverlayDef:
    name: str
    params: tuple
    body: object

    def key(self) -> ConstructorKey:
        return ConstructorKey(self.name, len(self.params))


@dataclass(frozen=True)
class StrategyDef:
    name: str
    sparams: tuple
    tparams: tuple
    body: object
    modifier: str = PLAIN

    def key(self) -> StrategyKey:
        return StrategyKey(self.name, len(self.sparams), len(self.tparams))


@dataclass(frozen=True)
class RuleDef:
    name: str
    sparams: tuple
    tparams: tuple
    lhs: object
    rhs: object
    where: object
    modifier: str = PLAIN

    def key(self) -> StrategyKey:
        return StrategyKey(self.name, len(self.sparams), len(self.tparams))


@dataclass(frozen=True)
class ModuleAST:
    id: str
    imports: tuple
    defs: tuple
    def_texts: tuple = ()


@dataclass(frozen=True)
class DefUnit:
    """One definition carved out of a module, with its exact source slice.

    `index` counts per (kind, name) so that editing one definition never
    renumbers units of other names.
    """

    module: str
    kind: str  # "strategy" | "overlay" | "signature"
    name: str  # key text for strategies, Name/arity for overlays
    index: int
    definition: object
    text: str


class ModuleParseError(Exception):
    def __init__(self, module: str, errors: list[ParseError]):
        super().__init__(f"{module}: " + "; ".join(str(e) for e in errors))
        self.module = module
        self.errors = errors


# -- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>//[^\n]*)
      | (?P<int>-?[0-9]+)
      | (?P<ident>[A-Za-z_](?:[A-Za-z0-9_']|-(?!>))*)
      | (?P<string>"(?:\\.|[^"\\\n])*")
      | (?P<punct><\+|->|=>|:-|\{\||\|\}|[()\[\]{},;|?!=:<>@\#\\/])
    """,
    re.X,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            line = text.count("\n", 0, pos) + 1
            col = pos - (text.rfind("\n", 0, pos) + 1) + 1
            raise ParseError(line, col, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(0), m.start(), m.end()))
        pos = m.end()
    tokens.append(Token("eof", "", len(text), len(text)))
    return tokens


class _ModuleParser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    # helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "ident")

    def at_kind(self, kind: str) -> bool:
        return self.tok.kind == kind

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, message, tok=None):
        tok = tok or self.tok
        line = self.text.count("\n", 0, tok.start) + 1
        col = tok.start - (self.text.rfind("\n", 0, tok.start) + 1) + 1
        found = repr(tok.text) if tok.kind != "eof" else "end of file"
        raise ParseError(line, col, f"{message}, found {found}")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def ident(self, what="identifier") -> str:
        if self.tok.kind != "ident":
            self.error(f"expected {what}")
        return self.advance().text

    def non_keyword_ident(self, what="name") -> str:
        if self.tok.kind != "ident" or self.tok.text in KEYWORDS:
            self.error(f"expected {what}")
        return self.advance().text

    # module structure

    def module_id(self) -> str:
        parts = [self.ident("module name")]
        while self.at("/"):
            self.advance()
            parts.append(self.ident("module name segment"))
        return "/".join(parts)

    def module(self) -> tuple[str, tuple, list]:
        if not self.at("module"):
            self.error("expected 'module' header")
        self.advance()
        mod_id = self.module_id()
        imports = []
        if self.at("imports"):
            self.advance()
            if self.tok.kind != "ident" or self.tok.text in SECTION_KEYWORDS:
                self.error("expected at least one imported module name")
            while self.tok.kind == "ident" and self.tok.text not in SECTION_KEYWORDS:
                imports.append(self.module_id())
        defs = []
        while not self.at_kind("eof"):
            if self.at("signature"):
                self.advance()
                self.expect("constructors")
                defs.extend(self.signature_defs())
            elif self.at("overlays"):
                self.advance()
                while self.tok.kind == "ident" and self.tok.text not in SECTION_KEYWORDS:
                    defs.append(self.overlay_def())
            elif self.at("strategies") or self.at("rules"):
                self.advance()
                while not self.at_kind("eof") and not (
                    self.tok.kind == "ident" and self.tok.text in SECTION_KEYWORDS
                ):
                    defs.append(self.strategy_or_rule_def())
            else:
                self.error("expected a section keyword")
        return mod_id, tuple(imports), defs

    def signature_defs(self) -> list:
        # One SigDef per `signature constructors` block.
        start = self.tok
        cons = []
        while self.tok.kind == "ident" and self.tok.text not in SECTION_KEYWORDS:
            name = self.ident("constructor name")
            self.expect(":")
            if self.tok.kind != "int":
                self.error("expected constructor arity")
            arity = int(self.advance().text)
            if arity < 0:
                self.error("constructor arity must be a natural number")
            cons.append(ConstructorKey(name, arity))
        end = self.tokens[self.i - 1].end if cons else start.start
        return [(SigDef(tuple(cons)), start.start, end)]

    def overlay_def(self):
        start = self.tok
        name = self.non_keyword_ident("overlay name")
        params = []
        if self.at("("):
            self.advance()
            if not self.at(")"):
                params.append(self.non_keyword_ident("overlay parameter"))
                while self.at(","):
                    self.advance()
                    params.append(self.non_keyword_ident("overlay parameter"))
            self.expect(")")
        self.expect("=")
        body = self.pattern(allow_apply=False)
        end = self.tokens[self.i - 1].end
        return (OverlayDef(name, tuple(params), body), start.start, end)

    def strategy_or_rule_def(self):
        start = self.tok
        modifier = PLAIN
        if self.at("extend") or self.at("override"):
            modifier = self.advance().text
        name = self.non_keyword_ident("definition name")
        sparams, tparams = (), ()
        if self.at("("):
            sparams, tparams = self.param_list()
        if self.at("="):
            self.advance()
            body = self.strategy_expr()
            end = self.tokens[self.i - 1].end
            return (StrategyDef(name, sparams, tparams, body, modifier), start.start, end)
        if self.at(":"):
            self.advance()
            lhs = self.pattern(allow_apply=False)
            self.expect("->")
            rhs = self.pattern(allow_apply=True)
            where = None
            if self.at("where"):
                self.advance()
                where = self.strategy_expr()
            end = self.tokens[self.i - 1].end
            return (RuleDef(name, sparams, tparams, lhs, rhs, where, modifier), start.start, end)
        self.error("expected '=' or ':' after definition head")

    def param_list(self) -> tuple[tuple, tuple]:
        self.expect("(")
        sparams, tparams = [], []
        if not self.at(")") and not self.at("|"):
            sparams.append(self.non_keyword_ident("parameter"))
            while self.at(","):
                self.advance()
                sparams.append(self.non_keyword_ident("parameter"))
        if self.at("|"):
            self.advance()
            if not self.at(")"):
                tparams.append(self.non_keyword_ident("parameter"))
                while self.at(","):
                    self.advance()
                    tparams.append(self.non_keyword_ident("parameter"))
        self.expect(")")
        return tuple(sparams), tuple(tparams)

    # strategy expressions; loosest to tightest: <+  ;  =>  atom

    def strategy_expr(self):
        left = self.seq_expr()
        if self.at("<+"):
            self.advance()
            return SChoice(left, self.strategy_expr())
        return left

    def seq_expr(self):
        left = self.arrow_expr()
        while self.at(";"):
            self.advance()
            left = SSeq(left, self.arrow_expr())
        return left

    def arrow_expr(self):
        atom = self.atom_expr()
        if self.at("=>"):
            self.advance()
            return SArrow(atom, self.pattern(allow_apply=False))
        return atom

    def atom_expr(self):
        t = self.tok
        if self.at("id"):
            self.advance()
            return SId()
        if self.at("fail"):
            self.advance()
            return SFail()
        if self.at("?"):
            self.advance()
            return SMatch(self.pattern(allow_apply=False))
        if self.at("!"):
            self.advance()
            return SBuild(self.pattern(allow_apply=True))
        if self.at("<"):
            self.advance()
            s = self.strategy_expr()
            self.expect(">")
            return SApply(s, self.pattern(allow_apply=True))
        if self.at("("):
            self.advance()
            s = self.strategy_expr()
            self.expect(")")
            return s
        if self.at("{|"):
            self.advance()
            name = self.non_keyword_ident("dynamic rule name")
            self.expect(":")
            body = self.strategy_expr()
            self.expect("|}")
            return SScopeDR(name, body)
        if self.at("{"):
            self.advance()
            names = [self.non_keyword_ident("scope variable")]
            while self.at(","):
                self.advance()
                names.append(self.non_keyword_ident("scope variable"))
            self.expect(":")
            body = self.strategy_expr()
            self.expect("}")
            return SScope(tuple(names), body)
        if self.at("\\"):
            self.advance()
            lhs = self.pattern(allow_apply=False)
            self.expect("->")
            rhs = self.pattern(allow_apply=True)
            self.expect("\\")
            return SLambdaRule(lhs, rhs)
        if self.at("rules"):
            self.advance()
            self.expect("(")
            name = self.non_keyword_ident("dynamic rule name")
            if self.at(":-"):
                self.advance()
                key = self.pattern(allow_apply=False)
                self.expect(")")
                return SUndefineDR(name, key)
            self.expect(":")
            lhs = self.pattern(allow_apply=False)
            self.expect("->")
            rhs = self.pattern(allow_apply=False)
            self.expect(")")
            return SDefineDR(name, lhs, rhs)
        if self.at("all"):
            self.advance()
            self.expect("(")
            body = self.strategy_expr()
            self.expect(")")
            return SAll(body)
        if self.at("where"):
            self.advance()
            self.expect("(")
            body = self.strategy_expr()
            self.expect(")")
            return SWhere(body)
        if self.at("prim"):
            self.advance()
            self.expect("(")
            if self.tok.kind != "string":
                self.error("expected a primitive name string")
            name = _unquote(self.advance().text)
            targs = []
            while self.at(","):
                self.advance()
                targs.append(self.pattern(allow_apply=False))
            self.expect(")")
            return SPrim(name, tuple(targs))
        if self.at("proceed"):
            self.advance()
            if self.at("("):
                sargs, targs = self.call_args()
                return SProceed(sargs, targs, True)
            return SProceed((), (), False)
        if t.kind == "ident" and t.text not in KEYWORDS:
            name = self.advance().text
            if self.at("("):
                sargs, targs = self.call_args()
                return SCall(name, sargs, targs)
            return SBareName(name)
        self.error("expected a strategy expression")

    def call_args(self) -> tuple[tuple, tuple]:
        self.expect("(")
        sargs, targs = [], []
        if not self.at(")") and not self.at("|"):
            sargs.append(self.strategy_expr())
            while self.at(","):
                self.advance()
                sargs.append(self.strategy_expr())
        if self.at("|"):
            self.advance()
            if not self.at(")"):
                targs.append(self.pattern(allow_apply=False))
                while self.at(","):
                    self.advance()
                    targs.append(self.pattern(allow_apply=False))
        self.expect(")")
        return tuple(sargs), tuple(targs)

    # patterns

    def pattern(self, allow_apply: bool):
        t = self.tok
        if self.at("<"):
            if not allow_apply:
                self.error("term applications are only allowed in build positions")
            self.advance()
            s = self.strategy_expr()
            self.expect(">")
            return PApply(s, self.pattern(allow_apply))
        if self.at("_"):
            self.advance()
            return PWild()
        if t.kind == "int":
            self.advance()
            return PInt(int(t.text))
        if t.kind == "string":
            self.advance()
            value = _unquote(t.text)
            if self.at("#"):
                self.advance()
                return self.generic_tail(PStr(value), allow_apply)
            return PStr(value)
        if self.at("["):
            self.advance()
            items = []
            tail = None
            if not self.at("]"):
                items.append(self.pattern(allow_apply))
                while self.at(","):
                    self.advance()
                    items.append(self.pattern(allow_apply))
                if self.at("|"):
                    self.advance()
                    tail = self.pattern(allow_apply)
            self.expect("]")
            return PList(tuple(items), tail)
        if self.at("("):
            self.advance()
            items = [self.pattern(allow_apply)]
            while self.at(","):
                self.advance()
                items.append(self.pattern(allow_apply))
            self.expect(")")
            return PTuple(tuple(items))
        if t.kind == "ident" and t.text not in KEYWORDS:
            name = self.advance().text
            if self.at("#"):
                self.advance()
                return self.generic_tail(PVar(name), allow_apply)
            if self.at("@"):
                self.advance()
                return PAs(name, self.pattern(allow_apply))
            if name[0].isupper():
                args = ()
                if self.at("("):
                    self.advance()
                    items = []
                    if not self.at(")"):
                        items.append(self.pattern(allow_apply))
                        while self.at(","):
                            self.advance()
                            items.append(self.pattern(allow_apply))
                    self.expect(")")
                    args = tuple(items)
                return PAppl(name, args)
            return PVar(name)
        self.error("expected a pattern")

    def generic_tail(self, fun, allow_apply):
        self.expect("(")
        args = self.pattern(allow_apply)
        self.expect(")")
        return PGeneric(fun, args)


def _unquote(text: str) -> str:
    out = []
    i = 1
    while i < len(text) - 1:
        c = text[i]
        if c == "\\":
            nxt = text[i + 1]
            out.append({"n": "\n", "t": "\t"}.get(nxt, nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def parse_module(text: str, expected_id: str) -> ModuleAST:
    """Parse a whole module file; any parse failure rejects the file.

    There is deliberately no error recovery: a file that does not parse
    in full is not compiled at all.
    """
    try:
        parser = _ModuleParser(text)
        mod_id, imports, defs = parser.module()
    except ParseError as e:
        raise ModuleParseError(expected_id, [e]) from None
    if mod_id != expected_id:
        raise ModuleParseError(
            expected_id,
            [ParseError(1, 1, f"header mismatch: file declares module {mod_id!r}, expected {expected_id!r}")],
        )
    definitions = tuple(d for d, _, _ in defs)
    texts = tuple(text[start:end] for _, start, end in defs)
    return ModuleAST(mod_id, imports, definitions, texts)


def split_module(m: ModuleAST) -> tuple[tuple, list[DefUnit]]:
    """Split a parsed module into per-definition units, imports separate."""
    counters: dict[tuple, int] = {}
    units = []
    for d, text in zip(m.defs, m.def_texts):
        if isinstance(d, SigDef):
            kind, name = "signature", "signature"
        elif isinstance(d, OverlayDef):
            kind, name = "overlay", d.key().text()
        else:
            kind, name = "strategy", d.key().text()
        idx = counters.get((kind, name), 0)
        counters[(kind, name)] = idx + 1
        units.append(DefUnit(m.id, kind, name, idx, d, text))
    return m.imports, units


def parse_definition(text: str, kind: str, module: str):
    """Re-parse one definition slice, in its section context."""
    try:
        parser = _ModuleParser(text)
        if kind == "signature":
            (result, _, _), = parser.signature_defs()
        elif kind == "overlay":
            result, _, _ = parser.overlay_def()
        else:
            result, _, _ = parser.strategy_or_rule_def()
        if not parser.at_kind("eof"):
            parser.error("trailing input after definition")
        return result
    except ParseError as e:
        raise ModuleParseError(module, [e]) from None
