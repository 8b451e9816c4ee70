import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strata.terms import (Appl, FreshNames, IntLit, ListTerm, ParseError, StrLit,
                          TupleTerm, appl, fresh_name, lst, parse_term, print_term, tup)


def test_parse_application():
    assert parse_term('Add(1,Var("x"))') == appl("Add", IntLit(1), appl("Var", StrLit("x")))


def test_parse_empty_list():
    assert parse_term("[]") == ListTerm(())


def test_parse_unclosed_application_position():
    with pytest.raises(ParseError) as e:
        parse_term("F(")
    assert e.value.line == 1
    assert e.value.col == 3


def test_print_application():
    assert print_term(appl("Add", IntLit(1), IntLit(2))) == "Add(1,2)"


def test_print_string_escapes():
    assert print_term(StrLit('a"b')) == '"a\\"b"'
    assert print_term(StrLit("a\nb\tc\\d")) == '"a\\nb\\tc\\\\d"'


def test_print_tuple():
    assert print_term(tup(IntLit(1), StrLit("x"))) == '(1,"x")'


def test_bare_ident_is_nullary_application():
    assert parse_term("Nil") == appl("Nil")
    assert parse_term("Nil()") == appl("Nil")
    assert print_term(appl("Nil")) == "Nil"


def test_one_tuple():
    assert parse_term("(1)") == tup(IntLit(1))
    assert print_term(tup(IntLit(1))) == "(1)"


def test_empty_tuple_rejected():
    with pytest.raises(ParseError):
        parse_term("()")
    with pytest.raises(ValueError):
        TupleTerm(())


def test_trailing_whitespace_allowed():
    assert parse_term("  F( 1 , 2 )  \n") == appl("F", IntLit(1), IntLit(2))


def test_trailing_garbage_rejected():
    with pytest.raises(ParseError):
        parse_term("F(1) G")


def test_int64_bounds():
    assert parse_term("-9223372036854775808") == IntLit(-(2**63))
    assert parse_term("9223372036854775807") == IntLit(2**63 - 1)
    with pytest.raises(ParseError):
        parse_term("9223372036854775808")
    with pytest.raises(ValueError):
        IntLit(2**63)


def test_unknown_escape_rejected():
    with pytest.raises(ParseError):
        parse_term('"\\q"')


def test_bad_constructor_name_rejected():
    with pytest.raises(ValueError):
        Appl("9bad", ())


# random term generator for the round-trip property

_idents = st.from_regex(r"[A-Za-z_][A-Za-z0-9_\-']{0,8}", fullmatch=True)
_strings = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=12)


def _terms():
    base = st.one_of(
        st.integers(min_value=-(2**63), max_value=2**63 - 1).map(IntLit),
        _strings.map(StrLit),
        _idents.map(lambda n: Appl(n, ())),
    )
    return st.recursive(
        base,
        lambda kids: st.one_of(
            st.tuples(_idents, st.lists(kids, max_size=4)).map(
                lambda na: Appl(na[0], tuple(na[1]))),
            st.lists(kids, max_size=4).map(lambda xs: ListTerm(tuple(xs))),
            st.lists(kids, min_size=1, max_size=4).map(lambda xs: TupleTerm(tuple(xs))),
        ),
        max_leaves=25,
    )


@settings(max_examples=300)
@given(_terms())
def test_roundtrip(t):
    assert parse_term(print_term(t)) == t


@settings(max_examples=200)
@given(_terms())
def test_printing_has_no_whitespace_outside_strings(t):
    # string contents are arbitrary bytes; everything between tokens is
    # whitespace-free, and newline/tab are escaped even inside strings
    import re
    printed = print_term(t)
    assert "\n" not in printed and "\t" not in printed
    stripped = re.sub(r'"(\\.|[^"\\])*"', '""', printed)
    assert not any(c.isspace() for c in stripped)


@settings(max_examples=100)
@given(_terms(), _terms())
def test_canonical_equality(a, b):
    assert (a == b) == (print_term(a) == print_term(b))


def test_fresh_names():
    c = FreshNames()
    assert fresh_name(c, "a") == "a0"
    assert fresh_name(c, "a") == "a1"
    assert fresh_name(c, "b") == "b2"


def test_fresh_names_distinct():
    c = FreshNames()
    seen = {fresh_name(c, "x") for _ in range(100)}
    assert len(seen) == 100
