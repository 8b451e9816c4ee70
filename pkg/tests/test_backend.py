import pytest

from strata import core as C
from strata import syntax as S
from strata.backend import (BackendError, expand_overlays, gen_congruence,
                            gen_dynrule_support, library_manifest_term, manifest_term,
                            merge_definitions, resolve_refs, unit_bytes, unit_file_name)
from strata.syntax import ConstructorKey, OverlayDef, StrategyKey
from strata.terms import print_term


def sk(name, s=0, t=0):
    return StrategyKey(name, s, t)


def test_merge_single_definition():
    body = C.Seq(C.Id(), C.Fail())
    assert merge_definitions(sk("f"), [("m", 0, body)]) == body


def test_merge_two_definitions_left_choice():
    a, b = C.Id(), C.Fail()
    merged = merge_definitions(sk("f"), [("m", 0, a), ("m", 1, b)])
    assert merged == C.LChoice(a, b)


def test_merge_three_definitions_right_fold():
    a, b, c = C.Id(), C.Fail(), C.Match(S.PInt(1))
    merged = merge_definitions(sk("f"), [("a", 0, a), ("b", 0, b), ("c", 0, c)])
    assert merged == C.LChoice(a, C.LChoice(b, c))


def test_merge_order_is_module_then_index():
    a, b, c = C.Id(), C.Fail(), C.Match(S.PInt(1))
    defs = [("b", 0, b), ("a", 1, c), ("a", 0, a)]
    merged = merge_definitions(sk("f"), defs)
    assert merged == C.LChoice(a, C.LChoice(c, b))


def test_merge_is_permutation_invariant():
    import itertools
    defs = [("a", 0, C.Id()), ("b", 0, C.Fail()), ("a", 1, C.Match(S.PInt(1)))]
    outputs = {print_term(C.core_to_term(merge_definitions(sk("f"), list(p))))
               for p in itertools.permutations(defs)}
    assert len(outputs) == 1


def test_resolve_refs_replaces_bare_names():
    body = C.Call(sk("innermost", 1, 0), (C.AmbRef("Desugar"),), ())
    resolved = resolve_refs(body, {(sk("d"), "Desugar"): sk("Desugar")}, sk("d"))
    assert resolved == C.Call(sk("innermost", 1, 0), (C.Call(sk("Desugar")),), ())


def test_resolve_refs_no_amb_unchanged():
    body = C.Seq(C.Id(), C.Call(sk("g")))
    assert resolve_refs(body, {}, sk("f")) == body


def test_resolve_refs_missing_resolution():
    with pytest.raises(BackendError):
        resolve_refs(C.AmbRef("ghost"), {}, sk("f"))


def _overlays(*defs):
    return {OverlayDef(n, tuple(p), b).key(): OverlayDef(n, tuple(p), b)
            for n, p, b in defs}


def test_expand_overlay_in_match_and_build():
    overlays = _overlays(
        ("Pair2", ("a", "b"), S.PAppl("Pair", (S.PVar("a"), S.PVar("b"), S.PAppl("Nil", ())))))
    pat = S.PAppl("Pair2", (S.PVar("x"), S.PInt(1)))
    body = C.Seq(C.Match(pat), C.Build(pat))
    expanded = expand_overlays(body, overlays)
    want = S.PAppl("Pair", (S.PVar("x"), S.PInt(1), S.PAppl("Nil", ())))
    assert expanded == C.Seq(C.Match(want), C.Build(want))


def test_expand_overlay_nested_fixpoint():
    overlays = _overlays(
        ("O1", ("a",), S.PAppl("O2", (S.PVar("a"),))),
        ("O2", ("b",), S.PAppl("Deep", (S.PVar("b"),))),
    )
    body = C.Build(S.PAppl("O1", (S.PInt(7),)))
    expanded = expand_overlays(body, overlays)
    assert expanded == C.Build(S.PAppl("Deep", (S.PInt(7),)))


def test_expand_respects_arity():
    overlays = _overlays(("A", ("x",), S.PAppl("B", (S.PVar("x"),))))
    body = C.Build(S.PAppl("A", ()))  # A/0 is not the overlay A/1
    assert expand_overlays(body, overlays) == body


def test_expand_no_overlays_is_identity():
    body = C.Seq(C.Match(S.PVar("x")), C.Build(S.PVar("x")))
    assert expand_overlays(body, {}) == body


def test_expand_overlay_as_strategy_rejected():
    overlays = _overlays(("A", ("x",), S.PVar("x")))
    body = C.Call(sk("A", 1, 0), (C.Id(),), ())
    with pytest.raises(BackendError):
        expand_overlays(body, overlays)


def test_expanded_output_contains_no_overlay_keys():
    overlays = _overlays(
        ("O1", (), S.PAppl("W", (S.PAppl("O2", ()),))),
        ("O2", (), S.PAppl("Leaf", ())),
    )
    body = C.Match(S.PList((S.PAppl("O1", ()),), S.PAppl("O2", ())))
    expanded = expand_overlays(body, overlays)

    from strata.core import pattern_constructors
    cons = pattern_constructors(expanded.pat)
    assert not (cons & set(overlays))


def test_gen_congruence_nullary():
    key, body = gen_congruence(ConstructorKey("Nil", 0))
    assert key == sk("Nil", 0, 0)
    assert body == C.Seq(C.Match(S.PAppl("Nil", ())), C.Build(S.PAppl("Nil", ())))


def test_gen_congruence_binary_shape():
    key, body = gen_congruence(ConstructorKey("Add", 2))
    assert key == sk("Add", 2, 0)
    assert isinstance(body, C.Scope)
    assert body.names == ("$x0", "$x1", "$y0", "$y1")


def test_gen_dynrule_support():
    key, body = gen_dynrule_support("EvalVar")
    assert key == sk("EvalVar", 0, 0)
    assert body == C.CallPrim("dr-apply", (S.PStr("EvalVar"),))
    assert unit_file_name(key) == "EvalVar.0.0.unit"


def test_unit_bytes_deterministic_one_line():
    data = unit_bytes(sk("f"), C.Id())
    assert data == b'Unit(Key("f",0,0),Id)\n'
    assert data == unit_bytes(sk("f"), C.Id())


def test_unit_file_name_is_bijective():
    keys = [sk("f"), sk("f", 1, 0), sk("f", 0, 1), sk("g"), sk("eval-exp", 2, 3)]
    names = {unit_file_name(k) for k in keys}
    assert len(names) == len(keys)


def test_manifest_sorted_and_deterministic():
    units = [sk("zeta"), sk("alpha"), sk("beta", 1, 0)]
    cons = [ConstructorKey("B", 1), ConstructorKey("A", 0)]
    t1 = manifest_term(units, cons, ["R2", "R1"], [(sk("ext"), "/lib/dir")])
    t2 = manifest_term(list(reversed(units)), list(reversed(cons)), ["R1", "R2"],
                       [(sk("ext"), "/lib/dir")])
    assert print_term(t1) == print_term(t2)
    printed = print_term(t1)
    assert printed.index('"alpha') < printed.index('"beta') < printed.index('"zeta')


def test_library_manifest_shape():
    t = library_manifest_term([sk("conc")], [ConstructorKey("Nil", 0)])
    assert print_term(t) == 'Library([Ext("conc",0,0)],[Con("Nil",0)])'
