from pathlib import Path

import pytest

from rcprob import ast as A
from rcprob.props import parse_expression, parse_spec, SpecAst
from rcprob.resolve import (BOOL, NUM, ResolveError, classify,
                            resolve_fqn, set_of, validate)

CORPUS = Path(__file__).parent / "corpus"
WF_CODES = ["WFREF-1", "WFREF-2", "WFProp-1", "WFProp-2", "WFProp-3", "WFProp-4",
            "WFExp-1", "WFExp-2", "WFExp-3", "WFExp-4", "WFExp-5", "WFExp-6",
            "WFExp-7"]


def qn(text):
    return A.QName(tuple(text.split("::")))


def test_resolve_state(srw_model, srw_spec):
    ref = resolve_fqn(srw_model, srw_spec, qn("SRWMod::ctrl_ref::stm_ref::Move"))
    assert ref.kind == "state"
    assert ref.decl.name == "Move"


def test_resolve_violates_both_conditions(srw_model, srw_spec):
    with pytest.raises(ResolveError) as exc:
        resolve_fqn(srw_model, srw_spec, qn("SRWCtrl::SRWMod"))
    codes = [d.code for d in exc.value.diagnostics]
    assert codes == ["WFREF-1", "WFREF-2"]


def test_resolve_shared_variable(srw_model, srw_spec):
    ref = resolve_fqn(srw_model, srw_spec, qn("SRWMod::SRWRP::x"))
    assert ref.kind == "variable"
    assert ref.type == NUM
    assert ref.flat == "SRWRP.x"


def test_resolve_roundtrip(srw_model, srw_spec):
    for path in ["SRWMod::SRWRP::x", "SRWMod::ctrl_ref::stm_ref::Move",
                 "SRWMod::ctrl_ref::stm_ref::t3", "SRWMod::SRWRP::left",
                 "SRWMod::ctrl_ref::stm_ref::Update"]:
        ref = resolve_fqn(srw_model, srw_spec, qn(path))
        again = resolve_fqn(srw_model, srw_spec, qn(ref.qualified()))
        assert again.kind == ref.kind and again.path == ref.path


def test_classify_boolean_predicate(srw_model, srw_spec):
    e = parse_expression("SRWMod::SRWRP::x <= SRWMod::SRWRP::MaxDist /\\ "
                         "SRWMod::SRWRP::x >= -SRWMod::SRWRP::MaxDist")
    assert classify(srw_model, srw_spec, e) == BOOL


def test_classify_set_range(srw_model, srw_spec):
    e = parse_expression("{1 to 3 by step 1}")
    assert classify(srw_model, srw_spec, e) == set_of(NUM)


def test_classify_type_error(srw_model, srw_spec):
    e = parse_expression("true + 1")
    with pytest.raises(ResolveError) as exc:
        classify(srw_model, srw_spec, e)
    assert exc.value.diagnostics[0].code == "WFExp-3"


def test_validate_srw_clean(srw_model, srw_spec):
    diags = validate(srw_model, srw_spec)
    assert [d for d in diags if d.severity == "error"] == []


def test_validate_is_in_swap(srw_model):
    ok = parse_spec("label l = SRWMod::ctrl_ref::stm_ref is in "
                    "SRWMod::ctrl_ref::stm_ref::Stuck")
    assert [d.code for d in validate(srw_model, ok)] == []
    swapped = parse_spec("label l = SRWMod::ctrl_ref::stm_ref::Stuck is in "
                         "SRWMod::ctrl_ref::stm_ref")
    assert "WFExp-5" in [d.code for d in validate(srw_model, swapped)]


def test_validate_idempotent_and_stable(srw_model):
    spec = parse_spec((CORPUS / "wfprop2.rcp").read_text())
    first = [str(d) for d in validate(srw_model, spec)]
    second = [str(d) for d in validate(srw_model, spec)]
    assert first == second and first


def test_async_connection_rejected():
    from rcprob.model import parse_model
    model = parse_model("""
    module M {
      platform P { event e; }
      controller c { requires P; event e;
        machine s { event e; initial i; state A; transition t0 { from i to A } }
        connection s.e -> c.e; }
      connection c.e -> P.e async;
    }
    """)
    diags = validate(model, SpecAst())
    assert any(d.code == "UNSUPPORTED" and "asynchronous" in d.message for d in diags)


def test_real_variable_rejected():
    from rcprob.model import parse_model
    model = parse_model("""
    module M { platform P { var r : real = 0; }
      controller c { requires P;
        machine s { initial i; state A; transition t0 { from i to A } } } }
    """)
    diags = validate(model, SpecAst())
    assert any(d.code == "TYPE" and "real" in d.message for d in diags)


def test_unreachable_state_warning():
    from rcprob.model import parse_model
    model = parse_model("""
    module M { controller c {
      machine s { initial i; state A; state Orphan;
        transition t0 { from i to A } } } }
    """)
    diags = validate(model, SpecAst())
    warnings = [d for d in diags if d.severity == "warning"]
    assert any("Orphan" in d.message for d in warnings)
    assert not any(d.severity == "error" for d in diags)


def test_val_on_untyped_event(srw_model):
    spec = parse_spec("label l = (SRWMod::SRWRP::left.out.val == 0)")
    diags = validate(srw_model, spec)
    assert any(d.code == "TYPE" and "no payload" in d.message for d in diags)


def test_array_indexing_unsupported(srw_model):
    spec = parse_spec("label l = (SRWMod::SRWRP::x[1] == 0)")
    diags = validate(srw_model, spec)
    assert any(d.code == "UNSUPPORTED" for d in diags)


def test_loose_constant_coverage(srw_model):
    spec = parse_spec("""
    constants C_partial: SRWMod::SRWRP::MaxDist set to 2
    defs D_all:
      pfunction Plus(v, maxv) = { return ``v + 1 }
      pfunction Minus(v, minv) = { return ``v - 1 }
      pfunction Update(v, maxv, origin) = { return ``v }
    prob property P:
      not Exists [Finally deadlock]
      with constants C_partial
      with definitions D_all
    """)
    diags = validate(srw_model, spec)
    messages = [d.message for d in diags if d.code == "SCOPE"]
    assert any("MaxSteps" in m for m in messages)
    assert any("Pl" in m for m in messages)


def test_missing_function_coverage(srw_model):
    spec = parse_spec("""
    constants C_all:
      SRWMod::SRWRP::MaxDist set to 2,
      SRWMod::SRWRP::MaxSteps set to 2, and
      SRWMod::SRWRP::Pl set to 0.5
    defs D_partial:
      pfunction Plus(v, maxv) = { return ``v + 1 }
    prob property P:
      not Exists [Finally deadlock]
      with constants C_all
      with definitions D_partial
    """)
    diags = validate(srw_model, spec)
    assert any("Update" in d.message for d in diags if d.code == "SCOPE")


# --- corpus -------------------------------------------------------------------


def corpus_diagnostics(srw_model):
    out = {}
    for path in sorted(CORPUS.glob("*.rcp")):
        spec = parse_spec(path.read_text())
        out[path.name] = validate(srw_model, spec)
    return out


def test_corpus_code_bijection(srw_model):
    """Every WF code fires in exactly its own corpus file, nowhere else."""
    per_file = corpus_diagnostics(srw_model)
    expected_file = {code: f"{code.replace('-', '').lower()}.rcp" for code in WF_CODES}
    for code in WF_CODES:
        hits = {name: sum(1 for d in diags if d.code == code)
                for name, diags in per_file.items()}
        firing = {name for name, k in hits.items() if k > 0}
        assert firing == {expected_file[code]}, (code, firing)
        assert hits[expected_file[code]] == 1, (code, hits)


def test_corpus_valid_files_clean(srw_model):
    per_file = corpus_diagnostics(srw_model)
    for name, diags in per_file.items():
        if name.startswith("valid"):
            assert diags == [], (name, [str(d) for d in diags])


def test_inline_with_clause_content_validated(srw_model):
    spec = parse_spec("""
    prob property P:
      not Exists [Finally deadlock]
      with constants SRWMod::SRWRP::MaxDist set to 2,
        SRWMod::SRWRP::MaxSteps set to 2,
        SRWMod::SRWRP::Pl set to 0.5
      with definitions
        pfunction Plus(v, maxv) = { return ``v + ``missing }
        pfunction Minus(v, minv) = { return ``v }
        pfunction Update(v, maxv, origin) = { return ``v }
    """)
    diags = validate(srw_model, spec)
    assert any("``missing" in d.message or "missing" in d.message
               for d in diags if d.code == "SCOPE")
