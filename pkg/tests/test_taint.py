import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apmlens.graph import build_icfg
from apmlens.model import MethodRef, UiElement
from apmlens.taint import (
    Lexicon, SinkMatcher, SourceSite, SpecFormatError, classify_ui_elements, default_lexicon, derive_sources,
    load_lexicon, load_permission_map, load_sources_sinks, parse_permission_map, parse_sources_sinks, propagate,
    replay_witness,
)
from progs import LOC, TOY_LOG, activity, cs, inv, program, ret
from taint_fixtures import NAMED, corpus, random_fixture, size
from taint_oracle import oracle_leaks


def analyse(app, budget=1_000_000):
    icfg = build_icfg(app)
    source_specs, sink_specs = load_sources_sinks()
    ui = classify_ui_elements(app.layouts)
    sources = derive_sources(icfg, load_permission_map(), ui, source_specs)
    matcher = SinkMatcher(sink_specs)
    return icfg, sources, matcher, propagate(icfg, sources, matcher, budget=budget)


# --------------------------------------------------------------------------
# Oracle equivalence


@pytest.mark.parametrize("name", sorted(NAMED))
def test_named_fixture_matches_oracle(name):
    fn, expected = NAMED[name]
    app = fn()
    assert size(app) <= 50
    icfg, sources, matcher, result = analyse(app)
    got = {lp.key for lp in result.leaks}
    assert got == oracle_leaks(icfg, sources, matcher)
    assert len(got) == expected
    assert result.complete


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**31))
def test_random_fixture_matches_oracle(seed):
    app = random_fixture(seed)
    assert size(app) <= 50
    icfg, sources, matcher, result = analyse(app)
    assert {lp.key for lp in result.leaks} == oracle_leaks(icfg, sources, matcher)


def test_corpus_has_enough_interesting_cases():
    fixtures = corpus()
    assert len(fixtures) >= 30
    assert all(size(app) <= 50 for _, app in fixtures)
    names = " ".join(n for n, _ in fixtures)
    assert "icc_" in names and "kill" in names


# --------------------------------------------------------------------------
# Worked examples


def test_same_method_leak_has_two_steps():
    _, sources, _, result = analyse(NAMED["same_method"][0]())
    (leak,) = result.leaks
    assert leak.steps == ((leak.source.method, 1), (leak.sink.method, 2))
    assert leak.permissions == ("android.permission.ACCESS_COARSE_LOCATION",
                                "android.permission.ACCESS_FINE_LOCATION")
    assert leak.sink.api == "com.toyapm.Toy.log(java.lang.String)void"


def test_icc_leak_crosses_components():
    _, _, _, result = analyse(NAMED["icc_explicit"][0]())
    (leak,) = result.leaks
    hosts = [m.host for m, _ in leak.steps]
    assert hosts[0] == "x.A" and hosts[-1] == "x.B"


def test_ui_source_category():
    _, sources, _, result = analyse(NAMED["ui_password_field"][0]())
    (src,) = sources
    assert (src.kind, src.what, src.ui_category) == ("ui", "pwd", "account")
    assert result.leaks[0].ui_category == "account"


@pytest.mark.parametrize("name", sorted(NAMED))
def test_witnesses_replay(name):
    app = NAMED[name][0]()
    _, _, _, result = analyse(app)
    for leak in result.leaks:
        assert replay_witness(app, leak)


def test_witness_with_bad_step_fails_replay():
    app = NAMED["same_method"][0]()
    _, _, _, result = analyse(app)
    (leak,) = result.leaks
    bad = type(leak)(leak.source, leak.sink, ((leak.source.method, 1), (leak.sink.method, 99), leak.steps[-1]))
    assert not replay_witness(app, bad)


def test_budget_marks_result_incomplete():
    *_, result = analyse(NAMED["icc_explicit"][0](), budget=3)
    assert not result.complete


def test_leak_order_and_json_are_stable():
    app = NAMED["two_sources_one_sink"][0]()
    a = [json.dumps(lp.to_json(), sort_keys=True) for lp in analyse(app)[3].leaks]
    b = [json.dumps(lp.to_json(), sort_keys=True) for lp in analyse(app)[3].leaks]
    assert a == b and len(a) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.data())
def test_adding_a_source_never_removes_leaks(seed, data):
    app = random_fixture(seed)
    icfg, sources, matcher, result = analyse(app)
    if not sources:
        return
    keep = data.draw(st.lists(st.sampled_from(sources), unique=True))
    fewer = propagate(icfg, keep, matcher)
    assert {lp.key for lp in fewer.leaks} <= {lp.key for lp in result.leaks}


# --------------------------------------------------------------------------
# Sources, sinks, permission map


def test_location_source_permissions():
    icfg, sources, _, _ = analyse(NAMED["same_method"][0]())
    (src,) = sources
    assert src.what == LOC and src.kind == "api"
    assert "android.permission.ACCESS_COARSE_LOCATION" in src.permissions


def test_no_sources_in_plain_app():
    app = program([activity("x.A", [cs(2, "hi"), inv(TOY_LOG, [2]), ret()])])
    _, sources, _, result = analyse(app)
    assert sources == [] and result.leaks == []


def test_parse_sources_sinks():
    sources, sinks = parse_sources_sinks(
        "# comment\nSOURCE a.B.c()java.lang.String p.ONE,p.TWO\nSINK a.L.log(java.lang.String,int)void 0\n"
        "SINK a.L.any(*)void *\n")
    assert sources[0].permissions == ("p.ONE", "p.TWO")
    assert sinks[0].positions == (0,)
    assert sinks[1].positions is None
    assert sinks[1].matches(MethodRef.parse("a.L.any(int,int)void"))


@pytest.mark.parametrize("bad", ["SINK a.L.log(java.lang.String)void 3\n", "SAUCE a.B.c()void\n",
                                 "SINK a.L.log(java.lang.String)void x\n", "SOURCE\n"])
def test_bad_sources_sinks(bad):
    with pytest.raises(SpecFormatError):
        parse_sources_sinks(bad)


def test_permission_map_merges_lines():
    pm = parse_permission_map("a.B.c()void,p.ONE\na.B.c()void,p.TWO\n")
    assert pm[MethodRef.parse("a.B.c()void")] == ("p.ONE", "p.TWO")
    with pytest.raises(SpecFormatError):
        parse_permission_map("a.B.c()void,\n")


def test_source_site_json():
    s = SourceSite(MethodRef("a.A", "m"), 1, "api", "x", ("p",))
    assert s.to_json()["permissions"] == ["p"]


# --------------------------------------------------------------------------
# UI lexicon


@pytest.mark.parametrize("text,category", [
    ("Password", "account"), ("Card CVV", "financial"), ("Search", None), ("E-mail address", "account"),
    ("Street address", "location"), ("Expiration date", "financial"), ("Username", "account"),
])
def test_lexicon_examples(text, category):
    assert default_lexicon().classify(text) == category


def test_stems_match_at_word_starts_only():
    # "pin code" must not fire inside "shopping codes"
    assert default_lexicon().classify("shopping codes") is None


def test_lexicon_validation(tmp_path):
    with pytest.raises(ValueError):
        Lexicon((("a", ("Upper",)),))
    with pytest.raises(ValueError):
        Lexicon((("a", ("x", "x")),))
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({"version": 1, "categories": [{"name": "pets", "stems": ["dog"]}]}))
    assert load_lexicon(path).classify("Dog name") == "pets"


def test_classify_uses_label_and_hint():
    got = classify_ui_elements([UiElement("a", "EditText", "Your", "password"), UiElement("b", "Button", "Go", "")])
    assert got == {"a": "account"}


def test_display_widgets_are_not_sources():
    els = [UiElement("f", "android.widget.Button", "Forgot password?"), UiElement("t", "TextView", "Saved addresses"),
           UiElement("e", "", "Password")]
    assert classify_ui_elements(els) == {"e": "account"}
