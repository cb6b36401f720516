import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipedial.acts import (
    DelexAct,
    DialogAct,
    act_f1,
    delexicalize,
    lexicalize,
)
from pipedial.dst import BeliefState


def test_delexicalize_drops_value_only():
    assert delexicalize(DialogAct("inform", "hotel", "area", "centre")) == DelexAct("inform", "hotel", "area")
    assert delexicalize(DialogAct("request", "restaurant", "phone")) == DelexAct("request", "restaurant", "phone")
    assert delexicalize(DialogAct("bye", "general")) == DelexAct("bye", "general")


def test_dialog_act_invariants():
    with pytest.raises(ValueError):
        DialogAct("request", "hotel", "area", "centre")  # requests carry no value
    with pytest.raises(ValueError):
        DialogAct("bye", "general", "area")
    with pytest.raises(ValueError):
        DialogAct("shout", "hotel")


def test_render_parse_roundtrip():
    acts = [
        DialogAct("inform", "hotel", "area", "centre"),
        DialogAct("request", "hotel", "phone"),
        DialogAct("bye", "general"),
        DialogAct("recommend", "attraction", "name", "the amber lion court"),
    ]
    for act in acts:
        assert DialogAct.parse(act.render()) == act
    assert acts[0].render() == "Inform-Hotel-Area-centre"
    assert acts[1].render() == "Request-Hotel-Phone-?"


def test_vocabulary_roundtrip(world):
    for vocab in (world.system_vocab, world.user_vocab):
        for i in range(len(vocab)):
            assert vocab.index_of(vocab.act_at(i)) == i
        acts = list(vocab)
        assert acts == sorted(acts)


def test_vocabulary_validity_rules(world):
    sys_vocab = world.system_vocab
    assert DelexAct("recommend", "hotel", "name") in sys_vocab
    assert DelexAct("request", "hotel", "area") in sys_vocab
    assert DelexAct("request", "hotel", "phone") not in sys_vocab  # system never asks requestables
    assert DelexAct("nooffer", "hotel") in sys_vocab
    user_vocab = world.user_vocab
    assert DelexAct("request", "hotel", "phone") in user_vocab
    assert DelexAct("request", "hotel", "area") not in user_vocab
    assert DelexAct("nooffer", "hotel") not in user_vocab


def _belief(active="hotel", constraints=None):
    belief = BeliefState(
        constraints={"hotel": dict(constraints or {})},
        requested={"hotel": set()},
        active_domain=active,
    )
    return belief


def test_lexicalize_fill_from_entity():
    entity = {"name": "the copper mill house", "pricerange": "moderate", "area": "north"}
    out = lexicalize([DelexAct("inform", "hotel", "pricerange")], _belief(), [entity])
    assert out == [DialogAct("inform", "hotel", "pricerange", "moderate")]


def test_lexicalize_requests_pass_through():
    entity = {"name": "x", "area": "north"}
    out = lexicalize([DelexAct("request", "hotel", "area")], _belief(), [entity])
    assert out == [DialogAct("request", "hotel", "area")]


def test_lexicalize_rule_table():
    # oracle: exhaustive rule table for the fill policy
    entity = {"name": "the quiet forge house", "area": "west", "phone": "0123"}
    cases = [
        # (acts, belief constraints, db_result, expected values or dropped)
        ([DelexAct("inform", "hotel", "area")], {}, [entity], ["west"]),
        ([DelexAct("inform", "hotel", "area")], {"area": "east"}, [], ["east"]),
        ([DelexAct("inform", "hotel", "phone")], {}, [], [None]),   # dropped
        ([DelexAct("inform", "hotel", "phone")], {"area": "east"}, [entity], ["0123"]),
        ([DelexAct("recommend", "hotel", "name")], {}, [entity], ["the quiet forge house"]),
        ([DelexAct("recommend", "hotel", "name")], {}, [], [None]),  # dropped
        ([DelexAct("nooffer", "hotel")], {}, [], [""]),
        ([DelexAct("inform", "hotel", "area")], {"area": "any"}, [], [None]),  # wildcard never fills
    ]
    for acts, constraints, db_result, expected in cases:
        out = lexicalize(acts, _belief(constraints=constraints), db_result)
        values = [a.value for a in out] if out else [None]
        assert values == expected, (acts, constraints, expected, out)


def test_lexicalize_other_domain_uses_own_constraints():
    belief = BeliefState(
        constraints={"hotel": {"area": "north"}, "restaurant": {"food": "thai"}},
        requested={"hotel": set(), "restaurant": set()},
        active_domain="hotel",
    )
    entity = {"name": "x", "area": "south", "food": "should-not-leak"}
    out = lexicalize([DelexAct("inform", "restaurant", "food")], belief, [entity])
    assert out == [DialogAct("inform", "restaurant", "food", "thai")]


def test_act_f1_examples():
    a = DialogAct("inform", "hotel", "area", "centre")
    b = DialogAct("inform", "hotel", "stars", "four")
    c = DialogAct("request", "hotel", "phone")
    assert act_f1({a, b}, {a, b}) == (1.0, 1.0, 1.0)
    assert act_f1({a}, {b}) == (0.0, 0.0, 0.0)
    # {A,B} vs {B,C}: oracle = arithmetic over the intersection
    assert act_f1({a, b}, {b, c}) == (0.5, 0.5, 0.5)
    assert act_f1(set(), set()) == (1.0, 1.0, 1.0)
    assert act_f1(set(), {a}) == (0.0, 0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(
    p=st.sets(st.integers(0, 8), max_size=6),
    g=st.sets(st.integers(0, 8), max_size=6),
)
def test_precision_recall_duality(p, g):
    acts = [DialogAct("inform", "hotel", "area", str(i)) for i in range(9)]
    ps = {acts[i] for i in p}
    gs = {acts[i] for i in g}
    assert act_f1(ps, gs)[0] == act_f1(gs, ps)[1]


def test_delex_roundtrip_through_lexicalize(world):
    entity = world.db.entities["hotel"][0]
    belief = _belief(constraints={"area": entity["area"]})
    delex = [
        DelexAct("inform", "hotel", "area"),
        DelexAct("inform", "hotel", "phone"),
        DelexAct("request", "hotel", "stars"),
    ]
    out = lexicalize(delex, belief, [entity])
    assert [delexicalize(a) for a in out] == delex
