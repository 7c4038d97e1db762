import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domainflow.coordination import (
    InteractionPayload,
    InteractionResponse,
    WireError,
    build_payload,
    canonical_bytes,
    decode,
    encode,
    markup_violations,
    payload_document,
    validate_response,
    violations_document,
)
from domainflow.domain_dsl import parse_domain
from domainflow.flow_dsl import parse_flow

from conftest import FIXTURES, fixture_text

WIRE = FIXTURES / "wire"


@pytest.fixture(scope="module")
def conduit():
    return parse_domain(fixture_text("conduit.domain"))


@pytest.fixture(scope="module")
def guessing():
    return parse_domain(fixture_text("guessing.domain"))


ARTICLES = [
    {"id": 1, "title": "How to create the behavior model", "body": "A short *guide*.", "tags": ["guide"]},
    {"id": 2, "title": "Decoupling clients from logic", "body": "Payloads carry **data**.", "tags": ["design"]},
]


def article_list_payload(conduit, articles=ARTICLES, instance_id=15):
    activity = conduit.activity("show-articles")
    return build_payload(instance_id, activity, conduit, {"alist": articles})


# ------------------------------------------------------------ build_payload

def test_article_list_payload_structure(conduit):
    p = article_list_payload(conduit)
    assert p.instance_id == 15
    alist = p.display_elements[0]
    assert (alist.name, alist.label, alist.set) == ("alist", "Article List", True)
    assert [s.name for s in alist.sub_elements] == ["title", "body", "tags"]
    assert alist.sub_elements[0].label == "Article title"
    # selection is an opaque pick typed String; pagination is Boolean
    assert [(g.name, g.type) for g in p.gather_elements] == [
        ("selected", "String"),
        ("pagination", "Boolean"),
    ]
    assert [(c.kind, c.target, c.source) for c in p.constraints] == [("valueFrom", "selected", "alist")]
    assert p.value["alist"][0]["id"] == 1


def test_payload_matches_documented_descriptor_shape(conduit):
    # Same descriptor names/labels as the documented listing (which elides
    # all but the title sub-element).
    listing = decode((WIRE / "article_list.listing.json").read_bytes())
    live = article_list_payload(conduit)
    assert live.display_elements[0].name == listing.display_elements[0].name
    assert live.display_elements[0].label == listing.display_elements[0].label
    assert live.display_elements[0].sub_elements[0] == listing.display_elements[0].sub_elements[0]
    assert live.gather_elements == listing.gather_elements
    assert live.constraints == listing.constraints


def test_display_nothing_gather_boolean():
    spec_only_gather = parse_domain(
        "domain g\n\nactivity nod {\n  kind user-facing\n  output ok: Boolean label \"OK\"\n  gather ok\n}\n"
    )
    p = build_payload(3, spec_only_gather.activity("nod"), spec_only_gather, {})
    assert p.display_elements == () and p.value == {}
    assert [g.type for g in p.gather_elements] == ["Boolean"]


def test_missing_display_value_is_an_error(conduit):
    from domainflow.coordination import PayloadError

    with pytest.raises(PayloadError, match="no value"):
        build_payload(1, conduit.activity("show-articles"), conduit, {})


def test_rimage_field_flows_through_mechanically(conduit):
    # Adding one field to the type grows the descriptor and value sections
    # and changes nothing else.
    changed = parse_domain(
        fixture_text("conduit.domain").replace(
            '\n  title: String label "Article title"\n',
            '\n  title: String label "Article title"\n  rimage: Image label "Representative image"\n',
            1,
        )
    )
    articles = [dict(a) for a in ARTICLES]
    articles[0] = {"id": 1, "title": articles[0]["title"], "rimage": "http://bit.ly/1",
                   "body": articles[0]["body"], "tags": articles[0]["tags"]}
    p = build_payload(15, changed.activity("show-articles"), changed, {"alist": articles[:1]})
    subs = [s.name for s in p.display_elements[0].sub_elements]
    assert subs == ["title", "rimage", "body", "tags"]
    rimage = p.display_elements[0].sub_elements[1]
    assert (rimage.label, rimage.type) == ("Representative image", "Image")
    assert p.value["alist"][0]["rimage"] == "http://bit.ly/1"


def test_client_logic_independence():
    # Two deployed flows sharing show-articles produce payloads with
    # identical descriptor sections: they depend on the activity and its
    # domain, never on the flow graph around it.
    from domainflow.engine import Engine

    from conftest import SEED_ARTICLES, fixture_text as ft, make_deployment, seed_articles

    straight = (
        "flow straight\nimport conduit\n\nstart s\nend e\n\n"
        "activity ga = conduit.get-articles {\n  input offset = 0\n  input limit = 3\n}\n"
        "activity sa = conduit.show-articles {\n  input alist = ga.articles\n}\n\n"
        "s -> ga\nga -> sa\nsa -> e\n"
    )
    dep = make_deployment(ft("conduit.domain"), ft("articles.flow"), ft("post-article.flow"), straight)
    engine = Engine(dep)
    seed_articles(engine, SEED_ARTICLES[:2])

    payloads = []
    for flow_name in ("articles", "straight"):
        inst = engine.create_instance(flow_name)
        engine.run_until_blocked(inst)
        payloads.append(inst.pending_payload)
    via_articles, via_straight = payloads
    assert via_articles.display_elements == via_straight.display_elements
    assert via_articles.gather_elements == via_straight.gather_elements
    assert via_articles.constraints == via_straight.constraints


def test_markup_free_over_fixture_corpus(conduit, guessing):
    for domain in (conduit, guessing):
        for activity in domain.activities:
            if activity.kind != "user-facing":
                continue
            for descriptor in _payload_descriptors(domain, activity):
                assert not descriptor
    bad = parse_domain(
        "domain b\n\nactivity a {\n  kind user-facing\n"
        "  input x: String label \"<b>bold label</b>\"\n  display x\n}\n"
    )
    from domainflow.coordination import PayloadError

    with pytest.raises(PayloadError, match="markup"):
        build_payload(1, bad.activity("a"), bad, {"x": "hello"})


def _payload_descriptors(domain, activity):
    from domainflow.values import default_value

    inputs = {
        name: default_value(activity.input(name).type, domain)
        for name in (activity.display_spec.display_elements if activity.display_spec else ())
    }
    payload = build_payload(1, activity, domain, inputs)
    return markup_violations(payload)


# ------------------------------------------------------------- validation

def test_selected_member_passes(conduit):
    p = article_list_payload(conduit)
    ok = validate_response(p, InteractionResponse(15, {"selected": ARTICLES[0]}))
    assert ok == []


def test_selected_non_member_fails(conduit):
    p = article_list_payload(conduit)
    stranger = {"id": 9, "title": "x", "body": "", "tags": []}
    violations = validate_response(p, InteractionResponse(15, {"selected": stranger}))
    assert len(violations) == 1 and "selected" in violations[0].message


def test_required_gather_must_be_present(guessing):
    p = build_payload(4, guessing.activity("take-a-guess"), guessing, {"hint": "?"})
    violations = validate_response(p, InteractionResponse(4, {}))
    assert ["guess" in v.message for v in violations] == [True]
    assert validate_response(p, InteractionResponse(4, {"guess": 5})) == []


def test_type_conformance_checked(guessing):
    p = build_payload(4, guessing.activity("take-a-guess"), guessing, {"hint": "?"})
    violations = validate_response(p, InteractionResponse(4, {"guess": "five"}))
    assert violations and "guess" in violations[0].message


def test_unknown_response_key_rejected(guessing):
    p = build_payload(4, guessing.activity("take-a-guess"), guessing, {"hint": "?"})
    violations = validate_response(p, InteractionResponse(4, {"guess": 1, "ghost": 2}))
    assert any("ghost" in v.message for v in violations)


records = st.fixed_dictionaries(
    {"id": st.integers(0, 5), "title": st.text(alphabet="abc", max_size=3)}
)


@settings(max_examples=300, deadline=None)
@given(
    members=st.lists(records, max_size=5),
    candidate=records,
    drop_title=st.booleans(),
)
def test_value_from_agrees_with_membership_oracle(conduit, members, candidate, drop_title):
    descriptor_domain = parse_domain(
        "domain t\n\ntype rec {\n  title: String label \"T\"\n}\n\n"
        "activity pick {\n  kind user-facing\n"
        "  input rlist: set rec label \"List\"\n  output chosen: rec label \"Chosen\"\n"
        "  display rlist\n  gather chosen\n  constraint chosen valueFrom rlist\n}\n"
    )
    if drop_title:
        candidate = {"id": candidate["id"]}
    p = build_payload(1, descriptor_domain.activity("pick"), descriptor_domain, {"rlist": members})
    violations = validate_response(p, InteractionResponse(1, {"chosen": candidate}))
    # brute-force structural membership, written without the validator
    member = any(candidate == m for m in members)
    assert (violations == []) == member


# ------------------------------------------------------------- wire codec

@pytest.mark.parametrize("name", ["article_list", "article_list_rimage", "selected_response"])
def test_golden_decode_encode_byte_exact(name):
    listing = (WIRE / f"{name}.listing.json").read_bytes()
    canonical = (WIRE / f"{name}.canonical.json").read_bytes()
    assert encode(decode(listing)) == canonical
    assert encode(decode(canonical)) == canonical
    assert decode(listing) == decode(canonical)


def test_documented_listing_counts():
    p = decode((WIRE / "article_list.listing.json").read_bytes())
    assert isinstance(p, InteractionPayload)
    assert len(p.display_elements) == 1
    assert len(p.gather_elements) == 2
    assert len(p.constraints) == 1
    assert p.instance_id == 15


def test_response_golden_normalizes_to_map():
    r = decode((WIRE / "selected_response.listing.json").read_bytes())
    assert isinstance(r, InteractionResponse)
    assert r.response["selected"]["id"] == 1


def test_unknown_top_level_keys_ignored():
    doc = json.loads((WIRE / "article_list.canonical.json").read_text())
    doc["customerHint"] = {"tenant": 7}
    p = decode(json.dumps(doc))
    assert isinstance(p, InteractionPayload)
    assert encode(p) == (WIRE / "article_list.canonical.json").read_bytes()


def test_rimage_variant_differs_only_in_rimage_sections():
    base = json.loads((WIRE / "article_list.canonical.json").read_text())
    variant = json.loads((WIRE / "article_list_rimage.canonical.json").read_text())
    subs = variant["displayElements"][0]["subElements"]
    variant["displayElements"][0]["subElements"] = [s for s in subs if s["name"] != "rimage"]
    for entry in variant["value"]:
        for items in entry.values():
            for record in items:
                record.pop("rimage", None)
    assert canonical_bytes(variant) == canonical_bytes(base)


def test_missing_instance_id_rejected():
    with pytest.raises(WireError, match="instanceId"):
        decode(b'{"response": []}')


def test_malformed_document_rejected():
    with pytest.raises(WireError, match="malformed"):
        decode(b"{nope")


def test_violations_document_shape():
    from domainflow.coordination import Violation

    doc = violations_document(7, [Violation("selected", "not a member")])
    assert doc == {
        "instanceId": 7,
        "violations": [{"constraint": "selected", "message": "not a member"}],
    }


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10), st.text(alphabet="ab", max_size=4), st.booleans(), st.booleans())
def test_encode_decode_identity_random(instance_id, text, flag, gather_two):
    source = parse_domain(
        "domain r\n\nactivity a {\n  kind user-facing\n"
        "  input m: String label \"M\"\n  output yes: Boolean label \"Yes\"\n"
        "  output n: Integer label \"N\"\n  display m\n  gather yes\n"
        + ("  gather n\n" if gather_two else "")
        + "}\n"
    )
    p = build_payload(instance_id, source.activity("a"), source, {"m": text})
    assert decode(encode(p)) == p
    r = InteractionResponse(instance_id, {"yes": flag})
    assert decode(encode(r)) == r


def test_payload_document_key_order(conduit):
    doc = payload_document(article_list_payload(conduit))
    assert list(doc.keys()) == ["instanceId", "displayElements", "gatherElements", "constraints", "value"]
