import itertools
import json
import threading

import pytest

from domainflow.coordination import InteractionResponse, encode
from domainflow.engine import Engine, EngineError, NotAwaiting, UnknownInstance

from conftest import (
    DIAMOND_FLOW,
    EMPTY_FLOW,
    SEED_ARTICLES,
    TOY_DOMAIN,
    TWO_START_FLOW,
    fixture_text,
    make_deployment,
    seed_articles,
)


def respond(engine, inst, **values):
    violations = engine.apply_response(inst.instance_id, InteractionResponse(inst.instance_id, values))
    return violations


# ----------------------------------------------------------------- creation

def test_create_instance_defaults_and_start_successors(guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    assert inst.status == "running"
    assert inst.variables == {"secret": 5}
    assert inst.ready == ["turn"]


def test_initial_values_override_declared(guessing_engine):
    inst = guessing_engine.create_instance("guessing", {"secret": 8})
    assert inst.variables["secret"] == 8


def test_missing_initials_fall_back_to_type_defaults():
    flow = (
        "flow defaults\nimport toy\n\n"
        "var n: Integer\nvar s: String\nvar f: Float\nvar b: Boolean\nvar ns: set Integer\n\n"
        "start s1\nend e1\n\ns1 -> e1\n"
    )
    engine = Engine(make_deployment(TOY_DOMAIN, flow))
    inst = engine.create_instance("defaults")
    assert inst.variables == {"n": 0, "s": "", "f": 0.0, "b": False, "ns": []}


def test_initial_type_mismatch_rejected(guessing_engine):
    with pytest.raises(EngineError, match="secret"):
        guessing_engine.create_instance("guessing", {"secret": "five"})
    with pytest.raises(EngineError, match="unknown initial"):
        guessing_engine.create_instance("guessing", {"ghost": 1})


def test_instance_ids_are_distinct_and_monotonic(guessing_engine):
    a = guessing_engine.create_instance("guessing")
    b = guessing_engine.create_instance("guessing")
    assert a.instance_id != b.instance_id
    assert b.instance_id > a.instance_id


def test_two_start_nodes_two_current_activities(tmp_path):
    engine = Engine(make_deployment(TOY_DOMAIN, TWO_START_FLOW))
    inst = engine.create_instance("twostart")
    assert len(inst.current_activities()) == 2
    engine.run_until_blocked(inst)
    assert inst.status == "finished"


def test_first_dispatch_is_get_articles(conduit_engine):
    inst = conduit_engine.create_instance("articles")
    assert inst.ready == ["getArticles"]


# ---------------------------------------------------------------- main loop

def test_start_to_end_finishes_immediately(tmp_path):
    engine = Engine(make_deployment(TOY_DOMAIN, EMPTY_FLOW))
    inst = engine.create_instance("empty")
    engine.run_until_blocked(inst)
    assert inst.status == "finished"
    assert inst.executing == 0


def test_guessing_blocks_gathering_one_integer(guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(inst)
    assert inst.status == "awaiting-client"
    payload = inst.pending_payload
    assert [g.type for g in payload.gather_elements] == ["Integer"]
    assert inst.executing == 0


def test_diamond_join_sees_both_outputs(tmp_path):
    engine = Engine(make_deployment(TOY_DOMAIN, DIAMOND_FLOW))
    inst = engine.create_instance("diamond")
    engine.run_until_blocked(inst)
    assert inst.status == "finished"
    # both branches stored a record before the join ran
    assert inst.produced[("d", "u")] + inst.produced[("d", "v")] == 3
    assert inst.variables["total"] == 3


def test_run_on_finished_instance_rejected(tmp_path):
    engine = Engine(make_deployment(TOY_DOMAIN, EMPTY_FLOW))
    inst = engine.create_instance("empty")
    engine.run_until_blocked(inst)
    with pytest.raises(EngineError, match="not running"):
        engine.run_until_blocked(inst)


def test_service_failure_fails_instance(tmp_path):
    flow = (
        "flow broken\nimport toy\n\nstart s\nend e\n\n"
        "activity g = toy.get-missing {\n  input id = 99\n}\n\ns -> g\ng -> e\n"
    )
    domain = TOY_DOMAIN + (
        "\nservice thing-query {\n  kind builtin-query\n  type thing\n}\n\n"
        "activity get-missing {\n  kind service\n  service thing-query\n"
        "  input id: Integer label \"Id\"\n  output rec: thing label \"Thing\"\n}\n"
    )
    engine = Engine(make_deployment(domain, flow))
    inst = engine.create_instance("broken")
    engine.run_until_blocked(inst)
    assert inst.status == "failed"
    assert "no thing with id" in inst.failure
    assert any(e.kind == "failed" for e in inst.history)


# ------------------------------------------------------------- guessing game

def test_guessing_exhaustive_replay(guessing_engine):
    # Exactly one of the guesses 1..10 wins against secret=5; every other
    # guess loops back to the asking step.
    outcomes = {}
    for guess in range(1, 11):
        inst = guessing_engine.create_instance("guessing")
        guessing_engine.run_until_blocked(inst)
        assert respond(guessing_engine, inst, guess=guess) == []
        note = inst.pending_payload.value["note"]
        assert respond(guessing_engine, inst, ack=True) == []
        if inst.status == "finished":
            outcomes[guess] = ("finished", note)
        else:
            assert inst.pending[0].node_id == "turn"
            outcomes[guess] = ("again", note)
    assert [g for g, (state, _) in outcomes.items() if state == "finished"] == [5]
    assert all("lower" in note for g, (_, note) in outcomes.items() if g > 5)
    assert all("higher" in note for g, (_, note) in outcomes.items() if g < 5)


def test_wrong_then_right_guess(guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(inst)
    respond(guessing_engine, inst, guess=2)
    respond(guessing_engine, inst, ack=True)
    respond(guessing_engine, inst, guess=5)
    assert "Correct" in inst.pending_payload.value["note"]
    respond(guessing_engine, inst, ack=False)
    assert inst.status == "finished"


# ----------------------------------------------------------------- responses

def test_article_selection_carries_record(conduit_engine):
    seed_articles(conduit_engine, SEED_ARTICLES)
    inst = conduit_engine.create_instance("articles")
    conduit_engine.run_until_blocked(inst)
    first = inst.pending_payload.value["alist"][0]
    assert respond(conduit_engine, inst, selected=first) == []
    payload = inst.pending_payload
    assert payload.value["found"]["title"] == first["title"]
    assert respond(conduit_engine, inst) == []
    assert inst.status == "finished"


def test_missing_required_element_keeps_state(guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(inst)
    before = encode(inst.pending_payload)
    violations = respond(guessing_engine, inst)
    assert violations and inst.status == "awaiting-client"
    assert encode(inst.pending_payload) == before
    assert any(e.kind == "response-rejected" for e in inst.history)


def test_response_to_wrong_status_raises(tmp_path):
    engine = Engine(make_deployment(TOY_DOMAIN, EMPTY_FLOW))
    inst = engine.create_instance("empty")
    engine.run_until_blocked(inst)
    with pytest.raises(NotAwaiting):
        engine.apply_response(inst.instance_id, InteractionResponse(inst.instance_id, {}))


def test_unknown_instance_raises(guessing_engine):
    with pytest.raises(UnknownInstance):
        guessing_engine.apply_response(999, InteractionResponse(999, {}))


def test_stale_instance_id_in_response(guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(inst)
    with pytest.raises(EngineError, match="different instance"):
        guessing_engine.apply_response(inst.instance_id, InteractionResponse(inst.instance_id + 1, {"guess": 1}))


# ---------------------------------------------------- activity instances

def test_live_activity_instances_return_to_zero(conduit_engine, guessing_engine):
    seed_articles(conduit_engine, SEED_ARTICLES)
    inst = conduit_engine.create_instance("articles")
    conduit_engine.run_until_blocked(inst)
    assert inst.executing == 0
    respond(conduit_engine, inst, pagination=True)
    assert inst.executing == 0
    first = inst.pending_payload.value["alist"][0]
    respond(conduit_engine, inst, selected=first)
    assert inst.executing == 0
    respond(conduit_engine, inst)
    assert inst.status == "finished" and inst.executing == 0


PAR_DOMAIN = """
domain par

activity say {
  kind user-facing
  input words: String label "Words"
  output heard: Boolean label "Heard"
  display words
  gather heard
}

activity work {
  kind compute
  input a: Integer label "In"
  output r: Integer label "Out"
}
"""

PAR_FLOW = """
flow par
import par

start s1
start s2
end e1
end e2

activity left = par.say {
  input words = "first branch"
}
activity right = par.work {
  input a = 40 + 2
}
activity after = par.say {
  input words = "second branch"
}

s1 -> left
s2 -> right
right -> after
left -> e1
after -> e2
"""


def test_user_facing_blocks_only_its_branch():
    # The left branch blocks at a user-facing activity; the right branch
    # keeps running (its compute completes) and then blocks too.  Payloads
    # queue in completion order and the client sees one at a time.
    engine = Engine(make_deployment(PAR_DOMAIN, PAR_FLOW))
    inst = engine.create_instance("par")
    engine.run_until_blocked(inst)
    assert inst.status == "awaiting-client"
    assert inst.produced[("right", "r")] == 42  # parallel branch ran to its block
    assert [p.node_id for p in inst.pending] == ["left", "after"]
    assert inst.pending_payload.value["words"] == "first branch"

    # responding to the head surfaces the queued payload from the other branch
    assert respond(engine, inst, heard=True) == []
    assert inst.status == "awaiting-client"
    assert inst.pending_payload.value["words"] == "second branch"
    assert respond(engine, inst, heard=True) == []
    assert inst.status == "finished"


def test_pending_head_is_the_only_visible_payload():
    engine = Engine(make_deployment(PAR_DOMAIN, PAR_FLOW))
    inst = engine.create_instance("par")
    engine.run_until_blocked(inst)
    assert len(inst.pending) == 2
    assert inst.pending_payload is inst.pending[0].payload


# ------------------------------------------------- scheduler interleavings

def run_with_choices(engine_factory, flow_name, choices):
    """Run one instance driving every scheduling decision from ``choices``;
    returns (outcome, number of decisions consumed)."""
    engine = engine_factory()
    inst = engine.create_instance(flow_name)
    used = 0

    def pick(ready):
        nonlocal used
        if len(ready) == 1:
            return 0
        index = choices[used] if used < len(choices) else 0
        used += 1
        return index % len(ready)

    engine.run_until_blocked(inst, pick=pick)
    return (inst.status, json.dumps(inst.variables, sort_keys=True)), used


def test_interleaving_independence_on_diamond():
    def factory():
        return Engine(make_deployment(TOY_DOMAIN, DIAMOND_FLOW))

    outcomes = set()
    for choices in itertools.product(range(2), repeat=4):
        outcome, _ = run_with_choices(factory, "diamond", list(choices))
        outcomes.add(outcome)
    assert len(outcomes) == 1
    status, variables = next(iter(outcomes))
    assert status == "finished"
    assert json.loads(variables) == {"total": 3}


def test_interleaving_independence_two_starts():
    def factory():
        return Engine(make_deployment(TOY_DOMAIN, TWO_START_FLOW))

    outcomes = {run_with_choices(factory, "twostart", list(c))[0]
                for c in itertools.product(range(2), repeat=4)}
    assert len(outcomes) == 1


# ------------------------------------------------------ isolation / resume

def test_instance_isolation_under_concurrency(tmp_path):
    dep = make_deployment(
        fixture_text("guessing.domain"), fixture_text("guessing.flow"),
        data_dir=tmp_path, mode="sandbox",
    )
    engine = Engine(dep, tmp_path)
    instances = []
    errors = []

    def launch():
        try:
            inst = engine.create_instance("guessing")
            engine.run_until_blocked(inst)
            engine.apply_response(inst.instance_id, InteractionResponse(inst.instance_id, {"guess": 3}))
            instances.append(inst)
        except Exception as err:  # noqa: BLE001 - collected for the assertion
            errors.append(err)

    threads = [threading.Thread(target=launch) for _ in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(instances) == 100
    assert len({i.instance_id for i in instances}) == 100

    before = {
        i.instance_id: json.dumps(engine.snapshot_document(i), sort_keys=True) for i in instances
    }
    victim = instances[0]
    engine.sandbox_patch(victim.instance_id, "variables.secret", 9)
    for inst in instances[1:]:
        assert json.dumps(engine.snapshot_document(inst), sort_keys=True) == before[inst.instance_id]
    assert json.dumps(engine.snapshot_document(victim), sort_keys=True) != before[victim.instance_id]


def test_resume_from_snapshot_behaves_identically(tmp_path, guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(inst)
    respond(guessing_engine, inst, guess=2)

    # Fresh engine over the same data directory: same pending payload, and
    # the rest of the game plays out exactly as without the restart.
    dep = make_deployment(fixture_text("guessing.domain"), fixture_text("guessing.flow"))
    revived_engine = Engine(dep, guessing_engine._data_dir)
    revived = revived_engine.instance(inst.instance_id)
    assert revived.status == "awaiting-client"
    assert encode(revived.pending_payload) == encode(inst.pending_payload)

    revived_engine.apply_response(revived.instance_id, InteractionResponse(revived.instance_id, {"ack": True}))
    revived_engine.apply_response(revived.instance_id, InteractionResponse(revived.instance_id, {"guess": 5}))
    assert "Correct" in revived.pending_payload.value["note"]
    revived_engine.apply_response(revived.instance_id, InteractionResponse(revived.instance_id, {"ack": True}))
    assert revived.status == "finished"
    assert any(e.kind == "finished" for e in revived.history)


def test_instance_ids_never_reused_after_restart(tmp_path):
    dep = make_deployment(
        fixture_text("guessing.domain"), fixture_text("guessing.flow"), data_dir=tmp_path
    )
    engine = Engine(dep, tmp_path)
    first = engine.create_instance("guessing")
    reopened = Engine(dep, tmp_path)
    second = reopened.create_instance("guessing")
    assert second.instance_id > first.instance_id


# -------------------------------------------------------------- sandbox ops

def test_sandbox_patch_changes_behavior(tmp_path):
    dep = make_deployment(
        fixture_text("guessing.domain"), fixture_text("guessing.flow"),
        data_dir=tmp_path, mode="sandbox",
    )
    engine = Engine(dep, tmp_path)
    inst = engine.create_instance("guessing")
    engine.run_until_blocked(inst)
    engine.sandbox_patch(inst.instance_id, "variables.secret", 7)
    respond(engine, inst, guess=7)
    assert "Correct" in inst.pending_payload.value["note"]
    respond(engine, inst, ack=True)
    assert inst.status == "finished"
    assert any(e.kind == "patched" for e in inst.history)


def test_patch_rejected_on_production_instance(guessing_engine):
    inst = guessing_engine.create_instance("guessing")
    with pytest.raises(EngineError, match="not in sandbox"):
        guessing_engine.sandbox_patch(inst.instance_id, "variables.secret", 7)


def test_patch_type_mismatch_rejected(tmp_path):
    dep = make_deployment(
        fixture_text("guessing.domain"), fixture_text("guessing.flow"),
        data_dir=tmp_path, mode="sandbox",
    )
    engine = Engine(dep, tmp_path)
    inst = engine.create_instance("guessing")
    with pytest.raises(EngineError, match="patch value"):
        engine.sandbox_patch(inst.instance_id, "variables.secret", "seven")


def test_patch_produced_output(tmp_path):
    dep = make_deployment(
        fixture_text("guessing.domain"), fixture_text("guessing.flow"),
        data_dir=tmp_path, mode="sandbox",
    )
    engine = Engine(dep, tmp_path)
    inst = engine.create_instance("guessing")
    engine.run_until_blocked(inst)
    respond(engine, inst, guess=2)
    engine.sandbox_patch(inst.instance_id, "outputs.turn.guess", 4)
    assert inst.produced[("turn", "guess")] == 4
    with pytest.raises(EngineError, match="has not produced"):
        engine.sandbox_patch(inst.instance_id, "outputs.praise.ack", True)


def test_inspect_finished_instance_has_terminal_event(tmp_path):
    engine = Engine(make_deployment(TOY_DOMAIN, EMPTY_FLOW))
    inst = engine.create_instance("empty")
    engine.run_until_blocked(inst)
    doc = engine.inspect_instance(inst.instance_id)
    assert doc["status"] == "finished"
    assert [e for e in doc["history"] if e["kind"] == "finished"]


def test_list_instances_filters(guessing_engine):
    done = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(done)
    respond(guessing_engine, done, guess=5)
    respond(guessing_engine, done, ack=True)
    waiting = guessing_engine.create_instance("guessing")
    guessing_engine.run_until_blocked(waiting)
    all_ids = {e["instanceId"] for e in guessing_engine.list_instances()}
    assert {done.instance_id, waiting.instance_id} <= all_ids
    finished = guessing_engine.list_instances("finished")
    assert {e["instanceId"] for e in finished} == {done.instance_id}
    assert guessing_engine.list_instances("sandbox") == []
