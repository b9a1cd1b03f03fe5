"""HTTP session service: live play over solved policies."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from coadapt.calibration import default_model
from coadapt.humans import HumanParams
from coadapt.model import (
    GOAL_COUNTERCLOCKWISE,
    MODE_CLOCKWISE,
    TASK,
    VARIANT_BASELINE,
    VARIANT_COMPLIANCE,
    VARIANT_STATE_CONVEYING,
    VERBAL_COMMAND,
)
from coadapt.sim import InteractionTrace, run_episode, verify_trace
from coadapt.service import (
    COMMAND_UTTERANCES,
    SESSION_MAX_STEPS,
    STATE_CONVEYING_UTTERANCE,
    create_app,
)

DIRECTION_NAME = {0: "clockwise", 1: "counterclockwise"}


@pytest.fixture()
def client(policy_dir, tmp_path):
    app = create_app(str(policy_dir), str(tmp_path / "sessions"))
    with TestClient(app) as c:
        yield c


def _create(client, variant, **extra):
    response = client.post("/sessions", json={"variant": variant, "policy_id": variant, **extra})
    assert response.status_code == 201
    return response.json()


def _click(client, session_id, mode):
    response = client.post(f"/sessions/{session_id}/action", json={"direction": DIRECTION_NAME[mode]})
    assert response.status_code == 200
    return response.json()


def test_policy_listing(client):
    body = client.get("/policies").json()
    listed = {p["id"]: p for p in body["policies"]}
    assert sorted(listed) == [VARIANT_BASELINE, VARIANT_COMPLIANCE, VARIANT_STATE_CONVEYING]
    for policy_id, entry in listed.items():
        assert entry["variant"] == policy_id
        assert entry["model_hash"] == default_model(policy_id).model_hash()
        assert entry["capabilities"]["verbal_commands"] == (policy_id == VARIANT_COMPLIANCE)


def test_fresh_session_is_the_pre_opening_screen(client):
    session = _create(client, VARIANT_BASELINE)
    assert session["status"] == "active"
    assert session["orientation"] == 10
    assert session["steps"] == 0
    assert session["goal"] is None
    assert not session["terminal"]
    assert session["preference"] == "counterclockwise"
    assert session["last_step"] is None
    model = default_model(VARIANT_BASELINE)
    assert np.allclose(session["belief"]["joint"], model.prior().ravel())
    assert np.allclose(session["belief"]["alpha_marginal"], model.alpha_prior)

    trace_text = client.get(f"/sessions/{session['id']}/trace")
    assert trace_text.headers["content-type"].startswith("application/x-ndjson")
    lines = trace_text.text.strip().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["record"] == "header"


def test_error_statuses(client):
    assert client.post("/sessions", json={"variant": VARIANT_BASELINE, "policy_id": "missing"}).status_code == 404
    assert (
        client.post("/sessions", json={"variant": VARIANT_COMPLIANCE, "policy_id": VARIANT_BASELINE}).status_code
        == 422
    )
    assert client.post("/sessions", json={"policy_id": VARIANT_BASELINE}).status_code == 422
    assert client.get("/sessions/nope").status_code == 404
    assert client.get("/sessions/nope/trace").status_code == 404
    session = _create(client, VARIANT_BASELINE)
    bad = client.post(f"/sessions/{session['id']}/action", json={"direction": "up"})
    assert bad.status_code == 422


def test_first_action_plays_the_fixed_opening(client):
    session = _create(client, VARIANT_COMPLIANCE)
    result = _click(client, session["id"], 1)
    assert result["index"] == 0
    assert result["robot_action"] == {"kind": TASK, "mode": MODE_CLOCKWISE}
    assert result["utterance"] is None
    assert result["disagreement"]
    assert not result["table_moved"]
    assert result["orientation"] == 10
    assert result["reward"] == 0.0
    assert result["status"] == "active"
    model = default_model(VARIANT_COMPLIANCE)
    assert np.allclose(result["belief"]["joint"], model.prior().ravel())


def test_insisting_player_hears_the_command_and_wins_goal_2(client):
    session = _create(client, VARIANT_COMPLIANCE)
    utterances, results = [], []
    for _ in range(SESSION_MAX_STEPS):
        result = _click(client, session["id"], 1)
        results.append(result)
        if result["utterance"] is not None:
            utterances.append(result["utterance"])
        if result["status"] == "finished":
            break
    assert COMMAND_UTTERANCES[MODE_CLOCKWISE] in utterances
    assert utterances == ["Let's rotate the table clockwise"]
    final = results[-1]
    assert final["terminal"]
    assert final["goal"] == GOAL_COUNTERCLOCKWISE
    assert final["reward"] == 15.0

    command_at = next(i for i, r in enumerate(results) if r["robot_action"]["kind"] == VERBAL_COMMAND)
    conceded_at = next(
        i for i, r in enumerate(results) if r["robot_action"] == {"kind": TASK, "mode": 1}
    )
    assert conceded_at > command_at

    text = client.get(f"/sessions/{session['id']}/trace").text
    trace = InteractionTrace.from_ndjson(text)
    verify_trace(default_model(VARIANT_COMPLIANCE), trace)
    assert trace.outcome.goal == GOAL_COUNTERCLOCKWISE
    assert trace.outcome.verbal_actions == 1
    followup = client.post(f"/sessions/{session['id']}/action", json={"direction": "counterclockwise"})
    assert followup.status_code == 409


def test_live_session_reproduces_the_simulated_episode(client, models, policies):
    model = models[VARIANT_COMPLIANCE]
    human = HumanParams(alpha=0.0, compliance=1.0, current_mode=model.human_preference)
    simulated = run_episode(policies[VARIANT_COMPLIANCE], model, human, seed=0)

    session = _create(client, VARIANT_COMPLIANCE)
    for step in simulated.steps:
        _click(client, session["id"], step.human_action.mode)
    text = client.get(f"/sessions/{session['id']}/trace").text
    live = InteractionTrace.from_ndjson(text)
    assert [s.to_json() for s in live.steps] == [s.to_json() for s in simulated.steps]
    assert live.outcome.goal == simulated.outcome.goal
    assert live.outcome.discounted_return == pytest.approx(simulated.outcome.discounted_return)


def test_off_model_click_keeps_the_belief(client):
    session = _create(client, VARIANT_BASELINE)
    _click(client, session["id"], 1)  # opening
    adapted = _click(client, session["id"], 0)  # in-model switch, belief moves
    assert adapted["table_moved"]
    off_model = _click(client, session["id"], 1)  # switching while agreeing has probability zero
    assert off_model["disagreement"] or not off_model["table_moved"]
    assert off_model["belief"]["joint"] == adapted["belief"]["joint"]
    assert off_model["status"] == "active"


def test_descriptor_tracks_the_last_step(client):
    session = _create(client, VARIANT_STATE_CONVEYING)
    result = _click(client, session["id"], 1)
    descriptor = client.get(f"/sessions/{session['id']}").json()
    assert descriptor["steps"] == 1
    assert descriptor["last_step"] == result
    assert descriptor["belief"] == result["belief"]


def test_sessions_survive_a_service_restart(client, policy_dir, tmp_path):
    session = _create(client, VARIANT_COMPLIANCE)
    first = _click(client, session["id"], 1)

    reborn = create_app(str(policy_dir), str(tmp_path / "sessions"))
    with TestClient(reborn) as second:
        descriptor = second.get(f"/sessions/{session['id']}").json()
        assert descriptor["steps"] == 1
        assert descriptor["belief"] == first["belief"]
        result = second.post(
            f"/sessions/{session['id']}/action", json={"direction": "counterclockwise"}
        )
        assert result.status_code == 200
        assert result.json()["index"] == 1


def test_sessions_finish_at_the_step_cap(client, monkeypatch):
    monkeypatch.setattr("coadapt.service.SESSION_MAX_STEPS", 2)
    session = _create(client, VARIANT_BASELINE)
    _click(client, session["id"], 1)
    capped = _click(client, session["id"], 1)
    assert capped["status"] == "finished"
    assert capped["goal"] is None
    trace = InteractionTrace.from_ndjson(client.get(f"/sessions/{session['id']}/trace").text)
    assert trace.outcome.timed_out
    assert client.post(f"/sessions/{session['id']}/action", json={"direction": "clockwise"}).status_code == 409


def test_state_conveying_session_uses_its_utterance(client):
    session = _create(client, VARIANT_STATE_CONVEYING)
    utterances = []
    result = None
    for _ in range(SESSION_MAX_STEPS):
        result = _click(client, session["id"], 1)
        if result["utterance"] is not None:
            utterances.append(result["utterance"])
        if result["status"] == "finished":
            break
    assert utterances
    assert set(utterances) == {STATE_CONVEYING_UTTERANCE}
    assert result["status"] == "finished"


def test_preference_override_changes_the_opening(client):
    session = _create(client, VARIANT_BASELINE, preference="clockwise")
    assert session["preference"] == "clockwise"
    result = _click(client, session["id"], 0)
    # Preference and optimal goal coincide, so the opening already agrees.
    assert not result["disagreement"]
    assert result["table_moved"]
    assert result["orientation"] == -10
