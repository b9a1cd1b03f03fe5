"""Session-oriented HTTP API for playing the table-carrying task live.

A session binds a solved policy to one human player. Each submitted rotation
click advances exactly one timestep: the robot's action is chosen against the
belief carried over from the previous step (it cannot see the incoming click),
the world advances, and the belief updates from the observed human action.
The first step of every session is the fixed opening (robot pushes the
model-optimal mode), the same convention episode simulation uses, so a session
trace replays exactly like a simulated one.

Live players are not bound by the bounded-memory human model. When a click has
zero probability under it (switching modes during agreement, for instance) the
Bayes update is undefined and the belief carries forward unchanged;
:func:`coadapt.sim.verify_trace` applies the same rule on replay.

Sessions persist to a directory of JSON files, one per session, rewritten
after every step; restarting the service loses nothing. Steps within one
session are serialized by a lock, so concurrent submits queue.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .belief import (
    InconsistentObservationError,
    alpha_marginal,
    belief_from_list,
    belief_to_list,
    compliance_marginal,
    update_belief,
)
from .model import (
    MODE_CLOCKWISE,
    MODE_COUNTERCLOCKWISE,
    STATE_CONVEYING,
    VARIANT_BASELINE,
    VARIANT_COMPLIANCE,
    VARIANT_STATE_CONVEYING,
    VERBAL_COMMAND,
    HumanAction,
    MomdpModel,
    ObservableState,
    RobotAction,
)
from .sim import InteractionTrace, Outcome, TraceStep, _discounted_return
from .solver import Policy

__all__ = [
    "COMMAND_UTTERANCES",
    "STATE_CONVEYING_UTTERANCE",
    "DIRECTIONS",
    "SESSION_MAX_STEPS",
    "PolicyRegistry",
    "SessionStore",
    "create_app",
    "utterance_for",
]

SESSION_SCHEMA = 1
SESSION_MAX_STEPS = 40

COMMAND_UTTERANCES = {
    MODE_CLOCKWISE: "Let's rotate the table clockwise",
    MODE_COUNTERCLOCKWISE: "Let's rotate the table counterclockwise",
}
STATE_CONVEYING_UTTERANCE = "I think I know the best way of doing the task"

DIRECTIONS = {"clockwise": MODE_CLOCKWISE, "counterclockwise": MODE_COUNTERCLOCKWISE}
_DIRECTION_NAMES = {mode: name for name, mode in DIRECTIONS.items()}


def utterance_for(action: RobotAction) -> str | None:
    """Fixed rendering of a verbal action; task actions say nothing."""
    if action.kind == VERBAL_COMMAND:
        return COMMAND_UTTERANCES[action.mode]
    if action.kind == STATE_CONVEYING:
        return STATE_CONVEYING_UTTERANCE
    return None


def _capabilities(variant: str) -> dict:
    return {
        "verbal_messages": variant != VARIANT_BASELINE,
        "verbal_commands": variant == VARIANT_COMPLIANCE,
        "state_conveying_utterances": variant == VARIANT_STATE_CONVEYING,
    }


class CreateSessionRequest(BaseModel):
    variant: str
    policy_id: str
    preference: str | None = None


class ActionRequest(BaseModel):
    direction: str


class PolicyRegistry:
    """Solved policies available to play against, keyed by file stem."""

    def __init__(self, policies_dir: str):
        self.policies_dir = policies_dir
        self._policies: dict[str, Policy] = {}
        self._models: dict[str, MomdpModel] = {}
        for name in sorted(os.listdir(policies_dir)):
            if not name.endswith(".json"):
                continue
            policy_id = name[: -len(".json")]
            policy = Policy.load(os.path.join(policies_dir, name))
            self._policies[policy_id] = policy
            self._models[policy_id] = policy.model()

    def ids(self) -> list[str]:
        return sorted(self._policies)

    def get(self, policy_id: str) -> tuple[Policy, MomdpModel]:
        if policy_id not in self._policies:
            raise HTTPException(status_code=404, detail=f"unknown policy {policy_id!r}")
        return self._policies[policy_id], self._models[policy_id]

    def describe(self, policy_id: str) -> dict:
        policy, model = self.get(policy_id)
        return {
            "id": policy_id,
            "variant": policy.variant,
            "model_hash": policy.model_hash,
            "epsilon": policy.epsilon,
            "seed": policy.seed,
            "capabilities": _capabilities(policy.variant),
            "gamma": model.gamma,
            "alpha_grid": list(model.alpha_grid),
            "compliance_grid": list(model.compliance_grid),
        }


@dataclass
class Session:
    """One player's episode in progress, everything needed to resume it."""

    session_id: str
    variant: str
    policy_id: str
    preference: int
    model: MomdpModel
    state: ObservableState
    belief: np.ndarray
    status: str = "active"
    steps: list[TraceStep] = field(default_factory=list)
    last_result: dict | None = None

    def belief_payload(self) -> dict:
        return {
            "joint": belief_to_list(self.belief),
            "alpha_marginal": [float(v) for v in alpha_marginal(self.belief)],
            "compliance_marginal": [float(v) for v in compliance_marginal(self.belief)],
        }

    def descriptor(self) -> dict:
        return {
            "id": self.session_id,
            "variant": self.variant,
            "policy_id": self.policy_id,
            "preference": _DIRECTION_NAMES[self.preference],
            "status": self.status,
            "orientation": self.state.orientation,
            "steps": len(self.steps),
            "terminal": self.state.terminal,
            "goal": self.state.orientation if self.state.terminal else None,
            "belief": self.belief_payload(),
            "capabilities": _capabilities(self.variant),
            "last_step": self.last_result,
        }

    def trace(self) -> InteractionTrace:
        trace = InteractionTrace(
            episode_id=self.session_id,
            variant=self.variant,
            seed=None,
            optimal_goal=self.model.goal_of(self.model.optimal_mode()),
            steps=list(self.steps),
        )
        if self.status == "finished":
            trace.outcome = Outcome(
                goal=self.state.orientation if self.state.terminal else None,
                timed_out=not self.state.terminal,
                discounted_return=_discounted_return(self.model.gamma, self.steps),
                verbal_actions=sum(1 for s in self.steps if s.robot_action.verbal),
                steps=len(self.steps),
            )
        return trace

    def to_json(self) -> dict:
        return {
            "schema": SESSION_SCHEMA,
            "id": self.session_id,
            "variant": self.variant,
            "policy_id": self.policy_id,
            "preference": self.preference,
            "status": self.status,
            "state": self.state.to_json(),
            "belief": belief_to_list(self.belief),
            "steps": [s.to_json() for s in self.steps],
            "last_step": self.last_result,
        }

    @staticmethod
    def from_json(data: dict, model: MomdpModel) -> "Session":
        if data.get("schema") != SESSION_SCHEMA:
            raise ValueError(f"unsupported session schema {data.get('schema')!r}")
        return Session(
            session_id=data["id"],
            variant=data["variant"],
            policy_id=data["policy_id"],
            preference=data["preference"],
            model=model,
            state=ObservableState.from_json(data["state"]),
            belief=belief_from_list(model, data["belief"]),
            status=data["status"],
            steps=[TraceStep.from_json(s) for s in data["steps"]],
            last_result=data.get("last_step"),
        )


class SessionStore:
    """Disk-backed session registry with per-session step serialization."""

    def __init__(self, sessions_dir: str, registry: PolicyRegistry):
        self.sessions_dir = sessions_dir
        self.registry = registry
        os.makedirs(sessions_dir, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _path(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, f"{session_id}.json")

    def _persist(self, session: Session) -> None:
        # Write-then-rename so a crash never leaves a torn session file.
        fd, tmp = tempfile.mkstemp(dir=self.sessions_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(session.to_json(), fh, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, self._path(session.session_id))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def create(self, variant: str, policy_id: str, preference: int) -> Session:
        policy, base_model = self.registry.get(policy_id)
        if policy.variant != variant:
            raise HTTPException(
                status_code=422,
                detail=f"policy {policy_id!r} is for the {policy.variant} variant, not {variant}",
            )
        config = dict(base_model.to_config())
        config["human_preference"] = preference
        model = MomdpModel.from_config(config)
        session = Session(
            session_id=uuid.uuid4().hex,
            variant=variant,
            policy_id=policy_id,
            preference=preference,
            model=model,
            state=model.pre_opening_state(),
            belief=model.prior(),
        )
        with self.lock(session.session_id):
            self._sessions[session.session_id] = session
            self._persist(session)
        return session

    def get(self, session_id: str) -> Session:
        if session_id not in self._sessions:
            path = self._path(session_id)
            if not os.path.exists(path):
                raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            policy, base_model = self.registry.get(data["policy_id"])
            config = dict(base_model.to_config())
            config["human_preference"] = data["preference"]
            self._sessions[session_id] = Session.from_json(data, MomdpModel.from_config(config))
        return self._sessions[session_id]

    def step(self, session_id: str, human_mode: int) -> dict:
        with self.lock(session_id):
            session = self.get(session_id)
            if session.status != "active":
                raise HTTPException(status_code=409, detail=f"session {session_id!r} is finished")
            policy, _model = self.registry.get(session.policy_id)
            model = session.model
            x = session.state
            if not session.steps:
                # Fixed opening: the robot pushes the model-optimal mode before
                # any belief evidence exists, exactly as in simulated episodes.
                a_r = RobotAction.task(model.optimal_mode())
            else:
                a_r = policy.action(x, session.belief)
            a_h = HumanAction(human_mode)
            x_next = model.world_transition(x, a_r, a_h)
            try:
                belief = update_belief(model, session.belief, x, a_r, x_next)
            except InconsistentObservationError:
                belief = session.belief  # off-model click: belief carries over
            reward = model.reward(x, a_r, a_h, x_next)
            step = TraceStep(
                index=len(session.steps),
                state_before=x,
                robot_action=a_r,
                human_action=a_h,
                state_after=x_next,
                belief_after=tuple(belief_to_list(belief)),
                disagreement=model.disagreement(a_r, a_h),
                reward=reward,
            )
            session.steps.append(step)
            session.state = x_next
            session.belief = belief
            if x_next.terminal or len(session.steps) >= SESSION_MAX_STEPS:
                session.status = "finished"
            result = {
                "session_id": session_id,
                "index": step.index,
                "robot_action": a_r.to_json(),
                "utterance": utterance_for(a_r),
                "orientation": x_next.orientation,
                "disagreement": step.disagreement,
                "table_moved": x_next.orientation != x.orientation,
                "reward": reward,
                "terminal": x_next.terminal,
                "goal": x_next.orientation if x_next.terminal else None,
                "status": session.status,
                "belief": session.belief_payload(),
            }
            session.last_result = result
            self._persist(session)
            return result

    def flush_all(self) -> None:
        for session_id in list(self._sessions):
            with self.lock(session_id):
                self._persist(self._sessions[session_id])


def _parse_direction(direction: str) -> int:
    if direction not in DIRECTIONS:
        raise HTTPException(
            status_code=422,
            detail=f"direction must be one of {sorted(DIRECTIONS)}, got {direction!r}",
        )
    return DIRECTIONS[direction]


def create_app(policies_dir: str, sessions_dir: str) -> FastAPI:
    """Build the HTTP app over a directory of policy files."""
    registry = PolicyRegistry(policies_dir)
    store = SessionStore(sessions_dir, registry)
    app = FastAPI(title="coadapt session service", version="1")
    # browser clients are served from their own origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    app.state.store = store
    app.state.registry = registry

    @app.get("/policies")
    def list_policies() -> dict:
        return {"schema": SESSION_SCHEMA, "policies": [registry.describe(pid) for pid in registry.ids()]}

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest) -> dict:
        if request.preference is None:
            _policy, model = registry.get(request.policy_id)
            preference = model.human_preference
        else:
            preference = _parse_direction(request.preference)
        session = store.create(request.variant, request.policy_id, preference)
        return session.descriptor()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        with store.lock(session_id):
            return store.get(session_id).descriptor()

    @app.post("/sessions/{session_id}/action")
    def submit_action(session_id: str, request: ActionRequest) -> dict:
        return store.step(session_id, _parse_direction(request.direction))

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str) -> PlainTextResponse:
        with store.lock(session_id):
            trace = store.get(session_id).trace()
        return PlainTextResponse(trace.to_ndjson(), media_type="application/x-ndjson")

    return app
