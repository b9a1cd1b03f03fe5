"""Closed-loop episode execution and population experiments.

``run_episode`` plays a policy against a simulated human and records an
``InteractionTrace``: one header record, one record per step (including the
fixed opening step 0), and an outcome footer. Traces serialize to
newline-delimited JSON so logged sessions, simulated or human-played, feed the
learning estimators unchanged. ``run_population`` samples latent profiles from
a prior and aggregates adaptation statistics across episodes.

Simulated humans keep their latent values fixed for the whole episode, except
that a state-conveying utterance redraws adaptability (and compliance, if a
compliance transition is configured) from the model's latent transition rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .belief import InconsistentObservationError, belief_from_list, belief_to_list, update_belief
from .humans import HumanParams, apply_state_conveying_jump, sample_human_action
from .model import (
    GOAL_CLOCKWISE,
    STATE_CONVEYING,
    DomainError,
    HumanAction,
    MomdpModel,
    ObservableState,
    RobotAction,
)

__all__ = [
    "TraceStep",
    "Outcome",
    "InteractionTrace",
    "TraceInconsistencyError",
    "traces_from_ndjson",
    "PopulationStats",
    "run_episode",
    "run_population",
    "adaptation_metric",
    "verify_trace",
    "InsistPolicy",
    "OpposePolicy",
    "ScriptedPolicy",
    "population_csv",
    "POPULATION_CSV_HEADER",
]

TRACE_SCHEMA = 1


class TraceInconsistencyError(DomainError):
    """A trace fails replay against the model that produced it."""


@dataclass(frozen=True)
class TraceStep:
    """One timestep: world before/after, both actions, belief after update."""

    index: int
    state_before: ObservableState
    robot_action: RobotAction
    human_action: HumanAction
    state_after: ObservableState
    belief_after: tuple[float, ...]
    disagreement: bool
    reward: float

    def to_json(self) -> dict:
        return {
            "record": "step",
            "index": self.index,
            "state_before": self.state_before.to_json(),
            "robot_action": self.robot_action.to_json(),
            "human_action": {"mode": self.human_action.mode},
            "state_after": self.state_after.to_json(),
            "belief_after": list(self.belief_after),
            "disagreement": self.disagreement,
            "reward": self.reward,
        }

    @staticmethod
    def from_json(data: dict) -> "TraceStep":
        return TraceStep(
            index=data["index"],
            state_before=ObservableState.from_json(data["state_before"]),
            robot_action=RobotAction.from_json(data["robot_action"]),
            human_action=HumanAction(data["human_action"]["mode"]),
            state_after=ObservableState.from_json(data["state_after"]),
            belief_after=tuple(data["belief_after"]),
            disagreement=data["disagreement"],
            reward=data["reward"],
        )


@dataclass(frozen=True)
class Outcome:
    """Episode summary: where it ended and what it was worth."""

    goal: int | None
    timed_out: bool
    discounted_return: float
    verbal_actions: int
    steps: int

    def to_json(self) -> dict:
        return {
            "record": "outcome",
            "goal": self.goal,
            "timed_out": self.timed_out,
            "discounted_return": self.discounted_return,
            "verbal_actions": self.verbal_actions,
            "steps": self.steps,
        }

    @staticmethod
    def from_json(data: dict) -> "Outcome":
        return Outcome(
            goal=data["goal"],
            timed_out=data["timed_out"],
            discounted_return=data["discounted_return"],
            verbal_actions=data["verbal_actions"],
            steps=data["steps"],
        )


@dataclass
class InteractionTrace:
    """Header metadata plus step records plus an outcome footer."""

    episode_id: str
    variant: str
    seed: int | None
    optimal_goal: int
    human: dict | None = None
    steps: list[TraceStep] = field(default_factory=list)
    outcome: Outcome | None = None

    def header_json(self) -> dict:
        return {
            "record": "header",
            "schema": TRACE_SCHEMA,
            "episode_id": self.episode_id,
            "variant": self.variant,
            "seed": self.seed,
            "optimal_goal": self.optimal_goal,
            "human": self.human,
        }

    def to_ndjson(self) -> str:
        records = [self.header_json()]
        records.extend(step.to_json() for step in self.steps)
        if self.outcome is not None:
            records.append(self.outcome.to_json())
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)

    @staticmethod
    def from_ndjson(text: str) -> "InteractionTrace":
        header = None
        steps: list[TraceStep] = []
        outcome = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            kind = data.get("record")
            if kind == "header":
                if data.get("schema") != TRACE_SCHEMA:
                    raise TraceInconsistencyError(f"unsupported trace schema {data.get('schema')!r}")
                header = data
            elif kind == "step":
                steps.append(TraceStep.from_json(data))
            elif kind == "outcome":
                outcome = Outcome.from_json(data)
            else:
                raise TraceInconsistencyError(f"unknown trace record {kind!r}")
        if header is None:
            raise TraceInconsistencyError("trace has no header record")
        return InteractionTrace(
            episode_id=header["episode_id"],
            variant=header["variant"],
            seed=header["seed"],
            optimal_goal=header["optimal_goal"],
            human=header.get("human"),
            steps=steps,
            outcome=outcome,
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ndjson())

    @staticmethod
    def load(path: str) -> "InteractionTrace":
        with open(path, "r", encoding="utf-8") as fh:
            return InteractionTrace.from_ndjson(fh.read())


def traces_from_ndjson(text: str) -> list[InteractionTrace]:
    """Parse concatenated traces; each header record starts a new one."""
    chunks: list[list[str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if json.loads(line).get("record") == "header":
            chunks.append([])
        if not chunks:
            raise TraceInconsistencyError("trace data starts without a header record")
        chunks[-1].append(line)
    return [InteractionTrace.from_ndjson("\n".join(chunk)) for chunk in chunks]


def adaptation_metric(trace: InteractionTrace) -> bool:
    """True iff the episode ended at the robot's originally optimal goal."""
    return trace.outcome is not None and trace.outcome.goal == trace.optimal_goal


def _discounted_return(gamma: float, steps: Sequence[TraceStep]) -> float:
    return sum(step.reward * gamma**step.index for step in steps)


def verify_trace(model: MomdpModel, trace: InteractionTrace, atol: float = 1e-10) -> None:
    """Replay a trace against the model; raise on the first inconsistency.

    Checks step contiguity, world transitions, rewards, the per-variant belief
    recursion from the prior, and the outcome record. Steps whose observed
    human action has zero probability under the model (possible when a live
    human plays) must carry the previous belief forward unchanged, matching
    what the service does on such steps.
    """
    if trace.variant != model.variant:
        raise TraceInconsistencyError(f"trace variant {trace.variant} != model variant {model.variant}")
    belief = model.prior()
    expected_x = model.pre_opening_state()
    for i, step in enumerate(trace.steps):
        if step.index != i:
            raise TraceInconsistencyError(f"step index {step.index} at position {i}")
        if step.state_before != expected_x:
            raise TraceInconsistencyError(f"step {i} starts at {step.state_before.key()}, expected {expected_x.key()}")
        x2 = model.world_transition(step.state_before, step.robot_action, step.human_action)
        if x2 != step.state_after:
            raise TraceInconsistencyError(f"step {i} records successor {step.state_after.key()}, expected {x2.key()}")
        reward = model.reward(step.state_before, step.robot_action, step.human_action, x2)
        if abs(reward - step.reward) > atol:
            raise TraceInconsistencyError(f"step {i} reward {step.reward} != {reward}")
        if step.disagreement != model.disagreement(step.robot_action, step.human_action):
            raise TraceInconsistencyError(f"step {i} disagreement flag mismatch")
        try:
            belief = update_belief(model, belief, step.state_before, step.robot_action, x2)
        except InconsistentObservationError:
            pass  # off-model human action: Bayes is undefined, belief carries over
        recorded = belief_from_list(model, list(step.belief_after))
        if np.max(np.abs(recorded - belief)) > atol:
            raise TraceInconsistencyError(f"step {i} belief differs from replayed update")
        expected_x = x2
    if trace.outcome is not None:
        final_goal = expected_x.orientation if expected_x.terminal else None
        if trace.outcome.goal != final_goal:
            raise TraceInconsistencyError(f"outcome goal {trace.outcome.goal} != final orientation {final_goal}")
        if trace.outcome.timed_out == expected_x.terminal:
            raise TraceInconsistencyError("timed_out flag contradicts the final state")
        ret = _discounted_return(model.gamma, trace.steps)
        if abs(ret - trace.outcome.discounted_return) > 1e-9:
            raise TraceInconsistencyError(
                f"outcome return {trace.outcome.discounted_return} != recomputed {ret}"
            )
        verbal = sum(1 for s in trace.steps if s.robot_action.verbal)
        if verbal != trace.outcome.verbal_actions:
            raise TraceInconsistencyError(f"outcome verbal count {trace.outcome.verbal_actions} != {verbal}")


# -- scripted policies for corpora and tests ----------------------------------


class InsistPolicy:
    """Always pushes one fixed task mode."""

    def __init__(self, mode: int):
        self.mode = mode

    def action(self, x: ObservableState, belief: np.ndarray) -> RobotAction:
        return RobotAction.task(self.mode)


class OpposePolicy:
    """Always pushes the mode opposite the human's last one.

    Every step is a disagreement, so the table never moves; useful for
    generating traces with a controlled number of adaptability trials.
    """

    def action(self, x: ObservableState, belief: np.ndarray) -> RobotAction:
        return RobotAction.task(1 - x.human_modes[-1])


class ScriptedPolicy:
    """Plays a fixed action sequence, then repeats the final action."""

    def __init__(self, actions: Sequence[RobotAction]):
        if not actions:
            raise ValueError("scripted policy needs at least one action")
        self.actions = list(actions)
        self._i = 0

    def action(self, x: ObservableState, belief: np.ndarray) -> RobotAction:
        a = self.actions[min(self._i, len(self.actions) - 1)]
        self._i += 1
        return a


def _policy_action(policy, x: ObservableState, belief: np.ndarray) -> RobotAction:
    return policy.action(x, belief)


def run_episode(
    policy,
    model: MomdpModel,
    human: HumanParams,
    seed: int = 0,
    max_steps: int = 20,
    episode_id: str | None = None,
) -> InteractionTrace:
    """Play one episode; fully deterministic given the seed.

    Each step the robot acts on the belief carried over from the previous
    step, the simulated human acts per its bounded-memory rule, the world
    advances, and the belief updates from the observed human action. The
    fixed opening counts toward ``max_steps``; episodes that hit the cap
    without reaching a goal are marked timed out.
    """
    if hasattr(policy, "variant") and policy.variant != model.variant:
        raise DomainError(f"policy variant {policy.variant} != model variant {model.variant}")
    rng = np.random.default_rng(seed)
    optimal_goal = model.goal_of(model.optimal_mode())
    trace = InteractionTrace(
        episode_id=episode_id or f"ep-{model.variant}-{seed}",
        variant=model.variant,
        seed=seed,
        optimal_goal=optimal_goal,
        human={"alpha": human.alpha, "compliance": human.compliance},
    )

    belief = model.prior()
    x = model.pre_opening_state()
    a_r0, a_h0 = model.opening_actions()
    x_next = model.world_transition(x, a_r0, a_h0)
    belief = update_belief(model, belief, x, a_r0, x_next)
    trace.steps.append(
        TraceStep(
            index=0,
            state_before=x,
            robot_action=a_r0,
            human_action=a_h0,
            state_after=x_next,
            belief_after=tuple(belief_to_list(belief)),
            disagreement=model.disagreement(a_r0, a_h0),
            reward=model.reward(x, a_r0, a_h0, x_next),
        )
    )
    x = x_next
    params = human

    for t in range(1, max_steps):
        if x.terminal:
            break
        a_r = _policy_action(policy, x, belief)
        a_h, params = sample_human_action(x, params, rng)
        x_next = model.world_transition(x, a_r, a_h)
        belief = update_belief(model, belief, x, a_r, x_next)
        if a_r.kind == STATE_CONVEYING:
            params = apply_state_conveying_jump(model, params, rng)
        trace.steps.append(
            TraceStep(
                index=t,
                state_before=x,
                robot_action=a_r,
                human_action=a_h,
                state_after=x_next,
                belief_after=tuple(belief_to_list(belief)),
                disagreement=model.disagreement(a_r, a_h),
                reward=model.reward(x, a_r, a_h, x_next),
            )
        )
        x = x_next

    trace.outcome = Outcome(
        goal=x.orientation if x.terminal else None,
        timed_out=not x.terminal,
        discounted_return=_discounted_return(model.gamma, trace.steps),
        verbal_actions=sum(1 for s in trace.steps if s.robot_action.verbal),
        steps=len(trace.steps),
    )
    return trace


# -- population experiments ----------------------------------------------------


@dataclass(frozen=True)
class PopulationStats:
    """Aggregate outcomes over sampled users, with a Wilson 95% interval."""

    variant: str
    n_users: int
    seed: int
    adapted: int
    adaptation_rate: float
    ci_low: float
    ci_high: float
    mean_discounted_return: float
    mean_verbal_actions: float

    def to_csv_row(self) -> str:
        return ",".join(
            [
                self.variant,
                str(self.n_users),
                str(self.seed),
                f"{self.adaptation_rate:.6f}",
                f"{self.ci_low:.6f}",
                f"{self.ci_high:.6f}",
                f"{self.mean_discounted_return:.6f}",
                f"{self.mean_verbal_actions:.6f}",
            ]
        )


POPULATION_CSV_HEADER = (
    "variant,n_users,seed,adaptation_rate,ci_low,ci_high,mean_discounted_return,mean_verbal_actions"
)


def population_csv(stats: Iterable[PopulationStats]) -> str:
    lines = [POPULATION_CSV_HEADER]
    lines.extend(s.to_csv_row() for s in stats)
    return "\n".join(lines) + "\n"


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    # boundary endpoints are algebraically exact; keep them out of float drift
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return (low, high)


def run_population(
    policy,
    model: MomdpModel,
    prior: np.ndarray | None = None,
    n_users: int = 100,
    seed: int = 0,
    max_steps: int = 20,
    on_trace: Callable[[InteractionTrace], None] | None = None,
) -> PopulationStats:
    """Sample latent profiles from the prior and run one episode per user.

    The sampling prior defaults to the model's own; passing a different one
    simulates a mismatched population against the same policy. Aggregation is
    in episode order, so results are deterministic given the seed.
    """
    if n_users < 1:
        raise ValueError("n_users must be at least 1")
    if prior is None:
        prior = model.prior()
    prior = np.asarray(prior, dtype=float)
    master = np.random.default_rng(seed)
    flat = prior.ravel() / prior.sum()
    n_c = len(model.compliance_grid)

    adapted = 0
    total_return = 0.0
    total_verbal = 0
    for i in range(n_users):
        cell = int(master.choice(flat.size, p=flat))
        alpha = model.alpha_grid[cell // n_c]
        comp = model.compliance_grid[cell % n_c]
        params = HumanParams(alpha=alpha, compliance=comp, current_mode=model.human_preference)
        episode_seed = int(master.integers(0, 2**31 - 1))
        trace = run_episode(
            policy,
            model,
            params,
            seed=episode_seed,
            max_steps=max_steps,
            episode_id=f"pop-{model.variant}-{seed}-{i}",
        )
        if adaptation_metric(trace):
            adapted += 1
        total_return += trace.outcome.discounted_return
        total_verbal += trace.outcome.verbal_actions
        if on_trace is not None:
            on_trace(trace)
    low, high = wilson_interval(adapted, n_users)
    return PopulationStats(
        variant=model.variant,
        n_users=n_users,
        seed=seed,
        adapted=adapted,
        adaptation_rate=adapted / n_users,
        ci_low=low,
        ci_high=high,
        mean_discounted_return=total_return / n_users,
        mean_verbal_actions=total_verbal / n_users,
    )
