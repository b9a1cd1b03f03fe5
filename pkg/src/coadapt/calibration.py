"""Synthetic calibration corpus and the default learned model artifacts.

The default priors over adaptability and compliance, and the adaptability
transition used by the state-conveying variant, are not hand-typed constants:
they are produced by running the :mod:`coadapt.learning` estimators over a
small scripted interaction corpus, the same pipeline a real deployment would
run over logged sessions. This module builds that corpus, derives the
artifacts, and writes the packaged default model configurations.

Corpus layout:

* 18 users interacting with a baseline robot; their per-user adaptability
  estimates histogram into the default adaptability prior.
* 15 users interacting with a command-capable robot; their per-user compliance
  estimates histogram into the default compliance prior.
* 40 users playing two rounds each; the per-round adaptability estimate pairs
  fit the adaptability transition rows.

Every trace is a fully valid :class:`coadapt.sim.InteractionTrace` (it opens
with the fixed step 0 and replays cleanly against a uniform-prior model), so
the corpus doubles as test input for the trace and learning tooling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .belief import belief_to_list, update_belief
from .learning import (
    build_prior,
    estimate_adaptability,
    estimate_compliance,
    estimate_transition_alpha,
    snap_to_grid,
)
from .model import (
    VARIANT_BASELINE,
    VARIANT_COMPLIANCE,
    VARIANT_STATE_CONVEYING,
    VARIANTS,
    HumanAction,
    MomdpModel,
    RobotAction,
)
from .sim import InteractionTrace, Outcome, TraceStep, _discounted_return

__all__ = [
    "StudyCorpus",
    "DefaultArtifacts",
    "study_model",
    "study_corpus",
    "learned_artifacts",
    "default_models",
    "default_model",
    "write_default_configs",
    "DEFAULT_DATA_RESOURCE",
]

DEFAULT_DATA_RESOURCE = "table_carry.json"
DATA_SCHEMA = 1

# Per-user scripts as (robot modes or actions, human modes), entry 0 being the
# fixed opening step. Each adaptability script realizes its key exactly as
# switches / disagreement-state steps and ends at a goal; "lure" segments flip
# the robot's push after a switch to set up the next disagreement.
_ADAPTABILITY_SCRIPTS: dict[float, tuple[list[int], list[int]]] = {
    0.0: ([0, 1, 1, 1, 1], [1, 1, 1, 1, 1]),
    0.25: ([0] * 9, [1, 1, 1, 1, 0, 0, 0, 0, 0]),
    0.5: ([0] * 7, [1, 1, 0, 0, 0, 0, 0]),
    0.75: ([0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0], [1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0]),
    1.0: ([0] * 6, [1, 0, 0, 0, 0, 0]),
}

# Compliance scripts realize their key as followed / issued commands. A "v"
# entry is a verbal command toward mode 0; the step after it is the response.
_COMPLIANCE_SCRIPTS: dict[float, tuple[list[str], list[int]]] = {
    1.0: (["t0", "v0", "t0", "t0", "t0", "t0", "t0"], [1, 1, 0, 0, 0, 0, 0]),
    0.5: (
        ["t0", "v0", "t0", "v0", "t0", "t0", "t0", "t0", "t0"],
        [1, 1, 1, 1, 0, 0, 0, 0, 0],
    ),
    0.75: (
        # Three followed commands with a lure segment between each, one ignored.
        ["t0", "v0", "t0", "v0", "t0", "t1", "t1", "t0", "v0", "t0", "t1", "t1", "t0", "v0", "t0", "t0", "t0", "t0", "t0"],
        [1, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0],
    ),
}

# Participant counts per target estimate, fixed so the histogram priors and
# windowed transition rows below come out of the estimators exactly.
_ADAPTABILITY_TARGETS: tuple[float, ...] = (0.0,) * 5 + (0.25,) * 3 + (0.5,) * 2 + (0.75,) * 3 + (1.0,) * 5
_COMPLIANCE_TARGETS: tuple[float, ...] = (0.5,) * 2 + (0.75,) * 2 + (1.0,) * 11
_TRANSITION_PAIRS: tuple[tuple[float, float], ...] = (
    ((0.0, 0.0),) * 7
    + ((0.0, 1.0),) * 10
    + ((0.25, 1.0),) * 3
    + ((0.5, 1.0),) * 15
    + ((0.75, 1.0),) * 2
    + ((1.0, 1.0),) * 3
)


@dataclass(frozen=True)
class StudyCorpus:
    """Scripted traces standing in for logged user-study sessions."""

    baseline: tuple[InteractionTrace, ...]
    compliance: tuple[InteractionTrace, ...]
    transition_rounds: tuple[tuple[InteractionTrace, InteractionTrace], ...]


@dataclass(frozen=True)
class DefaultArtifacts:
    """Learned tables the packaged default configurations are built from."""

    alpha_prior: tuple[float, ...]
    compliance_prior: tuple[float, ...]
    alpha_transition: tuple[tuple[float, ...], ...]


def study_model(variant: str) -> MomdpModel:
    """Model the study robot ran: chosen variant, uniform priors, no learned tables."""
    return MomdpModel(variant=variant)


def _parse_robot_action(entry) -> RobotAction:
    if isinstance(entry, int):
        return RobotAction.task(entry)
    kind, mode = entry[0], int(entry[1])
    if kind == "t":
        return RobotAction.task(mode)
    if kind == "v":
        return RobotAction.verbal_command(mode)
    raise ValueError(f"unknown scripted robot action {entry!r}")


def _scripted_episode(model: MomdpModel, episode_id: str, robot_script, human_script) -> InteractionTrace:
    """Play aligned action scripts and record a full trace.

    Scripts include the opening step and must end exactly at a goal. Human
    entries must have positive probability under the bounded-memory model at
    every step, which a uniform prior guarantees for any choice outside
    agreement states.
    """
    if len(robot_script) != len(human_script):
        raise ValueError(f"{episode_id}: script lengths differ")
    trace = InteractionTrace(
        episode_id=episode_id,
        variant=model.variant,
        seed=None,
        optimal_goal=model.goal_of(model.optimal_mode()),
    )
    belief = model.prior()
    x = model.pre_opening_state()
    for t, (r_entry, h_mode) in enumerate(zip(robot_script, human_script)):
        if x.terminal:
            raise ValueError(f"{episode_id}: script continues past the goal at step {t}")
        a_r = _parse_robot_action(r_entry)
        a_h = HumanAction(h_mode)
        x_next = model.world_transition(x, a_r, a_h)
        belief = update_belief(model, belief, x, a_r, x_next)
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
    if not x.terminal:
        raise ValueError(f"{episode_id}: script ends away from a goal (orientation {x.orientation})")
    trace.outcome = Outcome(
        goal=x.orientation,
        timed_out=False,
        discounted_return=_discounted_return(model.gamma, trace.steps),
        verbal_actions=sum(1 for s in trace.steps if s.robot_action.verbal),
        steps=len(trace.steps),
    )
    return trace


def baseline_condition_traces() -> tuple[InteractionTrace, ...]:
    model = study_model(VARIANT_BASELINE)
    traces = []
    for u, target in enumerate(_ADAPTABILITY_TARGETS, start=1):
        robot, human = _ADAPTABILITY_SCRIPTS[target]
        traces.append(_scripted_episode(model, f"study-baseline-u{u:02d}", robot, human))
    return tuple(traces)


def compliance_condition_traces() -> tuple[InteractionTrace, ...]:
    model = study_model(VARIANT_COMPLIANCE)
    traces = []
    for u, target in enumerate(_COMPLIANCE_TARGETS, start=1):
        robot, human = _COMPLIANCE_SCRIPTS[target]
        traces.append(_scripted_episode(model, f"study-compliance-u{u:02d}", robot, human))
    return tuple(traces)


def transition_round_traces() -> tuple[tuple[InteractionTrace, InteractionTrace], ...]:
    model = study_model(VARIANT_STATE_CONVEYING)
    rounds = []
    for u, (first, second) in enumerate(_TRANSITION_PAIRS, start=1):
        episodes = []
        for r, target in enumerate((first, second), start=1):
            robot, human = _ADAPTABILITY_SCRIPTS[target]
            episodes.append(_scripted_episode(model, f"study-transition-u{u:02d}-r{r}", robot, human))
        rounds.append(tuple(episodes))
    return tuple(rounds)


def study_corpus() -> StudyCorpus:
    return StudyCorpus(
        baseline=baseline_condition_traces(),
        compliance=compliance_condition_traces(),
        transition_rounds=transition_round_traces(),
    )


def learned_artifacts(corpus: StudyCorpus | None = None) -> DefaultArtifacts:
    """Run the full learning pipeline over the corpus."""
    corpus = corpus or study_corpus()
    grid = MomdpModel().alpha_grid
    alpha_prior = build_prior([estimate_adaptability(t) for t in corpus.baseline], grid)
    compliance_prior = build_prior([estimate_compliance(t) for t in corpus.compliance], grid)
    pairs = [
        (snap_to_grid(estimate_adaptability(r1), grid), snap_to_grid(estimate_adaptability(r2), grid))
        for r1, r2 in corpus.transition_rounds
    ]
    alpha_transition = estimate_transition_alpha(pairs, grid)
    return DefaultArtifacts(alpha_prior, compliance_prior, alpha_transition)


def default_models(artifacts: DefaultArtifacts | None = None) -> dict[str, MomdpModel]:
    """Default model per variant; the state-conveying one carries the learned transition."""
    artifacts = artifacts or learned_artifacts()
    models = {}
    for variant in VARIANTS:
        models[variant] = MomdpModel(
            variant=variant,
            alpha_prior=artifacts.alpha_prior,
            compliance_prior=artifacts.compliance_prior,
            alpha_transition=artifacts.alpha_transition if variant == VARIANT_STATE_CONVEYING else None,
        )
    return models


def write_default_configs(path: str, models: dict[str, MomdpModel] | None = None) -> None:
    models = models or default_models()
    payload = {
        "schema": DATA_SCHEMA,
        "variants": {variant: model.to_config() for variant, model in sorted(models.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_model(variant: str, path: str | None = None) -> MomdpModel:
    """Load a packaged (or explicitly given) default model configuration."""
    if path is None:
        text = resources.files("coadapt").joinpath(f"data/{DEFAULT_DATA_RESOURCE}").read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    payload = json.loads(text)
    if payload.get("schema") != DATA_SCHEMA:
        raise ValueError(f"unsupported data schema {payload.get('schema')!r}")
    variants = payload.get("variants", {})
    if variant not in variants:
        raise ValueError(f"no default configuration for variant {variant!r}; have {sorted(variants)}")
    return MomdpModel.from_config(variants[variant])
