"""Table-carrying domain as a mixed-observability MDP.

Two agents jointly rotate a table from a start orientation of +10 degrees toward
one of two terminal orientations: -90 (the higher-reward goal, reached by rotating
clockwise) or +90 (the lower-reward goal, counterclockwise). Each agent pushes in
the direction of a "mode" (0 = toward -90, 1 = toward +90). The table rotates 20
degrees per step when both push the same way and stays put otherwise. The robot
may also speak instead of pushing: a verbal command names a mode, and a
state-conveying utterance signals confidence without naming one.

The observable state is the table orientation plus bounded histories of the modes
each agent followed over the last k steps (and, in the command-capable variant, a
flag marking that the previous robot action was a command). The human's
adaptability and compliance are latent; beliefs over them live in
:mod:`coadapt.belief`.

Every episode opens with a fixed step 0: the human pushes their preferred goal and
the robot pushes the model-optimal goal. Planning starts at step 1, so "value at
the start" is gamma times the value of the post-opening state.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import product
from typing import Iterator

import numpy as np

ORIENTATIONS: tuple[int, ...] = tuple(range(-90, 91, 20))
ROTATION_STEP = 20
START_ORIENTATION = 10
GOAL_CLOCKWISE = -90
GOAL_COUNTERCLOCKWISE = 90

# Mode 0 pushes clockwise (orientation decreases toward -90); mode 1 pushes
# counterclockwise (toward +90). The start orientation is already rotated
# slightly counterclockwise, which makes the +90 goal look closer.
MODE_CLOCKWISE = 0
MODE_COUNTERCLOCKWISE = 1
MODES: tuple[int, int] = (MODE_CLOCKWISE, MODE_COUNTERCLOCKWISE)
MODE_DELTAS: dict[int, int] = {MODE_CLOCKWISE: -ROTATION_STEP, MODE_COUNTERCLOCKWISE: ROTATION_STEP}
MODE_GOALS: dict[int, int] = {MODE_CLOCKWISE: GOAL_CLOCKWISE, MODE_COUNTERCLOCKWISE: GOAL_COUNTERCLOCKWISE}

VARIANT_BASELINE = "baseline"
VARIANT_COMPLIANCE = "compliance"
VARIANT_STATE_CONVEYING = "state_conveying"
VARIANTS = (VARIANT_BASELINE, VARIANT_COMPLIANCE, VARIANT_STATE_CONVEYING)

TASK = "task"
VERBAL_COMMAND = "verbal_command"
STATE_CONVEYING = "state_conveying"
_KIND_RANK = {TASK: 0, VERBAL_COMMAND: 1, STATE_CONVEYING: 2}

CONFIG_SCHEMA = 1


class DomainError(ValueError):
    """Raised for transitions or actions the domain does not allow."""


class ModelValidationError(ValueError):
    """Raised when a model configuration violates its contracts."""


@dataclass(frozen=True, order=False)
class RobotAction:
    """A robot decision: push a direction, command one, or convey confidence."""

    kind: str
    mode: int | None = None

    @staticmethod
    def task(mode: int) -> "RobotAction":
        return RobotAction(TASK, mode)

    @staticmethod
    def verbal_command(mode: int) -> "RobotAction":
        return RobotAction(VERBAL_COMMAND, mode)

    @staticmethod
    def state_conveying() -> "RobotAction":
        return RobotAction(STATE_CONVEYING, None)

    @property
    def verbal(self) -> bool:
        return self.kind != TASK

    def sort_key(self) -> tuple[int, int]:
        # Fixed tie-break order: task < verbal command < state-conveying,
        # then by mode index.
        return (_KIND_RANK[self.kind], -1 if self.mode is None else self.mode)

    def to_json(self) -> dict:
        return {"kind": self.kind, "mode": self.mode}

    @staticmethod
    def from_json(data: dict) -> "RobotAction":
        return RobotAction(data["kind"], data["mode"])


@dataclass(frozen=True)
class HumanAction:
    """The human always pushes; the action is the mode pushed toward."""

    mode: int

    def to_json(self) -> dict:
        return {"mode": self.mode}

    @staticmethod
    def from_json(data: dict) -> "HumanAction":
        return HumanAction(data["mode"])


HUMAN_ACTIONS: tuple[HumanAction, HumanAction] = (HumanAction(MODE_CLOCKWISE), HumanAction(MODE_COUNTERCLOCKWISE))


@dataclass(frozen=True)
class ObservableState:
    """Fully observed part of the joint state.

    ``human_modes`` and ``robot_modes`` hold the modes each agent followed over
    the last k steps, oldest first. ``verbal_flag`` marks that the robot's
    previous action was a verbal command (tracked only by the command-capable
    variant).
    """

    orientation: int
    human_modes: tuple[int, ...]
    robot_modes: tuple[int, ...]
    verbal_flag: bool = False

    @property
    def terminal(self) -> bool:
        return self.orientation in (GOAL_CLOCKWISE, GOAL_COUNTERCLOCKWISE)

    def key(self) -> str:
        h = "".join(str(m) for m in self.human_modes)
        r = "".join(str(m) for m in self.robot_modes)
        return f"{self.orientation}:{h}:{r}:{int(self.verbal_flag)}"

    def to_json(self) -> dict:
        return {
            "orientation": self.orientation,
            "human_modes": list(self.human_modes),
            "robot_modes": list(self.robot_modes),
            "verbal_flag": self.verbal_flag,
        }

    @staticmethod
    def from_json(data: dict) -> "ObservableState":
        return ObservableState(
            data["orientation"],
            tuple(data["human_modes"]),
            tuple(data["robot_modes"]),
            data["verbal_flag"],
        )


@dataclass(frozen=True)
class Rewards:
    optimal: float = 20.0
    suboptimal: float = 15.0
    other: float = 0.0
    verbal_cost: float = 0.0

    def to_json(self) -> dict:
        return {
            "optimal": self.optimal,
            "suboptimal": self.suboptimal,
            "other": self.other,
            "verbal_cost": self.verbal_cost,
        }


def _check_grid(name: str, grid: tuple[float, ...]) -> None:
    if len(grid) < 2:
        raise ModelValidationError(f"{name} needs at least two points, got {grid!r}")
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ModelValidationError(f"{name} points must lie in [0, 1], got {grid!r}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ModelValidationError(f"{name} must be strictly increasing, got {grid!r}")


def _check_distribution(name: str, dist: np.ndarray, size: int) -> None:
    if dist.shape != (size,):
        raise ModelValidationError(f"{name} must have {size} entries, got shape {dist.shape}")
    if np.any(dist < 0):
        raise ModelValidationError(f"{name} has negative mass")
    if abs(float(dist.sum()) - 1.0) > 1e-9:
        raise ModelValidationError(f"{name} must sum to 1 within 1e-9, sums to {dist.sum()!r}")


def _check_stochastic_matrix(name: str, mat: np.ndarray, size: int) -> None:
    if mat.shape != (size, size):
        raise ModelValidationError(f"{name} must be {size}x{size}, got {mat.shape}")
    if np.any(mat < 0):
        raise ModelValidationError(f"{name} has negative entries")
    rows = mat.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-9):
        raise ModelValidationError(f"{name} rows must sum to 1 within 1e-9, got {rows!r}")


@dataclass
class MomdpModel:
    """Domain dynamics, rewards, latent grids and priors for one variant."""

    variant: str = VARIANT_COMPLIANCE
    k: int = 1
    gamma: float = 0.9
    rewards: Rewards = field(default_factory=Rewards)
    alpha_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    compliance_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    alpha_prior: tuple[float, ...] | None = None
    compliance_prior: tuple[float, ...] | None = None
    alpha_transition: tuple[tuple[float, ...], ...] | None = None
    compliance_transition: tuple[tuple[float, ...], ...] | None = None
    human_preference: int = MODE_COUNTERCLOCKWISE

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ModelValidationError(f"unknown variant {self.variant!r}")
        if self.k < 1:
            raise ModelValidationError(f"history length k must be >= 1, got {self.k}")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelValidationError(f"gamma must satisfy 0 <= gamma < 1, got {self.gamma}")
        if self.human_preference not in MODES:
            raise ModelValidationError(f"human_preference must be a mode id, got {self.human_preference}")
        _check_grid("alpha_grid", self.alpha_grid)
        _check_grid("compliance_grid", self.compliance_grid)
        n_a, n_c = len(self.alpha_grid), len(self.compliance_grid)
        if self.alpha_prior is None:
            self.alpha_prior = tuple(1.0 / n_a for _ in range(n_a))
        if self.compliance_prior is None:
            self.compliance_prior = tuple(1.0 / n_c for _ in range(n_c))
        if self.alpha_transition is None:
            self.alpha_transition = tuple(tuple(float(i == j) for j in range(n_a)) for i in range(n_a))
        if self.compliance_transition is None:
            self.compliance_transition = tuple(tuple(float(i == j) for j in range(n_c)) for i in range(n_c))
        _check_distribution("alpha_prior", np.asarray(self.alpha_prior, dtype=float), n_a)
        _check_distribution("compliance_prior", np.asarray(self.compliance_prior, dtype=float), n_c)
        _check_stochastic_matrix("alpha_transition", np.asarray(self.alpha_transition, dtype=float), n_a)
        _check_stochastic_matrix("compliance_transition", np.asarray(self.compliance_transition, dtype=float), n_c)

    # -- latent structure ---------------------------------------------------

    @property
    def n_alpha(self) -> int:
        return len(self.alpha_grid)

    @property
    def n_compliance(self) -> int:
        return len(self.compliance_grid)

    def prior(self) -> np.ndarray:
        """Joint prior over (alpha, compliance), alpha indexing rows."""
        return np.outer(
            np.asarray(self.alpha_prior, dtype=float),
            np.asarray(self.compliance_prior, dtype=float),
        )

    def alpha_transition_matrix(self) -> np.ndarray:
        return np.asarray(self.alpha_transition, dtype=float)

    def compliance_transition_matrix(self) -> np.ndarray:
        return np.asarray(self.compliance_transition, dtype=float)

    # -- actions ------------------------------------------------------------

    def robot_actions(self) -> list[RobotAction]:
        """Variant action set in canonical (tie-break) order."""
        acts = [RobotAction.task(m) for m in MODES]
        if self.variant == VARIANT_COMPLIANCE:
            acts += [RobotAction.verbal_command(m) for m in MODES]
        elif self.variant == VARIANT_STATE_CONVEYING:
            acts.append(RobotAction.state_conveying())
        return acts

    def actions(self, x: ObservableState) -> list[RobotAction]:
        if x.terminal:
            return []
        return self.robot_actions()

    def _check_action(self, a_r: RobotAction) -> None:
        if a_r.kind == TASK:
            if a_r.mode not in MODES:
                raise DomainError(f"task action needs a mode id, got {a_r!r}")
        elif a_r.kind == VERBAL_COMMAND:
            if self.variant != VARIANT_COMPLIANCE:
                raise DomainError(f"verbal commands are not available in the {self.variant} variant")
            if a_r.mode not in MODES:
                raise DomainError(f"verbal command needs a target mode, got {a_r!r}")
        elif a_r.kind == STATE_CONVEYING:
            if self.variant != VARIANT_STATE_CONVEYING:
                raise DomainError(f"state-conveying actions are not available in the {self.variant} variant")
        else:
            raise DomainError(f"unknown robot action kind {a_r.kind!r}")

    # -- dynamics -----------------------------------------------------------

    def world_transition(self, x: ObservableState, a_r: RobotAction, a_h: HumanAction) -> ObservableState:
        """Deterministic next observable state for a joint action.

        The table rotates one 20-degree step only when both agents push the
        same direction. Mode histories record the mode implied by each action:
        a command records its target, a state-conveying utterance records the
        robot's previous mode (it names none itself).
        """
        if x.terminal:
            raise DomainError(f"no transitions out of terminal orientation {x.orientation}")
        self._check_action(a_r)
        if a_h.mode not in MODES:
            raise DomainError(f"human action needs a mode id, got {a_h!r}")

        orientation = x.orientation
        if a_r.kind == TASK and a_r.mode == a_h.mode:
            orientation += MODE_DELTAS[a_h.mode]

        if a_r.kind == STATE_CONVEYING:
            robot_mode = x.robot_modes[-1]
        else:
            robot_mode = a_r.mode
        human_modes = x.human_modes[1:] + (a_h.mode,)
        robot_modes = x.robot_modes[1:] + (robot_mode,)
        verbal_flag = a_r.kind == VERBAL_COMMAND if self.variant == VARIANT_COMPLIANCE else False
        return ObservableState(orientation, human_modes, robot_modes, verbal_flag)

    def goal_of(self, mode: int) -> int:
        """Terminal orientation a mode rotates toward."""
        return MODE_GOALS[mode]

    def goal_reward(self, goal: int) -> float:
        """Reward paid on reaching a goal orientation."""
        return self.rewards.optimal if goal == GOAL_CLOCKWISE else self.rewards.suboptimal

    def reward(self, x: ObservableState, a_r: RobotAction, a_h: HumanAction, x_next: ObservableState) -> float:
        """Goal reward on first reaching a terminal orientation, minus any verbal cost."""
        r = self.goal_reward(x_next.orientation) if x_next.terminal and not x.terminal else self.rewards.other
        if a_r.verbal:
            r -= self.rewards.verbal_cost
        return r

    def optimal_mode(self) -> int:
        """Mode a fully cooperative pair should follow from the start orientation."""
        best_mode, best_value = MODE_CLOCKWISE, -np.inf
        for mode in MODES:
            steps = abs(MODE_GOALS[mode] - START_ORIENTATION) // ROTATION_STEP
            value = self.gamma ** steps * self.goal_reward(MODE_GOALS[mode])
            if value > best_value:
                best_mode, best_value = mode, value
        return best_mode

    def disagreement(self, a_r: RobotAction, a_h: HumanAction) -> bool:
        """True when the agents push opposite rotations (the table stays put)."""
        return a_r.kind == TASK and a_r.mode != a_h.mode

    # -- episode anchors ----------------------------------------------------

    def pre_opening_state(self) -> ObservableState:
        """State before the fixed opening step; both histories show the human's preference."""
        return ObservableState(START_ORIENTATION, (self.human_preference,) * self.k, (self.human_preference,) * self.k, False)

    def opening_actions(self) -> tuple[RobotAction, HumanAction]:
        """Fixed step-0 joint action: robot pushes the optimal goal, human their preference."""
        return RobotAction.task(self.optimal_mode()), HumanAction(self.human_preference)

    def initial_state(self) -> ObservableState:
        """Observable state after the opening step, where planning begins."""
        a_r, a_h = self.opening_actions()
        return self.world_transition(self.pre_opening_state(), a_r, a_h)

    # -- enumeration ---------------------------------------------------------

    def enumerate_observable_states(self) -> list[ObservableState]:
        """All observable states in canonical order (orientation, histories, flag)."""
        flags = (False, True) if self.variant == VARIANT_COMPLIANCE else (False,)
        states = []
        for orientation in ORIENTATIONS:
            for human in product(MODES, repeat=self.k):
                for robot in product(MODES, repeat=self.k):
                    for flag in flags:
                        states.append(ObservableState(orientation, human, robot, flag))
        return states

    def nonterminal_states(self) -> Iterator[ObservableState]:
        return (x for x in self.enumerate_observable_states() if not x.terminal)

    # -- configuration ------------------------------------------------------

    def to_config(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA,
            "variant": self.variant,
            "k": self.k,
            "gamma": self.gamma,
            "rewards": self.rewards.to_json(),
            "alpha_grid": list(self.alpha_grid),
            "compliance_grid": list(self.compliance_grid),
            "alpha_prior": list(self.alpha_prior),
            "compliance_prior": list(self.compliance_prior),
            "alpha_transition": [list(row) for row in self.alpha_transition],
            "compliance_transition": [list(row) for row in self.compliance_transition],
            "human_preference": self.human_preference,
        }

    @staticmethod
    def from_config(config: dict) -> "MomdpModel":
        if config.get("schema") != CONFIG_SCHEMA:
            raise ModelValidationError(f"unsupported config schema {config.get('schema')!r}")
        rewards = Rewards(**config.get("rewards", {}))
        return MomdpModel(
            variant=config["variant"],
            k=config.get("k", 1),
            gamma=config.get("gamma", 0.9),
            rewards=rewards,
            alpha_grid=tuple(config["alpha_grid"]),
            compliance_grid=tuple(config["compliance_grid"]),
            alpha_prior=tuple(config["alpha_prior"]) if config.get("alpha_prior") is not None else None,
            compliance_prior=tuple(config["compliance_prior"]) if config.get("compliance_prior") is not None else None,
            alpha_transition=tuple(tuple(row) for row in config["alpha_transition"])
            if config.get("alpha_transition") is not None
            else None,
            compliance_transition=tuple(tuple(row) for row in config["compliance_transition"])
            if config.get("compliance_transition") is not None
            else None,
            human_preference=config.get("human_preference", MODE_COUNTERCLOCKWISE),
        )

    @staticmethod
    def load(path: str) -> "MomdpModel":
        with open(path, "r", encoding="utf-8") as fh:
            return MomdpModel.from_config(json.load(fh))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_config(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def model_hash(self) -> str:
        canonical = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
