"""Bounded-memory model of the human partner.

The human follows a mode and infers the robot's mode from the robot's last k
recorded modes. On agreement they keep pushing their mode. On disagreement they
switch to the robot's mode with probability alpha (their adaptability), unless
the robot's previous action was a verbal command, in which case they follow the
commanded mode with probability c (their compliance). The human never observes
the robot's current-step action, so none of these probabilities depend on it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .model import MODES, HumanAction, MomdpModel, ObservableState

__all__ = [
    "HumanParams",
    "infer_robot_mode",
    "human_policy",
    "likelihood_grid",
    "sample_human_action",
    "apply_state_conveying_jump",
]


@dataclass(frozen=True)
class HumanParams:
    """Latent parameters plus the mode the human currently follows."""

    alpha: float
    compliance: float
    current_mode: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.compliance <= 1.0:
            raise ValueError(f"compliance must lie in [0, 1], got {self.compliance}")
        if self.current_mode not in MODES:
            raise ValueError(f"current_mode must be a mode id, got {self.current_mode}")


def infer_robot_mode(x: ObservableState) -> int:
    """Robot mode as the human reads it: majority vote, most recent on ties."""
    if x.verbal_flag:
        # A command names its target outright; it is recorded last.
        return x.robot_modes[-1]
    counts = Counter(x.robot_modes)
    top = counts.most_common()
    if len(top) > 1 and top[0][1] == top[1][1]:
        return x.robot_modes[-1]
    return top[0][0]


def _switch_target_and_probability(
    x: ObservableState, alpha: float, compliance: float
) -> tuple[int, int, float]:
    """(own mode, robot mode, probability of following the robot mode)."""
    m_h = x.human_modes[-1]
    m_r = infer_robot_mode(x)
    if m_h == m_r:
        return m_h, m_r, 0.0
    return m_h, m_r, compliance if x.verbal_flag else alpha


def human_policy(x: ObservableState, alpha: float, compliance: float, a_h: HumanAction) -> float:
    """Probability the human takes ``a_h`` in state ``x`` given latent values."""
    m_h, m_r, p_switch = _switch_target_and_probability(x, alpha, compliance)
    if a_h.mode == m_r and m_r != m_h:
        return p_switch
    if a_h.mode == m_h:
        return 1.0 - p_switch
    return 0.0


def likelihood_grid(model: MomdpModel, x: ObservableState, a_h: HumanAction) -> np.ndarray:
    """``human_policy`` evaluated over the whole latent grid.

    Returns an (n_alpha, n_compliance) array. With the verbal flag unset the
    likelihood varies only along the alpha axis; with it set, only along the
    compliance axis.
    """
    alpha = np.asarray(model.alpha_grid, dtype=float)[:, None]
    comp = np.asarray(model.compliance_grid, dtype=float)[None, :]
    shape = (model.n_alpha, model.n_compliance)
    m_h = x.human_modes[-1]
    m_r = infer_robot_mode(x)
    if m_h == m_r:
        return np.full(shape, 1.0 if a_h.mode == m_h else 0.0)
    p_switch = np.broadcast_to(comp if x.verbal_flag else alpha, shape)
    if a_h.mode == m_r:
        return np.array(p_switch, dtype=float)
    if a_h.mode == m_h:
        return 1.0 - np.array(p_switch, dtype=float)
    return np.zeros(shape)


def sample_human_action(
    x: ObservableState, params: HumanParams, rng: np.random.Generator
) -> tuple[HumanAction, HumanParams]:
    """Draw the human's action and return it with their updated mode."""
    if params.current_mode != x.human_modes[-1]:
        raise ValueError(
            f"human mode {params.current_mode} out of sync with state record {x.human_modes[-1]}"
        )
    m_h, m_r, p_switch = _switch_target_and_probability(x, params.alpha, params.compliance)
    if m_r != m_h and rng.random() < p_switch:
        return HumanAction(m_r), replace(params, current_mode=m_r)
    return HumanAction(m_h), params


def apply_state_conveying_jump(
    model: MomdpModel, params: HumanParams, rng: np.random.Generator
) -> HumanParams:
    """Resample latent values after a state-conveying utterance.

    Adaptability moves by a draw from its transition row; compliance likewise
    (the default compliance transition is the identity). Requires on-grid
    values, since transition rows are indexed by grid cell.
    """
    try:
        a_idx = model.alpha_grid.index(params.alpha)
        c_idx = model.compliance_grid.index(params.compliance)
    except ValueError as exc:
        raise ValueError(
            f"state-conveying jumps need on-grid latent values, got {(params.alpha, params.compliance)}"
        ) from exc
    new_alpha = model.alpha_grid[rng.choice(model.n_alpha, p=model.alpha_transition_matrix()[a_idx])]
    new_comp = model.compliance_grid[rng.choice(model.n_compliance, p=model.compliance_transition_matrix()[c_idx])]
    return replace(params, alpha=float(new_alpha), compliance=float(new_comp))
