"""Belief tracking over the human's latent adaptability and compliance.

A belief is a joint distribution over the (alpha, compliance) grid, held as an
(n_alpha, n_compliance) numpy array with alpha indexing rows. Updates follow the
generative order of a timestep: the observed human action reweights cells by the
likelihood under the pre-step latent values, then (after a state-conveying
utterance only) mass moves through the latent transition matrices, and finally
the result is normalized. Traces and the HTTP service serialize beliefs as flat
row-major lists.
"""

from __future__ import annotations

import numpy as np

from .humans import likelihood_grid
from .model import (
    STATE_CONVEYING,
    VARIANT_BASELINE,
    VARIANT_COMPLIANCE,
    VARIANT_STATE_CONVEYING,
    DomainError,
    HumanAction,
    MomdpModel,
    ObservableState,
    RobotAction,
)

__all__ = [
    "InconsistentObservationError",
    "uniform_belief",
    "point_belief",
    "prior_belief",
    "alpha_marginal",
    "compliance_marginal",
    "belief_to_list",
    "belief_from_list",
    "observed_human_action",
    "update_baseline",
    "update_compliance",
    "update_state_conveying",
    "update_belief",
]


class InconsistentObservationError(ValueError):
    """The observed transition has zero probability under the model."""


def uniform_belief(model: MomdpModel) -> np.ndarray:
    return np.full((model.n_alpha, model.n_compliance), 1.0 / (model.n_alpha * model.n_compliance))


def prior_belief(model: MomdpModel) -> np.ndarray:
    return model.prior()


def point_belief(model: MomdpModel, alpha: float | None = None, compliance: float | None = None) -> np.ndarray:
    """Belief concentrated on given grid values; unspecified axes keep the prior."""
    a = np.asarray(model.alpha_prior, dtype=float)
    c = np.asarray(model.compliance_prior, dtype=float)
    if alpha is not None:
        if alpha not in model.alpha_grid:
            raise ValueError(f"alpha {alpha} is not on the grid {model.alpha_grid}")
        a = np.zeros(model.n_alpha)
        a[model.alpha_grid.index(alpha)] = 1.0
    if compliance is not None:
        if compliance not in model.compliance_grid:
            raise ValueError(f"compliance {compliance} is not on the grid {model.compliance_grid}")
        c = np.zeros(model.n_compliance)
        c[model.compliance_grid.index(compliance)] = 1.0
    return np.outer(a, c)


def alpha_marginal(belief: np.ndarray) -> np.ndarray:
    return belief.sum(axis=1)


def compliance_marginal(belief: np.ndarray) -> np.ndarray:
    return belief.sum(axis=0)


def belief_to_list(belief: np.ndarray) -> list[float]:
    """Flat row-major (alpha-major) serialization used in traces and the API."""
    return [float(v) for v in belief.ravel()]


def belief_from_list(model: MomdpModel, values: list[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    expected = model.n_alpha * model.n_compliance
    if arr.size != expected:
        raise ValueError(f"belief needs {expected} entries, got {arr.size}")
    return arr.reshape(model.n_alpha, model.n_compliance)


def observed_human_action(
    model: MomdpModel, x: ObservableState, a_r: RobotAction, x_next: ObservableState
) -> HumanAction:
    """Recover the human action that produced ``x_next`` from ``x`` under ``a_r``."""
    a_h = HumanAction(x_next.human_modes[-1])
    try:
        predicted = model.world_transition(x, a_r, a_h)
    except DomainError as exc:
        raise InconsistentObservationError(str(exc)) from exc
    if predicted != x_next:
        raise InconsistentObservationError(
            f"no human action explains {x.key()} -> {x_next.key()} under {a_r}"
        )
    return a_h


def _update(
    model: MomdpModel, belief: np.ndarray, x: ObservableState, a_r: RobotAction, x_next: ObservableState
) -> np.ndarray:
    if belief.shape != (model.n_alpha, model.n_compliance):
        raise ValueError(f"belief shape {belief.shape} does not match the latent grid")
    a_h = observed_human_action(model, x, a_r, x_next)
    weighted = likelihood_grid(model, x, a_h) * belief
    if a_r.kind == STATE_CONVEYING:
        weighted = model.alpha_transition_matrix().T @ weighted @ model.compliance_transition_matrix()
    total = float(weighted.sum())
    if total <= 0.0:
        raise InconsistentObservationError(
            f"observation {a_h} at {x.key()} has zero probability under the current belief"
        )
    return weighted / total


def _require_variant(model: MomdpModel, variant: str, op: str) -> None:
    if model.variant != variant:
        raise ValueError(f"{op} expects a {variant} model, got {model.variant}")


def update_baseline(
    model: MomdpModel, belief: np.ndarray, x: ObservableState, a_r: RobotAction, x_next: ObservableState
) -> np.ndarray:
    """Reweight by the adaptability branch only; the compliance marginal never moves."""
    _require_variant(model, VARIANT_BASELINE, "update_baseline")
    return _update(model, belief, x, a_r, x_next)


def update_compliance(
    model: MomdpModel, belief: np.ndarray, x: ObservableState, a_r: RobotAction, x_next: ObservableState
) -> np.ndarray:
    """Reweight by compliance after a command (verbal flag set), by adaptability otherwise."""
    _require_variant(model, VARIANT_COMPLIANCE, "update_compliance")
    return _update(model, belief, x, a_r, x_next)


def update_state_conveying(
    model: MomdpModel, belief: np.ndarray, x: ObservableState, a_r: RobotAction, x_next: ObservableState
) -> np.ndarray:
    """Adaptability reweighting plus latent transitions after a state-conveying action."""
    _require_variant(model, VARIANT_STATE_CONVEYING, "update_state_conveying")
    return _update(model, belief, x, a_r, x_next)


def update_belief(
    model: MomdpModel, belief: np.ndarray, x: ObservableState, a_r: RobotAction, x_next: ObservableState
) -> np.ndarray:
    """Variant-dispatching update used by the simulator, solver and service."""
    if model.variant == VARIANT_BASELINE:
        return update_baseline(model, belief, x, a_r, x_next)
    if model.variant == VARIANT_COMPLIANCE:
        return update_compliance(model, belief, x, a_r, x_next)
    if model.variant == VARIANT_STATE_CONVEYING:
        return update_state_conveying(model, belief, x, a_r, x_next)
    raise ValueError(f"unknown variant {model.variant!r}")
