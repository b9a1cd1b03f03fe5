"""Estimators that turn interaction logs into model parameters.

Adaptability is estimated as the fraction of observed disagreements the human
resolved by switching to the robot's mode; compliance as the fraction of verbal
commands the human followed on the step after the utterance. Per-user estimates
are binned onto the latent grid to build priors, and paired round-over-round
adaptability estimates fit the latent transition matrix applied by
state-conveying actions.

All functions are pure batch operations over immutable traces. A "trace" is
anything exposing ``steps`` where each step carries ``state_before``,
``robot_action`` and ``human_action`` (the simulator's trace type does);
estimators also accept an iterable of traces and pool the counts.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .humans import infer_robot_mode
from .model import VERBAL_COMMAND, DomainError

__all__ = [
    "NoEvidenceError",
    "estimate_adaptability",
    "estimate_compliance",
    "build_prior",
    "estimate_transition_alpha",
    "snap_to_grid",
    "DEFAULT_GRID",
]

DEFAULT_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


class NoEvidenceError(DomainError):
    """A trace or collection contains no events the estimator can count."""


def _traces(trace_or_traces) -> list:
    if hasattr(trace_or_traces, "steps"):
        return [trace_or_traces]
    return list(trace_or_traces)


def estimate_adaptability(trace_or_traces) -> float:
    """Fraction of disagreement steps resolved by the human switching modes.

    Counts only steps without a pending verbal command (those trials measure
    compliance, not adaptability). Steps where human and robot modes already
    agree carry no evidence and are ignored, so inserting agreement-only steps
    never changes the estimate.
    """
    switches = 0
    trials = 0
    for trace in _traces(trace_or_traces):
        for step in trace.steps:
            x = step.state_before
            if x.verbal_flag:
                continue
            m_h = x.human_modes[-1]
            m_r = infer_robot_mode(x)
            if m_h == m_r:
                continue
            trials += 1
            if step.human_action.mode == m_r:
                switches += 1
    if trials == 0:
        raise NoEvidenceError("no disagreement steps to estimate adaptability from")
    return switches / trials


def estimate_compliance(trace_or_traces) -> float:
    """Fraction of issued verbal commands followed on the next step."""
    commands = 0
    followed = 0
    for trace in _traces(trace_or_traces):
        steps = list(trace.steps)
        for i, step in enumerate(steps):
            a_r = step.robot_action
            if a_r.kind != VERBAL_COMMAND:
                continue
            commands += 1
            if i + 1 >= len(steps):
                continue
            response = steps[i + 1]
            x = response.state_before
            if x.verbal_flag and x.human_modes[-1] != a_r.mode and response.human_action.mode == a_r.mode:
                followed += 1
    if commands == 0:
        raise NoEvidenceError("no verbal commands to estimate compliance from")
    return followed / commands


def snap_to_grid(value: float, grid: Sequence[float] = DEFAULT_GRID) -> float:
    """Nearest grid value; exact midpoints round to the larger neighbor."""
    best = grid[0]
    best_d = abs(value - grid[0])
    for g in grid[1:]:
        d = abs(value - g)
        if d <= best_d:
            best, best_d = g, d
    return best


def build_prior(estimates: Iterable[float], grid: Sequence[float] = DEFAULT_GRID) -> tuple[float, ...]:
    """Normalized histogram of estimates snapped onto the grid."""
    grid = tuple(grid)
    if list(grid) != sorted(grid) or len(set(grid)) != len(grid):
        raise ValueError("grid must be strictly increasing")
    values = list(estimates)
    if not values:
        raise NoEvidenceError("cannot build a prior from zero estimates")
    counts = [0] * len(grid)
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"estimate {v} outside [0, 1]")
        counts[grid.index(snap_to_grid(v, grid))] += 1
    total = len(values)
    return tuple(c / total for c in counts)


def estimate_transition_alpha(
    pairs: Iterable[tuple[float, float]],
    grid: Sequence[float] = DEFAULT_GRID,
    delta: float = 0.25,
) -> tuple[tuple[float, ...], ...]:
    """Latent transition rows from per-user (before, after) adaptability pairs.

    Row i pools every pair whose "before" value lies within ``delta`` of
    grid[i] (window inclusive at both ends) and histograms the "after" values;
    rows with an empty window fall back to identity. Pair values must lie on
    the grid; snap raw estimates first.
    """
    grid = tuple(grid)
    pair_list = [(float(a), float(b)) for a, b in pairs]
    if not pair_list:
        raise NoEvidenceError("cannot fit a transition matrix from zero pairs")
    for a, b in pair_list:
        if a not in grid or b not in grid:
            raise ValueError(f"pair ({a}, {b}) is not on the grid; snap estimates first")
    rows = []
    for i, g in enumerate(grid):
        members = [b for a, b in pair_list if abs(a - g) <= delta]
        if not members:
            row = [0.0] * len(grid)
            row[i] = 1.0
        else:
            counts = [0] * len(grid)
            for b in members:
                counts[grid.index(b)] += 1
            row = [c / len(members) for c in counts]
        rows.append(tuple(row))
    return tuple(rows)
