"""Policy solver and exact planning oracle.

Two routes to values live here. ``solve`` runs point-based value iteration over
(observable state, belief) pairs sampled from the model's own dynamics: each
observable state carries a set of belief points and a set of alpha-vectors (one
linear value piece per backed-up point), and Bellman backups sweep the sampled
points until the value at the initial belief stops moving. ``expectimax`` is an
exact finite-horizon recursion over the same dynamics, feasible for the small
table-carry instances; it serves as the reference the solver is tested against.

Values quoted "at the start" include the fixed opening step: the reported number
is the opening reward plus gamma times the value of the post-opening state.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .humans import likelihood_grid
from .model import (
    HUMAN_ACTIONS,
    STATE_CONVEYING,
    VARIANT_COMPLIANCE,
    DomainError,
    MomdpModel,
    ObservableState,
    RobotAction,
)

__all__ = [
    "AlphaVector",
    "Policy",
    "PolicyModelMismatchError",
    "solve",
    "backup",
    "best_action",
    "expectimax",
    "ExpectimaxResult",
    "Oracle",
    "truncation_horizon",
    "start_value_expectimax",
    "policy_start_value",
]

POLICY_SCHEMA = 1
_TIE_EPS = 1e-12


class PolicyModelMismatchError(ValueError):
    """A policy file was produced for a different model configuration."""


@dataclass(frozen=True)
class AlphaVector:
    """One linear piece of the value function, tagged with its greedy action."""

    values: np.ndarray
    action: RobotAction

    def to_json(self) -> dict:
        return {"action": self.action.to_json(), "values": [float(v) for v in self.values]}

    @staticmethod
    def from_json(data: dict) -> "AlphaVector":
        return AlphaVector(np.asarray(data["values"], dtype=float), RobotAction.from_json(data["action"]))


@dataclass
class Policy:
    """Alpha-vector sets per observable state, plus provenance metadata.

    The producing model's configuration is embedded so a policy file alone is
    enough to rebuild the model for simulation or serving.
    """

    variant: str
    model_hash: str
    epsilon: float
    seed: int
    vectors: dict[str, list[AlphaVector]]
    stats: dict = field(default_factory=dict)
    model_config: dict | None = None

    def model(self) -> MomdpModel:
        """Rebuild the model this policy was solved for."""
        if self.model_config is None:
            raise PolicyModelMismatchError("policy does not embed a model configuration")
        model = MomdpModel.from_config(self.model_config)
        if model.model_hash() != self.model_hash:
            raise PolicyModelMismatchError("embedded model configuration does not match the recorded hash")
        return model

    def value_and_action(self, x: ObservableState, belief: np.ndarray) -> tuple[float, RobotAction]:
        if x.terminal:
            raise DomainError(f"terminal state {x.key()} has no actions")
        vecs = self.vectors.get(x.key())
        if not vecs:
            raise ValueError(f"policy does not cover state {x.key()}")
        b = belief.ravel()
        best_v, best_vec = -np.inf, None
        for vec in vecs:
            score = float(vec.values @ b)
            if best_vec is None or score > best_v + _TIE_EPS:
                best_v, best_vec = score, vec
        return best_v, best_vec.action

    def value(self, x: ObservableState, belief: np.ndarray) -> float:
        return self.value_and_action(x, belief)[0]

    def action(self, x: ObservableState, belief: np.ndarray) -> RobotAction:
        return self.value_and_action(x, belief)[1]

    def to_json(self) -> dict:
        return {
            "schema": POLICY_SCHEMA,
            "variant": self.variant,
            "model_hash": self.model_hash,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "model": self.model_config,
            "stats": self.stats,
            "states": {key: [vec.to_json() for vec in vecs] for key, vecs in sorted(self.vectors.items())},
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_json(data: dict, model: MomdpModel | None = None) -> "Policy":
        if data.get("schema") != POLICY_SCHEMA:
            raise PolicyModelMismatchError(f"unsupported policy schema {data.get('schema')!r}")
        policy = Policy(
            variant=data["variant"],
            model_hash=data["model_hash"],
            epsilon=data["epsilon"],
            seed=data["seed"],
            vectors={key: [AlphaVector.from_json(v) for v in vecs] for key, vecs in data["states"].items()},
            stats=data.get("stats", {}),
            model_config=data.get("model"),
        )
        if model is not None:
            if model.model_hash() != policy.model_hash:
                raise PolicyModelMismatchError(
                    "policy was solved for a different model configuration "
                    f"(policy hash {policy.model_hash[:12]}…, model hash {model.model_hash()[:12]}…)"
                )
            if model.variant != policy.variant:
                raise PolicyModelMismatchError(f"policy variant {policy.variant} != model variant {model.variant}")
        return policy

    @staticmethod
    def load(path: str, model: MomdpModel | None = None) -> "Policy":
        with open(path, "r", encoding="utf-8") as fh:
            return Policy.from_json(json.load(fh), model)


def best_action(policy: Policy, x: ObservableState, belief: np.ndarray) -> RobotAction:
    """Greedy action of the stored value function at (x, belief)."""
    return policy.action(x, belief)


# -- shared dynamics cache ----------------------------------------------------


class _Branch(NamedTuple):
    x_next: ObservableState
    reward: float
    likelihood: np.ndarray  # flat over latent cells


class _Dynamics:
    """Per-state successor/likelihood tables shared by solver and oracle."""

    def __init__(self, model: MomdpModel):
        self.model = model
        self.actions = model.robot_actions()
        self.gamma = model.gamma
        n = model.n_alpha * model.n_compliance
        self.n_cells = n
        ta = model.alpha_transition_matrix()
        tc = model.compliance_transition_matrix()
        kron = np.kron(ta, tc)
        self.latent_kernel = None if np.allclose(kron, np.eye(n)) else kron
        self._arms: dict[ObservableState, list[tuple[RobotAction, bool, list[_Branch]]]] = {}

    def arms(self, x: ObservableState) -> list[tuple[RobotAction, bool, list[_Branch]]]:
        cached = self._arms.get(x)
        if cached is not None:
            return cached
        out = []
        for a_r in self.actions:
            moves_latent = a_r.kind == STATE_CONVEYING and self.latent_kernel is not None
            branches = []
            for a_h in HUMAN_ACTIONS:
                like = likelihood_grid(self.model, x, a_h).ravel()
                if not like.any():
                    continue
                x2 = self.model.world_transition(x, a_r, a_h)
                branches.append(_Branch(x2, self.model.reward(x, a_r, a_h, x2), like))
            out.append((a_r, moves_latent, branches))
        self._arms[x] = out
        return out


def _hindsight_upper_bound(model: MomdpModel, dyn: _Dynamics) -> dict[str, np.ndarray]:
    """Optimal value per observable state if the latent cell were known.

    Averaging this table under a belief upper-bounds the true value (knowing the
    latent cell can only help). Valid for any horizon when rewards are
    nonnegative, since values then grow with horizon.
    """
    states = [x for x in model.enumerate_observable_states() if not x.terminal]
    table = {x.key(): np.zeros(dyn.n_cells) for x in states}
    zero = np.zeros(dyn.n_cells)
    for _ in range(2000):
        delta = 0.0
        new_table = {}
        for x in states:
            best = None
            for _a_r, moves_latent, branches in dyn.arms(x):
                acc = np.zeros(dyn.n_cells)
                for x2, r, like in branches:
                    nxt = zero if x2.terminal else table[x2.key()]
                    if moves_latent and dyn.latent_kernel is not None:
                        nxt = dyn.latent_kernel @ nxt
                    acc += like * (r + model.gamma * nxt)
                best = acc if best is None else np.maximum(best, acc)
            new_table[x.key()] = best
            delta = max(delta, float(np.max(np.abs(best - table[x.key()]))))
        table = new_table
        if delta < 1e-12:
            break
    return table


def _fixed_policy_value(
    model: MomdpModel, dyn: _Dynamics, choose: "callable"
) -> dict[str, np.ndarray]:
    """Infinite-horizon value per latent cell of a fixed state-indexed policy."""
    states = [x for x in model.enumerate_observable_states() if not x.terminal]
    table = {x.key(): np.zeros(dyn.n_cells) for x in states}
    zero = np.zeros(dyn.n_cells)
    arms_for = {}
    for x in states:
        wanted = choose(x)
        arms_for[x.key()] = next(arm for arm in dyn.arms(x) if arm[0] == wanted)
    for _ in range(2000):
        delta = 0.0
        new_table = {}
        for x in states:
            _a_r, moves_latent, branches = arms_for[x.key()]
            acc = np.zeros(dyn.n_cells)
            for x2, r, like in branches:
                nxt = zero if x2.terminal else table[x2.key()]
                if moves_latent and dyn.latent_kernel is not None:
                    nxt = dyn.latent_kernel @ nxt
                acc += like * (r + model.gamma * nxt)
            new_table[x.key()] = acc
            delta = max(delta, float(np.max(np.abs(acc - table[x.key()]))))
        table = new_table
        if delta < 1e-12:
            break
    return table


# -- exact finite-horizon oracle ----------------------------------------------


class ExpectimaxResult(NamedTuple):
    value: float
    action: RobotAction | None


_PRUNE_MARGIN = 1e-9


def _concede_action(model: MomdpModel, x: ObservableState) -> RobotAction:
    return RobotAction.task(x.human_modes[-1])


def _insist_action(model: MomdpModel, x: ObservableState) -> RobotAction:
    return RobotAction.task(model.optimal_mode())


def _command_on_conflict_action(model: MomdpModel, x: ObservableState) -> RobotAction:
    opt = model.optimal_mode()
    if x.human_modes[-1] != opt and not x.verbal_flag:
        return RobotAction.verbal_command(opt)
    return RobotAction.task(opt)


class Oracle:
    """Exact finite-horizon expectimax over (state, belief) with memoization.

    When all rewards are nonnegative the recursion prunes actions that provably
    cannot be optimal, which leaves the result unchanged but makes deep
    horizons tractable. Two certified bounds drive the pruning: a hindsight
    upper bound (the value if the latent cell were known) and a lower bound
    from exactly evaluated fixed policies, shifted down by the largest
    discounted reward the truncated horizon can still forfeit.
    """

    def __init__(self, model: MomdpModel, prune: bool | None = None):
        self.model = model
        self.dyn = _Dynamics(model)
        if prune is None:
            prune = self._rewards_nonnegative()
        if prune and not self._rewards_nonnegative():
            raise ValueError("pruned oracle requires nonnegative rewards")
        self.prune = prune
        self.upper = _hindsight_upper_bound(model, self.dyn) if prune else None
        self.lowers: list[dict[str, np.ndarray]] = []
        if prune:
            choosers = [_concede_action, _insist_action]
            if model.variant == VARIANT_COMPLIANCE:
                choosers.append(_command_on_conflict_action)
            self.lowers = [
                _fixed_policy_value(model, self.dyn, lambda x, c=c: c(model, x)) for c in choosers
            ]
        self._top_reward = max(model.rewards.optimal, model.rewards.suboptimal)
        self._memo: dict = {}

    def _rewards_nonnegative(self) -> bool:
        r = self.model.rewards
        lows = [r.other, r.optimal, r.suboptimal, r.other - r.verbal_cost]
        return min(lows) >= 0.0

    def value(self, x: ObservableState, belief: np.ndarray, horizon: int) -> ExpectimaxResult:
        return self._value(x, np.asarray(belief, dtype=float).ravel(), horizon)

    def _value(self, x: ObservableState, b: np.ndarray, h: int) -> ExpectimaxResult:
        if h <= 0 or x.terminal:
            return ExpectimaxResult(0.0, None)
        key = (x, h, np.round(b, 12).tobytes())
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        gamma = self.model.gamma
        arms = []
        for a_r, moves_latent, branches in self.dyn.arms(x):
            datas = []
            ub = 0.0
            for x2, r, like in branches:
                w = like * b
                p = float(w.sum())
                if p <= 0.0:
                    continue
                if moves_latent and self.dyn.latent_kernel is not None:
                    w = w @ self.dyn.latent_kernel
                child = w / float(w.sum())
                datas.append((p, r, x2, child))
                if self.prune:
                    bound = 0.0 if x2.terminal else float(self.upper[x2.key()] @ child)
                    ub += p * (r + gamma * bound)
            arms.append((ub, a_r.sort_key(), a_r, datas))
        floor = -np.inf
        if self.prune:
            key_x = x.key()
            floor = max(float(t[key_x] @ b) for t in self.lowers) - gamma**h * self._top_reward
            arms.sort(key=lambda arm: (-arm[0], arm[1]))
        best_q, best_a, best_rank = -np.inf, None, None
        for ub, rank, a_r, datas in arms:
            if self.prune and ub < max(best_q, floor) - _PRUNE_MARGIN:
                continue
            q = 0.0
            for p, r, x2, child in datas:
                q += p * (r + gamma * self._value(x2, child, h - 1).value)
            if best_a is None or q > best_q + _TIE_EPS:
                best_q, best_a, best_rank = q, a_r, rank
            elif q >= best_q - _TIE_EPS and rank < best_rank:
                best_q, best_a, best_rank = max(best_q, q), a_r, rank
        result = ExpectimaxResult(best_q, best_a)
        self._memo[key] = result
        return result


def expectimax(model: MomdpModel, x: ObservableState, belief: np.ndarray, horizon: int) -> ExpectimaxResult:
    """Exact optimal (value, action) at (x, belief) over the given horizon."""
    return Oracle(model).value(x, belief, horizon)


def truncation_horizon(model: MomdpModel, tol: float = 0.005) -> int:
    """Smallest horizon whose discounted tail reward stays below ``tol``."""
    top = max(model.rewards.optimal, model.rewards.suboptimal)
    h = 1
    while model.gamma**h * top >= tol:
        h += 1
    return h


def start_value_expectimax(
    model: MomdpModel, belief: np.ndarray | None = None, horizon: int | None = None, oracle: Oracle | None = None
) -> float:
    """Exact start value: opening reward plus the discounted post-opening value."""
    if belief is None:
        belief = model.prior()
    if horizon is None:
        horizon = truncation_horizon(model)
    a_r0, a_h0 = model.opening_actions()
    pre = model.pre_opening_state()
    x0 = model.world_transition(pre, a_r0, a_h0)
    r0 = model.reward(pre, a_r0, a_h0, x0)
    oracle = oracle or Oracle(model)
    return r0 + model.gamma * oracle.value(x0, belief, horizon - 1).value


def policy_start_value(model: MomdpModel, policy: Policy, belief: np.ndarray | None = None) -> float:
    """Start value implied by a solved policy's vector sets."""
    if belief is None:
        belief = model.prior()
    a_r0, a_h0 = model.opening_actions()
    pre = model.pre_opening_state()
    x0 = model.world_transition(pre, a_r0, a_h0)
    r0 = model.reward(pre, a_r0, a_h0, x0)
    return r0 + model.gamma * policy.value(x0, belief)


# -- point-based value iteration ----------------------------------------------


def _floor_vector(model: MomdpModel) -> np.ndarray:
    r = model.rewards
    worst = min(r.other, r.other - r.verbal_cost, 0.0)
    n = model.n_alpha * model.n_compliance
    return np.full(n, worst / (1.0 - model.gamma))


def _backup_state(
    model: MomdpModel,
    dyn: _Dynamics,
    x: ObservableState,
    points: np.ndarray,
    value_tables: dict[str, tuple[np.ndarray, list[RobotAction]]],
) -> tuple[np.ndarray, list[RobotAction], np.ndarray]:
    """Backup every belief point of one state.

    Returns (vectors, greedy actions, values), one row per point. ``value_tables``
    maps state keys to (vector matrix, actions) for successor lookups.
    """
    n_pts = points.shape[0]
    gamma = model.gamma
    kern = dyn.latent_kernel
    per_action_vecs = []
    per_action_vals = []
    actions = []
    for a_r, moves_latent, branches in dyn.arms(x):
        q = np.zeros_like(points)
        for x2, r, like in branches:
            if x2.terminal:
                q += like[None, :] * r
                continue
            v2, _acts2 = value_tables[x2.key()]
            w = points * like[None, :]
            if moves_latent and kern is not None:
                w = w @ kern
            idx = np.argmax(w @ v2.T, axis=1)
            chosen = v2[idx]
            if moves_latent and kern is not None:
                chosen = chosen @ kern.T
            q += like[None, :] * (r + gamma * chosen)
        per_action_vecs.append(q)
        per_action_vals.append(np.einsum("ij,ij->i", q, points))
        actions.append(a_r)
    vals = np.stack(per_action_vals)  # (A, n_pts)
    pick = np.zeros(n_pts, dtype=int)
    best = vals[0].copy()
    for a in range(1, vals.shape[0]):
        better = vals[a] > best + _TIE_EPS
        pick[better] = a
        best[better] = vals[a][better]
    new_vecs = np.stack([per_action_vecs[pick[i]][i] for i in range(n_pts)])
    new_acts = [actions[pick[i]] for i in range(n_pts)]
    return new_vecs, new_acts, best


def backup(
    model: MomdpModel,
    x: ObservableState,
    belief: np.ndarray,
    vector_sets: dict[str, list[AlphaVector]],
) -> AlphaVector:
    """One Bellman backup at a single (state, belief) point.

    Terminal states back up to the zero vector. The result's value at ``belief``
    is the max over actions of the assembled one-step-lookahead vectors, so it
    is never below any single action's evaluation there.
    """
    n = model.n_alpha * model.n_compliance
    if x.terminal:
        return AlphaVector(np.zeros(n), model.robot_actions()[0])
    dyn = _Dynamics(model)
    tables = {}
    for key, vecs in vector_sets.items():
        if vecs:
            tables[key] = (np.stack([v.values for v in vecs]), [v.action for v in vecs])
    # Successors missing from vector_sets fall back to the floor vector.
    floor = _floor_vector(model)
    for _a_r, _ml, branches in dyn.arms(x):
        for x2, _r, _like in branches:
            if not x2.terminal and x2.key() not in tables:
                tables[x2.key()] = (floor[None, :], [model.robot_actions()[0]])
    pts = np.asarray(belief, dtype=float).ravel()[None, :]
    vecs, acts, _vals = _backup_state(model, dyn, x, pts, tables)
    return AlphaVector(vecs[0], acts[0])


class _PointSet:
    """Deduplicated belief points per observable state."""

    def __init__(self) -> None:
        self.by_state: dict[ObservableState, list[np.ndarray]] = {}
        self._seen: set[tuple] = set()
        self.total = 0

    def add(self, x: ObservableState, belief: np.ndarray) -> bool:
        key = (x, np.round(belief, 10).tobytes())
        if key in self._seen:
            return False
        self._seen.add(key)
        self.by_state.setdefault(x, []).append(belief)
        self.total += 1
        return True


def _expand_exact(model: MomdpModel, dyn: _Dynamics, points: _PointSet, depth: int, cap: int) -> None:
    """Breadth-first exact reachability from the initial belief, deduplicated."""
    x0 = model.initial_state()
    b0 = model.prior().ravel()
    points.add(x0, b0)
    frontier = [(x0, b0)]
    for _ in range(depth):
        nxt = []
        for x, b in frontier:
            if x.terminal:
                continue
            for _a_r, moves_latent, branches in dyn.arms(x):
                for x2, _r, like in branches:
                    w = like * b
                    p = float(w.sum())
                    if p <= 0.0 or x2.terminal:
                        continue
                    if moves_latent and dyn.latent_kernel is not None:
                        w = w @ dyn.latent_kernel
                    child = w / float(w.sum())
                    if points.add(x2, child) and points.total < cap:
                        nxt.append((x2, child))
            if points.total >= cap:
                return
        frontier = nxt
        if not frontier:
            return


def _expand_rollouts(
    model: MomdpModel,
    dyn: _Dynamics,
    points: _PointSet,
    tables: dict[str, tuple[np.ndarray, list[RobotAction]]],
    rng: np.random.Generator,
    n_rollouts: int,
    max_depth: int,
    explore: float,
) -> None:
    """Grow the point set along greedy (with exploration) simulated trajectories."""
    actions = dyn.actions
    for _ in range(n_rollouts):
        x = model.initial_state()
        b = model.prior().ravel()
        for _ in range(max_depth):
            if x.terminal:
                break
            arms = dyn.arms(x)
            if rng.random() < explore:
                a_idx = int(rng.integers(len(arms)))
            else:
                v, acts = tables[x.key()]
                scores = v @ b
                a_best = acts[int(np.argmax(scores))]
                a_idx = next(i for i, (a_r, _m, _br) in enumerate(arms) if a_r == a_best)
            _a_r, moves_latent, branches = arms[a_idx]
            probs = np.array([float(br.likelihood @ b) for br in branches])
            total = probs.sum()
            if total <= 0:
                break
            probs /= total
            pick = int(rng.choice(len(branches), p=probs))
            x2, _r, like = branches[pick]
            w = like * b
            if moves_latent and dyn.latent_kernel is not None:
                w = w @ dyn.latent_kernel
            b = w / float(w.sum())
            x = x2
            if not x.terminal:
                points.add(x, b)
        _ = actions


def solve(
    model: MomdpModel,
    epsilon: float = 0.01,
    max_time: float = 60.0,
    seed: int = 0,
    expand_depth: int = 6,
    point_cap: int = 6000,
) -> Policy:
    """Point-based value iteration until the initial-belief value settles.

    Belief points come from exact breadth-first reachability (to ``expand_depth``)
    plus greedy/exploratory rollouts, all seeded. Sweeps repeat until the largest
    per-sweep value change is at most ``epsilon * (1 - gamma) / (2 * gamma)`` —
    a Bellman-residual stop whose implied error at the initial belief is within
    ``epsilon/2`` — or until ``max_time`` elapses. Deterministic given ``seed``.
    """
    t_start = time.monotonic()
    rng = np.random.default_rng(seed)
    dyn = _Dynamics(model)
    states = model.enumerate_observable_states()
    nonterminal = [x for x in states if not x.terminal]

    points = _PointSet()
    _expand_exact(model, dyn, points, expand_depth, point_cap)
    uniform = np.full(dyn.n_cells, 1.0 / dyn.n_cells)
    prior = model.prior().ravel()
    for x in nonterminal:
        points.add(x, prior.copy())
        points.add(x, uniform.copy())

    floor = _floor_vector(model)
    first_action = model.robot_actions()[0]
    tables: dict[str, tuple[np.ndarray, list[RobotAction]]] = {
        x.key(): (floor[None, :].copy(), [first_action]) for x in nonterminal
    }
    point_mats = {x: np.stack(points.by_state[x]) for x in nonterminal}

    residual_target = epsilon * (1.0 - model.gamma) / (2.0 * model.gamma)
    sweeps = 0
    residual = np.inf

    def run_sweeps() -> float:
        nonlocal sweeps, residual
        while time.monotonic() - t_start < max_time:
            delta = 0.0
            for x in nonterminal:
                pts = point_mats[x]
                old_v, old_acts = tables[x.key()]
                old_vals = np.max(pts @ old_v.T, axis=1)
                new_vecs, new_acts, _vals = _backup_state(model, dyn, x, pts, tables)
                # Vector sets only grow (modulo pruning below), so point values
                # are nondecreasing and the sweep residual actually converges.
                rows = list(old_v) + list(new_vecs)
                acts = list(old_acts) + list(new_acts)
                order = sorted(range(len(acts)), key=lambda i: (acts[i].sort_key(), rows[i].tobytes()))
                seen: set[bytes] = set()
                keep_rows, keep_acts = [], []
                for i in order:
                    raw = rows[i].tobytes()
                    if raw in seen:
                        continue
                    seen.add(raw)
                    keep_rows.append(rows[i])
                    keep_acts.append(acts[i])
                mat = np.stack(keep_rows)
                dominated = [
                    any(
                        j != i and np.all(mat[j] >= mat[i]) and (j < i or np.any(mat[j] > mat[i]))
                        for j in range(mat.shape[0])
                    )
                    for i in range(mat.shape[0])
                ]
                live = [i for i in range(mat.shape[0]) if not dominated[i]]
                tables[x.key()] = (mat[live], [keep_acts[i] for i in live])
                merged_vals = np.max(pts @ tables[x.key()][0].T, axis=1)
                delta = max(delta, float(np.max(merged_vals - old_vals)))
            sweeps += 1
            residual = delta
            if delta <= residual_target:
                break
        return residual

    run_sweeps()
    for round_idx in range(2):
        before = points.total
        _expand_rollouts(model, dyn, points, tables, rng, n_rollouts=40, max_depth=25, explore=0.2 + 0.2 * round_idx)
        if points.total != before:
            point_mats = {x: np.stack(points.by_state[x]) for x in nonterminal}
            run_sweeps()

    vectors: dict[str, list[AlphaVector]] = {}
    for x in states:
        if x.terminal:
            # Terminal states carry a zero vector so the file covers the full
            # enumeration; they are never consulted at runtime.
            vectors[x.key()] = [AlphaVector(np.zeros(dyn.n_cells), first_action)]
        else:
            mat, acts = tables[x.key()]
            vectors[x.key()] = [AlphaVector(mat[i].copy(), acts[i]) for i in range(mat.shape[0])]

    policy = Policy(
        variant=model.variant,
        model_hash=model.model_hash(),
        epsilon=epsilon,
        seed=seed,
        vectors=vectors,
        model_config=model.to_config(),
    )
    policy.stats = {
        "sweeps": sweeps,
        "belief_points": points.total,
        "final_residual": residual,
        "value_at_start": policy_start_value(model, policy),
    }
    return policy
