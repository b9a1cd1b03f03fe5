"""Command-line entry point: solve, simulate, experiment, learn, serve.

Exit codes: 0 success, 1 usage (bad flags or flag values), 2 validation (bad
input files or data), 3 unexpected runtime failure. Every command echoes the
seeds it used, and re-running a command with the same inputs and seeds writes
byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .calibration import default_model
from .humans import HumanParams
from .learning import (
    DEFAULT_GRID,
    NoEvidenceError,
    build_prior,
    estimate_adaptability,
    estimate_compliance,
    estimate_transition_alpha,
    snap_to_grid,
)
from .model import VARIANTS, DomainError, ModelValidationError, MomdpModel
from .sim import (
    POPULATION_CSV_HEADER,
    InteractionTrace,
    adaptation_metric,
    run_episode,
    run_population,
    traces_from_ndjson,
)
from .solver import Policy, PolicyModelMismatchError, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_VALIDATION_ERRORS = (
    ModelValidationError,
    PolicyModelMismatchError,
    DomainError,
    NoEvidenceError,
    FileNotFoundError,
    NotADirectoryError,
    json.JSONDecodeError,
)


class _UsageError(Exception):
    """Flag values that parse but make no sense (exit 1)."""


class _ValidationError(Exception):
    """Input files or data that fail their contracts (exit 2)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems by default; remap to the documented 1.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_policy(path: str) -> tuple[Policy, MomdpModel]:
    try:
        policy = Policy.load(path)
        return policy, policy.model()
    except (KeyError, TypeError) as exc:
        raise _ValidationError(f"policy file {path!r} is malformed: {exc}") from exc


def _resolve_model(args) -> MomdpModel:
    if args.config is not None:
        model = MomdpModel.load(args.config)
        if args.variant is not None and args.variant != model.variant:
            raise _ValidationError(
                f"config {args.config!r} is for the {model.variant} variant, not {args.variant}"
            )
        return model
    if args.variant is None:
        raise _UsageError("either --config or --variant is required")
    return default_model(args.variant)


def _parse_prior(spec: str, model: MomdpModel) -> np.ndarray | None:
    if spec == "model":
        return None
    if spec == "uniform":
        n = model.n_alpha * model.n_compliance
        return np.full((model.n_alpha, model.n_compliance), 1.0 / n)
    if spec.startswith("point:"):
        try:
            a_txt, c_txt = spec[len("point:"):].split(",")
            alpha, comp = float(a_txt), float(c_txt)
        except ValueError as exc:
            raise _UsageError(f"point prior must look like point:0.5,1.0, got {spec!r}") from exc
        if alpha not in model.alpha_grid or comp not in model.compliance_grid:
            raise _UsageError(f"point prior values must lie on the latent grid, got {spec!r}")
        prior = np.zeros((model.n_alpha, model.n_compliance))
        prior[model.alpha_grid.index(alpha), model.compliance_grid.index(comp)] = 1.0
        return prior
    raise _UsageError(f"prior must be model, uniform, or point:A,C; got {spec!r}")


def _emit(out, text: str) -> None:
    out.write(text + "\n")


# -- commands -------------------------------------------------------------------


def cmd_solve(args, out) -> int:
    if args.epsilon <= 0:
        raise _UsageError(f"--epsilon must be positive, got {args.epsilon}")
    if args.max_time <= 0:
        raise _UsageError(f"--max-time must be positive, got {args.max_time}")
    model = _resolve_model(args)
    policy = solve(model, epsilon=args.epsilon, max_time=args.max_time, seed=args.seed)
    policy.save(args.out)
    _emit(out, f"variant: {model.variant}")
    _emit(out, f"model_hash: {model.model_hash()}")
    _emit(out, f"epsilon: {args.epsilon}")
    _emit(out, f"seed: {args.seed}")
    _emit(out, f"states_covered: {len(policy.vectors)}")
    _emit(out, f"vectors: {sum(len(v) for v in policy.vectors.values())}")
    _emit(out, f"sweeps: {policy.stats['sweeps']}")
    _emit(out, f"belief_points: {policy.stats['belief_points']}")
    _emit(out, f"final_residual: {policy.stats['final_residual']:.9f}")
    _emit(out, f"value_at_start: {policy.stats['value_at_start']:.6f}")
    _emit(out, f"policy_written: {args.out}")
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    for name, value in (("--alpha", args.alpha), ("--c", args.c)):
        if not 0.0 <= value <= 1.0:
            raise _UsageError(f"{name} must lie in [0, 1], got {value}")
    if args.max_steps < 1:
        raise _UsageError(f"--max-steps must be at least 1, got {args.max_steps}")
    policy, model = _load_policy(args.policy)
    human = HumanParams(alpha=args.alpha, compliance=args.c, current_mode=model.human_preference)
    trace = run_episode(policy, model, human, seed=args.seed, max_steps=args.max_steps)
    _emit(out, f"variant: {model.variant}")
    _emit(out, f"alpha: {args.alpha}")
    _emit(out, f"c: {args.c}")
    _emit(out, f"seed: {args.seed}")
    goal = trace.outcome.goal
    _emit(out, f"goal: {'timed_out' if goal is None else goal}")
    _emit(out, f"adapted: {str(adaptation_metric(trace)).lower()}")
    _emit(out, f"steps: {trace.outcome.steps}")
    _emit(out, f"verbal_actions: {trace.outcome.verbal_actions}")
    _emit(out, f"discounted_return: {trace.outcome.discounted_return:.6f}")
    if args.steps_table:
        _emit(out, "step | robot_action | human_mode | orientation | disagreement")
        for step in trace.steps:
            action = step.robot_action.kind if step.robot_action.mode is None else (
                f"{step.robot_action.kind}({step.robot_action.mode})"
            )
            _emit(
                out,
                f"{step.index:4d} | {action:16s} | {step.human_action.mode:10d} | "
                f"{step.state_after.orientation:11d} | {str(step.disagreement).lower()}",
            )
    if args.trace_out:
        trace.save(args.trace_out)
        _emit(out, f"trace_written: {args.trace_out}")
    return EXIT_OK


def cmd_experiment(args, out) -> int:
    if args.n < 1:
        raise _UsageError(f"--n must be at least 1, got {args.n}")
    rows = []
    for path in args.policy:
        policy, model = _load_policy(path)
        prior = _parse_prior(args.prior, model)
        stats = run_population(policy, model, prior=prior, n_users=args.n, seed=args.seed)
        rows.append(stats)
    _emit(out, f"n_users: {args.n}")
    _emit(out, f"seed: {args.seed}")
    _emit(out, f"prior: {args.prior}")
    csv_lines = [POPULATION_CSV_HEADER] + [s.to_csv_row() for s in rows]
    for line in csv_lines:
        _emit(out, line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(csv_lines) + "\n")
        _emit(out, f"csv_written: {args.out}")
    return EXIT_OK


def _load_trace_groups(traces_dir: str, per_episode: bool) -> list[list[InteractionTrace]]:
    """One group per user: per file by default, per episode when asked."""
    if not os.path.isdir(traces_dir):
        raise _ValidationError(f"{traces_dir!r} is not a directory")
    names = sorted(n for n in os.listdir(traces_dir) if n.endswith(".ndjson"))
    if not names:
        raise _ValidationError(f"no .ndjson trace files in {traces_dir!r}")
    groups: list[list[InteractionTrace]] = []
    for name in names:
        with open(os.path.join(traces_dir, name), "r", encoding="utf-8") as fh:
            traces = traces_from_ndjson(fh.read())
        if per_episode:
            groups.extend([t] for t in traces)
        elif traces:
            groups.append(traces)
    return groups


def cmd_learn(args, out) -> int:
    groups = _load_trace_groups(args.traces, args.per_episode)
    grid = list(DEFAULT_GRID)
    _emit(out, f"traces_dir: {args.traces}")
    _emit(out, f"groups: {len(groups)}")
    if args.mode == "priors":
        alpha_estimates, compliance_estimates = [], []
        for group in groups:
            try:
                alpha_estimates.append(estimate_adaptability(group))
            except NoEvidenceError:
                pass
            try:
                compliance_estimates.append(estimate_compliance(group))
            except NoEvidenceError:
                pass
        if not alpha_estimates and not compliance_estimates:
            raise _ValidationError("no group carries adaptability or compliance evidence")
        payload = {
            "schema": 1,
            "grid": grid,
            "alpha_prior": list(build_prior(alpha_estimates, grid)) if alpha_estimates else None,
            "alpha_users": len(alpha_estimates),
            "compliance_prior": list(build_prior(compliance_estimates, grid)) if compliance_estimates else None,
            "compliance_users": len(compliance_estimates),
        }
    else:  # talpha
        if args.delta < 0:
            raise _UsageError(f"--delta must be nonnegative, got {args.delta}")
        pairs = []
        for group in groups:
            if len(group) < 2:
                continue
            first = snap_to_grid(estimate_adaptability(group[0]), grid)
            second = snap_to_grid(estimate_adaptability(group[1]), grid)
            pairs.append((first, second))
        if not pairs:
            raise _ValidationError("transition fitting needs groups with at least two episodes each")
        matrix = estimate_transition_alpha(pairs, grid, delta=args.delta)
        payload = {
            "schema": 1,
            "grid": grid,
            "alpha_transition": [list(row) for row in matrix],
            "pairs": len(pairs),
        }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _emit(out, f"tables_written: {args.out}")
    else:
        out.write(text)
    return EXIT_OK


def cmd_serve(args, out) -> int:
    if not 1 <= args.port <= 65535:
        raise _UsageError(f"--port must be in 1..65535, got {args.port}")
    import uvicorn

    from .service import create_app

    app = create_app(args.policies, args.sessions)
    _emit(out, f"policies: {', '.join(app.state.registry.ids())}")
    _emit(out, f"serving on http://{args.host}:{args.port}")
    out.flush()
    try:
        # uvicorn turns SIGTERM/SIGINT into a graceful shutdown and returns.
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        # Sessions are persisted after every step; re-flush for good measure.
        app.state.store.flush_all()
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coadapt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a policy for a model configuration")
    p.add_argument("--config", help="model configuration JSON (default: packaged table-carry config)")
    p.add_argument("--variant", choices=VARIANTS, help="variant to pick from the packaged config")
    p.add_argument("--out", required=True, help="policy file to write")
    p.add_argument("--epsilon", type=float, default=0.01, help="value precision target (default 0.01)")
    p.add_argument("--max-time", type=float, default=120.0, help="solve time budget in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("simulate", help="run one episode against a simulated human")
    p.add_argument("--policy", required=True, help="policy file from solve")
    p.add_argument("--alpha", type=float, required=True, help="human adaptability in [0, 1]")
    p.add_argument("--c", type=float, default=0.5, help="human compliance in [0, 1] (default 0.5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=20)
    p.add_argument("--trace-out", help="write the episode trace as newline-delimited JSON")
    p.add_argument("--steps-table", action="store_true", help="print the frame-by-frame step table")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("experiment", help="population adaptation statistics per policy")
    p.add_argument("--policy", action="append", required=True, help="policy file (repeat per condition)")
    p.add_argument("--prior", default="model", help="sampling prior: model, uniform, or point:A,C")
    p.add_argument("--n", type=int, default=100, help="simulated users per policy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the stats table as CSV")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("learn", help="fit priors or the adaptability transition from traces")
    p.add_argument("--traces", required=True, help="directory of .ndjson trace files, one user per file")
    p.add_argument("--mode", choices=("priors", "talpha"), required=True)
    p.add_argument("--out", help="write the learned tables as JSON (default: stdout)")
    p.add_argument("--delta", type=float, default=0.25, help="transition window half-width (talpha mode)")
    p.add_argument(
        "--per-episode",
        action="store_true",
        help="treat each episode as its own user instead of pooling a file's episodes",
    )
    p.set_defaults(handler=cmd_learn)

    p = sub.add_parser("serve", help="serve the session HTTP API")
    p.add_argument("--policies", required=True, help="directory of policy files to expose")
    p.add_argument("--sessions", default="sessions", help="directory for session persistence")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args, sys.stdout)
    except _UsageError as exc:
        sys.stderr.write(f"coadapt {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (_ValidationError, *_VALIDATION_ERRORS) as exc:
        sys.stderr.write(f"coadapt {args.command}: invalid input: {exc}\n")
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # anything unexpected is a runtime failure
        sys.stderr.write(f"coadapt {args.command}: runtime failure: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
