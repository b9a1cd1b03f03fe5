"""Command-line interface: exit codes, output formats, determinism, serving."""

import json
import signal
import socket
import subprocess
import sys
import time

import httpx
import pytest

from coadapt import cli
from coadapt.calibration import default_model
from coadapt.model import VARIANT_BASELINE, VARIANT_COMPLIANCE
from coadapt.sim import InteractionTrace, verify_trace


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _policy(policy_dir, variant):
    return str(policy_dir / f"{variant}.json")


def test_solve_writes_a_policy_and_reruns_identically(tmp_path, capsys):
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["solve", "--variant", "baseline", "--epsilon", "0.2", "--seed", "3"]
    code, stdout_a, _ = run_cli(capsys, *argv, "--out", str(out_a))
    assert code == 0
    assert "variant: baseline" in stdout_a
    assert "states_covered: 40" in stdout_a
    assert f"policy_written: {out_a}" in stdout_a
    code, stdout_b, _ = run_cli(capsys, *argv, "--out", str(out_b))
    assert code == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    assert stdout_a.replace(str(out_a), "") == stdout_b.replace(str(out_b), "")


def test_solve_flag_validation(tmp_path, capsys):
    code, _, err = run_cli(capsys, "solve", "--variant", "baseline", "--epsilon", "0", "--out", str(tmp_path / "p.json"))
    assert code == 1 and "epsilon" in err
    code, _, _ = run_cli(capsys, "solve", "--variant", "baseline")  # missing --out
    assert code == 1
    code, _, err = run_cli(capsys, "solve", "--out", str(tmp_path / "p.json"))
    assert code == 1
    assert "config" in err.lower() or "variant" in err.lower()


def test_solve_reads_explicit_configs(tmp_path, capsys):
    config = tmp_path / "model.json"
    default_model(VARIANT_BASELINE).save(str(config))
    code, stdout, _ = run_cli(
        capsys, "solve", "--config", str(config), "--epsilon", "0.5", "--out", str(tmp_path / "p.json")
    )
    assert code == 0
    assert f"model_hash: {default_model(VARIANT_BASELINE).model_hash()}" in stdout
    # A variant flag that contradicts the config counts as invalid input,
    # since the clash only shows up once the file is read.
    code, _, _ = run_cli(
        capsys, "solve", "--config", str(config), "--variant", "compliance", "--out", str(tmp_path / "q.json")
    )
    assert code == 2


def test_simulate_reports_the_episode(policy_dir, capsys):
    code, stdout, _ = run_cli(
        capsys, "simulate", "--policy", _policy(policy_dir, VARIANT_COMPLIANCE), "--alpha", "1.0", "--c", "1.0"
    )
    assert code == 0
    assert "goal: -90" in stdout
    assert "verbal_actions: 0" in stdout
    assert "adapted: true" in stdout


def test_simulate_steps_table_lists_every_frame(policy_dir, capsys):
    code, stdout, _ = run_cli(
        capsys,
        "simulate",
        "--policy",
        _policy(policy_dir, VARIANT_COMPLIANCE),
        "--alpha",
        "1.0",
        "--c",
        "1.0",
        "--steps-table",
    )
    assert code == 0
    rows = [line for line in stdout.splitlines() if line and line.lstrip()[0].isdigit()]
    assert len(rows) == 6
    assert [int(r.rsplit("|", 2)[1]) for r in rows] == [10, -10, -30, -50, -70, -90]


def test_simulate_trace_out_round_trips(policy_dir, tmp_path, capsys):
    trace_path = tmp_path / "u1.ndjson"
    code, stdout, _ = run_cli(
        capsys,
        "simulate",
        "--policy",
        _policy(policy_dir, VARIANT_COMPLIANCE),
        "--alpha",
        "0.0",
        "--c",
        "0.0",
        "--trace-out",
        str(trace_path),
    )
    assert code == 0
    trace = InteractionTrace.load(str(trace_path))
    verify_trace(default_model(VARIANT_COMPLIANCE), trace)
    assert trace.outcome.goal == 90


def test_simulate_input_validation(policy_dir, tmp_path, capsys):
    code, _, err = run_cli(capsys, "simulate", "--policy", str(tmp_path / "missing.json"), "--alpha", "0.5")
    assert code == 2 and "invalid input" in err
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    code, _, err = run_cli(capsys, "simulate", "--policy", str(junk), "--alpha", "0.5")
    assert code == 2
    code, _, err = run_cli(capsys, "simulate", "--policy", _policy(policy_dir, VARIANT_BASELINE), "--alpha", "1.5")
    assert code == 1


def test_experiment_emits_one_csv_row_per_policy(policy_dir, tmp_path, capsys):
    csv_path = tmp_path / "stats.csv"
    argv = [
        "experiment",
        "--policy",
        _policy(policy_dir, VARIANT_BASELINE),
        "--policy",
        _policy(policy_dir, VARIANT_COMPLIANCE),
        "--n",
        "25",
        "--seed",
        "7",
        "--out",
        str(csv_path),
    ]
    code, stdout, _ = run_cli(capsys, *argv)
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("variant,n_users,seed,adaptation_rate")
    assert len(lines) == 3
    assert lines[1].startswith("baseline,25,7,")
    assert lines[2].startswith("compliance,25,7,")
    code2, stdout2, _ = run_cli(capsys, *argv)
    assert stdout2 == stdout


def test_experiment_point_mass_cooperative_prior_always_adapts(policy_dir, capsys):
    code, stdout, _ = run_cli(
        capsys,
        "experiment",
        "--policy",
        _policy(policy_dir, VARIANT_BASELINE),
        "--prior",
        "point:1.0,1.0",
        "--n",
        "10",
    )
    assert code == 0
    row = stdout.strip().splitlines()[-1].split(",")
    assert float(row[3]) == 1.0


def test_experiment_flag_validation(policy_dir, capsys):
    base = ["experiment", "--policy", _policy(policy_dir, VARIANT_BASELINE)]
    assert run_cli(capsys, *base, "--n", "0")[0] == 1
    assert run_cli(capsys, *base, "--prior", "weird")[0] == 1
    assert run_cli(capsys, *base, "--prior", "point:0.3,1.0")[0] == 1


@pytest.fixture()
def traces_dir(policy_dir, tmp_path, capsys):
    """Three single-episode users plus one two-round user file."""
    d = tmp_path / "traces"
    d.mkdir()
    runs = [
        ("u1.ndjson", VARIANT_COMPLIANCE, "0.0", "0.0"),
        ("u2.ndjson", VARIANT_COMPLIANCE, "0.0", "1.0"),
        ("u3.ndjson", VARIANT_BASELINE, "1.0", "0.5"),
    ]
    for name, variant, alpha, c in runs:
        code = cli.main(
            [
                "simulate",
                "--policy",
                _policy(policy_dir, variant),
                "--alpha",
                alpha,
                "--c",
                c,
                "--trace-out",
                str(d / name),
            ]
        )
        assert code == 0
    # One user with two rounds: stubborn first, adaptable second.
    first = (d / "u3.ndjson").read_text()
    code = cli.main(
        [
            "simulate",
            "--policy",
            _policy(policy_dir, VARIANT_BASELINE),
            "--alpha",
            "0.0",
            "--trace-out",
            str(d / "round.ndjson"),
        ]
    )
    assert code == 0
    stubborn_first = (d / "round.ndjson").read_text()
    (d / "u4.ndjson").write_text(stubborn_first + first)
    (d / "round.ndjson").unlink()
    capsys.readouterr()
    return d


def test_learn_priors_from_trace_files(traces_dir, tmp_path, capsys):
    out = tmp_path / "priors.json"
    argv = ["learn", "--traces", str(traces_dir), "--mode", "priors", "--out", str(out)]
    code, stdout, _ = run_cli(capsys, *argv)
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["grid"] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert payload["alpha_users"] == 4
    assert payload["compliance_users"] == 2
    assert sum(payload["alpha_prior"]) == pytest.approx(1.0)
    assert sum(payload["compliance_prior"]) == pytest.approx(1.0)
    first = out.read_bytes()
    code, _, _ = run_cli(capsys, *argv)
    assert code == 0 and out.read_bytes() == first


def test_learn_talpha_fits_round_pairs(traces_dir, capsys):
    code, stdout, _ = run_cli(capsys, "learn", "--traces", str(traces_dir), "--mode", "talpha")
    assert code == 0
    payload = json.loads(stdout[stdout.index("{"):])
    assert payload["pairs"] == 1
    matrix = payload["alpha_transition"]
    assert len(matrix) == 5
    for row in matrix:
        assert sum(row) == pytest.approx(1.0, abs=1e-12)
    # The single (0.0 -> 1.0) pair pins the low-adaptability rows.
    assert matrix[0] == [0.0, 0.0, 0.0, 0.0, 1.0]


def test_learn_per_episode_splits_files(traces_dir, capsys):
    code, stdout, _ = run_cli(capsys, "learn", "--traces", str(traces_dir), "--mode", "priors", "--per-episode")
    assert code == 0
    assert "groups: 5" in stdout


def test_learn_validation(tmp_path, traces_dir, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code, _, err = run_cli(capsys, "learn", "--traces", str(empty), "--mode", "priors")
    assert code == 2 and "invalid input" in err
    code, _, _ = run_cli(capsys, "learn", "--traces", str(tmp_path / "nowhere"), "--mode", "priors")
    assert code == 2
    # talpha needs at least one multi-episode user; per-episode strips them.
    code, _, _ = run_cli(capsys, "learn", "--traces", str(traces_dir), "--mode", "talpha", "--per-episode")
    assert code == 2


def test_usage_errors_for_parser_level_problems(capsys):
    assert run_cli(capsys, "bogus")[0] == 1
    assert run_cli(capsys, "serve", "--policies", "x", "--port", "70000")[0] == 1


def test_serve_missing_policies_dir_is_validation(tmp_path, capsys):
    code, _, err = run_cli(capsys, "serve", "--policies", str(tmp_path / "nope"), "--sessions", str(tmp_path / "s"))
    assert code == 2


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_answers_requests_and_persists_sessions(policy_dir, tmp_path):
    port = _free_port()
    sessions = tmp_path / "sessions"
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "coadapt.cli",
            "serve",
            "--policies",
            str(policy_dir),
            "--sessions",
            str(sessions),
            "--port",
            str(port),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 30
        while True:
            try:
                if httpx.get(f"{base}/policies", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.2)
        created = httpx.post(
            f"{base}/sessions", json={"variant": "baseline", "policy_id": "baseline"}, timeout=5.0
        )
        assert created.status_code == 201
        session_id = created.json()["id"]
        stepped = httpx.post(
            f"{base}/sessions/{session_id}/action", json={"direction": "counterclockwise"}, timeout=5.0
        )
        assert stepped.status_code == 200
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=20)
    assert proc.returncode in (0, -signal.SIGTERM, 128 + signal.SIGTERM)
    stored = json.loads((sessions / f"{session_id}.json").read_text())
    assert stored["id"] == session_id
    assert len(stored["steps"]) == 1
