import csv
import io
import json
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from rangerenew.cli import RunConfig, main, parse_args, parse_grid


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _csv_rows(text):
    lines = text.splitlines()
    assert lines[0].startswith("# rangerenew 0.1.0 config_sha256=")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_parse_grid():
    assert parse_grid("1:2:0.5") == [1.0, 1.5, 2.0]
    assert parse_grid("0.1, 0.2") == [0.1, 0.2]
    assert parse_grid("1:10:3", integer=True) == [1, 4, 7, 10]
    assert len(parse_grid("-2:1:0.1")) == 31


def test_ratefn_lambda_grid(capsys):
    code, out, _ = _run(["ratefn", "--gamma", "0.5", "--lambda-grid", "-2:1:0.1"], capsys)
    assert code == 0
    rows = _csv_rows(out)
    assert len(rows) == 31
    zero = [r for r in rows if abs(float(r["lambda_or_x"])) < 1e-12][0]
    assert float(zero["value"]) == 0.0
    assert all(float(r["value"]) >= 0 for r in rows)


def test_ratefn_gamma_out_of_range(capsys):
    code, _, err = _run(["ratefn", "--gamma", "1.5", "--lambda-grid", "0.1"], capsys)
    assert code == 2 and "(0,1)" in err


def test_moments_output(capsys):
    code, out, _ = _run(["moments", "--law", "finite:0.5,0.3,0.2", "--t-grid", "1,2"], capsys)
    assert code == 0
    rows = _csv_rows(out)
    assert float(rows[1]["exact_mean"]) == pytest.approx(1.62, abs=1e-14)
    assert float(rows[0]["mu"]) == pytest.approx(0.83392036652766685, abs=1e-15)


def test_simulate_json_echoes_config(capsys):
    code, out, _ = _run(["simulate", "--law", "zipf:gamma=0.5", "--method", "poissonized", "--t", "1000",
                         "--replicas", "50", "--seed", "9", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["law"] == "zipf:gamma=0.5" and doc["method"] == "poissonized_bernoulli"
    assert doc["replicas"] == 50 and doc["seed"] == 9 and doc["header"]["seed"] == 9
    assert doc["tv_bound"] <= doc["tv_budget"] == 1e-6


def test_verify_brute_and_skip(capsys):
    assert _run(["verify", "--check", "brute", "--law", "finite:0.5,0.3,0.2"], capsys)[0] == 0
    code, out, _ = _run(["verify", "--check", "var-ratio", "--law", "factgap"], capsys)
    assert code == 0 and "skipped" in out


def test_gating_failure_exit_code(capsys):
    code, _, _ = _run(["verify", "--check", "clt", "--law", "zipf:gamma=0.5", "--t", "10",
                       "--replicas", "3000"], capsys)
    assert code == 1


def test_usage_errors(capsys, tmp_path):
    assert _run(["simulate", "--law", "zipf:gamma=0.5"], capsys)[0] == 2
    assert _run(["simulate", "--law", "zipf:gamma=2", "--n", "5"], capsys)[0] == 2
    assert _run(["moments", "--law", "geom:q=0.5", "--t-grid", "1:x:2"], capsys)[0] == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("subcommand=moments\nlaw=geom:q=0.5\nt_grid=1\ncolour=blue\n")
    code, _, err = _run(["moments", "--config", str(bad)], capsys)
    assert code == 2 and "colour" in err


def test_threads_env_validation(capsys, monkeypatch):
    monkeypatch.setenv("RANGERENEW_THREADS", "-1")
    assert _run(["moments", "--law", "geom:q=0.5", "--t-grid", "1"], capsys)[0] == 2


def test_io_errors(capsys, tmp_path):
    missing = tmp_path / "nope" / "out.csv"
    assert _run(["moments", "--law", "geom:q=0.5", "--t-grid", "1", "--out", str(missing)], capsys)[0] == 3
    assert _run(["moments", "--config", str(tmp_path / "absent.cfg")], capsys)[0] == 3
    assert list(tmp_path.iterdir()) == []


def test_byte_identical_reruns(capsys, tmp_path):
    args = ["simulate", "--law", "geom:q=0.3", "--method", "coupled", "--t", "40", "--replicas", "200",
            "--seed", "5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert [p.name for p in sorted(tmp_path.iterdir())] == ["a.csv", "b.csv"]


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nsubcommand=simulate\nlaw=geom:q=0.5\nn=10\nreplicas=7\nseed=3\n")
    c = parse_args(["simulate", "--config", str(cfg), "--replicas", "9"])
    assert (c.law, c.n, c.replicas, c.seed) == ("geom:q=0.5", 10, 9, 3)


def test_config_text_roundtrip_example():
    c = parse_args(["verify", "--check", "cgf", "--law", "zipf:gamma=0.3", "--lambda-grid", "-1:0.5:0.25",
                    "--t-grid", "1e4,1e6"])
    assert RunConfig.from_text(c.to_text()) == c
    assert c.config_hash() == RunConfig.from_text(c.to_text()).config_hash()


_floats = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(t=_floats, grid=st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=5),
       n=st.integers(1, 10**9), seed=st.integers(0, 2**64 - 1), exact=st.booleans(),
       fmt=st.sampled_from(["csv", "json"]))
def test_config_text_roundtrip(t, grid, n, seed, exact, fmt):
    c = RunConfig("simulate", law="zipf:gamma=0.5", t=t, n=n, lambda_grid=grid, seed=seed, exact=exact,
                  format=fmt, n_grid=[1, n])
    assert RunConfig.from_text(c.to_text()) == c


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "rangerenew", "ratefn", "--emit", "mdp", "--gamma", "0.5",
                        "--x-grid", "1,2"], capture_output=True, text=True)
    assert r.returncode == 0
    rows = _csv_rows(r.stdout)
    assert float(rows[1]["value"]) == pytest.approx(4 / (2 * (2**0.5 - 1)), rel=1e-15)
