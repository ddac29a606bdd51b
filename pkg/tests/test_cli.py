from __future__ import annotations

import json

import pytest

from momentflow import cli


def _run(argv):
    return cli.main([str(a) for a in argv])


def _read(path):
    return json.loads(path.read_text())


def _write_config(path, obj):
    path.write_text(json.dumps(obj))
    return path


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_strata_g2(tmp_path):
    assert _run(["strata", "--g", 2, "--out", tmp_path]) == cli.EXIT_OK
    assert _read(tmp_path / "betti.json")["betti"] == [1, 0, 1, 4, 1, 0, 1]
    manifest = _read(tmp_path / "manifest.json")
    assert manifest["config"]["params"] == {"g": 2, "lambda_max": None, "trunc": None}
    assert manifest["version"] == cli.__version__


def test_strata_csv(tmp_path):
    assert _run(["strata", "--g", 3, "--format", "csv", "--out", tmp_path]) == 0
    lines = (tmp_path / "betti.csv").read_text().splitlines()
    assert lines[0] == "degree,betti"
    assert lines[7] == "6,16"


def test_certificate_failure_exit_code(tmp_path, capsys):
    assert _run(["strata", "--g", 0, "--out", tmp_path]) == cli.EXIT_CHECK
    out = capsys.readouterr().out
    assert "certificate check polynomial" in out
    assert _read(tmp_path / "summary.json")["failures"][0]["check"] == "polynomial"


def test_flow_finite_seed_7(tmp_path):
    assert _run(["flow-finite", "--radii", "2,1", "--seed", 7, "--out", tmp_path]) == 0
    summary = _read(tmp_path / "summary.json")
    assert summary["f_limit"] == pytest.approx(0.5, abs=1e-6)
    assert summary["trajectories"][0]["energy_identity_ok"]
    traj = _read(tmp_path / "trajectory_000.json")
    assert set(traj[0]) == {"t", "f", "grad_norm", "state"}


def test_flow_finite_jsonl_and_several_trajectories(tmp_path):
    argv = ["flow-finite", "--radii", "1,1", "--trajectories", 3, "--format", "jsonl", "--out", tmp_path]
    assert _run(argv) == 0
    files = sorted(p.name for p in tmp_path.glob("trajectory_*.jsonl"))
    assert files == ["trajectory_000.jsonl", "trajectory_001.jsonl", "trajectory_002.jsonl"]
    first = [json.loads(x) for x in (tmp_path / files[0]).read_text().splitlines()]
    second = [json.loads(x) for x in (tmp_path / files[1]).read_text().splitlines()]
    assert first[0]["state"] != second[0]["state"]
    assert all(s["f_limit"] <= 1e-10 for s in _read(tmp_path / "summary.json")["trajectories"])


def test_flow_finite_timeout_is_a_check_failure(tmp_path):
    assert _run(["flow-finite", "--t-max", 0.1, "--out", tmp_path]) == cli.EXIT_CHECK


def test_flow_boundary(tmp_path):
    assert _run(["flow-boundary", "--modes", 8, "--xi", 0.15, "--out", tmp_path]) == 0
    summary = _read(tmp_path / "summary.json")
    assert summary["kernel_dim"] == summary["expected_kernel_dim"] == 1
    assert summary["monotone"] and summary["failures"] == []
    assert summary["twist"] == pytest.approx(0.3)
    dump = _read(tmp_path / "operator.json")
    assert len(dump) == 3 * 17


def test_birkhoff_random_and_file(tmp_path):
    assert _run(["birkhoff", "--seed", 3, "--out", tmp_path / "a"]) == 0
    s = _read(tmp_path / "a" / "summary.json")
    assert sum(s["indices"]) == s["winding"]
    assert s["residual"] <= 1e-8
    loop_file = tmp_path / "a" / "loop.json"
    assert _run(["birkhoff", "--loop-file", loop_file, "--out", tmp_path / "b"]) == 0
    assert _read(tmp_path / "b" / "factorization.json") == _read(tmp_path / "a" / "factorization.json")


def test_birkhoff_bad_loop_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(["birkhoff", "--loop-file", bad, "--out", tmp_path / "o"]) == cli.EXIT_USAGE


def test_verify(tmp_path, capsys):
    assert _run(["verify", "--out", tmp_path]) == 0
    checks = _read(tmp_path / "verify.json")["checks"]
    names = {c["name"] for c in checks}
    assert {"dtn_vs_fd", "series_division", "gradient_vs_fd"} <= names
    assert all(c["passed"] for c in checks)
    assert capsys.readouterr().out.count("PASS") == len(checks)


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["strata", "--radii", "1,1"],
        ["strata", "--g", "two"],
        ["flow-finite", "--format", "xml"],
        ["flow-finite", "--seed", "-1"],
        ["flow-finite", "--workers", "0"],
        ["nonsense"],
    ],
)
def test_usage_errors(argv, tmp_path, capsys):
    assert _run(argv + ["--out", tmp_path] if argv else argv) == cli.EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_unknown_config_keys(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {"subcommand": "strata", "params": {"genus": 2}})
    assert _run(["strata", "--config", cfg, "--out", tmp_path / "o"]) == cli.EXIT_USAGE
    cfg = _write_config(tmp_path / "d.json", {"subcommand": "strata", "colour": "red"})
    assert _run(["strata", "--config", cfg, "--out", tmp_path / "o"]) == cli.EXIT_USAGE
    cfg = _write_config(tmp_path / "e.json", {"subcommand": "birkhoff"})
    assert _run(["strata", "--config", cfg, "--out", tmp_path / "o"]) == cli.EXIT_USAGE


def test_flags_override_config(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {"subcommand": "strata", "params": {"g": 3}, "seed": 5})
    assert _run(["strata", "--config", cfg, "--g", 2, "--out", tmp_path / "o"]) == 0
    manifest = _read(tmp_path / "o" / "manifest.json")
    assert manifest["config"]["params"]["g"] == 2
    assert manifest["seed"] == 5


def test_rerun_is_byte_identical(tmp_path):
    for argv in (
        ["flow-finite", "--radii", "2,1", "--seed", 11, "--format", "csv"],
        ["flow-boundary", "--modes", 6, "--xi", 0.2, "--seed", 4, "--samples", 21],
        ["birkhoff", "--seed", 9],
        ["strata", "--g", 4],
    ):
        first = tmp_path / argv[0] / "first"
        again = tmp_path / argv[0] / "again"
        assert _run(argv + ["--out", first]) == 0
        assert _run(["rerun", first / "manifest.json", "--out", again]) == 0
        assert _tree(first) == _tree(again)


def test_manifest_as_config(tmp_path):
    assert _run(["birkhoff", "--seed", 2, "--out", tmp_path / "a"]) == 0
    argv = ["birkhoff", "--config", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b"]
    assert _run(argv) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_seed_isolation_of_exact_outputs(tmp_path):
    for seed in (0, 1, 2**63):
        assert _run(["strata", "--g", 2, "--seed", seed, "--out", tmp_path / str(seed)]) == 0
    outputs = {(tmp_path / str(s) / "betti.json").read_bytes() for s in (0, 1, 2**63)}
    assert len(outputs) == 1


def test_derive_seed_is_deterministic_and_distinct():
    seeds = [cli.derive_seed(42, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [cli.derive_seed(42, i) for i in range(100)]
    assert cli.derive_seed(43, 0) != seeds[0]


def test_sweep_radii(tmp_path, capsys):
    base = _write_config(tmp_path / "base.json", {"subcommand": "flow-finite", "seed": 1})
    grid = _write_config(tmp_path / "grid.json", {"radii": [[1.0, 1.0], [1.5, 1.0], [2.0, 1.0]]})
    argv = ["sweep", "--config", base, "--grid", grid, "--workers", 2, "--out", tmp_path / "sw"]
    assert _run(argv) == 0
    index = [json.loads(x) for x in (tmp_path / "sw" / "sweep_index.jsonl").read_text().splitlines()]
    assert [p["index"] for p in index] == [0, 1, 2]
    for p in index:
        r1 = p["params"]["radii"][0]
        summary = _read(tmp_path / "sw" / p["directory"] / "summary.json")
        assert summary["f_limit"] == pytest.approx(0.5 * (r1 - 1) ** 2, abs=1e-6)
        manifest = _read(tmp_path / "sw" / p["directory"] / "manifest.json")
        assert manifest["seed"] == p["seed"] == cli.derive_seed(1, p["index"])
    assert "3 point(s), 0 failed" in capsys.readouterr().out


def test_sweep_is_deterministic_across_worker_counts(tmp_path):
    base = _write_config(tmp_path / "base.json", {"subcommand": "birkhoff", "seed": 8})
    grid = _write_config(tmp_path / "grid.json", {"degree": [1, 2, 3]})
    assert _run(["sweep", "--config", base, "--grid", grid, "--out", tmp_path / "one"]) == 0
    argv = ["sweep", "--config", base, "--grid", grid, "--workers", 3, "--out", tmp_path / "three"]
    assert _run(argv) == 0
    assert _tree(tmp_path / "one") == _tree(tmp_path / "three")


def test_sweep_mode_cutoff_gives_identical_flows(tmp_path):
    init = tmp_path / "init.json"
    init.write_text(json.dumps([[0, "h", 1.0, 0.0], [1, "e+", 0.5, 0.25], [-1, "e-", 0.5, -0.25]]))
    base = _write_config(
        tmp_path / "base.json",
        {"subcommand": "flow-boundary", "params": {"init_file": str(init), "xi": 0.15, "samples": 21}},
    )
    grid = _write_config(tmp_path / "grid.json", {"modes": [8, 16, 32]})
    assert _run(["sweep", "--config", base, "--grid", grid, "--out", tmp_path / "sw"]) == 0
    flows = [(tmp_path / "sw" / f"point_{i:04d}" / "trajectory.json").read_bytes() for i in range(3)]
    assert flows[0] == flows[1] == flows[2]


def test_sweep_reports_failed_points(tmp_path, capsys):
    base = _write_config(tmp_path / "base.json", {"subcommand": "strata"})
    grid = _write_config(tmp_path / "grid.json", {"g": [0, 2]})
    assert _run(["sweep", "--config", base, "--grid", grid, "--out", tmp_path / "sw"]) == cli.EXIT_CHECK
    out = capsys.readouterr().out
    assert "1 failed" in out and "failed point 0" in out


def test_empty_grid_is_a_no_op(tmp_path):
    base = _write_config(tmp_path / "base.json", {"subcommand": "strata"})
    grid = _write_config(tmp_path / "grid.json", {})
    assert _run(["sweep", "--config", base, "--grid", grid, "--out", tmp_path / "sw"]) == 0
    assert not (tmp_path / "sw").exists()


def test_sweep_rejects_unknown_grid_key(tmp_path):
    base = _write_config(tmp_path / "base.json", {"subcommand": "strata"})
    grid = _write_config(tmp_path / "grid.json", {"genus": [1]})
    assert _run(["sweep", "--config", base, "--grid", grid, "--out", tmp_path / "sw"]) == cli.EXIT_USAGE


def test_init_file_outside_cutoff_is_usage_error(tmp_path):
    init = tmp_path / "init.json"
    init.write_text(json.dumps([[9, "h", 1.0, 0.0], [-9, "h", 1.0, 0.0]]))
    argv = ["flow-boundary", "--modes", 4, "--init-file", init, "--out", tmp_path / "o"]
    assert _run(argv) == cli.EXIT_USAGE
