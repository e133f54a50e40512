"""End-to-end command-line runs: exit codes, files, messages."""

import json
import subprocess
import sys

import numpy as np
import pytest

import gradsync.manifolds as mf
from gradsync import ManifoldKind, solve_eqp, trial_rng, wilson_halfwidth
from gradsync.cli import RunConfig

K = ManifoldKind.parse


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "gradsync.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


class TestSimulate:
    def test_consensus_run_writes_artifacts(self, tmp_path):
        out = run_cli(
            ["simulate", "--manifold", "sphere:2", "--graph", "complete:3",
             "--seed", "0", "--outdir", "run"],
            tmp_path,
        )
        assert out.returncode == 0
        assert out.stdout.startswith("outcome=Consensus")
        lines = (tmp_path / "run" / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,agent,x0,x1,x2,energy"
        assert lines[1].split(",")[1] == "1"
        doc = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert doc["outcome"] == "Consensus"
        assert set(doc) == {"outcome", "final_energy", "t_final", "steps", "metadata"}
        assert doc["metadata"]["seed"] == 0
        assert doc["metadata"]["manifold"] == "sphere:2"
        assert doc["metadata"]["backend"] in ("compiled", "pure")
        assert doc["metadata"]["init"] == "random"

    def test_twisted_initial_state_exits_2(self, tmp_path):
        out = run_cli(
            ["simulate", "--manifold", "circle", "--flow", "extrinsic",
             "--graph", "cycle:10", "--init", "twisted:1"],
            tmp_path,
        )
        assert out.returncode == 2
        assert "outcome=NonConsensusEquilibrium" in out.stdout

    def test_constnorm_sphere_converges_exit_0(self, tmp_path):
        out = run_cli(
            ["simulate", "--manifold", "sphere:3", "--flow", "extrinsic-constnorm",
             "--graph", "cycle:5", "--seed", "7"],
            tmp_path,
        )
        assert out.returncode == 0

    def test_horizon_exit_3(self, tmp_path):
        out = run_cli(
            ["simulate", "--manifold", "circle", "--graph", "cycle:8",
             "--horizon", "0.05", "--consensus-epsilon", "1e-9"],
            tmp_path,
        )
        assert out.returncode == 3
        doc = json.loads((tmp_path / "gradsync-out" / "summary.json").read_text())
        assert doc["outcome"] == "HorizonExhausted" and doc["t_final"] == 0.05

    def test_incompatible_flow_message(self, tmp_path):
        out = run_cli(
            ["simulate", "--manifold", "stiefel:2:3", "--flow", "intrinsic",
             "--graph", "cycle:3"],
            tmp_path,
        )
        assert out.returncode == 1
        assert out.stderr.strip() == "error: intrinsic flow unsupported on stiefel:2:3"

    def test_sset_initial_state(self, tmp_path):
        out = run_cli(
            ["simulate", "--manifold", "torus:2", "--graph", "cycle:12",
             "--init", "sset", "--winding", "1,0", "--flow", "intrinsic",
             "--outdir", "s"],
            tmp_path,
        )
        assert out.returncode == 2
        doc = json.loads((tmp_path / "s" / "summary.json").read_text())
        assert abs(doc["final_energy"] - np.pi**2 / 6) <= 1e-12
        assert doc["metadata"]["init"] == "sset"

    def test_npy_initial_state(self, tmp_path):
        rng = trial_rng(9, 0)
        stack = np.stack([mf.sample_uniform(K("sphere:2"), rng).value for _ in range(3)])
        np.save(tmp_path / "init.npy", stack)
        out = run_cli(
            ["simulate", "--manifold", "sphere:2", "--graph", "complete:3",
             "--init", "init.npy"],
            tmp_path,
        )
        assert out.returncode == 0

    @pytest.mark.parametrize(
        "args",
        [
            ["nosuchcommand"],
            ["simulate", "--no-such-flag"],
            ["simulate", "--manifold", "dodecahedron", "--graph", "cycle:3"],
            ["simulate", "--manifold", "circle", "--graph", "cycle:3", "--init", "bogus"],
            ["simulate", "--manifold", "circle", "--graph", "cycle:3", "--step", "-1"],
        ],
    )
    def test_bad_input_exits_1(self, args, tmp_path):
        out = run_cli(args, tmp_path)
        assert out.returncode == 1
        assert out.stderr.strip() != ""


class TestConfigFile:
    def test_round_trip_is_field_identical(self, tmp_path):
        cfg = RunConfig(
            command="simulate", manifold="torus:2", flow="intrinsic",
            graph="cycle:12", step=5e-3, horizon=0.25, trials=77,
            winding="1,0", weights="", outdir="here",
        )
        path = str(tmp_path / "run.ini")
        cfg.to_file(path)
        assert RunConfig.from_file(path) == cfg

    def test_config_drives_run_and_flags_override(self, tmp_path):
        cfg = RunConfig(
            command="simulate", manifold="circle", graph="cycle:8",
            horizon=0.05, consensus_epsilon=1e-9, seed=1, outdir="a",
        )
        path = str(tmp_path / "run.ini")
        cfg.to_file(path)
        out = run_cli(["simulate", "--config", path], tmp_path)
        assert out.returncode == 3
        doc = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert doc["t_final"] == 0.05
        out = run_cli(
            ["simulate", "--config", path, "--horizon", "0.1", "--outdir", "b"],
            tmp_path,
        )
        assert out.returncode == 3
        doc = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert doc["t_final"] == 0.1

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[run]\nmanifold = circle\nwarp-drive = on\n")
        out = run_cli(["simulate", "--config", str(path)], tmp_path)
        assert out.returncode == 1
        assert "warp-drive" in out.stderr


class TestBasin:
    def test_sphere_cell_matches_reported_value(self, tmp_path):
        out = run_cli(
            ["basin", "--manifold", "stiefel:1:2", "--flow", "stiefel",
             "--trials", "500", "--seed", "1", "--outdir", "b"],
            tmp_path,
        )
        assert out.returncode == 0
        assert out.stdout.startswith("mu_hat=")
        doc = json.loads((tmp_path / "b" / "basin.json").read_text())
        assert abs(doc["mu_hat"] - 0.95) <= 0.05
        assert doc["mu_hat"] == doc["successes"] / 500
        assert doc["halfwidth"] == wilson_halfwidth(doc["successes"], 500)
        assert sum(doc["outcome_counts"].values()) == 500
        assert doc["metadata"]["seed"] == 1

    def test_disconnected_group_diagonal_cell(self, tmp_path):
        out = run_cli(
            ["basin", "--manifold", "o:4", "--flow", "extrinsic",
             "--trials", "400", "--seed", "1", "--outdir", "b"],
            tmp_path,
        )
        assert out.returncode == 0
        doc = json.loads((tmp_path / "b" / "basin.json").read_text())
        assert abs(doc["mu_hat"] - 0.06) <= 0.05

    def test_workers_flag_does_not_change_counts(self, tmp_path):
        args = ["basin", "--manifold", "circle", "--trials", "40", "--seed", "5",
                "--horizon", "5"]
        a = run_cli([*args, "--outdir", "w1", "--workers", "1"], tmp_path)
        b = run_cli([*args, "--outdir", "w2", "--workers", "3"], tmp_path)
        assert a.returncode == 0 and b.returncode == 0
        da = json.loads((tmp_path / "w1" / "basin.json").read_text())
        db = json.loads((tmp_path / "w2" / "basin.json").read_text())
        assert da["outcome_counts"] == db["outcome_counts"]

    def test_table1_grid_csv(self, tmp_path):
        out = run_cli(
            ["basin", "--table1", "--pmax", "3", "--nmax", "4", "--trials", "2",
             "--horizon", "5", "--outdir", "g"],
            tmp_path,
        )
        assert out.returncode == 0
        assert "p\\n" in out.stdout
        lines = (tmp_path / "g" / "table1.csv").read_text().splitlines()
        assert lines[0] == "p,n,mu_hat,halfwidth,M,seed"
        assert len(lines) == 1 + 8  # valid (p, n) cells with p <= 3, n <= 4


class TestEquilibria:
    def test_spacings_match_qp_solution(self, tmp_path):
        w = [float(i) for i in range(1, 13)]
        out = run_cli(
            ["equilibria", "--manifold", "torus:2", "--n", "12",
             "--winding", "1,0", "--weights", ",".join(str(v) for v in w),
             "--flow", "intrinsic", "--directions", "0", "--outdir", "eq"],
            tmp_path,
        )
        assert out.returncode == 0
        doc = json.loads((tmp_path / "eq" / "equilibria.json").read_text())
        sol = solve_eqp(2 * np.pi, w)
        assert np.max(np.abs(np.array(doc["spacings"]) - sol.spacings)) <= 1e-12
        assert abs(doc["objective"] - sol.objective) <= 1e-12
        assert abs(doc["multiplier"] - sol.multiplier) <= 1e-12
        assert doc["residual"] <= 1e-10
        assert doc["metadata"]["graph"] == "cycle:12"

    def test_stable_circle_ring(self, tmp_path):
        out = run_cli(
            ["equilibria", "--manifold", "circle", "--n", "10",
             "--directions", "6", "--horizon", "30", "--outdir", "eq"],
            tmp_path,
        )
        assert out.returncode == 0
        doc = json.loads((tmp_path / "eq" / "equilibria.json").read_text())
        assert doc["classification"] == "stable"
        assert doc["return_fraction"] == 1.0
        assert doc["residual"] <= 1e-10
        assert "classification=stable" in out.stdout

    def test_unstable_triangle(self, tmp_path):
        out = run_cli(
            ["equilibria", "--manifold", "circle", "--n", "3",
             "--directions", "0", "--outdir", "eq"],
            tmp_path,
        )
        assert out.returncode == 0
        doc = json.loads((tmp_path / "eq" / "equilibria.json").read_text())
        assert doc["classification"] == "strict-saddle"
        assert doc["min_eig"] < -1e-6


class TestSelftest:
    def test_passes(self, tmp_path):
        out = run_cli(["selftest"], tmp_path)
        assert out.returncode == 0
        assert "all checks passed" in out.stdout
        assert out.stdout.count("... ok") >= 7
