import json

import numpy as np
import pytest

from qvi_switch.cli import main
from qvi_switch.engine import orthant_start, run_qvi, solve_qstar_policy_iteration
from qvi_switch.errors import InputError
from qvi_switch.lyapunov import build_certificate
from qvi_switch.switching import system_matrix
from qvi_switch.workbench import (
    TRACE_COLUMNS,
    ExperimentConfig,
    emit_halfplane_data,
    extra_certificates,
    generate_mdp,
    load_mdp,
    mdp_to_dict,
    parse_csv,
    run_experiment,
    save_mdp,
    trace_csv,
    verify_directory,
)

from conftest import scalar_mdp, seeded_mdp


@pytest.fixture
def zero_scalar_file(tmp_path):
    path = tmp_path / "scalar.json"
    save_mdp(scalar_mdp(reward=0.0), path)
    return path


class TestGenerate:
    def test_deterministic(self):
        cfg = ExperimentConfig(seed=17, num_states=4, num_actions=3, gamma=0.9)
        a, b = generate_mdp(cfg), generate_mdp(cfg)
        assert a.transitions.tobytes() == b.transitions.tobytes()
        assert a.rewards.tobytes() == b.rewards.tobytes()

    @pytest.mark.parametrize("seed", range(20))
    def test_rows_and_rewards(self, seed):
        mdp = generate_mdp(ExperimentConfig(seed=seed, num_states=6, num_actions=2))
        np.testing.assert_allclose(mdp.transitions.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(mdp.transitions > 0)
        assert np.abs(mdp.rewards).max() <= 1.0

    def test_different_seeds_differ(self):
        a = generate_mdp(ExperimentConfig(seed=1))
        b = generate_mdp(ExperimentConfig(seed=2))
        assert not np.array_equal(a.rewards, b.rewards)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"q0_mode": "bogus"},
            {"w_mode": "bogus"},
            {"epsilon": "lots"},
            {"num_iters": -1},
            {"q0_mode": "custom-file"},
            {"num_states": 0},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(InputError):
            ExperimentConfig(**kwargs)

    def test_auto_epsilon(self):
        assert ExperimentConfig(epsilon="auto").resolved_epsilon(0.9) == pytest.approx(0.05)
        assert ExperimentConfig(epsilon="0.02").resolved_epsilon(0.9) == 0.02


class TestFiles:
    def test_mdp_round_trip(self, tmp_path):
        mdp = seeded_mdp(9, 4, 3, 0.95)
        save_mdp(mdp, tmp_path / "m.json")
        assert load_mdp(tmp_path / "m.json") == mdp

    def test_reward_tensor_in_file(self, tmp_path):
        d = {
            "num_states": 2,
            "num_actions": 1,
            "gamma": 0.5,
            "transitions": [[[0.5, 0.5], [1.0, 0.0]]],
            "rewards": [[[1.0, 0.0], [-0.5, 0.9]]],
        }
        (tmp_path / "m.json").write_text(json.dumps(d))
        np.testing.assert_allclose(load_mdp(tmp_path / "m.json").rewards, [0.5, -0.5])

    def test_bad_files(self, tmp_path):
        with pytest.raises(InputError):
            load_mdp(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(InputError):
            load_mdp(tmp_path / "bad.json")
        (tmp_path / "partial.json").write_text('{"num_states": 1}')
        with pytest.raises(InputError):
            load_mdp(tmp_path / "partial.json")

    def test_trace_csv_format(self):
        mdp = seeded_mdp(0, 3, 2, 0.9)
        qstar = solve_qstar_policy_iteration(mdp)
        cert = build_certificate(system_matrix(qstar, mdp), 0.9)
        text = trace_csv(run_qvi(mdp, orthant_start(mdp), 5, qstar=qstar), cert)
        assert "\r" not in text and text.endswith("\n")
        lines = text.splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        rows = parse_csv(text)
        assert len(rows) == 6
        assert rows[0]["inf_ratio"] == "" and rows[0]["m_ratio"] == ""
        assert rows[0]["v_functional"] == rows[0]["v_bound"]
        # shortest round-trip decimal formatting
        assert float(rows[3]["inf_norm"]) == run_qvi(mdp, orthant_start(mdp), 5, qstar=qstar).steps[3].inf_norm

    def test_trace_csv_without_certificate_leaves_blanks(self):
        mdp = seeded_mdp(0, 2, 2, 0.5)
        rows = parse_csv(trace_csv(run_qvi(mdp, np.zeros(4), 3)))
        assert all(r["m_norm"] == "" and r["v_functional"] == "" for r in rows)


class TestHalfplane:
    def test_scalar(self):
        mdp = scalar_mdp(reward=0.0)
        cert = build_certificate([[0.9]], 0.9, 0.05)
        rows = parse_csv(emit_halfplane_data(run_qvi(mdp, orthant_start(mdp), 10), [cert]))
        for k, row in enumerate(rows):
            assert float(row["v_functional_0"]) == pytest.approx(-10 * 0.9**k * 19, rel=1e-12)
            assert float(row["v_bound_0"]) == pytest.approx(-10 * 0.95**k * 19, rel=1e-12)
        assert rows[0]["v_functional_0"] == rows[0]["v_bound_0"]

    def test_three_certificates_bound_dominates(self):
        cfg = ExperimentConfig(seed=3, num_states=4, num_actions=3, gamma=0.9)
        mdp = generate_mdp(cfg)
        qstar = solve_qstar_policy_iteration(mdp)
        certs = extra_certificates(cfg, mdp, qstar, 3)
        rows = parse_csv(emit_halfplane_data(run_qvi(mdp, orthant_start(mdp), 100, qstar=qstar), certs))
        assert len(rows[0]) == 1 + 2 * 3
        for row in rows:
            for j in range(3):
                assert float(row[f"v_bound_{j}"]) <= float(row[f"v_functional_{j}"]) + 1e-9
                assert float(row[f"v_functional_{j}"]) <= 1e-9


class TestRunExperiment:
    def test_scalar(self, tmp_path, zero_scalar_file):
        cfg = ExperimentConfig(num_states=1, num_actions=1, gamma=0.9, mdp_file=str(zero_scalar_file), out_dir=str(tmp_path / "out"))
        result = run_experiment(cfg)
        assert result.exit_code == 0
        rows = parse_csv((tmp_path / "out" / "trace.csv").read_text())
        assert float(rows[1]["inf_norm"]) == pytest.approx(9.0, abs=1e-12)
        for name in ("mdp.json", "qstar.json", "certificate.json", "trace.csv", "report.json"):
            assert (tmp_path / "out" / name).exists()

    def test_random_start_gating(self, tmp_path):
        cfg = ExperimentConfig(seed=4, q0_mode="random", out_dir=str(tmp_path))
        result = run_experiment(cfg)
        report = json.loads((tmp_path / "report.json").read_text())
        assert result.exit_code == 0
        assert report["q0_in_orthant"] is False
        assert report["claims"]["orthant_invariance"]["status"] == "not_applicable"
        assert report["claims"]["infnorm_contraction"]["status"] == "pass"

    def test_custom_q0(self, tmp_path):
        mdp = generate_mdp(ExperimentConfig(seed=2, num_states=2, num_actions=2))
        qstar = solve_qstar_policy_iteration(mdp)
        (tmp_path / "q0.json").write_text(json.dumps((qstar - 0.5).tolist()))
        cfg = ExperimentConfig(seed=2, num_states=2, num_actions=2, q0_mode="custom-file", q0_file=str(tmp_path / "q0.json"), out_dir=str(tmp_path / "o"))
        result = run_experiment(cfg)
        assert result.exit_code == 0 and result.report["q0_in_orthant"] is True

    def test_deterministic_outputs(self, tmp_path):
        files = ("trace.csv", "report.json", "certificate.json", "mdp.json", "qstar.json")
        out = []
        for d in ("a", "b"):
            run_experiment(ExperimentConfig(seed=11, w_mode="random-positive", out_dir=str(tmp_path / d)))
            out.append([(tmp_path / d / f).read_bytes() for f in files])
        assert out[0] == out[1]

    def test_report_mdp_round_trip(self, tmp_path):
        cfg = ExperimentConfig(seed=8, out_dir=str(tmp_path))
        run_experiment(cfg)
        assert load_mdp(tmp_path / "mdp.json") == generate_mdp(cfg)

    def test_exit_code_matches_report(self, tmp_path):
        result = run_experiment(ExperimentConfig(seed=5, out_dir=str(tmp_path)))
        report = json.loads((tmp_path / "report.json").read_text())
        assert (result.exit_code == 0) == (report["failed"] == []) == report["passed"]
        assert "prng" in report and "PCG64" in report["prng"]

    def test_verify_directory(self, tmp_path):
        run_experiment(ExperimentConfig(seed=6, trace_json=True, halfplane_certs=2, out_dir=str(tmp_path)))
        assert verify_directory(tmp_path).exit_code == 0
        trace = json.loads((tmp_path / "trace.json").read_text())
        assert len(trace["iterates"]) == 201
        assert (tmp_path / "halfplane.csv").exists()

    def test_verify_detects_tampering(self, tmp_path):
        run_experiment(ExperimentConfig(seed=6, out_dir=str(tmp_path)))
        cert = json.loads((tmp_path / "certificate.json").read_text())
        cert["M"][0][0] *= 0.5
        (tmp_path / "certificate.json").write_text(json.dumps(cert))
        result = verify_directory(tmp_path)
        assert result.exit_code == 1
        assert any(f.startswith("certificate") for f in result.failures)


class TestCli:
    def test_gen_solve_certify(self, tmp_path, capsys):
        mdp_path = tmp_path / "mdp.json"
        assert main(["gen", "--seed", "3", "--num-states", "3", "--num-actions", "2", "--out", str(mdp_path)]) == 0
        assert load_mdp(mdp_path) == generate_mdp(ExperimentConfig(seed=3, num_states=3, num_actions=2))

        assert main(["solve", str(mdp_path), "-o", str(tmp_path / "q.json")]) == 0
        assert main(["solve", str(mdp_path), "--method", "bruteforce", "-o", str(tmp_path / "qb.json")]) == 0
        q = json.loads((tmp_path / "q.json").read_text())
        qb = json.loads((tmp_path / "qb.json").read_text())
        np.testing.assert_allclose(q["qstar"], qb["qstar"], atol=1e-9)
        assert q["bellman_residual"] <= 1e-10

        code = main(["certify", str(mdp_path), "--qstar", str(tmp_path / "q.json"), "--epsilon", "0.02", "--w-mode", "random-positive", "-o", str(tmp_path / "c.json")])
        assert code == 0
        cert = json.loads((tmp_path / "c.json").read_text())
        assert cert["epsilon"] == 0.02 and cert["checks"]["m_bounds"]["status"] == "pass"

    def test_gen_to_stdout(self, capsys):
        assert main(["gen", "--seed", "0", "--num-states", "2", "--num-actions", "1"]) == 0
        d = json.loads(capsys.readouterr().out)
        assert d == mdp_to_dict(generate_mdp(ExperimentConfig(seed=0, num_states=2, num_actions=1)))

    def test_run_and_verify(self, tmp_path, capsys):
        out = tmp_path / "exp"
        assert main(["run", "--seed", "1", "--gamma", "0.95", "--epsilon", "auto", "--q0", "orthant", "--out-dir", str(out)]) == 0
        assert main(["verify", str(out)]) == 0
        (out / "trace.csv").write_text((out / "trace.csv").read_text().replace("0,", "1,", 1))
        assert main(["verify", str(out)]) == 1
        assert "trace_csv_mismatch" in capsys.readouterr().err

    def test_input_errors_exit_2(self, tmp_path, capsys):
        assert main(["solve", str(tmp_path / "nope.json")]) == 2
        (tmp_path / "bad.json").write_text(json.dumps({"num_states": 1, "num_actions": 1, "gamma": 1.0, "transitions": [[1.0]], "rewards": [0.0]}))
        assert main(["solve", str(tmp_path / "bad.json")]) == 2
        assert "discount" in capsys.readouterr().err
        assert main(["run", "--gamma", "0.9", "--epsilon", "0.5", "--out-dir", str(tmp_path / "x")]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["run"])
        assert exc.value.code == 2

    def test_campaign_100_seeds(self, tmp_path, capsys):
        code = main(["run", "--seed", "0", "--num-seeds", "100", "--num-states", "5", "--num-actions", "3", "--gamma", "0.95", "--out-dir", str(tmp_path), "--workers", "4"])
        assert code == 0
        assert "100/100 experiments passed" in capsys.readouterr().out
        assert (tmp_path / "seed_0099" / "report.json").exists()
