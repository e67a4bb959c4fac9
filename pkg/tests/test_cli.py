import json

import numpy as np
import pytest

from sparsecs.cli import main, parse_duration
from sparsecs.core import ProblemInstance, save_instance
from sparsecs.experiments import SyntheticSpec, brute_force_oracle, generate


@pytest.fixture
def instance_file(tmp_path):
    inst, _ = generate(SyntheticSpec(n=10, m=8, k=3, alpha=0.2, seed=0))
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    return path, inst


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip()
    records = [json.loads(line) for line in out.splitlines() if line]
    return code, records


def test_parse_duration():
    assert parse_duration("600s") == 600.0
    assert parse_duration("10m") == 600.0
    assert parse_duration("1.5h") == 5400.0
    assert parse_duration("250ms") == 0.25
    assert parse_duration("42") == 42.0
    with pytest.raises(Exception):
        parse_duration("ten minutes")


def test_solve_omp(capsys, instance_file):
    path, _ = instance_file
    code, recs = run_cli(capsys, "solve", "--instance", str(path), "--method", "omp")
    assert code == 0
    rec = recs[0]
    assert rec["status"] == "Optimal-heuristic"
    assert rec["schema_version"] == 1
    assert rec["sparsity"] > 0
    assert rec["residual_sq"] >= 0


def test_solve_missing_file(capsys, tmp_path):
    code = main(["solve", "--instance", str(tmp_path / "missing.json")])
    assert code == 1


def test_solve_bnb_zero_gap_matches_oracle(capsys, instance_file):
    path, inst = instance_file
    code, recs = run_cli(
        capsys, "solve", "--instance", str(path),
        "--method", "bnb", "--delta", "0", "--time-limit", "600s",
    )
    assert code == 0
    rec = recs[0]
    assert rec["gap"] <= 1e-9
    _, opt = brute_force_oracle(inst)
    assert rec["objective"] == pytest.approx(opt, abs=1e-6)


def test_solve_infeasible_exit_code(capsys, tmp_path):
    A = np.array([[1.0, 2.0], [0.0, 0.0]])
    inst = ProblemInstance(A, np.array([0.0, 5.0]), 1.0, gamma=1.0)
    path = tmp_path / "bad.json"
    save_instance(inst, path)
    code, recs = run_cli(capsys, "solve", "--instance", str(path), "--method", "bnb")
    assert code == 2
    assert recs[0]["status"] == "Infeasible"
    code = main(["solve", "--instance", str(path), "--method", "omp"])
    assert code == 2


def test_solve_deterministic_output(capsys, instance_file):
    path, _ = instance_file
    _, first = run_cli(capsys, "solve", "--instance", str(path), "--method", "bnb")
    _, second = run_cli(capsys, "solve", "--instance", str(path), "--method", "bnb")
    strip = lambda r: {k: v for k, v in r.items() if k != "runtime_ms"}
    assert strip(first[0]) == strip(second[0])


def test_solve_soc_and_sos_bounds(capsys, instance_file, tmp_path):
    path, inst = instance_file
    code, recs = run_cli(
        capsys, "solve", "--instance", str(path), "--method", "soc-bound"
    )
    assert code == 0
    soc = recs[0]["lower_bound"]

    cert_path = tmp_path / "cert.json"
    code, recs = run_cli(
        capsys, "solve", "--instance", str(path), "--method", "sos-bound",
        "--certificate-out", str(cert_path),
    )
    assert code == 0
    sos_bound = recs[0]["lower_bound"]
    assert sos_bound >= soc - 1e-6

    from sparsecs.sos import SosCertificate, verify_certificate

    cert = SosCertificate.from_json(cert_path.read_text())
    assert verify_certificate(inst, cert)


def test_sweep_minimal_config(capsys, tmp_path):
    cfg = {
        "n": [10], "m": [8], "k": [2], "alpha": [0.3],
        "seeds": [0, 1], "methods": ["omp", "bpd"],
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_path = tmp_path / "results.csv"
    code, recs = run_cli(
        capsys, "sweep", "--config", str(cfg_path), "--out", str(out_path)
    )
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 1 + 4  # header + 2 seeds x 2 methods
    assert lines[0].startswith("method,n,m,k,alpha,gamma,seed,sparsity")
    assert len(recs) == 2  # one summary line per (method, point)


def test_sweep_bad_config(capsys, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"n": [10]}))  # missing keys
    code = main(["sweep", "--config", str(cfg_path),
                 "--out", str(tmp_path / "o.csv")])
    assert code == 1
