import csv
import json

import pytest

from pepsim import cli
from pepsim import peps as P


def run(tmp_path, command, cfg, *extra):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    out = tmp_path / f"{command}-out.json"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, (json.loads(out.read_text()) if out.exists() else None)


ITE = {"schema": 1, "grid": [2, 2], "hamiltonian": {"model": "j1j2", "j1": [1, 1, 1], "h": [0.2, 0.2, 0.2]},
       "tau": 0.05, "steps": 4, "r": 2, "m": 4, "record_every": 2, "seed": 3}


def test_ite_document_layout(tmp_path):
    code, doc = run(tmp_path, "ite", ITE)
    assert code == 0
    assert set(doc) == {"schema", "command", "config", "results", "instrumentation", "versions", "timing"}
    assert doc["config"]["seed"] == 3 and doc["config"]["tau"] == 0.05
    assert doc["results"]["steps"] == [2, 4]
    assert doc["instrumentation"]["flops"] > 0


def test_seed_flag_overrides_config(tmp_path):
    code, doc = run(tmp_path, "ite", ITE, "--seed", "11")
    assert code == 0 and doc["config"]["seed"] == 11


def test_repeat_runs_identical_modulo_timing(tmp_path):
    _, a = run(tmp_path, "ite", ITE, "--strict-deterministic")
    _, b = run(tmp_path, "ite", ITE, "--strict-deterministic")
    a.pop("timing"), b.pop("timing")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_vqe_and_rqc_commands(tmp_path):
    vqe = {"grid": [1, 2], "hamiltonian": {"model": "j1j2"}, "max_evals": 10, "r": 2, "m": 4}
    code, doc = run(tmp_path, "vqe", vqe)
    assert code == 0 and len(doc["results"]["best_theta"]) == 2
    rqc = {"grid": [2, 2], "depth": 4, "m": [2, 16]}
    code, doc = run(tmp_path, "rqc-bench", rqc, "--threads", "1")
    assert code == 0 and doc["results"]["bmps"][-1] < 1e-10


def test_contract_bench_csv(tmp_path):
    cfg = {"n": [3], "r": [2], "m": [2, 8]}
    csv_path = tmp_path / "bench.csv"
    code, doc = run(tmp_path, "contract-bench", cfg, "--csv", str(csv_path))
    assert code == 0
    rows = list(csv.DictReader(csv_path.open()))
    assert list(rows[0]) == list(cli.CSV_COLUMNS)
    assert len(rows) == 4 and float(rows[-1]["rel_error"]) < 1e-9
    assert len(doc["timing"]["per_row_seconds"]) == 4


def test_expect_from_saved_state(tmp_path):
    p = tmp_path / "s.npz"
    P.save(P.computational_basis_state(2, 2, [1, 0, 0, 0]), p)
    cfg = {"state": str(p), "hamiltonian": {"text": "1.0 Z@(0,0)\n0.5 Z@(0,1) Z@(1,1)\n"}, "m": 4}
    code, doc = run(tmp_path, "expect", cfg)
    assert code == 0 and doc["results"]["energy_re"] == pytest.approx(-0.5)


def test_malformed_json_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "ite", '{"grid": [2, 2],\n  "steps": }')
    assert code == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("cfg", [
    {**ITE, "bogus": 1},
    {k: v for k, v in ITE.items() if k != "hamiltonian"},
    {**ITE, "tau": -1},
    {**ITE, "hamiltonian": {"model": "ising"}},
    {**ITE, "grid": "big"},
])
def test_config_errors_exit_2(tmp_path, cfg):
    code, doc = run(tmp_path, "ite", cfg)
    assert code == 2 and doc is None


def test_unknown_flag_exit_2(tmp_path):
    (tmp_path / "c.json").write_text("{}")
    assert cli.main(["ite", "--config", str(tmp_path / "c.json"), "--fast"]) == 2
    assert cli.main(["nope"]) == 2


def test_resource_error_exit_3(tmp_path):
    cfg = {"state": {"random": {"nrow": 6, "ncol": 6, "bond": 4}}, "family": "exact",
           "hamiltonian": {"text": "1.0 Z@(0,0)\n"}}
    code, doc = run(tmp_path, "expect", cfg)
    assert code == 3 and doc is None
