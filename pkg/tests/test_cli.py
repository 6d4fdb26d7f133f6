"""End-to-end tests of the command-line interface."""

import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gtransport import TOY_MODEL, read_csv, sample_toy, write_csv
from gtransport.cli import _load_sim_config, main
from gtransport.simulate import SimConfig, run_experiment

REPO = Path(__file__).resolve().parent.parent
TOY_DIAGRAM = REPO / "diagrams" / "toy_binary.sdg"
TYPES_DIAGRAM = REPO / "diagrams" / "variable_types.sdg"

CONFOUNDED = ("S_X -> X; X -> Z; X -> M; M -> Y; Z -> Y; "
              "exposure Z; outcome Y")


def run_cli(*argv):
    return main(list(argv))


# -- identify --------------------------------------------------------------


def test_identify_summary_text(capsys):
    assert run_cli("identify", "--diagram", str(TOY_DIAGRAM)) == 0
    out = capsys.readouterr().out
    assert "selection nodes: S_B, S_G" in out
    assert "exposure:        Z" in out
    assert "eligible pool:   B, G" in out


def test_identify_summary_json(capsys):
    assert run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["nodes"] == ["B", "G", "Y", "Z"]
    assert payload["selection_nodes"] == ["S_B", "S_G"]
    assert ["S_B", "B"] in payload["edges"]
    assert payload["eligible_pool"] == ["B", "G"]


def test_identify_admissible_set(capsys):
    code = run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--set", "B,G")
    assert code == 0
    assert "s-admissible" in capsys.readouterr().out


def test_identify_inadmissible_set_prints_witness(capsys):
    code = run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--set", "B")
    assert code == 1
    out = capsys.readouterr().out
    assert "not s-admissible: open path S_G -> G -> Y" in out


def test_identify_set_json(capsys):
    run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--set", "B", "--json")
    payload = json.loads(capsys.readouterr().out)
    assert payload == {
        "transport_set": ["B"],
        "admissible": False,
        "interventional": False,
        "witness": ["S_G", "G", "Y"],
    }


def test_identify_inline_graph(capsys):
    code = run_cli("identify", "--graph",
                   "A -> Y; Z -> Y; @differs A; exposure Z; outcome Y",
                   "--set", "A")
    assert code == 0


def test_identify_enumerate_toy(capsys):
    assert run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--enumerate") == 0
    out = capsys.readouterr().out
    assert "admissible transport sets (1):" in out
    assert "{B, G}" in out


def test_identify_minimal_on_shipped_taxonomy(capsys):
    assert run_cli("identify", "--diagram", str(TYPES_DIAGRAM),
                   "--minimal", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["minimal"] == [["MSTS"]]


def test_identify_enumerate_taxonomy_counts(capsys):
    assert run_cli("identify", "--diagram", str(TYPES_DIAGRAM),
                   "--enumerate", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["admissible"]) == 32
    assert payload["admissible"][0] == ["MSTS"]
    assert all("MSTS" in ts for ts in payload["admissible"])


def test_identify_interventional_flag(capsys):
    assert run_cli("identify", "--graph", CONFOUNDED, "--set", "M") == 1
    assert run_cli("identify", "--graph", CONFOUNDED, "--set", "M",
                   "--interventional") == 0


def test_identify_unknown_node_errors(capsys):
    code = run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--set", "Q")
    assert code == 1
    assert "error: unknown node" in capsys.readouterr().err


def test_identify_parse_error_reports_location(tmp_path, capsys):
    bad = tmp_path / "bad.sdg"
    bad.write_text("A -> \nexposure A\noutcome B\n")
    assert run_cli("identify", "--diagram", str(bad)) == 1
    assert "error: line 1" in capsys.readouterr().err


def test_identify_missing_file(capsys):
    assert run_cli("identify", "--diagram", "/nonexistent.sdg") == 1
    assert "error:" in capsys.readouterr().err


def test_identify_requires_a_source():
    with pytest.raises(SystemExit) as exc:
        run_cli("identify")
    assert exc.value.code == 2


def test_identify_rejects_both_sources():
    with pytest.raises(SystemExit) as exc:
        run_cli("identify", "--diagram", str(TOY_DIAGRAM), "--graph", "x")
    assert exc.value.code == 2


def test_enumeration_limit_flag(capsys):
    assert run_cli("identify", "--diagram", str(TYPES_DIAGRAM),
                   "--enumerate", "--limit", "2") == 1
    assert "error:" in capsys.readouterr().err


# -- transport -------------------------------------------------------------


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    write_csv(sample_toy(4000, seed=5), path)
    return str(path)


def test_transport_parametric(toy_csv, capsys):
    code = run_cli("transport", "--data", toy_csv, "--set", "B,G",
                   "--boot", "50", "--seed", "3", "--json")
    assert code == 0
    payload = json.loads(capsys.readouterr().out)["estimate"]
    assert payload["transport_set"] == ["B", "G"]
    assert payload["n_boot"] == 50
    assert payload["n_failed"] == 0
    assert payload["ci_low"] <= payload["phi"] <= payload["ci_high"]
    assert payload["phi"] == pytest.approx(
        TOY_MODEL.risk_difference(("B", "G")), abs=0.15)


def test_transport_text_output(toy_csv, capsys):
    assert run_cli("transport", "--data", toy_csv, "--set", "B",
                   "--boot", "40") == 0
    out = capsys.readouterr().out
    assert "transported contrast over {B}" in out
    assert "phi" in out and "95% CI" in out


def test_transport_empty_set(toy_csv, capsys):
    assert run_cli("transport", "--data", toy_csv, "--set", "",
                   "--boot", "40", "--json") == 0
    payload = json.loads(capsys.readouterr().out)["estimate"]
    assert payload["transport_set"] == []


def test_transport_discrete(toy_csv, capsys):
    code = run_cli("transport", "--data", toy_csv, "--set", "B,G",
                   "--discrete", "--json")
    assert code == 0
    payload = json.loads(capsys.readouterr().out)["discrete"]
    assert payload["risk_difference"] == pytest.approx(
        TOY_MODEL.risk_difference(("B", "G")), abs=0.15)


def test_transport_discrete_needs_covariates(toy_csv, capsys):
    assert run_cli("transport", "--data", toy_csv, "--set", "",
                   "--discrete") == 1
    assert "error:" in capsys.readouterr().err


def test_transport_positivity_section(toy_csv, capsys):
    assert run_cli("transport", "--data", toy_csv, "--set", "B,G",
                   "--boot", "40", "--positivity", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    names = [o["covariate"] for o in payload["positivity"]]
    assert names == ["B", "G"]
    for o in payload["positivity"]:
        assert o["unsupported_mass"] == 0.0


def test_transport_missing_file(capsys):
    assert run_cli("transport", "--data", "/no/such.csv", "--set", "B") == 1
    assert "error:" in capsys.readouterr().err


def test_transport_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("S,Z\n1,0\n")
    assert run_cli("transport", "--data", str(bad), "--set", "") == 1
    assert "error:" in capsys.readouterr().err


# -- simulate --------------------------------------------------------------

SIM_ARGS = ("simulate", "--models", "1", "--sets", "MSTS;W_c",
            "--replicates", "2", "--n", "300", "--boot", "8", "--seed", "7")


def test_simulate_table_output(capsys):
    assert run_cli(*SIM_ARGS) == 0
    out = capsys.readouterr().out
    assert "{MSTS}" in out and "{W_c}" in out
    assert "coverage" in out


def test_simulate_json_matches_direct_run(capsys):
    assert run_cli(*SIM_ARGS, "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["config"]["models"] == [1]
    assert payload["config"]["replicates"] == 2
    direct = run_experiment(SimConfig(models=(1,),
                                      transport_sets=(("MSTS",), ("W_c",)),
                                      replicates=2, n=300, n_boot=8, seed=7))
    for cell_json, cell in zip(payload["cells"], direct.cells):
        assert cell_json["transport_set"] == list(cell.transport_set)
        assert cell_json["bias"] == cell.bias
        assert cell_json["mse"] == cell.mse


def test_simulate_writes_csv(tmp_path, capsys):
    out = tmp_path / "cells.csv"
    assert run_cli(*SIM_ARGS, "--out", str(out)) == 0
    direct = run_experiment(SimConfig(models=(1,),
                                      transport_sets=(("MSTS",), ("W_c",)),
                                      replicates=2, n=300, n_boot=8, seed=7))
    buf = io.StringIO()
    direct.to_csv(buf)
    assert out.read_text() == buf.getvalue()
    assert f"wrote {out}" in capsys.readouterr().out


def test_simulate_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(json.dumps({"models": [1], "transport_sets": [["MSTS"]],
                               "replicates": 5, "n": 250, "n_boot": 8,
                               "seed": 4}))
    assert run_cli("simulate", "--config", str(cfg), "--replicates", "2",
                   "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["config"]["replicates"] == 2  # flag beats file
    assert payload["config"]["models"] == [1]
    assert payload["config"]["n"] == 250


def test_simulate_rejects_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text('{"models": [1], "bootstrap": 3}')
    assert run_cli("simulate", "--config", str(cfg)) == 1
    assert "unknown config keys: bootstrap" in capsys.readouterr().err


def test_simulate_rejects_invalid_json(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("{models: [1]}")
    assert run_cli("simulate", "--config", str(cfg)) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_workers_env_var(monkeypatch, capsys):
    monkeypatch.setenv("GTRANSPORT_WORKERS", "1")
    assert run_cli(*SIM_ARGS, "--json") == 0
    assert json.loads(capsys.readouterr().out)["config"]["workers"] == 1


def test_workers_flag_beats_env(monkeypatch, capsys):
    # If the (deliberately bad) env value were consulted the run would fail.
    monkeypatch.setenv("GTRANSPORT_WORKERS", "not-a-number")
    assert run_cli(*SIM_ARGS, "--workers", "1", "--json") == 0
    assert json.loads(capsys.readouterr().out)["config"]["workers"] == 1


def test_workers_env_invalid(monkeypatch, capsys):
    monkeypatch.setenv("GTRANSPORT_WORKERS", "zero")
    assert run_cli(*SIM_ARGS) == 1
    assert "GTRANSPORT_WORKERS" in capsys.readouterr().err


def test_shipped_configs_are_valid():
    desk = _load_sim_config(str(REPO / "configs" / "desk.cfg"))
    full = _load_sim_config(str(REPO / "configs" / "full_scale.cfg"))
    assert desk["replicates"] == 500 and desk["n_boot"] == 200
    assert full["replicates"] == 5000 and full["n_boot"] == 1000
    # Both must construct under the defaults they leave implicit.
    assert SimConfig(**desk).transport_sets == SimConfig(**full).transport_sets
    assert len(SimConfig(**desk).transport_sets) == 11


# -- toy -------------------------------------------------------------------


def test_toy_exact_text(capsys):
    assert run_cli("toy") == 0
    out = capsys.readouterr().out
    assert "adjust {B, G}" in out and "adjust {B}" in out
    assert "0.680" in out
    assert out.count("RD -0.121000") == 2  # shared risk difference


def test_toy_exact_json(capsys):
    assert run_cli("toy", "--json") == 0
    payload = json.loads(capsys.readouterr().out)["exact"]
    assert payload["B,G"]["risk_difference"] == pytest.approx(
        TOY_MODEL.risk_difference(("B", "G")), abs=1e-15)
    assert payload["B"]["risk_difference"] == pytest.approx(
        TOY_MODEL.risk_difference(("B",)), abs=1e-15)
    assert payload["B,G"]["risk_ratio"] != payload["B"]["risk_ratio"]


def test_toy_sampled(tmp_path, capsys):
    out = tmp_path / "toy.csv"
    assert run_cli("toy", "--sample", "2000", "--seed", "9",
                   "--out", str(out), "--json") == 0
    payload = json.loads(capsys.readouterr().out)["sample"]
    assert payload["n"] == 2000
    emp = payload["empirical"]["B,G"]["risk_difference"]
    assert emp == pytest.approx(TOY_MODEL.risk_difference(("B", "G")), abs=0.1)
    ds = read_csv(out)
    assert ds.n == 2000
    assert ds.covariate_names == ("B", "G")


def test_toy_out_requires_sample(capsys):
    assert run_cli("toy", "--out", "x.csv") == 1
    assert "requires --sample" in capsys.readouterr().err


# -- entry points ----------------------------------------------------------


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gtransport", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("gtransport 0.1.0 (backend: ")


def test_console_script_help():
    proc = subprocess.run(["gtransport", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for name in ("identify", "transport", "simulate", "toy"):
        assert name in proc.stdout
