import json

import pytest

from hamdaemon import cli


def run(tmp_path, name, command, config, *extra):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / name
    code = cli.main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    return code, out, json.loads((out / "manifest.json").read_text())


def test_empty_block_is_validation_error(tmp_path, capsys):
    code, _, manifest = run(tmp_path, "bad", "quantum", {"quantum": {}})
    assert code == 2
    assert "quantum" in capsys.readouterr().err
    assert manifest["failure"]["validation"]


def test_wrong_block_for_subcommand(tmp_path):
    code, _, _ = run(tmp_path, "bad2", "spectrum", {"quantum": {"l": 5}})
    assert code == 2


def test_spectrum_outputs_and_manifest(tmp_path):
    code, out, manifest = run(tmp_path, "sp", "spectrum", {"spectrum": {"n_sigma": 301}})
    assert code == 0
    assert (out / "levels.csv").exists() and (out / "crossings.csv").exists()
    assert manifest["checks_passed"] and manifest["task"] == "spectrum"
    assert set(manifest["versions"]) >= {"python", "numpy", "scipy"}
    assert manifest["config"]["spectrum"]["n_sigma"] == 301


def test_rerun_is_byte_identical(tmp_path):
    conf = {"quantum": {"n_grid": 256, "n_shift": 256, "span": [0, 0.7], "n_snapshots": 3}}
    code1, out1, _ = run(tmp_path, "q1", "quantum", conf)
    code2, out2, _ = run(tmp_path, "q2", "quantum", conf)
    assert code1 == code2 == 0
    files = sorted(p.name for p in out1.glob("*.csv"))
    assert files
    for name in files:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_seed_flag_changes_random_ensemble(tmp_path):
    conf = {"ensemble": {"n_traj": 8, "phi_sampling": "random", "span": [0, 0.3], "n_samples": 31,
                         "n_bins": 20, "n_times": 5}}
    _, a, ma = run(tmp_path, "e1", "ensemble", conf, "--seed", "1")
    _, b, _ = run(tmp_path, "e2", "ensemble", conf, "--seed", "1")
    _, c, _ = run(tmp_path, "e3", "ensemble", conf, "--seed", "2")
    assert ma["config"]["seed"] == 1
    qa, qb, qc = ((x / "ensemble_density_Q.csv").read_bytes() for x in (a, b, c))
    assert qa == qb and qa != qc


@pytest.mark.parametrize("command, conf", [
    ("classical", {"classical": {"span": [0, 0.3], "n_samples": 31}}),
    ("reduced", {"reduced": {"span": [0, 0.3], "n_samples": 31}}),
    ("lz-cascade", {"lz": {"l": 5}}),
    ("separatrix-scan", {"separatrix_scan": {"n_sigma": 5}}),
    ("bohr-sommerfeld", {"bohr_sommerfeld": {"l": 5, "taus": [1.3]}}),
    ("phase-space", {"phase_space": {"l": 5, "taus": [1.3], "n_phi": 64}}),
    ("entropy", {"entropy": {"n_grid": 256, "n_shift": 256, "span": [0, 0.7], "n_times": 3}}),
])
def test_subcommands_pass_checks(tmp_path, command, conf):
    code, out, manifest = run(tmp_path, command, command, conf)
    assert code == 0, manifest
    assert manifest["failure"] is None and manifest["checks_passed"]
    assert len(manifest["files"]) >= 1


def test_numerical_failure_recorded(tmp_path):
    # a pole start cannot be integrated
    code, _, manifest = run(tmp_path, "pole", "classical", {"classical": {"lz": 1.0, "span": [0, 0.1]}})
    assert code == 3
    assert manifest["failure"]["type"] == "PoleSingularityError"


def test_tol_flag(tmp_path):
    _, _, manifest = run(tmp_path, "tol", "classical", {"classical": {"span": [0, 0.2], "n_samples": 5}},
                         "--tol", "1e-9")
    assert manifest["config"]["tol"] == 1e-9


def test_schema_command(capsys):
    assert cli.main(["schema"]) == 0
    assert "properties" in json.loads(capsys.readouterr().out)


def test_reproduce_figure_mapping():
    assert set(cli.FIGURES) == set(range(1, 10))
    assert cli.FIGURES[7][0] == "spectrum" and cli.FIGURES[9][0] == "entropy"


def test_out_of_domain_input_is_validation_error(tmp_path):
    code, _, manifest = run(tmp_path, "ladder", "lz-cascade", {"lz": {"m0": 4.5}})
    assert code == 2
    assert manifest["failure"]["type"] == "DomainError"
