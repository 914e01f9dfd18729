import json

import pytest

from perturba.cli import main
from perturba.problem import preset


def _bad_problem(tmp_path):
    doc = preset("scalar-const").to_json()
    doc["h"] = [[1, -1]]  # h(0) = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    return path


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    lines = capsys.readouterr().out.splitlines()
    names = [ln.split("\t")[0] for ln in lines]
    assert len(names) >= 4
    assert "scalar-const" in names and "coupled-2x2" in names
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.splitlines() == lines


def test_validate_names_violated_condition(tmp_path, capsys):
    code = main(["validate", "--problem", str(_bad_problem(tmp_path))])
    out = capsys.readouterr()
    assert code == 3
    doc = json.loads(out.out)
    assert doc["failed"] == ["4"]
    assert "4" in out.err


def test_validate_preset_passes(capsys):
    assert main(["validate", "--preset", "complex-2x2"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


@pytest.mark.parametrize(
    "argv",
    [
        ["validate", "--preset", "no-such-problem"],
        ["validate"],
        ["expand", "--preset", "scalar-const", "--order", "7", "--epsilons", "1/16"],
        ["expand", "--preset", "scalar-const", "--epsilons", "1/8,1/4"],
        ["verify", "--preset", "scalar-const", "--epsilons", "x/2"],
    ],
)
def test_configuration_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_expand_refuses_invalid_problem(tmp_path, capsys):
    assert main(["expand", "--problem", str(_bad_problem(tmp_path)), "--epsilons", "1/16"]) == 3


def test_expand_outputs_are_byte_identical(tmp_path):
    argv = ["expand", "--preset", "complex-2x2", "--order", "2", "--epsilons", "1/16,1/32"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "expansion.json" in files and "asymptotic_n2_eps0.0625.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    doc = json.loads((tmp_path / "a" / "expansion.json").read_text())
    assert doc["schema"] == "perturba/1" and [t["k"] for t in doc["terms"]] == [0, 1, 2]


def test_solve_ref_writes_fields(tmp_path):
    argv = ["solve-ref", "--preset", "scalar-const", "--epsilons", "1/16", "--nx", "32", "--nt", "32",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    head = json.loads((tmp_path / "reference_eps0.0625.json").read_text())
    assert head["meta"]["provenance"] == "reference"
    assert head["nx"] == 33


@pytest.mark.slow
def test_verify_scalar_preset(tmp_path):
    argv = ["verify", "--preset", "scalar-const", "--order", "0", "--epsilons", "1/16,1/32,1/64,1/128",
            "--format", "json,csv", "--out", str(tmp_path)]
    assert main(argv) == 0
    doc = json.loads((tmp_path / "convergence.json").read_text())
    assert doc["passed"] is True
    assert doc["epsilons"] == [1 / 16, 1 / 32, 1 / 64, 1 / 128]
    assert (tmp_path / "convergence.csv").read_text().startswith("epsilon,error,local_order\n")
    first = (tmp_path / "convergence.json").read_bytes()
    assert main(argv) == 0
    assert (tmp_path / "convergence.json").read_bytes() == first
