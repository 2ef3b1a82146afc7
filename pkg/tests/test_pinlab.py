from __future__ import annotations

import re
import subprocess
import sys
from pathlib import Path

import pytest

from pinlab import main

SCRIPT = Path(__file__).resolve().parent.parent / "scripts" / "pinlab.py"
GOLDEN = Path(__file__).resolve().parent / "golden"

SMALL_RUN = """\
law:
  preset: srw2d
disorder:
  family: gaussian
  seed: 11
beta: 1.0
u_grid: [-3.5, 1.5]
n_grid: [100, 300]
replicas: 4
blocks:
  K1: 400
  M: 20
  replicas: 5
annealed:
  beta_delta: [0.01, 0.5]
"""


@pytest.fixture
def small_config(tmp_path: Path) -> Path:
    path = tmp_path / "run.yml"
    path.write_text(SMALL_RUN)
    return path


def _table_config(tmp_path: Path, masses: str) -> Path:
    path = tmp_path / "table.yml"
    path.write_text(f"law:\n  preset: table\n  table: {masses}\n  n_max: 5\nn_grid: [5]\n"
                    f"blocks:\n  K1: 200\nannealed:\n  beta_delta: [0.6931471805599453]\n")
    return path


def test_dump_law(tmp_path, capsys):
    assert main(["dump-law", "--config", str(_table_config(tmp_path, "[0.5, 0.3, 0.2]"))]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "1 0.5 0.5"


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    assert main(["annealed", "--config", str(tmp_path / "nope.yml")]) == 2
    assert "not found" in capsys.readouterr().err


def test_unnormalized_table_is_a_numeric_error(tmp_path, capsys):
    assert main(["dump-law", "--config", str(_table_config(tmp_path, "[0.5, 0.4]"))]) == 1
    assert "InvalidSpec" in capsys.readouterr().err


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_annealed_table(tmp_path, capsys):
    assert main(["annealed", "--config", str(_table_config(tmp_path, "[0.5, 0.3, 0.2]"))]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("beta_delta,s,log_M,")
    fields = out[1].split(",")
    assert fields[4] == "exact_sum"
    assert out[-1] == "uc_a=-0.5"


def test_free_energy_does_not_depend_on_threads(small_config, tmp_path, capsys):
    outputs = []
    for threads in ("1", "8"):
        target = tmp_path / f"fe-{threads}.csv"
        assert main(["free-energy", "--config", str(small_config), "--threads", threads,
                     "--out", str(target)]) == 0
        outputs.append(target.read_bytes())
    assert outputs[0] == outputs[1]
    lines = outputs[0].decode().split("\n")
    assert lines[0].startswith("beta,u,delta,N,")
    assert len(lines) == 1 + 4 + 1
    assert all(line.endswith(",nan") for line in lines[1:-1])


def test_seed_override_changes_disorder(small_config, capsys):
    main(["free-energy", "--config", str(small_config)])
    first = capsys.readouterr().out
    main(["free-energy", "--config", str(small_config), "--seed", "12"])
    assert capsys.readouterr().out != first


def test_scan_summary_and_dp_dump(small_config, tmp_path, capsys):
    dump = tmp_path / "dp.txt"
    assert main(["scan-uc", "--config", str(small_config), "--dump-dp", str(dump)]) == 0
    summary = capsys.readouterr().out.splitlines()[-1]
    assert re.fullmatch(r"uc_a=\S+ bracket=\[\S+,\S+\]", summary)
    assert summary == "uc_a=-0.5 bracket=[-3.5,1.5]"
    lines = dump.read_text().splitlines()
    assert lines[0] == "0 0"
    assert len(lines) == 301


def _is_number(field: str) -> bool:
    if field.startswith("exp(") and field.endswith(")"):
        field = field[4:-1]
    try:
        float(field)
    except ValueError:
        return False
    return True


def test_scan_output_matches_golden(small_config, capsys):
    assert main(["scan-uc", "--config", str(small_config)]) == 0
    got = capsys.readouterr().out.splitlines()
    want = (GOLDEN / "scan_uc_small.txt").read_text().splitlines()
    assert len(got) == len(want)
    assert got[0] == want[0]
    assert got[-1] == want[-1]
    for line, expected in zip(got[1:-1], want[1:-1]):
        fields, expected_fields = line.split(","), expected.split(",")
        assert len(fields) == len(expected_fields)
        for field, pattern in zip(fields, expected_fields):
            assert _is_number(field) if pattern == "*" else field == pattern, line


def test_blocks(small_config, capsys):
    assert main(["blocks", "--config", str(small_config)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "replica,verdict,logW,logRef"
    assert len(out) == 1 + 5 + 1
    assert out[-1].startswith("p_good=")
    assert "K1=400 K2=4" in out[-1]


def test_bound(small_config, capsys):
    assert main(["bound", "--config", str(small_config)]) == 0
    out = capsys.readouterr().out.splitlines()
    terms = dict(line.split(",", 1) for line in out[1:-1])
    assert terms["mode"] == "desk"
    assert terms["K2"] == "4"
    assert out[-1] in ("conclusion=positive", "conclusion=none")


def test_validate_neutral_suite(capsys):
    assert main(["validate", "--suite", "neutral"]) == 0
    assert capsys.readouterr().out.startswith("neutral: 12/12 passed")


def test_entry_point_runs_as_a_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, str(SCRIPT), "annealed", "--config", str(tmp_path / "absent.yml")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert proc.stdout == ""
