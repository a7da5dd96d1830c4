from __future__ import annotations

import csv
import json
import os
import subprocess
import sys

import pytest

from skillforge.cli import main
from skillforge.errors import EXIT_CODES

BANANA = "Pick up the banana and place it onto the plate"
SERVE = "Give the guest a cup of water"


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CI", raising=False)
    for key in list(os.environ):
        if key.startswith("SKILLFORGE_"):
            monkeypatch.delenv(key)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_plan_banana(capsys):
    code, out, _ = run(capsys, "plan", BANANA, "--scene", "banana_plate_1")
    assert code == 0
    plan = json.loads(out)
    assert [s["signature"]["verb"] for s in plan["subtasks"]] == ["pick-up", "place"]


def test_plan_errors(capsys):
    code, out, err = run(capsys, "plan", BANANA, "--scene", "missing_scene")
    assert code == EXIT_CODES["FixtureMissing"] and out == "" and "missing_scene" in err
    code, out, _ = run(capsys, "plan", "  ", "--scene", "banana_plate_1")
    assert code == EXIT_CODES["EmptyInstruction"] and out == ""


def test_library_init_inspect_update(capsys):
    assert run(capsys, "library", "init")[0] == 0
    code, out, _ = run(capsys, "library", "inspect")
    lib = json.loads(out)
    assert code == 0 and lib["records"] == [] and lib["library_version"] == 1
    code, out, err = run(capsys, "library", "update", BANANA, "--scene", "banana_plate_1")
    assert json.loads(out)["new_skills"] == 2 and "2 new skills" in err
    code, out, err = run(capsys, "library", "update", BANANA, "--scene", "banana_plate_1")
    assert json.loads(out)["manifest"] == {"entries": []} and "0 new skills" in err
    assert run(capsys, "library", "init")[0] == EXIT_CODES["ConfigError"]


def test_library_commands_need_a_library(capsys):
    code, _, err = run(capsys, "library", "inspect")
    assert code == EXIT_CODES["ConfigError"] and "library init" in err


def test_corrupt_library_exit_code(capsys, tmp_path):
    (tmp_path / "library.json").write_text('{"schema_version": 1, "checks')
    assert run(capsys, "library", "inspect")[0] == EXIT_CODES["CorruptLibrary"]


def test_run_reports_skill_gap(capsys):
    run(capsys, "library", "init")
    run(capsys, "--granularity", "medium", "library", "update", "Lift up the bottle, then align and tilt the bottle towards the cup", "--scene", "guest_water_1")
    code, out, err = run(capsys, "run", SERVE, "--scene", "guest_water_1", "--seed", "1")
    assert code == EXIT_CODES["SkillGap"] and out == ""
    assert "medium/deliver.cup" in err
    assert "medium/lift.bottle" not in err


def test_run_untrained_skill(capsys):
    run(capsys, "library", "init")
    run(capsys, "library", "update", BANANA, "--scene", "banana_plate_1")
    code, _, _ = run(capsys, "run", BANANA, "--scene", "banana_plate_1", "--seed", "1")
    assert code == EXIT_CODES["SkillNotTrained"]


def test_run_with_record_training(capsys):
    run(capsys, "library", "init")
    code, out, _ = run(
        capsys, "run", BANANA, "--scene", "banana_plate_1", "--seed", "4", "--trials", "20",
        "--profile", "sim-perfect", "--record-training", "--trace",
    )
    assert code == 0
    res = json.loads(out)
    assert res["stage_rates"] == [100.0, 100.0] and len(res["outcomes"]) == 20
    lib = json.loads(run(capsys, "library", "inspect")[1])
    assert {r["status"] for r in lib["records"]} == {"Trained"}
    # a plain run afterwards does not touch the library
    before = (run(capsys, "library", "inspect")[1])
    run(capsys, "run", BANANA, "--scene", "banana_plate_1", "--seed", "4", "--profile", "sim-coinflip")
    assert run(capsys, "library", "inspect")[1] == before


def test_seed_required_in_ci(capsys, monkeypatch):
    run(capsys, "library", "init")
    monkeypatch.setenv("CI", "true")
    code, _, err = run(capsys, "eval", "table1", "--no-figures")
    assert code == EXIT_CODES["ConfigError"] and "--seed" in err
    code, _, _ = run(capsys, "eval", "table1", "--no-figures", "--seed", "3", "--trials", "2")
    assert code == 0


def test_eval_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "table1", "--seed", "7", "--out", "res")
    assert code == 0
    files = json.loads(out)["files"]
    assert (tmp_path / "res" / "report.md").is_file()
    assert (tmp_path / "res" / "pick_place_banana" / "success_rates.png").is_file()
    with open(tmp_path / "res" / "pick_place_banana" / "octo-ours.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "stage", "both ID", "banana OOD", "plate OOD", "both OOD"]
    assert [r[:2] for r in rows[1:]] == [["Octo(Ours)", "Pick up"], ["Octo(Ours)", "Place"]]
    assert len(files) == 3 * (6 + 2) + 1


def test_cost(capsys):
    code, out, _ = run(capsys, "cost", "pour_water", "pick_place_banana", "pick_place_pen")
    report = json.loads(out)
    assert code == 0 and report["totals"] == {"EndToEnd": 78, "SkillBased": 51}


def test_cost_bad_spec(capsys):
    assert run(capsys, "cost", "no_such_task")[0] == EXIT_CODES["ConfigError"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "skillforge", "plan", BANANA, "--scene", "banana_plate_1"],
        capture_output=True,
        text=True,
        cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["scene_id"] == "banana_plate_1"


def test_exit_codes_are_distinct():
    assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)
