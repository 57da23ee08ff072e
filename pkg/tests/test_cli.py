from __future__ import annotations

import csv
import json
import math

import pytest

from rydpulse.cli import (
    ConfigError,
    compare_documents,
    epsilon_key,
    main,
    parse_epsilons,
    parse_number,
    read_config,
    reference_path,
    within,
)

SHIPPED = [
    "gate3",
    "gate3_ideal",
    "gate2",
    "sbs",
    "sbs_ideal",
    "triangle",
    "triangle_ideal",
    "triangle_fast",
    "calibration",
]


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def gate2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gate2")
    assert main(["gate2", "--sweep", "0,0.5,0.8", "--n-v-samples", "51", "--output", str(out)]) == 0
    return out


def test_run_writes_report_trajectories_and_sweep(gate2_run):
    doc = json.loads((gate2_run / "report.json").read_text())
    assert doc["schema"] == "rydpulse-report/1"
    assert set(doc) == {"schema", "config", "report", "error_budget", "correction_angles", "sweep"}
    assert list(doc["sweep"]) == ["0", "0.5", "0.8"]
    for block in ("uu", "ud", "du", "dd"):
        assert (gate2_run / f"trajectory_{block}.csv").exists()
    with open(gate2_run / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4
    assert float(rows[3][3]) == pytest.approx(doc["sweep"]["0.8"]["fidelity"])


def test_run_is_byte_reproducible(gate2_run, tmp_path):
    assert main(["gate2", "--sweep", "0,0.5,0.8", "--n-v-samples", "51", "--output", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_bytes() == (gate2_run / "report.json").read_bytes()
    assert (tmp_path / "trajectory_ud.csv").read_bytes() == (gate2_run / "trajectory_ud.csv").read_bytes()


def test_compare_report_with_itself(gate2_run, capsys):
    path = str(gate2_run / "report.json")
    code, out, _ = _run(["compare", path, path], capsys)
    assert code == 0
    assert json.loads(out)["mode"] == "report"


def test_compare_against_shipped_reference(gate2_run, capsys):
    code, out, _ = _run(["compare", str(gate2_run / "report.json"), "gate2"], capsys)
    result = json.loads(out)
    assert code == 0, result["failures"]
    assert result["checked"] > 10


def test_compare_reports_failures(gate2_run, tmp_path, capsys):
    doc = json.loads((gate2_run / "report.json").read_text())
    doc["report"]["classes"]["uu"]["phase"] += 0.1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, out, _ = _run(["compare", str(bad), "gate2", "--output", str(tmp_path / "diff.json")], capsys)
    assert code == 1
    fields = [f["field"] for f in json.loads(out)["failures"]]
    assert fields == ["/report/classes/uu/phase"]
    assert json.loads((tmp_path / "diff.json").read_text()) == json.loads(out)


def test_compare_schema_mismatch_exits_two(gate2_run, tmp_path, capsys):
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"schema": "something-else/1"}))
    code, _, err = _run(["compare", str(gate2_run / "report.json"), str(other)], capsys)
    assert code == 2
    assert "schema" in err


def test_compare_wrong_protocol_exits_two(gate2_run, capsys):
    code, _, _ = _run(["compare", str(gate2_run / "report.json"), "gate3"], capsys)
    assert code == 2


def test_compare_reports_tolerance_override(gate2_run, tmp_path):
    a = json.loads((gate2_run / "report.json").read_text())
    b = json.loads((gate2_run / "report.json").read_text())
    b["error_budget"]["e_decay"] += 1e-9
    assert compare_documents(a, b)["status"] == "fail"
    assert compare_documents(a, b, tol=1e-8)["status"] == "pass"
    del b["error_budget"]["e_decay"]
    with pytest.raises(ValueError, match="field sets differ"):
        compare_documents(a, b)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_references_are_well_formed(name):
    doc = json.loads(reference_path(name).read_text())
    assert doc["schema"] == "rydpulse-reference/1"
    for path, spec in doc["fields"].items():
        assert path.startswith("/")
        assert spec["origin"] in ("published", "derived")
        assert spec["kind"] in ("abs", "rel", "factor", "angle", "max", "min")
        assert "tol" in spec or spec["kind"] in ("max", "min")


def test_unknown_shipped_reference(gate2_run, capsys):
    code, _, err = _run(["compare", str(gate2_run / "report.json"), "gate7"], capsys)
    assert code == 2
    assert "gate7" in err


@pytest.mark.parametrize(
    "kind,actual,ok",
    [("abs", 1.05, True), ("abs", 1.2, False), ("rel", 1.09, True), ("factor", 1.9, True), ("factor", 0.4, False),
     ("angle", 1.0 + 2 * math.pi, True), ("max", 0.9, True), ("min", 0.9, False)],
)
def test_tolerance_kinds(kind, actual, ok):
    tol = {"abs": 0.1, "rel": 0.1, "factor": 2.0, "angle": 1e-9, "max": None, "min": None}[kind]
    assert within(actual, 1.0, tol, kind) is ok


def test_config_file_run(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[run]\nprotocol = gate3\n\n[physical]\nomega_mhz = 3.25\nbeta = -pi\n\n"
        f"[output]\ndirectory = {out}\ntrajectories = false\n"
    )
    code, stdout, _ = _run(["run", "--config", str(cfg)], capsys)
    assert code == 0
    assert json.loads(stdout)["protocol"] == "gate3"
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["beta"] == pytest.approx(-math.pi)
    assert not list(out.glob("trajectory_*.csv"))


@pytest.mark.parametrize(
    "body,line,needle",
    [
        ("[run]\nprotocol = gate3\n[physical]\nomega_mhz = -1\n", 4, "physical.omega_mhz"),
        ("[run]\nprotocol = gate3\n\n[physical]\nspeed = 3\n", 5, "physical.speed"),
        ("[run]\nprotocol = gate9\n", 2, "run.protocol"),
        ("[sweep]\nepsilons = 0,0.5\nn_v_samples = 200\n", 3, "sweep.n_v_samples"),
        ("[extra]\nx = 1\n", 1, "extra"),
        ("[sweep]\nepsilons = 0:1.2:0.4\n", 2, "sweep.epsilons"),
    ],
)
def test_config_errors_name_file_line_and_field(tmp_path, capsys, body, line, needle):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(body)
    code, _, err = _run(["run", "--config", str(cfg)], capsys)
    assert code == 2
    assert f"{cfg}:{line}:" in err
    assert needle in err
    with pytest.raises(ConfigError):
        read_config(cfg)


def test_inapplicable_override_is_rejected(capsys):
    code, _, err = _run(["gate3", "--eta", "0.3", "--no-trajectories"], capsys)
    assert code == 2
    assert "eta" in err


@pytest.mark.parametrize("text,value", [("pi", math.pi), ("-pi", -math.pi), ("pi/2", math.pi / 2),
                                        ("0.5*pi", math.pi / 2), ("1.25", 1.25)])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value)


def test_parse_epsilons():
    assert parse_epsilons("0:0.8:0.4") == pytest.approx([0.0, 0.4, 0.8])
    assert parse_epsilons("0.1, 0.3") == pytest.approx([0.1, 0.3])
    assert [epsilon_key(e) for e in (0.0, 0.5, 0.8, 0.55)] == ["0", "0.5", "0.8", "0.55"]


@pytest.mark.parametrize("state,plan,leaves", [("sbs", "atom:0,atom:1", 2), ("triangle", "collective", 2)])
def test_measure_writes_outcome_tree(tmp_path, capsys, state, plan, leaves):
    out = tmp_path / "tree.json"
    code, _, _ = _run(["measure", "--state", state, "--plan", plan, "--output", str(out)], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == "rydpulse-outcomes/1"
    assert doc["plan"] == plan.split(",")
    assert len(doc["tree"]["children"]) == leaves


def test_measure_rejects_out_of_range_atom(capsys):
    code, _, err = _run(["measure", "--state", "sbs", "--plan", "atom:2"], capsys)
    assert code == 2
    assert "--plan" in err


def test_calibrate_single_objective(tmp_path, capsys):
    out = tmp_path / "cal.json"
    code, _, _ = _run(["calibrate", "--objective", "gate3_pulse1", "--no-verify", "--output", str(out)], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == "rydpulse-calibration/1"
    assert doc["results"]["gate3_pulse1"]["values"]["omega1_over_delta"] == pytest.approx(1.6088, abs=1e-3)
