from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from datamator.cli import main

FIXTURES = Path(__file__).parent / "fixtures"

COUNT_QUERY = "how many students were born in 2000?"


@pytest.fixture()
def workdir(tmp_path):
    for name in ("students.csv", "flights.csv", "cars.csv", "students_count.qdmr"):
        shutil.copy(FIXTURES / name, tmp_path / name)
    return tmp_path


def test_compile_query_end_to_end(workdir, capsys):
    out = workdir / "doc.json"
    code = main(
        [
            "compile",
            str(workdir / "students.csv"),
            "--query",
            COUNT_QUERY,
            "--out",
            str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["steps"]) == 4
    assert doc["steps"][3]["caption"].endswith("is 3")
    steps_dir = workdir / "doc_steps"
    assert sorted(p.name for p in steps_dir.iterdir()) == [
        "step_1.csv", "step_2.csv", "step_3.csv", "step_4.csv",
    ]
    assert steps_dir.joinpath("step_4.csv").read_text() == "method,value\ncount,3\n"


def test_query_and_script_paths_agree(workdir):
    via_query = workdir / "via_query.json"
    via_script = workdir / "via_script.json"
    assert main(
        [
            "compile", str(workdir / "students.csv"),
            "--query", COUNT_QUERY,
            "--out", str(via_query),
        ]
    ) == 0
    assert main(
        [
            "compile", str(workdir / "students.csv"),
            "--script", str(workdir / "students_count.qdmr"),
            "--out", str(via_script),
        ]
    ) == 0
    a = json.loads(via_query.read_text())
    b = json.loads(via_script.read_text())
    a.pop("provenance")
    b.pop("provenance")
    assert a == b


def test_explain_prints_step_tables(workdir, capsys):
    code = main(
        [
            "compile", str(workdir / "students.csv"),
            "--query", COUNT_QUERY,
            "--out", str(workdir / "doc.json"),
            "--explain",
        ]
    )
    assert code == 0
    captured = capsys.readouterr().out
    assert "Select 6 records from students" in captured
    assert "birth_year" in captured


def test_malformed_script_exits_2_with_line(workdir, capsys):
    bad = workdir / "bad.qdmr"
    bad.write_text('#1 = SELECT("students")\n#2 = PROJECT(birth_year #1)\n')
    code = main(
        [
            "compile", str(workdir / "students.csv"),
            "--script", str(bad),
            "--out", str(workdir / "doc.json"),
        ]
    )
    assert code == 2
    report = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert report["error"]["code"] == "syntax_error"
    assert report["error"]["line"] == 2


def test_unrecognized_query_exits_2(workdir, capsys):
    code = main(
        [
            "compile", str(workdir / "students.csv"),
            "--query", "tell me a joke",
            "--out", str(workdir / "doc.json"),
        ]
    )
    assert code == 2
    report = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert report["error"]["code"] == "unrecognized_query"


def test_validation_failure_exits_2(workdir, capsys):
    bad = workdir / "bad.qdmr"
    bad.write_text('#1 = SELECT("students")\n#2 = PROJECT("height", #1)\n')
    code = main(
        [
            "compile", str(workdir / "students.csv"),
            "--script", str(bad),
            "--out", str(workdir / "doc.json"),
        ]
    )
    assert code == 2
    report = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert report["error"]["code"] == "validation_failed"
    assert report["error"]["details"][0]["code"] == "unknown_column"


def test_missing_csv_exits_1(workdir):
    assert main(["compile", str(workdir / "nope.csv"), "--query", "x"]) == 1


def test_ledger_applies_to_cli(workdir, monkeypatch):
    data_dir = workdir / "data"
    monkeypatch.setenv("DATAMATOR_DATA_DIR", str(data_dir))

    from datamator.dataset import load_table
    from datamator.decomposer import FeedbackStore, record_feedback
    from datamator.qdmr import parse_pipeline

    table = load_table((workdir / "students.csv").read_bytes(), "students")
    store = FeedbackStore(data_dir / "ledger.jsonl")
    corrected = parse_pipeline(
        '#1 = SELECT("students")\n#2 = GROUP(count, "major", #1)'
    )
    record_feedback(store, COUNT_QUERY, table, None, corrected)

    out = workdir / "doc.json"
    code = main(
        [
            "compile", str(workdir / "students.csv"),
            "--query", COUNT_QUERY,
            "--out", str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert [s["kind"] for s in doc["steps"]] == ["SELECT", "GROUP"]
    assert doc["provenance"]["source"] == "user_edited"


def test_byte_stable_document_output(workdir):
    out1 = workdir / "a.json"
    out2 = workdir / "b.json"
    for out in (out1, out2):
        assert main(
            [
                "compile", str(workdir / "cars.csv"),
                "--query", "which cars produced in 2020 have less than 6 cylinders?",
                "--out", str(out),
            ]
        ) == 0
    a = json.loads(out1.read_text())
    b = json.loads(out2.read_text())
    a.pop("provenance")
    b.pop("provenance")
    assert a == b
