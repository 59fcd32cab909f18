from __future__ import annotations

import json
import subprocess
import sys

import pytest

from artistbias.cli import main
from artistbias.report import read_audit, read_metrics

SYNTH_LINES = [
    "synth.n_male_users = 110",
    "synth.n_female_users = 40",
    "synth.n_male_artists = 130",
    "synth.n_female_artists = 30",
    "synth.density = 0.2",
    "sample_fraction = 1.0",
]


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("\n".join(SYNTH_LINES + ["experiment = whole", "algorithms = NMF", "seed = 3"]) + "\n")
    return path


def test_run_flags_override_config(tmp_path, cfg_file, capsys):
    out = tmp_path / "res"
    rc = main(["run", "--config", str(cfg_file), "--experiment", "extreme", "--algorithms", "MostPopular",
               "--out", str(out), "--no-svg"])
    assert rc == 0
    cells = read_audit(out / "audit.csv")
    assert {c.experiment for c in cells} == {"extreme"}
    assert {c.algorithm for c in cells} == {"MostPopular"}
    assert sorted(p.name for p in out.iterdir()) == ["audit.csv", "metrics.csv", "pr_distribution.tsv"]
    assert "MostPopular" in capsys.readouterr().out


def test_run_then_report_and_ttest(tmp_path, cfg_file, capsys):
    out = tmp_path / "res"
    assert main(["run", "--config", str(cfg_file), "--algorithms", "MostPopular,UserItemAvg",
                 "--out", str(out), "--no-svg"]) == 0
    assert main(["report", str(out)]) == 0
    assert (out / "pr.svg").exists() and (out / "bd.svg").exists()
    capsys.readouterr()
    assert main(["ttest", "--metrics", str(out / "metrics.csv"), "--column", "ndcg",
                 "--a", "UserItemAvg", "--b", "MostPopular"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert set(res) == {"significant", "p_value", "statistic", "alpha"}
    assert len([m for m in read_metrics(out / "metrics.csv") if m.fold != "mean"]) == 6


def test_report_flags_inconsistent_rows(tmp_path, cfg_file):
    out = tmp_path / "res"
    main(["run", "--config", str(cfg_file), "--out", str(out), "--no-svg"])
    text = (out / "audit.csv").read_text().splitlines()
    fields = text[1].split(",")
    fields[8] = "0.5"
    text[1] = ",".join(fields)
    (out / "audit.csv").write_text("\r\n".join(text) + "\r\n")
    assert main(["report", str(out), "--no-svg"]) == 1


def test_ttest_values(capsys):
    assert main(["ttest", "--values-a", "0.1,0.1,0.1", "--values-b", "0.9,0.9,0.9"]) == 0
    assert json.loads(capsys.readouterr().out)["significant"] is True
    assert main(["ttest", "--values-a", "0.1", "--values-b", "0.9,0.8"]) == 2


def test_synth_ingest_filter_run_chain(tmp_path, capsys):
    syn, ing, filt = tmp_path / "syn", tmp_path / "ing", tmp_path / "filt"
    sets = [x for line in SYNTH_LINES if line.startswith("synth.")
            for x in ("--set", line.replace(" ", ""))]
    assert main(["synth", "--out", str(syn), "--seed", "5", *sets]) == 0
    assert main(["ingest", "--events", str(syn / "events.tsv"), "--profiles", str(syn / "profiles.tsv"),
                 "--out", str(ing)]) == 0
    assert main(["filter", "--events", str(ing / "events.tsv"), "--profiles", str(ing / "profiles.tsv"),
                 "--gender-map", str(syn / "gender_map.tsv"), "--out", str(filt)]) == 0
    report = json.loads((filt / "filter_report.json").read_text())
    assert report["stages"][0]["stage"] == "input"
    out = tmp_path / "res"
    assert main(["run", "--dataset", "lfm360k", "--events", str(filt / "events.tsv"),
                 "--profiles", str(filt / "profiles.tsv"), "--gender-map", str(filt / "gender_map.tsv"),
                 "--algorithms", "UserItemAvg", "--set", "sample_fraction=1", "--out", str(out), "--no-svg"]) == 0
    assert {c.dataset for c in read_audit(out / "audit.csv")} == {"lfm360k"}


def test_missing_inputs_exit_code(tmp_path, capsys):
    assert main(["run", "--dataset", "lfm360k", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "artistbias", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("ingest", "resolve-gender", "filter", "synth", "run", "report", "ttest"):
        assert cmd in proc.stdout
