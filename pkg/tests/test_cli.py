import json
from pathlib import Path

import numpy as np
import pytest

from eigenratio.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, main
from eigenratio.experiments import read_manifest
from eigenratio.inference import CalibrationTable

SNAPSHOTS = Path(__file__).parent / "snapshots"
COMMANDS = ["generate", "calibrate", "pa", "test", "estimate", "simulate", "ingest"]


def help_text(command=None):
    parser = build_parser()
    if command is None:
        return parser.format_help()
    sub = next(a for a in parser._actions if a.dest == "command")
    return sub.choices[command].format_help()


@pytest.fixture(autouse=True)
def fixed_width(monkeypatch, tmp_path):
    monkeypatch.setenv("COLUMNS", "80")
    monkeypatch.setenv("EIGENRATIO_CACHE", str(tmp_path / "cache"))


@pytest.mark.parametrize("command", [None] + COMMANDS)
def test_help_snapshot(command):
    name = f"help_{command or 'main'}.txt"
    assert help_text(command) == (SNAPSHOTS / name).read_text()


@pytest.mark.parametrize("command", COMMANDS)
def test_help_lists_defaults(command):
    text = help_text(command)
    for action in build_parser()._subparsers._group_actions[0].choices[command]._actions:
        if action.option_strings and action.dest != "help":
            assert action.option_strings[-1] in text


@pytest.fixture
def sbm_file(tmp_path):
    out = tmp_path / "g.edges"
    assert main(["generate", "--model", "sbm", "--density", "dense", "--n", "300", "--k", "3",
                 "--seed", "7", "-o", str(out)]) == EXIT_OK
    return out


def test_generate_is_byte_identical(tmp_path, sbm_file):
    again = tmp_path / "h.edges"
    main(["generate", "--model", "sbm", "--density", "dense", "--n", "300", "--k", "3",
          "--seed", "7", "-o", str(again)])
    assert sbm_file.read_bytes() == again.read_bytes()
    m = read_manifest(f"{sbm_file}.manifest")
    assert m["command"] == "generate" and m["seed"] == "7"
    assert m["param.spec.pure_sizes"] == "100,100,100"


def test_generate_dcmm_manifest(tmp_path):
    out = tmp_path / "d.edges"
    assert main(["generate", "--model", "dcmm", "--density", "sparse", "--n", "3000", "--k", "3",
                 "-o", str(out)]) == EXIT_OK
    assert read_manifest(f"{out}.manifest")["param.spec.pure_per_community"] == "910"


def test_generate_from_config_file(tmp_path, sbm_file):
    conf = tmp_path / "scenario.txt"
    conf.write_text("# scenario\nmodel = sbm\ndensity = dense\nn = 300\nk = 3\nseed = 7\n")
    out = tmp_path / "c.edges"
    assert main(["generate", "--config", str(conf), "-o", str(out)]) == EXIT_OK
    assert out.read_bytes() == sbm_file.read_bytes()
    conf.write_text("model = sbm\nbogus = 1\n")
    assert main(["generate", "--config", str(conf), "-o", str(out)]) == EXIT_USAGE


def test_usage_errors(tmp_path, capsys):
    out = str(tmp_path / "x.edges")
    assert main(["generate", "--model", "sbm", "--density", "dense", "--n", "10", "--k", "0", "-o", out]) == EXIT_USAGE
    assert main(["generate", "--density", "dense", "--n", "10", "--k", "2", "-o", out]) == EXIT_USAGE
    assert main(["calibrate", "--n", "100", "--d", "1"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_io_errors(tmp_path):
    assert main(["estimate", str(tmp_path / "missing.edges")]) == EXIT_IO
    bad = tmp_path / "bad.edges"
    bad.write_text("0 1\n1 two\n")
    assert main(["ingest", str(bad), "-o", str(tmp_path / "o.edges")]) == EXIT_IO


def test_missing_calibration_is_numeric_failure(sbm_file):
    code = main(["test", str(sbm_file), "--k0", "2", "--kmax", "7", "--no-auto-calibrate"])
    assert code == EXIT_NUMERIC


def test_calibrate_writes_table_with_950th_order_statistic(tmp_path, capsys):
    out = tmp_path / "t.txt"
    assert main(["calibrate", "--n", "200", "--d", "5", "--j", "1000", "--alpha", "0.05",
                 "-o", str(out)]) == EXIT_OK
    t = CalibrationTable.load(out)
    assert t.J == 1000
    text = capsys.readouterr().out
    assert "order statistic 950" in text
    assert repr(float(t.samples[949])) in text
    assert Path(f"{out}.manifest").exists()


def test_estimate_with_fixed_kmax_and_threshold(sbm_file, capsys):
    assert main(["estimate", str(sbm_file), "--kmax", "8", "--j", "200"]) == EXIT_OK
    rec = json.loads(Path(f"{sbm_file}.estimate.json").read_text())
    assert rec["k_hat"] == 3 and rec["kmax"] == 8 and rec["k_pa"] is None
    assert [p["reject"] for p in rec["path"]] == [True, True, False]
    assert main(["estimate", str(sbm_file), "--method", "threshold", "--epsilon", "0.4",
                 "--kmax", "8", "--record", str(sbm_file.parent / "thr.json")]) == EXIT_OK
    thr = json.loads((sbm_file.parent / "thr.json").read_text())
    assert thr["method"].startswith("threshold")
    # at n=300, t_n = 300**0.4 ~ 9.8 is a loose cut; k_hat is the first acceptance either way
    first = next(p["k0"] for p in thr["path"] if not p["reject"])
    assert thr["k_hat"] == first and thr["k_hat"] >= 3
    assert Path(f"{sbm_file.parent / 'thr.json'}.manifest").exists()
    assert f"k_hat = {thr['k_hat']}" in capsys.readouterr().out


def test_estimate_rerun_is_byte_identical(sbm_file, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["estimate", str(sbm_file), "--b", "10", "--j", "200", "--record", str(a)])
    main(["estimate", str(sbm_file), "--b", "10", "--j", "200", "--record", str(b), "--threads", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_pa_and_test_commands(sbm_file, capsys):
    assert main(["pa", str(sbm_file), "--b", "10", "--q", "0.9"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "K_PA = 3" in out and "exceeds" in out
    rec = json.loads(Path(f"{sbm_file}.pa.json").read_text())
    assert rec["k_pa"] == 3 and len(rec["quantiles"]) == 17
    assert main(["test", str(sbm_file), "--k0", "1", "--kmax", "6", "--j", "200"]) == EXIT_OK
    t = json.loads(Path(f"{sbm_file}.test.json").read_text())
    assert t["outcome"]["reject"] is True and t["outcome"]["kmax"] == 6


def test_ingest_directed_mutual(tmp_path, capsys):
    src = tmp_path / "w.edges"
    src.write_text("# follows\n5 9\n9 5\n9 12\n12 7\n7 12\n3 3\n")
    out = tmp_path / "u.edges"
    assert main(["ingest", str(src), "--directed", "--mode", "mutual", "-o", str(out)]) == EXIT_OK
    assert out.read_text() == "0 1\n2 3\n"
    labels = Path(f"{out}.labels").read_text().split()
    assert labels[:8] == ["0", "5", "1", "9", "2", "12", "3", "7"]
    assert main(["ingest", str(src), "--directed", "--mode", "mutual", "--lcc", "-o", str(out)]) == EXIT_OK
    assert out.read_text() == "0 1\n"


def test_simulate_writes_tsv_and_manifest(tmp_path):
    out = tmp_path / "t.tsv"
    rec = tmp_path / "r.json"
    code = main(["simulate", "--n", "200", "--k", "2", "--k0", "1", "2", "--reps", "2", "--b", "10",
                 "--j", "200", "-o", str(out), "--records", str(rec)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "scenario\tn\tk_true\tk0\treps\treject_rate"
    assert lines[1].startswith("dense-sbm\t200\t2\t1\t2\t")
    assert len(json.loads(rec.read_text())) == 2
    m = read_manifest(f"{out}.manifest")
    assert m["param.plan.reps"] == "2"
