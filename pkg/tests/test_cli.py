import csv
import json
import math

import pytest

import hoist.cli as cli
from hoist.objectives import CURVE_SPACE

SMALL = ["--max-resource", "9", "--loops", "1", "--pool-size", "100", "--trees", "5"]


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "r"
    assert run_cli("run", "--out", out, *SMALL) == 0
    for name in ("history.jsonl", "convergence.csv", "result.json"):
        assert (out / name).is_file()
    res = json.loads((out / "result.json").read_text())
    assert math.isfinite(res["loss"])
    assert set(res["incumbent"]) == set(CURVE_SPACE.names)
    assert res["settings"]["max_resource"] == 9.0 and res["settings"]["seed"] == 0
    rows = read_csv(out / "convergence.csv")
    assert rows[0] == ["cum_resource", "best_loss"]
    assert float(rows[-1][1]) == res["loss"]


def test_same_seed_same_bytes(tmp_path):
    run_cli("run", "--out", tmp_path / "a", "--seed", 4, *SMALL)
    run_cli("run", "--out", tmp_path / "b", "--seed", 4, *SMALL)
    assert (tmp_path / "a/convergence.csv").read_bytes() == (tmp_path / "b/convergence.csv").read_bytes()


def test_unknown_mode_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli("run", "--out", tmp_path, "--mode", "bogus")
    assert exc.value.code == 2


def test_invalid_space_names_field(tmp_path, capsys):
    bad = tmp_path / "space.json"
    bad.write_text(json.dumps({"parameters": [{"name": "x1", "kind": "continuous", "lower": 1, "upper": 0}]}))
    assert run_cli("run", "--out", tmp_path / "r", "--space", bad, *SMALL) == 2
    assert "x1" in capsys.readouterr().err


def test_external_requires_command(tmp_path):
    assert run_cli("run", "--out", tmp_path / "r", "--objective", "external", *SMALL) == 2


def test_aborted_run_exit_code(tmp_path, stub):
    space = tmp_path / "space.json"
    space.write_text(json.dumps(CURVE_SPACE.to_dict()))
    cmd = " ".join(stub("fail.py", "sys.exit(1)"))
    code = run_cli("run", "--out", tmp_path / "r", "--objective", "external",
                   "--external-cmd", cmd, "--space", space, *SMALL)
    assert code == 3


def test_resume_extends_and_refuses_incompatible(tmp_path):
    out = tmp_path / "r"
    assert run_cli("run", "--out", out, *SMALL) == 0
    one = read_csv(out / "convergence.csv")
    assert run_cli("run", "--out", out, *SMALL[:2], "--loops", "2", *SMALL[4:]) == 0
    two = read_csv(out / "convergence.csv")
    assert two[: len(one)] == one and len(two) > len(one)
    fresh = tmp_path / "fresh"
    run_cli("run", "--out", fresh, *SMALL[:2], "--loops", "2", *SMALL[4:])
    assert (fresh / "convergence.csv").read_bytes() == (out / "convergence.csv").read_bytes()
    assert run_cli("run", "--out", out, *SMALL, "--rho", "0.3") == 2


def test_compare_outputs(tmp_path):
    out = tmp_path / "c"
    code = run_cli("compare", "--out", out, "--modes", "hoist,random", "--seeds", "0-1", *SMALL)
    assert code == 0
    rows = read_csv(out / "compare.csv")
    assert rows[0] == ["mode", "seed", "cum_resource", "best_loss"]
    assert {(r[0], r[1]) for r in rows[1:]} == {("hoist", "0"), ("hoist", "1"), ("random", "0"), ("random", "1")}
    summary = read_csv(out / "summary.csv")
    assert summary[0] == ["mode", "cum_resource", "median_best_loss"]
    assert [r[0] for r in summary[1:]] == ["hoist", "random"]


def test_compare_survives_failed_subrun(tmp_path, monkeypatch):
    real = cli.run

    def sometimes(space, objective, options, **kw):
        if options.mode == "random" and options.seed == 1:
            raise RuntimeError("boom")
        return real(space, objective, options, **kw)

    monkeypatch.setattr(cli, "run", sometimes)
    out = tmp_path / "c"
    assert run_cli("compare", "--out", out, "--modes", "hoist,random", "--seeds", "0,1", *SMALL) == 0
    assert ["random", "1", "", "failed"] in read_csv(out / "compare.csv")


def test_compare_needs_two_modes(tmp_path):
    assert run_cli("compare", "--out", tmp_path, "--modes", "hoist", *SMALL) == 2


def test_report(tmp_path, capsys):
    out = tmp_path / "r"
    run_cli("run", "--out", out, *SMALL)
    capsys.readouterr()
    assert run_cli("report", out) == 0
    lines = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    sizes = [int(n) for n in lines["stage_sizes"].split(",")]
    assert sizes == sorted(sizes, reverse=True)
    assert lines["mode"] == "hoist" and lines["weights"] != "n/a"
    res = json.loads((out / "result.json").read_text())
    assert float(lines["incumbent_loss"]) == res["loss"]


def test_report_random_mode_has_no_weights(tmp_path, capsys):
    out = tmp_path / "r"
    run_cli("run", "--out", out, "--mode", "random", *SMALL)
    capsys.readouterr()
    run_cli("report", out)
    assert "weights: n/a" in capsys.readouterr().out


def test_report_empty_dir(tmp_path):
    assert run_cli("report", tmp_path) == 2


def test_parse_seeds():
    assert cli.parse_seeds("0-2,5") == [0, 1, 2, 5]
