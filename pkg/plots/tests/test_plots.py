import json
from pathlib import Path

import pytest

from sbm_plots import cli
from sbm_plots.figures import SchemaError, plot_interface

GOLDEN = Path(__file__).parent / "golden"

KIND_INPUTS = {
    "interface": "interface.csv",
    "moments": "moments.json",
    "duality-scatter": "verify_report.json",
    "separation": "verify_report.json",
    "brownian": "verify_report.json",
}


@pytest.mark.parametrize("kind,name", sorted(KIND_INPUTS.items()))
def test_plot_kinds_produce_nonzero_figures(tmp_path, capsys, kind, name):
    out = tmp_path / f"{kind}.png"
    code = cli.main([kind, "--in", str(GOLDEN / name), "--out", str(out)])
    assert code == 0
    assert out.stat().st_size > 0
    stdout = capsys.readouterr().out
    assert "series:" in stdout


def test_svg_output(tmp_path):
    out = tmp_path / "fig.svg"
    assert cli.main(["interface", "--in", str(GOLDEN / "interface.csv"), "--out", str(out)]) == 0
    assert out.stat().st_size > 0


def test_schema_mismatch_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    out = tmp_path / "fig.png"
    code = cli.main(["interface", "--in", str(bad), "--out", str(out)])
    assert code != 0
    assert not out.exists()
    err = capsys.readouterr().err
    assert "missing columns" in err and "replica" in err


def test_empty_csv_exits_nonzero_without_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "fig.png"
    assert cli.main(["interface", "--in", str(empty), "--out", str(out)]) != 0
    assert not out.exists()


def test_header_only_csv_rejected(tmp_path):
    header = tmp_path / "header.csv"
    header.write_text("replica,t,R,L,L_eps,R_eps,width\n")
    out = tmp_path / "fig.png"
    assert cli.main(["interface", "--in", str(header), "--out", str(out)]) != 0
    assert not out.exists()


def test_moments_record_missing_keys_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"op": "x", "T": 1.0}]))
    out = tmp_path / "fig.png"
    assert cli.main(["moments", "--in", str(bad), "--out", str(out)]) == 2
    assert "lack" in capsys.readouterr().err


def test_report_without_expected_criterion_rejected(tmp_path):
    report = tmp_path / "report.json"
    report.write_text(json.dumps({"criteria": []}))
    out = tmp_path / "fig.png"
    assert cli.main(["separation", "--in", str(report), "--out", str(out)]) == 2


def test_interface_series_listing(tmp_path):
    out = tmp_path / "fig.png"
    series = plot_interface([str(GOLDEN / "interface.csv")], str(out))
    assert series == ["L_eps", "R_eps"]
