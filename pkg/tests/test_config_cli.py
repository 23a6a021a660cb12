import csv
import json
import os

import pytest

from optbistab.cli import main
from optbistab.config import PRESETS, parse_config
from optbistab.errors import ParseError, ValidationError


def test_minimal_spectrum_config():
    cfg = parse_config("[run]\npreset = paper-defaults\n[fields]\nomega_1 = 5\nomega_2 = 0.1\n",
                       subcommand="spectrum")
    assert cfg["spectrum"]["points"] == 801
    assert cfg.atomic_params().gamma_coll == 0.001
    assert cfg.cavity().cooperativity == 300
    assert cfg.fields().omega_1 == 5


def test_negative_rate_is_validation_error():
    with pytest.raises(ValidationError, match="gamma_13 ≥ 0"):
        parse_config("[atom]\ngamma_13 = -1\n")


def test_unknown_key_is_parse_error():
    with pytest.raises(ParseError) as exc:
        parse_config("[fields]\nomega_1 = 1\nomega_4 = 2\n")
    assert exc.value.line == 3 and exc.value.field == "fields.omega_4"


def test_unknown_section_and_bad_values():
    with pytest.raises(ParseError):
        parse_config("[nonsense]\na = 1\n")
    with pytest.raises(ParseError) as exc:
        parse_config("[curve]\npoints = many\n")
    assert exc.value.field == "curve.points"
    with pytest.raises(ParseError):
        parse_config("omega_1 = 3\n")
    with pytest.raises(ParseError):
        parse_config("[fields]\nomega_1 = 1\nomega_1 = 2\n")


def test_rb87_preset():
    cfg = parse_config("", preset="rb87-d1")
    p = cfg.atomic_params()
    assert (p.gamma_13, p.gamma_23, p.gamma_14, p.gamma_24) == (0.25, 0.75, 0.625, 0.375)
    # document values override the preset
    cfg = parse_config("[run]\npreset = rb87-d1\n[atom]\ngamma_13 = 0.5\n")
    assert cfg.atomic_params().gamma_13 == 0.5
    assert set(PRESETS) == {"paper-defaults", "rb87-d1"}


def test_expressions_and_complex_values():
    cfg = parse_config("[oam]\nangle = pi/10\n[fields]\nomega_2 = 0.3+0.4j\n")
    assert cfg["oam"]["angle"] == pytest.approx(0.3141592653589793)
    assert cfg.fields().omega_2 == 0.3 + 0.4j


def test_round_trip():
    cfg = parse_config("[run]\npreset = rb87-d1\n[fields]\nomega_1 = 2.5\nomega_2 = 1-2j\n"
                       "[scan]\nvalues = 0, 1.5, 3\n[pulse]\nedges = 0:-1, 30:1\n[oam]\nangle = pi/7\n",
                       subcommand="obscan")
    again = parse_config(cfg.to_text())
    assert again.values == cfg.values
    assert again.to_text() == cfg.to_text()


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = main(list(args) + ["--out", str(out), "--threads", "2"])
    return code, out


def test_cli_spectrum(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("[fields]\nomega_1 = 5\nomega_2 = 0.1\n")
    code, out = _run(tmp_path, "spectrum", "--config", str(cfgfile))
    assert code == 0
    with open(out / "spectrum.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["delta_2", "re_rho32", "im_rho32"] and len(rows) == 802
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == "1.0"
    lo, hi = summary["absorption_peaks"]
    assert abs(lo + 5) < 0.5 and abs(hi - 5) < 0.5
    assert parse_config(summary["config_text"]).values == parse_config(
        "[fields]\nomega_1 = 5\nomega_2 = 0.1\n", subcommand="spectrum").values


def test_cli_deterministic(tmp_path):
    args = ["obscan", "--set", "fields.omega_3=5", "--set", "fields.delta_2=5",
            "--set", "curve.points=400"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(args + ["--out", str(a), "--threads", "4"]) == 0
    assert main(args + ["--out", str(b), "--threads", "1"]) == 0
    for name in sorted(os.listdir(a)):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_json_format(tmp_path):
    code, out = _run(tmp_path, "obcurve", "--format", "json", "--set", "fields.omega_1=2",
                     "--set", "fields.delta_2=5")
    assert code == 0
    doc = json.loads((out / "curve.json").read_text())
    assert doc["columns"][0] == "x" and len(doc["rows"]) == 2000
    summary = json.loads((out / "summary.json").read_text())
    assert summary["fold_count"] == 2 and summary["l_hys"] > 0


@pytest.mark.parametrize("sub", ["hysteresis", "metrics", "oam"])
def test_cli_other_subcommands(tmp_path, sub):
    code, out = _run(tmp_path, sub, "--set", "fields.omega_1=2", "--set", "fields.delta_2=5",
                     "--set", "curve.points=800")
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["subcommand"] == sub


def test_cli_dynamics(tmp_path):
    code, out = _run(tmp_path, "dynamics", "--set", "fields.omega_3=0.5", "--set",
                     "fields.delta_2=7", "--set", "sim.t_end=20")
    assert code == 0
    with open(out / "trace.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["tau", "y_in", "x_out", "omega1", "label"]


def test_cli_errors(tmp_path):
    code, out = _run(tmp_path, "spectrum", "--set", "fields.omega_4=1")
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "ParseError" and err["schema_version"] == "1.0"
    code, out = _run(tmp_path, "cnot", "--set", "fields.omega_3=0.5", "--set", "cnot.omega_on=0")
    assert code == 1
    assert json.loads((out / "error.json").read_text())["error"] == "NotBistable"


def test_cli_number_format(tmp_path):
    code, out = _run(tmp_path, "spectrum", "--set", "fields.omega_1=5", "--set", "fields.omega_2=0.1",
                     "--set", "spectrum.points=3")
    with open(out / "spectrum.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    for r in rows:
        for v in r:
            digits = v.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(digits) <= 12
