import csv
import io
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from click.testing import CliRunner

from meroflow.cli import decimate, main, thread_count
from meroflow.expr import parse_complex


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args, **kw):
    return runner.invoke(main, list(args), catch_exceptions=False, **kw)


# -- flow ----------------------------------------------------------------------

def test_flow_exponential_escape(runner, tmp_path):
    out = tmp_path / "s.csv"
    res = invoke(runner, "flow", "-f", "-exp(-z)", "--z0", "0+0i", "--csv", str(out))
    assert res.exit_code == 0
    d = json.loads(res.stdout)
    assert d["kind"] == "EscapedFiniteTime"
    assert abs(d["T_est"] - 1) < 1e-6
    assert out.read_text().splitlines()[0] == "t,re,im"


def test_flow_equilibrium(runner):
    res = invoke(runner, "flow", "-f", "z^2", "--z0", "0+1i")
    assert res.exit_code == 0
    assert json.loads(res.stdout)["kind"] == "EquilibriumApproach"


def test_flow_exit_codes(runner):
    assert invoke(runner, "flow", "-f", "1/z", "--z0", "0+0i").exit_code == 2
    res = invoke(runner, "flow", "-f", "tan(", "--z0", "1")
    assert res.exit_code == 1
    assert "offset 4" in res.stderr


def test_bad_complex_literal_is_a_usage_error(runner):
    assert invoke(runner, "flow", "-f", "z", "--z0", "1+").exit_code == 2


# -- time ----------------------------------------------------------------------

@pytest.mark.parametrize("f,w0,w1,T", [("z^2", "1", "2", 0.5), ("-exp(-z)", "0", f"{-math.log(2)!r}", 0.5)])
def test_time_examples(runner, f, w0, w1, T):
    res = invoke(runner, "time", "-f", f, "--w0", w0, "--w1", w1)
    assert res.exit_code == 0
    assert abs(parse_complex(json.loads(res.stdout)["time"]) - T) < 1e-13


def test_time_blocked_path(runner):
    res = invoke(runner, "time", "-f", "1/z", "--w0", "-1", "--w1", "1")
    assert res.exit_code == 3
    assert "obstructed" in res.stderr


def test_time_via_and_path_file(runner, tmp_path):
    res = invoke(runner, "time", "-f", "1/z", "--w0", "-1", "--w1", "1", "--via", "-1+1i,1+1i")
    assert abs(parse_complex(json.loads(res.stdout)["time"]) - 0) < 1e-13
    p = tmp_path / "p.json"
    p.write_text('[{"type": "line", "start": [1, 0], "end": [1, 1]}, {"type": "line", "start": [1, 1], "end": [2, 0]}]')
    res = invoke(runner, "time", "-f", "z^2", "--w0", "1", "--w1", "2", "--path", str(p))
    assert res.exit_code == 0, res.output
    assert abs(parse_complex(json.loads(res.stdout)["time"]) - 0.5) < 1e-13
    p.write_text('[{"type": "line"}]')
    assert invoke(runner, "time", "-f", "z^2", "--w0", "1", "--w1", "2", "--path", str(p)).exit_code == 2


# -- poles and wv --------------------------------------------------------------

def test_poles_json(runner):
    res = invoke(runner, "poles", "-f", "1/z^2", "--at", "0+0i")
    assert res.exit_code == 0
    d = json.loads(res.stdout)
    assert d["m"] == 2
    assert np.allclose(d["directions"], [math.pi / 3, math.pi, 5 * math.pi / 3], atol=1e-6)


def test_poles_rejects_regular_point(runner):
    assert invoke(runner, "poles", "-f", "z", "--at", "0").exit_code == 2


def test_wv_exp(runner):
    res = invoke(runner, "wv", "-f", "exp(z)", "-r", "10")
    assert res.exit_code == 0
    d = json.loads(res.stdout)
    assert d["N"] == 10 and d["z_r"] == "10+0i"


def test_wv_series_forms(runner):
    d = json.loads(invoke(runner, "wv", "--series", "exp", "-r", "10.5").stdout)
    assert d["N"] == 10
    d = json.loads(invoke(runner, "wv", "--series", "1,0,1", "-r", "2", "-L", "0").stdout)
    assert d["N"] == 2


def test_wv_deviation_gate(runner):
    assert invoke(runner, "wv", "-f", "exp(z)", "-r", "30", "-L", "8", "--max-deviation", "1e-3").exit_code == 4


# -- escape scan ----------------------------------------------------------------

@pytest.fixture(scope="module")
def scans():
    r = CliRunner()
    return [r.invoke(main, ["escape-scan", "-f", "exp(z)", "-r", "30", "--threads", str(n)]) for n in (1, 8)]


def test_escape_scan_report(scans):
    res = scans[0]
    assert res.exit_code == 0, res.output
    d = json.loads(res.stdout)
    assert d["N"] == 30 and d["count"] >= 3
    P = d["P_r"]
    assert all(0 < s["T"] <= P for s in d["seeds"] if s["pass"])


def test_escape_scan_thread_determinism(scans):
    assert scans[0].stdout == scans[1].stdout


def test_escape_scan_count_gate(runner):
    res = invoke(runner, "escape-scan", "-f", "exp(z)", "-r", "30", "--min-count", "50", "--threads", "1")
    assert res.exit_code == 4


# -- portrait -------------------------------------------------------------------

def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_portrait_square_escapes_on_positive_axis(runner, tmp_path):
    c, s = tmp_path / "p.csv", tmp_path / "p.svg"
    res = invoke(runner, "portrait", "-f", "z^2", "--nx", "9", "--ny", "9", "--csv", str(c), "--svg", str(s),
                 "--max-time", "50")
    assert res.exit_code == 0, res.output
    rows = _rows(c)
    assert len(rows) == 81
    for row in rows:
        z0 = complex(float(row["re0"]), float(row["im0"]))
        escapes = row["kind"] == "EscapedFiniteTime"
        assert escapes == (z0.imag == 0 and z0.real > 0)
        if escapes:
            assert abs(float(row["T_est"]) - 1 / z0.real) < 1e-6
    root = ET.parse(s).getroot()
    assert root.tag.endswith("svg")


def test_portrait_empty_grid(runner, tmp_path):
    c, s = tmp_path / "p.csv", tmp_path / "p.svg"
    res = invoke(runner, "portrait", "-f", "z^2", "--nx", "0", "--ny", "0", "--csv", str(c), "--svg", str(s))
    assert res.exit_code == 0
    assert c.read_text().strip() == "re0,im0,kind,T_est,uncertainty"
    ET.parse(s)


def test_portrait_is_deterministic_across_threads(runner, tmp_path):
    outs = []
    for n in (1, 4):
        c, s = tmp_path / f"{n}.csv", tmp_path / f"{n}.svg"
        invoke(runner, "portrait", "-f", "i*cos(z)/sin(z)", "--nx", "5", "--ny", "4", "--jitter", "0.3",
               "--seed", "11", "--threads", str(n), "--csv", str(c), "--svg", str(s), "--max-time", "20")
        outs.append((c.read_text(), s.read_text()))
    assert outs[0] == outs[1]
    assert "EscapedFiniteTime" not in outs[0][0]


def test_decimate_bounds_points():
    z = np.exp(1j * np.linspace(0, 6, 10_000))
    d = decimate(z, 100)
    assert len(d) <= 100 and d[0] == z[0] and d[-1] == z[-1]


# -- configuration ---------------------------------------------------------------

def test_config_file_and_flag_precedence(runner, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nfunction = z^2\nz0 = 2+0i\n")
    d = json.loads(invoke(runner, "--config", str(cfg), "flow").stdout)
    assert abs(d["T_est"] - 0.5) < 1e-6
    d = json.loads(invoke(runner, "--config", str(cfg), "flow", "--z0", "4").stdout)
    assert abs(d["T_est"] - 0.25) < 1e-6


def test_thread_count_precedence(monkeypatch):
    monkeypatch.setenv("MEROFLOW_THREADS", "3")
    assert thread_count(5) == 5
    assert thread_count(None) == 3
    monkeypatch.delenv("MEROFLOW_THREADS")
    assert thread_count(None) >= 1
