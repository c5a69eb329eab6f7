import csv
import json
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from nsit.cli import config_from_output, dumps, main
from nsit.config import RunConfig, parse_config, to_text
from nsit.core import reference_params
from nsit.doppler import DopplerEnv
from nsit.dynamics import PolarizationState
from nsit.errors import ParseError, ValidationError

MINIMAL = """
[params]
gamma_e = 1e3
omega_c_rabi = 0.1
j_exchange = 1e-6
"""


def write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    rows = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(rows))


def test_minimal_config_defaults_to_reference_set():
    cfg = parse_config(MINIMAL)
    assert cfg.params == reference_params()
    assert cfg.task == "spectrum" and cfg.format == "csv" and cfg.normalized
    assert cfg.pol is None and cfg.env is None


def test_empty_config_is_valid():
    assert parse_config("") == RunConfig()


def test_negative_gamma_k_rejected():
    with pytest.raises(ValidationError, match="gamma_k"):
        parse_config("[params]\ngamma_k = -1e-10\n")


def test_sweep_without_spec_rejected():
    with pytest.raises(ValidationError, match="sweep"):
        parse_config("[task]\nname = sweep\n")


def test_validation_lists_every_problem():
    with pytest.raises(ValidationError) as info:
        parse_config("[task]\nname = doppler-compare\nmode = fast\n[params]\ngamma_k = -1\n[output]\nformat = xml\n")
    assert len(info.value.problems) == 4


def test_unknown_key_has_line_and_key():
    with pytest.raises(ParseError) as info:
        parse_config("[params]\ngamma_e = 1e3\n\ngama_s = 1e-6\n")
    assert info.value.line == 4 and info.value.key == "gama_s"
    assert "line 4" in str(info.value)


def test_unknown_section_and_bad_value():
    with pytest.raises(ParseError, match="unknown section"):
        parse_config("[physics]\nx = 1\n")
    with pytest.raises(ParseError) as info:
        parse_config("[params]\n\ngamma_e = fast\n")
    assert info.value.line == 3 and info.value.key == "gamma_e"


def test_syntax_errors():
    with pytest.raises(ParseError):
        parse_config("gamma_e = 1\n")
    with pytest.raises(ParseError) as info:
        parse_config("[params]\ngamma_e = 1\ngamma_e = 2\n")
    assert info.value.line == 3


def test_sweep_range_expansion():
    cfg = parse_config("[task]\nname = sweep\n[sweep]\nvariable = J\nrange = 1e-8, 1e-6, 3\nspacing = log\n")
    assert cfg.sweep_values == pytest.approx((1e-8, 1e-7, 1e-6))


def test_round_trip_full_config():
    cfg = RunConfig(
        params=reference_params(omega_c_rabi=0.05 - 0.02j, b_tilde=3.3e-7),
        task="sweep", mode="doppler", pol=PolarizationState(0.9, 0.85, 2e-6), env=DopplerEnv(temperature=450.0),
        window=(-1e-5, 2e-5), sweep_var="b_tilde", sweep_values=(1e-7, 2e-7), feature_kind="NSIT",
        delta_e=(0.0, 1e-7), output_stem="run-1", format="json", normalized=False,
    )
    assert parse_config(to_text(cfg)) == cfg


@settings(max_examples=50, deadline=None)
@given(
    j=st.floats(0, 1e-4, allow_subnormal=False),
    b=st.floats(-1e-3, 1e-3, allow_subnormal=False),
    om=st.floats(1e-4, 10),
)
def test_round_trip_property(j, b, om):
    cfg = RunConfig(params=reference_params(j_exchange=j, b_tilde=b, omega_c_rabi=om))
    assert parse_config(to_text(cfg)) == cfg


def test_dumps_is_exact_and_ordered():
    text = dumps({"b": 0.1, "a": [1, None, float("nan")], "c": True})
    assert text == '{"a": [1, null, null], "b": 0.10000000000000001, "c": true}'
    assert json.loads(text)["b"] == 0.1


def test_spectrum_run_normalized(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out" / "spectrum.csv"
    rows = read_csv(out)
    assert list(rows[0]) == ["delta_e_gamma0", "absorption_norm", "dispersion_norm"]
    assert max(float(r["absorption_norm"]) for r in rows) == 1.0
    assert config_from_output(out) == parse_config(MINIMAL)


def test_decomposed_spectrum_has_term_columns(tmp_path):
    cfg = write(tmp_path, "[task]\nmode = decomposed\n[grid]\nlo = -1e-4\nhi = 1e-4\n")
    assert main(["run", str(cfg), "--out", str(tmp_path), "--format", "json"]) == 0
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    assert doc["columns"][3:] == ["chi1_re", "chi1_im", "chi2_re", "chi2_im", "chi3_re", "chi3_im"]
    assert doc["metadata"]["version"] and doc["metadata"]["grid_spec"]
    assert config_from_output(tmp_path / "spectrum.json").format == "json"


def test_sweep_table_in_hz(tmp_path):
    text = "[task]\nname = sweep\n[sweep]\nvariable = J\nvalues = 1e-7, 1e-6, 2e-6\nkind = NSIA\n"
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    hz = [float(r["fwhm_hz"]) for r in rows]
    assert hz[1] == pytest.approx(0.977, rel=0.05)
    assert hz[0] < hz[1] < hz[2]


def test_oracle_check_prints_deviation(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, "[task]\nname = oracle-check\n")), "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    assert line.startswith("max_rel_deviation = ")
    assert float(line.split("=")[1]) <= 1e-6


def test_phase_and_slopes_tasks(tmp_path):
    text = "[task]\nname = phase\n[sweep]\nvariable = b_tilde\nvalues = 0, 1e-6\n"
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "phase.csv")
    assert abs(float(rows[0]["phi_rad"])) < 0.1
    text = text.replace("phase", "slopes")
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "slopes.csv")
    assert rows[0]["group_velocity_ratio"] == ""
    assert 0 < float(rows[1]["group_velocity_ratio"]) < 1e-2


def test_doppler_compare(tmp_path, capsys):
    text = "[task]\nname = doppler-compare\n[params]\nb_tilde = 1e-6\n[env]\ntemperature = 500\n"
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[0])
    assert summary["fwhm_rel_change"] < 0.01


def test_exit_codes(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.ini")]) == 4
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 4
    assert main(["run", str(write(tmp_path, "[params]\ngamma_k = -1\n"))]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError" and err["problems"]
    bad = write(tmp_path, "[task]\nname = phase\n[params]\nj_exchange = 0\n")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 3
    assert json.loads(capsys.readouterr().err)["task"] == "phase"
    blocker = write(tmp_path, "x", "blocker")
    assert main(["run", str(write(tmp_path, MINIMAL)), "--out", str(blocker / "sub")]) == 4


def test_sweep_errors_are_recorded_not_fatal(tmp_path):
    text = "[task]\nname = sweep\n[sweep]\nvariable = J\nvalues = 1e-6, 0\nkind = NSIA\n"
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert rows[0]["error"] == "" and rows[1]["fwhm_hz"] == ""
    assert rows[1]["error"].startswith("FeatureNotFound")


def test_threads_flag_and_env(tmp_path, monkeypatch, capsys):
    text = "[task]\nname = sweep\n[sweep]\nvariable = J\nvalues = 5e-7, 1e-6\n"
    cfg = write(tmp_path, text)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a"), "--threads", "2"]) == 0
    monkeypatch.setenv("NSIT_THREADS", "3")
    assert main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    monkeypatch.setenv("NSIT_THREADS", "many")
    assert main(["run", str(cfg), "--out", str(tmp_path / "c")]) == 2
    assert main(["run", str(cfg), "--threads", "0"]) == 2


def test_validate_prints_resolved_config(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, MINIMAL))]) == 0
    assert parse_config(capsys.readouterr().out) == parse_config(MINIMAL)


def test_console_script_deterministic(tmp_path):
    cfg = write(tmp_path, "[task]\nname = sweep\n[sweep]\nvariable = J\nvalues = 5e-7, 1e-6\n[output]\nformat = json\n")
    outs = []
    for name in ("r1", "r2"):
        proc = subprocess.run([sys.executable, "-m", "nsit.cli", "run", str(cfg), "--out", str(tmp_path / name)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append((tmp_path / name / "sweep.json").read_bytes())
    assert outs[0] == outs[1]
