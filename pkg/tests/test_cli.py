import textwrap

import numpy as np
import pytest

from fracyamabe import cli, stability
from fracyamabe.config import load_config, parse_config
from fracyamabe.errors import ConfigError
from fracyamabe.flow import COLUMNS, run
from fracyamabe.geometry import make_torus

TORUS_COSINE = """
[geometry]
kind = torus
n = 1
gamma = 0.3
truncation = 32
[initial]
type = cosine
amplitude = 0.1
[integrator]
dt0 = 1e-3
t_end = 1.0
[run]
seed = 7
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def data_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# seed=")
    assert lines[1] == ",".join(COLUMNS)
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])


def test_constant_config_gives_constant_columns(tmp_path):
    cfg = write(tmp_path, """
        [geometry]
        kind = sphere
        n = 2
        gamma = 0.5
        truncation = 6
        [initial]
        type = constant
        value = 1.0
    """)
    assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    rows = data_rows(tmp_path / "diagnostics.csv")
    assert np.all(rows == rows[0])
    summary = (tmp_path / "summary.txt").read_text()
    assert "status: converged" in summary
    assert "L_est: 0.0" in summary


def test_missing_gamma_names_key(tmp_path, capsys):
    cfg = write(tmp_path, """
        [geometry]
        kind = torus
        n = 1
        truncation = 16
    """)
    assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "gamma" in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        load_config(cfg)
    assert info.value.key == "gamma"


@pytest.mark.parametrize("n,gamma", [(1, 0.5), (1, 0.7), (2, 1.0)])
def test_dimension_must_exceed_twice_gamma(n, gamma):
    text = f"[geometry]\nkind = sphere\nn = {n}\ngamma = {gamma}\ntruncation = 8\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == "gamma"


def test_perturbed_run_has_decreasing_s(tmp_path):
    cfg = write(tmp_path, TORUS_COSINE)
    assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    s = data_rows(tmp_path / "diagnostics.csv")[:, COLUMNS.index("s")]
    assert len(s) > 10
    assert np.all(np.diff(s) <= 1e-9)


def test_flow_is_deterministic(tmp_path):
    cfg = write(tmp_path, TORUS_COSINE)
    for d in ("a", "b"):
        assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / d), "--quiet"]) == 0
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    assert a == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert b"\r" not in a


def test_seed_flag_lands_in_header(tmp_path):
    cfg = write(tmp_path, TORUS_COSINE)
    cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path), "--seed", "123", "--quiet"])
    assert (tmp_path / "diagnostics.csv").read_text().startswith("# seed=123 ")
    assert "seed: 123" in (tmp_path / "summary.txt").read_text()


def test_csv_round_trip(tmp_path):
    geom = make_torus(1, 2 * np.pi, 16, 0.3)
    u0 = geom.from_function(lambda x: 1 + 0.1 * np.cos(x[:, 0]))
    series = run(geom, u0, 0.2, 1e-3)
    path = tmp_path / "s.csv"
    cli.write_series_csv(path, series, "# test")
    back = cli.read_series_csv(path, 1, 0.3, "torus")
    assert back.rows == series.rows


def test_stride_keeps_last_row(tmp_path):
    geom = make_torus(1, 2 * np.pi, 16, 0.3)
    series = run(geom, geom.from_function(lambda x: 1 + 0.1 * np.cos(x[:, 0])), 0.2, 1e-3)
    path = tmp_path / "s.csv"
    cli.write_series_csv(path, series, "# test", stride=7)
    back = cli.read_series_csv(path, 1, 0.3, "torus")
    assert back.rows[0] == series.rows[0] and back.rows[-1] == series.rows[-1]
    assert len(back) == len(range(0, len(series), 7)) + ((len(series) - 1) % 7 != 0)


def spectrum_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return [ln.split(",") for ln in lines[1:]]


def test_sphere_spectrum(tmp_path):
    cfg = write(tmp_path, "[geometry]\nkind = sphere\nn = 2\ngamma = 0.5\ntruncation = 10\n")
    assert cli.main(["spectrum", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    rows = spectrum_rows(tmp_path / "spectrum.csv")
    assert np.allclose([float(r[0]) for r in rows], [k + 0.5 for k in range(11)], rtol=0, atol=1e-12)
    assert [int(r[2]) for r in rows] == [2 * k + 1 for k in range(11)]


def test_torus_spectrum_starts_at_zero(tmp_path):
    cfg = write(tmp_path, "[geometry]\nkind = torus\nn = 1\ngamma = 0.3\ntruncation = 8\n")
    assert cli.main(["spectrum", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    rows = spectrum_rows(tmp_path / "spectrum.csv")
    assert float(rows[0][0]) == 0.0 and int(rows[0][2]) == 1
    assert int(rows[1][2]) == 2


def test_weighted_spectrum_matches_library(tmp_path):
    geom = make_torus(1, 2 * np.pi, 16, 0.3)
    u_inf = geom.from_function(lambda x: 1 + 0.2 * np.cos(x[:, 0]))
    np.savetxt(tmp_path / "u_inf.txt", u_inf.coeffs, fmt="%.17g")
    cfg = write(tmp_path, """
        [geometry]
        kind = torus
        n = 1
        gamma = 0.3
        truncation = 16
        [output]
        u_inf = u_inf.txt
        count = 12
    """)
    assert cli.main(["spectrum", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    loaded = geom.field(np.loadtxt(tmp_path / "u_inf.txt"))
    pairs = stability.weighted_eigs(geom, loaded, 12)
    expected = [cli.header_comment(load_config(cfg)), "index,lambda"]
    expected += [f"{a},{cli.fmt(p.lambda_a)}" for a, p in enumerate(pairs)]
    assert (tmp_path / "weighted_spectrum.csv").read_bytes() == ("\n".join(expected) + "\n").encode()


@pytest.mark.slow
def test_verify_default_config_passes(tmp_path):
    cfg = write(tmp_path, "[geometry]\nkind = sphere\nn = 2\ngamma = 0.5\ntruncation = 12\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    lines = (tmp_path / "verify.txt").read_text().splitlines()
    assert lines and all(ln.startswith("PASS") for ln in lines)


@pytest.mark.slow
def test_verify_low_truncation_uses_coarse_table(tmp_path):
    cfg = write(tmp_path, "[geometry]\nkind = torus\nn = 1\ngamma = 0.3\ntruncation = 4\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    text = (tmp_path / "verify.txt").read_text()
    assert "PASS stroock_varopoulos" in text and "tol=1.0e-03" in text


def test_verify_rejects_bad_dimension(tmp_path):
    cfg = write(tmp_path, "[geometry]\nkind = torus\nn = 1\ngamma = 0.5\ntruncation = 8\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_bubble_command(tmp_path):
    cfg = write(tmp_path, """
        [geometry]
        kind = sphere
        n = 2
        gamma = 0.5
        truncation = 32
        [initial]
        type = bubble
        eps = 0.25
    """)
    assert cli.main(["bubble", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    items = dict(ln.split(": ", 1) for ln in (tmp_path / "summary.txt").read_text().splitlines())
    assert abs(float(items["L_est"]) - 1) < 0.1
    assert items["near_integer"] == "True"


def test_sweep_writes_one_file_per_gamma(tmp_path):
    cfg = write(tmp_path, TORUS_COSINE.replace("t_end = 1.0", "t_end = 0.1")
                + "[sweep]\ngammas = 0.2, 0.3\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    assert (tmp_path / "gamma_0.2_diagnostics.csv").exists()
    assert (tmp_path / "gamma_0.3_summary.txt").exists()


def test_failed_run_flushes_partial_csv(tmp_path, monkeypatch):
    from fracyamabe import flow
    monkeypatch.setattr(flow, "BLOWUP_CEILING", 1.0)
    cfg = write(tmp_path, TORUS_COSINE)
    assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == cli.EXIT_RUN
    assert len(data_rows(tmp_path / "diagnostics.csv")) >= 1
    assert "status: failed" in (tmp_path / "summary.txt").read_text()
