"""Acceptance gate: one or more tests per criterion, summarized per criterion at the end."""

import time

import numpy as np
import pytest

from fracyamabe import bubbles, flow, fraclap, functionals, stability
from fracyamabe.geometry import make_sphere, make_torus
from fracyamabe.rng import stream
from fracyamabe.verify import random_field, random_positive_field, self_adjointness_slack

from conftest import cosine_torus

criterion = pytest.mark.criterion


# 1 -------------------------------------------------------------------------


@criterion(1, "operator self-adjointness")
def test_operator_self_adjoint():
    start = time.perf_counter()
    geoms = [make_torus(1, 2 * np.pi, 64, 0.3), make_sphere(1, 64, 0.3), make_sphere(2, 32, 0.5)]
    worst = 0.0
    for geom in geoms:
        rng = stream(2024, "criterion1", geom.kind, geom.n)
        for _ in range(100):
            worst = max(worst, self_adjointness_slack(geom, random_field(geom, rng),
                                                      random_field(geom, rng)))
    assert worst <= 1e-10
    assert time.perf_counter() - start < 10


# 2 -------------------------------------------------------------------------


@criterion(2, "sphere spectrum")
def test_sphere_spectrum_half():
    k = np.arange(21)
    assert np.max(np.abs(fraclap.sphere_eigenvalue(2, 0.5, k) - (k + 0.5))) <= 1e-12


@criterion(2, "sphere spectrum")
def test_sphere_spectrum_near_one():
    k = np.arange(21)
    lam = fraclap.sphere_eigenvalue(2, 1 - 1e-6, k)
    assert np.all(np.abs(lam - k * (k + 1)) <= 1e-4 * np.maximum(1, k * (k + 1)))


# 3 -------------------------------------------------------------------------


@criterion(3, "extension cross-check")
def test_extension_matches_multiplier():
    start = time.perf_counter()
    for gamma in (0.25, 0.5, 0.75):
        geom = make_torus(1 if gamma < 0.5 else 2, 2 * np.pi, 8, gamma)
        c = fraclap.calibrate_cgamma(geom)
        assert c == pytest.approx(fraclap.extension_constant(gamma), rel=1e-4)
        for k in range(1, 9):
            mode = k if geom.n == 1 else (k, 0)
            flux = fraclap.extension_dtn(geom, mode, rho_max=40)
            assert c * flux == pytest.approx(k ** (2 * gamma), rel=1e-4)
            if gamma == 0.5:
                assert flux == pytest.approx(k, rel=1e-6)
    assert time.perf_counter() - start < 30


# 4 -------------------------------------------------------------------------


@criterion(4, "flow dissipation laws")
def test_torus_volume_conserved(torus_run):
    _, _, series, _ = torus_run
    vol = series.column("vol")
    assert np.max(np.abs(vol / vol[0] - 1)) <= 1e-6
    assert np.max(series.column("dt_used")) <= 1e-3


@criterion(4, "flow dissipation laws")
def test_torus_s_non_increasing(torus_run):
    _, _, series, _ = torus_run
    assert np.max(np.diff(series.column("s"))) <= 1e-9


@criterion(4, "flow dissipation laws")
def test_torus_midpoint_dissipation(torus_run):
    # s is the volume average, so its derivative is -2 F_2 / vol
    _, _, series, _ = torus_run
    t, s = series.column("t"), series.column("s")
    F2 = series.column("F2") / series.column("vol")
    rate = np.diff(s) / np.diff(t)
    F_mid = 0.5 * (F2[1:] + F2[:-1])
    assert np.all(np.abs(rate + 2 * F_mid) <= 1e-3 * (np.abs(s[1:]) + F_mid))


@criterion(4, "flow dissipation laws")
def test_torus_terminal_deviation(torus_run):
    _, _, series, _ = torus_run
    assert series.extras["sup_dev"][-1] < 1e-6


@criterion(4, "flow dissipation laws")
def test_torus_runtime(torus_run):
    assert torus_run[3] < 120


# 5 -------------------------------------------------------------------------


@criterion(5, "curvature positivity floor")
def test_sphere_positivity_floor(sphere_run):
    _, _, series = sphere_run
    minR0 = series.meta["minR0"]
    assert minR0 > 0
    slack = flow.positivity_floor(series)
    assert slack[0] == pytest.approx(0.0, abs=1e-15)
    assert np.all(slack >= -1e-6 * minR0)


# 6 -------------------------------------------------------------------------


@criterion(6, "F-decay")
def test_sphere_fq_integral_bound(sphere_run):
    _, _, series = sphere_run
    lhs, rhs = flow.fq_integral_bound(series, 1.0)
    assert lhs <= (1 + 1e-3) * rhs


@criterion(6, "F-decay")
def test_convergent_runs_shed_F2(sphere_run):
    _, _, sphere_series = sphere_run
    geom, u0 = cosine_torus(modes=32)
    torus_series = flow.run(geom, u0, 40.0, 1e-3, 1e-8)
    for series in (sphere_series, torus_series):
        assert series.status == flow.CONVERGED
        F2 = series.column("F2")
        assert F2[-1] < 0.01 * F2[0]


# 7 -------------------------------------------------------------------------


@criterion(7, "Stroock-Varopoulos")
@pytest.mark.parametrize("geom", [make_torus(1, 2 * np.pi, 64, 0.4), make_sphere(2, 16, 0.5)],
                         ids=["torus", "sphere"])
def test_stroock_varopoulos(geom):
    rng = stream(2024, "criterion7", geom.kind)
    lam = fraclap.multiplier_table(geom).values
    for _ in range(100):
        f = random_positive_field(geom, rng)
        for p in (1.5, 2.0, 3.0):
            lhs = geom.integrate_fine(f.fine_values ** (p - 1) * geom.to_fine(lam * f.coeffs))
            assert functionals.stroock_varopoulos_slack(geom, f, p) >= -1e-10 * abs(lhs)


# 8 -------------------------------------------------------------------------


@criterion(8, "sphere eigenvalue-gap inequality")
def test_gap_margin_sweep():
    for n in (1, 2):
        for gamma in np.linspace(0.05, min(1.0, n / 2) - 0.05, 50):
            assert stability.sphere_gap_margin(n, gamma) > 0


@criterion(8, "sphere eigenvalue-gap inequality")
def test_gap_margin_half():
    # Gamma(7/2)/Gamma(5/2) - 3/2, with alpha^{4g/(n-2g)} = 2^{2g} Gamma(n/2+g)/Gamma(n/2-g) = 1
    assert stability.sphere_gap_margin(2, 0.5) == pytest.approx(1.0, abs=1e-12)


# 9 -------------------------------------------------------------------------


@criterion(9, "coercivity gap")
def test_round_sphere_coercivity():
    geom = make_sphere(2, 12, 0.5)
    u = geom.constant(1.0)
    pairs = stability.weighted_eigs(geom, u, geom.size)
    s_inf = functionals.mean_curvature_s(geom, u)
    A = stability.low_mode_set(pairs, s_inf, 2, 0.5)
    predicted = stability.coercivity_prediction(pairs, A)
    lam_min = min(p.lambda_a for a, p in enumerate(pairs) if a not in A.indices)
    probes = [p.psi_a.coeffs for p in pairs if abs(p.lambda_a - lam_min) < 1e-9]
    c_eig = stability.coercivity_gap(pairs, s_inf, u, probes=probes, A=A)
    c_rand = stability.coercivity_gap(pairs, s_inf, u, rng=stream(2024, "criterion9"), A=A)
    assert predicted == pytest.approx(1 - 3 * 0.5 / 2.5, abs=1e-12)
    assert abs(c_eig - predicted) <= 1e-10
    assert c_rand > 0 and c_eig > 0


# 10 ------------------------------------------------------------------------


@criterion(10, "bubbling bookkeeping")
def test_planted_bubble():
    geom = make_sphere(2, 32, 0.5)
    const = bubbles.model_constants(2, 0.5)
    u = bubbles.bubble_field(geom, bubbles.BubbleParams([0.0, 0.6, 0.8], 0.25), const)
    assert 0.9 < bubbles.detect_concentration(geom, u, const).L_est < 1.1


@criterion(10, "bubbling bookkeeping")
def test_background_only_run(sphere_run):
    geom, _, series = sphere_run
    assert series.status == flow.CONVERGED
    rep = bubbles.detect_concentration(geom, series.final_u, series=series)
    assert -0.1 < rep.L_est < 0.1


@criterion(10, "bubbling bookkeeping")
def test_aubin_on_outputs(sphere_run):
    geom, _, series = sphere_run
    const = bubbles.model_constants(2, 0.5)
    assert bubbles.aubin_check(float(np.min(series.column("E"))), const)
    rng = stream(2024, "criterion10")
    for g in (make_sphere(2, 12, 0.5), make_sphere(1, 32, 0.25), make_sphere(2, 12, 0.8)):
        c = bubbles.model_constants(g.n, g.gamma)
        fields = [g.constant(1.0)] + [random_positive_field(g, rng) for _ in range(10)]
        assert bubbles.aubin_check(bubbles.yamabe_estimate(g, fields), c)


# 11 ------------------------------------------------------------------------


@criterion(11, "determinism")
def test_flow_csv_byte_identical(tmp_path):
    from fracyamabe import cli
    cfg = tmp_path / "run.ini"
    cfg.write_text("[geometry]\nkind = torus\nn = 1\ngamma = 0.3\ntruncation = 32\n"
                   "[initial]\ntype = cosine\namplitude = 0.1\n"
                   "[integrator]\nt_end = 0.5\n[run]\nseed = 11\n")
    outs = []
    for d in ("first", "second"):
        assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / d), "--quiet"]) == 0
        outs.append((tmp_path / d / "diagnostics.csv").read_bytes())
    assert outs[0] == outs[1]
