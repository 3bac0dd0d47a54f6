"""Invariant battery run by ``fracyamabe verify`` and reused by the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bubbles, fraclap, functionals, stability
from .geometry import Geometry, SpectralField, make_torus
from .rng import stream

# truncations below COARSE_BELOW use the second column
COARSE_BELOW = 8
TOLERANCES = {
    "round_trip": (1e-10, 1e-10),
    "parseval": (1e-10, 1e-10),
    "self_adjointness": (1e-10, 1e-10),
    "stroock_varopoulos": (1e-10, 1e-3),
    "extension_calibration": (1e-4, 1e-4),
    "aubin": (1e-8, 1e-8),
}
POINTWISE_SAMPLES = 100_000
SV_EXPONENTS = (1.5, 2.0, 3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: value={self.value:.3e} tol={self.tolerance:.1e} {self.detail}".rstrip()


def random_field(geom: Geometry, rng: np.random.Generator, decay: float = 2.0) -> SpectralField:
    """Band-limited field with coefficients decaying like ``(1+degree)^-decay``."""
    return SpectralField(geom, rng.standard_normal(geom.size) * (1.0 + geom.degrees) ** -decay)


def random_positive_field(geom: Geometry, rng: np.random.Generator,
                          amplitude: float = 0.3) -> SpectralField:
    """``1 + f`` with ``f`` a random band-limited field scaled to ``max|f| = amplitude``."""
    f = random_field(geom, rng)
    c = f.coeffs.copy()
    c[0] = 0.0
    c *= amplitude / np.max(np.abs(geom.to_fine(c)))
    return geom.constant(1.0) + SpectralField(geom, c)


def _tol(name: str, geom: Geometry) -> float:
    fine, coarse = TOLERANCES[name]
    return coarse if geom.truncation < COARSE_BELOW else fine


def check_round_trip(geom: Geometry, seed: int, trials: int = 20) -> CheckResult:
    rng = stream(seed, "round_trip")
    worst = 0.0
    for _ in range(trials):
        f = random_field(geom, rng)
        back = geom.to_coeffs(geom.to_grid(f.coeffs))
        worst = max(worst, np.linalg.norm(back - f.coeffs) / np.linalg.norm(f.coeffs))
    tol = _tol("round_trip", geom)
    return CheckResult("round_trip", worst <= tol, worst, tol)


def check_parseval(geom: Geometry, seed: int, trials: int = 20) -> CheckResult:
    rng = stream(seed, "parseval")
    worst = 0.0
    for _ in range(trials):
        f = random_field(geom, rng)
        grid = geom.integrate_fine(f.fine_values**2)
        worst = max(worst, abs(grid / f.norm() ** 2 - 1))
    tol = _tol("parseval", geom)
    return CheckResult("parseval", worst <= tol, worst, tol)


def self_adjointness_slack(geom: Geometry, v: SpectralField, w: SpectralField) -> float:
    """``|int P(v) w - int P(w) v| / (||v|| ||w||)`` with both integrals on the grid."""
    lam = fraclap.multiplier_table(geom).values
    a = geom.integrate_fine(geom.to_fine(lam * v.coeffs) * w.fine_values)
    b = geom.integrate_fine(geom.to_fine(lam * w.coeffs) * v.fine_values)
    return abs(a - b) / (v.norm() * w.norm())


def check_self_adjointness(geom: Geometry, seed: int, pairs: int = 100) -> CheckResult:
    rng = stream(seed, "self_adjointness")
    worst = max(self_adjointness_slack(geom, random_field(geom, rng), random_field(geom, rng))
                for _ in range(pairs))
    tol = _tol("self_adjointness", geom)
    return CheckResult("self_adjointness", worst <= tol, worst, tol, f"pairs={pairs}")


def check_stroock_varopoulos(geom: Geometry, seed: int, fields: int = 100) -> CheckResult:
    rng = stream(seed, "stroock_varopoulos")
    tol = _tol("stroock_varopoulos", geom)
    worst = np.inf
    for _ in range(fields):
        f = random_positive_field(geom, rng)
        for p in SV_EXPONENTS:
            slack = functionals.stroock_varopoulos_slack(geom, f, p)
            lhs = geom.integrate_fine(f.fine_values ** (p - 1)
                                      * geom.to_fine(fraclap.multiplier_table(geom).values * f.coeffs))
            worst = min(worst, slack / max(abs(lhs), 1e-300))
    return CheckResult("stroock_varopoulos", worst >= -tol, worst, tol,
                       f"fields={fields} p={list(SV_EXPONENTS)}")


def check_extension(gamma: float) -> CheckResult:
    # the extension is one-dimensional; a planar torus just admits every gamma < 1
    torus = make_torus(1 if gamma < 0.5 else 2, 2 * np.pi, 8, gamma)
    c = fraclap.calibrate_cgamma(torus)
    err = abs(c / fraclap.extension_constant(gamma) - 1)
    tol = TOLERANCES["extension_calibration"][0]
    return CheckResult("extension_calibration", err <= tol, err, tol, f"gamma={gamma:g} c={c:.10g}")


def gap_sweep(points: int = 2500) -> dict[int, float]:
    """Smallest ``sphere_gap_margin`` over ``points`` exponents per dimension."""
    out = {}
    for n in (1, 2):
        gs = np.linspace(0.05, min(1.0, n / 2) - 0.05, points)
        out[n] = min(stability.sphere_gap_margin(n, g) for g in gs)
    return out


def check_gap_sweep() -> CheckResult:
    worst = min(gap_sweep().values())
    return CheckResult("sphere_gap_sweep", worst > 0, worst, 0.0, "min margin")


def check_aubin(geom: Geometry, seed: int, fields: int = 10) -> CheckResult:
    rng = stream(seed, "aubin")
    cands = [geom.constant(1.0)] + [random_positive_field(geom, rng) for _ in range(fields)]
    Y = bubbles.yamabe_estimate(geom, cands)
    const = bubbles.model_constants(geom.n, geom.gamma)
    tol = _tol("aubin", geom)
    return CheckResult("aubin", bubbles.aubin_check(Y, const, tol), Y - const.Y_sphere, tol,
                       f"Y_est={Y:.12g} Y_sphere={const.Y_sphere:.12g}")


def check_pointwise(seed: int, samples: int = POINTWISE_SAMPLES) -> list[CheckResult]:
    results = []
    for (which, p), C in functionals.POINTWISE_CONSTANTS.items():
        rng = stream(seed, "pointwise", which, int(round(10 * p)))
        a = rng.uniform(0, 10, samples) + 1e-12
        b = rng.uniform(0, 10, samples) + 1e-12
        # left sides of nearly equal pairs are pure rounding noise
        keep = np.abs(a - b) >= 1e-4 * np.maximum(a, b)
        worst = float(np.max(functionals.pointwise_ratio(which, p, a[keep], b[keep])))
        results.append(CheckResult(f"pointwise_{which}_p{p:g}", worst <= C, worst, C))
    return results


def run_battery(geom: Geometry, seed: int = 0) -> list[CheckResult]:
    results = [
        check_round_trip(geom, seed),
        check_parseval(geom, seed),
        check_self_adjointness(geom, seed),
        check_stroock_varopoulos(geom, seed),
        check_extension(geom.gamma),
        check_gap_sweep(),
        check_aubin(geom, seed),
    ]
    results.extend(check_pointwise(seed))
    return results
