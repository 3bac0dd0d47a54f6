"""Curvature, mean curvature, Yamabe quotient and the moment functionals.

Conventions: ``u`` is the conformal factor of ``g = u^{4/(n-2gamma)} g_0``,
``dmu = u^{2n/(n-2gamma)} dmu_0``.  The mean curvature ``s`` is the
``mu``-average of ``R`` (not the bare integral), so no unit-volume
normalization of the background is needed.  ``S_q`` and ``F_q`` are bare
``dmu`` integrals.

Every nonlinear pointwise quantity is formed on the geometry's fine grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatch, PositivityError, ZeroFieldError
from .fraclap import multiplier_table, quadratic_form
from .geometry import Geometry, SpectralField

EPS_POS = 1e-10


def exponents(n: int, gamma: float) -> dict[str, float]:
    """Named exponents of the conformal change.

    ``crit``: (n+2g)/(n-2g); ``vol``: 2n/(n-2g); ``weight``: 4g/(n-2g).
    """
    d = n - 2 * gamma
    return {"crit": (n + 2 * gamma) / d, "vol": 2 * n / d, "weight": 4 * gamma / d}


def _check(geom: Geometry, u: SpectralField) -> None:
    if u.geometry is not geom:
        raise GeometryMismatch("field belongs to a different geometry")


def _positive_fine(geom: Geometry, u: SpectralField, eps: float = EPS_POS) -> np.ndarray:
    vals = u.fine_values
    i = int(np.argmin(vals))
    if vals[i] <= eps:
        raise PositivityError(
            f"min u = {vals[i]:.3e} <= {eps:g} at node {geom.fine_nodes[i]}",
            location=geom.fine_nodes[i], value=float(vals[i]))
    return vals


def curvature_values(geom: Geometry, u: SpectralField) -> np.ndarray:
    """``R = u^{-(n+2g)/(n-2g)} P(u)`` sampled on the fine grid."""
    _check(geom, u)
    uf = _positive_fine(geom, u)
    Pu = geom.to_fine(multiplier_table(geom).values * u.coeffs)
    return uf ** (-exponents(geom.n, geom.gamma)["crit"]) * Pu


def curvature_R(geom: Geometry, u: SpectralField) -> SpectralField:
    return SpectralField(geom, geom.from_fine(curvature_values(geom, u)))


def volume(geom: Geometry, u: SpectralField) -> float:
    """``int u^{2n/(n-2g)} dmu_0`` (absolute value of u under the power)."""
    _check(geom, u)
    p = exponents(geom.n, geom.gamma)["vol"]
    return geom.integrate_fine(np.abs(u.fine_values) ** p)


def mean_curvature_s(geom: Geometry, u: SpectralField) -> float:
    """``s = int u P(u) dmu_0 / int u^{2n/(n-2g)} dmu_0``."""
    _check(geom, u)
    _positive_fine(geom, u)
    return quadratic_form(geom, u) / volume(geom, u)


def energy_E(geom: Geometry, u: SpectralField) -> float:
    """Yamabe quotient ``int u P(u) dmu_0 / vol(u)^{(n-2g)/n}``."""
    _check(geom, u)
    vol = volume(geom, u)
    if not vol > 0:
        raise ZeroFieldError("Yamabe quotient of the zero field")
    return quadratic_form(geom, u) / vol ** ((geom.n - 2 * geom.gamma) / geom.n)


def energy_gradient(geom: Geometry, u: SpectralField) -> SpectralField:
    """``L^2(dmu_0)`` gradient of ``E``.

    ``E'(u)[h] = 2 vol^{-(n-2g)/n} int h (P u - s u^{(n+2g)/(n-2g)}) dmu_0``,
    which vanishes identically exactly when ``R == s``.
    """
    _check(geom, u)
    ex = exponents(geom.n, geom.gamma)
    uf = _positive_fine(geom, u)
    vol = volume(geom, u)
    s = quadratic_form(geom, u) / vol
    Pu = multiplier_table(geom).values * u.coeffs
    nonlinear = geom.from_fine(uf ** ex["crit"])
    scale = 2.0 / vol ** ((geom.n - 2 * geom.gamma) / geom.n)
    return SpectralField(geom, scale * (Pu - s * nonlinear))


def moments_SqFq(geom: Geometry, u: SpectralField, q: float) -> tuple[float, float]:
    """``(S_q, F_q) = (int R^q dmu, int |R - s|^q dmu)``.

    For non-integer ``q`` and sign-changing ``R``, ``S_q`` uses ``|R|^q`` and
    a ``RuntimeWarning`` is emitted.
    """
    if q < 1:
        raise ValueError(f"moments need q >= 1, got {q}")
    R = curvature_values(geom, u)
    dmu = geom.fine_weights * u.fine_values ** exponents(geom.n, geom.gamma)["vol"]
    s = float(np.dot(dmu, R) / dmu.sum())
    if float(q).is_integer():
        Sq = float(np.dot(dmu, R ** int(q)))
    else:
        if R.min() < 0:
            warnings.warn(f"R changes sign; S_{q:g} evaluated with |R|^q", RuntimeWarning,
                          stacklevel=2)
        Sq = float(np.dot(dmu, np.abs(R) ** q))
    Fq = float(np.dot(dmu, np.abs(R - s) ** q))
    return Sq, Fq


@dataclass
class FunctionalReport:
    volume: float
    s: float
    E: float
    Sq: dict[float, float] = field(default_factory=dict)
    Fq: dict[float, float] = field(default_factory=dict)
    minR: float = 0.0
    maxR: float = 0.0
    minU: float = 0.0
    maxU: float = 0.0
    sup_dev: float = 0.0  # sup |R - s|


def report(geom: Geometry, u: SpectralField, qs=(2.0,)) -> FunctionalReport:
    """All scalar observables of ``u`` in one pass over the fine grid."""
    ex = exponents(geom.n, geom.gamma)
    R = curvature_values(geom, u)
    uf = u.fine_values
    dmu = geom.fine_weights * uf ** ex["vol"]
    vol = float(dmu.sum())
    s = float(np.dot(dmu, R) / vol)
    E = quadratic_form(geom, u) / vol ** ((geom.n - 2 * geom.gamma) / geom.n)
    rep = FunctionalReport(volume=vol, s=s, E=E, minR=float(R.min()), maxR=float(R.max()),
                           minU=float(uf.min()), maxU=float(uf.max()),
                           sup_dev=float(np.max(np.abs(R - s))))
    dev = np.abs(R - s)
    absR = np.abs(R)
    for q in qs:
        rep.Fq[q] = float(np.dot(dmu, dev**q))
        rep.Sq[q] = float(np.dot(dmu, R ** int(q) if float(q).is_integer() else absR**q))
    return rep


def holder_slack(geom: Geometry, u: SpectralField) -> float:
    """``||R-s||_{L^2(mu)} vol^{1/q-1/2} - ||R-s||_{L^q(mu)}`` for ``q = 2n/(n+2g)``.

    Nonnegative by Hoelder since ``q < 2``.
    """
    n, g = geom.n, geom.gamma
    q = 2 * n / (n + 2 * g)
    rep = report(geom, u, qs=(q, 2.0))
    lhs = rep.Fq[q] ** (1 / q)
    rhs = rep.Fq[2.0] ** 0.5 * rep.volume ** (1 / q - 0.5)
    return rhs - lhs


def conformal_pairing(geom: Geometry, u: SpectralField, v: SpectralField,
                      w: SpectralField) -> float:
    """``int P^g(v) w dmu`` for ``g = u^{4/(n-2g)} g_0``, via ``int P_0(uv) uw dmu_0``."""
    for f in (u, v, w):
        _check(geom, f)
    uv = SpectralField(geom, geom.from_fine(u.fine_values * v.fine_values))
    uw = geom.from_fine(u.fine_values * w.fine_values)
    return float(np.dot(multiplier_table(geom).values * uv.coeffs, uw))


def stroock_varopoulos_slack(geom: Geometry, f: SpectralField, p: float,
                             u: SpectralField | None = None) -> float:
    """``int f^{p-1} P f dmu - 4(p-1)/p^2 int f^{p/2} P(f^{p/2}) dmu``.

    With ``u`` given, ``P`` and ``mu`` are those of the conformal metric
    ``u^{4/(n-2g)} g_0``; otherwise the background.  Requires ``f > 0``.
    """
    if not 1 < p <= 4:
        raise ValueError(f"p={p} outside (1, 4]")
    _check(geom, f)
    ff = _positive_fine(geom, f)
    lam = multiplier_table(geom).values
    uf = np.ones_like(ff) if u is None else _positive_fine(geom, u)
    # int h P^g(k) dmu = int (u h) P_0(u k) dmu_0
    uf_c = geom.from_fine(uf * ff)
    lhs = geom.integrate_fine(uf * ff ** (p - 1) * geom.to_fine(lam * uf_c))
    half = geom.from_fine(uf * ff ** (p / 2))
    rhs = 4 * (p - 1) / p**2 * float(np.dot(half, lam * half))
    return lhs - rhs


# ---------------------------------------------------------------------------
# elementary pointwise inequalities used as remainder oracles


def pointwise_ratio(which: int, p: float, a, b) -> np.ndarray:
    """Ratio of left side to the constant-free right side of the pointwise bounds.

    ``which=1``: |a^p-b^p| / (|a-b|^p + a^{p-1}|a-b|), p > 0
    ``which=2``: |a^p-b^p-p a^{p-1}(a-b)| / (a^{max(p-2,0)}|a-b|^{min(p,2)} + |a-b|^p), p > 1
    ``which=3``: |a^p-b^p-p a^{p-1}(a-b)+p(p-1)/2 b^{p-2}(a-b)^2|
                 / (a^{max(p-3,0)}|a-b|^{min(p,3)} + |a-b|^p), p > 2
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = a - b
    ah = np.abs(h)
    if which == 1:
        lhs = np.abs(a**p - b**p)
        rhs = ah**p + a ** (p - 1) * ah
    elif which == 2:
        if not p > 1:
            raise ValueError("second bound needs p > 1")
        lhs = np.abs(a**p - b**p - p * a ** (p - 1) * h)
        rhs = a ** max(p - 2, 0) * ah ** min(p, 2) + ah**p
    elif which == 3:
        if not p > 2:
            raise ValueError("third bound needs p > 2")
        lhs = np.abs(a**p - b**p - p * a ** (p - 1) * h + p * (p - 1) / 2 * b ** (p - 2) * h**2)
        rhs = a ** max(p - 3, 0) * ah ** min(p, 3) + ah**p
    else:
        raise ValueError(f"unknown bound {which}")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(ah > 0, lhs / np.where(ah > 0, rhs, 1.0), 0.0)
    return out


def sweep_pointwise_constant(which: int, p: float, samples: int = 400_000,
                             box: float = 10.0, seed: int = 0) -> float:
    """Brute-force sup of ``pointwise_ratio`` over ``(0, box]^2``.

    Uniform samples of the box are joined by log-spaced ratios ``b/a`` along
    its upper edges.  Pairs with ``|a-b| < 1e-4 max(a, b)`` are dropped: there
    the left sides cancel to rounding error and the ratio is meaningless.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, box, samples) + 1e-12
    b = rng.uniform(0, box, samples) + 1e-12
    t = np.geomspace(1e-6, 1.0, 10001)
    a = np.concatenate([a, np.full(t.size, box), box * t])
    b = np.concatenate([b, box * t, np.full(t.size, box)])
    keep = np.abs(a - b) >= 1e-4 * np.maximum(a, b)
    return float(np.max(pointwise_ratio(which, p, a[keep], b[keep])))


# 2 x sup of pointwise_ratio, keyed (which, p).  The sup is the larger of
# sweep_pointwise_constant and the a/b -> 1 or b/a -> 0 limit of the ratio
# (the sweep stops at |a-b| = 1e-4 max(a, b) and undershoots those limits).
POINTWISE_CONSTANTS: dict[tuple[int, float], float] = {
    (1, 1.2): 2.4,     # limit p as b -> a
    (1, 2.0): 4.0,     # limit p as b -> a
    (1, 2.5): 5.32,    # sweep 2.65588 at b/a = 1.2597
    (1, 3.5): 10.96,   # sweep 5.47848 at b/a = 1.6818
    (2, 1.2): 1.0,     # limit 1/2 as b/a -> inf
    (2, 2.0): 1.0,     # identically 1/2
    (2, 2.5): 3.75,    # limit p(p-1)/2 as b -> a
    (2, 3.5): 8.92,    # sweep 4.45636 at b/a = 1.1131
    (3, 2.5): 1.5,     # limit (p-1)/2 as b/a -> 0
    (3, 3.5): 8.75,    # limit p(p-1)(p-2)/3 as b -> a
}
