"""Weighted eigenproblem, low-mode projections and the stability diagnostics.

Everything is assembled in the truncated orthonormal basis: the stiffness is
the diagonal multiplier table ``K`` and the mass is the Galerkin matrix
``M_ij = int W phi_i phi_j dmu_0`` of the weight ``W = u_inf^{4g/(n-2g)}``,
integrated on the fine grid.  Eigenvectors ``C`` are ``M``-orthonormal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh
from scipy.special import gammaln

from .errors import ConvergenceError, DegenerateError, InsufficientDataError, RangeError
from .fraclap import multiplier_table, sphere_eigenvalue
from .functionals import _positive_fine, exponents
from .geometry import Geometry, SpectralField

TIE_RTOL = 1e-10
DELTA_BAND = (-0.5, 1.5)
MIN_TAIL_ROWS = 20
MIN_GAP = 1e-13


@dataclass(frozen=True, eq=False)
class EigenPair:
    lambda_a: float
    psi_a: SpectralField


@dataclass(frozen=True)
class LowModeSet:
    """Indices ``a`` (into the pair list) with ``lambda_a <= threshold``."""

    indices: tuple[int, ...]
    threshold: float
    s_inf: float


def weight_values(geom: Geometry, u_inf: SpectralField) -> np.ndarray:
    """``u_inf^{4g/(n-2g)}`` on the fine grid."""
    return _positive_fine(geom, u_inf) ** exponents(geom.n, geom.gamma)["weight"]


def mass_matrix(geom: Geometry, u_inf: SpectralField) -> np.ndarray:
    B = geom.fine_basis_matrix
    M = B.T @ ((geom.fine_weights * weight_values(geom, u_inf))[:, None] * B)
    return 0.5 * (M + M.T)


def _coeffs(f) -> np.ndarray:
    return f.coeffs if isinstance(f, SpectralField) else np.asarray(f, dtype=float)


def weighted_eigs(geom: Geometry, u_inf: SpectralField, count: int | None = None) -> list[EigenPair]:
    """Smallest ``count`` pairs of ``P psi = lambda W psi``, ascending."""
    count = geom.size if count is None else int(count)
    if not 1 <= count <= geom.size:
        raise ValueError(f"count must lie in [1, {geom.size}], got {count}")
    M = mass_matrix(geom, u_inf)
    K = np.diag(multiplier_table(geom).values)
    try:
        vals, vecs = eigh(K, M, subset_by_index=[0, count - 1])
    except LinAlgError as exc:
        raise ConvergenceError(f"generalized eigensolve failed: {exc}") from exc
    return [EigenPair(float(vals[a]), SpectralField(geom, vecs[:, a])) for a in range(count)]


def eigen_residual(geom: Geometry, u_inf: SpectralField, pair: EigenPair,
                   M: np.ndarray | None = None) -> float:
    """``||P psi - lambda W psi|| / (lambda ||psi||)`` in coefficient norm."""
    M = mass_matrix(geom, u_inf) if M is None else M
    c = pair.psi_a.coeffs
    r = multiplier_table(geom).values * c - pair.lambda_a * (M @ c)
    return float(np.linalg.norm(r) / (max(abs(pair.lambda_a), 1e-300) * np.linalg.norm(c)))


def low_mode_set(pairs: list[EigenPair], s_inf: float, n: int, gamma: float) -> LowModeSet:
    """Pairs at or below ``(n+2g)/(n-2g) s_inf``.

    On the round sphere with constant ``u_inf`` the degree-one eigenvalue
    equals the threshold identically; ties (within ``TIE_RTOL``) belong to
    the low set.  The first pair strictly above must clear the threshold by
    more than ``TIE_RTOL`` and must exist.
    """
    thr = exponents(n, gamma)["crit"] * s_inf
    tol = TIE_RTOL * max(1.0, abs(thr))
    low = tuple(a for a, p in enumerate(pairs) if p.lambda_a <= thr + tol)
    if len(low) == len(pairs):
        raise IndexError("no pair above the threshold; request more eigenpairs")
    return LowModeSet(low, float(thr), float(s_inf))


def projection_Pi(f, pairs: list[EigenPair], A: LowModeSet, u_inf: SpectralField,
                  canonical: bool = False, M: np.ndarray | None = None) -> SpectralField:
    """Remove the low modes from ``f``.

    Default: ``f - sum_a (int psi_a f dmu_0) W psi_a`` (unweighted pairing,
    weighted re-insertion).  ``canonical=True``: the ``W``-orthogonal
    projection ``f - sum_a (int W psi_a f dmu_0) psi_a``.
    """
    geom = u_inf.geometry
    if any(a >= len(pairs) or a < 0 for a in A.indices):
        raise IndexError("low-mode index beyond the supplied pairs")
    c = _coeffs(f)
    if not A.indices:
        return SpectralField(geom, c.copy())
    M = mass_matrix(geom, u_inf) if M is None else M
    CA = np.column_stack([pairs[a].psi_a.coeffs for a in A.indices])
    if canonical:
        out = c - CA @ (CA.T @ (M @ c))
    else:
        out = c - M @ (CA @ (CA.T @ c))
    return SpectralField(geom, out)


def coercivity_prediction(pairs: list[EigenPair], A: LowModeSet) -> float:
    """``1 - threshold / lambda_min`` over the complement of ``A``."""
    comp = [p.lambda_a for a, p in enumerate(pairs) if a not in A.indices]
    return 1.0 - A.threshold / min(comp)


def coercivity_gap(pairs: list[EigenPair], s_inf: float, u_inf: SpectralField,
                   probe_count: int = 64, *, rng: np.random.Generator | None = None,
                   probes=None, A: LowModeSet | None = None) -> float:
    """``1 - max_w threshold int W w^2 / int w P w`` over probes orthogonal to ``A``.

    Probes are ``probe_count`` random coefficient vectors (or the supplied
    ``probes``), each passed through the canonical projection.
    """
    geom = u_inf.geometry
    A = low_mode_set(pairs, s_inf, geom.n, geom.gamma) if A is None else A
    comp = [p.lambda_a for a, p in enumerate(pairs) if a not in A.indices]
    tol = TIE_RTOL * max(1.0, abs(A.threshold))
    if abs(min(comp) - A.threshold) <= tol:
        raise DegenerateError(
            f"eigenvalue {min(comp):.15g} sits on the threshold {A.threshold:.15g}")
    M = mass_matrix(geom, u_inf)
    lam = multiplier_table(geom).values
    if probes is None:
        rng = np.random.default_rng(0) if rng is None else rng
        probes = rng.standard_normal((probe_count, geom.size))
    worst = 0.0
    for f in probes:
        w = projection_Pi(f, pairs, A, u_inf, canonical=True, M=M).coeffs
        energy = float(np.dot(w, lam * w))
        if energy <= 0:
            continue
        worst = max(worst, A.threshold * float(w @ M @ w) / energy)
    return 1.0 - worst


def hgamma_coefficients(pairs: list[EigenPair], u_inf: SpectralField, f,
                        M: np.ndarray | None = None) -> np.ndarray:
    """Weighted coefficients ``int W psi_a f dmu_0``."""
    M = mass_matrix(u_inf.geometry, u_inf) if M is None else M
    C = np.column_stack([p.psi_a.coeffs for p in pairs])
    return C.T @ (M @ _coeffs(f))


def cauchy_schwarz_slack(pairs: list[EigenPair], u_inf: SpectralField, f, h,
                         M: np.ndarray | None = None) -> float:
    """``||f|| ||h|| - int f P h dmu_0`` with ``||f||^2 = sum_a lambda_a c_a(f)^2``.

    ``pairs`` must be the complete eigenbasis for the expansion to be exact.
    """
    geom = u_inf.geometry
    M = mass_matrix(geom, u_inf) if M is None else M
    lam = np.array([p.lambda_a for p in pairs])
    a = hgamma_coefficients(pairs, u_inf, f, M)
    b = hgamma_coefficients(pairs, u_inf, h, M)
    pairing = float(np.dot(_coeffs(f), multiplier_table(geom).values * _coeffs(h)))
    return float(np.sqrt(np.dot(lam, a * a) * np.dot(lam, b * b))) - pairing


def sphere_gap_margin(n: int, gamma: float) -> float:
    """``Gamma(2+n/2+g)/Gamma(2+n/2-g) - alpha^{4g/(n-2g)} (n+2g)/(n-2g) 2^{-2g}``."""
    if not 0 < gamma < 1 or not n > 2 * gamma:
        raise RangeError(f"need 0 < gamma < 1 and n > 2 gamma, got n={n}, gamma={gamma}")
    d = n - 2 * gamma
    log_alpha = d / 2 * np.log(2) + d / (4 * gamma) * (gammaln(n / 2 + gamma) - gammaln(n / 2 - gamma))
    rhs = np.exp(4 * gamma / d * log_alpha) * (n + 2 * gamma) / d * 2.0 ** (-2 * gamma)
    return float(sphere_eigenvalue(n, gamma, 2) - rhs)


def lojasiewicz_fit(series, s_inf: float) -> float:
    """Exponent ``delta`` from the tail slope of ``log(s - s_inf)`` on ``log F_crit``.

    ``delta = 2n slope / (n+2g) - 1``.  Only rows in the tail half with
    ``s - s_inf >= 1e-13`` and positive ``F_crit`` are used.
    """
    n, g = series.n, series.gamma
    s = series.column("s")
    F = series.column("F_crit")
    tail = slice(len(s) // 2, None)
    gap, Ft = s[tail] - s_inf, F[tail]
    keep = (gap >= MIN_GAP) & (Ft > 0)
    if keep.sum() < MIN_TAIL_ROWS:
        raise InsufficientDataError(
            f"{int(keep.sum())} usable tail rows, need {MIN_TAIL_ROWS}")
    x, y = np.log(Ft[keep]), np.log(gap[keep])
    if np.ptp(x) == 0:
        raise InsufficientDataError("F does not vary over the tail")
    slope = np.polyfit(x, y, 1)[0]
    delta = 2 * n * slope / (n + 2 * g) - 1
    if not DELTA_BAND[0] < delta < DELTA_BAND[1]:
        warnings.warn(f"delta estimate {delta:.3f} outside the sanity band {DELTA_BAND}",
                      RuntimeWarning, stacklevel=2)
    return float(delta)
