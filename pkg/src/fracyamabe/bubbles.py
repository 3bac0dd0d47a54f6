"""Standard bubbles, sphere/plane conformal transfer and concentration bookkeeping.

The flat bubble ``abar (1+|x|^2)^{-(n-2g)/2}`` solves
``(-Delta)^g u = u^{(n+2g)/(n-2g)}``.  Pulled back to the round sphere by
inverse stereographic projection it becomes ``kappa * m(x; x0, eps)`` with
the Moebius factor ``m = [2 eps / ((1+eps^2) - (1-eps^2) x.x0)]^{(n-2g)/2}``
and ``kappa = abar 2^{-(n-2g)/2}``; the scale ``eps`` is the same on both
sides when ``x0`` is the south pole.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import least_squares
from scipy.special import gammaln

from .errors import FitError, GeometryMismatch, PoleError
from .fraclap import sphere_eigenvalue
from .functionals import energy_E, exponents, mean_curvature_s, volume
from .geometry import SPHERE, Geometry, SpectralField

POLE_TOL = 1e-12
FLAT_CONTRAST = 1e-6       # (maxU - minU) / maxU below this: nothing to fit
CONCENTRATED_SCALE = 0.5   # fitted scale (sphere radius units / torus period units)
FIT_RESIDUAL_LIMIT = 0.5
NEAR_INTEGER = 0.1


@dataclass(frozen=True)
class ModelConstants:
    n: int
    gamma: float
    alpha_bar: float
    alpha: float
    green_const: float
    Y_sphere: float
    lambda0: float
    sphere_volume: float

    @property
    def sphere_amplitude(self) -> float:
        """Height of the unit-scale bubble pulled back to the sphere."""
        return self.alpha_bar * 2.0 ** (-(self.n - 2 * self.gamma) / 2)


def sphere_volume(n: int) -> float:
    return float(2 * np.pi ** ((n + 1) / 2) / np.exp(gammaln((n + 1) / 2)))


@lru_cache(maxsize=None)
def model_constants(n: int, gamma: float) -> ModelConstants:
    g = float(gamma)
    lam0 = float(sphere_eigenvalue(n, g, 0))
    d = n - 2 * g
    alpha = float(np.exp(d / 2 * np.log(2) + d / (4 * g) * np.log(lam0)))
    green = float(np.exp(-n / 2 * np.log(np.pi) - 2 * g * np.log(2) - gammaln(g) + gammaln(n / 2 - g)))
    vol = sphere_volume(n)
    # the flat bubble amplitude coincides with alpha: abar^{4g/(n-2g)} = 2^{2g} lambda(0)
    return ModelConstants(n=n, gamma=g, alpha_bar=alpha, alpha=alpha, green_const=green,
                          Y_sphere=lam0 * vol ** (2 * g / n), lambda0=lam0, sphere_volume=vol)


@dataclass(frozen=True)
class BubbleParams:
    center: np.ndarray
    eps: float
    amp: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"bubble scale must be positive, got {self.eps}")
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))


def bubble_flat(x, params: BubbleParams, constants: ModelConstants) -> np.ndarray:
    """``amp eps^{-(n-2g)/2} abar (1 + |x-x0|^2/eps^2)^{-(n-2g)/2}`` at points ``x`` (..., n)."""
    n, g = constants.n, constants.gamma
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    r2 = np.sum((x - params.center) ** 2, axis=-1)
    e = params.eps
    return params.amp * constants.alpha_bar * (e / (e * e + r2)) ** ((n - 2 * g) / 2)


def moebius_factor(X, center, eps: float, n: int, gamma: float) -> np.ndarray:
    """Conformal factor of the dilation by ``1/eps`` about ``center`` on the sphere."""
    dot = np.asarray(X, dtype=float) @ np.asarray(center, dtype=float)
    return (2 * eps / ((1 + eps**2) - (1 - eps**2) * dot)) ** ((n - 2 * gamma) / 2)


def bubble_sphere(X, params: BubbleParams, constants: ModelConstants) -> np.ndarray:
    """Pullback of the flat bubble to the unit sphere at Cartesian points ``X``."""
    c = params.center / np.linalg.norm(params.center)
    return params.amp * constants.sphere_amplitude * moebius_factor(
        X, c, params.eps, constants.n, constants.gamma)


def bubble_field(geom: Geometry, params: BubbleParams,
                 constants: ModelConstants | None = None) -> SpectralField:
    """Bubble projected onto the geometry's basis (min-image distance on the torus)."""
    constants = constants or model_constants(geom.n, geom.gamma)
    if geom.kind == SPHERE:
        return geom.from_function(lambda nodes: bubble_sphere(geom.cartesian(nodes), params, constants))

    def f(nodes):
        d = nodes - params.center
        d -= geom.period * np.round(d / geom.period)
        return bubble_flat(d, BubbleParams(np.zeros(geom.n), params.eps, params.amp), constants)
    return geom.from_function(f)


# ---------------------------------------------------------------------------
# stereographic transfer (projection from the north pole e_{n+1})


def stereo_project(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    denom = 1.0 - X[..., -1]
    if np.any(denom < POLE_TOL):
        raise PoleError("stereographic projection evaluated at the pole")
    return X[..., :-1] / denom[..., None]


def stereo_lift(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum(xi**2, axis=-1, keepdims=True)
    return np.concatenate([2 * xi, r2 - 1], axis=-1) / (1 + r2)


def conformal_weight(xi, n: int, gamma: float) -> np.ndarray:
    """``(2 / (1+|xi|^2))^{(n-2g)/2}``."""
    r2 = np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1)
    return (2 / (1 + r2)) ** ((n - 2 * gamma) / 2)


def native_coords(geom: Geometry, X) -> np.ndarray:
    """Cartesian points on the sphere to the geometry's node coordinates."""
    X = np.asarray(X, dtype=float)
    if geom.n == 1:
        return np.arctan2(X[..., 1], X[..., 0])[..., None] % (2 * np.pi)
    th = np.arccos(np.clip(X[..., 2], -1, 1))
    ph = np.arctan2(X[..., 1], X[..., 0]) % (2 * np.pi)
    return np.stack([th, ph], axis=-1)


def _sphere_only(geom: Geometry) -> None:
    if geom.kind != SPHERE:
        raise GeometryMismatch("stereographic transfer needs a sphere geometry")


def to_plane(geom: Geometry, v, xi) -> np.ndarray:
    """``w(xi) = rho(xi) v(lift(xi))`` for a sphere field or a callable on Cartesian points."""
    _sphere_only(geom)
    xi = np.asarray(xi, dtype=float)
    if geom.n == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    X = stereo_lift(xi)
    if isinstance(v, SpectralField):
        vals = geom.evaluate(v.coeffs, native_coords(geom, X).reshape(-1, 2 if geom.n == 2 else 1))
        vals = vals.reshape(X.shape[:-1])
    else:
        vals = v(X)
    return conformal_weight(xi, geom.n, geom.gamma) * vals


def to_sphere(geom: Geometry, w, X) -> np.ndarray:
    """Inverse transfer ``v(x) = w(xi) / rho(xi)`` with ``xi`` the projection of ``x``."""
    _sphere_only(geom)
    xi = stereo_project(X)
    return w(xi) / conformal_weight(xi, geom.n, geom.gamma)


def plane_energy(w, n: int, gamma: float, half_width: float, npts: int) -> float:
    """``int w (-Delta)^g w dxi`` by FFT on the box ``[-h, h)^n`` (w must be negligible at its edge)."""
    x = (np.arange(npts) - npts // 2) * (2 * half_width / npts)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    vals = w(np.stack(grids, axis=-1))
    k = 2 * np.pi * np.fft.fftfreq(npts, 2 * half_width / npts)
    ks = np.meshgrid(*([k] * n), indexing="ij")
    kk = np.sqrt(sum(c * c for c in ks))
    Pw = np.fft.ifftn(kk ** (2 * gamma) * np.fft.fftn(vals)).real
    return float(np.sum(vals * Pw) * (2 * half_width / npts) ** n)


def bubble_pde_residual(n: int, gamma: float, period: float, npts: int) -> float:
    """Relative sup residual of the bubble equation for the unit bubble on a periodic box."""
    const = model_constants(n, gamma)
    x = (np.arange(npts) - npts // 2) * (period / npts)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    pts = np.stack(grids, axis=-1)
    u = bubble_flat(pts, BubbleParams(np.zeros(n), 1.0), const)
    k = 2 * np.pi * np.fft.fftfreq(npts, period / npts)
    ks = np.meshgrid(*([k] * n), indexing="ij")
    kk = np.sqrt(sum(c * c for c in ks))
    Pu = np.fft.ifftn(kk ** (2 * gamma) * np.fft.fftn(u)).real
    rhs = u ** exponents(n, gamma)["crit"]
    return float(np.max(np.abs(Pu - rhs)) / np.max(rhs))


# ---------------------------------------------------------------------------
# volume quantization


def volbar(constants: ModelConstants) -> float:
    """``int ubar^{2n/(n-2g)} dx`` in closed form, ``Y(S^n)^{n/(2g)}``."""
    return constants.Y_sphere ** (constants.n / (2 * constants.gamma))


def bubble_volume_quadrature(constants: ModelConstants) -> float:
    """The same volume by radial quadrature of ``abar^p (1+r^2)^{-n}``."""
    n = constants.n
    p = exponents(n, constants.gamma)["vol"]
    if n == 1:
        val, _ = quad(lambda r: (1 + r * r) ** -1.0, 0, np.inf)
        return float(2 * constants.alpha_bar**p * val)
    val, _ = quad(lambda r: r * (1 + r * r) ** -2.0, 0, np.inf)
    return float(2 * np.pi * constants.alpha_bar**p * val)


def threshold_s0(Y_M_est: float, constants: ModelConstants) -> float:
    """``[Y_M^{n/2g} + Y(S^n)^{n/2g}]^{2g/n}``."""
    if Y_M_est < 0:
        raise ValueError(f"Yamabe estimate must be nonnegative, got {Y_M_est}")
    q = constants.n / (2 * constants.gamma)
    return float((Y_M_est**q + constants.Y_sphere**q) ** (1 / q))


def yamabe_estimate(geom: Geometry, fields) -> float:
    """Upper estimate of the Yamabe constant: smallest quotient among ``fields``."""
    return float(min(energy_E(geom, u) for u in fields))


def aubin_check(Y_M_est: float, constants: ModelConstants, tol: float = 1e-8) -> bool:
    return bool(Y_M_est <= constants.Y_sphere + tol)


@dataclass(frozen=True)
class ConcentrationReport:
    L_est: float
    eps_est: float | None
    center_est: np.ndarray | None
    near_integer: bool
    background: float = 0.0
    fit_residual: float = 0.0
    eps_fit: float | None = None


def _model(geom: Geometry, constants: ModelConstants, theta: np.ndarray, X: np.ndarray):
    bg, amp, log_eps = theta[:3]
    eps = np.exp(log_eps)
    if geom.kind == SPHERE:
        if geom.n == 1:
            c = np.array([np.cos(theta[3]), np.sin(theta[3])])
        else:
            th, ph = theta[3], theta[4]
            c = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        bump = bubble_sphere(X, BubbleParams(c, eps, amp), constants)
        return bg + bump, bump, c
    c = np.asarray(theta[3:], dtype=float)
    d = X - c
    d -= geom.period * np.round(d / geom.period)
    bump = bubble_flat(d, BubbleParams(np.zeros(geom.n), eps, amp), constants)
    return bg + bump, bump, c % geom.period


def detect_concentration(geom: Geometry, final_u: SpectralField,
                         constants: ModelConstants | None = None,
                         series=None) -> ConcentrationReport:
    """Fit one bubble near the maximum of ``final_u`` and count bubbles by volume.

    ``L = s^{n/2g} (vol(u) - vol(background)) / Y(S^n)^{n/2g}`` where the
    background is ``u`` minus the fitted bubble; ``s^{n/2g} vol(background)``
    stands in for ``E(background)^{n/2g}``, equal for a background solving
    the limiting equation and still defined when the background vanishes.
    If the best fit is wider than half the unit radius on the sphere (a
    sixteenth of the period on the torus) there is no bubble: ``L = 0`` with
    no scale or center.
    """
    constants = constants or model_constants(geom.n, geom.gamma)
    n, g = geom.n, geom.gamma
    p = exponents(n, g)["vol"]
    u = final_u.fine_values
    umax, umin = float(u.max()), float(u.min())
    if (umax - umin) / umax < FLAT_CONTRAST:
        return ConcentrationReport(0.0, None, None, True, background=umin)

    X = geom.cartesian(geom.fine_nodes)
    i = int(np.argmax(u))
    peak_height = constants.sphere_amplitude if geom.kind == SPHERE else constants.alpha_bar
    eps0 = min((peak_height / umax) ** (2 / (n - 2 * g)), 0.9)
    if geom.kind == SPHERE:
        center0 = list(geom.fine_nodes[i])[: 1 if n == 1 else 2]
    else:
        center0 = list(geom.fine_nodes[i])
    theta0 = np.array([0.0, 1.0, np.log(eps0), *center0])
    sw = np.sqrt(geom.fine_weights)

    def resid(theta):
        return sw * (_model(geom, constants, theta, X)[0] - u)

    fit = least_squares(resid, theta0, method="lm", max_nfev=50 * (theta0.size + 1))
    model, bump, center = _model(geom, constants, fit.x, X)
    bg, amp = float(fit.x[0]), float(fit.x[1])
    eps_fit = float(np.exp(fit.x[2]))
    if geom.kind == SPHERE and eps_fit > 1:
        # m(x; c, e) = m(x; -c, 1/e): report the concentrating representative
        eps_fit, center = 1 / eps_fit, -center
    scale = 1.0 if geom.kind == SPHERE else geom.period / 8
    if not (amp > 0 and eps_fit < CONCENTRATED_SCALE * scale):
        # a wide or inverted bump is background variation, not a bubble
        return ConcentrationReport(0.0, None, None, True, background=umin,
                                   eps_fit=eps_fit)
    bump_mass = geom.integrate_fine(np.abs(bump) ** p)
    miss = geom.integrate_fine(np.abs(u - model) ** p) / bump_mass
    if miss > FIT_RESIDUAL_LIMIT:
        raise FitError(f"bubble fit leaves {miss:.1%} of the peak mass unexplained")

    s = float(series.column("s")[-1]) if series is not None else mean_curvature_s(geom, final_u)
    q = n / (2 * g)
    vol_bg = geom.integrate_fine(np.abs(u - bump) ** p)
    L = max(s, 0.0) ** q * (volume(geom, final_u) - vol_bg) / constants.Y_sphere**q
    eps_peak = (amp * peak_height / (umax - bg)) ** (2 / (n - 2 * g))
    return ConcentrationReport(
        L_est=float(L), eps_est=float(eps_peak), center_est=center,
        near_integer=abs(L - round(L)) < NEAR_INTEGER, background=bg,
        fit_residual=float(miss), eps_fit=eps_fit)
