"""Volume-preserving fractional Yamabe flow ``u_t = (s - R) u``.

Writing ``(s - R) u = s u - u^{-4g/(n-2g)} P(u)``, the stiff part is
linearized around the frozen scalar ``cbar = mean(u^{-4g/(n-2g)})`` and
treated by Crank-Nicolson in coefficient space (a diagonal solve); the rest
is handled by an explicit Heun predictor/corrector.  After every step ``u``
is rescaled by one positive scalar so the conformal volume matches the
initial one exactly.

``run`` adds step-doubling error control, positivity retries, and records a
``DiagnosticsSeries`` of the observables constrained by the dissipation
laws.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BlowupError, PositivityError, RangeError, StepFailure
from .fraclap import multiplier_table
from .functionals import FunctionalReport, exponents, report
from .geometry import Geometry, SpectralField

log = logging.getLogger(__name__)

COLUMNS = ("t", "s", "E", "vol", "F2", "F_crit", "minR", "maxR", "minU", "maxU",
           "dt_used", "step_accepted")

BLOWUP_CEILING = 1e8
MAX_HALVINGS = 20

CONVERGED = "converged"
COMPLETED = "completed"
FAILED = "failed"


@dataclass(frozen=True)
class FlowState:
    t: float
    u: SpectralField
    dt: float
    volume0: float
    eps_pos: float
    report: FunctionalReport | None = None
    vol_drift: float = 0.0  # relative volume error before the last rescaling


def initial_state(geom: Geometry, u0: SpectralField, dt0: float, qs=(2.0,)) -> FlowState:
    rep = report(geom, u0, qs=qs)
    return FlowState(t=0.0, u=u0, dt=dt0, volume0=rep.volume,
                     eps_pos=1e-10 * rep.minU, report=rep)


def _positive(geom: Geometry, c: np.ndarray, eps: float) -> np.ndarray:
    uf = geom.to_fine(c)
    i = int(np.argmin(uf))
    if uf[i] <= eps:
        raise PositivityError(f"min u = {uf[i]:.3e} <= {eps:.3e} during step",
                              location=geom.fine_nodes[i], value=float(uf[i]))
    return uf


def _explicit_part(geom: Geometry, c: np.ndarray, uf: np.ndarray, lam: np.ndarray,
                   cbar: float, p_vol: float, beta: float) -> np.ndarray:
    """``cbar P u + s u - u^{-beta} P u`` in coefficients."""
    Pu = lam * c
    vol = geom.integrate_fine(uf**p_vol)
    s = float(np.dot(c, Pu)) / vol
    nonlinear = geom.from_fine(uf ** (-beta) * geom.to_fine(Pu))
    return cbar * Pu + s * c - nonlinear


def step(state: FlowState, dt: float) -> FlowState:
    """One IMEX Crank-Nicolson/Heun step followed by volume renormalization."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    geom = state.u.geometry
    ex = exponents(geom.n, geom.gamma)
    beta, p_vol = ex["weight"], ex["vol"]
    lam = multiplier_table(geom).values
    c0 = state.u.coeffs

    uf0 = _positive(geom, c0, state.eps_pos)
    cbar = geom.integrate_fine(uf0 ** (-beta)) / geom.background_volume
    g0 = _explicit_part(geom, c0, uf0, lam, cbar, p_vol, beta)

    c_pred = (c0 + dt * g0) / (1.0 + dt * cbar * lam)
    uf_pred = _positive(geom, c_pred, state.eps_pos)
    g1 = _explicit_part(geom, c_pred, uf_pred, lam, cbar, p_vol, beta)

    c1 = (c0 - 0.5 * dt * cbar * lam * c0 + 0.5 * dt * (g0 + g1)) / (1.0 + 0.5 * dt * cbar * lam)
    uf1 = _positive(geom, c1, state.eps_pos)
    if uf1.max() > BLOWUP_CEILING:
        raise BlowupError(f"max u = {uf1.max():.3e} exceeds {BLOWUP_CEILING:g}")

    vol1 = geom.integrate_fine(uf1**p_vol)
    c1 = c1 * (state.volume0 / vol1) ** (1.0 / p_vol)
    return FlowState(t=state.t + dt, u=SpectralField(geom, c1), dt=dt,
                     volume0=state.volume0, eps_pos=state.eps_pos,
                     vol_drift=vol1 / state.volume0 - 1.0)


@dataclass
class DiagnosticsSeries:
    """Time-ordered observables of one run (accepted steps only)."""

    n: int
    gamma: float
    kind: str
    rows: list[tuple] = field(default_factory=list)
    extras: dict[str, list[float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    status: str = COMPLETED
    final_u: SpectralField | None = None

    def column(self, name: str) -> np.ndarray:
        if name in COLUMNS:
            i = COLUMNS.index(name)
            return np.array([r[i] for r in self.rows], dtype=float)
        return np.asarray(self.extras[name], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_columns(cls, n: int, gamma: float, kind: str, **cols) -> "DiagnosticsSeries":
        """Build a series from column arrays; missing columns are filled with 0."""
        length = len(next(iter(cols.values())))
        unknown = set(cols) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        arrays = [np.asarray(cols.get(c, np.zeros(length)), dtype=float) for c in COLUMNS]
        rows = [tuple(float(a[i]) for a in arrays) for i in range(length)]
        return cls(n=n, gamma=gamma, kind=kind, rows=rows)

    def _append(self, t: float, rep: FunctionalReport, q_crit: float, dt_used: float,
                accepted: int, drift: float, bound_qs) -> None:
        self.rows.append((t, rep.s, rep.E, rep.volume, rep.Fq[2.0], rep.Fq[q_crit],
                          rep.minR, rep.maxR, rep.minU, rep.maxU, dt_used, accepted))
        self.extras.setdefault("sup_dev", []).append(rep.sup_dev)
        self.extras.setdefault("vol_drift_pre", []).append(drift)
        for q in bound_qs:
            self.extras.setdefault(f"F{q + 1:g}", []).append(rep.Fq[q + 1.0])


def run(geom: Geometry, u0: SpectralField, t_end: float, dt0: float, tol: float = 1e-6, *,
        dt_max: float = np.inf, tol_conv: float = 1e-8, s_slack: float = 1e-9,
        rel_vol_tol: float = 1e-6, bound_qs=(1.0,)) -> DiagnosticsSeries:
    """Adaptive integration to ``t_end`` or until ``sup|R - s| < tol_conv``.

    The local error of a step of size ``dt`` is estimated by step doubling
    and must not exceed ``tol * dt``.  A step that would raise ``s`` by more
    than ``s_slack`` is rejected and retried with half the step.  Errors
    raised mid-run carry the partial series in their ``series`` attribute.
    """
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    n, g = geom.n, geom.gamma
    q_crit = 2 * n / (n + 2 * g)
    qs = tuple(sorted({2.0, q_crit, *(q + 1.0 for q in bound_qs)}))
    for q in bound_qs:
        if not 1 <= q < n / (2 * g):
            raise RangeError(f"bound exponent q={q} outside [1, n/(2 gamma))")

    state = initial_state(geom, u0, dt0, qs=qs)
    rep0 = state.report
    series = DiagnosticsSeries(n=n, gamma=g, kind=geom.kind)
    series.meta.update(volume0=state.volume0, s0=rep0.s, minR0=rep0.minR, E0=rep0.E,
                       rejected=0, tol=tol, dt_max=dt_max)
    for q in bound_qs:
        Sq0 = float(np.dot(geom.fine_weights * u0.fine_values ** exponents(n, g)["vol"],
                           _curv(geom, u0) ** q if float(q).is_integer()
                           else np.abs(_curv(geom, u0)) ** q))
        series.meta[f"S{q:g}_0"] = Sq0
    series._append(0.0, rep0, q_crit, 0.0, 1, 0.0, bound_qs)
    series.final_u = u0
    if rep0.sup_dev < tol_conv:
        series.status = CONVERGED
        return series

    dt = dt0
    t = 0.0
    while t < t_end * (1 - 1e-14):
        dt = min(dt, dt_max, t_end - t)
        halvings = 0
        while True:
            try:
                big = step(state, dt)
                mid = step(state, dt / 2)
                small = step(mid, dt / 2)
                rep = report(geom, small.u, qs=qs)
            except PositivityError as exc:
                halvings += 1
                series.meta["rejected"] += 1
                if halvings > MAX_HALVINGS:
                    series.status = FAILED
                    raise StepFailure(f"positivity lost at t={t:.6g}: {exc}", series) from exc
                dt /= 2
                continue
            except BlowupError as exc:
                series.status = FAILED
                exc.series = series
                raise
            scale = np.max(np.abs(small.u.fine_values))
            err = float(np.max(np.abs(small.u.fine_values - big.u.fine_values)) / scale)
            prev_s = series.rows[-1][1]
            if err > tol * dt or rep.s > prev_s + s_slack:
                halvings += 1
                series.meta["rejected"] += 1
                if halvings > MAX_HALVINGS:
                    series.status = FAILED
                    raise StepFailure(
                        f"step rejected {halvings} times at t={t:.6g} (err={err:.2e}, "
                        f"ds={rep.s - prev_s:.2e})", series)
                factor = 0.5 if err <= tol * dt else max(0.2, 0.9 * np.sqrt(tol * dt / err))
                dt *= factor
                continue
            break

        t = t + dt
        drift = max(abs(mid.vol_drift), abs(small.vol_drift))
        state = replace(small, t=t, report=rep)
        if abs(rep.volume / state.volume0 - 1) > rel_vol_tol:
            series.status = FAILED
            raise StepFailure(f"volume drifted by {rep.volume / state.volume0 - 1:.2e}", series)
        series._append(t, rep, q_crit, dt, 1, drift, bound_qs)
        series.final_u = state.u
        if rep.sup_dev < tol_conv:
            series.status = CONVERGED
            log.info("converged at t=%.6g (sup|R-s|=%.2e)", t, rep.sup_dev)
            return series
        grow = 2.0 if err == 0 else min(2.0, max(1.0, 0.9 * np.sqrt(tol * dt / err)))
        dt *= grow
    series.status = COMPLETED
    return series


def _curv(geom: Geometry, u: SpectralField) -> np.ndarray:
    from .functionals import curvature_values
    return curvature_values(geom, u)


def positivity_floor(series: DiagnosticsSeries, s0: float | None = None,
                     minR0: float | None = None) -> np.ndarray:
    """``minR(t) - exp(-4g s0 t/(n-2g)) minR0`` per row."""
    s0 = series.meta["s0"] if s0 is None else s0
    minR0 = series.meta["minR0"] if minR0 is None else minR0
    rate = exponents(series.n, series.gamma)["weight"] * s0
    t = series.column("t")
    return series.column("minR") - np.exp(-rate * t) * minR0


def fq_integral_bound(series: DiagnosticsSeries, q: float) -> tuple[float, float]:
    """Trapezoid ``int F_{q+1} dt`` and the bound ``(n-2g)/(2(n-2gq)) S_q(0)``."""
    n, g = series.n, series.gamma
    if not 1 <= q < n / (2 * g):
        raise RangeError(f"q={q} outside [1, n/(2 gamma)) = [1, {n / (2 * g):g})")
    key = f"F{q + 1:g}"
    if key not in series.extras or f"S{q:g}_0" not in series.meta:
        raise KeyError(f"series was not run with bound exponent q={q}")
    lhs = float(np.trapezoid(series.column(key), series.column("t")))
    rhs = (n - 2 * g) / (2 * (n - 2 * g * q)) * series.meta[f"S{q:g}_0"]
    return lhs, rhs
