"""Model background geometries and their spectral transforms.

Two backgrounds are supported: the flat torus ``T^n`` of a given period and
the unit round sphere ``S^n``, for ``n`` in {1, 2}.  Every field is expanded
in a real basis that is orthonormal in ``L^2(dmu_0)``:

* Fourier (torus, and the circle ``S^1``): the constant ``1/sqrt(V)`` followed
  by ``sqrt(2/V) cos(k.x)``, ``sqrt(2/V) sin(k.x)`` for each wave vector ``k``
  in a half space, ordered by ``|k|``.
* ``S^2``: real spherical harmonics ``Y_lm`` stored at flat index
  ``l*l + l + m`` (``m < 0`` holds the ``sin(|m| phi)`` member).

Each geometry carries a base collocation grid and a fine grid oversampled by
a factor of two per axis.  Pointwise nonlinearities are evaluated on the
fine grid and projected back by quadrature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, GeometryMismatch, ModeOutOfRange, ResolutionError

TORUS = "torus"
SPHERE = "sphere"

MIN_TRUNCATION = 4


def _check_dims(n: int, gamma: float) -> None:
    if n not in (1, 2):
        raise DimensionError(f"dimension n={n} not supported; expected 1 or 2")
    if not 0.0 < gamma < 1.0:
        raise DimensionError(f"gamma={gamma} outside (0, 1)")
    if not n > 2.0 * gamma:
        raise DimensionError(f"need n > 2*gamma, got n={n}, gamma={gamma}")


class _FourierBasis:
    """Real trigonometric basis on a periodic box of side ``period``."""

    def __init__(self, n: int, period: float, npts: int, kmax: int):
        self.n = n
        self.period = float(period)
        self.npts = npts
        self.kmax = kmax
        self.volume = self.period**n

        rng = range(-kmax, kmax + 1)
        vecs = []
        for k in itertools.product(rng, repeat=n):
            nz = [c for c in k if c != 0]
            if nz and nz[0] > 0:
                vecs.append(k)
        vecs.sort(key=lambda k: (sum(c * c for c in k), k))
        self.wavevectors = np.array(vecs, dtype=int).reshape(-1, n)
        self.size = 1 + 2 * len(vecs)

        labels = np.zeros((self.size, n), dtype=int)
        labels[1::2] = self.wavevectors
        labels[2::2] = self.wavevectors
        self.labels = labels
        self.kind_of = np.array(["const"] + ["cos", "sin"] * len(vecs))
        self.degree = np.sqrt((labels**2).sum(axis=1))

    def nodes(self, m: int) -> np.ndarray:
        x = np.arange(m) * self.period / m
        grids = np.meshgrid(*([x] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def weights(self, m: int) -> np.ndarray:
        return np.full(m**self.n, self.volume / m**self.n)

    def _index(self, m: int):
        k = self.wavevectors % m
        return tuple(k[:, d] for d in range(self.n))

    def synthesize(self, coeffs: np.ndarray, m: int) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        batch = coeffs.shape[:-1]
        F = np.zeros(batch + (m,) * self.n, dtype=complex)
        V = self.volume
        zero = (0,) * self.n
        F[(...,) + zero] = coeffs[..., 0] / np.sqrt(V)
        a = coeffs[..., 1::2]
        b = coeffs[..., 2::2]
        pos = self._index(m)
        neg = tuple((-self.wavevectors[:, d]) % m for d in range(self.n))
        F[(...,) + pos] = (a - 1j * b) / np.sqrt(2 * V)
        F[(...,) + neg] = (a + 1j * b) / np.sqrt(2 * V)
        axes = tuple(range(-self.n, 0))
        vals = np.fft.ifftn(F, axes=axes).real * m**self.n
        return vals.reshape(batch + (m**self.n,))

    def analyze(self, values: np.ndarray, m: int) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        batch = values.shape[:-1]
        grid = values.reshape(batch + (m,) * self.n)
        axes = tuple(range(-self.n, 0))
        F = np.fft.fftn(grid, axes=axes) / m**self.n
        V = self.volume
        out = np.empty(batch + (self.size,))
        out[..., 0] = np.sqrt(V) * F[(...,) + (0,) * self.n].real
        fk = F[(...,) + self._index(m)]
        out[..., 1::2] = np.sqrt(2 * V) * fk.real
        out[..., 2::2] = -np.sqrt(2 * V) * fk.imag
        return out

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.n)
        phase = 2 * np.pi / self.period * pts @ self.wavevectors.T
        V = self.volume
        mat = np.empty((pts.shape[0], self.size))
        mat[:, 0] = 1 / np.sqrt(V)
        mat[:, 1::2] = np.sqrt(2 / V) * np.cos(phase)
        mat[:, 2::2] = np.sqrt(2 / V) * np.sin(phase)
        return np.asarray(coeffs) @ mat.T


def normalized_legendre(lmax: int, x: np.ndarray) -> np.ndarray:
    """Associated Legendre functions normalized to unit L^2 norm on [-1, 1].

    Returns an array of shape ``x.shape + (lmax+1, lmax+1)`` indexed
    ``[..., l, m]``; entries with ``m > l`` are zero.  No Condon-Shortley
    phase.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.zeros(x.shape + (lmax + 1, lmax + 1))
    out[..., 0, 0] = 1.0 / np.sqrt(2.0)
    for m in range(1, lmax + 1):
        out[..., m, m] = out[..., m - 1, m - 1] * np.sqrt((2 * m + 1) / (2 * m)) * s
    for m in range(0, lmax):
        out[..., m + 1, m] = np.sqrt(2 * m + 3) * x * out[..., m, m]
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            out[..., l, m] = a * (x * out[..., l - 1, m] - b * out[..., l - 2, m])
    return out


class _SphereBasis:
    """Real spherical harmonics on the unit S^2 up to degree ``lmax``."""

    def __init__(self, lmax: int):
        self.n = 2
        self.lmax = lmax
        self.size = (lmax + 1) ** 2
        self.volume = 4 * np.pi
        l_of = np.zeros(self.size, dtype=int)
        m_of = np.zeros(self.size, dtype=int)
        for l in range(lmax + 1):
            for m in range(-l, l + 1):
                l_of[l * l + l + m] = l
                m_of[l * l + l + m] = m
        self.labels = np.stack([l_of, m_of], axis=-1)
        self.degree = l_of.astype(float)

        L = lmax
        lv, mv = np.meshgrid(np.arange(L + 1), np.arange(L + 1), indexing="ij")
        valid = mv <= lv
        self._valid = valid
        self._cos_idx = np.where(valid, lv * lv + lv + mv, 0)
        self._sin_idx = np.where(valid & (mv > 0), lv * lv + lv - mv, 0)
        self._sin_valid = valid & (mv > 0)
        self._grids: dict[int, tuple] = {}

    def _grid(self, nlat: int):
        if nlat not in self._grids:
            x, w = np.polynomial.legendre.leggauss(nlat)
            x = x[::-1]
            w = w[::-1]
            nlon = 2 * nlat
            phi = 2 * np.pi * np.arange(nlon) / nlon
            leg = normalized_legendre(self.lmax, x)
            m = np.arange(self.lmax + 1)
            bcos = np.cos(np.outer(m, phi)) / np.sqrt(np.pi)
            bcos[0] = 1.0 / np.sqrt(2 * np.pi)
            bsin = np.sin(np.outer(m, phi)) / np.sqrt(np.pi)
            self._grids[nlat] = (x, w, phi, leg, bcos, bsin)
        return self._grids[nlat]

    def nodes(self, nlat: int) -> np.ndarray:
        x, _, phi, *_ = self._grid(nlat)
        th = np.arccos(x)
        T, P = np.meshgrid(th, phi, indexing="ij")
        return np.stack([T.ravel(), P.ravel()], axis=-1)

    def weights(self, nlat: int) -> np.ndarray:
        _, w, phi, *_ = self._grid(nlat)
        return np.outer(w, np.full(phi.size, 2 * np.pi / phi.size)).ravel()

    def _split(self, coeffs):
        A = np.where(self._valid, coeffs[..., self._cos_idx], 0.0)
        B = np.where(self._sin_valid, coeffs[..., self._sin_idx], 0.0)
        return A, B

    def synthesize(self, coeffs: np.ndarray, nlat: int) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        _, _, phi, leg, bcos, bsin = self._grid(nlat)
        A, B = self._split(coeffs)
        gc = np.einsum("jlm,...lm->...jm", leg, A)
        gs = np.einsum("jlm,...lm->...jm", leg, B)
        vals = gc @ bcos + gs @ bsin
        return vals.reshape(coeffs.shape[:-1] + (nlat * phi.size,))

    def analyze(self, values: np.ndarray, nlat: int) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        _, w, phi, leg, bcos, bsin = self._grid(nlat)
        batch = values.shape[:-1]
        grid = values.reshape(batch + (nlat, phi.size))
        dphi = 2 * np.pi / phi.size
        hc = grid @ bcos.T * dphi
        hs = grid @ bsin.T * dphi
        A = np.einsum("j,jlm,...jm->...lm", w, leg, hc)
        B = np.einsum("j,jlm,...jm->...lm", w, leg, hs)
        out = np.zeros(batch + (self.size,))
        out[..., self._cos_idx[self._valid]] = A[..., self._valid]
        out[..., self._sin_idx[self._sin_valid]] = B[..., self._sin_valid]
        return out

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        leg = normalized_legendre(self.lmax, np.cos(pts[:, 0]))
        m = np.arange(self.lmax + 1)
        bcos = np.cos(np.outer(pts[:, 1], m)) / np.sqrt(np.pi)
        bcos[:, 0] = 1.0 / np.sqrt(2 * np.pi)
        bsin = np.sin(np.outer(pts[:, 1], m)) / np.sqrt(np.pi)
        A, B = self._split(np.asarray(coeffs, dtype=float))
        return (np.einsum("plm,...lm,pm->...p", leg, A, bcos)
                + np.einsum("plm,...lm,pm->...p", leg, B, bsin))


@dataclass(frozen=True, eq=False)
class Geometry:
    """Immutable background descriptor.

    Compared and hashed by identity: two geometries built with the same
    arguments are still distinct backgrounds for field bookkeeping.
    """

    kind: str
    n: int
    gamma: float
    truncation: int
    period: float | None
    grid_nodes: np.ndarray
    grid_weights: np.ndarray
    background_volume: float
    _basis: object = field(repr=False)
    _base_res: int = field(repr=False)
    _fine_res: int = field(repr=False)

    @property
    def size(self) -> int:
        """Number of basis functions."""
        return self._basis.size

    @property
    def mode_labels(self) -> np.ndarray:
        """Per coefficient: wave vector (Fourier) or ``(l, m)`` (S^2)."""
        return self._basis.labels

    @property
    def degrees(self) -> np.ndarray:
        """Per coefficient: ``|k|`` (Fourier) or ``l`` (S^2)."""
        return self._basis.degree

    @property
    def is_fourier(self) -> bool:
        return isinstance(self._basis, _FourierBasis)

    @cached_property
    def fine_nodes(self) -> np.ndarray:
        return self._basis.nodes(self._fine_res)

    @cached_property
    def fine_weights(self) -> np.ndarray:
        return self._basis.weights(self._fine_res)

    # transforms -----------------------------------------------------------
    def to_grid(self, coeffs) -> np.ndarray:
        return self._basis.synthesize(self._checked(coeffs), self._base_res)

    def to_coeffs(self, grid_values) -> np.ndarray:
        vals = np.asarray(grid_values, dtype=float)
        if vals.shape[-1] != self.grid_weights.size:
            raise GeometryMismatch(
                f"expected {self.grid_weights.size} grid values, got {vals.shape[-1]}")
        return self._basis.analyze(vals, self._base_res)

    def to_fine(self, coeffs) -> np.ndarray:
        return self._basis.synthesize(self._checked(coeffs), self._fine_res)

    def from_fine(self, fine_values) -> np.ndarray:
        vals = np.asarray(fine_values, dtype=float)
        if vals.shape[-1] != self.fine_weights.size:
            raise GeometryMismatch(
                f"expected {self.fine_weights.size} fine values, got {vals.shape[-1]}")
        return self._basis.analyze(vals, self._fine_res)

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Evaluate an expansion at arbitrary points (coordinates as in grid_nodes)."""
        return self._basis.evaluate(self._checked(coeffs), points)

    def integrate_fine(self, fine_values) -> float:
        return float(np.dot(self.fine_weights, fine_values))

    def _checked(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        if c.shape[-1] != self.size:
            raise GeometryMismatch(f"expected {self.size} coefficients, got {c.shape[-1]}")
        return c

    # coordinates ------------------------------------------------------------
    def cartesian(self, nodes: np.ndarray | None = None) -> np.ndarray:
        """Embed sphere nodes in R^{n+1}; identity for the torus."""
        pts = self.grid_nodes if nodes is None else np.asarray(nodes, dtype=float)
        if self.kind == TORUS:
            return pts
        if self.n == 1:
            th = pts[..., 0]
            return np.stack([np.cos(th), np.sin(th)], axis=-1)
        th, ph = pts[..., 0], pts[..., 1]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    def mode_index(self, mode) -> int:
        """Flat coefficient index of the cosine/zonal member of a mode.

        ``mode`` is a wave vector (tuple of ints, or an int when n=1) for
        Fourier geometries and ``(l, m)`` for S^2.
        """
        if self.is_fourier:
            k = np.atleast_1d(np.asarray(mode, dtype=int))
            if k.size != self.n:
                raise ModeOutOfRange(f"mode {mode} has wrong length for n={self.n}")
            if not k.any():
                return 0
            nz = k[k != 0]
            sign = 1 if nz[0] > 0 else -1
            hits = np.flatnonzero((self._basis.wavevectors == sign * k).all(axis=1))
            if hits.size == 0:
                raise ModeOutOfRange(f"mode {tuple(k)} beyond truncation")
            return 1 + 2 * int(hits[0])
        l, m = mode
        if not (0 <= l <= self.truncation and -l <= m <= l):
            raise ModeOutOfRange(f"harmonic ({l}, {m}) beyond degree {self.truncation}")
        return l * l + l + m

    # fields ---------------------------------------------------------------
    def field(self, coeffs) -> "SpectralField":
        return SpectralField(self, self._checked(coeffs).copy())

    def from_grid(self, grid_values) -> "SpectralField":
        return SpectralField(self, self.to_coeffs(grid_values))

    def from_function(self, func) -> "SpectralField":
        """Project ``func(nodes)`` (evaluated on the fine grid) onto the basis."""
        return SpectralField(self, self.from_fine(func(self.fine_nodes)))

    def constant(self, value: float) -> "SpectralField":
        c = np.zeros(self.size)
        c[0] = value * np.sqrt(self.background_volume)
        return SpectralField(self, c)

    def basis_field(self, index: int) -> "SpectralField":
        if not 0 <= index < self.size:
            raise ModeOutOfRange(f"basis index {index} outside [0, {self.size})")
        c = np.zeros(self.size)
        c[index] = 1.0
        return SpectralField(self, c)

    @cached_property
    def fine_basis_matrix(self) -> np.ndarray:
        """Basis functions sampled on the fine grid, shape (n_fine, size)."""
        return self._basis.synthesize(np.eye(self.size), self._fine_res).T


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real scalar field stored by its basis coefficients."""

    geometry: Geometry
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.geometry.size,):
            raise GeometryMismatch(
                f"coefficient vector of shape {c.shape} for basis size {self.geometry.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @cached_property
    def grid_values(self) -> np.ndarray:
        return self.geometry.to_grid(self.coeffs)

    @cached_property
    def fine_values(self) -> np.ndarray:
        return self.geometry.to_fine(self.coeffs)

    def _same(self, other: "SpectralField") -> None:
        if other.geometry is not self.geometry:
            raise GeometryMismatch("fields live on different geometries")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._same(other)
            return SpectralField(self.geometry, self.coeffs + other.coeffs)
        return self + self.geometry.constant(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField(self.geometry, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def norm(self) -> float:
        """L^2(dmu_0) norm (Parseval)."""
        return float(np.linalg.norm(self.coeffs))


def make_torus(n: int, period: float, modes_per_axis: int, gamma: float) -> Geometry:
    """Flat torus ``[0, period)^n`` with a uniform grid of ``modes_per_axis^n`` nodes.

    Wave vectors with ``|k_i| < modes_per_axis / 2`` are kept, so the Nyquist
    mode is excluded and the base grid resolves every basis product's mean.
    """
    _check_dims(n, gamma)
    if modes_per_axis < MIN_TRUNCATION:
        raise ResolutionError(f"modes_per_axis={modes_per_axis} < {MIN_TRUNCATION}")
    if not period > 0:
        raise ValueError(f"period must be positive, got {period}")
    N = int(modes_per_axis)
    basis = _FourierBasis(n, period, N, (N - 1) // 2)
    return Geometry(
        kind=TORUS, n=n, gamma=float(gamma), truncation=N, period=float(period),
        grid_nodes=basis.nodes(N), grid_weights=basis.weights(N),
        background_volume=float(period) ** n, _basis=basis, _base_res=N, _fine_res=2 * N,
    )


def make_sphere(n: int, degree_max: int, gamma: float) -> Geometry:
    """Unit round sphere ``S^n`` truncated at harmonic degree ``degree_max``.

    ``S^1`` uses ``2L+2`` uniform angles; ``S^2`` uses ``L+1`` Gauss-Legendre
    colatitudes times ``2L+2`` longitudes.  Both integrate products of
    harmonics up to degree ``2L`` exactly.
    """
    _check_dims(n, gamma)
    if degree_max < MIN_TRUNCATION:
        raise ResolutionError(f"degree_max={degree_max} < {MIN_TRUNCATION}")
    L = int(degree_max)
    if n == 1:
        basis = _FourierBasis(1, 2 * np.pi, 2 * L + 2, L)
        base, fine = 2 * L + 2, 4 * L + 4
    else:
        basis = _SphereBasis(L)
        base, fine = L + 1, 2 * L + 2
    return Geometry(
        kind=SPHERE, n=n, gamma=float(gamma), truncation=L, period=None,
        grid_nodes=basis.nodes(base), grid_weights=basis.weights(base),
        background_volume=float(basis.volume), _basis=basis, _base_res=base, _fine_res=fine,
    )


def integrate(geom: Geometry, f: SpectralField) -> float:
    """Quadrature ``sum_i w_i f(x_i)`` on the base grid."""
    if f.geometry is not geom:
        raise GeometryMismatch("field belongs to a different geometry")
    return float(np.dot(geom.grid_weights, f.grid_values))


def to_coeffs(geom: Geometry, grid_values) -> np.ndarray:
    return geom.to_coeffs(grid_values)


def to_grid(geom: Geometry, coeffs) -> np.ndarray:
    return geom.to_grid(coeffs)
