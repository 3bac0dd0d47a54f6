"""INI run configuration.

Sections and keys (``;`` or ``#`` start comments)::

    [geometry]   kind = torus|sphere, n, gamma, truncation, period (torus, default 2 pi)
    [initial]    type = constant|cosine|harmonic|bubble|file
                 constant: value            cosine: base, amplitude, wavevector (e.g. 1 or 1,0)
                 harmonic: base, amplitude, degree (unit-normalized zonal harmonic)
                 bubble: eps, center, amp   file: path (one coefficient per line)
    [integrator] dt0, t_end, tol, tol_conv, dt_max
    [output]     stride, csv, summary, spectrum, count, u_inf (coefficient file)
    [sweep]      gammas = comma list
    [run]        seed

Everything except ``geometry.kind/n/gamma/truncation`` has a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ResolutionError
from .geometry import MIN_TRUNCATION, SPHERE, TORUS, Geometry, SpectralField, make_sphere, make_torus

INITIAL_TYPES = ("constant", "cosine", "harmonic", "bubble", "file")


@dataclass
class RunConfig:
    kind: str
    n: int
    gamma: float
    truncation: int
    period: float = 2 * np.pi
    initial: dict = field(default_factory=lambda: {"type": "constant", "value": "1.0"})
    dt0: float = 1e-3
    t_end: float = 1.0
    tol: float = 1e-6
    tol_conv: float = 1e-8
    dt_max: float = np.inf
    stride: int = 1
    csv: str = "diagnostics.csv"
    summary: str = "summary.txt"
    spectrum: str = "spectrum.csv"
    count: int = 10
    u_inf: str | None = None
    gammas: tuple[float, ...] = ()
    seed: int = 0
    base_dir: Path = Path(".")

    def geometry(self, gamma: float | None = None) -> Geometry:
        g = self.gamma if gamma is None else gamma
        if self.kind == TORUS:
            return make_torus(self.n, self.period, self.truncation, g)
        return make_sphere(self.n, self.truncation, g)


def _get(cp, section, key, conv, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"missing key '{key}' in [{section}]", key=key)
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}' in [{section}]: {raw!r}", key=key) from exc


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    if not cp.has_section("geometry"):
        raise ConfigError("missing section [geometry]", key="geometry")
    kind = _get(cp, "geometry", "kind", str.strip, required=True)
    if kind not in (TORUS, SPHERE):
        raise ConfigError(f"kind must be torus or sphere, got {kind!r}", key="kind")
    cfg = RunConfig(
        kind=kind,
        n=_get(cp, "geometry", "n", int, required=True),
        gamma=_get(cp, "geometry", "gamma", float, required=True),
        truncation=_get(cp, "geometry", "truncation", int, required=True),
        base_dir=Path(base_dir),
    )
    cfg.period = _get(cp, "geometry", "period", float, cfg.period)
    if cfg.n not in (1, 2):
        raise ConfigError(f"n must be 1 or 2, got {cfg.n}", key="n")
    if not (0 < cfg.gamma < 1 and cfg.n > 2 * cfg.gamma):
        raise ConfigError(f"need 0 < gamma < 1 and n > 2 gamma, got gamma={cfg.gamma}", key="gamma")
    if cfg.truncation < MIN_TRUNCATION:
        raise ConfigError(f"truncation must be >= {MIN_TRUNCATION}", key="truncation")
    if cp.has_section("initial"):
        cfg.initial = dict(cp.items("initial"))
        if cfg.initial.get("type", "constant") not in INITIAL_TYPES:
            raise ConfigError(f"initial type must be one of {INITIAL_TYPES}", key="type")
    for key in ("dt0", "t_end", "tol", "tol_conv", "dt_max"):
        setattr(cfg, key, _get(cp, "integrator", key, float, getattr(cfg, key)))
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"'{key}' must be positive", key=key)
    for key, conv in (("stride", int), ("csv", str), ("summary", str), ("spectrum", str),
                      ("count", int), ("u_inf", str)):
        setattr(cfg, key, _get(cp, "output", key, conv, getattr(cfg, key)))
    if cfg.stride < 1:
        raise ConfigError("'stride' must be >= 1", key="stride")
    cfg.gammas = _get(cp, "sweep", "gammas",
                      lambda s: tuple(float(x) for x in s.split(",") if x.strip()), ())
    cfg.seed = _get(cp, "run", "seed", int, 0)
    return cfg


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def read_coefficients(path: Path | str) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, comments="#", delimiter=",", dtype=float))


def _floats(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split(",")])


def initial_field(cfg: RunConfig, geom: Geometry) -> SpectralField:
    init = cfg.initial
    kind = init.get("type", "constant")
    try:
        if kind == "constant":
            return geom.constant(float(init.get("value", 1.0)))
        if kind == "cosine":
            base, amp = float(init.get("base", 1.0)), float(init.get("amplitude", 0.1))
            k = _floats(init.get("wavevector", "1"))
            if k.size != geom.n:
                raise ConfigError(f"wavevector needs {geom.n} entries", key="wavevector")
            scale = 2 * np.pi / geom.period if geom.kind == TORUS else 1.0
            if geom.kind == SPHERE and geom.n == 2:
                raise ConfigError("cosine data is for S^1 and tori; use type=harmonic on S^2",
                                  key="type")
            return geom.from_function(lambda x: base + amp * np.cos(scale * x @ k))
        if kind == "harmonic":
            base, amp = float(init.get("base", 1.0)), float(init.get("amplitude", 0.05))
            deg = int(init.get("degree", 1))
            mode = (deg, 0) if geom.kind == SPHERE and geom.n == 2 else deg
            return geom.constant(base) + amp * geom.basis_field(geom.mode_index(mode))
        if kind == "bubble":
            from .bubbles import BubbleParams, bubble_field
            default_center = ",".join(["0"] * geom.n + (["1"] if geom.kind == SPHERE else []))
            params = BubbleParams(_floats(init.get("center", default_center)),
                                  float(init.get("eps", 0.25)), float(init.get("amp", 1.0)))
            return bubble_field(geom, params)
        path = Path(init["path"])
        coeffs = read_coefficients(path if path.is_absolute() else cfg.base_dir / path)
        return geom.field(coeffs)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc} in [initial]", key=str(exc).strip("'")) from exc
    except (DimensionError, ResolutionError) as exc:
        raise ConfigError(str(exc)) from exc
