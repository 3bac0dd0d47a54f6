"""Command line entry point: ``fracyamabe {flow,spectrum,verify,bubble,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bubbles, fraclap, stability, verify
from .config import RunConfig, initial_field, load_config, read_coefficients
from .errors import BlowupError, ConfigError, FracYamabeError, StepFailure
from .flow import COLUMNS, DiagnosticsSeries, run
from .functionals import energy_E
from .geometry import SPHERE, Geometry

log = logging.getLogger("fracyamabe")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_CHECKS = 1


def fmt(x: float) -> str:
    """CSV number format: 17 significant digits, exact round trip."""
    return "%.17g" % x


def _show(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def header_comment(cfg: RunConfig, gamma: float | None = None) -> str:
    g = cfg.gamma if gamma is None else gamma
    return (f"# seed={cfg.seed} kind={cfg.kind} n={cfg.n} gamma={_show(g)} "
            f"truncation={cfg.truncation}")


def write_series_csv(path: Path, series: DiagnosticsSeries, comment: str, stride: int = 1) -> None:
    idx = list(range(0, len(series), stride))
    if idx and idx[-1] != len(series) - 1:
        idx.append(len(series) - 1)
    lines = [comment, ",".join(COLUMNS)]
    lines += [",".join(fmt(v) for v in series.rows[i]) for i in idx]
    path.write_bytes(("\n".join(lines) + "\n").encode())


def read_series_csv(path: Path, n: int, gamma: float, kind: str) -> DiagnosticsSeries:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    names = lines[0].split(",")
    if tuple(names) != COLUMNS:
        raise ValueError(f"unexpected header {names}")
    rows = [tuple(float(v) for v in ln.split(",")) for ln in lines[1:]]
    return DiagnosticsSeries(n=n, gamma=gamma, kind=kind, rows=rows)


def write_summary(path: Path, items: dict) -> None:
    text = "".join(f"{k}: {_show(v)}\n" for k, v in items.items())
    path.write_bytes(text.encode())


def yamabe_reference(geom: Geometry, const: bubbles.ModelConstants) -> float:
    """Yamabe constant of the model: the sphere's own value, or 0 on the flat torus."""
    return const.Y_sphere if geom.kind == SPHERE else 0.0


def _flow_once(cfg: RunConfig, out: Path, gamma: float, csv_name: str, summary_name: str,
               quiet: bool) -> int:
    geom = cfg.geometry(gamma)
    u0 = initial_field(cfg, geom)
    const = bubbles.model_constants(geom.n, geom.gamma)
    E0 = energy_E(geom, u0)
    s0_threshold = bubbles.threshold_s0(yamabe_reference(geom, const), const)
    comment = header_comment(cfg, gamma)
    status, code, series, err = "failed", EXIT_RUN, None, ""
    try:
        series = run(geom, u0, cfg.t_end, cfg.dt0, cfg.tol, dt_max=cfg.dt_max, tol_conv=cfg.tol_conv)
        status, code = series.status, EXIT_OK
    except (StepFailure, BlowupError) as exc:
        series, err = exc.series, str(exc)
        log.error("run failed: %s", exc)
    if series is None:
        return code
    write_series_csv(out / csv_name, series, comment, cfg.stride)
    last = series.rows[-1]
    summary = {
        "seed": cfg.seed, "kind": cfg.kind, "n": cfg.n, "gamma": float(gamma),
        "status": status, "t_final": float(last[0]), "steps": len(series) - 1,
        "rejected": series.meta.get("rejected", 0),
        "s": float(last[1]), "E": float(last[2]), "vol": float(last[3]),
        "sup_dev": float(series.extras["sup_dev"][-1]),
        "E0": float(E0), "s0_threshold": float(s0_threshold),
        "below_threshold": bool(E0 <= s0_threshold),
    }
    if series.final_u is not None and code == EXIT_OK:
        try:
            conc = bubbles.detect_concentration(geom, series.final_u, const, series)
            summary["L_est"] = float(conc.L_est)
        except FracYamabeError as exc:
            summary["L_est"] = f"unavailable ({exc})"
    if err:
        summary["error"] = err
    write_summary(out / summary_name, summary)
    if not quiet:
        sys.stdout.write("".join(f"{k}: {_show(v)}\n" for k, v in summary.items()))
    return code


def cmd_flow(cfg: RunConfig, out: Path, quiet: bool) -> int:
    return _flow_once(cfg, out, cfg.gamma, cfg.csv, cfg.summary, quiet)


def cmd_sweep(cfg: RunConfig, out: Path, quiet: bool) -> int:
    gammas = cfg.gammas or (cfg.gamma,)
    code = EXIT_OK
    for g in gammas:
        stem = f"gamma_{g:g}"
        code = max(code, _flow_once(cfg, out, g, f"{stem}_{cfg.csv}", f"{stem}_{cfg.summary}", quiet))
    return code


def cmd_spectrum(cfg: RunConfig, out: Path, quiet: bool) -> int:
    geom = cfg.geometry()
    lam = fraclap.multiplier_table(geom).values
    degrees = geom.degrees
    order = np.unique(np.round(degrees, 12))
    lines = [header_comment(cfg), "multiplier,degree,multiplicity"]
    for d in order:
        sel = np.isclose(degrees, d)
        lines.append(f"{fmt(lam[sel][0])},{fmt(d)},{int(sel.sum())}")
    (out / cfg.spectrum).write_bytes(("\n".join(lines) + "\n").encode())
    if cfg.u_inf:
        path = Path(cfg.u_inf)
        u_inf = geom.field(read_coefficients(path if path.is_absolute() else cfg.base_dir / path))
        pairs = stability.weighted_eigs(geom, u_inf, min(cfg.count, geom.size))
        rows = [header_comment(cfg), "index,lambda"]
        rows += [f"{a},{fmt(p.lambda_a)}" for a, p in enumerate(pairs)]
        (out / ("weighted_" + cfg.spectrum)).write_bytes(("\n".join(rows) + "\n").encode())
    if not quiet:
        sys.stdout.write("\n".join(lines[2:8]) + "\n")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, quiet: bool) -> int:
    results = verify.run_battery(cfg.geometry(), cfg.seed)
    text = "".join(r.line() + "\n" for r in results)
    (out / "verify.txt").write_bytes(text.encode())
    if not quiet:
        sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS


def cmd_bubble(cfg: RunConfig, out: Path, quiet: bool) -> int:
    geom = cfg.geometry()
    u = initial_field(cfg, geom)
    const = bubbles.model_constants(geom.n, geom.gamma)
    rep = bubbles.detect_concentration(geom, u, const)
    summary = {
        "seed": cfg.seed, "L_est": float(rep.L_est),
        "near_integer": rep.near_integer,
        "eps_est": "none" if rep.eps_est is None else float(rep.eps_est),
        "center_est": "none" if rep.center_est is None else " ".join(_show(c) for c in rep.center_est),
        "alpha_bar": const.alpha_bar, "Y_sphere": const.Y_sphere,
        "volbar": bubbles.volbar(const),
    }
    write_summary(out / cfg.summary, summary)
    if not quiet:
        sys.stdout.write("".join(f"{k}: {_show(v)}\n" for k, v in summary.items()))
    return EXIT_OK


COMMANDS = {"flow": cmd_flow, "spectrum": cmd_spectrum, "verify": cmd_verify,
            "bubble": cmd_bubble, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracyamabe",
                                     description="Fractional Yamabe flow spectral lab")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="INI run configuration")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--quiet", action="store_true", help="no summary on stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        sys.stderr.write(f"config error [{exc.key}]: {exc}\n")
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args.out, args.quiet)
    except ConfigError as exc:
        sys.stderr.write(f"config error [{exc.key}]: {exc}\n")
        return EXIT_CONFIG
    except FracYamabeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
