"""Command-line front end.

``tlsrelax COMMAND [--config PATH] [--seed N] [--out DIR] [--workers N] [--format csv|json]``

Exit status: 0 success, 1 invalid input (or a round trip that misses a
tolerance), 2 fit non-convergence, 3 file I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis.spectrum import FitConvergenceError, OverParameterizedError, fit_spectrum
from .calibration import PhaseModel, Populations3, four_readouts, smooth_contrast, solve_phase_contrast
from .model import Environment
from .pipeline import build_dataset, point_from_record, run_sweep, spectroscopy
from .pitfalls import run_pitfalls, standard_schemes
from .recovery import recovery_report
from .reference import gamma_t_intervals
from .analysis.bath import bath_model

log = logging.getLogger("tlsrelax")

EXIT_OK, EXIT_INVALID, EXIT_NO_CONVERGENCE, EXIT_IO = 0, 1, 2, 3


def _out_dir(cfg: io.RunConfig):
    out = cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_record(record, path_stem: Path, fmt):
    if fmt == "csv":
        return list(io.record_to_csv(record, path_stem.with_suffix(".csv")))
    return [io.record_to_json(record, path_stem.with_suffix(".json"))]


def _write_spectrum(out: Path, data, fit, fmt):
    files = []
    files.append(io.dataset_to_csv(data, out / "spectrum_dataset.csv") if fmt == "csv"
                 else io.dataset_to_json(data, out / "spectrum_dataset.json"))
    files.append(io.fit_to_json(fit, out / "spectrum_fit.json"))
    files.append(io.spectrum_residuals_to_csv(fit, data, out / "spectrum_residuals.csv"))
    return files


def _write_slopes(out: Path, points):
    """Per-point slopes with the fitted bath model, for slope-versus-T plots."""
    d = out / "points"
    d.mkdir(exist_ok=True)
    files = []
    for i, p in enumerate(points):
        s = p.series
        model = np.empty(len(s.zdot0))
        for half in ("H", "L"):
            m = s.half == half
            z_init = _reset_z(p, half)
            model[m] = bath_model(p.fit, half, s.bath_time[m], z_init)
        rows = zip(s.half, s.block.tolist(), s.bath_time, s.zdot0, s.sigma, model, (s.zdot0 - model) / s.sigma)
        files.append(io.write_csv(d / f"slopes_{i:04d}_{p.omega_q_hz:.0f}hz.csv",
                                  ("half", "block", "T_s", "zdot0_per_s", "zdot0_err_per_s", "model_per_s",
                                   "pull"), rows))
    return files


def _reset_z(point, half):
    cfg = point.records[-1].config if point.records else None
    if cfg is not None:
        return cfg.reset_z_e if half == "H" else cfg.reset_z_g
    return 0.5 * point.reset_contrast if half == "H" else -0.5 * point.reset_contrast


def cmd_simulate(cfg: io.RunConfig):
    env = cfg.env()
    freqs = cfg.sweep.frequencies()
    points = run_sweep(env, freqs, cfg.fd4_config(), cfg.cd8_config(), seed=cfg.seed, workers=cfg.workers,
                       z_eq_fn=io.z_eq_function(cfg.environment), keep_records=True)
    out = _out_dir(cfg)
    files = []
    for i, p in enumerate(points):
        files += _write_record(p.records[-1], out / f"point_{i:04d}_{p.omega_q_hz:.0f}hz", cfg.format)
    io.write_manifest(out, files, {"command": "simulate", "seed": cfg.seed, "n_points": len(points)})
    log.info("wrote %d records to %s", len(points), out)
    return EXIT_OK


def _record_files(in_dir: Path):
    files = sorted(p for p in in_dir.glob("point_*") if p.suffix in (".json", ".csv")
                   and not p.name.endswith(".meta.json"))
    if not files:
        raise io.ConfigError(f"no point_* records in {in_dir}")
    return files


def cmd_analyze(cfg: io.RunConfig):
    in_dir = cfg.resolve(cfg.input_dir)
    points = [point_from_record(io.read_record(f), keep_record=True) for f in _record_files(in_dir)]
    points.sort(key=lambda p: p.omega_q_hz)
    data = build_dataset(points)
    fit = fit_spectrum(data)
    out = _out_dir(cfg)
    files = _write_spectrum(out, data, fit, cfg.format) + _write_slopes(out, points)
    io.write_manifest(out, files, {"command": "analyze", "input_dir": str(in_dir)})
    log.info("fitted %d TLS from %d points", len(fit.tls), len(points))
    return EXIT_OK


def _is_reference(entry):
    return entry == "reference" or (isinstance(entry, dict) and entry.get("reference"))


def cmd_roundtrip(cfg: io.RunConfig):
    env = cfg.env()
    result = spectroscopy(env, cfg.sweep.frequencies(), cfg.fd4_config(), cfg.cd8_config(), seed=cfg.seed,
                          workers=cfg.workers, refine=cfg.refine, z_eq_fn=io.z_eq_function(cfg.environment))
    ref = _is_reference(cfg.environment)
    report = recovery_report(result, env, gamma_t_intervals() if ref else None,
                             polarizability_target=(0.28, 0.05) if ref else None)
    out = _out_dir(cfg)
    files = _write_spectrum(out, result.dataset, result.fit, cfg.format)
    files.append(io.write_json(out / "recovery_report.json", {"kind": "recovery_report", **report}))
    files.append(io.write_csv(out / "recovery_tls.csv", list(report["tls"][0].keys()) if report["tls"] else [],
                              [list(r.values()) for r in report["tls"]]))
    io.write_manifest(out, files, {"command": "roundtrip", "seed": cfg.seed})
    for name, ok in report["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if report["passed"] else EXIT_INVALID


_PITFALL_ENV = {"gamma_q_per_s": 0.5e3, "z_eq": -0.2, "gamma_qt_per_s": 10e3, "gamma_t_per_s": 1e3,
                "p_eq": -0.1}


def _pitfall_env(entry):
    entry = {**_PITFALL_ENV, **entry}
    return Environment.from_rates(entry["gamma_q_per_s"], entry["z_eq"], [entry["gamma_qt_per_s"]],
                                  [entry["gamma_t_per_s"]], [entry["p_eq"]])


def cmd_pitfalls(cfg: io.RunConfig):
    p = dict(cfg.pitfalls)
    try:
        env = _pitfall_env(p.pop("environment", {}))
        noise = float(p.pop("readout_noise_sigma", 0.5))
        kw = {}
        for key, name in (("step_s", "step"), ("cycle_period_s", "cycle_period"),
                          ("relax_delay_s", "relax_delay")):
            if key in p:
                kw[name] = float(p.pop(key))
        for key in ("n_points", "averages", "reset_z"):
            if key in p:
                kw[key] = p.pop(key)
        if p:
            raise io.ConfigError(f"unknown pitfalls keys: {sorted(p)}")
        schemes = standard_schemes(**kw)
    except (TypeError, ValueError) as exc:
        raise io.ConfigError(f"invalid pitfalls settings: {exc}") from exc
    results = run_pitfalls(env, schemes, io.config_from_dict({"variant": "StandardT1",
                                                              "readout_noise_sigma": noise}), seed=cfg.seed)
    out = _out_dir(cfg)
    files = [io.write_csv(out / "pitfalls.csv", ("scheme", "t1_fit_s", "t1_markov_s", "relative_bias"),
                          [(r.label, r.t1_fit_s, r.t1_markov_s, r.relative_bias) for r in results])]
    for r in results:
        files.append(io.write_csv(out / f"curve_{r.scheme.reset}_{r.scheme.order}.csv", ("delay_s", "z"),
                                  zip(r.curve.delays, r.curve.z)))
    files.append(io.write_json(out / "pitfalls.json", {
        "kind": "pitfalls_report", "environment": io.env_to_dict(env),
        "schemes": [{"scheme": r.label, "t1_fit_s": r.t1_fit_s, "t1_markov_s": r.t1_markov_s,
                     "relative_bias": r.relative_bias} for r in results]}))
    io.write_manifest(out, files, {"command": "pitfalls", "seed": cfg.seed})
    for r in results:
        print(f"{r.label:28s} T1 fit {r.t1_fit_s * 1e6:8.1f} us  Markov {r.t1_markov_s * 1e6:6.1f} us  "
              f"bias {r.relative_bias:+.0%}")
    return EXIT_OK


def cmd_calibrate_demo(cfg: io.RunConfig):
    c = dict(cfg.calibration)
    rng = np.random.default_rng(cfg.seed)
    try:
        model = PhaseModel(c.get("phi_g", 0.1), c.get("phi_e", 0.9), c.get("phi_f", 1.6))
        delays = np.asarray(c.get("delays_s", [0.0, 2e-6, 5e-6, 10e-6, 15e-6, 30e-6]), dtype=float)
        pf = c.get("p_f0", 0.3) * np.exp(-delays / c.get("p_f_decay_s", 3e-6))
        pf[-1] = 0.0
        z = float(c.get("z", 0.44))
        noise = float(c.get("noise", 0.0))
        order = int(c.get("polynomial_order", 5))
    except (TypeError, ValueError) as exc:
        raise io.ConfigError(f"invalid calibration settings: {exc}") from exc
    pops = [Populations3(0.5 * (1 - z) * (1 - f), 0.5 * (1 + z) * (1 - f), f) for f in pf]
    m = np.array([four_readouts(p, model) for p in pops])
    m = m + rng.normal(0.0, noise, m.shape) if noise > 0 else m
    cal = solve_phase_contrast(m)

    # contrast-versus-frequency table smoothed by a polynomial
    freqs = cfg.sweep.frequencies()
    x = (freqs - freqs.mean()) / max(np.ptp(freqs), 1.0)
    true_contrast = model.contrast * (1 + 0.3 * x - 0.4 * x**2)
    raw = true_contrast + rng.normal(0.0, c.get("table_noise", 0.02), len(freqs))
    smooth = smooth_contrast(freqs, raw, order)

    out = _out_dir(cfg)
    files = [
        io.write_json(out / "calibration.json", {
            "kind": "phase_calibration", "true_contrast_rad": model.contrast, "contrast_rad": cal.contrast,
            "phi_g_rad": cal.model.phi_g, "phi_e_rad": cal.model.phi_e, "phi_f_rad": cal.model.phi_f,
            "residual": cal.residual}),
        io.write_csv(out / "populations.csv", ("delay_s", "p_g", "p_e", "p_f", "true_p_f"),
                     [(d, *p, f) for d, p, f in zip(delays, cal.populations, pf)]),
        io.write_csv(out / "contrast_table.csv", ("omega_q_hz", "contrast_rad", "contrast_smoothed_rad"),
                     zip(freqs, raw, smooth(freqs))),
    ]
    io.write_manifest(out, files, {"command": "calibrate-demo", "seed": cfg.seed})
    print(f"phase contrast {cal.contrast:.6f} rad (true {model.contrast:.6f})")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "roundtrip": cmd_roundtrip,
            "pitfalls": cmd_pitfalls, "calibrate-demo": cmd_calibrate_demo}


def build_parser():
    ap = argparse.ArgumentParser(prog="tlsrelax", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--input", help="record directory for analyze (overrides the config)")
    ap.add_argument("--workers", type=int, help="parallel worker processes")
    ap.add_argument("--format", choices=("csv", "json"), help="record and dataset file format")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load(args):
    d = io.read_json(args.config) if args.config is not None else {}
    base = args.config.parent if args.config is not None else Path.cwd()
    d["command"] = args.command
    for key, val in (("seed", args.seed), ("output_dir", args.out), ("input_dir", args.input),
                     ("workers", args.workers), ("format", args.format)):
        if val is not None:
            d[key] = val
    return io.RunConfig.from_dict(d, base)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load(args)
        return COMMANDS[cfg.command](cfg)
    except FitConvergenceError as exc:
        log.error("fit did not converge: %s", exc)
        return EXIT_NO_CONVERGENCE
    except (io.ConfigError, OverParameterizedError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
