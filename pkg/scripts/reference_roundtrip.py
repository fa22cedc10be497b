"""Simulate the ten-TLS reference sweep, fit it, and print truth against fit.

Usage: python scripts/reference_roundtrip.py [--seed N] [--workers N] [--out report.json]
"""

import argparse
import json
import time

from tlsrelax.io import write_json
from tlsrelax.model import thermal_polarization
from tlsrelax.pipeline import spectroscopy
from tlsrelax.recovery import recovery_report
from tlsrelax.reference import EFFECTIVE_TEMPERATURE_K, gamma_t_intervals, reference_environment, sweep_frequencies
from tlsrelax.sequences import ProtocolConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    env = reference_environment()
    start = time.perf_counter()
    result = spectroscopy(env, sweep_frequencies(), ProtocolConfig.fd4(cycles=2500, readout_noise_sigma=0.5),
                          ProtocolConfig.cd8(cycles=20000, readout_noise_sigma=0.5), seed=args.seed,
                          workers=args.workers, z_eq_fn=lambda f: thermal_polarization(f, EFFECTIVE_TEMPERATURE_K))
    rep = recovery_report(result, env, gamma_t_intervals(), polarizability_target=(0.28, 0.05))
    print(f"{len(result.points)} points ({sum(p.protocol == 'CD8' for p in result.points)} CD-8), "
          f"{len(result.fit.tls)} lines, {time.perf_counter() - start:.0f} s")
    print(" truth MHz   fit MHz   g ratio   gamma_t fit (s^-1)      gamma_t truth (s^-1)")
    for r in rep["tls"]:
        print(f"{r['truth_freq_hz'] / 1e6:9.1f} {r['fit_freq_hz'] / 1e6:9.2f} {r['fit_g_hz'] / r['truth_g_hz']:9.3f}"
              f"   [{r['fit_gamma_t_low_per_s']:8.3g}, {r['fit_gamma_t_high_per_s']:8.3g}]"
              f"   [{r['truth_gamma_t_low_per_s']:8.3g}, {r['truth_gamma_t_high_per_s']:8.3g}]")
    print(f"origin slope {rep['origin_slope']:.3f} +/- {rep['origin_slope_err']:.3f}, "
          f"mean polarizability {rep['mean_polarizability']:.3f}")
    for name, ok in rep["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if args.out:
        write_json(args.out, rep)


if __name__ == "__main__":
    main()
