"""Naive T1 from four conventional scan schemes with one long-lived TLS.

Usage: python scripts/pitfalls_demo.py [--averages N] [--noise SIGMA] [--seed N]
"""

import argparse

from tlsrelax.model import Environment
from tlsrelax.pitfalls import markov_t1, run_pitfalls, standard_schemes
from tlsrelax.sequences import ProtocolConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--averages", type=int, default=1000)
    ap.add_argument("--noise", type=float, default=0.5, help="readout noise per shot")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    env = Environment.from_rates(0.5e3, -0.2, [10e3], [1e3], [-0.1])
    print(f"Markovian T1 = 1/(gamma_q + gamma_qt) = {markov_t1(env) * 1e6:.1f} us")
    results = run_pitfalls(env, standard_schemes(averages=args.averages),
                           ProtocolConfig.standard_t1(readout_noise_sigma=args.noise), seed=args.seed)
    for r in results:
        print(f"{r.label:26s} T1 = {r.t1_fit_s * 1e6:7.1f} us  ({r.relative_bias:+.0%})")


if __name__ == "__main__":
    main()
