"""Naive T1 fits to conventional scans with a hidden long-lived TLS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis.auxiliary import naive_t1
from .model import Environment
from .sequences import DecayCurve, ProtocolConfig, StandardT1Scheme, run_standard_t1

US = 1e-6


def standard_schemes(step=10 * US, n_points=50, averages=1000, cycle_period=0.5e-3, relax_delay=10 * US,
                     reset_z=0.5):
    """The clock-cycle and active-reset scans, each in rounds and in repetitions."""
    return [StandardT1Scheme(reset=r, order=o, step=step, n_points=n_points, averages=averages,
                             cycle_period=cycle_period, relax_delay=relax_delay, reset_z=reset_z)
            for r in ("clock_cycle", "active_reset") for o in ("rounds", "repetitions")]


@dataclass
class PitfallResult:
    scheme: StandardT1Scheme
    curve: DecayCurve
    t1_fit_s: float
    t1_markov_s: float

    @property
    def label(self):
        return f"{self.scheme.reset}/{self.scheme.order}"

    @property
    def relative_bias(self):
        return self.t1_fit_s / self.t1_markov_s - 1.0


def markov_t1(env: Environment):
    """T1 a Markovian reading would assign: ``1 / (gamma_q + sum gamma_qt)``."""
    return 1.0 / (env.qubit.gamma_q + env.exchange_rates().sum())


def run_pitfalls(env: Environment, schemes=None, config: ProtocolConfig | None = None, seed=None):
    """Simulate each scheme and fit it with a single exponential.

    Every scheme draws from its own child of ``seed``.
    """
    schemes = standard_schemes() if schemes is None else list(schemes)
    config = ProtocolConfig.standard_t1(readout_noise_sigma=0.5) if config is None else config
    seeds = np.random.SeedSequence(seed).spawn(len(schemes))
    out = []
    for scheme, s in zip(schemes, seeds):
        curve = run_standard_t1(config, env, scheme, seed=np.random.default_rng(s))
        t1, _ = naive_t1(curve.delays, curve.z, curve.sigma if curve.sigma > 0 else None)
        out.append(PitfallResult(scheme, curve, t1, markov_t1(env)))
    return out
