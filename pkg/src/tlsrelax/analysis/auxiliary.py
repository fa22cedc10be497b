"""Small estimators used next to the main pipeline.

Shared-rate double exponentials for bath-prepared T1 curves, a naive
single-exponential T1, a dipole estimate from the coupling strength, and a
fallback for the on-time averaged qubit polarization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import least_squares

from .slopes import fit_exponential

ANGSTROM = 1e-10
DEBYE = 1e-21 / constants.c     # C m


@dataclass
class DoubleExponentialFit:
    """Curves ``c + a_fast exp(-rate_fast t) + a_slow exp(-rate_slow t)``.

    ``amplitudes`` has one row ``(a_fast, a_slow)`` per curve and
    ``amplitude_err`` their standard errors; ``offset`` is shared by all
    curves unless fitted per curve.
    """

    rate_fast: float
    rate_slow: float
    rate_fast_err: float
    rate_slow_err: float
    amplitudes: np.ndarray
    amplitude_err: np.ndarray
    offset: np.ndarray
    chi2: float
    dof: int


def _basis(t, rates):
    return np.exp(-np.outer(t, rates))


def fit_double_exponential(curves, shared_offset=True, rate_guess=None):
    """Fit several decay curves with two common rates.

    Parameters
    ----------
    curves : sequence of DecayCurve
        Typically the four (bath, qubit) preparations of a bath-prepared T1
        scan.  Each curve's ``sigma`` (if positive) weights its points.
    shared_offset : bool
        One asymptote for all curves (they relax to the same equilibrium).
    rate_guess : (float, float), optional
        Starting fast and slow rates in s^-1.

    The amplitudes and offsets enter linearly and are projected out; only
    the two log-rates are searched.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves")
    ts = [np.asarray(c.delays, dtype=float) for c in curves]
    zs = [np.asarray(c.z, dtype=float) for c in curves]
    ws = [np.full(len(t), 1.0 / c.sigma if c.sigma > 0 else 1.0) for t, c in zip(ts, curves)]
    n = len(curves)
    n_lin = (1 if shared_offset else n) + 2 * n
    n_pts = sum(len(t) for t in ts)
    if n_pts <= n_lin + 2:
        raise ValueError("too few points for a double-exponential fit")

    def design(rates):
        rows = []
        for j, t in enumerate(ts):
            block = np.zeros((len(t), n_lin))
            block[:, 0 if shared_offset else j] = 1.0
            base = 1 if shared_offset else n
            block[:, base + 2 * j: base + 2 * j + 2] = _basis(t, rates)
            rows.append(block)
        return np.vstack(rows)

    z_cat = np.concatenate(zs)
    w_cat = np.concatenate(ws)

    def project(log_rates):
        a = design(np.exp(log_rates)) * w_cat[:, None]
        coef, *_ = np.linalg.lstsq(a, z_cat * w_cat, rcond=None)
        return coef, a @ coef - z_cat * w_cat

    span = max(float(t.max()) for t in ts)
    if rate_guess is None:
        starts = [(30.0 / span, 1.0 / span), (100.0 / span, 3.0 / span), (10.0 / span, 0.3 / span)]
    else:
        starts = [tuple(rate_guess)]
    best = None
    for start in starts:
        res = least_squares(lambda x: project(x)[1], np.log(start), method="lm", xtol=1e-12, ftol=1e-12)
        if best is None or res.cost < best.cost:
            best = res
    log_rates = best.x
    if log_rates[0] < log_rates[1]:
        log_rates = log_rates[::-1]
    rates = np.exp(log_rates)
    coef, r = project(log_rates)
    chi2 = float(r @ r)
    dof = n_pts - n_lin - 2

    # covariance of all parameters from the full Jacobian
    a = design(rates) * w_cat[:, None]
    t_cat = np.concatenate(ts)
    base = 1 if shared_offset else n
    amp = coef[base:].reshape(n, 2)
    rows = np.repeat(np.arange(n), [len(t) for t in ts])
    d_rates = -t_cat[:, None] * amp[rows] * _basis(t_cat, rates) * w_cat[:, None]
    jac = np.hstack([a, d_rates])
    cov = np.linalg.pinv(jac.T @ jac)
    if np.all(w_cat == 1.0) and dof > 0:
        cov *= chi2 / dof
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return DoubleExponentialFit(
        rate_fast=float(rates[0]), rate_slow=float(rates[1]),
        rate_fast_err=float(err[-2]), rate_slow_err=float(err[-1]),
        amplitudes=amp, amplitude_err=err[base:n_lin].reshape(n, 2),
        offset=coef[:base], chi2=chi2, dof=dof)


def naive_t1(delays, z, sigma=None):
    """T1 from a plain single-exponential fit, as a standard scan would report it.

    Returns ``(t1_s, rate_per_s)``.
    """
    fit = fit_exponential(delays, z, sigma)
    return 1.0 / fit.rate, fit.rate


def estimate_dipole(g_hz, field_v_per_m):
    """Effective dipole ``p cos(theta) = 2 hbar (2 pi g) / E0``.

    Returns ``(dipole_e_angstrom, dipole_debye)``.
    """
    if not field_v_per_m > 0:
        raise ValueError("field must be > 0")
    p = 2.0 * constants.hbar * 2.0 * np.pi * np.asarray(g_hz, dtype=float) / field_v_per_m
    return p / (constants.e * ANGSTROM), p / DEBYE


def estimate_zbar(z_init, delays, gamma_sigma, z_eq=0.0):
    """On-time averaged qubit polarization for data without recorded trajectories.

    Assumes every delay starts at ``z_init`` and relaxes towards ``z_eq``
    at ``gamma_sigma`` (s^-1); the average weights each delay by its
    length.  This ignores the bath's pull on the qubit, so it is an
    approximation.
    """
    d = np.asarray(delays, dtype=float)
    if np.any(d < 0) or d.sum() <= 0:
        raise ValueError("delays must be non-negative with a positive total")
    if gamma_sigma < 0:
        raise ValueError("gamma_sigma must be >= 0")
    x = gamma_sigma * d
    frac = np.where(x > 1e-12, -np.expm1(-x) / np.where(x > 1e-12, x, 1.0), 1.0 - 0.5 * x)
    integral = d * (z_eq + (z_init - z_eq) * frac)
    return float(integral.sum() / d.sum())
