"""Compare a fitted spectrum with the environment that generated it."""

from __future__ import annotations

import numpy as np

from .analysis.spectrum import mean_polarizability
from .model import Environment
from .pipeline import STRONG_COUPLING_RATE, SweepResult, origin_slope

LIFETIME_FLOOR_RATE = 1.0e4      # s^-1, i.e. lifetimes above 100 us


def _overlaps(interval, truth):
    return interval[0] <= truth[1] and interval[1] >= truth[0]


def recovery_report(result: SweepResult, env: Environment, gamma_t_intervals=None, freq_tol_hz=0.5e6,
                    g_rel_tol=0.15, slope_target=(1.0, 0.05), polarizability_target=None):
    """Truth-versus-fit table plus pass/fail checks.

    Every true TLS is matched to the nearest fitted line.  Decay-rate checks
    use ``gamma_t_intervals`` (s^-1, one ``(low, high)`` per TLS) when
    given, else the true point value.  ``polarizability_target`` is
    ``(mean, tolerance)`` or None to skip that check.
    """
    fit = result.fit
    rows = []
    for k, t in enumerate(env.tls):
        if not fit.tls:
            rows.append({"truth_freq_hz": t.freq_hz, "matched": False})
            continue
        best = min(fit.tls, key=lambda c: abs(c.freq_hz - t.freq_hz))
        truth_iv = (tuple(gamma_t_intervals[k]) if gamma_t_intervals is not None else (t.gamma_t, t.gamma_t))
        peak_rate = 2 * (2 * np.pi * t.g_hz) ** 2 / (2 * np.pi * t.gamma2_hz)
        strong = peak_rate >= STRONG_COUPLING_RATE
        rows.append({
            "truth_freq_hz": t.freq_hz, "truth_g_hz": t.g_hz, "truth_gamma2_hz": t.gamma2_hz,
            "truth_gamma_t_low_per_s": truth_iv[0], "truth_gamma_t_high_per_s": truth_iv[1],
            "fit_freq_hz": best.freq_hz, "fit_freq_err_hz": best.freq_err, "fit_g_hz": best.g_hz,
            "fit_g_err_hz": best.g_err, "fit_gamma2_hz": best.gamma2_hz, "fit_gamma2_err_hz": best.gamma2_err,
            "fit_gamma_t_low_per_s": best.gamma_t_interval[0], "fit_gamma_t_high_per_s": best.gamma_t_interval[1],
            "pull_freq": (best.freq_hz - t.freq_hz) / best.freq_err if best.freq_err > 0 else np.nan,
            "pull_g": (best.g_hz - t.g_hz) / best.g_err if best.g_err > 0 else np.nan,
            "pull_gamma2": (best.gamma2_hz - t.gamma2_hz) / best.gamma2_err if best.gamma2_err > 0 else np.nan,
            "freq_ok": bool(abs(best.freq_hz - t.freq_hz) <= freq_tol_hz),
            "g_ok": bool(abs(best.g_hz / t.g_hz - 1) <= g_rel_tol) if t.g_hz > 0 else True,
            "gamma_t_ok": bool(_overlaps(best.gamma_t_interval, truth_iv)),
            "strongly_coupled": bool(strong),
            "lifetime_floor_ok": bool(best.gamma_t_interval[1] < LIFETIME_FLOOR_RATE) if strong else True,
            "matched": True,
        })

    x = np.array([p.fit_free.gamma_sigma_h for p in result.points])
    y = np.array([p.fit_free.gamma_sigma_l for p in result.points])
    sx = np.array([p.fit_free.sigma["gamma_sigma_h"] for p in result.points])
    sy = np.array([p.fit_free.sigma["gamma_sigma_l"] for p in result.points])
    slope, slope_err = origin_slope(x, y, sx, sy)
    mean_pol = mean_polarizability(fit, result.dataset)

    checks = {
        "frequencies": all(r.get("freq_ok", False) for r in rows),
        "couplings": all(r.get("g_ok", False) for r in rows),
        "gamma_t_intervals": all(r.get("gamma_t_ok", False) for r in rows),
        "lifetime_floor": all(r.get("lifetime_floor_ok", False) for r in rows),
        "sigma_state_independence": bool(abs(slope - slope_target[0]) <= slope_target[1]),
    }
    if polarizability_target is not None:
        checks["mean_polarizability"] = bool(abs(mean_pol - polarizability_target[0]) <= polarizability_target[1])
    return {
        "tls": rows,
        "n_fitted_tls": len(fit.tls),
        "origin_slope": slope,
        "origin_slope_err": slope_err,
        "mean_polarizability": mean_pol,
        "gamma_q_per_s": fit.gamma_q,
        "gamma_q_err_per_s": fit.gamma_q_err,
        "truth_gamma_q_per_s": env.qubit.gamma_q,
        "checks": checks,
        "passed": all(checks.values()),
    }
