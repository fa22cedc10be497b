"""Exponential bath-relaxation model for initial slopes versus bath time."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import chi2 as chi2_dist

from .slopes import SlopeSeries

PARAM_NAMES = ("gamma_sigma_h", "gamma_sigma_l", "gamma_delta_h", "gamma_delta_l")


@dataclass
class BathRelaxationFit:
    """Bath-state dependent qubit rates (s^-1) and the bath relaxation time.

    ``gamma_sigma_static`` is the single Gamma_Sigma of a fit that ignores
    the bath dynamics; it equals Gamma_Sigma minus the half-averaged
    Gamma_deltadelta swing divided by ``z_e - z_g``.

    ``tau_e`` is ``nan`` when the slopes show no resolvable bath dynamics;
    the rates are then evaluated at ``tau_nominal``.  Because the split of
    the H/L slope difference between the two rates then depends on the
    unknown ``tau_e``, ``deltadelta_spread`` holds the half-width of the
    range of ``gamma_deltadelta`` (plus its error) over every ``tau_e``
    the data allow, and it bounds ``gamma_deltadelta_sigma`` from below.
    """

    gamma_sigma_h: float
    gamma_sigma_l: float
    gamma_delta_h: float
    gamma_delta_l: float
    tau_e: float
    sigma: dict
    cov: np.ndarray
    constrained: bool
    degenerate: bool = False
    delta_p: float = 0.0
    chi2: float = np.nan
    dof: int = 0
    tau_nominal: float = np.nan
    deltadelta_spread: float = 0.0
    gamma_sigma_static: float = np.nan
    gamma_sigma_static_sigma: float = np.nan
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def gamma_deltadelta(self):
        return self.gamma_delta_l - self.gamma_delta_h

    @property
    def gamma_deltadelta_sigma(self):
        # rates are stored in PARAM_NAMES order in the covariance
        c = self.cov
        base = float(np.sqrt(max(c[3, 3] + c[2, 2] - 2 * c[2, 3], 0.0)))
        return max(base, self.deltadelta_spread)

    @property
    def gamma_sigma(self):
        """Bath-averaged Gamma_Sigma (the common value when constrained)."""
        return 0.5 * (self.gamma_sigma_h + self.gamma_sigma_l)

    @property
    def gamma_sigma_sigma(self):
        c = self.cov
        return float(0.5 * np.sqrt(max(c[0, 0] + c[1, 1] + 2 * c[0, 1], 0.0)))


def _design(series: SlopeSeries, z_e, z_g, tau, constrain, drift):
    """Columns of the model that is linear in the rates at fixed ``tau``.

    Also returns d(column)/d(tau) for the Jacobian.
    """
    T = series.bath_time
    f = np.exp(-T / tau)
    df = f * T / tau**2
    h = series.half == "H"
    z0 = np.where(h, z_e, z_g)
    # H half starts from the L state and relaxes to H; the L half mirrors it
    w_h = np.where(h, 1 - f, f)      # weight of the H-state value
    w_l = np.where(h, f, 1 - f)
    dw_h = np.where(h, -df, df)
    dw_l = -dw_h
    cols = [-z0 * w_h, -z0 * w_l, -w_h, -w_l]
    dcols = [-z0 * dw_h, -z0 * dw_l, -dw_h, -dw_l]
    if constrain:
        cols = [cols[0] + cols[1]] + cols[2:]
        dcols = [dcols[0] + dcols[1]] + dcols[2:]
    if drift:
        cols.append(-f)
        dcols.append(-df)
    return np.column_stack(cols), np.column_stack(dcols)


def _white(series: SlopeSeries, a):
    """Weight rows of ``a`` by the slope standard errors."""
    w = 1.0 / series.sigma
    return a * (w[:, None] if np.ndim(a) == 2 else w)


def _param_cov(series: SlopeSeries, jac_w):
    """Parameter covariance of the weighted fit with Jacobian ``jac_w``.

    With a full slope covariance the weighted estimator's covariance is
    the sandwich form, so correlated slope errors are propagated even
    though the weights ignore them.
    """
    bread = np.linalg.pinv(jac_w.T @ jac_w)
    if series.cov is None:
        return bread
    w = 1.0 / series.sigma
    meat = jac_w.T @ (w[:, None] * series.cov * w[None, :]) @ jac_w
    return bread @ meat @ bread


def _solve(series, z_e, z_g, tau, constrain, drift):
    a, da = _design(series, z_e, z_g, tau, constrain, drift)
    coef, *_ = np.linalg.lstsq(_white(series, a), _white(series, series.zdot0), rcond=None)
    r = _white(series, series.zdot0 - a @ coef)
    return coef, float(r @ r), a, da


def _jacobian(series, z_e, z_g, tau, constrain, drift, with_tau=True):
    """Weighted Jacobian in (linear params, log tau) at the best linear fit."""
    coef, _, a, da = _solve(series, z_e, z_g, tau, constrain, drift)
    jac = _white(series, a)
    if with_tau:
        jac = np.column_stack([jac, _white(series, (da @ coef) * tau)])
    return jac


def _expand(coef, cov, constrain, drift):
    """Map fitted parameters to (sigma_h, sigma_l, delta_h, delta_l[, q]) with covariance."""
    n = len(coef)
    if constrain:
        jac = np.zeros((4 + drift, n))
        jac[0, 0] = jac[1, 0] = 1.0
        jac[2, 1] = 1.0
        jac[3, 2] = 1.0
        if drift:
            jac[4, 3] = 1.0
    else:
        jac = np.eye(4 + drift, n)
    return jac @ coef, jac @ cov @ jac.T


def _deltadelta_spread(series, z_e, z_g, grid, chi2_grid, constrain, drift):
    """Half-width of the gamma_deltadelta envelope over acceptable tau."""
    n_par = (3 if constrain else 4) + drift
    dof = max(len(series.bath_time) - n_par, 1)
    cut = chi2_grid.min() + max(1.0, chi2_grid.min() / dof)
    lows, highs = [], []
    for log_tau in grid[chi2_grid <= cut]:
        tau = float(np.exp(log_tau))
        coef, _, a, _ = _solve(series, z_e, z_g, tau, constrain, drift)
        cov = _param_cov(series, _jacobian(series, z_e, z_g, tau, constrain, drift, with_tau=False))
        rates, c = _expand(coef, cov, constrain, drift)
        dd = rates[3] - rates[2]
        s = np.sqrt(max(c[3, 3] + c[2, 2] - 2 * c[2, 3], 0.0))
        lows.append(dd - s)
        highs.append(dd + s)
    return 0.5 * float(max(highs) - min(lows))


def fit_bath_relaxation(series: SlopeSeries, z_e, z_g, constrain_sigma=False, drift=False,
                        tau_bounds=None, significance=0.01):
    """Joint fit of both halves' initial slopes to the exponential bath model.

    In the H half, ``zdot0(T) = -z_e * GS(T) - GD(T)`` with every rate moving
    from its L-state value to its H-state value as ``exp(-T / tau_e)``; the L
    half mirrors this with ``z_g``.

    Parameters
    ----------
    constrain_sigma : bool
        Force ``gamma_sigma_h == gamma_sigma_l``.
    drift : bool
        Add a reset-polarization drift ``-delta_p * GS * exp(-T / tau_e)``
        common to both halves (implies ``constrain_sigma``).
    tau_bounds : (float, float), optional
        Search range for ``tau_e``; defaults to a tenth of the block spacing
        up to ten times the covered bath time.
    significance : float
        Bath dynamics are declared unresolved when the exponential model
        improves chi-square over a static bath by less than the
        ``1 - significance`` quantile of chi-square with 3 degrees of freedom.
    """
    if abs(z_e) > 1 or abs(z_g) > 1 or z_e == z_g:
        raise ValueError("need distinct reset polarizations in [-1, 1]")
    for h in ("H", "L"):
        if np.count_nonzero(series.half == h) < 3:
            raise ValueError("each half needs at least 3 blocks")
    if drift:
        constrain_sigma = True
    T = series.bath_time
    t_pos = np.unique(T[T > 0])
    if tau_bounds is None:
        # a bath that settles well before the first slope is taken is invisible
        first = t_pos.min() if len(t_pos) else 1.0
        tau_bounds = (first / 3.0, 10.0 * T.max())
    lo, hi = tau_bounds

    def profile(log_tau):
        return _solve(series, z_e, z_g, np.exp(log_tau), constrain_sigma, drift)[1]

    grid = np.linspace(np.log(lo), np.log(hi), 80)
    vals = np.array([profile(g) for g in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(profile, bounds=(a, b), method="bounded", options={"xatol": 1e-9})
    log_tau = float(res.x) if res.fun <= vals[i] else float(grid[i])
    best = min(res.fun, vals[i])

    # static-bath comparison: a single set of rates for all T
    static = np.column_stack([-np.where(series.half == "H", z_e, z_g), -np.ones_like(T)])
    static_w = _white(series, static)
    c_st, *_ = np.linalg.lstsq(static_w, _white(series, series.zdot0), rcond=None)
    r_st = _white(series, series.zdot0 - static @ c_st)
    chi2_static = float(r_st @ r_st)
    cov_st = _param_cov(series, static_w)
    threshold = chi2_dist.ppf(1 - significance, 3)
    edge = 0.02 * (np.log(hi) - np.log(lo))
    at_edge = log_tau <= np.log(lo) + edge or log_tau >= np.log(hi) - edge
    degenerate = bool(chi2_static - best < threshold or at_edge)
    if not degenerate:
        # a time constant known only to within a factor e is not resolved
        cov_try = _param_cov(series, _jacobian(series, z_e, z_g, np.exp(log_tau), constrain_sigma, drift))
        degenerate = bool(cov_try[-1, -1] > 1.0)

    tau_nominal = np.nan
    spread = 0.0
    if degenerate:
        spread = _deltadelta_spread(series, z_e, z_g, grid, vals, constrain_sigma, drift)
        tau_nominal = T.max() / 3.0
        log_tau = np.log(tau_nominal)
    tau = float(np.exp(log_tau))
    coef, chi2, a_mat, _ = _solve(series, z_e, z_g, tau, constrain_sigma, drift)

    # tau is held fixed when degenerate
    cov_full = _param_cov(series, _jacobian(series, z_e, z_g, tau, constrain_sigma, drift, with_tau=not degenerate))
    n_lin = a_mat.shape[1]
    rates, cov_rates = _expand(coef, cov_full[:n_lin, :n_lin], constrain_sigma, drift)
    sig = {name: float(np.sqrt(max(cov_rates[k, k], 0.0))) for k, name in enumerate(PARAM_NAMES)}
    if degenerate:
        sig["tau_e"] = np.nan
    else:
        sig["tau_e"] = float(tau * np.sqrt(max(cov_full[-1, -1], 0.0)))

    delta_p = 0.0
    if drift:
        gs = rates[0]
        delta_p = float(rates[4] / gs) if gs != 0 else np.nan
        sig["delta_p"] = float(np.sqrt(max(cov_rates[4, 4], 0.0)) / abs(gs)) if gs != 0 else np.nan

    resid = (series.zdot0 - a_mat @ coef)
    return BathRelaxationFit(
        gamma_sigma_h=float(rates[0]), gamma_sigma_l=float(rates[1]),
        gamma_delta_h=float(rates[2]), gamma_delta_l=float(rates[3]),
        tau_e=np.nan if degenerate else tau, sigma=sig, cov=cov_rates[:4, :4],
        constrained=constrain_sigma, degenerate=degenerate, delta_p=delta_p,
        chi2=chi2, dof=len(T) - cov_full.shape[0], tau_nominal=tau_nominal,
        deltadelta_spread=spread, gamma_sigma_static=float(c_st[0]),
        gamma_sigma_static_sigma=float(np.sqrt(max(cov_st[0, 0], 0.0))), residuals=resid)


def bath_model(fit: BathRelaxationFit, half, T, z_init):
    """Evaluate the fitted slope model at bath times ``T`` of one half."""
    tau = fit.tau_e if np.isfinite(fit.tau_e) else fit.tau_nominal
    f = np.exp(-np.asarray(T, dtype=float) / tau)
    if half == "H":
        gs = fit.gamma_sigma_h + (fit.gamma_sigma_l - fit.gamma_sigma_h) * f
        gd = fit.gamma_delta_h + (fit.gamma_delta_l - fit.gamma_delta_h) * f
    else:
        gs = fit.gamma_sigma_l + (fit.gamma_sigma_h - fit.gamma_sigma_l) * f
        gd = fit.gamma_delta_l + (fit.gamma_delta_h - fit.gamma_delta_l) * f
    drift_term = fit.delta_p * fit.gamma_sigma * f
    return -z_init * gs - gd - drift_term
