"""Global multi-Lorentzian fit of the rate spectra and TLS lifetime bounds."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, least_squares
from scipy.signal import find_peaks, peak_widths
from scipy.stats import chi2 as chi2_dist

from ..model import gamma_qt


class OverParameterizedError(ValueError):
    """More TLS requested than the data can resolve."""


class FitConvergenceError(RuntimeError):
    """The spectrum fit stopped without meeting its convergence tolerances."""


@dataclass
class SpectrumDataset:
    """Per-frequency rates and protocol factors.

    Arrays share one length; rates in s^-1, frequencies in Hz.

    Points flagged ``static`` had no resolvable bath dynamics: their
    ``gamma_sigma`` is the static-bath estimate, which is lowered by the
    half-averaged polarizable swing over ``reset_contrast`` (``Z_e - Z_g``),
    and their ``gamma_deltadelta`` is not used.  ``half_length_s`` is the
    duration of one polarizing half cycle.
    """

    omega_q_hz: np.ndarray
    gamma_sigma: np.ndarray
    gamma_sigma_err: np.ndarray
    gamma_deltadelta: np.ndarray
    gamma_deltadelta_err: np.ndarray
    zbar_h: np.ndarray
    zbar_l: np.ndarray
    eta: np.ndarray
    epsilon: np.ndarray
    gamma_qt_eff: np.ndarray | float = 0.0
    protocol: np.ndarray | None = None
    static: np.ndarray | bool = False
    reset_contrast: np.ndarray | float = np.nan
    half_length_s: np.ndarray | float = np.nan

    FIELDS = ("omega_q_hz", "gamma_sigma", "gamma_sigma_err", "gamma_deltadelta", "gamma_deltadelta_err",
              "zbar_h", "zbar_l", "eta", "epsilon", "gamma_qt_eff", "reset_contrast", "half_length_s")

    def __post_init__(self):
        n = len(np.atleast_1d(self.omega_q_hz))
        for name in self.FIELDS:
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(n, float(v))
            if v.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            setattr(self, name, v)
        if self.protocol is None:
            self.protocol = np.array([""] * n)
        self.protocol = np.asarray(self.protocol, dtype=str)
        self.static = np.broadcast_to(np.asarray(self.static, dtype=bool), (n,)).copy()
        bad = self.static & ~(np.isfinite(self.reset_contrast) & (self.reset_contrast > 0)
                              & np.isfinite(self.half_length_s) & (self.half_length_s > 0))
        if np.any(bad):
            raise ValueError("static points need a positive reset_contrast and half_length_s")
        if not np.all(np.isfinite(self.omega_q_hz)):
            raise ValueError("frequencies must be finite")
        order = np.argsort(self.omega_q_hz, kind="stable")
        if np.any(order != np.arange(n)):
            for name in self.FIELDS + ("protocol", "static"):
                setattr(self, name, getattr(self, name)[order])

    def __len__(self):
        return len(self.omega_q_hz)


@dataclass
class FittedTls:
    freq_hz: float
    freq_err: float
    g_hz: float
    g_err: float
    gamma2_hz: float
    gamma2_err: float
    gamma_t: float = np.nan
    gamma_t_interval: tuple = (0.0, np.inf)


@dataclass
class SpectrumFit:
    gamma_q: float
    gamma_q_err: float
    tls: list
    residual: float
    residual_deltadelta: float = np.nan
    dof: int = 0
    dof_deltadelta: int = 0
    residuals_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals_deltadelta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    warnings: list = field(default_factory=list)

    def gamma_qt_at(self, omega_q_hz):
        """Per-TLS exchange rate at each frequency, shape (n_tls, n_freq)."""
        w = np.atleast_1d(np.asarray(omega_q_hz, dtype=float))
        if not self.tls:
            return np.zeros((0, len(w)))
        return np.array([gamma_qt(t.g_hz, t.gamma2_hz, w - t.freq_hz) for t in self.tls])

    def gamma_sigma_at(self, omega_q_hz):
        return self.gamma_q + self.gamma_qt_at(omega_q_hz).sum(axis=0)

    def gamma_deltadelta_at(self, data: SpectrumDataset, gamma_t=None):
        gt = np.array([t.gamma_t for t in self.tls]) if gamma_t is None else np.asarray(gamma_t)
        return _deltadelta_model(self.gamma_qt_at(data.omega_q_hz), gt, data)


# --------------------------------------------------------------------------
# stage 1: Gamma_Sigma


def detect_peaks(omega_hz, rate, err, n_sigma=3.0):
    """Seed list of ``(freq_hz, g_hz, gamma2_hz)`` for peaks that stand out of the noise.

    A local maximum qualifies when the error-weighted mean height of the
    points inside its half-prominence width, measured from its reference
    base, exceeds ``n_sigma`` standard errors.  Basing the test on the
    prominence keeps a sloping background from neighbouring lines from
    being mistaken for a new TLS.
    """
    w = np.asarray(omega_hz, dtype=float)
    y = np.asarray(rate, dtype=float)
    s = np.asarray(err, dtype=float)
    if len(y) < 3:
        return []
    step = float(np.median(np.diff(w)))
    peaks, props = find_peaks(y, prominence=0.0)
    if len(peaks) == 0:
        return []
    lb, rb = props["left_bases"], props["right_bases"]
    base = np.where(y[lb] > y[rb], lb, rb)
    widths, _, left, right = peak_widths(y, peaks, rel_height=0.5)
    out = []
    for i, b, width, l, r in zip(peaks, base, widths, left, right):
        idx = np.arange(int(np.ceil(l)), int(np.floor(r)) + 1)
        idx = idx[(idx >= 0) & (idx < len(y))]
        if i not in idx:
            idx = np.append(idx, i)
        wt = 1.0 / s[idx] ** 2
        height = float(np.sum(wt * y[idx]) / np.sum(wt)) - y[b]
        height_err = float(np.hypot(1.0 / np.sqrt(np.sum(wt)), s[b]))
        if height <= n_sigma * height_err:
            continue
        hwhm = max(0.5 * width * step, 0.25 * step)
        peak_height = y[i] - y[b]
        out.append((float(w[i]), float(np.sqrt(peak_height * hwhm / (4 * np.pi))), float(hwhm)))
    return out


_F_SCALE, _G_SCALE, _W_SCALE, _R_SCALE = 1e6, 1e3, 1e6, 1e3
# a line broader than this fraction of the sweep is background, not a TLS
_MAX_WIDTH_FRACTION = 0.1


def _unpack(x):
    gq = x[0] * _R_SCALE
    p = x[1:].reshape(-1, 3)
    return gq, p[:, 0] * _F_SCALE, p[:, 1] * _G_SCALE, p[:, 2] * _W_SCALE


def _sigma_model(x, w):
    gq, f, g, g2 = _unpack(x)
    out = np.full_like(w, gq)
    for fk, gk, wk in zip(f, g, g2):
        out = out + gamma_qt(gk, wk, w - fk)
    return out


def _fit_sigma(data, seeds, gamma_q0):
    w = data.omega_q_hz
    y = data.gamma_sigma
    s = data.gamma_sigma_err
    x0 = [gamma_q0 / _R_SCALE]
    lo = [0.0]
    hi = [np.inf]
    span = w.max() - w.min()
    step = float(np.median(np.diff(w))) if len(w) > 1 else 1.0
    for f, g, g2 in seeds:
        x0 += [f / _F_SCALE, g / _G_SCALE, g2 / _W_SCALE]
        lo += [(f - 3 * max(g2, step)) / _F_SCALE, 0.0, 0.05 * step / _W_SCALE]
        hi += [(f + 3 * max(g2, step)) / _F_SCALE, np.inf, _MAX_WIDTH_FRACTION * span / _W_SCALE]
    lo, hi = np.array(lo), np.array(hi)
    x0 = np.clip(np.array(x0), lo, hi)

    def resid(x):
        return (_sigma_model(x, w) - y) / s

    def jac(x):
        _, f, g, g2 = _unpack(x)
        out = np.empty((len(w), len(x)))
        out[:, 0] = _R_SCALE
        for k, (fk, gk, wk) in enumerate(zip(f, g, g2)):
            det = w - fk
            den = wk**2 + det**2
            amp = 4 * np.pi * gk**2
            out[:, 1 + 3 * k] = amp * wk * 2 * det / den**2 * _F_SCALE
            out[:, 2 + 3 * k] = 8 * np.pi * gk * wk / den * _G_SCALE
            out[:, 3 + 3 * k] = amp * (det**2 - wk**2) / den**2 * _W_SCALE
        return out / s[:, None]

    res = least_squares(resid, x0, jac=jac, bounds=(lo, hi), method="trf", x_scale="jac",
                        ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=20000)
    return res


def _covariance(res, dof):
    jac = res.jac
    cov = np.linalg.pinv(jac.T @ jac)
    chi2 = float(2 * res.cost)
    scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    return cov * scale, chi2, scale


# --------------------------------------------------------------------------
# stage 2: Gamma_deltadelta


def _deltadelta_model(rates, gamma_t, data):
    """Sum over TLS of the polarizable rate; ``rates`` has shape (n_tls, n_freq)."""
    eta = data.eta
    contrast = data.zbar_h - data.zbar_l
    total = np.zeros(rates.shape[1])
    for r, gt in zip(rates, gamma_t):
        denom = gt + r * eta + data.gamma_qt_eff * data.epsilon
        total = total + np.where(denom > 0, r**2 * eta / np.where(denom > 0, denom, 1.0), 0.0)
    return total * contrast


def _swing_fraction(x):
    """``1 - tanh(x) / x`` and its derivative.

    Fraction of the full H/L swing seen on average over one half cycle by
    a bath relaxing at rate ``2 x / half_length`` under a square-wave drive.
    """
    x = np.asarray(x, dtype=float)
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    t = np.tanh(xs)
    frac = np.where(small, x**2 / 3, 1 - t / xs)
    dfrac = np.where(small, 2 * x / 3, (t - xs * (1 - t**2)) / xs**2)
    return frac, dfrac


def _static_offset(rates, gamma_t, data):
    """Drop of the static-bath Gamma_Sigma below Gamma_Sigma, with d/d(gamma_t)."""
    m = data.static
    off = np.zeros(rates.shape[1])
    jac = np.zeros(rates.shape)
    if not np.any(m):
        return off, jac
    contrast = data.zbar_h - data.zbar_l
    half = np.where(m, data.half_length_s, 0.0)
    rc = np.where(m, data.reset_contrast, 1.0)
    for k, (r, gt) in enumerate(zip(rates, gamma_t)):
        den = gt + r * data.eta + data.gamma_qt_eff * data.epsilon
        ok = m & (den > 0)
        safe = np.where(ok, den, 1.0)
        swing = np.where(ok, r**2 * data.eta / safe, 0.0) * contrast
        frac, dfrac = _swing_fraction(np.where(ok, 0.5 * half * safe, 0.0))
        off += swing * frac / rc
        jac[k] = (-swing / safe * frac + swing * dfrac * 0.5 * half) / rc
    return off, jac


class _StageTwo:
    """Residuals in the TLS decay rates with the line shapes held fixed.

    Resolved points contribute their Gamma_deltadelta; static points
    contribute their static-bath Gamma_Sigma, whose offset from the line
    model depends on the decay rates.
    """

    def __init__(self, data, rates, sigma_model):
        self.data = data
        self.rates = rates
        self.dyn = ~data.static
        self.sub = _subset(data, self.dyn)
        self.sigma_model = sigma_model

    def resid(self, gt):
        d = self.data
        dd = (_deltadelta_model(self.rates[:, self.dyn], gt, self.sub)
              - self.sub.gamma_deltadelta) / self.sub.gamma_deltadelta_err
        off, _ = _static_offset(self.rates, gt, d)
        st = ((self.sigma_model - off - d.gamma_sigma) / d.gamma_sigma_err)[d.static]
        return np.concatenate([dd, st])

    def jac(self, gt):
        d = self.data
        sub = self.sub
        contrast = sub.zbar_h - sub.zbar_l
        rows = []
        for r, g in zip(self.rates[:, self.dyn], gt):
            den = g + r * sub.eta + sub.gamma_qt_eff * sub.epsilon
            safe = np.where(den > 0, den, 1.0)
            rows.append(np.where(den > 0, -(r**2) * sub.eta / safe**2, 0.0) * contrast
                        / sub.gamma_deltadelta_err)
        dd = np.array(rows).reshape(len(gt), -1)
        _, dj = _static_offset(self.rates, gt, d)
        st = (-dj / d.gamma_sigma_err)[:, d.static]
        return np.concatenate([dd, st], axis=1).T


def _subset(data, mask):
    kw = {name: getattr(data, name)[mask] for name in SpectrumDataset.FIELDS}
    return SpectrumDataset(protocol=data.protocol[mask], static=data.static[mask], **kw)


def _fit_deltadelta(problem: _StageTwo, x0, fixed=None):
    """Least-squares Gamma_t (stored in ms^-1); ``fixed`` pins one index."""
    n = problem.rates.shape[0]
    free = [k for k in range(n) if fixed is None or k != fixed[0]]

    def full(xf):
        gt = np.empty(n)
        gt[free] = xf
        if fixed is not None:
            gt[fixed[0]] = fixed[1]
        return gt

    def resid(xf):
        return problem.resid(full(xf) * 1e3)

    def jac(xf):
        return problem.jac(full(xf) * 1e3)[:, free] * 1e3

    if not free:
        r = resid(np.zeros(0))
        return full(np.zeros(0)), float(r @ r), None
    start = np.clip(np.asarray(x0, dtype=float)[free], 0.0, _GT_MAX_MS)
    res = least_squares(resid, start, jac=jac, bounds=(0.0, _GT_MAX_MS), method="trf", x_scale=1.0,
                        ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=5000)
    return full(res.x), float(2 * res.cost), res


_GT_MAX_MS = 1.0e4     # 1e7 s^-1: effectively unpolarizable


class _JointProfile:
    """Profile of the combined chi-square of both spectra in one decay rate.

    The profiled TLS keeps its frequency, coupling and linewidth free, as
    do all other decay rates, so the interval also carries the stage-one
    uncertainty of that line.  This matters where a line is seen only
    through static points, whose offset trades off against the coupling.
    """

    def __init__(self, data, fit, best_ms, k):
        self.data = data
        self.w = data.omega_q_hz
        self.k = k
        self.gq = fit.gamma_q
        self.lines = np.array([[t.freq_hz, t.g_hz, t.gamma2_hz] for t in fit.tls])
        self.n = len(fit.tls)
        self.dyn = ~data.static
        self.sub = _subset(data, self.dyn)
        step = float(np.median(np.diff(self.w)))
        span = self.w.max() - self.w.min()
        f, _, g2 = self.lines[k]
        reach = 3 * max(g2, step)
        self.lo = np.array([(f - reach) / _F_SCALE, 0.0, 0.05 * step / _W_SCALE])
        self.hi = np.array([(f + reach) / _F_SCALE, np.inf, _MAX_WIDTH_FRACTION * span / _W_SCALE])
        self.line0 = self.lines[k] / np.array([_F_SCALE, _G_SCALE, _W_SCALE])
        self.best = np.asarray(best_ms, dtype=float)
        full = self._solve(None)
        self.chi2_min = full[0]
        dof = len(self.w) + np.count_nonzero(self.dyn) - (1 + 4 * self.n)
        self.delta = max(1.0, self.chi2_min / dof) if dof > 0 else 1.0
        self.gt_hat = full[1]

    def _resid(self, x, fixed):
        line = x[:3] * np.array([_F_SCALE, _G_SCALE, _W_SCALE])
        gt = np.empty(self.n)
        free = [i for i in range(self.n) if fixed is None or i != self.k]
        gt[free] = x[3:]
        if fixed is not None:
            gt[self.k] = fixed
        gt = gt * 1e3
        lines = self.lines.copy()
        lines[self.k] = line
        rates = np.array([gamma_qt(gk, wk, self.w - fk) for fk, gk, wk in lines])
        model = self.gq + rates.sum(axis=0)
        off, _ = _static_offset(rates, gt, self.data)
        r1 = (model - off - self.data.gamma_sigma) / self.data.gamma_sigma_err
        r2 = (_deltadelta_model(rates[:, self.dyn], gt, self.sub) - self.sub.gamma_deltadelta) \
            / self.sub.gamma_deltadelta_err
        return np.concatenate([r1, r2])

    def _solve(self, fixed):
        free = [i for i in range(self.n) if fixed is None or i != self.k]
        x0 = np.concatenate([self.line0, np.clip(self.best[free], 0.0, _GT_MAX_MS)])
        lo = np.concatenate([self.lo, np.zeros(len(free))])
        hi = np.concatenate([self.hi, np.full(len(free), _GT_MAX_MS)])
        x0 = np.clip(x0, lo, hi)
        res = least_squares(self._resid, x0, args=(fixed,), bounds=(lo, hi), method="trf",
                            x_scale="jac", ftol=1e-10, xtol=1e-10, max_nfev=400)
        gt_k = fixed if fixed is not None else res.x[3 + self.k]
        return float(2 * res.cost), float(gt_k)

    def _excess(self, gt_ms):
        return self._solve(gt_ms)[0] - self.chi2_min - self.delta

    def interval(self):
        """(lower, upper) decay-rate bounds in s^-1."""
        x_hat = self.gt_hat
        if x_hat <= 0 or self._excess(0.0) <= 0:
            low = 0.0
        else:
            low = brentq(self._excess, 0.0, x_hat, xtol=1e-4 * max(x_hat, 1e-3))
        upper = np.inf
        x, prev = max(x_hat, 1e-3), x_hat
        while x < _GT_MAX_MS:
            x = min(x * 2.0, _GT_MAX_MS)
            if self._excess(x) > 0:
                upper = brentq(self._excess, prev, x, xtol=1e-4 * x)
                break
            prev = x
        return low * 1e3, upper * 1e3


def _seeds_from(res):
    _, f, g, g2 = _unpack(res.x)
    return list(zip(f, g, g2))


def _stage_one(data, seeds, n_sigma, significance, adapt):
    """Fit Gamma_Sigma; with ``adapt`` add missed lines and drop unneeded ones.

    A line is added when a residual peak passes :func:`detect_peaks` and
    including it lowers chi-square by more than the ``1 - significance``
    quantile of chi-square with 3 degrees of freedom (scaled by the reduced
    chi-square when that exceeds one).  Lines whose removal costs less than
    the same amount are dropped.
    """
    w = data.omega_q_hz
    gamma_q0 = float(np.percentile(data.gamma_sigma, 10))
    res = _fit_sigma(data, seeds, gamma_q0)
    if not adapt:
        return res
    cut = chi2_dist.ppf(1 - significance, 3)
    step = float(np.median(np.diff(w)))

    def scale(r):
        dof = len(w) - len(r.x)
        return max(1.0, 2 * r.cost / dof) if dof > 0 else 1.0

    for _ in range(20):
        current = _seeds_from(res)
        resid = data.gamma_sigma - _sigma_model(res.x, w)
        cands = detect_peaks(w, resid, data.gamma_sigma_err, n_sigma=n_sigma)
        cands = [c for c in cands if all(abs(c[0] - f) > max(g2, step) for f, _, g2 in current)]
        added = False
        for c in sorted(cands, key=lambda c: -c[1] ** 2 / c[2]):
            trial = _fit_sigma(data, current + [c], res.x[0] * _R_SCALE)
            if 2 * (res.cost - trial.cost) > cut * scale(trial):
                res = trial
                added = True
                break
        if not added:
            break

    while len(res.x) > 4:
        current = _seeds_from(res)
        costs = []
        for k in range(len(current)):
            trial = _fit_sigma(data, current[:k] + current[k + 1:], res.x[0] * _R_SCALE)
            costs.append((2 * (trial.cost - res.cost), k, trial))
        gain, k, trial = min(costs, key=lambda c: c[0])
        if gain > cut * scale(res):
            break
        res = trial
    return res


def fit_spectrum(data: SpectrumDataset, init=None, n_sigma=3.0, intervals=True, significance=1e-3):
    """Two-stage global fit of the Gamma_Sigma and Gamma_deltadelta spectra.

    Stage one fits a background rate plus one Lorentzian per TLS to
    Gamma_Sigma.  Stage two holds those fixed and fits every TLS decay rate
    to Gamma_deltadelta using each point's duty-cycle factors and average
    qubit polarizations.  Decay-rate intervals are profile-likelihood bounds
    at a chi-square rise of one (times the reduced chi-square when the fit
    is worse than the quoted errors).

    Static points (see :class:`SpectrumDataset`) enter stage two through
    their static-bath Gamma_Sigma, and stage one sees them corrected by
    the offset the current decay rates predict; the two stages alternate
    until that offset settles.

    Parameters
    ----------
    init : list of (freq_hz, g_hz, gamma2_hz), optional
        Seeds for stage one, fitted as given.  Without it, peaks are
        detected automatically and lines are added or removed by a
        chi-square test at ``significance``.  More seeds than detected
        peaks raises :class:`OverParameterizedError`.
    """
    if len(data) < 4:
        raise ValueError("need at least 4 spectrum points")
    w = data.omega_q_hz
    detected = detect_peaks(w, data.gamma_sigma, data.gamma_sigma_err, n_sigma=n_sigma)
    if init is None:
        seeds = detected
    else:
        seeds = [tuple(map(float, s)) for s in init]
        if len(seeds) > max(len(detected), 1):
            raise OverParameterizedError(
                f"{len(seeds)} TLS requested but only {len(detected)} resolvable peaks found")
    if not seeds:
        raise OverParameterizedError("no resolvable peaks above the background")
    adapt = init is None
    res = _stage_one(data, seeds, n_sigma, significance, adapt=adapt)
    offset = np.zeros(len(w))
    for _ in range(_MAX_ALTERNATIONS):
        fit = _assemble(res, data)
        rates = fit.gamma_qt_at(w)
        problem = _StageTwo(data, rates, fit.gamma_sigma_at(w))
        best, chi2_dd = _stage_two(problem, len(fit.tls))
        if not np.any(data.static):
            break
        new_offset = _static_offset(rates, best * 1e3, data)[0]
        change = np.max(np.abs(new_offset - offset) / data.gamma_sigma_err)
        offset = new_offset
        if change < 0.01:
            break
        shifted = replace(data, gamma_sigma=data.gamma_sigma + offset)
        res = _stage_one(shifted, _seeds_from(res), n_sigma, significance, adapt=adapt)

    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitConvergenceError(f"Gamma_Sigma fit did not converge: {res.message}")
    dof2 = len(w) - len(fit.tls)
    fit.residual_deltadelta = chi2_dd
    fit.dof_deltadelta = dof2
    pulls = problem.resid(best * 1e3)
    fit.residuals_deltadelta = np.empty(len(w))
    fit.residuals_deltadelta[~data.static] = pulls[:np.count_nonzero(~data.static)]
    fit.residuals_deltadelta[data.static] = pulls[np.count_nonzero(~data.static):]
    for k, t in enumerate(fit.tls):
        t.gamma_t = float(best[k] * 1e3)
    if intervals:
        for k, t in enumerate(fit.tls):
            lo, hi = _JointProfile(data, fit, best, k).interval()
            t.gamma_t_interval = (min(lo, t.gamma_t), max(hi, t.gamma_t))
    return fit


_MAX_ALTERNATIONS = 8


def _assemble(res, data):
    """Stage-one result as a :class:`SpectrumFit` with TLS sorted by frequency."""
    w = data.omega_q_hz
    dof = len(w) - len(res.x)
    if dof < 0:
        raise OverParameterizedError("more parameters than spectrum points")
    cov, chi2, _ = _covariance(res, dof)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    gq, f, g, g2 = _unpack(res.x)
    _, fe, ge, g2e = _unpack(err)
    gqe = err[0] * _R_SCALE
    warnings = []
    tls = [FittedTls(float(a), float(b), float(c), float(d), float(e), float(h))
           for a, b, c, d, e, h in zip(f, fe, g, ge, g2, g2e)]
    for t in tls:
        near = np.abs(w - t.freq_hz) <= 2 * t.gamma2_hz
        if np.count_nonzero(near) < 3:
            warnings.append(f"TLS at {t.freq_hz / 1e6:.2f} MHz spans fewer than 3 spectrum points")
    tls.sort(key=lambda t: t.freq_hz)
    return SpectrumFit(gq, gqe, tls, chi2, dof=dof, residuals_sigma=res.fun.copy(), warnings=warnings)


def _stage_two(problem, n_tls):
    best, chi2_dd, _ = _fit_deltadelta(problem, np.full(n_tls, 1.0))
    # a second start from the fast end guards against a flat local minimum
    alt, chi2_alt, _ = _fit_deltadelta(problem, np.full(n_tls, 100.0))
    if chi2_alt < chi2_dd:
        best, chi2_dd = alt, chi2_alt
    return best, chi2_dd


# --------------------------------------------------------------------------


@dataclass
class PolarizabilityEstimate:
    omega_q_hz: np.ndarray
    value: np.ndarray          # clipped to [0, 1]
    raw: np.ndarray
    out_of_range: np.ndarray
    valid: np.ndarray          # Gamma_Sigma - Gamma_q > 0 with a resolved bath

    def mean(self, mask=None):
        m = self.valid if mask is None else (self.valid & mask)
        return float(np.mean(self.value[m])) if np.any(m) else np.nan


def polarizability_spectrum(fit: SpectrumFit, data: SpectrumDataset):
    """Average TLS polarization swing ``Gdd / (2 (GS - Gq))`` at every point."""
    excess = data.gamma_sigma - fit.gamma_q
    # a static point's Gamma_deltadelta is not determined by its data
    valid = (excess > 0) & ~data.static
    raw = np.where(valid, data.gamma_deltadelta / (2 * np.where(valid, excess, 1.0)), np.nan)
    value = np.clip(np.nan_to_num(raw, nan=0.0), 0.0, 1.0)
    oor = valid & ((raw < 0) | (raw > 1))
    return PolarizabilityEstimate(data.omega_q_hz, value, raw, oor, valid)


def mean_polarizability(fit: SpectrumFit, data: SpectrumDataset, min_snr=3.0):
    """Mean swing over points whose excess rate is resolved at ``min_snr``."""
    est = polarizability_spectrum(fit, data)
    resolved = (data.gamma_sigma - fit.gamma_q) > min_snr * data.gamma_sigma_err
    return est.mean(resolved)
