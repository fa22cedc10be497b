"""Initial-slope extraction and the slope-to-rate algebra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar


def _phi(k, t):
    """(1 - exp(-k t)) / k, continuous through k = 0."""
    x = k * t
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, t * (1.0 - 0.5 * x), t * (-np.expm1(-safe) / safe))


def _dphi_dk(k, t):
    x = k * t
    small = np.abs(x) < 1e-3
    safe_k = np.where(small, 1.0, k)
    exact = (t * np.exp(-x) * k - (-np.expm1(-x))) / safe_k**2
    series = t**2 * (-0.5 + x / 3.0 - x**2 / 8.0)
    return np.where(small, series, exact)


@dataclass
class ExponentialFit:
    """``z(t) = z0 + slope * (1 - exp(-rate t)) / rate``."""

    z0: float
    slope: float
    rate: float
    cov: np.ndarray
    chi2: float
    dof: int
    degenerate: bool = False

    def __call__(self, t):
        return self.z0 + self.slope * _phi(self.rate, np.asarray(t, dtype=float))

    @property
    def offset(self):
        """Asymptote ``C`` of the equivalent ``C + A exp(-t/tau)`` form."""
        return self.z0 + self.slope / self.rate if self.rate > 0 else np.nan


def _linear_solve(basis, z, w):
    a = basis * w[:, None]
    coef, *_ = np.linalg.lstsq(a, z * w, rcond=None)
    r = (z - basis @ coef) * w
    return coef, float(r @ r)


def fit_exponential(t, z, sigma=None, rate_bounds=None):
    """Weighted single-exponential fit by variable projection over the rate.

    The rate may be negative (a slowly rising curve) and passes smoothly
    through zero, where the model reduces to a straight line.  Returns an
    :class:`ExponentialFit` whose covariance comes from the Jacobian of all
    three parameters, with ``sigma`` treated as absolute when given.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if t.shape != z.shape or t.ndim != 1:
        raise ValueError("t and z must be 1-D arrays of equal length")
    if len(np.unique(t)) < 3:
        raise ValueError("need at least 3 distinct delays")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite data")
    absolute = sigma is not None and np.all(np.asarray(sigma) > 0)
    w = 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), t.shape) if absolute else np.ones_like(t)

    span = float(t.max() - t.min())
    lo, hi = rate_bounds if rate_bounds is not None else (-2.0 / span, 20.0 / span)

    def profile(k):
        return _linear_solve(np.column_stack([np.ones_like(t), _phi(k, t)]), z, w)[1]

    grid = np.unique(np.concatenate([np.linspace(lo, 0.0, 12) if lo < 0 else [],
                                     [0.0] if lo <= 0 <= hi else [],
                                     np.geomspace(max(lo, 1e-3 / span, 1e-300), hi, 60) if hi > 0 else []]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    vals = np.array([profile(k) for k in grid])
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    if b > a:
        res = minimize_scalar(profile, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12 * max(abs(a), abs(b), 1.0 / span)})
        k = float(res.x) if res.fun <= vals[i] else float(grid[i])
    else:
        k = float(grid[i])

    at_edge = np.isclose(k, hi, rtol=1e-6) or np.isclose(k, lo, rtol=1e-6)
    coef, chi2 = _linear_solve(np.column_stack([np.ones_like(t), _phi(k, t)]), z, w)
    z0, s = coef
    jac = np.column_stack([np.ones_like(t), _phi(k, t), s * _dphi_dk(k, t)]) * w[:, None]
    dof = len(t) - 3
    free = jac if not at_edge else jac[:, :2]
    jtj = free.T @ free
    try:
        cov_free = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov_free = np.linalg.pinv(jtj)
    if not absolute:
        cov_free = cov_free * (chi2 / dof if dof > 0 else 0.0)
    cov = np.zeros((3, 3))
    cov[: free.shape[1], : free.shape[1]] = cov_free
    return ExponentialFit(float(z0), float(s), k, cov, chi2, dof, degenerate=bool(at_edge))


@dataclass
class SlopeEstimate:
    zdot0: float
    sigma: float
    rate: float
    degenerate: bool = False


def extract_slope(t, z, sigma=None, rate_bounds=None):
    """Initial slope dZ/dt at t = 0 from an exponential fit.

    Parameters
    ----------
    t, z : array_like
        Delays (s) and polarizations, at least three distinct delays.
    sigma : float or array_like, optional
        Absolute per-point uncertainty.  Without it the covariance is scaled
        by the reduced chi-square.
    rate_bounds : (float, float), optional
        Allowed decay rates in s^-1.  The default admits time constants from
        1/20 of the delay span up to a slowly rising curve.

    Returns
    -------
    SlopeEstimate
        When the fitted rate sits at a bound the exponential is degenerate;
        a rate pinned at the slow end falls back to a straight-line slope.
    """
    t = np.asarray(t, dtype=float)
    fit = fit_exponential(t, z, sigma, rate_bounds)
    if fit.degenerate and fit.rate <= 0:
        # slower than the scan can resolve: plain straight line
        fit = _line_fit(t, z, sigma)
    var = fit.cov[1, 1]
    floor = 1e-12 * max(abs(fit.slope), 1.0)
    return SlopeEstimate(fit.slope, float(max(np.sqrt(max(var, 0.0)), floor)), fit.rate, fit.degenerate)


def _line_fit(t, z, sigma):
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    absolute = sigma is not None and np.all(np.asarray(sigma) > 0)
    w = 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), t.shape) if absolute else np.ones_like(t)
    basis = np.column_stack([np.ones_like(t), t])
    coef, chi2 = _linear_solve(basis, z, w)
    a = basis * w[:, None]
    cov2 = np.linalg.inv(a.T @ a)
    dof = len(t) - 2
    if not absolute:
        cov2 = cov2 * (chi2 / dof if dof > 0 else 0.0)
    cov = np.zeros((3, 3))
    cov[:2, :2] = cov2
    return ExponentialFit(float(coef[0]), float(coef[1]), 0.0, cov, chi2, dof, degenerate=True)


def rate_constraint(zdot0, z_init):
    """Linear relation ``gamma_sigma * z_init + gamma_delta = -zdot0``.

    Returns the coefficient row ``(z_init, 1)`` and right-hand side.
    """
    if abs(z_init) > 1:
        raise ValueError("|z_init| must be <= 1")
    return np.array([z_init, 1.0]), -float(zdot0)


def zdot_to_rates(zdot_e, zdot_g, z_e, z_g, sigma_e=None, sigma_g=None):
    """Solve the two initial-slope relations for ``(gamma_sigma, gamma_delta)``.

    With slope uncertainties given, also returns their propagated
    standard deviations as a third and fourth element.
    """
    for z in (z_e, z_g):
        if abs(z) > 1:
            raise ValueError("|z_init| must be <= 1")
    if z_e == z_g:
        raise ValueError("z_e == z_g: the two slope relations are degenerate")
    gs = -(zdot_e - zdot_g) / (z_e - z_g)
    gd = -zdot_e - z_e * gs
    if sigma_e is None or sigma_g is None:
        return gs, gd
    # gd = (z_e zdot_g - z_g zdot_e) / (z_e - z_g)
    dz = z_e - z_g
    s_gs = np.hypot(sigma_e, sigma_g) / abs(dz)
    s_gd = np.hypot(z_g * sigma_e, z_e * sigma_g) / abs(dz)
    return gs, gd, s_gs, s_gd


@dataclass
class SlopeSeries:
    """Initial slopes per (half, block) with the block start times.

    ``sigma`` weights the slopes in later fits; when ``cov`` is given it is
    the full slope covariance used to propagate errors.
    """

    half: np.ndarray
    block: np.ndarray
    bath_time: np.ndarray
    zdot0: np.ndarray
    sigma: np.ndarray
    rate: np.ndarray | None = None    # fitted per-block decay rate (s^-1)
    cov: np.ndarray | None = None     # full covariance of zdot0 when slopes are correlated

    def __post_init__(self):
        self.rate = np.full(len(self.zdot0), np.nan) if self.rate is None else np.asarray(self.rate, dtype=float)
        self.half = np.asarray(self.half, dtype="U1")
        self.block = np.asarray(self.block, dtype=int)
        self.bath_time = np.asarray(self.bath_time, dtype=float)
        self.zdot0 = np.asarray(self.zdot0, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not (np.all(np.isfinite(self.zdot0)) and np.all(np.isfinite(self.bath_time))):
            raise ValueError("slope series must be finite")
        if np.any(~(self.sigma > 0)):
            raise ValueError("slope sigmas must be > 0")
        if self.cov is not None:
            self.cov = np.asarray(self.cov, dtype=float)
            if self.cov.shape != (len(self.zdot0),) * 2:
                raise ValueError("cov must be square with one row per slope")

    def part(self, half):
        m = self.half == half
        return self.bath_time[m], self.zdot0[m], self.sigma[m]


def slope_series(record, rate_bounds=None, time_reference="measurement", rate_model="independent"):
    """Fit the initial slope of every (half, block) of a measurement record.

    ``time_reference="measurement"`` stamps each slope at the mean reset
    instant of its block, which is when the bath is actually probed;
    ``"block_start"`` uses the raw block start times.

    ``rate_model`` sets how the exponential rates of the blocks of one half
    are fitted: ``"independent"`` per block, ``"shared"`` one rate for all
    blocks, or ``"trend"`` a rate that is affine in the block's slope (see
    :func:`trend_rate_slopes`).  The coupled models cut the noise-induced
    bias of independent fits on short scans; the shared rate does so at
    the cost of a shape bias where the bath changes the curves.  With a
    coupled model the slopes of a half are correlated: their covariance is
    kept in ``cov`` and ``sigma`` holds the standard errors at fixed rates,
    which serve as fit weights that do not depend on the fitted slopes.
    """
    if rate_model not in ("independent", "shared", "trend"):
        raise ValueError("rate_model must be 'independent', 'shared' or 'trend'")
    if time_reference not in ("measurement", "block_start"):
        raise ValueError("time_reference must be 'measurement' or 'block_start'")
    offset = record.config.measurement_offset() if time_reference == "measurement" else 0.0
    sig = record.sample_sigma()
    rows = []
    covs = []
    for half in ("H", "L"):
        blocks = np.unique(record.select(half)["block"])
        curves = []
        for b in blocks:
            s = record.select(half, b)
            order = np.argsort(s["t_s"])
            curves.append((s["t_s"][order], s["z"][order], s["T_s"][0]))
        ts, zs = [c[0] for c in curves], [c[1] for c in curves]
        if rate_model != "independent":
            if rate_model == "shared":
                ests, _, cov, fixed_err = shared_rate_slopes(ts, zs, sig if sig > 0 else None, rate_bounds,
                                                             return_cov=True)
            else:
                ests, cov, fixed_err = trend_rate_slopes(ts, zs, sig if sig > 0 else None, rate_bounds)
            covs.append(cov)
            floor = 1e-12 * max(np.max(np.abs([e.zdot0 for e in ests])), 1.0)
            ests = [SlopeEstimate(e.zdot0, float(max(fe, floor)), e.rate, e.degenerate)
                    for e, fe in zip(ests, fixed_err)]
        else:
            ests = [extract_slope(t, z, sig if sig > 0 else None, rate_bounds) for t, z, _ in curves]
            covs.append(np.diag([e.sigma**2 for e in ests]))
        for b, (_, _, T), est in zip(blocks, curves, ests):
            rows.append((half, b, T + offset, est.zdot0, est.sigma, est.rate))
    half, block, T, zd, sg, rate = zip(*rows)
    cov = None
    if rate_model != "independent":
        n_h = covs[0].shape[0]
        cov = np.zeros((len(rows), len(rows)))
        cov[:n_h, :n_h] = covs[0]
        cov[n_h:, n_h:] = covs[1]
    return SlopeSeries(half, block, T, zd, sg, rate, cov)


def shared_rate_slopes(t_list, z_list, sigma=None, rate_bounds=None, return_cov=False):
    """Initial slopes of several curves that share one exponential rate.

    Each curve keeps its own intercept and slope; only the rate is common.
    Returns a list of :class:`SlopeEstimate` and the fitted rate.  With
    ``return_cov`` the covariance matrix of the slopes and their standard
    errors at fixed rate are appended.
    """
    t_all = [np.asarray(t, dtype=float) for t in t_list]
    z_all = [np.asarray(z, dtype=float) for z in z_list]
    n = len(t_all)
    if n == 0:
        raise ValueError("no curves")
    absolute = sigma is not None and np.all(np.asarray(sigma) > 0)
    w_all = [np.full(len(t), 1.0 / float(sigma)) if absolute else np.ones(len(t)) for t in t_all]
    span = max(float(t.max() - t.min()) for t in t_all)
    lo, hi = rate_bounds if rate_bounds is not None else (-2.0 / span, 20.0 / span)

    def profile(k):
        return sum(_linear_solve(np.column_stack([np.ones_like(t), _phi(k, t)]), z, w)[1]
                   for t, z, w in zip(t_all, z_all, w_all))

    grid = np.unique(np.concatenate([np.linspace(lo, 0.0, 12) if lo < 0 else [],
                                     np.geomspace(max(1e-3 / span, lo, 1e-300), hi, 60) if hi > 0 else []]))
    vals = np.array([profile(k) for k in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(profile, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12 * max(abs(a), abs(b), 1.0 / span)})
    k = float(res.x) if res.fun <= vals[i] else float(grid[i])
    at_edge = np.isclose(k, hi, rtol=1e-6) or np.isclose(k, lo, rtol=1e-6)

    # joint Jacobian: per-curve (z0, S) blocks plus one shared rate column
    m = sum(len(t) for t in t_all)
    jac = np.zeros((m, 2 * n + 1))
    coefs = []
    chi2 = 0.0
    row = 0
    for j, (t, z, w) in enumerate(zip(t_all, z_all, w_all)):
        coef, c2 = _linear_solve(np.column_stack([np.ones_like(t), _phi(k, t)]), z, w)
        coefs.append(coef)
        chi2 += c2
        sl = slice(row, row + len(t))
        jac[sl, 2 * j] = w
        jac[sl, 2 * j + 1] = _phi(k, t) * w
        jac[sl, -1] = coef[1] * _dphi_dk(k, t) * w
        row += len(t)
    free = jac if not at_edge else jac[:, :-1]
    cov = np.linalg.pinv(free.T @ free)
    dof = m - free.shape[1]
    if not absolute:
        cov = cov * (chi2 / dof if dof > 0 else 0.0)
    out = []
    for j, coef in enumerate(coefs):
        var = cov[2 * j + 1, 2 * j + 1]
        floor = 1e-12 * max(abs(coef[1]), 1.0)
        out.append(SlopeEstimate(float(coef[1]), float(max(np.sqrt(max(var, 0.0)), floor)), k, bool(at_edge)))
    if return_cov:
        idx = 2 * np.arange(n) + 1
        slope_cov = cov[np.ix_(idx, idx)]
        slope_cov[np.diag_indices(n)] = np.array([e.sigma for e in out]) ** 2
        # standard errors at fixed rate: they do not depend on the fitted slopes
        fixed = np.linalg.pinv(jac[:, :-1].T @ jac[:, :-1])
        if not absolute:
            fixed = fixed * (chi2 / dof if dof > 0 else 0.0)
        weights = np.sqrt(np.clip(np.diag(fixed)[idx], 0.0, None))
        return out, k, slope_cov, weights
    return out, k


def _scaled_inverse(normal):
    """Inverse of a normal matrix after equilibrating its diagonal."""
    d = np.sqrt(np.clip(np.diag(normal), 1e-300, None))
    return np.linalg.pinv(normal / np.outer(d, d)) / np.outer(d, d)


def trend_rate_slopes(t_list, z_list, sigma=None, rate_bounds=None):
    """Initial slopes of several curves whose rates follow their slopes.

    Each curve ``j`` is ``z0_j + s_j (1 - exp(-k_j t)) / k_j`` with
    ``k_j = a + b s_j``.  When one slowly changing bath state sets both
    the slope and the effective decay rate of every block, this keeps the
    block-to-block change of the curve shape while fitting only two rate
    parameters, so it avoids both the noise bias of independent per-curve
    rates and the shape bias of a single shared rate.

    Returns a list of :class:`SlopeEstimate`, the slope covariance matrix
    and the slope standard errors at fixed rates.
    """
    t_all = [np.asarray(t, dtype=float) for t in t_list]
    z_all = [np.asarray(z, dtype=float) for z in z_list]
    n = len(t_all)
    absolute = sigma is not None and np.all(np.asarray(sigma) > 0)
    w = 1.0 / float(sigma) if absolute else 1.0
    span = max(float(t.max() - t.min()) for t in t_all)
    lo, hi = rate_bounds if rate_bounds is not None else (-2.0 / span, 20.0 / span)

    shared, k0 = shared_rate_slopes(t_all, z_all, sigma, rate_bounds)
    x0 = np.concatenate([[k0 * span, 0.0], np.ravel([[z[0], e.zdot0 * span] for z, e in zip(z_all, shared)])])
    # parameters: a * span, b, then per curve z0 and s * span
    sizes = [len(t) for t in t_all]
    rows = np.repeat(np.arange(n), sizes)
    t_cat = np.concatenate(t_all)
    z_cat = np.concatenate(z_all)

    def unpack(x):
        a, b = x[0] / span, x[1]
        z0 = x[2::2]
        s = x[3::2] / span
        k = np.clip(a + b * s, lo, hi)
        return a, b, z0, s, k

    def resid(x):
        _, _, z0, s, k = unpack(x)
        return (z0[rows] + s[rows] * _phi(k[rows], t_cat) - z_cat) * w

    def jac(x):
        _, b, _, s, k = unpack(x)
        dk = s[rows] * _dphi_dk(k[rows], t_cat)
        out = np.zeros((len(t_cat), 2 + 2 * n))
        out[:, 0] = dk / span
        out[:, 1] = dk * s[rows]
        idx = np.arange(len(t_cat))
        out[idx, 2 + 2 * rows] = 1.0
        out[idx, 3 + 2 * rows] = (_phi(k[rows], t_cat) + dk * b) / span
        return out * w

    res = least_squares(resid, x0, jac=jac, method="lm", xtol=1e-12, ftol=1e-12, max_nfev=2000)
    _, _, _, s, k = unpack(res.x)
    j = jac(res.x)
    chi2 = float(2 * res.cost)
    dof = len(t_cat) - j.shape[1]
    scale = 1.0 if absolute else (chi2 / dof if dof > 0 else 0.0)
    idx = 3 + 2 * np.arange(n)
    cov = _scaled_inverse(j.T @ j)[np.ix_(idx, idx)] * scale / span**2
    # remove round-off negative eigenvalues
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    cov = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    fixed_err = np.empty(n)
    for i, t in enumerate(t_all):
        basis = np.column_stack([np.ones_like(t), _phi(k[i], t)]) * w
        fixed_err[i] = np.sqrt(max(_scaled_inverse(basis.T @ basis)[1, 1] * scale, 0.0))
    floor = 1e-12 * max(np.max(np.abs(s)), 1.0)
    out = [SlopeEstimate(float(sj), float(max(np.sqrt(max(cov[i, i], 0.0)), floor)), float(kj))
           for i, (sj, kj) in enumerate(zip(s, k))]
    return out, cov, np.maximum(fixed_err, floor)
