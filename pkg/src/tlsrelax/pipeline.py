"""Per-frequency measurement and analysis pipeline.

Each point is measured with FD-4 first.  Points where the qubit relaxes
too fast for the fixed delays are re-measured with CD-8.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis.bath import BathRelaxationFit, fit_bath_relaxation
from .analysis.slopes import SlopeSeries, slope_series
from .analysis.spectrum import SpectrumDataset, SpectrumFit, fit_spectrum
from .model import Environment
from .sequences import MeasurementRecord, ProtocolConfig, run_two_timescale

STRONG_COUPLING_RATE = 4.0e3     # s^-1


@dataclass
class PointAnalysis:
    omega_q_hz: float
    protocol: str
    fit: BathRelaxationFit           # Gamma_Sigma constrained equal in both halves
    fit_free: BathRelaxationFit      # unconstrained
    series: SlopeSeries
    eta: float
    epsilon: float
    zbar_h: float
    zbar_l: float
    gamma_qt_eff: float
    reset_contrast: float = np.nan
    half_length: float = np.nan
    trigger: str = ""
    fd4_fit: BathRelaxationFit | None = None
    records: list = field(default_factory=list)


def analyze_record(record: MeasurementRecord, drift=False):
    """Slopes plus constrained and unconstrained bath fits of one record."""
    series = slope_series(record, rate_model="trend")
    cfg = record.config
    fit = fit_bath_relaxation(series, cfg.reset_z_e, cfg.reset_z_g, constrain_sigma=True, drift=drift)
    free = fit_bath_relaxation(series, cfg.reset_z_e, cfg.reset_z_g, constrain_sigma=False)
    return series, fit, free


def strong_coupling_reason(fit: BathRelaxationFit, series: SlopeSeries, config: ProtocolConfig,
                           threshold=STRONG_COUPLING_RATE):
    """Why a FD-4 point should be re-measured with CD-8, or ``""``.

    Besides the fitted Gamma_Sigma, the per-block decay rates and a bath
    relaxation faster than one block are checked: at strong coupling the
    fixed FD-4 delays miss most of the fast decay and the fitted
    Gamma_Sigma collapses, so its value alone is not a reliable trigger.
    """
    if fit.gamma_sigma > threshold:
        return "gamma_sigma"
    rates = series.rate[np.isfinite(series.rate)]
    if len(rates) and np.median(rates) > threshold:
        return "block_decay_rate"
    if np.isfinite(fit.tau_e) and fit.tau_e + 2 * fit.sigma["tau_e"] < config.block_length:
        return "fast_bath"
    return ""


def _factors(record: MeasurementRecord):
    d = record.diagnostics
    cfg = record.config
    return dict(eta=d["eta"], epsilon=d["epsilon"], zbar_h=d["zbar_h"], zbar_l=d["zbar_l"],
                gamma_qt_eff=cfg.gamma_qt_eff, reset_contrast=cfg.reset_z_e - cfg.reset_z_g,
                half_length=cfg.half_length)


def _seed_sequence(seed):
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _point_seeds(seed):
    return _seed_sequence(seed).spawn(2)


def point_from_record(record: MeasurementRecord, keep_record=False):
    """Analyze one stored or simulated record into a :class:`PointAnalysis`."""
    series, fit, free = analyze_record(record)
    return PointAnalysis(record.diagnostics["qubit_freq_hz"], record.config.variant, fit, free, series,
                         records=[record] if keep_record else [], **_factors(record))


def _measure(env: Environment, config: ProtocolConfig, seed, keep_records=False):
    rec = run_two_timescale(config, env, seed=np.random.default_rng(seed))
    return point_from_record(rec, keep_records)


def measure_point(env: Environment, fd4: ProtocolConfig, cd8: ProtocolConfig | None = None, seed=None,
                  threshold=STRONG_COUPLING_RATE, keep_records=False):
    """Simulate and analyze one qubit frequency of ``env``.

    The point is re-measured with ``cd8`` when its FD-4 data show strong
    coupling (see :func:`strong_coupling_reason`).
    """
    s_fd4, s_cd8 = _point_seeds(seed)
    out = _measure(env, fd4, s_fd4, keep_records)
    reason = strong_coupling_reason(out.fit, out.series, fd4, threshold) if cd8 is not None else ""
    if reason:
        strong = _measure(env, cd8, s_cd8, keep_records)
        strong.trigger = reason
        strong.fd4_fit = out.fit
        strong.records = out.records + strong.records
        out = strong
    return out


def _job(args):
    kind, env, config, seed, threshold, keep = args
    pt = _measure(env, config, seed, keep)
    if kind == "fd4":
        pt.trigger = strong_coupling_reason(pt.fit, pt.series, config, threshold)
    return pt


def _map(jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_job(j) for j in jobs]


def run_sweep(env: Environment, freqs_hz, fd4: ProtocolConfig, cd8: ProtocolConfig | None = None, seed=None,
              workers=1, threshold=STRONG_COUPLING_RATE, z_eq_fn=None, keep_records=False):
    """Measure every frequency, switching to CD-8 around strongly coupled TLS.

    Every point is first measured with FD-4.  A point is re-measured with
    CD-8 when its own FD-4 data trigger (:func:`strong_coupling_reason`).
    Deep inside a strong resonance the resets can saturate the TLS so
    quickly that FD-4 sees almost no excess relaxation, so the CD-8 region
    is also grown outwards: a neighbour of a CD-8 point is measured with
    CD-8 and keeps that result whenever the CD-8 Gamma_Sigma exceeds
    ``threshold`` by more than one standard error.

    ``z_eq_fn(freq_hz)`` optionally sets the qubit equilibrium polarization
    at each frequency.  Each point draws from its own child of ``seed``, so
    results do not depend on ``workers`` or on the order of measurement.
    With ``keep_records`` every point keeps the records it was measured
    with, the one its rates come from last.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    n = len(freqs_hz)
    seeds = [_point_seeds(s) for s in _seed_sequence(seed).spawn(n)]
    envs = [env.tuned(float(f), None if z_eq_fn is None else z_eq_fn(float(f))) for f in freqs_hz]
    points = _map([("fd4", envs[i], fd4, seeds[i][0], threshold, keep_records) for i in range(n)], workers)
    if cd8 is None:
        return points

    order = np.argsort(freqs_hz)
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    tried = set()
    batch = [i for i in range(n) if points[i].trigger]
    forced = set(batch)
    while batch:
        tried.update(batch)
        results = _map([("cd8", envs[i], cd8, seeds[i][1], threshold, keep_records) for i in batch], workers)
        grow = []
        for i, pt in zip(batch, results):
            if i in forced or pt.fit.gamma_sigma - pt.fit.gamma_sigma_sigma > threshold:
                pt.trigger = points[i].trigger or "neighbour"
                pt.fd4_fit = points[i].fit
                pt.records = points[i].records + pt.records
                points[i] = pt
                for r in (rank[i] - 1, rank[i] + 1):
                    if 0 <= r < n and order[r] not in tried:
                        grow.append(int(order[r]))
        batch = sorted(set(grow))
    return points


def build_dataset(points) -> SpectrumDataset:
    """Collect the constrained-fit rates of every point into a dataset.

    Points whose bath dynamics are unresolved contribute their static-bath
    Gamma_Sigma and are flagged ``static``.
    """
    def col(fn):
        return np.array([fn(p) for p in points], dtype=float)

    static = np.array([p.fit.degenerate for p in points], dtype=bool)
    return SpectrumDataset(
        omega_q_hz=col(lambda p: p.omega_q_hz),
        gamma_sigma=np.where(static, col(lambda p: p.fit.gamma_sigma_static), col(lambda p: p.fit.gamma_sigma)),
        gamma_sigma_err=np.where(static, col(lambda p: p.fit.gamma_sigma_static_sigma),
                                 col(lambda p: p.fit.gamma_sigma_sigma)),
        gamma_deltadelta=col(lambda p: p.fit.gamma_deltadelta),
        gamma_deltadelta_err=col(lambda p: p.fit.gamma_deltadelta_sigma),
        zbar_h=col(lambda p: p.zbar_h),
        zbar_l=col(lambda p: p.zbar_l),
        eta=col(lambda p: p.eta),
        epsilon=col(lambda p: p.epsilon),
        gamma_qt_eff=col(lambda p: p.gamma_qt_eff),
        protocol=np.array([p.protocol for p in points]),
        static=static,
        reset_contrast=col(lambda p: p.reset_contrast),
        half_length_s=col(lambda p: p.half_length),
    )


def origin_slope(x, y, x_err=None, y_err=None):
    """Slope of ``y = k x`` through the origin, weighted by the combined error.

    Returns ``(k, k_err)``; uses effective-variance weights so that both
    axes' uncertainties count.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = np.zeros_like(x) if x_err is None else np.asarray(x_err, dtype=float)
    sy = np.ones_like(y) if y_err is None else np.asarray(y_err, dtype=float)
    k = float(np.sum(x * y) / np.sum(x * x))
    for _ in range(50):
        w = 1.0 / (sy**2 + (k * sx) ** 2)
        k_new = float(np.sum(w * x * y) / np.sum(w * x * x))
        if abs(k_new - k) < 1e-12 * abs(k):
            k = k_new
            break
        k = k_new
    w = 1.0 / (sy**2 + (k * sx) ** 2)
    return k, float(1.0 / np.sqrt(np.sum(w * x * x)))


def narrow_line_windows(fit: SpectrumFit, freqs_hz, step_hz=0.1e6, half_span_hz=1.0e6):
    """Extra frequencies around fitted lines that the sweep grid undersamples.

    A line is undersampled when fewer than three sweep points fall within
    its fitted linewidth; on such a line only ``g**2 * gamma2`` is
    constrained by the data.  Returns the new frequencies (not already in
    ``freqs_hz``) on a ``step_hz`` grid within ``half_span_hz`` of each
    such line.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    extra = []
    for line in fit.tls:
        inside = np.count_nonzero(np.abs(freqs_hz - line.freq_hz) <= line.gamma2_hz)
        if inside >= 3:
            continue
        n = int(round(half_span_hz / step_hz))
        grid = np.round(line.freq_hz / step_hz) * step_hz + step_hz * np.arange(-n, n + 1)
        extra.extend(grid)
    extra = np.unique(np.round(np.asarray(extra, dtype=float), 3))
    if len(extra) == 0:
        return extra
    gap = np.min(np.abs(extra[:, None] - freqs_hz[None, :]), axis=1)
    return extra[gap > 0.25 * step_hz]


@dataclass
class SweepResult:
    points: list
    dataset: SpectrumDataset
    fit: SpectrumFit
    refined_hz: np.ndarray = field(default_factory=lambda: np.zeros(0))


def spectroscopy(env: Environment, freqs_hz, fd4: ProtocolConfig, cd8: ProtocolConfig | None = None,
                 seed=None, workers=1, refine=True, z_eq_fn=None, threshold=STRONG_COUPLING_RATE):
    """Sweep, fit the spectra, and re-scan undersampled lines on a finer grid.

    With ``refine`` the frequencies from :func:`narrow_line_windows` are
    measured with the same protocols (their own seed stream) and the
    spectra are refitted from the combined points.
    """
    main_seed, fine_seed = _seed_sequence(seed).spawn(2)
    points = run_sweep(env, freqs_hz, fd4, cd8, seed=main_seed, workers=workers,
                       threshold=threshold, z_eq_fn=z_eq_fn)
    data = build_dataset(points)
    fit = fit_spectrum(data)
    extra = narrow_line_windows(fit, freqs_hz) if refine else np.zeros(0)
    if len(extra):
        points = points + run_sweep(env, extra, fd4, cd8, seed=fine_seed, workers=workers,
                                    threshold=threshold, z_eq_fn=z_eq_fn)
        points.sort(key=lambda p: p.omega_q_hz)
        data = build_dataset(points)
        fit = fit_spectrum(data)
    return SweepResult(points, data, fit, extra)
