"""Readout-phase algebra: populations to resonator phase and back.

Each qubit level ``g, e, f`` maps to its own transmitted resonator phase,
and a readout returns the population-weighted mean phase.  Perfect pi
pulses before the readout swap the populations of two levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

# pulse sequences played before the four calibration readouts, in time order
SEQUENCES = ((), ("ef",), ("ge",), ("ge", "ef"))


@dataclass(frozen=True)
class PhaseModel:
    """Transmitted resonator phase (rad) for each qubit level."""

    phi_g: float
    phi_e: float
    phi_f: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.phi_g, self.phi_e, self.phi_f])):
            raise ValueError("phases must be finite")
        if self.phi_e == self.phi_g:
            raise ValueError("phi_e must differ from phi_g")

    @property
    def contrast(self):
        return self.phi_e - self.phi_g

    def as_array(self):
        return np.array([self.phi_g, self.phi_e, self.phi_f])


@dataclass(frozen=True)
class Populations3:
    p_g: float
    p_e: float
    p_f: float = 0.0

    def __post_init__(self):
        p = self.as_array()
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("populations must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("populations must sum to 1")

    def as_array(self):
        return np.array([self.p_g, self.p_e, self.p_f])

    @property
    def z(self):
        """Polarization within the g-e manifold, ``p_e - p_g``."""
        return self.p_e - self.p_g

    @classmethod
    def from_z(cls, z):
        return cls(0.5 * (1 - z), 0.5 * (1 + z), 0.0)


_SWAPS = {"ge": (1, 0, 2), "ef": (0, 2, 1)}


def apply_pulses(pop, pulses=()):
    """Population vector after perfect pi pulses, applied in order."""
    p = np.asarray(pop.as_array() if isinstance(pop, Populations3) else pop, dtype=float)
    for name in pulses:
        if name not in _SWAPS:
            raise ValueError(f"unknown pulse {name!r}; use 'ge' or 'ef'")
        p = p[list(_SWAPS[name])]
    return p


def readout_phase(pop: Populations3, model: PhaseModel, pulses=()):
    """Mean resonator phase of a readout preceded by ``pulses``."""
    return float(apply_pulses(pop, pulses) @ model.as_array())


def four_readouts(pop: Populations3, model: PhaseModel):
    """Readouts ``M1..M4``: nothing, pi_ef, pi_ge, pi_ge then pi_ef."""
    return np.array([readout_phase(pop, model, seq) for seq in SEQUENCES])


@dataclass
class PhaseCalibration:
    """Solved level phases plus populations ``(p_g, p_e, p_f)`` per delay.

    ``populations`` is an array of shape ``(n_delays, 3)``; with noisy data
    its entries may leave [0, 1] slightly.
    """

    model: PhaseModel
    populations: np.ndarray
    residual: float

    def population(self, i):
        return Populations3(*self.populations[i])

    @property
    def contrast(self):
        return self.model.contrast


def _mixing(p):
    """Rows of the population permutations for the four readouts, shape (4, 3)."""
    return np.array([apply_pulses(p, seq) for seq in SEQUENCES])


def _closed_form(m, last):
    """Phases and populations from the closure ``p_f = 0`` at delay ``last``."""
    m1, m2, m3, m4 = m[last]
    d_ef = (m1 - m2) + (m3 - m4)        # phi_e - phi_f when p_g + p_e = 1
    if abs(d_ef) < 1e-14 * max(np.max(np.abs(m)), 1.0):
        raise ValueError("rank-deficient calibration: phi_e and phi_f cannot be separated")
    p_e = (m1 - m2) / d_ef
    p_g = (m3 - m4) / d_ef
    if abs(p_e - p_g) < 1e-12:
        raise ValueError("rank-deficient calibration: p_e = p_g at the closure delay")
    d_eg = (m1 - m3) / (p_e - p_g)
    phi_g = m1 - p_e * d_eg
    phi = np.array([phi_g, phi_g + d_eg, phi_g + d_eg - d_ef])
    pops = []
    for row in m:
        # M = phi_g + p_e (phi_pi(e) - phi_g) + p_f (...): linear in (p_e, p_f) with p_g = 1 - p_e - p_f
        basis = np.array([_mixing(v) @ phi for v in np.eye(3)]).T      # columns: all population in g, e, f
        a = basis[:, 1:] - basis[:, [0]]
        coef, *_ = np.linalg.lstsq(a, row - basis[:, 0], rcond=None)
        pops.append(np.array([1.0 - coef.sum(), coef[0], coef[1]]))
    pops[last] = np.array([p_g, p_e, 0.0])
    return phi, np.array(pops)


def solve_phase_contrast(measurements, assume_pf_zero_at_last=True, last=-1):
    """Level phases and per-delay populations from four-readout data.

    Parameters
    ----------
    measurements : array_like, shape (n_delays, 4)
        ``M1..M4`` at each delay after the reset.
    assume_pf_zero_at_last : bool
        Close the system with ``p_f = 0`` at delay ``last``.  It has no
        solution without a closure, so ``False`` raises.
    last : int
        Index of the closure delay; the longest delay by default.

    The closed-form solution at the closure delay seeds a joint
    least-squares refinement over all delays.
    """
    m = np.asarray(measurements, dtype=float)
    if m.ndim != 2 or m.shape[1] != 4:
        raise ValueError("measurements must have shape (n_delays, 4)")
    if m.shape[0] < 2:
        raise ValueError("need at least 2 delays")
    if not np.all(np.isfinite(m)):
        raise ValueError("measurements must be finite")
    if not assume_pf_zero_at_last:
        raise ValueError("the four-readout system needs the p_f = 0 closure")
    n = m.shape[0]
    last = last % n
    phi0, pops0 = _closed_form(m, last)

    others = [i for i in range(n) if i != last]

    def unpack(x):
        phi = x[:3]
        pops = np.empty((n, 3))
        pops[others, 1:] = x[3:3 + 2 * len(others)].reshape(-1, 2)
        pops[last, 1:] = (x[-1], 0.0)
        pops[:, 0] = 1.0 - pops[:, 1] - pops[:, 2]
        return phi, pops

    def resid(x):
        phi, pops = unpack(x)
        return np.concatenate([_mixing(p) @ phi for p in pops]) - m.ravel()

    x0 = np.concatenate([phi0, pops0[others, 1:].ravel(), [pops0[last, 1]]])
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(resid(x0))) > 1e-13 * scale:
        x0 = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15).x
    phi, pops = unpack(x0)
    res = resid(x0)
    model = PhaseModel(*phi)
    return PhaseCalibration(model, pops, float(res @ res))


def phase_pair_to_z(m0, m_pi, contrast):
    """Polarization ``p_e - p_g`` from a readout pair with and without a pi_ge pulse.

    ``M0 - M_pi = (p_e - p_g)(phi_e - phi_g)`` holds when ``p_f = 0``.
    """
    contrast = np.asarray(contrast, dtype=float)
    if np.any(contrast == 0):
        raise ValueError("contrast must be nonzero")
    return (np.asarray(m0, dtype=float) - np.asarray(m_pi, dtype=float)) / contrast


def smooth_contrast(freq_hz, contrast, order=5):
    """Polynomial fit of contrast versus qubit frequency.

    Returns a callable evaluated in Hz.  The fit runs on a rescaled
    frequency axis, so high orders stay well conditioned.
    """
    freq_hz = np.asarray(freq_hz, dtype=float)
    contrast = np.asarray(contrast, dtype=float)
    if order < 0 or len(freq_hz) <= order:
        raise ValueError("need more points than the polynomial order")
    return np.polynomial.Polynomial.fit(freq_hz, contrast, order)
