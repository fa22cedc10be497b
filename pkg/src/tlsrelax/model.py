"""Solomon rate model of a qubit exchanging polarization with discrete TLS.

All public frequencies, couplings and linewidths are in Hz (ordinary
frequency, i.e. ``omega / 2pi``); all rates are in s^-1.  The only place
where angular units appear is :func:`gamma_qt`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.constants import h as PLANCK, k as BOLTZMANN
from scipy.linalg import expm

TWO_PI = 2.0 * np.pi


def _check_polarization(value, name):
    if not np.isfinite(value) or abs(value) > 1.0 + 1e-12:
        raise ValueError(f"{name} must lie in [-1, 1], got {value!r}")


@dataclass(frozen=True)
class QubitParams:
    """Background relaxation of the qubit.

    ``gamma_q`` is the Markovian background decay rate (s^-1) and ``z_eq``
    the polarization the qubit relaxes to through that channel.
    """

    gamma_q: float
    z_eq: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.gamma_q) or self.gamma_q < 0:
            raise ValueError(f"gamma_q must be finite and >= 0, got {self.gamma_q!r}")
        _check_polarization(self.z_eq, "z_eq")


@dataclass(frozen=True)
class TlsParams:
    """One discrete two-level system.

    Attributes
    ----------
    freq_hz : float
        TLS transition frequency in Hz.
    g_hz : float
        Flip-flop coupling to the qubit, g/2pi in Hz.
    gamma2_hz : float
        Combined qubit-TLS dephasing linewidth, Gamma_2/2pi in Hz.
    gamma_t : float
        Intrinsic TLS decay rate in s^-1.
    p_eq : float
        Equilibrium polarization of the TLS.
    """

    freq_hz: float
    g_hz: float
    gamma2_hz: float
    gamma_t: float
    p_eq: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.freq_hz) and self.freq_hz > 0):
            raise ValueError(f"freq_hz must be > 0, got {self.freq_hz!r}")
        if not (np.isfinite(self.g_hz) and self.g_hz >= 0):
            raise ValueError(f"g_hz must be >= 0, got {self.g_hz!r}")
        if not (np.isfinite(self.gamma2_hz) and self.gamma2_hz > 0):
            raise ValueError(f"gamma2_hz must be > 0, got {self.gamma2_hz!r}")
        if not (np.isfinite(self.gamma_t) and self.gamma_t >= 0):
            raise ValueError(f"gamma_t must be >= 0, got {self.gamma_t!r}")
        _check_polarization(self.p_eq, "p_eq")

    @classmethod
    def from_exchange_rate(cls, rate, freq_hz=1.0e8, gamma2_hz=1.0e6, gamma_t=0.0, p_eq=0.0):
        """TLS whose on-resonance exchange rate equals ``rate`` (s^-1)."""
        g_hz = math.sqrt(rate * gamma2_hz / (2.0 * TWO_PI))
        return cls(freq_hz, g_hz, gamma2_hz, gamma_t, p_eq)

    def exchange_rate(self, qubit_freq_hz):
        return gamma_qt(self.g_hz, self.gamma2_hz, qubit_freq_hz - self.freq_hz)


@dataclass(frozen=True)
class TransitionRates:
    gamma_up: float
    gamma_down: float

    def __post_init__(self):
        if self.gamma_up < 0 or self.gamma_down < 0:
            raise ValueError("transition rates must be >= 0")

    @property
    def gamma_sigma(self):
        return self.gamma_up + self.gamma_down

    @property
    def gamma_delta(self):
        return self.gamma_down - self.gamma_up

    @classmethod
    def from_sigma_delta(cls, gamma_sigma, gamma_delta):
        return cls(gamma_up=0.5 * (gamma_sigma - gamma_delta),
                   gamma_down=0.5 * (gamma_sigma + gamma_delta))


@dataclass(frozen=True)
class SystemState:
    """Qubit polarization ``z`` and the ordered TLS polarizations ``p``."""

    z: float
    p: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))

    def as_vector(self):
        return np.array((self.z,) + self.p, dtype=float)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(float(vec[0]), tuple(vec[1:]))

    def check_bounds(self, tol=1e-12):
        _check_polarization(self.z if abs(self.z) <= 1 + tol else self.z, "z")
        for k, pk in enumerate(self.p):
            if abs(pk) > 1 + tol:
                raise ValueError(f"p[{k}] outside [-1, 1]: {pk}")


@dataclass(frozen=True)
class Environment:
    """A qubit plus its discrete TLS bath at a given qubit frequency.

    ``qubit_freq_hz`` fixes the detunings that enter the exchange rates. It
    may be left unset only for an empty TLS list.
    """

    qubit: QubitParams
    tls: tuple = ()
    qubit_freq_hz: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tls", tuple(self.tls))
        if self.tls and self.qubit_freq_hz is None:
            raise ValueError("qubit_freq_hz is required when TLS are present")

    @property
    def n_tls(self):
        return len(self.tls)

    def tuned(self, qubit_freq_hz, z_eq=None):
        """Copy of the environment with the qubit parked at another frequency."""
        qubit = self.qubit if z_eq is None else replace(self.qubit, z_eq=z_eq)
        return replace(self, qubit=qubit, qubit_freq_hz=qubit_freq_hz)

    def exchange_rates(self):
        if not self.tls:
            return np.zeros(0)
        return np.array([t.exchange_rate(self.qubit_freq_hz) for t in self.tls])

    def gamma_t(self):
        return np.array([t.gamma_t for t in self.tls], dtype=float)

    def p_eq(self):
        return np.array([t.p_eq for t in self.tls], dtype=float)

    def equilibrium_state(self):
        return SystemState(self.qubit.z_eq, tuple(self.p_eq()))

    @classmethod
    def from_rates(cls, gamma_q, z_eq, gamma_qt_list=(), gamma_t_list=(), p_eq_list=None,
                   freq_hz=1.0e8, gamma2_hz=1.0e6):
        """Environment with every TLS on resonance at the given exchange rates."""
        if p_eq_list is None:
            p_eq_list = [z_eq] * len(gamma_qt_list)
        tls = [TlsParams.from_exchange_rate(r, freq_hz, gamma2_hz, gt, pe)
               for r, gt, pe in zip(gamma_qt_list, gamma_t_list, p_eq_list)]
        return cls(QubitParams(gamma_q, z_eq), tuple(tls), freq_hz if tls else None)


def gamma_qt(g_hz, gamma2_hz, detuning_hz):
    """Incoherent qubit-TLS energy exchange rate in s^-1.

    Lorentzian ``2 g^2 G2 / (G2^2 + D^2)`` with every argument converted to
    angular units. Accepts scalars or broadcastable arrays.
    """
    g = np.asarray(g_hz, dtype=float)
    g2 = np.asarray(gamma2_hz, dtype=float)
    d = np.asarray(detuning_hz, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(g2)) and np.all(np.isfinite(d))):
        raise ValueError("gamma_qt inputs must be finite")
    if np.any(g < 0) or np.any(g2 <= 0):
        raise ValueError("gamma_qt needs g_hz >= 0 and gamma2_hz > 0")
    out = TWO_PI * 2.0 * g**2 * g2 / (g2**2 + d**2)
    return float(out) if out.ndim == 0 else out


def equilibrium_z(rates: TransitionRates):
    if rates.gamma_sigma <= 0:
        raise ZeroDivisionError("equilibrium undefined when both transition rates vanish")
    return -rates.gamma_delta / rates.gamma_sigma


def thermal_polarization(freq_hz, temperature_k):
    """Thermal <sigma_z> of a two-level system (ground state is -1)."""
    if temperature_k <= 0:
        return -1.0
    return -math.tanh(PLANCK * freq_hz / (2.0 * BOLTZMANN * temperature_k))


def _coupling_rates(env, interaction_on, gamma_qt_eff):
    if interaction_on:
        return env.exchange_rates()
    return np.full(env.n_tls, float(gamma_qt_eff))


def _check_dims(state, env):
    if len(state.p) != env.n_tls:
        raise ValueError(f"state has {len(state.p)} TLS polarizations, environment has {env.n_tls}")


def solomon_derivative(state: SystemState, env: Environment, interaction_on=True, gamma_qt_eff=0.0):
    """Time derivative of every polarization under the Solomon equations."""
    _check_dims(state, env)
    gqt = _coupling_rates(env, interaction_on, gamma_qt_eff)
    p = np.asarray(state.p, dtype=float)
    z = state.z
    dz = -env.qubit.gamma_q * (z - env.qubit.z_eq) - np.sum(gqt * (z - p))
    dp = -env.gamma_t() * (p - env.p_eq()) - gqt * (p - z)
    return SystemState(float(dz), tuple(dp))


def rate_matrix(env: Environment, interaction_on=True, gamma_qt_eff=0.0):
    """Return ``(M, c)`` such that ``ds/dt = M s + c`` for ``s = (Z, p_1..p_N)``."""
    gqt = _coupling_rates(env, interaction_on, gamma_qt_eff)
    gt = env.gamma_t()
    n = env.n_tls + 1
    m = np.zeros((n, n))
    m[0, 0] = -env.qubit.gamma_q - gqt.sum()
    m[0, 1:] = gqt
    m[1:, 0] = gqt
    m[1:, 1:] = np.diag(-gt - gqt)
    c = np.concatenate(([env.qubit.gamma_q * env.qubit.z_eq], gt * env.p_eq()))
    return m, c


def affine_generator(m, c):
    """Homogeneous generator of the affine system acting on ``(s, 1)``."""
    n = len(c)
    gen = np.zeros((n + 1, n + 1))
    gen[:n, :n] = m
    gen[:n, n] = c
    return gen


def affine_propagator(env: Environment, dt, interaction_on=True, gamma_qt_eff=0.0):
    """Exact map ``s(dt) = A s(0) + b`` of the Solomon system."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    m, c = rate_matrix(env, interaction_on, gamma_qt_eff)
    n = len(c)
    if dt == 0:
        return np.eye(n), np.zeros(n)
    full = expm(affine_generator(m, c) * dt)
    return full[:n, :n], full[:n, n]


def propagate(state: SystemState, env: Environment, dt, interaction_on=True, gamma_qt_eff=0.0):
    """Exact solution of the Solomon equations after ``dt`` seconds."""
    _check_dims(state, env)
    if dt == 0:
        return state
    a, b = affine_propagator(env, dt, interaction_on, gamma_qt_eff)
    return SystemState.from_vector(a @ state.as_vector() + b)


def fixed_point(env: Environment, interaction_on=True, gamma_qt_eff=0.0):
    """State at which every derivative vanishes (long-time limit of propagate)."""
    m, c = rate_matrix(env, interaction_on, gamma_qt_eff)
    try:
        sol = np.linalg.solve(m, -c)
    except np.linalg.LinAlgError as exc:
        raise ValueError("rate matrix is singular; the fixed point depends on the initial state") from exc
    return SystemState.from_vector(sol)


def instantaneous_rates(state: SystemState, env: Environment):
    """Qubit ``(gamma_sigma, gamma_delta)`` implied by the current TLS polarizations."""
    _check_dims(state, env)
    gqt = env.exchange_rates()
    gs = env.qubit.gamma_q + gqt.sum()
    gd = -env.qubit.gamma_q * env.qubit.z_eq - np.sum(gqt * np.asarray(state.p))
    return float(gs), float(gd)


def tls_steady_state(tls: TlsParams, gamma_qt_rate, z_held):
    """Polarization a TLS settles to while the qubit is held at ``z_held``."""
    denom = tls.gamma_t + gamma_qt_rate
    if denom <= 0:
        raise ZeroDivisionError("TLS steady state undefined with Gamma_t = Gamma_qt = 0")
    return (tls.gamma_t * tls.p_eq + gamma_qt_rate * z_held) / denom


def _check_duty(eta, epsilon):
    eta = np.asarray(eta, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    if np.any(eta <= 0) or np.any(eta > 1) or np.any(epsilon < 0) or np.any(epsilon >= 1):
        raise ValueError("need eta in (0, 1] and epsilon in [0, 1)")
    if np.any(eta + epsilon > 1 + 1e-12):
        raise ValueError("eta + epsilon must not exceed 1")


def tls_polarizability(tls: TlsParams, gamma_qt_rate, eta, epsilon, gamma_qt_eff, zbar_h, zbar_l):
    """Swing of the TLS polarization between the protocol's H and L steady states."""
    _check_duty(eta, epsilon)
    denom = tls.gamma_t + gamma_qt_rate * eta + gamma_qt_eff * epsilon
    if np.any(np.asarray(denom) <= 0):
        raise ZeroDivisionError("polarizability denominator is zero")
    return gamma_qt_rate * eta / denom * (zbar_h - zbar_l)


@dataclass(frozen=True)
class ProtocolFactors:
    """Duty-cycle factors and average qubit polarizations of a polarizing protocol.

    Every field may be a scalar or an array matching the frequency grid.
    """

    eta: object
    epsilon: object = 0.0
    gamma_qt_eff: object = 0.0
    zbar_h: object = 1.0
    zbar_l: object = -1.0


def gamma_sigma_model(omega_q_hz, env: Environment):
    """Gamma_Sigma spectrum: background plus one Lorentzian per TLS."""
    w = np.asarray(omega_q_hz, dtype=float)
    total = np.full(w.shape, env.qubit.gamma_q, dtype=float)
    for t in env.tls:
        total = total + gamma_qt(t.g_hz, t.gamma2_hz, w - t.freq_hz)
    return float(total) if total.ndim == 0 else total


def gamma_deltadelta_model(omega_q_hz, env: Environment, factors: ProtocolFactors):
    """Polarizable part of Gamma_delta, summed over TLS."""
    _check_duty(factors.eta, factors.epsilon)
    w = np.asarray(omega_q_hz, dtype=float)
    contrast = np.asarray(factors.zbar_h, dtype=float) - np.asarray(factors.zbar_l, dtype=float)
    total = np.zeros(w.shape)
    for t in env.tls:
        r = gamma_qt(t.g_hz, t.gamma2_hz, w - t.freq_hz)
        denom = t.gamma_t + r * factors.eta + factors.gamma_qt_eff * factors.epsilon
        total = total + np.where(denom > 0, r**2 * factors.eta / np.where(denom > 0, denom, 1.0), 0.0)
    total = total * contrast
    return float(total) if total.ndim == 0 else total
