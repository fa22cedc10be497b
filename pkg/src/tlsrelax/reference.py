"""Reference TLS environment of a low-frequency fluxonium.

Ten discrete TLS between 200 and 400 MHz plus a 1.8 ms background T1.
Intrinsic decay rates are only known as intervals; the point values used
for simulation sit at the interval centres.
"""

import numpy as np

from .model import Environment, QubitParams, TlsParams, thermal_polarization

BACKGROUND_T1_S = 1.8e-3
GAMMA_Q = 1.0 / BACKGROUND_T1_S
EFFECTIVE_TEMPERATURE_K = 0.027

# frequency (MHz), g/2pi (kHz), Gamma_2/2pi (MHz), Gamma_t interval (ms^-1)
TLS_TABLE = (
    (204.9, 50.0, 1.7, (0.6, 1.5)),
    (220.5, 57.0, 1.7, (0.8, 2.0)),
    (240.3, 57.0, 1.7, (0.1, 1.1)),
    (265.4, 70.0, 2.0, (0.0, 0.1)),
    (278.0, 75.0, 2.1, (1.8, 4.2)),
    (297.8, 32.0, 5.3, (5.0, 20.0)),   # quoted as "around 10"
    (305.4, 18.0, 0.2, (1.1, 3.6)),
    (326.2, 30.0, 3.4, (0.0, 0.1)),
    (349.1, 66.0, 2.0, (1.2, 2.2)),
    (361.0, 28.0, 2.4, (0.0, 0.1)),
)

# quoted 1-sigma uncertainties on frequency (MHz), g (kHz), Gamma_2 (MHz)
TLS_UNCERTAINTY = (
    (0.2, 2.0, 0.2), (0.2, 3.0, 0.3), (0.3, 3.0, 0.2), (0.3, 5.0, 0.4), (0.2, 3.0, 0.3),
    (1.1, 5.0, 2.0), (0.2, 12.0, 0.2), (1.0, 4.0, 1.3), (0.1, 2.0, 0.2), (0.3, 2.0, 0.5),
)

SWEEP_START_HZ = 200e6
SWEEP_STOP_HZ = 400e6
SWEEP_STEP_HZ = 1e6


def gamma_t_intervals():
    """Intrinsic decay-rate intervals in s^-1, shape (10, 2)."""
    return np.array([iv for *_, iv in TLS_TABLE], dtype=float) * 1e3


def gamma_t_centres():
    iv = gamma_t_intervals()
    centres = iv.mean(axis=1)
    # the "around 10" entry is centred on its quoted value, not the bracket midpoint
    centres[5] = 1.0e4
    return centres


def reference_tls(temperature_k=EFFECTIVE_TEMPERATURE_K, gamma_t=None):
    """TLS list with each equilibrium polarization thermal at its own frequency."""
    if gamma_t is None:
        gamma_t = gamma_t_centres()
    out = []
    for (f_mhz, g_khz, g2_mhz, _), gt in zip(TLS_TABLE, gamma_t):
        f = f_mhz * 1e6
        out.append(TlsParams(f, g_khz * 1e3, g2_mhz * 1e6, float(gt), thermal_polarization(f, temperature_k)))
    return tuple(out)


def reference_environment(qubit_freq_hz=SWEEP_START_HZ, temperature_k=EFFECTIVE_TEMPERATURE_K, gamma_t=None):
    z_eq = thermal_polarization(qubit_freq_hz, temperature_k)
    return Environment(QubitParams(GAMMA_Q, z_eq), reference_tls(temperature_k, gamma_t), qubit_freq_hz)


def sweep_frequencies(start_hz=SWEEP_START_HZ, stop_hz=SWEEP_STOP_HZ, step_hz=SWEEP_STEP_HZ):
    n = int(round((stop_hz - start_hz) / step_hz)) + 1
    return start_hz + step_hz * np.arange(n)
