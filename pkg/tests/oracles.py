"""Reference implementations that share no code with the package.

The Solomon right-hand side is written out term by term and integrated
with adaptive Runge-Kutta schemes: implicit Radau IIA for single systems
and a batched explicit Dormand-Prince 5(4) for large ensembles.  Neither
uses a matrix exponential.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp


def exchange_rate(g_hz, gamma2_hz, detuning_hz):
    g = 2 * math.pi * g_hz
    w = 2 * math.pi * gamma2_hz
    d = 2 * math.pi * detuning_hz
    return 2 * g * g * w / (w * w + d * d)


def solomon_rhs(gamma_q, z_eq, rates, gamma_t, p_eq):
    """Right-hand side of the qubit plus TLS polarization equations."""
    rates = list(rates)
    gamma_t = list(gamma_t)
    p_eq = list(p_eq)

    def rhs(_, y):
        z = y[0]
        out = np.empty_like(y)
        dz = -gamma_q * (z - z_eq)
        for k, r in enumerate(rates):
            p = y[k + 1]
            dz -= r * (z - p)
            out[k + 1] = -gamma_t[k] * (p - p_eq[k]) - r * (p - z)
        out[0] = dz
        return out

    def jac(_, y):
        n = len(rates) + 1
        j = np.zeros((n, n))
        j[0, 0] = -gamma_q - sum(rates)
        for k, r in enumerate(rates):
            j[0, k + 1] = r
            j[k + 1, 0] = r
            j[k + 1, k + 1] = -gamma_t[k] - r
        return j

    return rhs, jac


def integrate(y0, dt, gamma_q, z_eq, rates, gamma_t, p_eq, rtol=1e-13, atol=1e-16):
    rhs, jac = solomon_rhs(gamma_q, z_eq, rates, gamma_t, p_eq)
    if dt == 0:
        return np.asarray(y0, dtype=float)
    sol = solve_ivp(rhs, (0.0, dt), np.asarray(y0, dtype=float), method="Radau", jac=jac,
                    rtol=rtol, atol=atol)
    assert sol.success, sol.message
    return sol.y[:, -1]


def double_exponential_rates(gamma_q, gamma_qt, gamma_t):
    """Eigen-rates of the two-body relaxation matrix, fast first, in closed form."""
    a = gamma_q + gamma_qt
    d = gamma_t + gamma_qt
    mean = 0.5 * (a + d)
    root = math.sqrt(0.25 * (a - d) ** 2 + gamma_qt**2)
    return mean + root, mean - root


# Dormand-Prince 5(4) tableau
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def batch_dopri(mats, consts, y0, t_end, rtol=1e-12, atol=1e-15, max_steps=2_000_000):
    """Integrate many systems ``y' = M y + c`` at once with adaptive Dormand-Prince 5(4).

    ``mats`` (B, n, n), ``consts`` and ``y0`` (B, n), ``t_end`` (B,).
    Each system keeps its own step size and error control.
    """
    mats = np.asarray(mats, dtype=float)
    consts = np.asarray(consts, dtype=float)
    y = np.array(y0, dtype=float)
    t_end = np.asarray(t_end, dtype=float)
    t = np.zeros_like(t_end)
    rate = np.abs(mats).sum(axis=2).max(axis=1) + 1.0
    h = np.minimum(1e-3 / rate, t_end)

    def f(yy, idx):
        return np.einsum("bij,bj->bi", mats[idx], yy) + consts[idx]

    for _ in range(max_steps):
        active = np.nonzero(t < t_end * (1 - 1e-15))[0]
        if len(active) == 0:
            return y
        hh = np.minimum(h[active], t_end[active] - t[active])[:, None]
        ya = y[active]
        k = [f(ya, active)]
        for stage in range(1, 7):
            inc = sum(a * kk for a, kk in zip(_A[stage], k))
            k.append(f(ya + hh * inc, active))
        y5 = ya + hh * sum(b * kk for b, kk in zip(_B5, k))
        err = hh * sum((b5 - b4) * kk for b5, b4, kk in zip(_B5, _B4, k))
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y5))
        norm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        ok = norm <= 1.0
        acc = active[ok]
        y[acc] = y5[ok]
        t[acc] += hh[ok, 0]
        factor = np.clip(0.9 * np.where(norm > 0, norm, 1e-10) ** -0.2, 0.2, 5.0)
        h[active] = hh[:, 0] * factor
    raise RuntimeError("batch_dopri exceeded max_steps")
