"""Scalar time-stepping kernels (numba-compiled when available).

Parameters are packed in a flat float array so the kernels stay
nopython-compatible::

    [E_H, R_H, L, C_H, E_L, R_L, C_L, alpha, beta_H, beta_L]

Trace rows written by ``closed_loop`` have the columns of ``TRACE_COLUMNS``.
"""
import math

import numpy as np

from ._jit import jit

TRACE_COLUMNS = ("t", "x1", "x2", "x3", "u", "sigma", "k", "Ig", "mode", "IOL", "Ig_filt")

STATUS_DONE = 0
STATUS_EVENT = 1
STATUS_NONFINITE = 2

LAW_CURRENT = 0
LAW_VOLTAGE = 1
LAW_GENERATOR = 2


def pack_params(p, d):
    return np.array(
        [p.E_H, p.R_H, p.L, p.C_H, p.E_L, p.R_L, p.C_L, d.alpha, d.beta_H, d.beta_L],
        dtype=np.float64,
    )


@jit
def rk4_step(x1, x2, x3, u, h, prm):
    L = prm[2]
    CH = prm[3]
    CL = prm[6]
    RLCL = prm[5] * CL
    al = prm[7]
    bH = prm[8]
    bL = prm[9]

    a1 = (-x3 + x2 * u) / L
    a2 = -al * x2 - x1 * u / CH + bH
    a3 = x1 / CL - x3 / RLCL + bL

    y1 = x1 + 0.5 * h * a1
    y2 = x2 + 0.5 * h * a2
    y3 = x3 + 0.5 * h * a3
    b1 = (-y3 + y2 * u) / L
    b2 = -al * y2 - y1 * u / CH + bH
    b3 = y1 / CL - y3 / RLCL + bL

    y1 = x1 + 0.5 * h * b1
    y2 = x2 + 0.5 * h * b2
    y3 = x3 + 0.5 * h * b3
    c1 = (-y3 + y2 * u) / L
    c2 = -al * y2 - y1 * u / CH + bH
    c3 = y1 / CL - y3 / RLCL + bL

    y1 = x1 + h * c1
    y2 = x2 + h * c2
    y3 = x3 + h * c3
    d1 = (-y3 + y2 * u) / L
    d2 = -al * y2 - y1 * u / CH + bH
    d3 = y1 / CL - y3 / RLCL + bL

    s = h / 6.0
    return (
        x1 + s * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
        x2 + s * (a2 + 2.0 * b2 + 2.0 * c2 + d2),
        x3 + s * (a3 + 2.0 * b3 + 2.0 * c3 + d3),
    )


@jit
def integrate_fixed_u(x, u, h, n_steps, prm):
    """Advance ``x`` (3,) in place by ``n_steps`` RK4 steps with constant ``u``."""
    x1 = x[0]
    x2 = x[1]
    x3 = x[2]
    for _ in range(n_steps):
        x1, x2, x3 = rk4_step(x1, x2, x3, u, h, prm)
    x[0] = x1
    x[1] = x2
    x[2] = x3
    ok = math.isfinite(x1) and math.isfinite(x2) and math.isfinite(x3)
    return ok


@jit
def closed_loop(x, aux, n0, n1, resume, nsub, dt_c, prm,
                law, target, gain, k_max, hi, lo, filt_a,
                stride, mode, iol, rec):
    """Sample-and-hold relay loop over control samples ``n0 <= n < n1``.

    ``x`` (3,) and ``aux = [k, Ig_filt]`` are updated in place. Each sample:
    filter the generator current, return early if the filtered value
    leaves ``[lo, hi]``, evaluate the relay and the gain rate, record a
    row every ``stride`` samples, integrate ``nsub`` RK4 substeps, then
    take the saturated Euler step on ``k``.

    With ``resume`` set, sample ``n0`` was already measured and decided by
    the caller, so neither the filter update nor the band check is repeated.

    Returns ``(status, n)`` where ``n`` is the first unprocessed sample.
    """
    E_H = prm[0]
    R_H = prm[1]
    h = dt_c / nsub
    x1 = x[0]
    x2 = x[1]
    x3 = x[2]
    k = aux[0]
    igf = aux[1]
    n = n0
    first = resume
    while n < n1:
        ig = (E_H - x2) / R_H
        if not first:
            igf = igf + filt_a * (ig - igf)
            if igf > hi or igf < lo:
                x[0] = x1
                x[1] = x2
                x[2] = x3
                aux[0] = k
                aux[1] = igf
                return STATUS_EVENT, n
        first = False

        s = k * x2 - x1
        u = 1.0 if s > 0.0 else 0.0
        if law == LAW_CURRENT:
            kd = gain * (target - x1)
        elif law == LAW_VOLTAGE:
            kd = gain * (x2 - target)
        else:
            kd = gain * (target - ig)

        if n % stride == 0:
            r = n // stride
            rec[r, 0] = n * dt_c
            rec[r, 1] = x1
            rec[r, 2] = x2
            rec[r, 3] = x3
            rec[r, 4] = u
            rec[r, 5] = s
            rec[r, 6] = k
            rec[r, 7] = ig
            rec[r, 8] = mode
            rec[r, 9] = iol
            rec[r, 10] = igf

        for _ in range(nsub):
            x1, x2, x3 = rk4_step(x1, x2, x3, u, h, prm)
        if not (math.isfinite(x1) and math.isfinite(x2) and math.isfinite(x3)):
            x[0] = x1
            x[1] = x2
            x[2] = x3
            aux[0] = k
            aux[1] = igf
            return STATUS_NONFINITE, n

        k = k + dt_c * kd
        if k > k_max:
            k = k_max
        elif k < -k_max:
            k = -k_max
        n += 1

    x[0] = x1
    x[1] = x2
    x[2] = x3
    aux[0] = k
    aux[1] = igf
    return STATUS_DONE, n
