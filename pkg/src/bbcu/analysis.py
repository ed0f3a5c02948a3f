"""Steady states, gain bounds, reaching rates and Routh-Hurwitz tools.

Everything here is closed-form and evaluated on immutable inputs. Two
operating modes are covered:

* Mode 1, inductor-current tracking, ``dk/dt = gamma1 (x1_ref - x1)``;
* Mode 2, HV-voltage (generator-current) regulation,
  ``dk/dt = gamma2 (x2 - x2_ref)`` with ``x2_ref = E_H - R_H I_OL``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import AdaptationLaw, ControllerState, LawKind
from .errors import DomainError, HypothesisError, InfeasibleError
from .plant import PlantParams, StateBox, derive, equilibrium

__all__ = [
    "ReducedSteadyState",
    "Theorem1Constants",
    "Theorem2Constants",
    "k_infinity_current",
    "k_infinity_voltage",
    "x2_reference_bound",
    "voltage_reference",
    "mode1_steady_state",
    "mode2_steady_state",
    "mode1_cylinder",
    "theorem1_constants",
    "reaching_rate",
    "reaching_time_bound",
    "max_sigma_over_box",
    "theorem2_constants",
    "mode2_dynamic_matrix",
    "mode2_char_poly",
    "routh_hurwitz_cubic",
    "cubic_roots",
    "is_hurwitz",
]


@dataclass(frozen=True)
class ReducedSteadyState:
    k_star: float
    x2_star: float
    x3_star: float

    @property
    def x1_star(self):
        return self.k_star * self.x2_star

    @property
    def center(self):
        return np.array([self.k_star, self.x2_star, self.x3_star])


def voltage_reference(I_OL, p: PlantParams) -> float:
    """HV voltage that corresponds to a generator current ``I_OL``."""
    return p.E_H - p.R_H * I_OL


def _mode1_disc(x1_ref, p):
    d = derive(p)
    x3 = p.R_L * x1_ref + p.E_L
    return p.E_H ** 2 - 4.0 * p.R_H ** 2 * p.C_H * x1_ref * x3 * d.alpha, x3


def k_infinity_current(x1_ref, p: PlantParams) -> float:
    """Steady gain of the current-tracking loop."""
    disc, x3 = _mode1_disc(x1_ref, p)
    if disc < 0:
        raise InfeasibleError(
            f"current reference {x1_ref!r} A is not reachable with R_D = {p.R_D!r}"
        )
    # E_H - sqrt(disc) cancels for small x1_ref; use the conjugate form
    num = 4.0 * p.R_H ** 2 * p.C_H * x1_ref * x3 * derive(p).alpha
    return num / ((p.E_H + math.sqrt(disc)) * 2.0 * p.R_H * x3)


def mode1_steady_state(x1_ref, p: PlantParams) -> ReducedSteadyState:
    disc, x3 = _mode1_disc(x1_ref, p)
    if disc < 0:
        raise InfeasibleError(f"current reference {x1_ref!r} A is not reachable")
    d = derive(p)
    x2 = (p.E_H / p.R_H + math.sqrt(disc) / p.R_H) / (2.0 * d.alpha * p.C_H)
    return ReducedSteadyState(x1_ref / x2, x2, x3)


def x2_reference_bound(p: PlantParams) -> float:
    """Largest admissible HV voltage reference for a given load."""
    r = p.R_D / (p.R_D + p.R_H)
    return 0.5 * r * p.E_H * (
        1.0 + math.sqrt(1.0 + (p.C_H / p.C_L) * (p.E_L / p.E_H) ** 2 / r)
    )


def _mode2_k(x2_ref, p):
    d = derive(p)
    disc = p.E_L ** 2 - 4.0 * p.R_L * x2_ref * (d.alpha * p.C_H * x2_ref - p.E_H / p.R_H)
    if disc < 0:
        raise InfeasibleError(f"voltage reference {x2_ref!r} V is not reachable")
    return (-p.E_L + math.sqrt(disc)) / (2.0 * p.R_L * x2_ref)


def k_infinity_voltage(x2_ref, p: PlantParams) -> float:
    """Steady gain of the voltage-regulation loop."""
    bound = x2_reference_bound(p)
    if not 0.0 < x2_ref < bound:
        raise InfeasibleError(
            f"voltage reference {x2_ref!r} V outside (0, {bound:.6g}) V"
        )
    return _mode2_k(x2_ref, p)


def mode2_steady_state(x2_ref, p: PlantParams) -> ReducedSteadyState:
    k = k_infinity_voltage(x2_ref, p)
    return ReducedSteadyState(k, x2_ref, p.E_L + p.R_L * k * x2_ref)


# --- Mode 1 -----------------------------------------------------------------

@dataclass(frozen=True)
class Theorem1Constants:
    psi1: float
    psi2: float
    psi3: float
    K_max: float
    K_max_bound: float
    gamma1: float
    gamma1_bound: float
    a_of_gamma1: float
    b_of_gamma1: float
    nu: float
    c: float
    omega: float
    cylinder_radius: float
    steady: ReducedSteadyState
    valid: bool
    failed: tuple = field(default_factory=tuple)


def _psi(box: StateBox, p: PlantParams):
    d = derive(p)
    hi = d.beta_H - d.alpha * box.X2_plus
    lo = -(d.beta_H - d.alpha * box.X2_minus)
    return min(hi, lo), min(box.X1_minus, -box.X1_plus), max(hi, lo)


def _k_max_bound(box, psi1, psi2, psi3, p):
    b1 = box.X3_minus / (p.L * abs(psi1)) if psi1 != 0 else math.inf
    den = p.L * (abs(psi2) / p.C_H + psi3)
    b2 = (box.X2_minus - box.X3_plus) / den if den > 0 else math.inf
    return min(b1, b2)


def _reaching_gain_bound(box, err_hi, err_lo, K_max, psi1, psi2, psi3, p):
    """Common shape of the adaptation-gain limits that keep the reaching law valid."""
    g1 = (box.X3_minus / p.L + K_max * psi1) / (err_hi * box.X2_plus) if err_hi > 0 else math.inf
    g2 = ((box.X2_minus - box.X3_plus) / p.L - K_max * (abs(psi2) / p.C_H + psi3)) / (
        err_lo * box.X2_plus) if err_lo > 0 else math.inf
    return min(g1, g2)


def mode1_cylinder(x1_ref, gamma1, p: PlantParams):
    """Steady state and guaranteed-convergence radius of the current loop.

    Returns ``(steady, a, b, nu, radius)``; translated states with
    ``|z| < radius`` converge to ``steady``. ``radius`` is 0 when ``nu <= 0``.
    """
    ss = mode1_steady_state(x1_ref, p)
    k, x2, x3 = ss.k_star, ss.x2_star, ss.x3_star
    a = (gamma1 * p.L * x2 ** 3 - 0.25 * p.R_L * x2 ** 3 / x3
         - 0.25 * x3 ** 2 / (gamma1 * p.L * k * x1_ref))
    b = derive(p).alpha * p.C_H - 3.0 * gamma1 * p.L * k * x1_ref
    nu = min(a, b)
    radius = math.sqrt(2.0 / (gamma1 * p.L * x2)) * nu if nu > 0 else 0.0
    return ss, a, b, nu, radius


def theorem1_constants(box: StateBox, x1_ref, gamma1, p: PlantParams, K_max=0.1) -> Theorem1Constants:
    """Design constants and validity of the adaptive current controller.

    Raises :class:`HypothesisError` when ``x1_ref`` is not strictly between
    the inductor currents of the two frozen-switch equilibria. The other
    conditions are reported through ``valid`` and ``failed``.
    """
    x10 = equilibrium(0, p).x1
    x11 = equilibrium(1, p).x1
    if not x10 < x1_ref < x11:
        raise HypothesisError([f"x*10 = {x10:.6g} < x1_ref = {x1_ref!r} < x*11 = {x11:.6g}"])

    d = derive(p)
    psi1, psi2, psi3 = _psi(box, p)
    kb = _k_max_bound(box, psi1, psi2, psi3, p)
    gb = _reaching_gain_bound(box, box.X1_plus - x1_ref, x1_ref - box.X1_minus,
                              K_max, psi1, psi2, psi3, p)

    ss, a, b, nu, radius = mode1_cylinder(x1_ref, gamma1, p)
    x2, x3 = ss.x2_star, ss.x3_star
    c = (1.0 - x3 / x2) / p.R_L

    failed = []
    if not x3 / x2 < 1.0:
        failed.append("x3*/x2* < 1 at the operating point")
    if not K_max < kb:
        failed.append(f"K_max = {K_max!r} < {kb:.6g}")
    if not 0 < gamma1 < gb:
        failed.append(f"gamma1 = {gamma1!r} < {gb:.6g}")
    if not nu > 0:
        failed.append(f"nu = min(a, b) = {nu:.6g} > 0")

    law = AdaptationLaw.current_tracking(x1_ref, gamma1)
    try:
        omega = reaching_rate(box, ControllerState(0.0, law, K_max), p)
    except InfeasibleError:
        omega = float("nan")
        failed.append("reaching rate omega > 0")

    return Theorem1Constants(
        psi1=psi1, psi2=psi2, psi3=psi3, K_max=K_max, K_max_bound=kb,
        gamma1=gamma1, gamma1_bound=gb, a_of_gamma1=a, b_of_gamma1=b, nu=nu,
        c=c, omega=omega, cylinder_radius=radius, steady=ss,
        valid=not failed, failed=tuple(failed),
    )


def reaching_rate(box: StateBox, cs: ControllerState, p: PlantParams) -> float:
    """Worst-case decay rate of ``|sigma|`` over the box, for ``|k| <= cs.K_max``.

    Both ``phi1`` and ``2 phi2 - phi1`` are multilinear in the state and
    the gain, except for the quadratic ``x2`` term of the voltage and
    generator laws, whose stationary point is added to the candidates.
    """
    d = derive(p)
    law, K_max = cs.law, cs.K_max
    x2c = [box.X2_minus, box.X2_plus]
    if law.kind == LawKind.VOLTAGE:
        x2c.append(0.5 * law.target)
    elif law.kind == LawKind.GENERATOR:
        x2c.append(0.5 * (p.E_H - p.R_H * law.target))
    x2c = [v for v in x2c if box.X2_minus <= v <= box.X2_plus]

    x1, x2, x3, k = np.meshgrid(
        [box.X1_minus, box.X1_plus], x2c, [box.X3_minus, box.X3_plus], [-K_max, K_max],
        indexing="ij",
    )
    if law.kind == LawKind.CURRENT:
        kd = law.gain * (law.target - x1)
    elif law.kind == LawKind.VOLTAGE:
        kd = law.gain * (x2 - law.target)
    else:
        kd = law.gain * (law.target - (p.E_H - x2) / p.R_H)
    phi1 = kd * x2 + x3 / p.L + k * (d.beta_H - d.alpha * x2)
    phi2 = 0.5 * (k * x1 / p.C_H + x2 / p.L)
    omega = float(min(phi1.min(), (2.0 * phi2 - phi1).min()))
    if not omega > 0:
        raise InfeasibleError(f"reaching rate unavailable over the box (omega = {omega:.6g})")
    return omega


def max_sigma_over_box(box: StateBox, K_max) -> float:
    """Largest ``|k x2 - x1|`` attainable inside the box with ``|k| <= K_max``."""
    return K_max * box.X2_plus + max(abs(box.X1_minus), abs(box.X1_plus))


def reaching_time_bound(sigma0, omega) -> float:
    if not omega > 0:
        raise InfeasibleError("reaching rate must be positive")
    return abs(sigma0) / omega


# --- Mode 2 -----------------------------------------------------------------

@dataclass(frozen=True)
class Theorem2Constants:
    """Stability data of the voltage-regulation loop on the manifold.

    The linearised closed loop has characteristic polynomial
    ``a3 s^3 + (a20 + g a21) s^2 + (a10 + g a11) s + g a0`` in the
    adaptation gain ``g``. It is Hurwitz for ``0 < g < gamma2_bound`` with
    ``gamma2_bound = min(gamma2_hat, gamma_c1, gamma_plus)``, where
    ``gamma2_hat`` keeps the ``s^2`` coefficient positive, ``gamma_c1`` the
    ``s`` coefficient, and ``gamma_plus`` is the first positive root of the
    Routh-Hurwitz product ``p(g) = c2 c1 - c3 c0``.
    """

    x2_ref: float
    gamma2: float
    DeltaE: float
    steady: ReducedSteadyState
    a0: float
    a10: float
    a11: float
    a20: float
    a21: float
    a3: float
    gamma2_hat: float
    gamma_c1: float
    p_coeffs: tuple
    p_roots: tuple | None
    gamma_plus: float
    gamma2_bound: float
    regime: str
    regime_threshold: float
    hypothesis_ok: bool
    gamma2_reaching_bound: float | None
    valid: bool
    failed: tuple = field(default_factory=tuple)


def _quadratic_roots(a, b, c):
    """Real roots of ``a x^2 + b x + c`` (sorted), or None if complex."""
    if a == 0:
        return None if b == 0 else (-c / b,)
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1 = q / a
    r2 = c / q if q != 0 else r1
    return tuple(sorted((r1, r2)))


def theorem2_constants(x2_ref, gamma2, p: PlantParams, box: StateBox | None = None,
                       K_max: float | None = None) -> Theorem2Constants:
    d = derive(p)
    inner = p.E_L ** 2 - 4.0 * x2_ref * p.R_L / p.R_H * (
        (1.0 + p.R_H / p.R_D) * x2_ref - p.E_H)
    if inner < 0:
        raise InfeasibleError(f"voltage reference {x2_ref!r} V is not reachable (Delta E)")
    dE = math.sqrt(inner) - p.E_L
    k = dE / (2.0 * p.R_L * x2_ref)
    x3 = p.E_L + 0.5 * dE
    D = p.L * k * k + p.C_H
    RC = p.R_L * p.C_L

    a3 = RC * D
    a20 = p.C_H * RC * d.alpha + p.C_H + p.L * k * k
    a21 = RC * p.L * k * x2_ref
    a10 = p.C_H * d.alpha + p.R_L * k * k
    a11 = RC * x3 + p.L * k * x2_ref
    a0 = p.R_L * k * x2_ref + x3

    g_hat = -a20 / a21 if a21 < 0 else math.inf
    g_c1 = -a10 / a11 if a11 < 0 else math.inf
    pc = (a11 * a21, a11 * a20 + a10 * a21 - a3 * a0, a10 * a20)
    roots = _quadratic_roots(*pc)
    pos = [r for r in (roots or ()) if r > 0]
    g_plus = min(pos) if pos else math.inf
    bound = min(g_hat, g_c1, g_plus) if a0 > 0 else 0.0

    thr = x2_ref * p.R_H / (p.E_H - x2_ref)
    regime = "RDhigh" if p.R_D > thr else "RDlow"
    x21 = equilibrium(1, p).x2
    x20 = equilibrium(0, p).x2
    hyp = x21 < x2_ref < x20

    reach = None
    failed = []
    if box is not None and K_max is not None:
        psi1, psi2, psi3 = _psi(box, p)
        err = x2_ref - box.X2_minus
        reach = _reaching_gain_bound(box, err, err, K_max, psi1, psi2, psi3, p)
        if not gamma2 < reach:
            failed.append(f"gamma2 = {gamma2!r} < reaching bound {reach:.6g}")
    if not a0 > 0:
        failed.append("2 R_L k* x2_ref + E_L > 0")
    if not gamma2 < bound:
        failed.append(f"gamma2 = {gamma2!r} < {bound:.6g}")

    return Theorem2Constants(
        x2_ref=x2_ref, gamma2=gamma2, DeltaE=dE,
        steady=ReducedSteadyState(k, x2_ref, x3),
        a0=a0, a10=a10, a11=a11, a20=a20, a21=a21, a3=a3,
        gamma2_hat=g_hat, gamma_c1=g_c1, p_coeffs=pc, p_roots=roots,
        gamma_plus=g_plus, gamma2_bound=bound, regime=regime,
        regime_threshold=thr, hypothesis_ok=hyp, gamma2_reaching_bound=reach,
        valid=not failed, failed=tuple(failed),
    )


def mode2_dynamic_matrix(k_star, x2_ref, x3_star, gamma2, p: PlantParams) -> np.ndarray:
    """Jacobian at the origin of the translated voltage-regulation dynamics."""
    d = derive(p)
    D = p.L * k_star ** 2 + p.C_H
    return np.array(
        [
            [0.0, gamma2, 0.0],
            [-x3_star / D, -(d.alpha * p.C_H + gamma2 * p.L * k_star * x2_ref) / D, -k_star / D],
            [x2_ref / p.C_L, k_star / p.C_L, -1.0 / (p.R_L * p.C_L)],
        ]
    )


def mode2_char_poly(c: Theorem2Constants, gamma2=None) -> np.ndarray:
    """Monic characteristic polynomial (highest power first) for gain ``gamma2``."""
    g = c.gamma2 if gamma2 is None else gamma2
    return np.array([c.a3, c.a20 + g * c.a21, c.a10 + g * c.a11, g * c.a0]) / c.a3


# --- polynomials --------------------------------------------------------------

def routh_hurwitz_cubic(coeffs) -> bool:
    """Hurwitz test for ``a3 s^3 + a2 s^2 + a1 s + a0`` (highest power first).

    Stable iff every coefficient is positive and ``a2 a1 > a3 a0``.
    """
    a3, a2, a1, a0 = (float(v) for v in coeffs)
    if not a3 > 0:
        raise DomainError("leading coefficient must be positive; normalise the sign first")
    return a2 > 0 and a1 > 0 and a0 > 0 and a2 * a1 > a3 * a0


def cubic_roots(coeffs) -> np.ndarray:
    """Roots of a cubic (highest power first), Newton-polished and sorted.

    Ordering is by real part, then imaginary part.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (4,):
        raise ValueError("expected 4 coefficients")
    if c[0] == 0:
        raise DomainError("leading coefficient must be non-zero")
    r = np.roots(c).astype(complex)
    dc = np.polyder(c)
    for i in range(r.size):
        z = r[i]
        with np.errstate(all="ignore"):
            for _ in range(3):
                f = np.polyval(c, z)
                df = np.polyval(dc, z)
                if df == 0:
                    break
                z_new = z - f / df
                if not np.isfinite(z_new) or abs(np.polyval(c, z_new)) >= abs(f):
                    break
                z = z_new
        r[i] = z
    # snap tiny parts produced by round-off
    scale = max(1.0, float(np.max(np.abs(r))))
    r = np.where(np.abs(r.imag) < 1e-12 * scale, r.real + 0j, r)
    r = np.where(np.abs(r.real) < 1e-12 * scale, 1j * r.imag, r)
    order = np.lexsort((r.imag, r.real))
    return r[order]


def is_hurwitz(A) -> bool:
    return bool(np.max(np.linalg.eigvals(np.asarray(A, dtype=float)).real) < 0)
