"""Sliding function, relay law and the adaptive gain laws.

The sliding function is ``sigma = k * x2 - x1``. The relay closes the
upper switch when ``sigma > 0``. The gain ``k`` is integrated from one of
three adaptation laws and saturated at ``+/- K_max``:

* current tracking:    ``dk/dt = gamma1 * (x1_ref - x1)``
* voltage tracking:    ``dk/dt = gamma2 * (x2 - x2_ref)``
* generator current:   ``dk/dt = gamma2' * (I_OL - I_g)``, ``gamma2' = R_H * gamma2``
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DomainError, ParameterError
from .plant import DerivedParams, PlantParams, derive

__all__ = [
    "LawKind",
    "AdaptationLaw",
    "ControllerGains",
    "ControllerState",
    "sigma",
    "relay",
    "adapt_k",
    "initial_gain",
    "equivalent_control",
    "reduced_current_rhs",
]


class LawKind(IntEnum):
    CURRENT = 0
    VOLTAGE = 1
    GENERATOR = 2


@dataclass(frozen=True)
class AdaptationLaw:
    kind: LawKind
    target: float
    gain: float

    def __post_init__(self):
        if not self.gain > 0.0:
            raise ParameterError(f"adaptation gain must be positive, got {self.gain!r}")

    @classmethod
    def current_tracking(cls, x1_ref, gamma1):
        return cls(LawKind.CURRENT, float(x1_ref), float(gamma1))

    @classmethod
    def voltage_tracking(cls, x2_ref, gamma2):
        return cls(LawKind.VOLTAGE, float(x2_ref), float(gamma2))

    @classmethod
    def generator_current(cls, I_OL, gamma2p):
        return cls(LawKind.GENERATOR, float(I_OL), float(gamma2p))

    def rate(self, state, I_g=None):
        x1, x2, _ = state
        if self.kind == LawKind.CURRENT:
            return self.gain * (self.target - x1)
        if self.kind == LawKind.VOLTAGE:
            return self.gain * (x2 - self.target)
        if I_g is None:
            raise ValueError("generator-current law needs the measured I_g")
        return self.gain * (self.target - I_g)


@dataclass(frozen=True)
class ControllerGains:
    """Design constants of the low-level controller.

    ``gamma2`` is the voltage-law gain; the generator-current law used in
    Mode 2 runs with ``R_H * gamma2``.
    """

    x1_ref: float = 10.0
    gamma1: float = 4.0
    gamma2: float = 4.0
    K_max: float = 0.1

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0 and self.K_max > 0):
            raise ParameterError("gamma1, gamma2 and K_max must be positive")

    def mode1_law(self) -> AdaptationLaw:
        return AdaptationLaw.current_tracking(self.x1_ref, self.gamma1)

    def mode2_law(self, I_OL: float, p: PlantParams) -> AdaptationLaw:
        return AdaptationLaw.generator_current(I_OL, p.R_H * self.gamma2)

    def voltage_law(self, x2_ref: float) -> AdaptationLaw:
        return AdaptationLaw.voltage_tracking(x2_ref, self.gamma2)


@dataclass(frozen=True)
class ControllerState:
    k: float
    law: AdaptationLaw
    K_max: float

    def __post_init__(self):
        if not self.K_max > 0:
            raise ParameterError("K_max must be positive")
        if abs(self.k) > self.K_max:
            raise ParameterError(f"|k| = {abs(self.k)!r} exceeds K_max = {self.K_max!r}")


def sigma(k, state):
    x1, x2, _ = state
    return k * x2 - x1


def relay(sigma_value) -> int:
    # sigma == 0 keeps the lower switch on
    return 1 if sigma_value > 0.0 else 0


def adapt_k(cs: ControllerState, state, I_g, dt: float) -> float:
    """One explicit Euler step of the active law, then saturation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k = cs.k + dt * cs.law.rate(state, I_g)
    return float(np.clip(k, -cs.K_max, cs.K_max))


def initial_gain(state) -> float:
    """Gain that places ``state`` on the sliding manifold (0 if ``x2 <= 0``)."""
    x1, x2, _ = state
    return x1 / x2 if x2 > 0 else 0.0


def equivalent_control(k, k_dot, state, d: DerivedParams, p: PlantParams):
    """Continuous control that keeps ``sigma`` constant along the flow."""
    _, x2, x3 = state
    if not x2 > 0:
        raise DomainError("equivalent control needs x2 > 0")
    return (p.L * p.C_H / ((p.L * k * k + p.C_H) * x2)) * (
        (k_dot - d.alpha * k) * x2 + x3 / p.L + d.beta_H * k
    )


def reduced_current_rhs(k, x2, x3, x1_ref, gamma1, p: PlantParams):
    """Sliding dynamics ``(dk, dx2, dx3)`` of the current-tracking loop.

    On the manifold ``x1 = k x2``; the switch is replaced by its
    equivalent control.
    """
    d = derive(p)
    k_dot = gamma1 * (x1_ref - k * x2)
    u_eq = equivalent_control(k, k_dot, (k * x2, x2, x3), d, p)
    dx2 = -d.alpha * x2 - k * x2 * u_eq / p.C_H + d.beta_H
    dx3 = k * x2 / p.C_L - x3 / (p.R_L * p.C_L) + d.beta_L
    return np.array([k_dot, dx2, dx3])
