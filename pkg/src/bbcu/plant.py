"""Switched model of the bidirectional buck-boost converter unit (BBCU).

State ``x = (x1, x2, x3)``: inductor current [A], HV capacitor voltage [V],
LV capacitor voltage [V]. The switch command ``u`` selects between the two
configurations of the converter; values in ``[0, 1]`` are accepted so the
same right-hand side serves the averaged model.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError

__all__ = [
    "PlantParams",
    "DerivedParams",
    "PlantState",
    "StateBox",
    "LoadSegment",
    "LoadProfile",
    "derive",
    "rhs",
    "equilibrium",
    "dynamic_matrix",
    "dynamic_matrix_u1",
    "generator_current",
]


@dataclass(frozen=True)
class PlantParams:
    """Electrical constants of the converter, SI units.

    Defaults are the nominal aircraft values: 270 V / 28 V buses,
    100 mOhm source resistances, 10 mH inductor, 0.8 mF and 0.4 mF
    capacitors. ``R_D`` is the (piecewise-constant) HV-side load.
    """

    E_H: float = 270.0
    R_H: float = 0.1
    L: float = 10e-3
    C_H: float = 0.8e-3
    E_L: float = 28.0
    R_L: float = 0.1
    C_L: float = 0.4e-3
    R_D: float = 300.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v <= 0.0:
                raise ParameterError(f"{f.name} must be strictly positive, got {v!r}")
        if not self.E_H > (1.0 + self.R_H / self.R_D) * self.E_L:
            raise ParameterError(
                f"E_H > (1 + R_H/R_D) E_L violated for R_D = {self.R_D!r}"
            )

    def with_load(self, R_D: float) -> "PlantParams":
        return dataclasses.replace(self, R_D=float(R_D))


@dataclass(frozen=True)
class DerivedParams:
    R_DH: float
    alpha: float
    beta_H: float
    beta_L: float


class PlantState(NamedTuple):
    x1: float
    x2: float
    x3: float


@dataclass(frozen=True)
class StateBox:
    """Axis-aligned bounds assumed for the state.

    The lower LV bound ``X3_minus`` is needed by the gain bound of the
    current controller even though physically only ``x3 > 0`` is known.
    """

    X1_minus: float = -300.0
    X1_plus: float = 300.0
    X2_minus: float = 100.0
    X2_plus: float = 300.0
    X3_minus: float = 5.0
    X3_plus: float = 60.0

    def __post_init__(self):
        if not self.X1_minus <= self.X1_plus:
            raise ParameterError("X1_minus <= X1_plus required")
        if not 0.0 < self.X2_minus <= self.X2_plus:
            raise ParameterError("0 < X2_minus <= X2_plus required")
        if not 0.0 < self.X3_minus <= self.X3_plus:
            raise ParameterError("0 < X3_minus <= X3_plus required")
        if not self.X3_plus < self.X2_minus:
            raise ParameterError("X3_plus < X2_minus required")

    def contains(self, state) -> bool:
        x1, x2, x3 = state
        return (
            self.X1_minus <= x1 <= self.X1_plus
            and self.X2_minus <= x2 <= self.X2_plus
            and self.X3_minus <= x3 <= self.X3_plus
        )

    def corners(self) -> np.ndarray:
        """All 8 vertices as an (8, 3) array."""
        g = np.meshgrid(
            [self.X1_minus, self.X1_plus],
            [self.X2_minus, self.X2_plus],
            [self.X3_minus, self.X3_plus],
            indexing="ij",
        )
        return np.stack([a.ravel() for a in g], axis=1)


@dataclass(frozen=True)
class LoadSegment:
    t_start: float
    t_end: float
    R_D: float


@dataclass(frozen=True)
class LoadProfile:
    """Contiguous list of constant-load segments starting at t = 0."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(LoadSegment(*s) if not isinstance(s, LoadSegment) else s
                     for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ParameterError("load profile is empty")
        if segs[0].t_start != 0.0:
            raise ParameterError("load profile must start at t = 0")
        for a, b in zip(segs, segs[1:]):
            if a.t_end != b.t_start:
                raise ParameterError(
                    f"load segments not contiguous at t = {a.t_end!r} / {b.t_start!r}"
                )
        for s in segs:
            if not s.t_end > s.t_start:
                raise ParameterError(f"empty load segment at t = {s.t_start!r}")
            if not s.R_D > 0.0:
                raise ParameterError(f"R_D must be positive, got {s.R_D!r}")

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def load_at(self, t: float) -> float:
        for s in self.segments:
            if t < s.t_end:
                return s.R_D
        return self.segments[-1].R_D


def derive(p: PlantParams) -> DerivedParams:
    R_DH = p.R_D * p.R_H / (p.R_D + p.R_H)
    return DerivedParams(
        R_DH=R_DH,
        alpha=1.0 / (R_DH * p.C_H),
        beta_H=p.E_H / (p.R_H * p.C_H),
        beta_L=p.E_L / (p.R_L * p.C_L),
    )


def rhs(state, u, d: DerivedParams, p: PlantParams) -> np.ndarray:
    """Time derivative of the switched model.

    ``state`` may be a single triple or an ``(..., 3)`` array; ``u`` must
    broadcast against ``state[..., 0]``.
    """
    x = np.asarray(state, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    dx1 = -x3 / p.L + x2 * u / p.L
    dx2 = -d.alpha * x2 - x1 * u / p.C_H + d.beta_H
    dx3 = x1 / p.C_L - x3 / (p.R_L * p.C_L) + d.beta_L
    return np.stack(np.broadcast_arrays(dx1, dx2, dx3), axis=-1)


def equilibrium(u_fixed: int, p: PlantParams) -> PlantState:
    """Closed-form rest point of the LTI system obtained with ``u`` frozen at 0 or 1."""
    d = derive(p)
    if u_fixed == 0:
        return PlantState(-p.E_L / p.R_L, d.R_DH / p.R_H * p.E_H, 0.0)
    if u_fixed == 1:
        x1 = (d.R_DH / p.R_H * p.E_H - p.E_L) / (d.R_DH + p.R_L)
        x2 = d.R_DH * p.R_L / (d.R_DH + p.R_L) * (p.E_H / p.R_H + p.E_L / p.R_L)
        return PlantState(x1, x2, x2)
    raise ValueError("u_fixed must be 0 or 1")


def dynamic_matrix(u: float, p: PlantParams) -> np.ndarray:
    """State matrix of the affine system for a constant ``u``."""
    d = derive(p)
    return np.array(
        [
            [0.0, u / p.L, -1.0 / p.L],
            [-u / p.C_H, -d.alpha, 0.0],
            [1.0 / p.C_L, 0.0, -1.0 / (p.R_L * p.C_L)],
        ]
    )


def dynamic_matrix_u1(p: PlantParams) -> np.ndarray:
    return dynamic_matrix(1.0, p)


def generator_current(x2, p: PlantParams):
    """HV generator current from the capacitor voltage, ``(E_H - x2) / R_H``."""
    return (p.E_H - np.asarray(x2, dtype=float)) / p.R_H
