"""Two-mode supervisor with hysteresis, ROA gating and a set-point ramp.

Mode 1 tracks the inductor-current reference and recharges the battery.
Mode 2 regulates the generator current to the overload set-point
``I_OL_active`` and lets the battery assist the generator.

Transitions, all on the low-pass filtered generator current ``I_gf``:

* 1 -> 2 when ``I_gf > I_OL_nominal + eta``, after the entry gate;
* in Mode 2 a ramp lowers ``I_OL_active`` by ``ramp_step`` every
  ``dwell`` seconds until it reaches ``I_OL_nominal``;
* in Mode 2 with the ramp finished, a new overload
  (``I_gf > I_OL_active + eta``) re-runs the gate, at most once per dwell;
* 2 -> 1 when ``I_gf < I_OL_nominal - eta`` has held for one dwell and
  the state lies inside the current loop's cylinder of attraction.

The simulator only calls :meth:`Supervisor.decide` when the filtered
current leaves the band reported by :meth:`Supervisor.watch` or a timer
expires. ``decide`` never acts outside those cases, so the result matches
calling it at every control sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import mode1_cylinder
from .control import ControllerGains
from .errors import ConfigError, ParameterError
from .plant import PlantParams
from .sim import ModeEvent

__all__ = ["SupervisorConfig", "GateVerdict", "Supervisor", "gate", "ramp_tick"]

INF = math.inf


@dataclass(frozen=True)
class SupervisorConfig:
    I_OL_nominal: float = 16.0
    eta: float = 0.5
    ladder: tuple = (16.0, 16.5, 17.0, 17.5)
    ramp_step: float = 0.5
    dwell: float = 0.79
    policy: str = "roa"
    ig_filter_tau: float = 5e-4
    retry: float = 1e-3
    mode1_reference_load: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "ladder", tuple(sorted(float(v) for v in self.ladder)))
        if self.policy not in ("roa", "worst_case"):
            raise ParameterError(f"unknown gate policy {self.policy!r}")
        if not (self.eta > 0 and self.ramp_step > 0 and self.dwell > 0
                and self.ig_filter_tau > 0 and self.retry > 0):
            raise ParameterError("eta, ramp_step, dwell, ig_filter_tau and retry must be positive")
        if not self.ladder or self.ladder[0] < self.I_OL_nominal:
            raise ParameterError("overload ladder must be non-empty and start at or above nominal")


@dataclass(frozen=True)
class GateVerdict:
    action: str  # "enter_nominal", "enter_reduced" or "hold"
    I_OL: float
    contained: bool | None = None
    key: tuple | None = None

    def __str__(self):
        if self.action == "enter_reduced":
            return f"enter_reduced({self.I_OL:g})"
        return self.action


def _table_load(table, estimate):
    loads = sorted({r for r, _ in table})
    below = [r for r in loads if r <= estimate]
    return below[-1] if below else loads[0]


def gate(config: SupervisorConfig, roa_table: dict, state, k, load_estimate=None,
         ) -> GateVerdict:
    """Pick the overload set-point for entering Mode 2.

    With the ``roa`` policy the table entry for the heaviest tabulated load
    not lighter than ``load_estimate`` is used: nominal if its ROA contains
    the state, else the lowest ladder value whose ROA does, else hold. The
    ``worst_case`` policy enters at the top of the ladder unconditionally.
    """
    top = config.ladder[-1]
    if config.policy == "worst_case" or load_estimate is None:
        if not roa_table:
            return GateVerdict("enter_reduced", top, None, None)
        # the decision ignores the load; containment is only logged, against
        # the entry for the true load when the caller knows it
        r = (_table_load(roa_table, load_estimate) if load_estimate is not None
             else min(r for r, _ in roa_table))
        key = (r, top)
        roa = roa_table.get(key)
        inside = roa.contains(state, k) if roa is not None and roa.level > 0 else None
        return GateVerdict("enter_reduced", top, inside, key)
    if not roa_table:
        raise ConfigError("ROA table is empty")
    r = _table_load(roa_table, load_estimate)
    for i_ol in (config.I_OL_nominal,) + tuple(v for v in config.ladder if v > config.I_OL_nominal):
        roa = roa_table.get((r, i_ol))
        if roa is None or not roa.level > 0:
            continue
        if roa.contains(state, k):
            action = "enter_nominal" if i_ol == config.I_OL_nominal else "enter_reduced"
            return GateVerdict(action, i_ol, True, (r, i_ol))
    return GateVerdict("hold", config.I_OL_nominal, False, None)


def ramp_tick(I_OL_active, I_OL_nominal, step):
    """One ramp decrement, clamped at nominal."""
    return max(I_OL_nominal, I_OL_active - step)


@dataclass
class SupervisorState:
    mode: int = 1
    I_OL_active: float = 16.0
    ramp_next: float = INF
    cooldown_until: float = -INF
    hold_until: float = -INF
    below_since: float | None = None
    return_next: float = INF


class Supervisor:
    """Stateful mode automaton; see the module docstring for the rules."""

    def __init__(self, config: SupervisorConfig, roa_table: dict, plant: PlantParams,
                 gains: ControllerGains):
        if config.policy == "roa" and not roa_table:
            raise ConfigError("ROA table is empty")
        self.config = config
        self.roa_table = dict(roa_table)
        ss, *_, radius = mode1_cylinder(gains.x1_ref, gains.gamma1,
                                        plant.with_load(config.mode1_reference_load))
        self.mode1_center = ss.center
        self.mode1_radius = radius
        self.state = SupervisorState(I_OL_active=config.I_OL_nominal)

    @property
    def mode(self):
        return self.state.mode

    @property
    def I_OL_active(self):
        return self.state.I_OL_active

    def reset(self, ig0=None):
        self.state = SupervisorState(I_OL_active=self.config.I_OL_nominal)

    def law(self, gains: ControllerGains, p: PlantParams):
        if self.state.mode == 1:
            return gains.mode1_law()
        return gains.mode2_law(self.state.I_OL_active, p)

    def mode1_contains(self, state, k) -> bool:
        z = np.array([k, state[1], state[2]]) - self.mode1_center
        return bool(np.linalg.norm(z) < self.mode1_radius)

    # -- event interface ----------------------------------------------------

    def _retrigger_allowed(self, t):
        s = self.state
        return s.ramp_next == INF and t >= s.cooldown_until

    def watch(self, t):
        """``(hi, lo, t_next)``: call ``decide`` once ``I_gf > hi``, ``I_gf < lo`` or ``t >= t_next``."""
        s, c = self.state, self.config
        if s.mode == 1:
            if t < s.hold_until:
                return INF, -INF, s.hold_until
            return c.I_OL_nominal + c.eta, -INF, INF
        low = c.I_OL_nominal - c.eta
        if s.below_since is not None:
            return math.nextafter(low, -INF), -INF, min(s.return_next, s.ramp_next)
        hi = s.I_OL_active + c.eta if self._retrigger_allowed(t) else INF
        t_next = s.ramp_next
        if s.cooldown_until > t:
            t_next = min(t_next, s.cooldown_until)
        return hi, low, t_next

    def decide(self, igf, state, k, t, load_estimate=None):
        """Update the automaton for one control sample; returns a ModeEvent or None."""
        s, c = self.state, self.config
        if s.mode == 1:
            if t < s.hold_until or not igf > c.I_OL_nominal + c.eta:
                return None
            v = gate(c, self.roa_table, state, k, load_estimate)
            if v.action == "hold":
                s.hold_until = t + c.retry
                return ModeEvent(t, 1, 1, "gate_hold", s.I_OL_active, str(v), False)
            s.mode = 2
            s.I_OL_active = v.I_OL
            s.ramp_next = t + c.dwell if v.I_OL > c.I_OL_nominal else INF
            s.cooldown_until = t + c.dwell
            s.below_since = None
            s.return_next = INF
            return ModeEvent(t, 1, 2, "overload", s.I_OL_active, str(v), v.contained)

        event = None
        if t >= s.ramp_next:
            s.I_OL_active = ramp_tick(s.I_OL_active, c.I_OL_nominal, c.ramp_step)
            s.ramp_next = s.ramp_next + c.dwell if s.I_OL_active > c.I_OL_nominal else INF
            s.cooldown_until = t + c.dwell
            event = ModeEvent(t, 2, 2, "ramp", s.I_OL_active, "", None)

        low = c.I_OL_nominal - c.eta
        if s.below_since is not None:
            if igf >= low:
                s.below_since = None
                s.return_next = INF
            elif t >= s.return_next:
                if self.mode1_contains(state, k):
                    self.state = SupervisorState(I_OL_active=c.I_OL_nominal)
                    return ModeEvent(t, 2, 1, "overload_cleared", c.I_OL_nominal,
                                     "mode1_gate_pass", True)
                s.return_next = t + c.retry
            return event
        if igf < low:
            s.below_since = t
            s.return_next = t + c.dwell
            return event
        if self._retrigger_allowed(t) and igf > s.I_OL_active + c.eta:
            v = gate(c, self.roa_table, state, k, load_estimate)
            s.cooldown_until = t + (c.retry if v.action == "hold" else c.dwell)
            if v.action != "hold" and v.I_OL > s.I_OL_active:
                s.I_OL_active = v.I_OL
                s.ramp_next = t + c.dwell
            return ModeEvent(t, 2, 2, "overload_retrigger", s.I_OL_active, str(v), v.contained)
        return event
