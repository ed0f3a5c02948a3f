"""Fixed-step simulation of the open and closed loop.

The plant is integrated with classical RK4 at ``dt_plant``. The relay
and the gain adaptation run on a slower sample-and-hold clock
``dt_control``; between samples ``u`` and ``k`` are frozen.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .control import AdaptationLaw, ControllerGains, LawKind, initial_gain
from .errors import NumericError, ParameterError
from .plant import LoadProfile, PlantParams, derive, rhs

__all__ = [
    "SimConfig",
    "SimTrace",
    "ModeEvent",
    "step",
    "simulate_fixed_u",
    "simulate_piecewise_u",
    "run_closed_loop",
    "CSV_HEADER",
]

CSV_HEADER = ("t", "x1", "x2", "x3", "u", "sigma", "k", "Ig", "mode", "IOL")
EVENT_HEADER = ("t", "from_mode", "to_mode", "reason", "IOL_active", "gate_verdict")


@dataclass(frozen=True)
class SimConfig:
    dt_plant: float = 1e-6
    dt_control: float = 1e-6
    t_end: float = 1.0
    record_stride: int = 1000

    def __post_init__(self):
        if not (self.dt_plant > 0 and self.dt_control > 0 and self.t_end >= 0):
            raise ParameterError("time steps must be positive and t_end non-negative")
        if self.dt_plant > self.dt_control * (1 + 1e-12):
            raise ParameterError("dt_plant must not exceed dt_control")
        ratio = self.dt_control / self.dt_plant
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ParameterError("dt_control must be an integer multiple of dt_plant")
        if int(self.record_stride) < 1:
            raise ParameterError("record_stride must be a positive integer")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_plant))

    def samples(self, t: float) -> int:
        """Number of control samples spanning ``[0, t]``; ``t`` must lie on the grid."""
        n = t / self.dt_control
        r = round(n)
        if abs(n - r) > 1e-6:
            raise ParameterError(f"t = {t!r} is not a multiple of dt_control")
        return int(r)


@dataclass(frozen=True)
class ModeEvent:
    t: float
    from_mode: int
    to_mode: int
    reason: str
    I_OL_active: float
    gate_verdict: str
    contained: bool | None = None


@dataclass
class SimTrace:
    """Recorded samples of a closed-loop run.

    ``data`` maps each name of ``kernels.TRACE_COLUMNS`` to a 1-D array.
    ``Ig_filt`` is the low-pass generator-current measurement seen by the
    supervisor; it is kept in memory but not exported.
    """

    data: dict
    events: list = field(default_factory=list)
    dt_control: float = 0.0

    def __getitem__(self, name):
        return self.data[name]

    def __len__(self):
        return len(self.data["t"])

    def window(self, t0, t1):
        t = self.data["t"]
        return (t >= t0) & (t < t1)

    def mean(self, name, t0, t1):
        m = self.window(t0, t1)
        if not m.any():
            raise ValueError(f"no samples in [{t0}, {t1})")
        return float(self.data[name][m].mean())

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        cols = [self.data[c] for c in CSV_HEADER]
        for row in zip(*cols):
            t, x1, x2, x3, u, s, k, ig, mode, iol = row
            buf.write(
                f"{t:.9f},{x1:.10g},{x2:.10g},{x3:.10g},{int(u)},{s:.10g},"
                f"{k:.10g},{ig:.10g},{int(mode)},{iol:.10g}\n"
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def events_to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for e in self.events:
            w.writerow([f"{e.t:.9f}", e.from_mode, e.to_mode, e.reason,
                        f"{e.I_OL_active:.10g}", e.gate_verdict])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def step(state, u, dt, p: PlantParams, d=None):
    """One classical RK4 step; vectorised over leading axes of ``state``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    d = derive(p) if d is None else d
    x = np.asarray(state, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        k1 = rhs(x, u, d, p)
        k2 = rhs(x + 0.5 * dt * k1, u, d, p)
        k3 = rhs(x + 0.5 * dt * k2, u, d, p)
        k4 = rhs(x + dt * k3, u, d, p)
        out = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite state in RK4 step")
    return out


def simulate_fixed_u(p: PlantParams, x0, u: float, t_end: float, dt: float = 1e-6):
    """Integrate with a frozen switch position; returns the final state."""
    n = int(round(t_end / dt))
    x = np.array(x0, dtype=np.float64)
    prm = kernels.pack_params(p, derive(p))
    if not kernels.integrate_fixed_u(x, float(u), float(dt), n, prm):
        raise NumericError("non-finite state", t=t_end)
    return x


def simulate_piecewise_u(p: PlantParams, x0, u_pieces, piece_steps: int, dt: float):
    """Batched RK4 with piecewise-constant inputs.

    ``x0`` is ``(B, 3)`` and ``u_pieces`` is ``(P, B)``; each piece lasts
    ``piece_steps`` steps. Returns the state at every piece boundary as
    an array of shape ``(P + 1, B, 3)``.
    """
    d = derive(p)
    x = np.array(x0, dtype=float)
    u_pieces = np.asarray(u_pieces, dtype=float)
    out = [x.copy()]
    for u in u_pieces:
        for _ in range(piece_steps):
            x = step(x, u, dt, p, d)
        out.append(x.copy())
    return np.stack(out)


def _law_code(law: AdaptationLaw) -> int:
    return {
        LawKind.CURRENT: kernels.LAW_CURRENT,
        LawKind.VOLTAGE: kernels.LAW_VOLTAGE,
        LawKind.GENERATOR: kernels.LAW_GENERATOR,
    }[law.kind]


def run_closed_loop(
    params: PlantParams,
    load: LoadProfile,
    gains: ControllerGains,
    config: SimConfig,
    x0,
    supervisor=None,
    k0=None,
    law: AdaptationLaw | None = None,
    *,
    max_chunk: int | None = None,
) -> SimTrace:
    """Simulate plant, relay, adaptive gain and (optionally) the supervisor.

    Without a supervisor the loop runs ``law`` (default: current tracking)
    for the whole horizon. With one, the supervisor chooses the mode and
    overload set-point; it is consulted whenever its watched band is left
    or one of its timers expires, which is equivalent to consulting it at
    every control sample. ``max_chunk`` caps the samples per kernel call;
    ``max_chunk=1`` consults the supervisor at every sample (for testing).
    """
    kernel = kernels.closed_loop
    dt_c = float(config.dt_control)
    N = config.samples(config.t_end) if config.t_end > 0 else 0
    if load.t_end + 1e-9 < config.t_end:
        raise ParameterError("load profile does not cover the simulation horizon")
    boundaries = sorted({config.samples(s.t_start) for s in load.segments[1:]} | {N})
    stride = int(config.record_stride)
    nsub = config.substeps

    def plant_for(n):
        return params.with_load(load.load_at(n * dt_c + 0.5 * dt_c))

    p = plant_for(0)
    prm = kernels.pack_params(p, derive(p))
    x = np.array(x0, dtype=np.float64)
    if k0 is None:
        k0 = initial_gain(x)
    k0 = float(np.clip(k0, -gains.K_max, gains.K_max))
    ig0 = (p.E_H - x[1]) / p.R_H
    aux = np.array([k0, ig0], dtype=np.float64)

    if supervisor is not None:
        supervisor.reset(ig0)
        mode, iol = supervisor.mode, supervisor.I_OL_active
        act_law = supervisor.law(gains, p)
        tau = supervisor.config.ig_filter_tau
    else:
        mode, iol = 1, float("nan")
        act_law = law if law is not None else gains.mode1_law()
        if act_law.kind == LawKind.GENERATOR:
            mode, iol = 2, act_law.target
        tau = 5e-4
    filt_a = 1.0 - math.exp(-dt_c / tau)

    rec = np.zeros((N // stride + 2, len(kernels.TRACE_COLUMNS)))
    events = []
    n = 0
    resume = False
    inf = math.inf
    while n < N:
        n_bound = next(b for b in boundaries if b > n)
        if supervisor is not None:
            hi, lo, t_next = supervisor.watch(n * dt_c)
            n_next = N if t_next == inf else max(n + 1, math.ceil(t_next / dt_c - 1e-9))
        else:
            hi, lo, n_next = inf, -inf, N
        n1 = min(n_bound, n_next, N)
        if max_chunk is not None:
            n1 = min(n1, n + max_chunk)
        status, n = kernel(
            x, aux, n, n1, resume, nsub, dt_c, prm,
            _law_code(act_law), act_law.target, act_law.gain, gains.K_max,
            hi, lo, filt_a, stride, float(mode), float(iol), rec,
        )
        if status == kernels.STATUS_NONFINITE:
            raise NumericError("non-finite plant state", t=n * dt_c)
        if n >= N:
            break
        if status == kernels.STATUS_DONE:
            if n in boundaries:
                p = plant_for(n)
                prm = kernels.pack_params(p, derive(p))
            ig = (p.E_H - x[1]) / p.R_H
            aux[1] = aux[1] + filt_a * (ig - aux[1])
        if supervisor is not None:
            ev = supervisor.decide(aux[1], x.copy(), aux[0], n * dt_c, load_estimate=p.R_D)
            if ev is not None:
                events.append(ev)
            mode, iol = supervisor.mode, supervisor.I_OL_active
            act_law = supervisor.law(gains, p)
        resume = True

    # closing row at t_end
    if N > 0 and N % stride != 0:
        r = (N - 1) // stride + 1
    else:
        r = N // stride
    ig = (p.E_H - x[1]) / p.R_H
    igf = aux[1] + filt_a * (ig - aux[1]) if N > 0 else ig
    s = aux[0] * x[1] - x[0]
    rec[r] = (N * dt_c, x[0], x[1], x[2], 1.0 if s > 0 else 0.0, s, aux[0], ig,
              mode, iol, igf)
    rec = rec[: r + 1]
    data = {name: rec[:, i].copy() for i, name in enumerate(kernels.TRACE_COLUMNS)}
    return SimTrace(data=data, events=events, dt_control=dt_c)
