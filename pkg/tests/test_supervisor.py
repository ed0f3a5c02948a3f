import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbcu.control import ControllerGains
from bbcu.errors import ConfigError, ParameterError
from bbcu.plant import PlantParams
from bbcu.roa import QuadraticLyapunov, RoaEstimate
from bbcu.supervisor import GateVerdict, Supervisor, SupervisorConfig, gate, ramp_tick

R = 17.0
CENTERS = {16.0: (0.0075, 268.4, 28.75), 16.5: (0.006, 268.5, 28.6),
           17.0: (0.004, 268.6, 28.4), 17.5: (0.002, 268.7, 28.2)}


def table(levels=None):
    levels = levels or {i: 0.01 for i in CENTERS}
    return {(R, i): RoaEstimate(QuadraticLyapunov(np.eye(3), np.array(CENTERS[i])), levels[i])
            for i in CENTERS}


def at(i_ol):
    k, x2, x3 = CENTERS[i_ol]
    return (5.0, x2, x3), k


def make(config=None, tab=None):
    return Supervisor(config or SupervisorConfig(), table() if tab is None else tab, PlantParams(),
                      ControllerGains())


def test_config_validation():
    with pytest.raises(ParameterError):
        SupervisorConfig(policy="bogus")
    with pytest.raises(ParameterError):
        SupervisorConfig(ladder=(15.0, 16.0))
    with pytest.raises(ParameterError):
        SupervisorConfig(dwell=0.0)
    assert SupervisorConfig(ladder=(17.5, 16.0)).ladder == (16.0, 17.5)


def test_ramp_tick_schedule():
    seq = [17.5]
    for _ in range(4):
        seq.append(ramp_tick(seq[-1], 16.0, 0.5))
    assert seq == [17.5, 17.0, 16.5, 16.0, 16.0]


def test_gate_nominal_at_center():
    v = gate(SupervisorConfig(), table(), *at(16.0), load_estimate=R)
    assert v == GateVerdict("enter_nominal", 16.0, True, (R, 16.0))
    assert str(v) == "enter_nominal"


def test_gate_picks_lowest_containing_set_point():
    v = gate(SupervisorConfig(), table(), *at(17.0), load_estimate=R)
    assert v.action == "enter_reduced" and v.I_OL == 17.0
    assert str(v) == "enter_reduced(17)"


def test_gate_hold_when_nothing_contains():
    v = gate(SupervisorConfig(), table(), (0.0, 250.0, 20.0), 0.0, load_estimate=R)
    assert v.action == "hold"


def test_gate_uses_heaviest_tabulated_load_not_lighter():
    tab = table()
    tab.update({(15.0, i): e for (_, i), e in table().items()})
    assert gate(SupervisorConfig(), tab, *at(16.0), load_estimate=16.0).key[0] == 15.0
    assert gate(SupervisorConfig(), tab, *at(16.0), load_estimate=17.2).key[0] == 17.0
    assert gate(SupervisorConfig(), tab, *at(16.0), load_estimate=14.0).key[0] == 15.0


def test_worst_case_policy():
    cfg = SupervisorConfig(policy="worst_case")
    v = gate(cfg, table(), *at(16.0), load_estimate=R)
    assert v.action == "enter_reduced" and v.I_OL == 17.5
    assert v.contained is False  # logged only
    assert gate(cfg, {}, *at(16.0)).I_OL == 17.5


def test_empty_table_rejected():
    with pytest.raises(ConfigError):
        gate(SupervisorConfig(), {}, *at(16.0), load_estimate=R)
    with pytest.raises(ConfigError):
        make(tab={})


def test_strict_entry_threshold():
    s = make()
    x, k = at(16.0)
    assert s.decide(16.5, x, k, 1.0, R) is None
    assert s.mode == 1
    e = s.decide(math.nextafter(16.5, 20.0), x, k, 1.0, R)
    assert s.mode == 2 and e.reason == "overload" and e.to_mode == 2


def test_hold_retries_after_delay():
    cfg = SupervisorConfig(retry=1e-3)
    s = make(cfg)
    far = (0.0, 250.0, 20.0)
    e = s.decide(17.0, far, 0.0, 1.0, R)
    assert e.reason == "gate_hold" and s.mode == 1
    assert s.watch(1.0005)[2] == pytest.approx(1.001)
    assert s.decide(17.0, far, 0.0, 1.0005, R) is None
    assert s.decide(17.0, *at(16.0), 1.001, R).reason == "overload"


def test_ramp_down_and_return():
    cfg = SupervisorConfig(dwell=0.5)
    s = make(cfg)
    x, k = at(17.5)
    s.decide(20.0, x, k, 0.0, R)
    assert s.I_OL_active == 17.5
    got = []
    for t in (0.5, 1.0, 1.5):
        got.append(s.decide(16.0, x, k, t, R).I_OL_active)
    assert got == [17.0, 16.5, 16.0]
    assert s.state.ramp_next == math.inf
    assert s.watch(1.5)[2] == pytest.approx(2.0)  # only the retrigger cooldown remains
    # below the clear threshold: one dwell, then the cylinder test
    c = s.mode1_center
    inside = ((10.0, c[1], c[2]), c[0])
    assert s.decide(15.0, *inside, 2.0, R) is None
    assert s.decide(15.0, *inside, 2.4, R) is None
    e = s.decide(15.0, *inside, 2.5, R)
    assert e.reason == "overload_cleared" and s.mode == 1 and s.I_OL_active == 16.0


def test_return_blocked_outside_cylinder():
    cfg = SupervisorConfig(dwell=0.5, retry=0.01)
    s = make(cfg)
    s.decide(20.0, *at(16.0), 0.0, R)
    s.decide(15.0, *at(16.0), 1.0, R)
    far = ((0.0, 200.0, 20.0), 0.0)
    assert s.decide(15.0, *far, 1.5, R) is None and s.mode == 2
    assert s.watch(1.5)[2] == pytest.approx(1.51)
    c = s.mode1_center
    assert s.decide(15.0, (0.0, c[1], c[2]), c[0], 1.51, R).to_mode == 1


def test_clear_timer_resets_when_current_recovers():
    s = make(SupervisorConfig(dwell=0.5))
    s.decide(20.0, *at(16.0), 0.0, R)
    s.decide(15.0, *at(16.0), 1.0, R)
    s.decide(15.6, *at(16.0), 1.2, R)
    c = s.mode1_center
    assert s.decide(15.0, (0.0, c[1], c[2]), c[0], 1.5, R) is None
    assert s.mode == 2


def test_retrigger_raises_set_point_once_per_dwell():
    s = make(SupervisorConfig(dwell=0.5))
    s.decide(20.0, *at(16.0), 0.0, R)
    assert s.decide(20.0, *at(17.0), 0.2, R) is None  # cooldown
    e = s.decide(20.0, *at(17.0), 0.5, R)
    assert e.reason == "overload_retrigger" and s.I_OL_active == 17.0
    assert s.decide(20.0, *at(17.0), 0.7, R) is None  # ramp running


def test_mode1_cylinder_radius():
    s = make()
    assert s.mode1_radius == pytest.approx(4.3, abs=0.05)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(14.0, 19.0), st.floats(0.0, 0.3)), min_size=1, max_size=25),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_watch_band_is_quiet(history, u_ig, u_t):
    """Inside the watched band and before the timer, decide never acts."""
    s = make(SupervisorConfig(dwell=0.2, retry=0.05))
    t = 0.0
    c = s.mode1_center
    for ig, dt in history:
        t += dt
        s.decide(ig, (0.0, c[1], c[2]), c[0], t, R)
    hi, lo, t_next = s.watch(t)
    if t_next <= t:
        return
    ig = max(lo, 10.0) + u_ig * (min(hi, 20.0) - max(lo, 10.0))
    if not lo <= ig <= hi:
        return
    tq = t + u_t * (min(t_next, t + 1.0) - t) * 0.999
    before = (s.mode, s.I_OL_active, s.state.below_since)
    assert s.decide(ig, (0.0, c[1], c[2]), c[0], tq, R) is None
    assert (s.mode, s.I_OL_active, s.state.below_since) == before


# --- invariants along the scenarios -------------------------------------------

def mode_changes(trace):
    return [e for e in trace.events if e.from_mode != e.to_mode]


@pytest.mark.parametrize("which", ["run1", "run2"])
def test_no_mode_chattering(which, request):
    ch = mode_changes(request.getfixturevalue(which).trace)
    assert ch
    assert all(b.t - a.t >= 0.1 for a, b in zip(ch, ch[1:]))


@pytest.mark.parametrize("which", ["run1", "run2"])
def test_gate_safety(which, request):
    res = request.getfixturevalue(which)
    entries = [e for e in res.trace.events if e.to_mode == 2 and e.reason != "ramp"]
    assert entries and all(e.contained for e in entries)
    assert not res.breaches


@pytest.mark.parametrize("which", ["run1", "run2"])
def test_ramp_monotone(which, request):
    tr = request.getfixturevalue(which).trace
    ramps = [e for e in tr.events if e.reason == "ramp"]
    assert ramps
    cfg = request.getfixturevalue(which).spec.supervisor
    for e in ramps:
        assert e.I_OL_active >= cfg.I_OL_nominal
    # between gate decisions the active set-point never rises
    iol = tr["IOL"]
    mode = tr["mode"]
    t = tr["t"]
    gates = [e.t for e in tr.events if e.reason in ("overload", "overload_retrigger")]
    rises = np.nonzero(np.diff(np.where(mode == 2, iol, 0.0)) > 0)[0]
    for i in rises:
        assert any(t[i] <= g <= t[i + 1] for g in gates)


def test_trace_mode_column_matches_events(run2):
    tr = run2.trace
    for e in mode_changes(tr):
        after = tr["mode"][tr["t"] > e.t + 1e-3][0]
        assert after == e.to_mode


def test_ramp_waits_for_dwell():
    s = make(SupervisorConfig(dwell=0.5))
    s.decide(20.0, *at(17.5), 0.0, R)
    assert s.decide(16.0, *at(17.5), 0.49, R) is None
    assert s.I_OL_active == 17.5


def test_scenario2_heavy_step_enters_top_of_ladder(run2):
    e = next(e for e in run2.trace.events if 15.0 <= e.t < 15.1)
    assert e.gate_verdict == "enter_reduced(17.5)"


@pytest.mark.parametrize("which", ["run1", "run2"])
def test_five_second_capability(which, request):
    res = request.getfixturevalue(which)
    tr = res.trace
    cfg = res.spec.supervisor
    lo, hi = cfg.I_OL_nominal - cfg.eta, cfg.I_OL_nominal + cfg.eta
    t_end = res.spec.sim.t_end
    onsets = [e.t for e in tr.events if e.reason in ("overload", "overload_retrigger")]
    assert onsets
    for t0, t1 in zip(onsets, onsets[1:] + [t_end]):
        m = (tr["t"] >= t0) & (tr["t"] < min(t0 + 5.0, t1))
        ig = tr["Ig"][m]
        outside = np.nonzero((ig < lo) | (ig > hi))[0]
        assert outside.size == 0 or outside[-1] < len(ig) - 1, t0
        if outside.size:
            assert tr["t"][m][outside[-1] + 1] - t0 <= 5.0
