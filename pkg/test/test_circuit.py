#!/usr/bin/env python
# Copyright 2020 ARC Centre of Excellence for Climate Extremes
# author: Paola Petrelli <paola.petrelli@utas.edu.au>
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from dataclasses import replace

from xdam.circuit import (
    Element,
    Source,
    Switch,
    Netlist,
    CircuitState,
    SwitchSchedule,
    validate_netlist,
    switch_position,
    assemble,
    stored_energy,
    steady_state_phasor,
    steady_state_state,
    peak_times,
    carry_state,
    check_schedule,
    simulate,
    rk4_reference,
    with_dc_throw,
    scale_elements,
    replace_source,
    waveform_to_csv,
)
from xdam.exception import (
    XdamValidationError,
    TopologyError,
    ConnectivityError,
    ScheduleError,
    ProbeError,
)
from xdam_fixtures import *
import numpy.testing as nptest


def test_validate_netlist(netlist):
    validate_netlist(netlist)
    dup = replace(netlist, elements=netlist.elements + (Element("C", "capacitor", ("a", "0"), 1e-12),))
    with pytest.raises(XdamValidationError):
        validate_netlist(dup)
    zero = replace(netlist, elements=(Element("C1", "capacitor", ("a", "0"), 0.0),))
    with pytest.raises(XdamValidationError):
        validate_netlist(zero)
    bad_switch = replace(netlist, switches=(replace(netlist.switches[0], r_off=1.0),))
    with pytest.raises(XdamValidationError):
        validate_netlist(bad_switch)
    bad_probe = replace(netlist, probes=(("v_x", ("nowhere", "0")),))
    with pytest.raises(ProbeError):
        validate_netlist(bad_probe)


def test_switch_position():
    spst = Switch("S1", "SPST", "p", ("t",), 1.0, 1e6)
    spdt = Switch("S2", "SPDT", "p", ("t0", "t1"), 1.0, 1e6)
    assert switch_position(spst, "OFF") is None
    assert switch_position(spst, "ON") == 0
    assert switch_position(spdt, 1) == 1
    assert switch_position(spdt, "1") == 1
    with pytest.raises(XdamValidationError):
        switch_position(spdt, 2)
    with pytest.raises(XdamValidationError):
        switch_position(spst, "half")


def test_assemble_states(on_model, off_model):
    assert on_model.order == 5
    assert off_model.order == 5
    assert "C_L2+C_s" in off_model.state_labels
    assert "C_L1+S1.coff0" in off_model.state_labels
    assert "C_L1" in on_model.state_labels
    assert off_model.state_kinds.count("inductor-current") == 2
    k = off_model.state_labels.index("C_L2+C_s")
    nptest.assert_allclose(off_model.state_values[k], 5.6e-12)
    # every OFF mode decays
    assert np.max(np.linalg.eigvals(off_model.a).real) < 0


def test_assemble_rc(rc_netlist):
    model = assemble(rc_netlist, {})
    nptest.assert_allclose(model.a, [[-1e6]])
    nptest.assert_allclose(model.b, [[1e6]])
    nptest.assert_allclose(model.c, [[1.0]])


def test_topology_errors():
    loop = Netlist(
        elements=(
            Element("C1", "capacitor", ("a", "0"), 1e-12),
            Element("C2", "capacitor", ("a", "b"), 1e-12),
            Element("C3", "capacitor", ("b", "0"), 1e-12),
            Element("R1", "resistor", ("a", "0"), 50.0),
        ),
        probes=(("v", ("a", "0")),),
    )
    with pytest.raises(TopologyError, match="Capacitor loop through C1, C2, C3"):
        assemble(loop, {})
    # an ideal source closes a loop with a single capacitor
    across_source = Netlist(
        elements=(
            Element("C1", "capacitor", ("a", "0"), 1e-12),
            Element("R1", "resistor", ("a", "0"), 50.0),
        ),
        sources=(Source("vs", ("a", "0"), amplitude=1.0, frequency=1e6),),
        probes=(("v", ("a", "0")),),
    )
    with pytest.raises(TopologyError, match="Capacitor loop through C1, vs"):
        assemble(across_source, {})
    # the same capacitor behind a source resistance is a valid state
    model = assemble(replace(across_source, sources=(
        Source("vs", ("a", "0"), amplitude=1.0, frequency=1e6, series_resistance=5.0),)), {})
    assert model.order == 1
    cutset = Netlist(
        elements=(
            Element("L1", "inductor", ("a", "0"), 1e-6),
            Element("L2", "inductor", ("a", "b"), 1e-6),
            Element("R1", "resistor", ("s", "b"), 50.0),
            Element("R2", "resistor", ("b", "0"), 50.0),
        ),
        sources=(Source("vs", ("s", "0"), amplitude=1.0, frequency=1e6, series_resistance=5.0),),
        probes=(("v", ("a", "0")),),
    )
    with pytest.raises(TopologyError, match="Inductor cutset formed by L1, L2"):
        assemble(cutset, {})
    floating = Netlist(
        elements=(
            Element("R1", "resistor", ("a", "0"), 50.0),
            Element("R2", "resistor", ("x", "y"), 50.0),
        ),
        probes=(("v", ("a", "0")),),
    )
    with pytest.raises(ConnectivityError):
        assemble(floating, {})


def test_assemble_config(netlist):
    # the configuration must name every switch
    with pytest.raises(XdamValidationError):
        assemble(netlist, {})
    with pytest.raises(XdamValidationError):
        assemble(netlist, {"S1": 0, "S2": 0})


def test_steady_state_phasor(rc_sine):
    model = assemble(rc_sine, {})
    ph = steady_state_phasor(model, rc_sine)
    nptest.assert_allclose(ph["v_c"], 1 / (1 + 1j), rtol=1e-9)
    nptest.assert_allclose(np.angle(ph["v_c"], deg=True), -45.0)


def test_reference_transmitter_vss(phasors):
    # 1 V source gives about 14.1 V at the antenna terminal
    nptest.assert_allclose(abs(phasors["v_a"]), 14.1, rtol=0.03)
    # v_rad leads by almost half a cycle with about 0.215 of the terminal amplitude
    ratio = phasors["v_rad"] / phasors["v_a"]
    nptest.assert_allclose(abs(ratio), 0.2152, rtol=0.01)
    nptest.assert_allclose(phasors["v_a"] - phasors["v_rad"], phasors["v_C"], rtol=1e-9)


def test_peak_times():
    peaks = peak_times(2 * np.exp(-1j * np.pi / 3), 1.0, (0.0, 2.0))
    nptest.assert_allclose(peaks, [1 / 6, 7 / 6])
    peaks = peak_times(1.0, 1.0, (0.0, 1.0), source_phase=np.pi / 2)
    nptest.assert_allclose(peaks, [0.75])


def test_stored_energy(rc_netlist):
    model = assemble(rc_netlist, {})
    state = CircuitState(0.0, {"C1": 2.0})
    nptest.assert_allclose(stored_energy(model, state), 2e-9)


def test_carry_state(netlist, on_model, off_model, phasors):
    on_state = steady_state_state(on_model, phasors, F_C, 0.0)
    off_state = carry_state(on_state, on_model, off_model)
    # the switch capacitance joins C_L1 and takes its voltage
    assert off_state.values["C_L1+S1.coff0"] == on_state.values["C_L1"]
    assert off_state.values["C_L2+C_s"] == on_state.values["C_L2+C_s"]
    assert off_state.values["L_m"] == on_state.values["L_m"]


def test_check_schedule():
    check_schedule(SwitchSchedule({"S1": 0}, ((1.0, {"S1": "OFF"}), (2.0, {"S1": 0}))), 0.0, 3.0)
    with pytest.raises(ScheduleError):
        check_schedule(SwitchSchedule({"S1": 0}, ((2.0, {"S1": "OFF"}), (1.0, {"S1": 0}))), 0.0, 3.0)
    with pytest.raises(ScheduleError):
        check_schedule(SwitchSchedule({"S1": 0}, ((1.0, {"S1": "OFF"}), (1.0, {"S1": 0}))), 0.0, 3.0)
    with pytest.raises(ScheduleError):
        check_schedule(SwitchSchedule({"S1": 0}, ((4.0, {"S1": "OFF"}),)), 0.0, 3.0)


def test_simulate_rc(rc_netlist):
    ds, final = simulate(rc_netlist, SwitchSchedule({}), 5e-6, 1e-7)
    t = ds["time"].values
    nptest.assert_allclose(ds["v_c"].values, 1 - np.exp(-t / 1e-6), atol=1e-10)
    nptest.assert_allclose(final.values["C1"], 1 - np.exp(-5.0), rtol=1e-9)
    assert ds["time"].attrs["units"] == "s"
    with pytest.raises(ProbeError):
        simulate(rc_netlist, SwitchSchedule({}), 5e-6, 1e-7, probes=["v_x"])
    with pytest.raises(XdamValidationError):
        simulate(rc_netlist, SwitchSchedule({}), 5e-6, 0.0)


def test_simulate_switched_rc(switched_rc):
    schedule = SwitchSchedule({"S1": "OFF"}, ((1e-6, {"S1": "ON"}),))
    ds, _ = simulate(switched_rc, schedule, 6e-6, 1e-8)
    t = ds["time"].values
    expected = np.where(t < 1e-6, 0.0, 1 - np.exp(-(t - 1e-6) / 1e-6))
    nptest.assert_allclose(ds["v_out"].values, expected, atol=1e-6)


def test_simulate_steady_state(netlist, on_model, phasors):
    state0 = steady_state_state(on_model, phasors, F_C, 0.0)
    ds, _ = simulate(netlist, SwitchSchedule({"S1": 0}), 3 * T_C, T_C / 64, initial_state=state0)
    t = ds["time"].values
    v_ss = abs(phasors["v_a"])
    expected = np.real(phasors["v_a"] * np.exp(2j * np.pi * F_C * t))
    nptest.assert_allclose(ds["v_a"].values, expected, atol=1e-8 * v_ss)


def test_simulate_against_rk4(netlist, on_model, off_model, phasors):
    # 32 steps per time constant of the fastest pole of either configuration
    fastest = max(np.abs(np.linalg.eigvals(m.a)).max() for m in (on_model, off_model))
    per_cycle = int(np.ceil(32 * T_C * fastest))
    step = T_C / per_cycle
    t_event = step * per_cycle
    t_end = step * (2 * per_cycle)
    schedule = SwitchSchedule({"S1": 0}, ((t_event, {"S1": "OFF"}),))
    state0 = steady_state_state(on_model, phasors, F_C, 0.0)
    exact, _ = simulate(netlist, schedule, t_end, step, initial_state=state0)
    ref = rk4_reference(netlist, schedule, t_end, step, initial_state=state0)
    assert exact.sizes["time"] == ref.sizes["time"]
    v_ss = abs(phasors["v_a"])
    for name in ("v_a", "v_rad", "v_C"):
        nptest.assert_allclose(exact[name].values, ref[name].values, rtol=0, atol=1e-6 * v_ss)


def energy_trace(ds, models):
    """Stored energy at every sample from the recorded state trajectories"""
    values = {}
    for model in models:
        values.update(zip(model.state_labels, model.state_values))
    energy = np.zeros(ds.sizes["time"])
    for label, value in values.items():
        energy += 0.5 * value * np.nan_to_num(ds[label].values) ** 2
    return energy


def test_simulate_passive(netlist, on_model, phasors):
    # without the switch capacitance every label persists across events
    # and the source-free circuit can only lose energy
    bare = replace(netlist, switches=(replace(netlist.switches[0], c_parallel=0.0),))
    quiet = replace_source(bare, "vcw", amplitude=0.0)
    models = [assemble(quiet, {"S1": 0}), assemble(quiet, {"S1": "OFF"})]
    dt = T_C / 64
    events = tuple((dt * k, {"S1": pos}) for k, pos in ((64, "OFF"), (96, 0), (160, "OFF")))
    state0 = steady_state_state(on_model, phasors, F_C, 0.0)
    ds, final = simulate(quiet, SwitchSchedule({"S1": 0}, events), dt * 256, dt,
                         initial_state=state0, record_states=True)
    energy = energy_trace(ds, models)
    nptest.assert_allclose(energy[0], stored_energy(on_model, state0), rtol=1e-12)
    assert energy[-1] > 0
    assert (np.diff(energy) <= 1e-9 * energy[:-1]).all()
    # the energy left at the end is what the last state holds
    nptest.assert_allclose(energy[-1], stored_energy(models[1], final), rtol=1e-9)


def test_opening_adds_switch_capacitance(netlist, on_model, off_model, phasors):
    # at opening the switch capacitance takes the voltage of C_L1
    on_state = steady_state_state(on_model, phasors, F_C, 0.3 * T_C)
    off_state = carry_state(on_state, on_model, off_model)
    c_sw = netlist.switch("S1").c_parallel
    jump = stored_energy(off_model, off_state) - stored_energy(on_model, on_state)
    nptest.assert_allclose(jump, 0.5 * c_sw * on_state.values["C_L1"] ** 2, rtol=1e-9)


def test_simulate_linear(netlist):
    dt = T_C / 64
    schedule = SwitchSchedule({"S1": 0}, ((dt * 128, {"S1": "OFF"}), (dt * 160, {"S1": 0})))
    base, _ = simulate(netlist, schedule, dt * 256, dt)
    k = 3.7
    scaled, _ = simulate(replace_source(netlist, "vcw", amplitude=k), schedule, dt * 256, dt)
    for name in ("v_a", "v_rad", "v_C"):
        expected = k * base[name].values
        err = np.abs(scaled[name].values - expected).max()
        assert err <= 1e-12 * np.abs(expected).max()


def test_simulate_state_continuity(netlist, on_model, phasors):
    dt = T_C / 64
    j = 100
    t_event = dt * j
    state0 = steady_state_state(on_model, phasors, F_C, 0.0)
    _, before = simulate(netlist, SwitchSchedule({"S1": 0}), t_event, dt, initial_state=state0)
    schedule = SwitchSchedule({"S1": 0}, ((t_event, {"S1": "OFF"}),))
    ds, _ = simulate(netlist, schedule, dt * 160, dt, initial_state=state0, record_states=True)
    assert ds["time"].values[j] == t_event
    # the sample at the event is the first of the open segment
    for label in ("C", "L_m", "L", "C_L2+C_s"):
        assert ds[label].values[j] == before.values[label]
    assert ds["C_L1+S1.coff0"].values[j] == before.values["C_L1"]
    assert np.isnan(ds["C_L1"].values[j])
    assert np.isnan(ds["C_L1+S1.coff0"].values[j - 1])


def test_with_dc_throw(netlist):
    dc = with_dc_throw(netlist, 3.0)
    sw = dc.switch("S1")
    assert sw.kind == "SPDT"
    assert sw.throws == ("src", "dc")
    assert dc.source("vdc").level == 3.0
    # throw 1 connects the pole to the DC source
    model = assemble(dc, {"S1": 1})
    assert model.order == 5
    with pytest.raises(XdamValidationError):
        with_dc_throw(dc, 1.0)


def test_scale_elements(netlist):
    scaled = scale_elements(netlist, 1e-6, ("C_L1", "C_s"))
    nptest.assert_allclose(scaled.element("C_L1").value, 2.9e-18)
    nptest.assert_allclose(scaled.element("C").value, 9.3e-12)
    nptest.assert_allclose(scaled.switch("S1").c_parallel, 4e-18)
    assert scaled.switch("S1").r_off == netlist.switch("S1").r_off
    leaky = scale_elements(netlist, 1e-6, ("C_L1",), switch_leakage=True)
    nptest.assert_allclose(leaky.switch("S1").r_off, 2.7e13)
    with pytest.raises(XdamValidationError):
        scale_elements(netlist, 0.0, ("C_L1",))


def test_waveform_to_csv(rc_netlist, tmp_path):
    ds, _ = simulate(rc_netlist, SwitchSchedule({}), 1e-6, 1e-7)
    path = waveform_to_csv(ds, tmp_path / "wave.csv")
    df = pd.read_csv(path)
    assert list(df.columns) == ["time_s", "v_c"]
    assert len(df) == 11
