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

from xdam.modulator import (
    SymbolStream,
    TransmitterMode,
    prbs_sequence,
    map_qpsk,
    map_bpsk,
    symbol_rate,
    transition_angle,
    gap_time,
    build_schedule,
    phase_modulated,
    synthesize_source,
    schedule_to_frame,
    symbols_to_frame,
)
from xdam.exception import XdamValidationError, ScheduleError
from xdam_fixtures import *
import numpy.testing as nptest


def three_symbols(phases=(np.pi / 4, -np.pi / 4, -np.pi / 4), cycles=3):
    n = len(phases)
    return SymbolStream(np.array(phases), np.arange(n), np.zeros((n, 2), dtype=np.int8),
                        carrier_period=1.0, cycles=cycles)


def test_prbs_sequence():
    bits = prbs_sequence(8, n_bits=510)
    # maximal length: period 255 with 128 ones
    assert bits[:255].sum() == 128
    nptest.assert_array_equal(bits[:255], bits[255:])
    assert prbs_sequence(3).size == 7
    assert prbs_sequence(3).sum() == 4
    nptest.assert_array_equal(prbs_sequence(5, seed=3), prbs_sequence(5, seed=3))
    with pytest.raises(XdamValidationError):
        prbs_sequence(8, seed=0)
    with pytest.raises(XdamValidationError):
        prbs_sequence(12)


def test_map_qpsk():
    symbols = map_qpsk([0, 0, 0, 1, 1, 1, 1, 0], carrier_period=2.0, cycles=3)
    nptest.assert_array_equal(symbols.labels, [0, 1, 2, 3])
    nptest.assert_allclose(symbols.phases, np.pi / 4 + np.pi / 2 * np.arange(4))
    assert len(symbols) == 4
    assert symbols.symbol_period == 6.0
    nptest.assert_allclose(symbols.starts(1.0), [1.0, 7.0, 13.0, 19.0])
    with pytest.raises(XdamValidationError):
        map_qpsk([0, 1, 1])


def test_map_bpsk():
    symbols = map_bpsk([0, 1, 1])
    nptest.assert_allclose(symbols.phases, [np.pi / 4, 5 * np.pi / 4, 5 * np.pi / 4])
    assert symbols.scheme == "bpsk"


def test_symbol_stream_cycles():
    with pytest.raises(XdamValidationError):
        three_symbols(cycles=0)
    with pytest.raises(XdamValidationError):
        three_symbols(cycles=2.5)
    assert symbol_rate(28.38e6, 3) == 9.46e6


def test_transition_angle():
    nptest.assert_allclose(transition_angle(np.pi / 4, -np.pi / 4), np.pi / 2)
    nptest.assert_allclose(transition_angle(0.0, np.pi / 2), 3 * np.pi / 2)
    nptest.assert_allclose(transition_angle(1.0, 1.0), 0.0)
    nptest.assert_allclose(gap_time(np.pi, 2.0), 1.0)
    nptest.assert_allclose(gap_time(np.pi / 2, 1.0), 0.25)


def test_transmitter_mode():
    assert TransmitterMode().variant == "LTI"
    with pytest.raises(XdamValidationError):
        TransmitterMode("AM")
    with pytest.raises(XdamValidationError):
        TransmitterMode("DC_DAM")
    assert TransmitterMode("DC_DAM", 3.0).v_dc == 3.0


def test_build_schedule_oc():
    tx = build_schedule(three_symbols(), TransmitterMode("OC_DAM"), 1.0, 0.875)
    # the boundary at 3.875 is itself a v_a peak of the first symbol
    nptest.assert_allclose(tx.openings, [3.875])
    nptest.assert_allclose(tx.closings, [4.125])
    nptest.assert_allclose(tx.gaps, [0.25])
    assert tx.schedule.initial == {"S1": 0}
    assert [cfg for _, cfg in tx.schedule.events] == [{"S1": "OFF"}, {"S1": 0}]
    assert len(tx.phase_track) == 2
    nptest.assert_allclose(tx.phase_track[1], (3.875, -np.pi / 4))


def test_build_schedule_dc_and_lti():
    tx = build_schedule(three_symbols(), TransmitterMode("DC_DAM", 2.0), 1.0, 0.875)
    assert [cfg for _, cfg in tx.schedule.events] == [{"S1": 1}, {"S1": 0}]
    tx = build_schedule(three_symbols(), TransmitterMode("LTI"), 1.0, 0.875)
    assert tx.schedule.events == ()
    assert tx.openings == []
    nptest.assert_allclose(tx.phase_track[1], (3.875, -np.pi / 4))
    empty = SymbolStream(np.zeros(0), np.zeros(0), np.zeros((0, 2)))
    assert build_schedule(empty, TransmitterMode("OC_DAM"), 1.0, 0.0).phase_track == ()


def test_build_schedule_energy_synchronous():
    phasor = np.exp(-1j * np.pi / 6)
    symbols = three_symbols()
    tx = build_schedule(symbols, TransmitterMode("OC_DAM"), phasor, 0.875)
    t_open, t_close = tx.openings[0], tx.closings[0]
    # the opening is the last v_a peak at or before the boundary
    assert 2.875 < t_open <= 3.875
    nptest.assert_allclose(np.cos(2 * np.pi * t_open + np.pi / 4 + np.angle(phasor)), 1.0)
    # after the gap v_a of the new symbol is at its peak again
    nptest.assert_allclose(np.cos(2 * np.pi * t_close - np.pi / 4 + np.angle(phasor)), 1.0)
    # v_a lags the source by 30 degrees, so the closing trails a source
    # maximum of the new symbol by 1/12 of a cycle
    nptest.assert_allclose(tx.closing_lag, 1 / 12, rtol=1e-12)
    nptest.assert_allclose(np.cos(2 * np.pi * (t_close - tx.closing_lag) - np.pi / 4), 1.0,
                           atol=1e-9)
    # with v_a in phase with the source every closing is a source maximum
    symbols = three_symbols(phases=(np.pi / 4, -np.pi / 4, 3 * np.pi / 4))
    tx = build_schedule(symbols, TransmitterMode("OC_DAM"), 2.5, 0.875)
    assert tx.closing_lag == 0.0
    assert len(tx.closings) == 2
    for t_close, (_, phase) in zip(tx.closings, tx.phase_track[1:]):
        nptest.assert_allclose(np.cos(2 * np.pi * t_close + phase), 1.0, atol=1e-9)


def test_build_schedule_overlap():
    # with one cycle per symbol the second gap opens as the first one closes
    symbols = three_symbols(phases=(np.pi / 4, -np.pi / 4, -3 * np.pi / 4), cycles=1)
    with pytest.raises(ScheduleError):
        build_schedule(symbols, TransmitterMode("OC_DAM"), 1.0, 0.875)
    # no gap is needed when the phase does not change
    same = three_symbols(phases=(np.pi / 4, np.pi / 4, np.pi / 4), cycles=1)
    assert build_schedule(same, TransmitterMode("OC_DAM"), 1.0, 0.875).gaps == []


def test_phase_modulated_source(netlist):
    tx = build_schedule(three_symbols(), TransmitterMode("OC_DAM"), 1.0, 0.875)
    modulated = phase_modulated(netlist, tx)
    src = modulated.source("vcw")
    assert src.kind == "piecewise"
    assert src.phase_at(0.9) == np.pi / 4
    assert src.phase_at(4.0) == -np.pi / 4
    t = np.array([0.5, 4.0])
    nptest.assert_allclose(
        src.value(t), np.cos(2 * np.pi * src.frequency * t + np.array([np.pi / 4, -np.pi / 4]))
    )


def test_synthesize_source():
    symbols = three_symbols()
    tx = build_schedule(symbols, TransmitterMode("LTI"), 1.0, 0.875)
    da = synthesize_source(symbols, 2.0, 1.0, tx.phase_track, 10.0, 0.125)
    assert da.name == "v_src"
    assert da.size == 81
    nptest.assert_allclose(da.sel(time=0.0).values, 2 * np.cos(np.pi / 4))
    nptest.assert_allclose(da.sel(time=5.0).values, 2 * np.cos(-np.pi / 4))


def test_frames():
    symbols = map_qpsk([0, 0, 1, 1])
    df = symbols_to_frame(symbols)
    assert list(df.columns) == ["index", "phase_rad", "bit0", "bit1"]
    nptest.assert_array_equal(df["bit0"].values, [0, 1])
    tx = build_schedule(three_symbols(), TransmitterMode("OC_DAM"), 1.0, 0.875)
    df = schedule_to_frame(tx.schedule)
    assert list(df.columns) == ["time_s", "switch_id", "position"]
    assert list(df["position"]) == ["OFF", "0"]
