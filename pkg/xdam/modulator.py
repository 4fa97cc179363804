#!/usr/bin/env python
# coding: utf-8
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

"""Symbol streams and peak-aligned switching schedules for LTI,
open-circuit DAM and DC-assisted DAM transmission.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import xarray as xr

from .circuit import SwitchSchedule, peak_times, replace_source
from .exception import XdamValidationError, ScheduleError


logger = logging.getLogger(__name__)

MODES = ("LTI", "OC_DAM", "DC_DAM")

# feedback taps of maximal-length Fibonacci registers, x^n + ... + 1
MAXIMAL_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    13: (13, 4, 3, 1),
    15: (15, 14),
    23: (23, 18),
    31: (31, 28),
}

QPSK_GRAY = {(0, 0): 0, (0, 1): 1, (1, 1): 2, (1, 0): 3}


@dataclass
class SymbolStream:
    """Phases theta_k of the carrier cos(2 pi f_c t + theta_k), one per symbol
    of ``cycles`` carrier periods"""

    phases: np.ndarray
    labels: np.ndarray
    bits: np.ndarray
    carrier_period: float = 1.0
    cycles: int = 1
    scheme: str = "qpsk"

    def __post_init__(self):
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise XdamValidationError(f"Cycles per symbol must be an integer >= 1, got {self.cycles}")
        self.cycles = int(self.cycles)

    def __len__(self):
        return len(self.phases)

    @property
    def symbol_period(self):
        return self.cycles * self.carrier_period

    def with_timing(self, carrier_period, cycles):
        return SymbolStream(self.phases, self.labels, self.bits, carrier_period, cycles, self.scheme)

    def starts(self, t_start):
        """Nominal start time of every symbol"""
        return t_start + self.symbol_period * np.arange(len(self))


@dataclass(frozen=True)
class TransmitterMode:
    variant: str = "LTI"
    v_dc: float = None

    def __post_init__(self):
        if self.variant not in MODES:
            raise XdamValidationError(f"Unknown transmitter mode {self.variant}, expected one of {MODES}")
        if self.variant == "DC_DAM" and (self.v_dc is None or not np.isfinite(self.v_dc)):
            raise XdamValidationError("DC_DAM mode needs a finite v_dc")


@dataclass
class ScheduledTransmission:
    """Switch schedule plus the piecewise source phase track, and the
    opening/closing instants of every gap.

    ``closing_lag`` is the delay from the last source maximum of the new
    symbol to its closing instant, the phase of the steady v_a phasor
    read as a time. It vanishes when v_a is in phase with the source.
    """

    schedule: SwitchSchedule
    phase_track: tuple
    openings: list = field(default_factory=list)
    closings: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    closing_lag: float = 0.0


def prbs_sequence(register_bits, taps=None, seed=1, n_bits=None):
    """Output bits of a Fibonacci linear feedback shift register.

    Parameters
    ----------
    register_bits: int
        Register length n, the sequence period is 2^n - 1 for maximal taps
    taps: tuple(int), optional
        Feedback tap positions, 1-based (default the maximal taps of n)
    seed: int, optional
        Nonzero initial register content (default 1)
    n_bits: int, optional
        Number of bits to return (default one period)

    Returns
    -------
    bits: numpy array
        Array of 0 and 1 (dtype int8)
    """
    if taps is None:
        if register_bits not in MAXIMAL_TAPS:
            raise XdamValidationError(f"No default taps for a {register_bits}-bit register")
        taps = MAXIMAL_TAPS[register_bits]
    mask = 2**register_bits - 1
    state = int(seed) & mask
    if state == 0:
        raise XdamValidationError("LFSR seed must be nonzero within the register width")
    n_bits = mask if n_bits is None else int(n_bits)
    bits = np.empty(n_bits, dtype=np.int8)
    for i in range(n_bits):
        fb = 0
        for tap in taps:
            fb ^= state >> (tap - 1)
        fb &= 1
        state = ((state << 1) | fb) & mask
        bits[i] = fb
    return bits


def map_qpsk(bits, carrier_period=1.0, cycles=1):
    """Gray mapping 00 -> pi/4, 01 -> 3pi/4, 11 -> 5pi/4, 10 -> 7pi/4"""
    bits = np.asarray(bits, dtype=np.int8)
    if bits.size % 2:
        raise XdamValidationError(f"QPSK needs an even number of bits, got {bits.size}")
    pairs = bits.reshape(-1, 2)
    labels = np.array([QPSK_GRAY[tuple(p)] for p in pairs.tolist()], dtype=int)
    phases = np.pi / 4 + labels * np.pi / 2
    return SymbolStream(phases, labels, pairs, carrier_period, cycles, "qpsk")


def map_bpsk(bits, carrier_period=1.0, cycles=1):
    """0 -> pi/4, 1 -> 5pi/4"""
    bits = np.asarray(bits, dtype=np.int8)
    labels = 2 * bits.astype(int)
    phases = np.pi / 4 + labels * np.pi / 2
    return SymbolStream(phases, labels, bits.reshape(-1, 1), carrier_period, cycles, "bpsk")


def symbol_rate(f_c, cycles):
    return f_c / cycles


def transition_angle(theta_old, theta_new):
    """Carrier phase consumed by a gap: holding the antenna state for
    t_gap delays the carrier, so the new phase is theta_old - dtheta"""
    return float(np.mod(theta_old - theta_new, 2 * np.pi))


def gap_time(dtheta, carrier_period):
    return float(np.mod(dtheta, 2 * np.pi) / (2 * np.pi) * carrier_period)


def build_schedule(symbols, mode, va_phasor, t_start, switch_id="S1", tol=1e-9):
    """Switch events and source phase track of a symbol stream.

    For every symbol boundary with a nonzero transition angle the RF path
    opens at the v_a peak at or before the nominal boundary and closes
    t_gap = (dtheta mod 2 pi)/(2 pi) T_c later; the source phase steps to
    the new symbol phase at the opening, so that at closing the circuit
    state again matches the steady state of the new symbol. The closing
    instant is therefore a v_a peak of the new symbol; it is also a source
    maximum when v_a is in phase with the source, and otherwise trails
    one by ``closing_lag``. In DC_DAM
    mode the switch moves to its DC throw during the gap. LTI mode keeps
    the switch closed and steps the source phase at the boundaries.

    Parameters
    ----------
    symbols: SymbolStream
        Symbols with their carrier period and cycles per symbol
    mode: TransmitterMode
        Transmitter variant
    va_phasor: complex
        Steady-state v_a phasor for a source of phase 0
    t_start: float
        Start of the first symbol in s, after the circuit reached steady state
    switch_id: str, optional
        Switch toggled by the schedule (default 'S1')

    Returns
    -------
    transmission: ScheduledTransmission
        Schedule, phase track and gap instants
    """
    if len(symbols) == 0:
        return ScheduledTransmission(SwitchSchedule({switch_id: 0}), ())
    t_c = symbols.carrier_period
    f_c = 1.0 / t_c
    t_s = symbols.symbol_period
    starts = symbols.starts(t_start)
    track = [(t_start, float(symbols.phases[0]))]
    events, openings, closings, gaps = [], [], [], []
    off = 1 if mode.variant == "DC_DAM" else "OFF"
    for k in range(1, len(symbols)):
        old, new = symbols.phases[k - 1], symbols.phases[k]
        dtheta = transition_angle(old, new)
        if min(dtheta, 2 * np.pi - dtheta) < tol:
            continue
        boundary = starts[k]
        if mode.variant == "LTI":
            track.append((boundary, float(new)))
            continue
        t_gap = gap_time(dtheta, t_c)
        if t_gap >= t_s:
            raise ScheduleError(
                f"Gap {t_gap:.4g} s does not fit in symbol period {t_s:.4g} s"
            )
        peaks = peak_times(va_phasor, f_c, (boundary - t_c, boundary + tol * t_c), source_phase=old)
        t_open = float(min(peaks[-1], boundary))
        t_close = t_open + t_gap
        if events and t_open <= events[-1][0]:
            raise ScheduleError(
                f"Gap of symbol {k} opens at {t_open:.6g} s before the previous gap closed"
            )
        events.append((t_open, {switch_id: off}))
        events.append((t_close, {switch_id: 0}))
        track.append((t_open, float(new)))
        openings.append(t_open)
        closings.append(t_close)
        gaps.append(t_gap)
    logger.debug(f"{mode.variant}: {len(openings)} gaps over {len(symbols)} symbols")
    return ScheduledTransmission(
        schedule=SwitchSchedule({switch_id: 0}, tuple(events)),
        phase_track=tuple(track),
        openings=openings,
        closings=closings,
        gaps=gaps,
        closing_lag=float(np.mod(-np.angle(va_phasor), 2 * np.pi) / (2 * np.pi) * t_c),
    )


def phase_modulated(netlist, transmission, source_id="vcw"):
    """Netlist whose sinusoidal source follows the phase track"""
    track = transmission.phase_track
    phase = track[0][1] if track else 0.0
    return replace_source(
        netlist, source_id, kind="piecewise", phase=phase, phase_track=tuple(track)
    )


def synthesize_source(symbols, v_cw, f_c, phase_track, t_end, sample_interval, t_start=0.0):
    """Sampled source waveform V_cw cos(2 pi f_c t + theta(t)) with the
    piecewise-constant phase theta(t) of ``phase_track``"""
    times = t_start + sample_interval * np.arange(
        int(np.floor((t_end - t_start) / sample_interval + 1e-9)) + 1
    )
    phase = np.full(times.size, float(symbols.phases[0]) if len(symbols) else 0.0)
    for tb, ph in phase_track:
        phase = np.where(times >= tb, ph, phase)
    da = xr.DataArray(
        v_cw * np.cos(2 * np.pi * f_c * times + phase), coords={"time": times}, dims="time"
    )
    da.name = "v_src"
    da.attrs = {"units": "V", "long_name": "source voltage", "sample_interval": sample_interval}
    da["time"].attrs = {"units": "s", "long_name": "time"}
    return da


def schedule_to_frame(schedule):
    """Rows ``time_s,switch_id,position``"""
    rows = [
        (t, sid, str(pos)) for t, cfg in schedule.events for sid, pos in sorted(cfg.items())
    ]
    return pd.DataFrame(rows, columns=["time_s", "switch_id", "position"])


def symbols_to_frame(symbols):
    """Rows ``index,phase_rad,bit0,bit1``"""
    n = len(symbols)
    bits = np.asarray(symbols.bits).reshape(n, -1) if n else np.zeros((0, 2), dtype=int)
    return pd.DataFrame(
        {
            "index": np.arange(n),
            "phase_rad": np.asarray(symbols.phases, dtype=float),
            "bit0": bits[:, 0],
            "bit1": bits[:, 1] if bits.shape[1] > 1 else np.full(n, -1),
        }
    )
