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

from xdam.receiver import (
    EVM_FLOOR_DB,
    downconvert,
    envelope,
    add_awgn,
    sample_constellation,
    evm_db,
    cluster_sd,
    avg_symbol_power,
    min_mean_distance,
    rise_time_95,
    demodulate,
    signal_metrics,
    metrics_to_text,
)
from xdam.modulator import map_qpsk
from xdam.exception import XdamValidationError, RiseTimeout
from xdam_fixtures import *
import numpy.testing as nptest


def carrier(amplitude, phase, f_c=1e6, spc=32, cycles=400):
    t = np.arange(cycles * spc) / (spc * f_c)
    v = amplitude * np.cos(2 * np.pi * f_c * t + phase)
    return xr.DataArray(v, coords={"time": t}, dims="time")


def test_downconvert():
    wave = carrier(3.0, 0.7)
    iq = downconvert(wave, 1e6, 0.45e6)
    assert iq.attrs["carrier"] == 1e6
    middle = iq.values[3000:-3000]
    nptest.assert_allclose(middle, 3.0 * np.exp(0.7j), atol=2e-3 * 3.0)
    env = envelope(iq)
    nptest.assert_allclose(env.values[3000:-3000], 3.0, atol=2e-3 * 3.0)
    with pytest.raises(XdamValidationError):
        downconvert(carrier(1.0, 0.0, spc=3), 1e6, 0.45e6)
    with pytest.raises(XdamValidationError):
        downconvert(wave, 1e6, 1.2e6)


def test_sample_constellation(qpsk_iq):
    iq, starts, labels = qpsk_iq
    const, offset = sample_constellation(iq, starts, 10.0, labels)
    assert offset == 0.0
    nptest.assert_allclose(const.scale, 1.0)
    for lab in range(4):
        nptest.assert_allclose(const.means[lab], np.exp(1j * (np.pi / 4 + lab * np.pi / 2)),
                               atol=1e-12)
    df = const.to_frame()
    assert list(df.columns) == ["symbol_index", "label", "re", "im"]
    assert len(df) == 40
    with pytest.raises(XdamValidationError):
        sample_constellation(iq, starts, 10.0, np.zeros(40, dtype=int))
    with pytest.raises(XdamValidationError):
        sample_constellation(iq, starts + 10.0, 10.0, labels)


def test_signal_quality(qpsk_iq):
    iq, starts, labels = qpsk_iq
    const, _ = sample_constellation(iq, starts, 10.0, labels)
    # deviations of 0.1 around unit means
    nptest.assert_allclose(evm_db(const), -20.0)
    nptest.assert_allclose(cluster_sd(const), 0.1)
    nptest.assert_allclose(avg_symbol_power(const, 1.0), 1.01)
    nptest.assert_allclose(min_mean_distance(const), np.sqrt(2))
    metrics = signal_metrics(const, reference_power=2.0)
    nptest.assert_allclose(metrics["avg_power"], 0.505)
    assert np.isnan(metrics["rise_time_s"])
    with pytest.raises(XdamValidationError):
        avg_symbol_power(const, 0.0)


def test_evm_floor():
    labels = np.tile([0, 1], 5)
    values = np.repeat(np.where(labels == 0, 1.0 + 0j, -1.0 + 0j), 4)
    iq = xr.DataArray(values, coords={"time": np.arange(values.size) * 1.0}, dims="time")
    const, _ = sample_constellation(iq, 4.0 * np.arange(10), 4.0, labels)
    assert evm_db(const) == EVM_FLOOR_DB


def test_add_awgn():
    wave = carrier(1.0, 0.0, cycles=1000)
    noisy = add_awgn(wave, 10.0, seed=3)
    noise = noisy.values - wave.values
    nptest.assert_allclose(np.mean(noise**2), 0.1 * np.mean(wave.values**2), rtol=0.05)
    nptest.assert_array_equal(noisy.values, add_awgn(wave, 10.0, seed=3).values)
    assert add_awgn(wave, None) is wave
    assert noisy.attrs["snr_db"] == 10.0


def test_rise_time_95():
    t = np.arange(0, 20.0, 0.01)
    env = xr.DataArray(1 - np.exp(-t), coords={"time": t}, dims="time")
    nptest.assert_allclose(rise_time_95(env, 0.0, 1.0, hold=1.0), np.log(20), atol=0.011)
    # timed from a later event
    nptest.assert_allclose(rise_time_95(env, 1.0, 1.0, hold=1.0), np.log(20) - 1.0, atol=0.011)
    with pytest.raises(RiseTimeout) as exc:
        rise_time_95(0.5 * env, 0.0, 1.0, hold=1.0)
    nptest.assert_allclose(exc.value.max_fraction, 0.5, rtol=1e-6)
    with pytest.raises(XdamValidationError):
        rise_time_95(env, 30.0, 1.0, hold=1.0)


def test_demodulate_psk():
    f_c, spc, cycles = 1e6, 32, 24
    symbols = map_qpsk(np.tile([0, 0, 0, 1, 1, 1, 1, 0], 4), 1 / f_c, cycles)
    lead = 10 / f_c
    t = np.arange((len(symbols) * cycles + 20) * spc) / (spc * f_c)
    phase = np.full(t.size, symbols.phases[0])
    starts = symbols.starts(lead)
    for t0, ph in zip(starts, symbols.phases):
        phase = np.where(t >= t0, ph, phase)
    wave = xr.DataArray(np.cos(2 * np.pi * f_c * t + phase), coords={"time": t}, dims="time")
    const = demodulate(wave, f_c, starts, symbols.symbol_period, symbols.labels)
    assert evm_db(const) < -30
    for lab, mean in const.means.items():
        nptest.assert_allclose(np.angle(mean * np.exp(-1j * (np.pi / 4 + lab * np.pi / 2))), 0.0,
                               atol=0.01)


def test_metrics_to_text(tmp_path):
    path = metrics_to_text({"evm_db": -21.5, "mode": "LTI"}, tmp_path / "metrics.txt")
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines == ["evm_db=-21.5", "mode=LTI"]
