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

"""Receiver side processing: IQ downconversion, constellations and
signal quality metrics of the radiated waveform.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import pandas as pd
import xarray as xr
from scipy import signal

from .exception import XdamValidationError, RiseTimeout


logger = logging.getLogger(__name__)

EVM_FLOOR_DB = -200.0


@dataclass
class Constellation:
    """Symbol-spaced samples of an IQ signal, normalized so that the mean
    magnitude of the cluster means is 1 (``scale`` undoes it)."""

    points: np.ndarray
    labels: np.ndarray
    indices: np.ndarray
    means: dict
    scale: float = 1.0
    offset: float = 0.0
    attrs: dict = field(default_factory=dict)

    @property
    def raw_points(self):
        return self.points * self.scale

    def errors(self):
        mu = np.array([self.means[lab] for lab in self.labels])
        return self.points - mu

    def to_frame(self):
        """Table with columns ``symbol_index,label,re,im``"""
        return pd.DataFrame(
            {
                "symbol_index": self.indices,
                "label": self.labels,
                "re": self.points.real,
                "im": self.points.imag,
            }
        )


def _sample_interval(da):
    t = da["time"].values
    if t.size < 2:
        raise XdamValidationError("Signal needs at least two samples")
    return float(t[1] - t[0])


def lowpass_taps(fs, cutoff, stopband_db=60.0, width=None):
    """Kaiser windowed-sinc lowpass with an odd number of taps.

    ``width`` is the transition band in Hz centred on ``cutoff``
    (default half the cutoff).
    """
    width = 0.5 * cutoff if width is None else width
    ntaps, beta = signal.kaiserord(stopband_db, width / (0.5 * fs))
    ntaps += 1 - ntaps % 2
    return signal.firwin(ntaps, cutoff, window=("kaiser", beta), fs=fs)


def downconvert(waveform, f_c, cutoff, stopband_db=60.0):
    """Complex baseband of a real passband waveform.

    The waveform is mixed with 2 exp(-j 2 pi f_c t) and lowpass filtered
    with a linear-phase FIR whose group delay is removed, so that
    V cos(2 pi f_c t + phi) maps to V exp(j phi).

    Parameters
    ----------
    waveform: xarray DataArray
        Real samples along ``time`` (s), uniformly spaced
    f_c: float
        Carrier frequency in Hz
    cutoff: float
        Lowpass cutoff in Hz, must be below f_c
    stopband_db: float, optional
        Stopband attenuation of the filter (default 60 dB)

    Returns
    -------
    iq: xarray DataArray
        Complex baseband samples on the input time grid
    """
    dt = _sample_interval(waveform)
    fs = 1.0 / dt
    if fs < 4 * f_c:
        raise XdamValidationError(
            f"Sample rate {fs:.6g} Hz is below 4 f_c ({4 * f_c:.6g} Hz)"
        )
    if not 0 < cutoff < f_c:
        raise XdamValidationError(
            f"Cutoff {cutoff:.6g} Hz must lie in (0, f_c) to avoid aliasing the 2 f_c image"
        )
    t = waveform["time"].values
    mixed = 2.0 * waveform.values * np.exp(-2j * np.pi * f_c * t)
    taps = lowpass_taps(fs, cutoff, stopband_db)
    base = signal.fftconvolve(mixed, taps, mode="same")
    logger.debug(f"Downconverted {t.size} samples with {taps.size} taps")
    iq = xr.DataArray(base, coords={"time": waveform["time"]}, dims="time")
    iq.attrs = {
        "units": waveform.attrs.get("units", "V"),
        "long_name": "complex baseband",
        "carrier": f_c,
        "cutoff": cutoff,
        "sample_interval": dt,
    }
    return iq


def envelope(iq):
    env = np.abs(iq)
    env.attrs = {"units": iq.attrs.get("units", "V"), "long_name": "envelope"}
    return env


def add_awgn(waveform, snr_db, seed=0):
    """Add white Gaussian noise at ``snr_db`` relative to the mean power
    of the waveform. ``snr_db=None`` returns the waveform unchanged."""
    if snr_db is None:
        return waveform
    rng = np.random.default_rng(seed)
    power = float(np.mean(np.abs(waveform.values) ** 2))
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    if np.iscomplexobj(waveform.values):
        noise = (sigma / np.sqrt(2)) * (
            rng.standard_normal(waveform.size) + 1j * rng.standard_normal(waveform.size)
        )
    else:
        noise = sigma * rng.standard_normal(waveform.size)
    noisy = waveform.copy(data=waveform.values + noise)
    noisy.attrs["snr_db"] = snr_db
    return noisy


def _mean_pairwise(means):
    pairs = list(combinations(range(means.shape[0]), 2))
    return np.mean([np.abs(means[i] - means[j]) for i, j in pairs], axis=0)


def sample_constellation(iq, starts, symbol_period, labels):
    """Sample one point per symbol at the offset that spreads the clusters most.

    Every IQ sample instant within one symbol period is tried as the
    common sampling offset; the offset maximizing the mean pairwise
    distance between the cluster means wins.

    Parameters
    ----------
    iq: xarray DataArray
        Complex baseband along ``time``
    starts: array
        Start time of each symbol in s
    symbol_period: float
        Symbol duration in s
    labels: array
        Transmitted symbol label of each symbol

    Returns
    -------
    constellation: Constellation
        Normalized points with their cluster means
    offset: float
        Chosen sampling offset from the symbol start in s
    """
    starts = np.asarray(starts, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise XdamValidationError("Constellation needs at least two distinct labels")
    if labels.size < uniq.size or labels.size != starts.size:
        raise XdamValidationError(
            f"Not enough symbols ({labels.size}) for {uniq.size} clusters"
        )
    dt = _sample_interval(iq)
    t0 = float(iq["time"].values[0])
    noff = max(int(round(symbol_period / dt)), 1)
    first = np.rint((starts - t0) / dt).astype(int)
    grid = first[:, None] + np.arange(noff)[None, :]
    if grid.min() < 0 or grid.max() >= iq.size:
        raise XdamValidationError("Symbols extend beyond the IQ signal")
    samples = iq.values[grid]
    means = np.array([samples[labels == lab].mean(axis=0) for lab in uniq])
    spread = _mean_pairwise(means)
    best = int(np.argmax(spread))
    points = samples[:, best]
    mu = means[:, best]
    scale = float(np.mean(np.abs(mu)))
    if scale == 0:
        raise XdamValidationError("Cluster means are all zero")
    logger.debug(f"Sampling offset {best}/{noff} samples, spread {spread[best]:.4g}")
    const = Constellation(
        points=points / scale,
        labels=labels,
        indices=np.arange(labels.size),
        means={lab: m / scale for lab, m in zip(uniq.tolist(), mu)},
        scale=scale,
        offset=best * dt,
        attrs={"spread": spread},
    )
    return const, best * dt


def _check_clusters(const):
    if const.points.size == 0 or not const.means:
        raise XdamValidationError("Constellation has no points")


def evm_db(const):
    """EVM in dB, the power of the deviations from the cluster means over
    the mean cluster power. Returns -200 dB when every point sits on its mean."""
    _check_clusters(const)
    err = np.mean(np.abs(const.errors()) ** 2)
    ref = np.mean(np.abs(np.array(list(const.means.values()))) ** 2)
    if err == 0:
        return EVM_FLOOR_DB
    return max(float(10 * np.log10(err / ref)), EVM_FLOOR_DB)


def cluster_sd(const):
    _check_clusters(const)
    return float(np.sqrt(np.mean(np.abs(const.errors()) ** 2)))


def avg_symbol_power(const, reference):
    """Mean symbol power before normalization divided by ``reference``"""
    if not reference > 0:
        raise XdamValidationError("Reference symbol power must be > 0")
    return float(np.mean(np.abs(const.raw_points) ** 2) / reference)


def min_mean_distance(const):
    means = np.array(list(const.means.values()))
    return float(min(abs(a - b) for a, b in combinations(means, 2)))


def rise_time_95(env, event_time, steady, hold, level=0.95):
    """Time from ``event_time`` until the envelope reaches ``level`` times
    ``steady`` and stays there for at least ``hold`` seconds.

    Raises RiseTimeout, carrying the largest fraction reached, when the
    level is never held.
    """
    if not steady > 0:
        raise XdamValidationError("Steady level must be > 0")
    t = env["time"].values
    if not t[0] <= event_time <= t[-1]:
        raise XdamValidationError(f"Event time {event_time} is outside the signal")
    sel = t >= event_time
    tt, vv = t[sel], np.asarray(env.values)[sel]
    above = vv >= level * steady
    n = tt.size
    # index of the first sample below the level at or after each sample
    nxt = np.minimum.accumulate(np.where(~above, np.arange(n), n)[::-1])[::-1]
    t_drop = np.where(nxt < n, tt[np.minimum(nxt, n - 1)], np.inf)
    ok = above & (t_drop - tt > hold) & (tt[-1] - tt >= hold)
    if not ok.any():
        frac = float(vv.max() / steady) if vv.size else 0.0
        raise RiseTimeout(
            f"Envelope never held {level:.0%} of steady level, max {frac:.3f}",
            max_fraction=frac,
        )
    return float(tt[np.argmax(ok)] - event_time)


def demodulate(waveform, f_c, starts, symbol_period, labels, cutoff=0.45,
               snr_db=None, seed=0):
    """Constellation of a received waveform: optional noise, downconversion
    with a cutoff of ``cutoff`` times f_c, then symbol sampling."""
    noisy = add_awgn(waveform, snr_db, seed)
    iq = downconvert(noisy, f_c, cutoff * f_c)
    const, _ = sample_constellation(iq, starts, symbol_period, labels)
    return const


def signal_metrics(const, reference_power=None, rise_time=None):
    """Flat metrics mapping, ``avg_power`` needs a reference power"""
    metrics = {"evm_db": evm_db(const), "sd": cluster_sd(const)}
    metrics["avg_power"] = (
        avg_symbol_power(const, reference_power) if reference_power is not None else np.nan
    )
    metrics["rise_time_s"] = np.nan if rise_time is None else rise_time
    return metrics


def metrics_to_text(metrics, path):
    """Write ``key=value`` lines"""
    with open(path, "w") as f:
        for key, value in metrics.items():
            f.write(f"{key}={value}\n" if isinstance(value, str) else f"{key}={value:.10g}\n")
    return path
