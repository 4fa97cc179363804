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

"""Efficiency and Q scalable LTI antenna used as a yardstick for the
switched transmitters.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import xarray as xr
import dask

from .circuit import Netlist, assemble
from .exception import XdamValidationError, XdamNumericalError, CoverageError


logger = logging.getLogger(__name__)


@dataclass
class AntennaParameters:
    """Tabulated input impedance and the quantities derived from it.

    R_a is Re(Z_a) at every grid frequency, split into R_rad = eta R_a
    and R_ohm = (1 - eta) R_a. ``z0`` is the source impedance, equal to
    R_a at the resonance ``omega0`` unless overridden.
    """

    frequency: np.ndarray
    impedance: np.ndarray
    eta: float = 1.0
    z0: float = None
    omega0: float = None
    q_rad: float = None
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise XdamValidationError(f"Radiation efficiency must be in (0, 1], got {self.eta}")
        self.frequency = np.asarray(self.frequency, dtype=float)
        self.impedance = np.asarray(self.impedance, dtype=complex)

    @property
    def omega(self):
        return 2 * np.pi * self.frequency

    @property
    def r_a(self):
        return self.impedance.real

    @property
    def x_a(self):
        return self.impedance.imag

    @property
    def r_rad(self):
        return self.eta * self.r_a

    @property
    def r_ohm(self):
        return (1 - self.eta) * self.r_a

    @property
    def bandwidth_efficiency(self):
        return bandwidth_efficiency_product(self.eta, self.q_rad)


@dataclass(frozen=True)
class ScaleParams:
    xi: float = 1.0
    chi: float = 1.0

    def __post_init__(self):
        if not (self.xi > 0 and self.chi > 0):
            raise XdamValidationError(f"Scale factors must be > 0, got xi={self.xi}, chi={self.chi}")

    @property
    def identity(self):
        return self.xi == 1 and self.chi == 1


@dataclass
class TransferFunction:
    """h(omega) on a frequency grid (Hz); A is fixed to 1"""

    frequency: np.ndarray
    h: np.ndarray
    gamma: np.ndarray = None
    multiplier: float = 1.0
    flagged: np.ndarray = None
    scale: ScaleParams = None


def driving_point_impedance(netlist, node, frequency, switch_config=None):
    """Impedance seen into ``node`` with every independent source removed.

    Parameters
    ----------
    netlist: Netlist
        Circuit description
    node: str
        Terminal node, referred to ground
    frequency: array
        Frequencies in Hz
    switch_config: dict, optional
        Switch positions (default every switch on its first throw)

    Returns
    -------
    z: numpy array
        Complex impedance at each frequency
    """
    if switch_config is None:
        switch_config = {sw.id: 0 for sw in netlist.switches}
    passive = Netlist(
        elements=netlist.elements,
        switches=netlist.switches,
        probes=(("z", (node, netlist.ground)),),
        ground=netlist.ground,
    )
    model = assemble(passive, switch_config, inject_nodes=(node,))
    s = 2j * np.pi * np.atleast_1d(np.asarray(frequency, dtype=float))
    n = model.order
    z = np.full(s.shape, model.f[0, 0], dtype=complex)
    if n:
        sysm = s[:, None, None] * np.eye(n)[None] - model.a[None]
        rhs = np.broadcast_to(model.e[:, 0], (s.size, n))[..., None]
        x = np.linalg.solve(sysm, rhs)[..., 0]
        z = z + x @ model.c[0]
    return z


def resonance(frequency, impedance, near):
    """Frequency of the X = 0 crossing closest to ``near``, refined by
    linear interpolation between grid points"""
    x = np.imag(impedance)
    cross = np.nonzero(np.sign(x[:-1]) != np.sign(x[1:]))[0]
    if cross.size == 0:
        raise XdamNumericalError("Reactance has no zero crossing on the grid")
    k = cross[np.argmin(np.abs(frequency[cross] - near))]
    f0, f1, x0, x1 = frequency[k], frequency[k + 1], x[k], x[k + 1]
    return float(f0 - x0 * (f1 - f0) / (x1 - x0))


def q_from_impedance(z, omega, omega0, r_rad=None):
    """Q = omega0 |Z'(omega0)| / (2 R_rad(omega0)) from central differences.

    ``r_rad`` defaults to Re Z(omega0). omega0 must have a grid point on
    each side.
    """
    z = np.asarray(z, dtype=complex)
    omega = np.asarray(omega, dtype=float)
    if not omega[1] <= omega0 <= omega[-2]:
        raise XdamValidationError(f"omega0={omega0:.6g} is too close to the grid edge for a central difference")
    dz = np.gradient(z, omega)
    deriv = np.interp(omega0, omega, dz.real) + 1j * np.interp(omega0, omega, dz.imag)
    if r_rad is None:
        r_rad = np.interp(omega0, omega, z.real)
    if not r_rad > 0:
        raise XdamValidationError("Radiation resistance at omega0 must be > 0")
    return float(omega0 * abs(deriv) / (2 * r_rad))


def bandwidth_efficiency_product(eta, q_rad):
    """eta times the half-power fractional bandwidth 1/(eta Q_rad) of the
    loaded antenna"""
    if not q_rad:
        return np.nan
    return float(eta) / (float(eta) * float(q_rad))


def frequency_grid(f_c, points=2**14, span=(0.2, 3.0)):
    return np.linspace(span[0] * f_c, span[1] * f_c, int(points))


def antenna_parameters(netlist, f_c, eta=1.0, z0=None, node=None,
                       points=2**14, span=(0.2, 3.0), switch_config=None):
    """LTI antenna description from the ON-state transmitter netlist.

    Z_a(omega) is the impedance seen by the source: the matching inductor,
    the antenna RLC and everything else behind the closed switch. omega0
    is the reactance zero closest to the carrier, Q_rad comes from the
    impedance derivative there.
    """
    if node is None:
        sources = [src for src in netlist.sources if src.oscillating]
        if not sources:
            raise XdamValidationError("Netlist has no sinusoidal source to locate the terminal")
        node = sources[0].nodes[0]
    freq = frequency_grid(f_c, points, span)
    z = driving_point_impedance(netlist, node, freq, switch_config)
    f0 = resonance(freq, z, f_c)
    omega0 = 2 * np.pi * f0
    r0 = float(np.interp(f0, freq, z.real))
    params = AntennaParameters(frequency=freq, impedance=z, eta=eta,
                               z0=r0 if z0 is None else float(z0), omega0=omega0)
    params.q_rad = q_from_impedance(z, params.omega, omega0, r_rad=eta * r0)
    params.attrs = {"terminal": node, "r_a0": r0, "f0": f0}
    logger.info(f"Antenna resonance {f0 / 1e6:.4g} MHz, R_a {r0:.4g} Ohm, Q_rad {params.q_rad:.4g}")
    return params


def fit_series_rlc(z_untuned, f_c, fractional_bw, level_db=10.0, frequency=None, eta=None):
    """Series RLC tuned to ``f_c`` from an untuned impedance measurement.

    The capacitance follows from the untuned reactance, the inductance
    resonates it at f_c and the resistance is set so that the matched
    return loss bandwidth at ``level_db`` equals ``fractional_bw``.
    Returns AntennaParameters on ``frequency`` (default grid around f_c).
    """
    omega_c = 2 * np.pi * f_c
    x_u = np.imag(z_untuned)
    if not x_u < 0:
        raise XdamValidationError("Untuned antenna reactance must be capacitive")
    cap = -1.0 / (omega_c * x_u)
    ind = 1.0 / (omega_c**2 * cap)
    rho = 10 ** (-level_db / 20)
    k = 2 * rho / np.sqrt(1 - rho**2)
    res = omega_c * ind * fractional_bw / k
    if eta is None:
        eta = min(np.real(z_untuned) / res, 1.0)
    freq = frequency_grid(f_c) if frequency is None else np.asarray(frequency, dtype=float)
    omega = 2 * np.pi * freq
    z = res + 1j * (omega * ind - 1.0 / (omega * cap))
    params = AntennaParameters(frequency=freq, impedance=z, eta=eta, z0=res, omega0=omega_c)
    params.q_rad = q_from_impedance(z, omega, omega_c, r_rad=eta * res)
    params.attrs = {"r": res, "l": ind, "c": cap}
    logger.debug(f"Series RLC fit R={res:.4g} Ohm, L={ind:.4g} H, C={cap:.4g} F")
    return params


def scaled_impedance(params, xi, chi):
    """Z'_a = R_a + j xi chi X_a, with R'_rad = xi eta R_a and
    R'_ohm = (1 - xi eta) R_a"""
    scale = ScaleParams(xi, chi)
    if scale.xi * params.eta > 1 + 1e-12:
        raise XdamValidationError(
            f"xi*eta = {scale.xi * params.eta:.4g} exceeds 1, efficiency is unphysical"
        )
    return params.r_a + 1j * scale.xi * scale.chi * params.x_a


def reflection(z, z0):
    if not z0 > 0:
        raise XdamValidationError("Source impedance must be > 0")
    z = np.asarray(z, dtype=complex)
    den = z + z0
    if np.any(den == 0):
        raise XdamNumericalError("Reflection coefficient has a pole where Z = -Z0")
    return (z - z0) / den


def return_loss_bandwidth(gamma, frequency, f0, level_db=10.0):
    """Fractional width of the band around f0 where |Gamma| stays below
    the return loss ``level_db``"""
    mag = np.abs(gamma)
    limit = 10 ** (-level_db / 20)
    inside = mag <= limit
    k0 = int(np.argmin(np.abs(frequency - f0)))
    if not inside[k0]:
        return 0.0
    lo = k0
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = k0
    while hi < len(frequency) - 1 and inside[hi + 1]:
        hi += 1
    if lo == 0 or hi == len(frequency) - 1:
        raise CoverageError("Return loss band reaches the edge of the frequency grid")

    def edge(i, j):
        return frequency[i] + (limit - mag[i]) * (frequency[j] - frequency[i]) / (mag[j] - mag[i])

    return float((edge(hi, hi + 1) - edge(lo - 1, lo)) / f0)


def scaled_transfer(params, xi=1.0, chi=1.0):
    """h'(xi, chi) = h sqrt(xi) (1 - Gamma') / (1 - Gamma) with
    h = sqrt(eta) (1 - Gamma).

    Grid points where 1 - Gamma vanishes are flagged and take the limit
    value sqrt(xi eta)(1 - Gamma').
    """
    scale = ScaleParams(xi, chi)
    gamma = reflection(params.impedance, params.z0)
    h = np.sqrt(params.eta) * (1 - gamma)
    if scale.identity:
        return TransferFunction(params.frequency, h, gamma, flagged=np.zeros(h.shape, bool), scale=scale)
    gamma_p = reflection(scaled_impedance(params, xi, chi), params.z0)
    den = 1 - gamma
    flagged = den == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        hp = h * np.sqrt(scale.xi) * (1 - gamma_p) / den
    if flagged.any():
        logger.warning(f"{flagged.sum()} grid points have Gamma = 1, using the limit value")
        hp[flagged] = np.sqrt(scale.xi * params.eta) * (1 - gamma_p[flagged])
    return TransferFunction(params.frequency, hp, gamma_p, flagged=flagged, scale=scale)


def apply_transfer(transfer, waveform, tolerance=0.05):
    """Filter a real waveform with h'(f) in the frequency domain.

    The transfer is interpolated on the FFT bins inside the grid and is
    zero outside it, DC included, so the filtered waveform stays real.
    CoverageError is raised when more than ``tolerance`` of the waveform
    energy lies outside the grid.
    """
    x = np.asarray(waveform.values, dtype=float)
    dt = float(waveform["time"].values[1] - waveform["time"].values[0])
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, dt)
    fgrid = transfer.frequency
    outside = (freqs < fgrid[0]) | (freqs > fgrid[-1])
    energy = np.abs(spec) ** 2
    frac = energy[outside].sum() / energy.sum() if energy.sum() > 0 else 0.0
    if frac > tolerance:
        raise CoverageError(
            f"{frac:.1%} of the waveform energy lies outside [{fgrid[0]:.4g}, {fgrid[-1]:.4g}] Hz"
        )
    h = np.interp(freqs, fgrid, transfer.h.real) + 1j * np.interp(freqs, fgrid, transfer.h.imag)
    h[outside] = 0.0
    y = np.fft.irfft(spec * h, n=x.size)
    out = waveform.copy(data=y)
    out.name = "v_rx"
    out.attrs = {"units": "V", "long_name": "equivalent LTI radiated signal"}
    if transfer.scale is not None:
        out.attrs.update({"xi": transfer.scale.xi, "chi": transfer.scale.chi})
    return out


def grid_point(params, xi, chi, waveform, analyse, tolerance=0.05):
    """Symbol power and EVM of one (xi, chi) antenna.

    ``analyse`` maps a received waveform to (raw symbol power, EVM dB).
    """
    received = apply_transfer(scaled_transfer(params, xi, chi), waveform, tolerance)
    power, evm = analyse(received)
    return {"xi": xi, "chi": chi, "avg_power": power, "evm_db": evm}


def grid_metrics(params, xis, chis, waveform, analyse, tolerance=0.05):
    """Symbol power and EVM on the (xi, chi) grid.

    Rows are computed with dask.delayed. Power is normalized by the
    (1, 1) antenna, computed separately when not in the grid.

    Returns
    -------
    grid: pandas DataFrame
        Columns ``xi,chi,avg_power_norm,evm_db``
    """
    if len(xis) == 0 or len(chis) == 0:
        raise XdamValidationError("xi and chi lists must be non-empty")
    points = [(float(x), float(c)) for x in xis for c in chis]
    tasks = [dask.delayed(grid_point)(params, x, c, waveform, analyse, tolerance) for x, c in points]
    if (1.0, 1.0) not in points:
        tasks.append(dask.delayed(grid_point)(params, 1.0, 1.0, waveform, analyse, tolerance))
    rows = list(dask.compute(*tasks))
    ref = next(r for r in rows if r["xi"] == 1.0 and r["chi"] == 1.0)["avg_power"]
    if (1.0, 1.0) not in points:
        rows = rows[:-1]
    df = pd.DataFrame(rows)
    df["avg_power_norm"] = df["avg_power"] / ref
    logger.info(f"Computed {len(df)} grid points")
    return df[["xi", "chi", "avg_power_norm", "evm_db"]]


def transfer_to_dataset(transfer):
    """xarray Dataset of |h|, phase and Gamma along frequency"""
    ds = xr.Dataset(
        {
            "h_abs": ("frequency", np.abs(transfer.h)),
            "h_phase": ("frequency", np.angle(transfer.h)),
            "gamma_abs": ("frequency", np.abs(transfer.gamma)),
        },
        coords={"frequency": transfer.frequency},
    )
    ds["frequency"].attrs = {"units": "Hz", "long_name": "frequency"}
    if transfer.scale is not None:
        ds.attrs = {"xi": transfer.scale.xi, "chi": transfer.scale.chi}
    return ds
