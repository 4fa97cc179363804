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

"""Experiment runners and the ``xdam`` command line.

Every runner takes a resolved configuration (see ``xdam.config``),
writes its CSV and text outputs to one directory and returns a
RunReport, which is also saved as ``run_report.json``.
"""

import argparse
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, asdict

import dask
import numpy as np
import pandas as pd
from scipy import optimize

from .circuit import (
    Netlist,
    SwitchSchedule,
    assemble,
    carry_state,
    peak_times,
    replace_source,
    scale_elements,
    simulate,
    steady_state_phasor,
    steady_state_state,
    with_dc_throw,
)
from .config import config_digest, config_netlist, experiment_config, load_config, EXPERIMENTS
from .equivalent import antenna_parameters, grid_metrics, scaled_transfer, transfer_to_dataset
from .exception import (
    XdamException,
    XdamNumericalError,
    ConfigError,
    ProbeError,
    FitError,
    RiseTimeout,
)
from .laplace import (
    charged_initial_state,
    coefficient_table,
    dc_level_for_cancellation,
    dominant_approx,
    evaluate,
    inductor_current_discrepancy,
    label_state,
    off_state_network,
    probe_expansion,
    steady_state_estimate,
)
from .modulator import (
    SymbolStream,
    TransmitterMode,
    build_schedule,
    map_bpsk,
    map_qpsk,
    phase_modulated,
    prbs_sequence,
    schedule_to_frame,
    symbols_to_frame,
    synthesize_source,
)
from .receiver import (
    demodulate,
    downconvert,
    envelope,
    evm_db,
    metrics_to_text,
    rise_time_95,
    signal_metrics,
)


logger = logging.getLogger(__name__)

# steady carrier before the first and after the last symbol, in carrier cycles
LEAD_CYCLES = 20
TAIL_CYCLES = 20
HOLD_CYCLES = 5


@dataclass
class Setup:
    """Transmitter netlist with its ON-state model and steady state"""

    netlist: Netlist
    on_model: object
    phasors: pd.Series
    f_c: float
    sample_interval: float
    switch_id: str
    source_id: str

    @property
    def t_c(self):
        return 1.0 / self.f_c

    @property
    def v_ss(self):
        return float(abs(self.phasors["v_a"]))

    @property
    def vrad_ss(self):
        return float(abs(self.phasors["v_rad"]))


@dataclass
class RunReport:
    experiment: str
    digest: str
    seed: int
    metrics: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def write(self, outdir):
        path = os.path.join(outdir, "run_report.json")
        with open(path, "w") as f:
            json.dump(_plain(asdict(self)), f, indent=2, sort_keys=True)
        return path


class _Outputs:
    """Output directory keeping the SHA-256 of every file written"""

    def __init__(self, outdir):
        os.makedirs(outdir, exist_ok=True)
        self.outdir = outdir
        self.files = {}

    def path(self, name):
        return os.path.join(self.outdir, name)

    def csv(self, df, name, index=False):
        df.to_csv(self.path(name), index=index, float_format="%.10g")
        self.record(name)

    def text(self, metrics, name="metrics.txt"):
        metrics_to_text(metrics, self.path(name))
        self.record(name)

    def record(self, name):
        with open(self.path(name), "rb") as f:
            self.files[name] = hashlib.sha256(f.read()).hexdigest()


def _plain(value):
    """JSON friendly copy: numpy scalars to python, NaN and inf to None"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def prepare(config, netlist=None):
    """Resolve the netlist of a config and its ON-state steady state.

    The first sinusoidal source is reset to phase 0, so that every
    phasor refers to a source of phase 0.
    """
    netlist = config_netlist(config) if netlist is None else netlist
    spc = config["samples_per_cycle"]
    if int(spc) != spc or spc < 8:
        raise ConfigError(f"samples_per_cycle must be an integer >= 8, got {spc}")
    for probe in ("v_a", "v_rad"):
        if probe not in netlist.probe_map:
            raise ProbeError(f"Netlist needs a '{probe}' probe")
    if not netlist.switches:
        raise ConfigError("Netlist has no switch on the RF path")
    sources = [src for src in netlist.sources if src.oscillating]
    if not sources:
        raise ConfigError("Netlist has no sinusoidal source")
    source_id = sources[0].id
    netlist = replace_source(netlist, source_id, kind="sinusoid", phase=0.0, phase_track=())
    on_model = assemble(netlist, {sw.id: 0 for sw in netlist.switches})
    phasors = steady_state_phasor(on_model, netlist, source_id=source_id)
    f_c = netlist.source(source_id).frequency
    setup = Setup(
        netlist=netlist,
        on_model=on_model,
        phasors=phasors,
        f_c=f_c,
        sample_interval=1.0 / (f_c * int(spc)),
        switch_id=netlist.switches[0].id,
        source_id=source_id,
    )
    logger.info(f"Carrier {f_c / 1e6:.5g} MHz, V_ss {setup.v_ss:.5g} V")
    return setup


def _timing(setup, symbols, lead_cycles=LEAD_CYCLES, tail_cycles=TAIL_CYCLES):
    """First symbol start on a source maximum after the lead-in, and the
    end of the run after the tail"""
    t_c = setup.t_c
    theta0 = float(symbols.phases[0])
    window = (lead_cycles * t_c, (lead_cycles + 1) * t_c)
    t_start = float(peak_times(1.0, setup.f_c, window, source_phase=theta0)[0])
    t_end = t_start + len(symbols) * symbols.symbol_period + tail_cycles * t_c
    return t_start, t_end


def mode_circuit(setup, variant, vdc_ratio=None):
    """Netlist, ON-state model and phasors of one transmitter variant.

    DC_DAM adds the DC throw, whose open branch loads the switch pole in
    the ON state, so its steady state is solved again. The DC level is
    ``vdc_ratio`` times the V_ss of that circuit.

    Returns
    -------
    netlist, on_model, phasors, mode
    """
    if variant != "DC_DAM":
        return setup.netlist, setup.on_model, setup.phasors, TransmitterMode(variant)
    if vdc_ratio is None:
        raise ConfigError("DC_DAM needs a V_DC / V_ss ratio")
    netlist = with_dc_throw(setup.netlist, 0.0, switch_id=setup.switch_id)
    on_model = assemble(netlist, {sw.id: 0 for sw in netlist.switches})
    phasors = steady_state_phasor(on_model, netlist, source_id=setup.source_id)
    v_dc = float(vdc_ratio) * float(abs(phasors["v_a"]))
    netlist = replace_source(netlist, "vdc", level=v_dc)
    return netlist, on_model, phasors, TransmitterMode(variant, v_dc)


def transmit(setup, symbols, variant, vdc_ratio=None, lead_cycles=LEAD_CYCLES,
             tail_cycles=TAIL_CYCLES):
    """Simulate a symbol stream sent in ``variant``, starting from the
    steady state of the first symbol phase.

    Returns
    -------
    ds: xarray Dataset
        v_a and v_rad along ``time``
    transmission: ScheduledTransmission
        Switch schedule and source phase track
    starts: numpy array
        Nominal symbol start times in s
    phasors: pandas Series
        ON-state phasors of the circuit used
    """
    symbols = symbols.with_timing(setup.t_c, symbols.cycles)
    t_start, t_end = _timing(setup, symbols, lead_cycles, tail_cycles)
    netlist, on_model, phasors, mode = mode_circuit(setup, variant, vdc_ratio)
    tx = build_schedule(symbols, mode, phasors["v_a"], t_start, setup.switch_id)
    sim_netlist = phase_modulated(netlist, tx, setup.source_id)
    rotated = phasors * np.exp(1j * float(symbols.phases[0]))
    state0 = steady_state_state(on_model, rotated, setup.f_c, 0.0)
    ds, _ = simulate(
        sim_netlist,
        tx.schedule,
        t_end,
        setup.sample_interval,
        t_start=0.0,
        initial_state=state0,
        probes=["v_a", "v_rad"],
    )
    return ds, tx, symbols.starts(t_start), phasors


def fit_damped_sinusoid(tau, values, carrier_period, reference, skip_cycles=2.0,
                        min_amplitude=1e-4):
    """Fit d + m t + exp(-alpha t)(a cos(w t) + b sin(w t)) to a ringdown.

    Time is scaled to carrier cycles and values to ``reference`` before
    fitting. The first ``skip_cycles`` are left out so that faster modes
    have died out. A trace whose detrended amplitude stays below
    ``min_amplitude`` (relative) is reported as not oscillating.

    Returns
    -------
    fit: dict
        oscillating, frequency_hz, alpha_per_s, amplitude_V, residual_V
    """
    tau = np.asarray(tau, dtype=float)
    sel = tau >= skip_cycles * carrier_period
    u = tau[sel] / carrier_period
    y = np.asarray(values, dtype=float)[sel] / reference
    if u.size < 16:
        raise FitError("Ringdown is too short to fit", residual=np.nan)
    trend = np.polyfit(u, y, 1)
    resid = y - np.polyval(trend, u)
    if np.max(np.abs(resid)) < min_amplitude:
        return {
            "oscillating": False,
            "frequency_hz": np.nan,
            "alpha_per_s": np.nan,
            "amplitude_V": 0.0,
            "residual_V": float(np.sqrt(np.mean(resid**2))) * reference,
        }
    npad = 8 * u.size
    spectrum = np.abs(np.fft.rfft(resid, n=npad))
    freqs = np.fft.rfftfreq(npad, d=u[1] - u[0])
    w0 = 2 * np.pi * freqs[1 + int(np.argmax(spectrum[1:]))]
    a0 = 2.0 / (u[-1] - u[0])

    def model(uu, d, m, a, b, alpha, w):
        return d + m * uu + np.exp(-alpha * uu) * (a * np.cos(w * uu) + b * np.sin(w * uu))

    basis = np.column_stack(
        [np.ones_like(u), u, np.exp(-a0 * u) * np.cos(w0 * u), np.exp(-a0 * u) * np.sin(w0 * u)]
    )
    lin = np.linalg.lstsq(basis, y, rcond=None)[0]
    try:
        popt, _ = optimize.curve_fit(model, u, y, p0=[*lin, a0, w0], maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Damped sinusoid fit did not converge: {exc}", residual=np.nan) from exc
    rms = float(np.sqrt(np.mean((y - model(u, *popt)) ** 2)))
    ring = float(np.hypot(popt[2], popt[3]))
    if not np.isfinite(rms) or rms > 0.1 * ring:
        raise FitError(
            f"Damped sinusoid fit residual {rms:.3g} is above 10% of the ring amplitude",
            residual=rms * reference,
        )
    return {
        "oscillating": True,
        "frequency_hz": abs(popt[5]) / (2 * np.pi * carrier_period),
        "alpha_per_s": popt[4] / carrier_period,
        "amplitude_V": ring * reference,
        "residual_V": rms * reference,
    }


def run_ringdown(config, outdir):
    """Open the RF path at a v_a peak and compare the simulated OFF-state
    ringdown with its pole-residue expansion.

    Outputs ringdown.csv (normalized traces against time since opening),
    expansion_v_a.csv, expansion_v_rad.csv, coefficients.csv and
    metrics.txt.
    """
    out = _Outputs(outdir)
    netlist = config_netlist(config)
    if config["charge_level"] not in ("steady", "terminal"):
        raise ConfigError(f"charge_level must be steady or terminal, got {config['charge_level']}")
    if config["parasitics_scale"] != 1.0:
        # the leakage of the open switch scales with its capacitance
        netlist = scale_elements(netlist, config["parasitics_scale"], config["parasitics"],
                                 switch_leakage=True)
    setup = prepare(config, netlist)
    t_c, dt = setup.t_c, setup.sample_interval
    on_cfg = {sw.id: 0 for sw in setup.netlist.switches}
    off_cfg = {sw.id: "OFF" for sw in setup.netlist.switches}
    t_open = float(peak_times(setup.phasors["v_a"], setup.f_c, (2 * t_c, 3 * t_c))[0])
    t_start = t_open - 2 * t_c
    t_off = config["off_cycles"] * t_c

    ds, _ = simulate(
        setup.netlist,
        SwitchSchedule(on_cfg, ((t_open, off_cfg),)),
        t_open + t_off,
        dt,
        t_start=t_start,
        initial_state=steady_state_state(setup.on_model, setup.phasors, setup.f_c, t_start),
        probes=["v_a", "v_rad"],
    )
    ds = ds.isel(time=slice(int(round((t_open - t_start) / dt)), None))
    tau = np.clip(ds["time"].values - t_open, 0.0, None)

    analytic = charged_initial_state(setup.on_model, setup.phasors, setup.f_c, t_open,
                                     config["charged"], level=config["charge_level"])
    network = off_state_network(setup.netlist, analytic, off_cfg)
    exp_va = probe_expansion(network, "v_a")
    exp_vrad = probe_expansion(network, "v_rad")
    va_an = evaluate(exp_va, tau)
    vrad_an = evaluate(exp_vrad, tau)

    # same OFF network started from the analytic initial state
    off_model = network.model
    x_analytic = label_state(off_model, setup.netlist, analytic)
    oracle, _ = simulate(
        setup.netlist,
        SwitchSchedule(off_cfg),
        t_off,
        dt,
        initial_state=x_analytic,
        probes=["v_a", "v_rad"],
    )
    n = min(oracle["time"].size, tau.size)
    oracle_error = max(
        float(np.max(np.abs(oracle["v_a"].values[:n] - va_an.values[:n]))),
        float(np.max(np.abs(oracle["v_rad"].values[:n] - vrad_an.values[:n]))),
    ) / setup.v_ss
    carried = carry_state(
        steady_state_state(setup.on_model, setup.phasors, setup.f_c, t_open),
        setup.on_model,
        off_model,
    )
    discrepancy = inductor_current_discrepancy(off_model, carried, x_analytic)

    fit = fit_damped_sinusoid(tau, ds["v_a"].values, t_c, setup.v_ss)
    # the fast L_m ring set off by the opening has died out after two cycles
    late = tau >= 2 * t_c
    metrics = {
        "v_ss_V": setup.v_ss,
        "vrad_ss_V": setup.vrad_ss,
        "t_open_s": t_open,
        "n_poles": len(exp_va.real_terms) + 2 * len(exp_va.pair_terms),
        "analytic_max_error_norm": oracle_error,
        "va_spread_norm": float(np.ptp(ds["v_a"].values[late])) / setup.v_ss,
        "vrad_max_norm": float(np.max(np.abs(ds["v_rad"].values[late]))) / setup.v_ss,
        "analytic_va_deviation_norm": float(np.max(np.abs(va_an.values[late] - setup.v_ss)))
        / setup.v_ss,
        "analytic_vrad_max_norm": float(np.max(np.abs(vrad_an.values[late]))) / setup.v_ss,
        "oscillating": fit["oscillating"],
        "fit_frequency_hz": fit["frequency_hz"],
        "fit_alpha_per_s": fit["alpha_per_s"],
        "fit_residual_V": fit["residual_V"],
    }
    metrics.update(discrepancy)
    if exp_va.pair_terms:
        _, _, omega1, alpha1 = exp_va.pair_terms[0]
        metrics["omega1_rad_per_s"] = omega1
        metrics["alpha1_per_s"] = alpha1
        approx = dominant_approx(exp_va, exp_vrad)
        metrics["v_osc_V"] = approx.v_osc
        metrics["v_osc_prime_V"] = approx.v_osc_prime
        metrics["dominant"] = approx.dominant
    if exp_va.real_terms:
        metrics["alpha0_per_s"] = exp_va.real_terms[0][1]
    ids = {el.id: el.value for el in setup.netlist.elements}
    if all(k in ids for k in ("C", "L", "R", "L_m")):
        src = setup.netlist.source(setup.source_id)
        sw = setup.netlist.switch(setup.switch_id)
        est = steady_state_estimate(
            ids["C"], ids["L"], ids["R"], ids["L_m"], src.amplitude, setup.f_c,
            r_source=src.series_resistance + sw.r_on, v_ss_exact=setup.v_ss,
        )
        metrics["v_ss_estimate_V"] = est["v_ss_estimate"]
        metrics["v_ss_estimate_ratio"] = est["ratio"]
        metrics["q_rad"] = est["q_rad"]

    trace = pd.DataFrame(
        {
            "time_s": tau,
            "v_a_norm": ds["v_a"].values / setup.v_ss,
            "v_rad_norm": ds["v_rad"].values / setup.vrad_ss,
            "v_a_analytic_norm": va_an.values / setup.v_ss,
            "v_rad_analytic_norm": vrad_an.values / setup.vrad_ss,
        }
    )
    out.csv(trace, "ringdown.csv")
    out.csv(exp_va.to_frame(), "expansion_v_a.csv")
    out.csv(exp_vrad.to_frame(), "expansion_v_rad.csv")
    out.csv(coefficient_table(exp_va, exp_vrad, setup.v_ss), "coefficients.csv", index=True)
    out.text(metrics)
    logger.info(f"Ringdown: analytic vs simulated error {oracle_error:.3g} of V_ss")
    return RunReport("ringdown", _digest(config), config["seed"], metrics, out.files)


def transition_case(setup, variant, dtheta_deg, vdc_ratio=None, cycles_before=10,
                    cycles_after=30, cutoff=0.9):
    """One phase transition of ``dtheta_deg`` degrees sent in ``variant``.

    The v_rad envelope (lowpass at ``cutoff`` f_c) is timed from the
    switch closing, or from the boundary in LTI mode, until it holds 95%
    of its steady level.

    Returns
    -------
    row: dict
        Transition summary
    trace: pandas DataFrame
        time_s (from the event), v_rad_norm, envelope_norm
    """
    if cycles_after <= cycles_before + HOLD_CYCLES:
        raise ConfigError("cycles_after must exceed cycles_before by more than the hold time")
    t_c = setup.t_c
    theta_old = np.pi / 4
    symbols = SymbolStream(
        phases=np.array([theta_old, theta_old - np.deg2rad(dtheta_deg)]),
        labels=np.array([0, 1]),
        bits=np.zeros((2, 1), dtype=np.int8),
        carrier_period=t_c,
        cycles=cycles_before,
        scheme="transition",
    )
    ds, tx, starts, phasors = transmit(setup, symbols, variant, vdc_ratio, lead_cycles=2,
                                       tail_cycles=cycles_after - cycles_before)
    steady = float(abs(phasors["v_rad"]))
    event = tx.closings[0] if tx.closings else float(starts[1])
    env = envelope(downconvert(ds["v_rad"], setup.f_c, cutoff * setup.f_c))
    after = env.sel(time=slice(event, None))
    peak_fraction = float(after.max()) / steady
    try:
        rise = rise_time_95(env, event, steady, HOLD_CYCLES * t_c)
    except RiseTimeout as exc:
        logger.warning(f"{variant} {dtheta_deg} deg: {exc}")
        rise = np.nan
    row = {
        "mode": variant,
        "transition_deg": float(dtheta_deg),
        "vdc_ratio": np.nan if vdc_ratio is None else float(vdc_ratio),
        "t_open_s": tx.openings[0] if tx.openings else np.nan,
        "t_close_s": tx.closings[0] if tx.closings else np.nan,
        "gap_s": tx.gaps[0] if tx.gaps else 0.0,
        "rise_time_s": rise,
        "rise_time_cycles": rise / t_c,
        "peak_fraction": peak_fraction,
    }
    trace = pd.DataFrame(
        {
            "time_s": ds["time"].values - event,
            "v_rad_norm": ds["v_rad"].values / steady,
            "envelope_norm": env.values / steady,
        }
    )
    return row, trace


@dask.delayed
def _transition_task(setup, variant, dtheta_deg, vdc_ratio, cycles_before, cycles_after, cutoff):
    return transition_case(setup, variant, dtheta_deg, vdc_ratio, cycles_before,
                           cycles_after, cutoff)


def _case_name(variant, vdc_ratio=None):
    return variant if vdc_ratio is None else f"{variant}_vdc{vdc_ratio:g}"


def run_single_transition(config, outdir):
    """Envelope response to single phase transitions for every mode.

    Outputs transition_<mode>_<deg>.csv traces, transitions.csv and
    metrics.txt.
    """
    out = _Outputs(outdir)
    setup = prepare(config)
    cases = []
    for variant in config["modes"]:
        ratio = config["vdc_ratio"] if variant == "DC_DAM" else None
        for deg in config["transitions_deg"]:
            cases.append((variant, deg, ratio))
    tasks = [
        _transition_task(setup, v, d, r, config["cycles_before"], config["cycles_after"],
                         config["envelope_cutoff"])
        for v, d, r in cases
    ]
    results = dask.compute(tasks)
    rows = []
    for (variant, deg, _), (row, trace) in zip(cases, results[0]):
        rows.append(row)
        out.csv(trace, f"transition_{variant}_{deg:g}.csv")
    table = pd.DataFrame(rows)
    out.csv(table, "transitions.csv")
    metrics = {"v_ss_V": setup.v_ss, "vrad_ss_V": setup.vrad_ss}
    for row in rows:
        metrics[f"rise_cycles_{row['mode']}_{row['transition_deg']:g}"] = row["rise_time_cycles"]
    out.text(metrics)
    return RunReport("single-transition", _digest(config), config["seed"], metrics, out.files)


def run_vdc_sweep(config, outdir):
    """Rise time of DC-assisted transitions against V_DC / V_ss, with
    open-circuit and LTI baselines for every transition angle.

    Outputs vdc_sweep.csv and metrics.txt.
    """
    out = _Outputs(outdir)
    setup = prepare(config)
    before, after = config["cycles_before"], config["cycles_after"]
    cutoff = config["envelope_cutoff"]
    tasks = []
    for deg in config["transitions_deg"]:
        tasks.append(_transition_task(setup, "OC_DAM", deg, None, before, after, cutoff))
        tasks.append(_transition_task(setup, "LTI", deg, None, before, config["lti_cycles"], cutoff))
        for ratio in config["vdc_ratios"]:
            tasks.append(_transition_task(setup, "DC_DAM", deg, ratio, before, after, cutoff))
    results = dask.compute(tasks)
    table = pd.DataFrame([row for row, _ in results[0]])
    out.csv(table, "vdc_sweep.csv")

    t_peak = float(peak_times(setup.phasors["v_a"], setup.f_c, (0.0, setup.t_c))[0])
    metrics = {
        "v_ss_V": setup.v_ss,
        "cancellation_vdc_ratio": dc_level_for_cancellation(setup.phasors, setup.f_c, t_peak)
        / setup.v_ss,
    }
    for deg in config["transitions_deg"]:
        sub = table[table["transition_deg"] == float(deg)]
        dc = sub[(sub["mode"] == "DC_DAM") & sub["rise_time_s"].notna()]
        if len(dc):
            best = dc.loc[dc["rise_time_s"].idxmin()]
            metrics[f"best_vdc_ratio_{deg:g}"] = best["vdc_ratio"]
            metrics[f"best_rise_cycles_{deg:g}"] = best["rise_time_cycles"]
        for variant in ("OC_DAM", "LTI"):
            base = sub[sub["mode"] == variant]["rise_time_cycles"]
            metrics[f"rise_cycles_{variant}_{deg:g}"] = float(base.iloc[0]) if len(base) else np.nan
    out.text(metrics)
    return RunReport("vdc-sweep", _digest(config), config["seed"], metrics, out.files)


def symbol_stream(config, carrier_period, cycles):
    """PRBS symbol stream of a prbs-evm or lti-grid config"""
    bits = prbs_sequence(config["register_bits"], config["taps"], config["prbs_seed"],
                         config["n_bits"])
    if config["scheme"] == "qpsk":
        return map_qpsk(bits, carrier_period, cycles)
    if config["scheme"] == "bpsk":
        return map_bpsk(bits, carrier_period, cycles)
    raise ConfigError(f"Unknown modulation scheme {config['scheme']}")


def constellation_case(setup, symbols, variant, vdc_ratio=None, cutoff=0.45, snr_db=None,
                       seed=0, excerpt_symbols=0):
    """Send a symbol stream in one mode and demodulate v_rad.

    Returns
    -------
    row: dict
        Mode, cycles per symbol and signal metrics; ``avg_power_cw`` is
        relative to the steady CW power of v_rad, ``raw_power_V2`` is the
        mean |x|^2 of the symbol samples
    frames: dict
        constellation, schedule and waveform excerpt tables
    """
    ds, tx, starts, _ = transmit(setup, symbols, variant, vdc_ratio)
    const = demodulate(ds["v_rad"], setup.f_c, starts, symbols.symbol_period, symbols.labels,
                       cutoff=cutoff, snr_db=snr_db, seed=seed)
    metrics = signal_metrics(const, reference_power=setup.vrad_ss**2)
    row = {
        "mode": variant,
        "vdc_ratio": np.nan if vdc_ratio is None else float(vdc_ratio),
        "cycles_per_symbol": symbols.cycles,
        "n_gaps": len(tx.gaps),
        "evm_db": metrics["evm_db"],
        "sd": metrics["sd"],
        "avg_power_cw": metrics["avg_power"],
        "raw_power_V2": float(np.mean(np.abs(const.raw_points) ** 2)),
    }
    frames = {"constellation": const.to_frame(), "schedule": schedule_to_frame(tx.schedule)}
    if excerpt_symbols:
        t0 = float(starts[0])
        t1 = t0 + min(excerpt_symbols, len(symbols)) * symbols.symbol_period
        sel = ds.sel(time=slice(t0, t1))
        src = synthesize_source(symbols, setup.netlist.source(setup.source_id).amplitude,
                                setup.f_c, tx.phase_track, t1, setup.sample_interval,
                                t_start=float(sel["time"].values[0]))
        n = min(src.size, sel["time"].size)
        frames["waveform"] = pd.DataFrame(
            {
                "time_s": sel["time"].values[:n],
                "v_src": src.values[:n],
                "v_a": sel["v_a"].values[:n],
                "v_rad": sel["v_rad"].values[:n],
            }
        )
    return row, frames


@dask.delayed
def _constellation_task(setup, symbols, variant, vdc_ratio, cutoff, snr_db, seed, excerpt):
    return constellation_case(setup, symbols, variant, vdc_ratio, cutoff, snr_db, seed, excerpt)


def run_prbs_evm(config, outdir):
    """Constellations and EVM of a PRBS symbol stream for every mode and
    symbol length.

    ``avg_power`` is the mean symbol power relative to the LTI run of
    the same symbol length; the LTI run is simulated for reference even
    when it is not among the modes.

    Outputs symbols.csv, per case constellation_*.csv, schedule_*.csv and
    waveform_*.csv, evm.csv and metrics.txt.
    """
    out = _Outputs(outdir)
    setup = prepare(config)
    cycles_list = config["cycles_per_symbol"]
    cycles_list = [cycles_list] if np.isscalar(cycles_list) else list(cycles_list)
    base = symbol_stream(config, setup.t_c, cycles_list[0])
    out.csv(symbols_to_frame(base), "symbols.csv")
    variants = list(config["modes"])
    if "LTI" not in variants:
        variants.insert(0, "LTI")
    cases, tasks = [], []
    for cycles in cycles_list:
        symbols = base.with_timing(setup.t_c, cycles)
        for variant in variants:
            ratios = config["vdc_ratios"] if variant == "DC_DAM" else [None]
            for ratio in ratios:
                cases.append((variant, ratio, cycles))
                tasks.append(
                    _constellation_task(setup, symbols, variant, ratio, config["cutoff"],
                                        config["snr_db"], config["seed"],
                                        config["excerpt_symbols"])
                )
    results = dask.compute(tasks)
    reference = {
        cycles: row["raw_power_V2"]
        for (variant, _, cycles), (row, _) in zip(cases, results[0])
        if variant == "LTI"
    }
    rows = []
    for (variant, ratio, cycles), (row, frames) in zip(cases, results[0]):
        if variant not in config["modes"]:
            continue
        if not reference[cycles] > 0:
            raise XdamNumericalError(f"LTI run at {cycles} cycles per symbol radiates no power")
        row["avg_power"] = row["raw_power_V2"] / reference[cycles]
        rows.append(row)
        name = f"{_case_name(variant, ratio)}_{cycles}c"
        for kind, frame in frames.items():
            out.csv(frame, f"{kind}_{name}.csv")
    table = pd.DataFrame(rows)
    out.csv(table, "evm.csv")
    metrics = {"v_ss_V": setup.v_ss, "n_symbols": len(base)}
    for row in rows:
        name = f"{_case_name(row['mode'], None if np.isnan(row['vdc_ratio']) else row['vdc_ratio'])}"
        metrics[f"evm_db_{name}_{row['cycles_per_symbol']}c"] = row["evm_db"]
        metrics[f"avg_power_{name}_{row['cycles_per_symbol']}c"] = row["avg_power"]
    out.text(metrics)
    return RunReport("prbs-evm", _digest(config), config["seed"], metrics, out.files)


def run_lti_grid(config, outdir):
    """Symbol power and EVM of scaled LTI antennas on the (xi, chi) grid,
    next to DC-assisted DAM runs of the same symbol stream.

    Outputs lti_grid.csv, dam_points.csv, antenna_transfer.csv and
    metrics.txt.
    """
    out = _Outputs(outdir)
    setup = prepare(config)
    cycles = config["cycles_per_symbol"]
    symbols = symbol_stream(config, setup.t_c, cycles)
    z0 = None if config["z0"] in (None, "matched") else float(config["z0"])
    params = antenna_parameters(setup.netlist, setup.f_c, eta=config["eta"], z0=z0,
                                points=config["grid_points"])

    t_start, t_end = _timing(setup, symbols)
    lti = build_schedule(symbols, TransmitterMode("LTI"), setup.phasors["v_a"], t_start,
                         setup.switch_id)
    amplitude = setup.netlist.source(setup.source_id).amplitude
    drive = synthesize_source(symbols, amplitude, setup.f_c, lti.phase_track, t_end,
                              setup.sample_interval)
    starts = symbols.starts(t_start)

    def analyse(received):
        const = demodulate(received, setup.f_c, starts, symbols.symbol_period, symbols.labels,
                           cutoff=config["cutoff"], snr_db=config["snr_db"], seed=config["seed"])
        return float(np.mean(np.abs(const.raw_points) ** 2)), evm_db(const)

    grid = grid_metrics(params, config["xi"], config["chi"], drive, analyse)
    out.csv(grid, "lti_grid.csv")

    tasks = [_constellation_task(setup, symbols, "LTI", None, config["cutoff"],
                                 config["snr_db"], config["seed"], 0)]
    tasks += [
        _constellation_task(setup, symbols, "DC_DAM", r, config["cutoff"], config["snr_db"],
                            config["seed"], 0)
        for r in config["dam_vdc_ratios"]
    ]
    results = dask.compute(tasks)
    reference = results[0][0][0]["raw_power_V2"]
    rows = []
    grid_db = 10 * np.log10(grid["avg_power_norm"].values)
    for row, _ in results[0]:
        power = row["raw_power_V2"] / reference
        dist = np.hypot(grid["evm_db"].values - row["evm_db"], grid_db - 10 * np.log10(power))
        k = int(np.argmin(dist))
        rows.append(
            {
                "mode": row["mode"],
                "vdc_ratio": row["vdc_ratio"],
                "avg_power_norm": power,
                "evm_db": row["evm_db"],
                "nearest_xi": grid["xi"].iloc[k],
                "nearest_chi": grid["chi"].iloc[k],
                "distance_db": float(dist[k]),
            }
        )
    points = pd.DataFrame(rows)
    out.csv(points, "dam_points.csv")
    antenna = transfer_to_dataset(scaled_transfer(params)).to_dataframe()
    antenna.index.name = "frequency_hz"
    out.csv(antenna, "antenna_transfer.csv", index=True)
    metrics = {
        "f0_hz": params.attrs["f0"],
        "r_a0_ohm": params.attrs["r_a0"],
        "z0_ohm": params.z0,
        "eta": params.eta,
        "q_rad": params.q_rad,
        "bandwidth_efficiency": params.bandwidth_efficiency,
        "grid_points": len(grid),
    }
    out.text(metrics)
    return RunReport("lti-grid", _digest(config), config["seed"], metrics, out.files)


RUNNERS = {
    "ringdown": run_ringdown,
    "single-transition": run_single_transition,
    "vdc-sweep": run_vdc_sweep,
    "prbs-evm": run_prbs_evm,
    "lti-grid": run_lti_grid,
}

VERBS = {
    "ringdown": ("ringdown", "OFF-state ringdown and its pole-residue expansion"),
    "transition": ("single-transition", "envelope response to single phase transitions"),
    "vdc-sweep": ("vdc-sweep", "rise time against the DC throw level"),
    "prbs-evm": ("prbs-evm", "PRBS constellations and EVM per mode"),
    "lti-grid": ("lti-grid", "scaled LTI antenna grid against DC-assisted DAM"),
}


def _digest(config):
    return config_digest({k: v for k, v in config.items() if k != "output"})


def run(config, outdir=None):
    """Run the experiment of a resolved config and write its report"""
    kind = config["experiment"]
    if kind not in RUNNERS:
        raise ConfigError(f"Unknown experiment kind {kind}, expected one of {EXPERIMENTS}")
    outdir = config["output"] if outdir is None else outdir
    logger.info(f"Running {kind}, writing to {outdir}")
    report = RUNNERS[kind](config, outdir)
    report.write(outdir)
    return report


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="xdam", description="Direct antenna modulation transmitter experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for verb, (_, text) in VERBS.items():
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", help="YAML experiment configuration (default built-in)")
        p.add_argument("--out", help="output directory (default the config 'output' entry)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    kind = VERBS[args.command][0]
    try:
        if args.config:
            config = load_config(args.config, kind)
        else:
            config = experiment_config({}, kind)
        if args.seed is not None:
            config["seed"] = args.seed
        report = run(config, args.out)
    except XdamException as exc:
        logger.error(str(exc))
        return getattr(exc, "exit_code", 1)
    logger.info(f"{report.experiment} done, {len(report.outputs)} files, digest {report.digest[:12]}")
    return 0
