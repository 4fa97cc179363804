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

"""OFF-state transient analysis by pole-residue expansion of the
Laplace-domain response to the charged capacitors.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import xarray as xr
from scipy import signal, optimize

from .circuit import assemble, CircuitState
from .equivalent import q_from_impedance
from .exception import (
    XdamValidationError,
    XdamNumericalError,
    MultiplicityError,
    SymmetryError,
)


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RationalTransfer:
    """num(s)/den(s), coefficients in ascending powers of s"""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "b")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "b")
        if den.size < 2:
            raise XdamValidationError("Denominator degree must be at least 1")
        object.__setattr__(self, "num", num if num.size else np.zeros(1))
        object.__setattr__(self, "den", den)

    @property
    def proper(self):
        return self.num.size < self.den.size

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num[::-1], s) / np.polyval(self.den[::-1], s)

    def divide_by_s(self):
        """Multiply the transfer by 1/s"""
        return RationalTransfer(self.num, np.concatenate([[0.0], self.den]))

    def times_s(self):
        return RationalTransfer(np.concatenate([[0.0], self.num]), self.den)


@dataclass
class StepSource:
    """Initial-voltage step source v(0)/s of one charged element, with the
    transfer from that step to every probe"""

    element: str
    level: float
    transfers: dict
    state: np.ndarray = None

    def response(self, probe):
        """Laplace transform of the probe response to this source alone"""
        t = self.transfers[probe]
        return RationalTransfer(self.level * t.num, t.den).divide_by_s()


@dataclass
class OffStateNetwork:
    sources: list
    terminal_impedance: RationalTransfer
    model: object
    probes: list = field(default_factory=list)

    def response(self, probe, method="modal"):
        """Superposed response to all step sources as (poles, residues).

        ``method='modal'`` takes poles and residues from the eigenvectors
        of the OFF-state matrix, ``'rational'`` expands every step-source
        transfer separately and sums the residues.
        """
        if method == "modal":
            x0 = sum((src.state for src in self.sources), np.zeros(self.model.order))
            return modal_residues(self.model, x0, self.model.output_labels.index(probe))
        if method != "rational":
            raise XdamValidationError(f"Unknown expansion method {method}")
        total_p, total_r = None, None
        for src in self.sources:
            p, r = pole_residue(_cancel_s(src.response(probe)))
            if total_p is None:
                total_p, total_r = p, r
            else:
                total_r = total_r + _match_residues(total_p, p, r)
        if total_p is None:
            return np.zeros(0, dtype=complex), np.zeros(0, dtype=complex)
        return total_p, total_r


@dataclass
class TransientExpansion:
    """v(t) = sum amp e^{-alpha t}
              + sum e^{-alpha t} (amp_cos cos(omega t) + amp_sin sin(omega t))"""

    real_terms: list
    pair_terms: list
    probe: str = None
    scale: float = 1.0

    def value(self, t):
        t = np.asarray(t, dtype=float)
        v = np.zeros_like(t)
        for amp, alpha in self.real_terms:
            v += amp * np.exp(-alpha * t)
        for a_cos, a_sin, omega, alpha in self.pair_terms:
            v += np.exp(-alpha * t) * (a_cos * np.cos(omega * t) + a_sin * np.sin(omega * t))
        return v

    def at_zero(self):
        return sum(a for a, _ in self.real_terms) + sum(p[0] for p in self.pair_terms)

    def normalized(self, reference):
        """Copy with amplitudes divided by ``reference`` (e.g. V_ss)"""
        return TransientExpansion(
            real_terms=[(a / reference, al) for a, al in self.real_terms],
            pair_terms=[(c / reference, s / reference, w, al) for c, s, w, al in self.pair_terms],
            probe=self.probe,
            scale=self.scale / reference,
        )

    def to_frame(self):
        """Rows ``term_kind,amp_cos_V,amp_sin_V,alpha_per_s,omega_rad_per_s``"""
        rows = [("real", a, 0.0, al, 0.0) for a, al in self.real_terms]
        rows += [("pair", c, s, al, w) for c, s, w, al in self.pair_terms]
        return pd.DataFrame(
            rows,
            columns=["term_kind", "amp_cos_V", "amp_sin_V", "alpha_per_s", "omega_rad_per_s"],
        )


@dataclass
class DominantApprox:
    v_ss: float
    v_osc: float
    v_osc_prime: float
    omega1: float
    alpha1: float
    dominant: bool = True
    discarded: dict = field(default_factory=dict)

    def va(self, t):
        t = np.asarray(t, dtype=float)
        ring = np.exp(-self.alpha1 * t) * np.cos(self.omega1 * t)
        return (self.v_ss - self.v_osc) + self.v_osc * ring

    def vrad(self, t):
        t = np.asarray(t, dtype=float)
        return -self.v_osc_prime * np.exp(-self.alpha1 * t) * np.cos(self.omega1 * t)


def _cancel_s(transfer):
    """Drop a common factor s between numerator and denominator"""
    num, den = transfer.num, transfer.den
    while num.size > 1 and den.size > 2 and num[0] == 0 and den[0] == 0:
        num, den = num[1:], den[1:]
    return RationalTransfer(num, den)


def _match_residues(ref_poles, poles, residues):
    out = np.zeros(ref_poles.size, dtype=complex)
    for p, r in zip(poles, residues):
        k = np.argmin(np.abs(ref_poles - p))
        if abs(ref_poles[k] - p) > 1e-6 * max(abs(p), 1.0):
            raise XdamNumericalError("Step sources do not share the same pole set")
        out[k] += r
    return out


def _ss_transfer(a, b, c, d):
    num, den = signal.ss2tf(a, b.reshape(-1, 1), c.reshape(1, -1), np.atleast_2d(d))
    num = np.asarray(num[0], dtype=float)[::-1]
    if d == 0:
        num = num[:-1]
    return RationalTransfer(num, np.asarray(den, dtype=float)[::-1])


def label_state(model, netlist, state):
    """Convert a state keyed by element id into one keyed by the state
    labels of ``model``. A merged capacitor group takes the charge
    weighted mean of its members. Give a merged inductor through one
    of its members only."""
    contributions = _state_contributions(model, netlist, state)
    x = np.zeros(model.order)
    for _, _, x0 in contributions:
        x += x0
    return CircuitState(time=state.time, values=dict(zip(model.state_labels, x)))


def _state_contributions(model, netlist, initial_state):
    """Split an initial state into one state vector per charged element.

    Keys may be state labels or element ids. A capacitor sharing a
    merged group contributes its charge share C_k/C_group of the group
    voltage, the way its series step source does in the s-domain model.
    """
    contributions = []
    index = {label: k for k, label in enumerate(model.state_labels)}
    for key, value in initial_state.values.items():
        if value == 0:
            continue
        x0 = np.zeros(model.order)
        if key in index:
            x0[index[key]] = value
            contributions.append((key, value, x0))
            continue
        found = False
        for k, label in enumerate(model.state_labels):
            for eid, sign in model.members[label]:
                if eid != key:
                    continue
                share = 1.0
                if model.state_kinds[k] == "capacitor-voltage":
                    share = netlist.element(key).value / model.state_values[k]
                x0[k] = sign * share * value
                found = True
        if not found:
            raise XdamValidationError(
                f"Charged element {key} is absent from the OFF-state topology"
            )
        contributions.append((key, value, x0))
    return contributions


def off_state_network(netlist, initial_state, off_config=None, terminal="v_a"):
    """Laplace-domain OFF-state network driven by the charged elements.

    Parameters
    ----------
    netlist: Netlist
        Circuit description
    initial_state: CircuitState
        Initial values keyed by element id or state label, zero entries
        are ignored; independent sources are zeroed
    off_config: dict, optional
        Switch configuration of the OFF state (default every switch OFF)
    terminal: str, optional
        Probe whose positive node defines the antenna terminal used for
        the terminal impedance Z_a(s) (default 'v_a')

    Returns
    -------
    network: OffStateNetwork
        One StepSource per charged element, with transfers
        T(s) = V_probe(s) / (v(0)/s) to every probe, and Z_a(s)
    """
    if off_config is None:
        off_config = {sw.id: "OFF" for sw in netlist.switches}
    pmap = netlist.probe_map
    if terminal not in pmap:
        raise XdamValidationError(f"Terminal probe {terminal} is not defined")
    node = pmap[terminal][0]
    model = assemble(netlist, off_config, inject_nodes=(node,))
    zrow = model.output_labels.index(terminal)
    z_a = _ss_transfer(model.a, model.e[:, 0], model.c[zrow], model.f[zrow, 0])
    sources = []
    for key, level, x0 in _state_contributions(model, netlist, initial_state):
        transfers = {}
        for k, probe in enumerate(model.output_labels):
            # zero-input response c (sI - A)^-1 x0, expressed per unit step
            resp = _ss_transfer(model.a, x0 / level, model.c[k], 0.0)
            transfers[probe] = resp.times_s()
        sources.append(StepSource(element=key, level=level, transfers=transfers, state=x0))
    logger.debug(f"OFF network with {len(sources)} step sources, order {model.order}")
    return OffStateNetwork(
        sources=sources,
        terminal_impedance=z_a,
        model=model,
        probes=list(model.output_labels),
    )


def companion_roots(coeffs):
    """Roots of a polynomial (ascending coefficients) from the
    eigenvalues of its frequency-scaled companion matrix, each polished
    with one Newton step."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    n = coeffs.size - 1
    if n < 1:
        return np.zeros(0, dtype=complex)
    monic = coeffs / coeffs[-1]
    ratios = [abs(monic[k]) ** (1.0 / (n - k)) for k in range(n) if monic[k] != 0]
    sigma = max(ratios) if ratios else 1.0
    scaled = monic * sigma ** (np.arange(n + 1) - n)
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -scaled[:-1]
    roots = np.linalg.eigvals(comp) * sigma
    desc = coeffs[::-1]
    ddesc = np.polyder(desc)
    val = np.polyval(desc, roots)
    der = np.polyval(ddesc, roots)
    ok = der != 0
    roots[ok] = roots[ok] - val[ok] / der[ok]
    return roots


def pole_residue(transfer, rtol=1e-6):
    """Poles and residues of a strictly proper rational function.

    Real poles come first (slowest decay first), then complex poles as
    (p, conj(p)) pairs with positive imaginary part first, ordered by
    decay rate. Residues of conjugate poles are conjugate.
    """
    if not transfer.proper:
        raise XdamValidationError("Transfer must be strictly proper for a pole-residue expansion")
    poles, order, nreal = _order_poles(companion_roots(transfer.den), rtol)
    num = transfer.num[::-1]
    dden = np.polyder(transfer.den[::-1])
    residues = np.polyval(num, poles) / np.polyval(dden, poles)
    return poles, _conjugate_residues(residues, nreal)


def _order_poles(poles, rtol):
    """Check multiplicity and conjugate symmetry, then order the poles.

    Returns the ordered poles (conjugate pairs made exact), the index of
    each into the input and the number of real poles.
    """
    scale = np.maximum(np.abs(poles), 1e-300)
    for i in range(poles.size):
        close = np.abs(poles - poles[i]) <= rtol * max(scale[i], np.max(scale) * 1e-12)
        if np.count_nonzero(close) > 1:
            raise MultiplicityError(f"Repeated pole near {poles[i]:.6g} is not supported")
    tol = 1e-9 * np.max(scale) if poles.size else 0.0
    real = np.flatnonzero(np.abs(poles.imag) <= tol)
    upper = np.flatnonzero(poles.imag > tol)
    lower = list(np.flatnonzero(poles.imag < -tol))
    if upper.size != len(lower):
        raise SymmetryError("Complex poles are not conjugate closed")
    real = real[np.argsort(-poles[real].real)]
    upper = upper[np.argsort(-poles[upper].real)]
    ordered = [complex(poles[k].real, 0.0) for k in real]
    order = list(real)
    for i in upper:
        j = min(lower, key=lambda k: abs(poles[k] - np.conj(poles[i])))
        if abs(poles[j] - np.conj(poles[i])) > rtol * abs(poles[i]):
            raise SymmetryError(f"Pole {poles[i]:.6g} has no conjugate partner")
        lower.remove(j)
        q = 0.5 * (poles[i] + np.conj(poles[j]))
        ordered += [q, np.conj(q)]
        order += [i, j]
    return np.array(ordered, dtype=complex), np.array(order, dtype=int), real.size


def _conjugate_residues(residues, nreal):
    residues = np.array(residues, dtype=complex)
    residues[:nreal] = residues[:nreal].real
    for k in range(nreal, residues.size, 2):
        r = 0.5 * (residues[k] + np.conj(residues[k + 1]))
        residues[k], residues[k + 1] = r, np.conj(r)
    return residues


def modal_residues(model, x0, row, rtol=1e-6):
    """Poles and residues of the zero-input response c_row (sI - A)^-1 x0.

    Uses the eigendecomposition A = V diag(p) V^-1, so that the residue
    at p_k is (c V)_k (V^-1 x0)_k. Ordered like ``pole_residue``.
    """
    if model.order == 0:
        return np.zeros(0, dtype=complex), np.zeros(0, dtype=complex)
    poles, vec = np.linalg.eig(model.a)
    cond = np.linalg.cond(vec)
    if not np.isfinite(cond):
        raise MultiplicityError("OFF-state matrix is defective")
    if cond > 1e12:
        logger.warning(f"Eigenvector matrix is ill conditioned (cond {cond:.3g}), residues may be inaccurate")
    weights = np.linalg.solve(vec, np.asarray(x0, dtype=float))
    residues = (model.c[row] @ vec) * weights
    poles, order, nreal = _order_poles(poles, rtol)
    return poles, _conjugate_residues(residues[order], nreal)


def expansion(poles, residues, probe=None, rtol=1e-6):
    """Real time-domain expansion of sum r/(s - p)"""
    poles = np.asarray(poles, dtype=complex)
    residues = np.asarray(residues, dtype=complex)
    scale = np.max(np.abs(poles)) if poles.size else 1.0
    tol = 1e-9 * scale
    real_terms, pair_terms = [], []
    used = np.zeros(poles.size, dtype=bool)
    for i, (p, r) in enumerate(zip(poles, residues)):
        if used[i]:
            continue
        if abs(p.imag) <= tol:
            if abs(r.imag) > rtol * max(abs(r), 1e-300) and abs(r.imag) > 1e-300:
                raise SymmetryError(f"Real pole {p.real:.6g} has a complex residue")
            real_terms.append((float(r.real), float(-p.real)))
            used[i] = True
            continue
        cands = [j for j in range(poles.size) if not used[j] and j != i]
        j = min(cands, key=lambda k: abs(poles[k] - np.conj(p)), default=None)
        if j is None or abs(poles[j] - np.conj(p)) > rtol * abs(p):
            raise SymmetryError(f"Pole {p:.6g} has no conjugate partner")
        if abs(residues[j] - np.conj(r)) > rtol * max(abs(r), 1e-300):
            raise SymmetryError(f"Residues at {p:.6g} and its conjugate are not conjugate")
        used[i] = used[j] = True
        up, ru = (p, r) if p.imag > 0 else (poles[j], residues[j])
        pair_terms.append((float(2 * ru.real), float(-2 * ru.imag), float(up.imag), float(-up.real)))
    real_terms.sort(key=lambda term: term[1])
    pair_terms.sort(key=lambda term: term[3])
    for _, alpha in real_terms:
        if alpha < -tol:
            logger.warning(f"Expansion has a growing real term (alpha={alpha:.3g})")
    return TransientExpansion(real_terms=real_terms, pair_terms=pair_terms, probe=probe)


def probe_expansion(network, probe):
    poles, residues = network.response(probe)
    return expansion(poles, residues, probe=probe)


def evaluate(expansion, t, normalize=None):
    """Evaluate an expansion on the time grid ``t`` (s after opening).

    Returns an xarray DataArray along ``time``; ``normalize`` divides the
    trace by a reference level such as V_ss.
    """
    values = expansion.value(t)
    units = "V"
    if normalize is not None:
        values = values / normalize
        units = "1"
    da = xr.DataArray(values, coords={"time": np.asarray(t, dtype=float)}, dims="time")
    da.name = expansion.probe
    da.attrs = {"units": units, "long_name": f"analytic {expansion.probe} transient"}
    da["time"].attrs = {"units": "s", "long_name": "time since opening"}
    return da


def dominant_approx(expansion_va, expansion_vrad, threshold=0.25):
    """Keep the slow DC term and the slowest-decaying pair.

    V_ss is the value of the v_a expansion at t=0, V_osc the cosine
    amplitude of the dominant v_a pair and V_osc' minus the cosine
    amplitude of the matching v_rad pair. A discarded term counts
    against dominance with its amplitude weighted by alpha1/alpha_n; the
    flag is cleared when any weighted amplitude exceeds ``threshold``
    times the kept amplitude.
    """
    if not expansion_va.pair_terms:
        raise XdamValidationError("Expansion has no oscillating pair, dominant form does not apply")
    a_cos, a_sin, omega1, alpha1 = expansion_va.pair_terms[0]
    k_rad = None
    if expansion_vrad.pair_terms:
        k_rad = int(np.argmin([abs(p[2] - omega1) for p in expansion_vrad.pair_terms]))
    d_cos = expansion_vrad.pair_terms[k_rad][0] if k_rad is not None else 0.0
    c_sin = expansion_vrad.pair_terms[k_rad][1] if k_rad is not None else 0.0

    def weight(alpha):
        return 1.0 if alpha <= alpha1 else alpha1 / alpha

    discarded = {"A1": abs(a_sin) / abs(a_cos) if a_cos else np.inf}
    for n, (c, s, _, al) in enumerate(expansion_va.pair_terms[1:], start=2):
        discarded[f"A{n}"] = abs(s) * weight(al) / abs(a_cos)
        discarded[f"B{n}"] = abs(c) * weight(al) / abs(a_cos)
    if d_cos:
        discarded["C1"] = abs(c_sin) / abs(d_cos)
        for n, (c, s, _, al) in enumerate(
            [p for k, p in enumerate(expansion_vrad.pair_terms) if k != k_rad], start=2
        ):
            discarded[f"C{n}"] = abs(s) * weight(al) / abs(d_cos)
            discarded[f"D{n}"] = abs(c) * weight(al) / abs(d_cos)
    dominant = all(v <= threshold for v in discarded.values())
    if not dominant:
        worst = max(discarded, key=discarded.get)
        logger.warning(f"Dominant-term approximation is weak: {worst} at {discarded[worst]:.2f}")
    return DominantApprox(
        v_ss=expansion_va.at_zero(),
        v_osc=a_cos,
        v_osc_prime=-d_cos,
        omega1=omega1,
        alpha1=alpha1,
        dominant=dominant,
        discarded=discarded,
    )


def coefficient_table(expansion_va, expansion_vrad, v_ss=None):
    """Tabulate A_n, B_n, C_n, D_n, omega_n, alpha_n.

    Signs follow v_a = A_0 e^{-a0 t} + sum e^{-a_n t}(-A_n sin + B_n cos)
    and v_rad = sum e^{-a_n t}(C_n sin - D_n cos). Columns ending in
    ``_norm`` are divided by V_ss.
    """
    v_ss = expansion_va.at_zero() if v_ss is None else v_ss
    rows = []
    a0 = sum(a for a, _ in expansion_va.real_terms)
    alpha0 = expansion_va.real_terms[0][1] if expansion_va.real_terms else np.nan
    rows.append({"n": 0, "A": a0, "B": np.nan, "C": np.nan, "D": np.nan,
                 "omega": np.nan, "alpha": alpha0})
    for n, (c, s, w, al) in enumerate(expansion_va.pair_terms, start=1):
        row = {"n": n, "A": -s, "B": c, "C": np.nan, "D": np.nan, "omega": w, "alpha": al}
        if expansion_vrad.pair_terms:
            k = int(np.argmin([abs(p[2] - w) for p in expansion_vrad.pair_terms]))
            rc, rs, _, _ = expansion_vrad.pair_terms[k]
            row["C"], row["D"] = rs, -rc
        rows.append(row)
    df = pd.DataFrame(rows).set_index("n")
    for col in "ABCD":
        df[f"{col}_norm"] = df[col] / v_ss
    df.attrs["v_ss"] = v_ss
    return df


def charged_initial_state(on_model, on_phasors, frequency, t_switch,
                          charged=("C", "C_s", "C_L2"), level="steady", terminal="v_a"):
    """Initial state of the analytic OFF-state path.

    With ``level='steady'`` the ``charged`` capacitors hold their
    steady-state value at ``t_switch``. With ``level='terminal'`` they
    all hold the ``terminal`` voltage at ``t_switch`` instead, V_ss when
    the switch opens at a v_a peak. All other voltages and currents are
    zero. Values are keyed by element id.
    """
    if level not in ("steady", "terminal"):
        raise XdamValidationError(f"Charge level must be 'steady' or 'terminal', got {level}")
    rot = np.exp(2j * np.pi * frequency * t_switch)
    if level == "terminal":
        if terminal not in on_phasors.index:
            raise XdamValidationError(f"No phasor for terminal {terminal}")
        v_term = float(np.real(on_phasors[terminal] * rot))
    values = {}
    for eid in charged:
        for label in on_model.state_labels:
            for member, sign in on_model.members[label]:
                if member == eid:
                    values[eid] = float(sign * np.real(on_phasors[label] * rot))
        if eid not in values:
            raise XdamValidationError(f"Charged element {eid} is not a state of the ON model")
        if level == "terminal":
            values[eid] = v_term
    return CircuitState(time=t_switch, values=values)


def dc_level_for_cancellation(on_phasors, frequency, t_switch, va="v_a", vrad="v_rad"):
    """DC level V_DC = v_C(0) = V_ss - v_rad(0) that leaves no stored
    energy imbalance on C when the DC throw is connected at t_switch"""
    rot = np.exp(2j * np.pi * frequency * t_switch)
    return float(np.real(on_phasors[va] * rot) - np.real(on_phasors[vrad] * rot))


def inductor_current_discrepancy(off_model, carried_state, analytic_state):
    """Compare the state carried by the simulator across the opening
    with the state assumed by the analytic path.

    Both states are keyed by OFF-model state labels. Returns the largest
    inductor current the analytic path drops, the largest probe
    deviation at t=0 and the stored energy difference.
    """
    x_c = np.array([carried_state.values.get(lab, 0.0) for lab in off_model.state_labels])
    x_a = np.array([analytic_state.values.get(lab, 0.0) for lab in off_model.state_labels])
    inductors = np.array([k == "inductor-current" for k in off_model.state_kinds])
    dropped = float(np.max(np.abs(x_c - x_a)[inductors])) if inductors.any() else 0.0
    deviation = float(np.max(np.abs(off_model.c @ (x_c - x_a)))) if off_model.order else 0.0
    energy = 0.5 * float(np.sum(off_model.state_values * (x_c**2 - x_a**2)))
    return {
        "max_inductor_current_A": dropped,
        "max_probe_deviation_V": deviation,
        "energy_difference_J": energy,
    }


def steady_state_estimate(c, l, r, l_match, v_cw, f_c, r_source=0.0,
                          v_ss_exact=None, q_limit=1e4, detune_limit=0.5):
    """Approximate antenna terminal voltage V_ss ~ Q_rad V_cw / 2.

    Q_rad is taken from the frequency derivative of the series loop
    impedance r_source + j w L_m + 1/(j w C) + (j w L || R) at the
    carrier. ``r = inf`` gives a lossless antenna.

    Returns
    -------
    estimate: dict
        v_ss_estimate, q_rad, f_resonance, valid and, when v_ss_exact is
        given, ratio of estimate to exact value
    """
    def z_loop(omega):
        zl = 1j * omega * l
        zlr = zl if np.isinf(r) else zl * r / (r + zl)
        return r_source + 1j * omega * l_match + 1.0 / (1j * omega * c) + zlr

    omega_c = 2 * np.pi * f_c
    grid = omega_c * np.linspace(0.9, 1.1, 2001)
    z = z_loop(grid)
    resistance = np.real(z_loop(omega_c))
    valid = True
    if resistance <= 0:
        q_rad = np.inf
    else:
        q_rad = q_from_impedance(z, grid, omega_c, r_rad=resistance)
    if not np.isfinite(q_rad) or q_rad > q_limit:
        logger.warning(f"Radiation Q is unbounded ({q_rad:.3g}), V_ss estimate diverges")
        valid = False
    f_res = np.nan
    lo, hi = 0.2 * omega_c, 5.0 * omega_c
    if np.sign(np.imag(z_loop(lo))) != np.sign(np.imag(z_loop(hi))):
        f_res = optimize.brentq(lambda w: np.imag(z_loop(w)), lo, hi) / (2 * np.pi)
    if not np.isfinite(f_res) or abs(f_c - f_res) / f_res > detune_limit:
        logger.warning(f"Drive at {f_c:.6g} Hz is far from resonance, estimate invalid")
        valid = False
    out = {
        "v_ss_estimate": 0.5 * q_rad * v_cw,
        "q_rad": q_rad,
        "f_resonance": f_res,
        "valid": valid,
    }
    if v_ss_exact is not None:
        out["ratio"] = out["v_ss_estimate"] / v_ss_exact
    return out
