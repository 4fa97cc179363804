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

"""Piecewise-LTI switched circuits: netlists, state-space assembly and
exact simulation of switching schedules.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
import xarray as xr
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exception import (
    XdamValidationError,
    XdamNumericalError,
    TopologyError,
    ConnectivityError,
    ScheduleError,
    ProbeError,
    ConditioningError,
)


logger = logging.getLogger(__name__)

ELEMENT_KINDS = ("resistor", "capacitor", "inductor")
SOURCE_KINDS = ("sinusoid", "dc", "piecewise")
SWITCH_KINDS = ("SPST", "SPDT")


@dataclass(frozen=True)
class Element:
    id: str
    kind: str
    nodes: tuple
    value: float


@dataclass(frozen=True)
class Source:
    """Independent voltage source between ``nodes`` (positive first).

    ``piecewise`` sources are sinusoids whose phase is piecewise
    constant: ``phase_track`` holds ``(time, phase)`` pairs, each phase
    applying from its time onwards.
    """

    id: str
    nodes: tuple
    kind: str = "sinusoid"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    level: float = 0.0
    series_resistance: float = 0.0
    phase_track: tuple = ()

    @property
    def oscillating(self):
        return self.kind in ("sinusoid", "piecewise")

    def phase_at(self, t):
        phase = self.phase
        for tb, ph in self.phase_track:
            if tb <= t:
                phase = ph
            else:
                break
        return phase

    def breakpoints(self):
        return tuple(tb for tb, _ in self.phase_track)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "dc":
            return np.full_like(t, self.level)
        phase = np.full_like(t, self.phase)
        for tb, ph in self.phase_track:
            phase = np.where(t >= tb, ph, phase)
        return self.amplitude * np.cos(2 * np.pi * self.frequency * t + phase)


@dataclass(frozen=True)
class Switch:
    id: str
    kind: str
    pole: str
    throws: tuple
    r_on: float
    r_off: float
    c_parallel: float = 0.0
    off_node: str = None


@dataclass(frozen=True)
class Netlist:
    elements: tuple
    sources: tuple = ()
    switches: tuple = ()
    probes: tuple = ()
    ground: str = "0"

    def element(self, eid):
        for el in self.elements:
            if el.id == eid:
                return el
        raise XdamValidationError(f"Element {eid} is not in the netlist")

    def source(self, sid):
        for src in self.sources:
            if src.id == sid:
                return src
        raise XdamValidationError(f"Source {sid} is not in the netlist")

    def switch(self, sid):
        for sw in self.switches:
            if sw.id == sid:
                return sw
        raise XdamValidationError(f"Switch {sid} is not in the netlist")

    @property
    def probe_map(self):
        return dict(self.probes)

    @property
    def nodes(self):
        nodes = {self.ground}
        for el in self.elements:
            nodes.update(el.nodes)
        for src in self.sources:
            nodes.update(src.nodes)
        for sw in self.switches:
            nodes.add(sw.pole)
            nodes.update(sw.throws)
            if sw.off_node is not None:
                nodes.add(sw.off_node)
        return nodes


@dataclass(frozen=True)
class CircuitState:
    """Reactive state at ``time``: capacitor-group voltages (V) and
    inductor currents (A) keyed by state label."""

    time: float
    values: dict = field(default_factory=dict)

    def element_values(self, model):
        """Expand merged labels into per-element values"""
        out = {}
        for label, v in self.values.items():
            for eid, sign in model.members[label]:
                out[eid] = sign * v
        return out


@dataclass(frozen=True)
class SwitchSchedule:
    """Initial switch configuration plus ordered ``(time, config)`` events"""

    initial: dict
    events: tuple = ()

    def config_at(self, t):
        config = dict(self.initial)
        for te, cfg in self.events:
            if te <= t:
                config.update(cfg)
            else:
                break
        return config


@dataclass
class StateSpaceModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f: np.ndarray
    state_labels: list
    state_kinds: list
    state_values: np.ndarray
    members: dict
    input_labels: list
    output_labels: list
    inject_nodes: tuple
    nodes: set
    config: dict

    @property
    def order(self):
        return len(self.state_labels)


def validate_netlist(netlist):
    """Check ids, values and probe references of a netlist.

    Raises XdamValidationError on the first problem found.
    """
    ids = [el.id for el in netlist.elements]
    ids += [src.id for src in netlist.sources]
    ids += [sw.id for sw in netlist.switches]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise XdamValidationError(f"Duplicated ids in netlist: {sorted(dupes)}")
    for el in netlist.elements:
        if el.kind not in ELEMENT_KINDS:
            raise XdamValidationError(f"Element {el.id} has unknown kind {el.kind}")
        if len(el.nodes) != 2 or el.nodes[0] == el.nodes[1]:
            raise XdamValidationError(f"Element {el.id} needs two distinct nodes")
        if not el.value > 0 or not np.isfinite(el.value):
            raise XdamValidationError(
                f"Element {el.id} value must be strictly positive, got {el.value}"
            )
    for src in netlist.sources:
        if src.kind not in SOURCE_KINDS:
            raise XdamValidationError(f"Source {src.id} has unknown kind {src.kind}")
        if src.series_resistance < 0:
            raise XdamValidationError(f"Source {src.id} has negative series resistance")
        if src.oscillating and not src.frequency > 0:
            raise XdamValidationError(f"Source {src.id} frequency must be > 0")
    for sw in netlist.switches:
        if sw.kind not in SWITCH_KINDS:
            raise XdamValidationError(f"Switch {sw.id} has unknown kind {sw.kind}")
        nthrows = 1 if sw.kind == "SPST" else 2
        if len(sw.throws) != nthrows:
            raise XdamValidationError(
                f"Switch {sw.id} of kind {sw.kind} needs {nthrows} throw node(s)"
            )
        if not (sw.r_on > 0 and sw.r_off > sw.r_on):
            raise XdamValidationError(
                f"Switch {sw.id} needs 0 < r_on < r_off, got {sw.r_on}, {sw.r_off}"
            )
        if sw.c_parallel < 0:
            raise XdamValidationError(f"Switch {sw.id} has negative c_parallel")
    nodes = netlist.nodes
    for name, pair in netlist.probes:
        for node in pair:
            if node not in nodes:
                raise ProbeError(f"Probe {name} references undeclared node {node}")


def switch_position(sw, position):
    """Return the connected throw index, or None when all throws are open"""
    if isinstance(position, str):
        pos = position.upper()
        if pos == "OFF":
            return None
        if pos == "ON" and sw.kind == "SPST":
            return 0
        if pos.isdigit():
            position = int(pos)
        else:
            raise XdamValidationError(f"Switch {sw.id}: unknown position {position}")
    if isinstance(position, bool):
        return 0 if position else None
    index = int(position)
    if index < 0 or index >= len(sw.throws):
        raise XdamValidationError(f"Switch {sw.id}: throw index {index} out of range")
    return index


def _check_config(netlist, config):
    known = {sw.id for sw in netlist.switches}
    given = set(config)
    if given != known:
        raise XdamValidationError(
            f"Switch configuration must cover {sorted(known)} exactly, got {sorted(given)}"
        )


def _active_branches(netlist, config):
    """Elements plus the resistors/capacitors realising each switch"""
    branches = [(el.id, el.kind, tuple(el.nodes), el.value) for el in netlist.elements]
    for sw in netlist.switches:
        index = switch_position(sw, config[sw.id])
        for k, throw in enumerate(sw.throws):
            if k == index:
                branches.append((f"{sw.id}.on{k}", "resistor", (sw.pole, throw), sw.r_on))
                continue
            other = throw if sw.off_node is None else sw.off_node
            branches.append((f"{sw.id}.roff{k}", "resistor", (sw.pole, other), sw.r_off))
            if sw.c_parallel > 0:
                branches.append(
                    (f"{sw.id}.coff{k}", "capacitor", (sw.pole, other), sw.c_parallel)
                )
    return branches


def _merge_series_inductors(branches, netlist, keep_nodes):
    """Replace pairs of inductors meeting at an otherwise empty node by
    one inductor. Returns branches and a member map with current signs."""
    members = {b[0]: ((b[0], 1.0),) for b in branches if b[1] == "inductor"}
    source_nodes = {n for src in netlist.sources for n in src.nodes}
    merged = True
    while merged:
        merged = False
        incident = {}
        for br in branches:
            for node in br[2]:
                incident.setdefault(node, []).append(br)
        for node, brs in incident.items():
            if node == netlist.ground or node in keep_nodes or node in source_nodes:
                continue
            if len(brs) != 2 or any(b[1] != "inductor" for b in brs):
                continue
            first, second = brs
            x = first[2][0] if first[2][1] == node else first[2][1]
            y = second[2][1] if second[2][0] == node else second[2][0]
            if x == y:
                continue
            sign1 = 1.0 if first[2][0] == x else -1.0
            sign2 = 1.0 if second[2][1] == y else -1.0
            label = f"{first[0]}+{second[0]}"
            members[label] = tuple(
                (eid, s * sign1) for eid, s in members.pop(first[0])
            ) + tuple((eid, s * sign2) for eid, s in members.pop(second[0]))
            branches = [b for b in branches if b is not first and b is not second]
            branches.append((label, "inductor", (x, y), first[3] + second[3]))
            merged = True
            break
    return branches, members


def _group_capacitors(branches):
    groups = {}
    order = []
    for bid, kind, nodes, value in branches:
        if kind != "capacitor":
            continue
        key = frozenset(nodes)
        if key not in groups:
            groups[key] = {"nodes": nodes, "value": 0.0, "members": []}
            order.append(key)
        grp = groups[key]
        sign = 1.0 if nodes == grp["nodes"] else -1.0
        grp["value"] += value
        grp["members"].append((bid, sign))
    out = []
    for key in order:
        grp = groups[key]
        label = "+".join(m[0] for m in grp["members"])
        out.append((label, grp["nodes"], grp["value"], tuple(grp["members"])))
    return out


def _components(nodes, edges):
    """Connected component label of every node of an undirected graph"""
    index = {n: i for i, n in enumerate(sorted(nodes))}
    rows = [index[p] for p, n in edges]
    cols = [index[n] for p, n in edges]
    graph = coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(index), len(index))
    )
    _, labels = connected_components(graph, directed=False)
    return {n: int(labels[i]) for n, i in index.items()}


def _check_connectivity(nodes, edges, ground):
    comp = _components(nodes, edges)
    floating = sorted(n for n in nodes if comp[n] != comp[ground])
    if floating:
        raise ConnectivityError(f"Nodes {floating} are not connected to ground")


def _check_degeneracy(caps, inductors, resistors, sources, ground):
    nodes = {ground}
    for branch in list(caps) + list(inductors) + list(resistors):
        nodes.update(branch[1])
    for src in sources:
        nodes.update(src.nodes)
    # capacitor (and ideal voltage source) loops: a component with more
    # edges than a spanning tree of its nodes
    loop_edges = [(label, tuple(pair)) for label, pair, _, _ in caps]
    loop_edges += [(src.id, tuple(src.nodes)) for src in sources if src.series_resistance == 0]
    comp = _components(nodes, [pair for _, pair in loop_edges])
    sizes = pd.Series(comp).value_counts()
    names = {}
    for label, (p, _) in loop_edges:
        names.setdefault(comp[p], []).append(label)
    for key, labels in names.items():
        if len(labels) > sizes[key] - 1:
            raise TopologyError(f"Capacitor loop through {', '.join(labels)}")
    # inductor cutsets: contract everything but inductors
    contracted = [pair for _, pair in loop_edges]
    contracted += [tuple(pair) for _, pair, _ in resistors]
    contracted += [tuple(src.nodes) for src in sources]
    comp = _components(nodes, contracted)
    crossing = {}
    for label, (p, n), _, _ in inductors:
        if comp[p] != comp[n]:
            crossing.setdefault(comp[p], []).append(label)
            crossing.setdefault(comp[n], []).append(label)
    for key, labels in crossing.items():
        if key != comp[ground]:
            raise TopologyError(f"Inductor cutset formed by {', '.join(sorted(set(labels)))}")


def assemble(netlist, switch_config, inject_nodes=()):
    """Build the state-space model of ``netlist`` for one switch
    configuration.

    Each switch is replaced by ``r_on`` towards the connected throw and
    by ``r_off`` in parallel with ``c_parallel`` towards every open throw
    (or towards ``off_node`` when the switch declares one). Capacitors
    sharing a node pair are merged into one state, series inductors
    through an otherwise empty node as well.

    Parameters
    ----------
    netlist: Netlist
        Circuit description
    switch_config: dict
        Switch id to position ("ON"/"OFF" or throw index)
    inject_nodes: tuple(str), optional
        Nodes receiving an auxiliary unit current input, exposed as the
        ``e`` and ``f`` matrices (default none)

    Returns
    -------
    model: StateSpaceModel
        x' = a x + b u + e j, y = c x + d u + f j
    """
    validate_netlist(netlist)
    _check_config(netlist, switch_config)
    ground = netlist.ground
    branches = _active_branches(netlist, switch_config)
    probe_nodes = {n for _, pair in netlist.probes for n in pair}
    branches, ind_members = _merge_series_inductors(
        branches, netlist, probe_nodes | set(inject_nodes)
    )
    caps = _group_capacitors(branches)
    inductors = [
        (bid, nodes, value, ind_members[bid])
        for bid, kind, nodes, value in branches
        if kind == "inductor"
    ]
    resistors = [(bid, nodes, value) for bid, kind, nodes, value in branches if kind == "resistor"]

    active = {ground}
    edges = []
    for _, _, nodes, _ in branches:
        active.update(nodes)
        edges.append(tuple(nodes))
    for src in netlist.sources:
        active.update(src.nodes)
        edges.append(tuple(src.nodes))
    for node in inject_nodes:
        if node not in active:
            raise XdamValidationError(f"Injection node {node} is not in the circuit")
    _check_connectivity(active, edges, ground)
    _check_degeneracy(caps, inductors, resistors, netlist.sources, ground)

    nodes = sorted(n for n in active if n != ground)
    nidx = {n: i for i, n in enumerate(nodes)}
    ideal = [src for src in netlist.sources if src.series_resistance == 0]
    ncap, nind = len(caps), len(inductors)
    nsrc, ninj = len(netlist.sources), len(inject_nodes)
    nx = ncap + nind
    nunk = len(nodes) + ncap + len(ideal)
    ncol = nx + nsrc + ninj
    m = np.zeros((nunk, nunk))
    rhs = np.zeros((nunk, ncol))

    def stamp_g(p, n, g):
        for a_, b_ in ((p, n), (n, p)):
            if a_ != ground:
                m[nidx[a_], nidx[a_]] += g
                if b_ != ground:
                    m[nidx[a_], nidx[b_]] -= g

    def stamp_v(row, p, n):
        if p != ground:
            m[nidx[p], row] += 1.0
            m[row, nidx[p]] += 1.0
        if n != ground:
            m[nidx[n], row] -= 1.0
            m[row, nidx[n]] -= 1.0

    for _, (p, n), value in resistors:
        stamp_g(p, n, 1.0 / value)
    row = len(nodes)
    cap_rows = []
    for k, (_, (p, n), _, _) in enumerate(caps):
        stamp_v(row, p, n)
        rhs[row, k] = 1.0
        cap_rows.append(row)
        row += 1
    for k, (_, (p, n), _, _) in enumerate(inductors):
        if p != ground:
            rhs[nidx[p], ncap + k] -= 1.0
        if n != ground:
            rhs[nidx[n], ncap + k] += 1.0
    for k, src in enumerate(netlist.sources):
        p, n = src.nodes
        col = nx + k
        if src.series_resistance > 0:
            g = 1.0 / src.series_resistance
            stamp_g(p, n, g)
            if p != ground:
                rhs[nidx[p], col] += g
            if n != ground:
                rhs[nidx[n], col] -= g
        else:
            stamp_v(row, p, n)
            rhs[row, col] = 1.0
            row += 1
    for k, node in enumerate(inject_nodes):
        if node != ground:
            rhs[nidx[node], nx + nsrc + k] += 1.0

    if nunk:
        lu, piv = linalg.lu_factor(m, check_finite=True)
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= np.finfo(float).eps * pivots.max() * nunk:
            raise TopologyError("Network equations are singular for this configuration")
        sol = linalg.lu_solve((lu, piv), rhs)
    else:
        sol = np.zeros((0, ncol))

    def vrow(node):
        if node == ground:
            return np.zeros(ncol)
        return sol[nidx[node]]

    deriv = np.zeros((nx, ncol))
    labels, kinds, values, members = [], [], [], {}
    for k, (label, _, value, mem) in enumerate(caps):
        deriv[k] = sol[cap_rows[k]] / value
        labels.append(label)
        kinds.append("capacitor-voltage")
        values.append(value)
        members[label] = mem
    for k, (label, (p, n), value, mem) in enumerate(inductors):
        deriv[ncap + k] = (vrow(p) - vrow(n)) / value
        labels.append(label)
        kinds.append("inductor-current")
        values.append(value)
        members[label] = mem

    out_labels = [name for name, _ in netlist.probes]
    outs = np.array(
        [vrow(p) - vrow(n) for _, (p, n) in netlist.probes]
    ).reshape(len(out_labels), ncol)
    model = StateSpaceModel(
        a=deriv[:, :nx],
        b=deriv[:, nx:nx + nsrc],
        c=outs[:, :nx],
        d=outs[:, nx:nx + nsrc],
        e=deriv[:, nx + nsrc:],
        f=outs[:, nx + nsrc:],
        state_labels=labels,
        state_kinds=kinds,
        state_values=np.array(values),
        members=members,
        input_labels=[src.id for src in netlist.sources],
        output_labels=out_labels,
        inject_nodes=tuple(inject_nodes),
        nodes=active,
        config=dict(switch_config),
    )
    logger.debug(f"Assembled {model.order}-state model for {switch_config}")
    if model.order:
        growth = np.max(np.linalg.eigvals(model.a).real)
        if growth > 1e-9 * np.max(np.abs(model.a)):
            logger.warning(f"Model for {switch_config} has an unstable mode ({growth:.3g} 1/s)")
    return model


def stored_energy(model, state):
    """Total stored energy 1/2 sum(C v^2) + 1/2 sum(L i^2) in J"""
    x = np.array([state.values[label] for label in model.state_labels])
    return 0.5 * float(np.sum(model.state_values * x**2))


def _sinusoid_sources(netlist, source_id=None):
    sources = [src for src in netlist.sources if src.oscillating]
    if source_id is not None:
        sources = [src for src in sources if src.id == source_id]
    if not sources:
        raise XdamValidationError("Netlist has no sinusoidal source to drive it")
    return sources


def steady_state_phasor(model, netlist, source_id=None, frequency=None):
    """Complex amplitudes of every state and probe at the drive frequency.

    Parameters
    ----------
    model: StateSpaceModel
        Model for the driving configuration
    netlist: Netlist
        Netlist the model was assembled from, provides source values
    source_id: str, optional
        Sinusoidal source driving the circuit, other sinusoidal sources
        at the same frequency contribute as well (default all)
    frequency: float, optional
        Drive frequency in Hz (default the source frequency)

    Returns
    -------
    phasors: pandas Series
        Complex phasors indexed by state label then probe name, a probe
        value v(t) = Re(P exp(j 2 pi f t)); abs(phasors['v_a']) is V_ss
    """
    sources = _sinusoid_sources(netlist, source_id)
    freq = sources[0].frequency if frequency is None else frequency
    if not freq > 0:
        raise XdamValidationError("Drive frequency must be > 0")
    omega = 2 * np.pi * freq
    u = np.zeros(len(model.input_labels), dtype=complex)
    for src in netlist.sources:
        if src.oscillating and np.isclose(src.frequency, freq) and (
            source_id is None or src.id == source_id
        ):
            u[model.input_labels.index(src.id)] = src.amplitude * np.exp(1j * src.phase)
    sysm = 1j * omega * np.eye(model.order) - model.a
    if model.order and np.linalg.cond(sysm) > 1e14:
        raise ConditioningError(f"System is singular at {freq:.6g} Hz")
    x = np.linalg.solve(sysm, model.b @ u) if model.order else np.zeros(0)
    y = model.c @ x + model.d @ u
    return pd.Series(
        np.concatenate([x, y]),
        index=list(model.state_labels) + list(model.output_labels),
        name="phasor",
    )


def steady_state_state(model, phasors, frequency, t):
    """Periodic steady state of ``model`` at time ``t``"""
    rot = np.exp(2j * np.pi * frequency * t)
    values = {label: float(np.real(phasors[label] * rot)) for label in model.state_labels}
    return CircuitState(time=t, values=values)


def peak_times(phasor, frequency, t_window, source_phase=0.0):
    """Times in ``t_window`` where Re(phasor exp(j(2 pi f t + source_phase)))
    is maximum, computed from the phasor phase.
    """
    if abs(phasor) == 0:
        raise XdamNumericalError("Zero-amplitude phasor has no peaks")
    t0, t1 = t_window
    phi = np.angle(phasor) + source_phase
    kmin = np.ceil(t0 * frequency + phi / (2 * np.pi) - 1e-12)
    kmax = np.floor(t1 * frequency + phi / (2 * np.pi) + 1e-12)
    k = np.arange(kmin, kmax + 1)
    return (k - phi / (2 * np.pi)) / frequency


def carry_state(state, old_model, new_model, time=None):
    """Carry capacitor voltages and inductor currents across a switch event.

    Persisting labels are copied as they are; a merged group takes the
    value of its first member with a predecessor; anything else starts
    at zero.
    """
    by_element = state.element_values(old_model) if old_model is not None else {}
    values = {}
    for label in new_model.state_labels:
        if label in state.values and (
            old_model is None or old_model.members.get(label) == new_model.members[label]
        ):
            values[label] = state.values[label]
            continue
        values[label] = 0.0
        for eid, sign in new_model.members[label]:
            if eid in by_element:
                values[label] = sign * by_element[eid]
                break
    return CircuitState(time=state.time if time is None else time, values=values)


def _companion(netlist, t):
    """Companion matrix and initial vector of all source waveforms"""
    blocks, z0, sel = [], [], []
    pos = 0
    for src in netlist.sources:
        if src.oscillating:
            w = 2 * np.pi * src.frequency
            ph = w * t + src.phase_at(t)
            blocks.append(np.array([[0.0, -w], [w, 0.0]]))
            z0 += [src.amplitude * np.cos(ph), src.amplitude * np.sin(ph)]
            sel.append(pos)
            pos += 2
        else:
            blocks.append(np.zeros((1, 1)))
            z0.append(src.level)
            sel.append(pos)
            pos += 1
    omega = linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))
    return omega, np.array(z0), sel


def _augmented(model, omega, sel):
    n, q = model.order, omega.shape[0]
    mat = np.zeros((n + q, n + q))
    mat[:n, :n] = model.a
    mat[n:, n:] = omega
    for k, col in enumerate(sel):
        mat[:n, n + col] += model.b[:, k]
    return mat


def _config_key(config):
    return tuple(sorted((k, str(v)) for k, v in config.items()))


def _segment_times(netlist, schedule, t_start, t_end):
    times = [t_start, t_end]
    times += [te for te, _ in schedule.events]
    for src in netlist.sources:
        times += [tb for tb in src.breakpoints() if t_start < tb < t_end]
    return sorted(set(times))


def check_schedule(schedule, t_start, t_end):
    times = [te for te, _ in schedule.events]
    if any(t2 == t1 for t1, t2 in zip(times[:-1], times[1:])):
        raise ScheduleError("Two switch events share the same time")
    if any(t2 < t1 for t1, t2 in zip(times[:-1], times[1:])):
        raise ScheduleError("Switch event times must be strictly increasing")
    if times and (times[0] < t_start or times[-1] > t_end):
        raise ScheduleError(
            f"Switch events must lie within [{t_start}, {t_end}], "
            f"got [{times[0]}, {times[-1]}]"
        )


def simulate(
    netlist,
    schedule,
    t_end,
    sample_interval,
    t_start=0.0,
    initial_state=None,
    probes=None,
    record_states=False,
):
    """Simulate a switching schedule with exact segment propagation.

    Inside each segment between switch events (and source phase
    breakpoints) the state and the source companion states are advanced
    by the matrix exponential of the augmented system. Probe outputs are
    evaluated at the sample instants t_start + k*sample_interval; a
    sample falling on an event belongs to the segment that starts there.

    Parameters
    ----------
    netlist: Netlist
        Circuit description, source values included
    schedule: SwitchSchedule
        Initial configuration and events
    t_end: float
        End of the simulation in s
    sample_interval: float
        Output sample interval in s
    t_start: float, optional
        Start time in s (default 0)
    initial_state: CircuitState, optional
        State at t_start, missing labels are zero (default all zero)
    probes: list(str), optional
        Probes to record (default every probe of the netlist)
    record_states: bool, optional
        If True add the state trajectories to the output (default False)

    Returns
    -------
    ds: xarray Dataset
        One variable per probe along ``time``
    final: CircuitState
        State at t_end
    """
    if not sample_interval > 0:
        raise XdamValidationError("sample_interval must be > 0")
    if not t_end > t_start:
        raise XdamValidationError("t_end must be after t_start")
    check_schedule(schedule, t_start, t_end)
    probes = [name for name, _ in netlist.probes] if probes is None else list(probes)
    pmap = netlist.probe_map
    for name in probes:
        if name not in pmap:
            raise ProbeError(f"Probe {name} is not defined in the netlist")

    nsamp = int(np.floor((t_end - t_start) / sample_interval + 1e-9)) + 1
    tgrid = t_start + sample_interval * np.arange(nsamp)
    out = np.full((len(probes), nsamp), np.nan)
    bounds = _segment_times(netlist, schedule, t_start, t_end)
    models, labels_seen, state_rows = {}, [], []

    state = initial_state if initial_state is not None else CircuitState(t_start, {})
    prev_model = None
    for iseg, (ta, tb) in enumerate(zip(bounds[:-1], bounds[1:])):
        config = schedule.config_at(ta)
        key = _config_key(config)
        if key not in models:
            models[key] = {"model": assemble(netlist, config), "phi": None}
        entry = models[key]
        model = entry["model"]
        for name in probes:
            if any(node not in model.nodes for node in pmap[name]):
                raise ProbeError(f"Probe {name} is absent in segment {iseg} [{ta}, {tb})")
        if prev_model is None and initial_state is not None:
            state = carry_state(state, None, model, ta)
        elif prev_model is not model:
            state = carry_state(state, prev_model, model, ta)
        omega, z0, sel = _companion(netlist, ta)
        mat = _augmented(model, omega, sel)
        n = model.order
        w0 = np.concatenate([[state.values.get(lab, 0.0) for lab in model.state_labels], z0])
        last = iseg == len(bounds) - 2
        idx = np.nonzero((tgrid >= ta) & ((tgrid < tb) | (last & (tgrid <= tb))))[0]
        if idx.size:
            cmat = np.hstack([model.c, np.zeros((model.c.shape[0], omega.shape[0]))])
            for k, col in enumerate(sel):
                cmat[:, n + col] += model.d[:, k]
            rows = [model.output_labels.index(p) for p in probes]
            cmat = cmat[rows]
            if entry["phi"] is None or entry["phi"].shape != mat.shape:
                entry["phi"] = linalg.expm(mat * sample_interval)
            phi = entry["phi"]
            w = linalg.expm(mat * (tgrid[idx[0]] - ta)) @ w0
            traj = np.empty((mat.shape[0], idx.size))
            for j in range(idx.size):
                traj[:, j] = w
                w = phi @ w
            out[:, idx] = cmat @ traj
            if record_states:
                state_rows.append((idx, model.state_labels, traj[:n]))
                labels_seen += [lab for lab in model.state_labels if lab not in labels_seen]
        w_end = linalg.expm(mat * (tb - ta)) @ w0
        state = CircuitState(tb, dict(zip(model.state_labels, w_end[:n])))
        prev_model = model
    logger.debug(f"Simulated {len(bounds) - 1} segments, {nsamp} samples")

    ds = xr.Dataset(coords={"time": tgrid})
    for k, name in enumerate(probes):
        ds[name] = xr.DataArray(out[k], dims="time")
        ds[name].attrs = {"units": "V", "long_name": f"probe {name}"}
    if record_states:
        for label in labels_seen:
            ds[label] = xr.DataArray(np.full(nsamp, np.nan), dims="time")
        for idx, labels, traj in state_rows:
            for k, label in enumerate(labels):
                ds[label].values[idx] = traj[k]
    ds["time"].attrs = {"units": "s", "long_name": "time"}
    ds.attrs["sample_interval"] = sample_interval
    ds.attrs["segments"] = len(bounds) - 1
    return ds, state


def rk4_reference(netlist, schedule, t_end, step, t_start=0.0, initial_state=None):
    """Fixed-step fourth order Runge-Kutta integration of the same
    piecewise model, sampled on its own step grid. Used as an
    independent check of ``simulate``.
    """
    check_schedule(schedule, t_start, t_end)
    nsteps = int(round((t_end - t_start) / step))
    times = t_start + step * np.arange(nsteps + 1)
    probes = [name for name, _ in netlist.probes]
    out = np.empty((len(probes), nsteps + 1))
    models = {}
    state = initial_state if initial_state is not None else CircuitState(t_start, {})
    prev = None
    srcs = netlist.sources

    def u_at(t):
        return np.array([float(src.value(t)) for src in srcs])

    for i, t in enumerate(times):
        config = schedule.config_at(t)
        key = _config_key(config)
        if key not in models:
            models[key] = assemble(netlist, config)
        model = models[key]
        if model is not prev:
            state = carry_state(state, prev, model, t)
            x = np.array([state.values.get(lab, 0.0) for lab in model.state_labels])
            prev = model
        out[:, i] = model.c @ x + model.d @ u_at(t)
        if i == nsteps:
            break

        def rhs(tt, xx):
            return model.a @ xx + model.b @ u_at(tt)

        k1 = rhs(t, x)
        k2 = rhs(t + step / 2, x + step / 2 * k1)
        k3 = rhs(t + step / 2, x + step / 2 * k2)
        k4 = rhs(t + step, x + step * k3)
        x = x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        state = CircuitState(t + step, dict(zip(model.state_labels, x)))
    ds = xr.Dataset({name: ("time", out[k]) for k, name in enumerate(probes)},
                    coords={"time": times})
    return ds


def with_dc_throw(netlist, v_dc, switch_id="S1", dc_node="dc", series_resistance=0.0):
    """Turn an SPST switch into the SPDT of a DC-assisted transmitter.

    Throw 0 keeps the RF path, throw 1 reaches an ideal DC source of
    level ``v_dc`` (source id ``vdc``) at ``dc_node``.
    """
    sw = netlist.switch(switch_id)
    if sw.kind != "SPST":
        raise XdamValidationError(f"Switch {switch_id} is already {sw.kind}")
    spdt = replace(sw, kind="SPDT", throws=(sw.throws[0], dc_node))
    dc = Source(
        id="vdc",
        nodes=(dc_node, netlist.ground),
        kind="dc",
        level=float(v_dc),
        series_resistance=series_resistance,
    )
    switches = tuple(spdt if s.id == switch_id else s for s in netlist.switches)
    return replace(netlist, switches=switches, sources=tuple(netlist.sources) + (dc,))


def scale_elements(netlist, factor, element_ids=(), switch_capacitance=True,
                   switch_leakage=False):
    """Scale selected element values (and switch capacitances) by ``factor``.

    With ``switch_leakage`` the open-switch conductance scales as well,
    r_off becomes r_off / factor.
    """
    if not factor > 0:
        raise XdamValidationError(f"Scale factor must be > 0, got {factor}")
    elements = tuple(
        replace(el, value=el.value * factor) if el.id in element_ids else el
        for el in netlist.elements
    )
    switches = netlist.switches
    if switch_capacitance:
        switches = tuple(replace(sw, c_parallel=sw.c_parallel * factor) for sw in switches)
    if switch_leakage:
        switches = tuple(replace(sw, r_off=sw.r_off / factor) for sw in switches)
    return replace(netlist, elements=elements, switches=switches)


def replace_source(netlist, source_id, **changes):
    sources = tuple(
        replace(src, **changes) if src.id == source_id else src for src in netlist.sources
    )
    return replace(netlist, sources=sources)


def waveform_to_csv(ds, path, probes=None):
    """Write probes as CSV with header ``time_s,<probe>...``"""
    probes = [v for v in ds.data_vars] if probes is None else list(probes)
    df = ds[probes].to_dataframe()
    df.index.name = "time_s"
    df.to_csv(path, float_format="%.17g")
    return path
