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

"""Unit strings, netlist documents and experiment configuration."""

import copy
import hashlib
import json
import logging
import os
import re
from dataclasses import replace

import pint
import yaml

from .circuit import Element, Source, Switch, Netlist, validate_netlist
from .exception import ConfigError, XdamValidationError


logger = logging.getLogger(__name__)

ureg = pint.UnitRegistry()

UNITS = {
    "resistor": "ohm",
    "capacitor": "farad",
    "inductor": "henry",
    "voltage": "volt",
    "frequency": "hertz",
    "time": "second",
    "phase": "radian",
}

# Reference transmitter: source, SPST switch, matching inductor, antenna.
# The OFF branch of the switch returns to ground, as in the OFF-state
# model used for the transient analysis.
DEFAULT_NETLIST = {
    "ground": "0",
    "elements": [
        {"id": "C_L1", "kind": "capacitor", "nodes": ["sw", "0"], "value": "2.9pF"},
        {"id": "L_m", "kind": "inductor", "nodes": ["sw", "a"], "value": "1750nH"},
        {"id": "C_L2", "kind": "capacitor", "nodes": ["a", "0"], "value": "2.9pF"},
        {"id": "C_s", "kind": "capacitor", "nodes": ["a", "0"], "value": "2.7pF"},
        {"id": "C", "kind": "capacitor", "nodes": ["a", "b"], "value": "9.3pF"},
        {"id": "L", "kind": "inductor", "nodes": ["b", "0"], "value": "600nH"},
        {"id": "R", "kind": "resistor", "nodes": ["b", "0"], "value": "1950Ohm"},
    ],
    "sources": [
        {
            "id": "vcw",
            "kind": "sinusoid",
            "nodes": ["src", "0"],
            "amplitude": "1V",
            "frequency": "28.38MHz",
            "phase": 0,
            "series_resistance": "5Ohm",
        }
    ],
    "switches": [
        {
            "id": "S1",
            "kind": "SPST",
            "pole": "sw",
            "throws": ["src"],
            "r_on": "5Ohm",
            "r_off": "27MOhm",
            "c_parallel": "4pF",
            "off_node": "0",
        }
    ],
    "probes": {"v_a": ["a", "0"], "v_rad": "R", "v_C": "C"},
}

NETLIST_KEYS = {"ground", "elements", "sources", "switches", "probes"}
ELEMENT_KEYS = {"id", "kind", "nodes", "value"}
SOURCE_KEYS = {
    "id", "kind", "nodes", "amplitude", "frequency", "phase", "level",
    "series_resistance", "phase_track",
}
SWITCH_KEYS = {"id", "kind", "pole", "throws", "r_on", "r_off", "c_parallel", "off_node"}

_OHM = re.compile(r"(Ohm|ohms|Ohms|Ω)")


def parse_quantity(value, unit):
    """Convert an SI suffixed string ("4pF", "27MOhm") to a float in
    ``unit``. Bare numbers are taken as already in ``unit``.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str) or not value.strip():
        raise ConfigError(f"Cannot read a quantity from {value!r}")
    text = _OHM.sub("ohm", value.strip())
    try:
        quantity = ureg.Quantity(text)
    except (pint.errors.UndefinedUnitError, pint.errors.DefinitionSyntaxError,
            ValueError, AttributeError, TypeError) as exc:
        raise ConfigError(f"Value '{value}' not recognised: {exc}") from exc
    if quantity.unitless:
        return float(quantity.magnitude)
    try:
        return float(quantity.to(unit).magnitude)
    except pint.errors.DimensionalityError as exc:
        raise ConfigError(f"Value '{value}' is not a {unit}") from exc


def _check_keys(section, allowed, where):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"Unknown keys {sorted(unknown)} in {where}")


def netlist_from_dict(doc):
    """Build a Netlist from a key-value tree (parsed YAML)"""
    _check_keys(doc, NETLIST_KEYS, "netlist")
    ground = str(doc.get("ground", "0"))
    elements = []
    for item in doc.get("elements", []):
        _check_keys(item, ELEMENT_KEYS, f"element {item.get('id')}")
        kind = item["kind"]
        if kind not in UNITS:
            raise ConfigError(f"Element {item['id']} has unknown kind {kind}")
        elements.append(
            Element(
                id=str(item["id"]),
                kind=kind,
                nodes=tuple(str(n) for n in item["nodes"]),
                value=parse_quantity(item["value"], UNITS[kind]),
            )
        )
    sources = []
    for item in doc.get("sources", []):
        _check_keys(item, SOURCE_KEYS, f"source {item.get('id')}")
        track = tuple(
            (parse_quantity(t, "second"), parse_quantity(p, "radian"))
            for t, p in item.get("phase_track", [])
        )
        sources.append(
            Source(
                id=str(item["id"]),
                nodes=tuple(str(n) for n in item["nodes"]),
                kind=item.get("kind", "sinusoid"),
                amplitude=parse_quantity(item.get("amplitude", 0.0), "volt"),
                frequency=parse_quantity(item.get("frequency", 0.0), "hertz"),
                phase=parse_quantity(item.get("phase", 0.0), "radian"),
                level=parse_quantity(item.get("level", 0.0), "volt"),
                series_resistance=parse_quantity(item.get("series_resistance", 0.0), "ohm"),
                phase_track=track,
            )
        )
    switches = []
    for item in doc.get("switches", []):
        _check_keys(item, SWITCH_KEYS, f"switch {item.get('id')}")
        off_node = item.get("off_node")
        switches.append(
            Switch(
                id=str(item["id"]),
                kind=item.get("kind", "SPST"),
                pole=str(item["pole"]),
                throws=tuple(str(n) for n in item["throws"]),
                r_on=parse_quantity(item["r_on"], "ohm"),
                r_off=parse_quantity(item["r_off"], "ohm"),
                c_parallel=parse_quantity(item.get("c_parallel", 0.0), "farad"),
                off_node=None if off_node is None else str(off_node),
            )
        )
    element_nodes = {el.id: el.nodes for el in elements}
    probes = []
    for name, ref in doc.get("probes", {}).items():
        if isinstance(ref, str):
            if ref not in element_nodes:
                raise ConfigError(f"Probe {name} references unknown element {ref}")
            pair = element_nodes[ref]
        elif len(ref) == 1:
            pair = (str(ref[0]), ground)
        else:
            pair = (str(ref[0]), str(ref[1]))
        probes.append((str(name), tuple(pair)))
    netlist = Netlist(
        elements=tuple(elements),
        sources=tuple(sources),
        switches=tuple(switches),
        probes=tuple(probes),
        ground=ground,
    )
    try:
        validate_netlist(netlist)
    except XdamValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return netlist


def load_yaml(path):
    if not os.path.isfile(path):
        raise ConfigError(f"Config file {path} does not exist")
    with open(path) as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} does not hold a key-value document")
    return doc


def load_netlist(path=None):
    """Read a netlist document, or the default transmitter netlist if path
    is None or "default"."""
    if path is None or path == "default":
        return netlist_from_dict(copy.deepcopy(DEFAULT_NETLIST))
    return netlist_from_dict(load_yaml(path))


def default_netlist(frequency=None, amplitude=None):
    """Default transmitter netlist, optionally re-tuned source"""
    doc = copy.deepcopy(DEFAULT_NETLIST)
    if frequency is not None:
        doc["sources"][0]["frequency"] = frequency
    if amplitude is not None:
        doc["sources"][0]["amplitude"] = amplitude
    return netlist_from_dict(doc)


# keys each experiment accepts, with defaults
EXPERIMENT_DEFAULTS = {
    "common": {
        "experiment": None,
        "netlist": "default",
        "carrier": "28.38MHz",
        "amplitude": "1V",
        "samples_per_cycle": 64,
        "seed": 0,
        "output": "results",
    },
    "ringdown": {
        "off_cycles": 20,
        "parasitics_scale": 1.0,
        "parasitics": ["C_L1", "C_L2", "C_s"],
        "charged": ["C", "C_s", "C_L2"],
        "charge_level": "steady",
    },
    "single-transition": {
        "modes": ["OC_DAM", "DC_DAM"],
        "transitions_deg": [90, 180, 270],
        "vdc_ratio": 1.0,
        "cycles_before": 10,
        "cycles_after": 30,
        "envelope_cutoff": 0.9,
    },
    "vdc-sweep": {
        "vdc_ratios": [round(1.7 * k / 17, 6) for k in range(18)],
        "transitions_deg": [90, 180, 270],
        "cycles_before": 10,
        "cycles_after": 60,
        "lti_cycles": 400,
        "envelope_cutoff": 0.9,
    },
    "prbs-evm": {
        "register_bits": 8,
        "taps": None,
        "prbs_seed": 1,
        "n_bits": 256,
        "scheme": "qpsk",
        "cycles_per_symbol": [5, 3],
        "modes": ["LTI", "OC_DAM", "DC_DAM"],
        "vdc_ratios": [0.6, 1.0, 1.7],
        "cutoff": 0.45,
        "snr_db": None,
        "excerpt_symbols": 12,
    },
    "lti-grid": {
        "register_bits": 8,
        "taps": None,
        "prbs_seed": 1,
        "n_bits": 256,
        "scheme": "qpsk",
        "cycles_per_symbol": 3,
        "xi": [0.8, 1.0, 1.15, 1.3],
        "chi": [1.0, 0.75, 0.5, 0.4, 1 / 3],
        "eta": 0.75,
        "z0": "matched",
        "dam_vdc_ratios": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.7],
        "grid_points": 16384,
        "cutoff": 0.45,
        "snr_db": None,
    },
}

EXPERIMENTS = ("ringdown", "single-transition", "vdc-sweep", "prbs-evm", "lti-grid")


def experiment_config(doc, kind=None, base_dir="."):
    """Merge a config document with the defaults of its experiment kind.

    Unknown keys raise ConfigError. The netlist entry is resolved
    relative to ``base_dir``.
    """
    doc = dict(doc or {})
    kind = kind or doc.get("experiment")
    if kind == "transition":
        kind = "single-transition"
    if kind not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment kind {kind}, expected one of {EXPERIMENTS}")
    if doc.get("experiment") not in (None, kind) and not (
        doc.get("experiment") == "transition" and kind == "single-transition"
    ):
        raise ConfigError(f"Config is for {doc.get('experiment')}, not {kind}")
    allowed = dict(EXPERIMENT_DEFAULTS["common"])
    allowed.update(EXPERIMENT_DEFAULTS[kind])
    _check_keys(doc, allowed, f"{kind} config")
    config = copy.deepcopy(allowed)
    config.update(doc)
    config["experiment"] = kind
    net = config["netlist"]
    if net != "default":
        net = os.path.join(base_dir, net)
        if not os.path.isfile(net):
            raise ConfigError(f"Netlist file {net} does not exist")
        config["netlist"] = net
    config["carrier"] = parse_quantity(config["carrier"], "hertz")
    config["amplitude"] = parse_quantity(config["amplitude"], "volt")
    return config


def load_config(path, kind=None):
    doc = load_yaml(path)
    return experiment_config(doc, kind, base_dir=os.path.dirname(os.path.abspath(path)))


def config_digest(config):
    """SHA-256 of the resolved configuration"""
    text = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def config_netlist(config):
    """Netlist of a resolved config with its source tuned to the carrier"""
    netlist = load_netlist(config["netlist"])
    sources = tuple(
        replace(src, frequency=config["carrier"], amplitude=config["amplitude"])
        if src.oscillating else src
        for src in netlist.sources
    )
    return replace(netlist, sources=sources)
