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

import copy

from xdam.config import (
    DEFAULT_NETLIST,
    parse_quantity,
    netlist_from_dict,
    load_netlist,
    load_config,
    experiment_config,
    config_digest,
    config_netlist,
)
from xdam.exception import ConfigError
from xdam_fixtures import *
import numpy.testing as nptest


def test_parse_quantity():
    nptest.assert_allclose(parse_quantity("4pF", "farad"), 4e-12)
    nptest.assert_allclose(parse_quantity("27MOhm", "ohm"), 2.7e7)
    nptest.assert_allclose(parse_quantity("1750nH", "henry"), 1.75e-6)
    nptest.assert_allclose(parse_quantity("28.38MHz", "hertz"), 28.38e6)
    assert parse_quantity(5, "ohm") == 5.0
    assert parse_quantity("0.5", "volt") == 0.5
    with pytest.raises(ConfigError):
        parse_quantity("4pF", "ohm")
    with pytest.raises(ConfigError):
        parse_quantity("4 wobbles", "farad")
    with pytest.raises(ConfigError):
        parse_quantity("", "farad")
    with pytest.raises(ConfigError):
        parse_quantity(None, "farad")


def test_netlist_from_dict(netlist):
    assert netlist.element("C").value == pytest.approx(9.3e-12)
    assert netlist.switch("S1").r_off == pytest.approx(2.7e7)
    assert netlist.source("vcw").frequency == pytest.approx(28.38e6)
    probes = dict(netlist.probes)
    # probes named by element take its nodes
    assert probes["v_rad"] == ("b", "0")
    assert probes["v_C"] == ("a", "b")
    doc = copy.deepcopy(DEFAULT_NETLIST)
    doc["probes"] = {"v_a": ["a"]}
    assert dict(netlist_from_dict(doc).probes)["v_a"] == ("a", "0")


def test_netlist_from_dict_errors():
    doc = copy.deepcopy(DEFAULT_NETLIST)
    doc["wires"] = []
    with pytest.raises(ConfigError):
        netlist_from_dict(doc)
    doc = copy.deepcopy(DEFAULT_NETLIST)
    doc["elements"][0]["tolerance"] = 0.1
    with pytest.raises(ConfigError):
        netlist_from_dict(doc)
    doc = copy.deepcopy(DEFAULT_NETLIST)
    doc["elements"][0]["kind"] = "memristor"
    with pytest.raises(ConfigError):
        netlist_from_dict(doc)
    doc = copy.deepcopy(DEFAULT_NETLIST)
    doc["probes"] = {"v_x": "C_x"}
    with pytest.raises(ConfigError):
        netlist_from_dict(doc)
    # validation errors come back as config errors
    doc = copy.deepcopy(DEFAULT_NETLIST)
    doc["elements"][0]["value"] = "0pF"
    with pytest.raises(ConfigError):
        netlist_from_dict(doc)


def test_load_netlist():
    from_file = load_netlist(os.path.join(CONFIGS, "netlist_default.yaml"))
    builtin = load_netlist("default")
    assert from_file == builtin
    with pytest.raises(ConfigError):
        load_netlist(os.path.join(CONFIGS, "missing.yaml"))


def test_load_config():
    config = load_config(os.path.join(CONFIGS, "ringdown.yaml"))
    assert config["experiment"] == "ringdown"
    assert config["netlist"] == os.path.join(CONFIGS, "netlist_default.yaml")
    nptest.assert_allclose(config["carrier"], 28.38e6)
    assert config["amplitude"] == 1.0
    assert config["off_cycles"] == 20
    # defaults fill the keys the file leaves out
    assert config["parasitics"] == ["C_L1", "C_L2", "C_s"]
    config = load_config(os.path.join(CONFIGS, "transition.yaml"), "transition")
    assert config["experiment"] == "single-transition"


def test_experiment_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        experiment_config({}, "sweep")
    with pytest.raises(ConfigError):
        experiment_config({"experiment": "ringdown"}, "prbs-evm")
    with pytest.raises(ConfigError):
        experiment_config({"off_cyles": 10}, "ringdown")
    with pytest.raises(ConfigError):
        experiment_config({"netlist": "nowhere.yaml"}, "ringdown", base_dir=str(tmp_path))
    with pytest.raises(ConfigError):
        experiment_config({"carrier": "28.38MV"}, "ringdown")
    config = experiment_config({"experiment": "transition"})
    assert config["experiment"] == "single-transition"
    assert config["netlist"] == "default"


def test_config_digest():
    a = experiment_config({"off_cycles": 10}, "ringdown")
    b = experiment_config({"off_cycles": 10}, "ringdown")
    assert config_digest(a) == config_digest(b)
    assert len(config_digest(a)) == 64
    b["off_cycles"] = 11
    assert config_digest(a) != config_digest(b)


def test_config_netlist():
    config = experiment_config({"carrier": "30MHz", "amplitude": "2V"}, "ringdown")
    netlist = config_netlist(config)
    src = netlist.source("vcw")
    nptest.assert_allclose(src.frequency, 30e6)
    assert src.amplitude == 2.0
    assert netlist.element("L_m").value == pytest.approx(1.75e-6)
