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


class XdamException(Exception):
    pass


class XdamValidationError(XdamException):
    """Inputs are inconsistent: bad netlist, schedule or config"""
    exit_code = 2


class XdamNumericalError(XdamException):
    """A computation could not be carried out reliably"""
    exit_code = 3


class TopologyError(XdamValidationError):
    pass


class ConnectivityError(XdamValidationError):
    pass


class ScheduleError(XdamValidationError):
    pass


class ProbeError(XdamValidationError):
    pass


class ConfigError(XdamValidationError):
    pass


class ConditioningError(XdamNumericalError):
    pass


class MultiplicityError(XdamNumericalError):
    pass


class SymmetryError(XdamNumericalError):
    pass


class FitError(XdamNumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RiseTimeout(XdamNumericalError):
    def __init__(self, message, max_fraction=None):
        super().__init__(message)
        self.max_fraction = max_fraction


class CoverageError(XdamValidationError):
    pass
