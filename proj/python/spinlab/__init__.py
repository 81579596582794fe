# Copyright 2026 The spinlab Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python access to the spinlab C++ core.

Functions returning structured results decode the JSON produced by the
extension, so callers get plain dicts and lists.
"""

import json as _json

from . import _spinlab
from ._spinlab import (
    ConsistencyError,
    DegenerateInput,
    FitFailure,
    InvalidInput,
    RankDeficiency,
    SpinlabError,
    bath_from_coherence,
    dd_analytic,
    fit_scaling,
    gyromagnetic_ratio,
    init_fidelity,
    list_experiments,
    models,
    pump_rate,
    rabi_population,
    ramsey_mc,
    run_rb,
    t2_analytic,
)

__version__ = _spinlab.__version__


def electron_levels(b_parallel_mT, b_perp_mT=0.0):
    return _json.loads(_spinlab.electron_levels(b_parallel_mT, b_perp_mT))


def hyperfine_levels(b_parallel_mT, b_perp_mT=0.0):
    return _json.loads(_spinlab.hyperfine_levels(b_parallel_mT, b_perp_mT))


def fit(model, x, y, sigma=None):
    return _json.loads(_spinlab.fit(model, list(x), list(y), list(sigma or [])))


def describe(experiment):
    return _json.loads(_spinlab.describe(experiment))


def run_config(config, seed=None, out=None):
    """Runs a config file like `spinlab run`; returns the run record."""
    return _json.loads(_spinlab.run_config(str(config), seed, None if out is None else str(out)))


def config_hash(config):
    """Hash of a config given as a dict or JSON text."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _spinlab.config_hash(text)


__all__ = [n for n in dir() if not n.startswith("_")]
