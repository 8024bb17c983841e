"""Robust vs non-robust feature learning in a two-layer patch CNN.

Thin Python layer over the C++ core. Configs travel as JSON text; helpers
here accept plain dicts as well.
"""

import json as _json

from ._patchlab import (  # noqa: F401
    Activation,
    ConfigError,
    DivergenceError,
    Network,
    init_network,
    one_step_attack,
    pgd_attack,
    rank_one_network,
    srelu,
    srelu_prime,
    tensor_power_check,
)
from . import _patchlab as _core

__all__ = [
    "Activation",
    "ConfigError",
    "DivergenceError",
    "Network",
    "default_config",
    "emit_plot_data",
    "gradcheck",
    "init_network",
    "lockstep",
    "one_step_attack",
    "pgd_attack",
    "props_check",
    "rank_one_network",
    "run_experiment",
    "run_seed",
    "sample_dataset",
    "srelu",
    "srelu_prime",
    "tensor_power_check",
    "validate_config",
]


def _cfg_text(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def default_config():
    return _json.loads(_core.default_config_json())


def validate_config(config):
    """Return the fully resolved config; raises ConfigError on bad input."""
    return _json.loads(_core.validate_config_json(_cfg_text(config)))


def sample_dataset(n, seed, config=None):
    return _core.sample_dataset(n, seed, _cfg_text(config))


def run_seed(mode="std", seed=1, config=None):
    return _core.run_seed(_cfg_text(config), mode, seed)


def run_experiment(out_dir, mode="std", config=None):
    return _json.loads(_core.run_experiment(str(out_dir), mode, _cfg_text(config)))


def props_check(gamma=100.0, config=None, seed=1):
    return _json.loads(_core.props_check(gamma, _cfg_text(config), seed))


def gradcheck(trials=100, seed=1):
    return _json.loads(_core.gradcheck(trials, seed))


def lockstep(mode="std", epochs=100, config=None):
    return _core.lockstep(mode, epochs, _cfg_text(config))


def emit_plot_data(out_dir, std_dir="", adv_dir=""):
    return _core.emit_plot_data(str(out_dir), str(std_dir), str(adv_dir))
