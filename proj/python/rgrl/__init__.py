"""Python bindings for the RAN slicing simulator and its RL agents."""

import json

from ._core import (
    ConfigError,
    Environment,
    default_config,
    pareto_inverse_cdf,
    quantile,
    run_sweep,
    snr,
    validate_config,
)

__all__ = [
    "ConfigError",
    "Environment",
    "default_config",
    "config_with",
    "load_config",
    "pareto_inverse_cdf",
    "quantile",
    "run_sweep",
    "snr",
    "validate_config",
]


def load_config(path):
    """Read a JSON config file and return its text after validation."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    validate_config(text)
    return text


def config_with(base, **sections):
    """Merge section overrides into a JSON config string."""
    data = json.loads(base)
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return json.dumps(data)
