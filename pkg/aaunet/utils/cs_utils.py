import json
import logging
from collections import namedtuple

from ConfigSpace import ConfigurationSpace, Configuration
from ConfigSpace.hyperparameters import (
    UniformFloatHyperparameter,
    UniformIntegerHyperparameter,
    CategoricalHyperparameter,
)

from ..model import AAUNetFactory
from ..training.trainer import TrainConfig
from ..errors import ConfigError

logger = logging.getLogger(__name__)

MODEL_PREFIX = "model"
TRAIN_PREFIX = "train"

# Fields which are not tunable and so live outside the configuration spaces
_EXTRA_KEYS = {
    MODEL_PREFIX : ("in_channels", "input_size"),
    TRAIN_PREFIX : ("stratify",),
}

def _get_subkey(key, delimiter):
    return delimiter.join(key.split(delimiter)[1:])

def _renamed(hp, name):
    if isinstance(hp, CategoricalHyperparameter):
        return CategoricalHyperparameter(name=name, choices=list(hp.choices),
                default_value=hp.default_value)
    if isinstance(hp, UniformIntegerHyperparameter):
        return UniformIntegerHyperparameter(name=name, lower=hp.lower, upper=hp.upper,
                default_value=hp.default_value, log=hp.log)
    if isinstance(hp, UniformFloatHyperparameter):
        return UniformFloatHyperparameter(name=name, lower=hp.lower, upper=hp.upper,
                default_value=hp.default_value, log=hp.log)
    raise TypeError("Unsupported hyperparameter type {}".format(type(hp).__name__))

def add_configuration_space(cs, prefix, configuration_space, delimiter=":"):
    """
    Add the hyperparameters of `configuration_space` to `cs`, renamed to
    ``prefix`` + ``delimiter`` + old_name.

    Parameters
    ----------
    cs : ConfigurationSpace
        Space which is extended in place

    prefix : str

    configuration_space : ConfigurationSpace
        Space to add

    delimiter : str, optional
        Defaults to ':'
    """
    if not isinstance(configuration_space, ConfigurationSpace):
        raise TypeError("add_configuration_space must be called with an instance of "
                "ConfigurationSpace")
    for hp in configuration_space.values():
        cs.add(_renamed(hp, "{}{}{}".format(prefix, delimiter, hp.name)))
    return cs

def joint_configuration_space():
    """
    The model and training spaces combined under the "model" and "train"
    prefixes.
    """
    cs = ConfigurationSpace()
    add_configuration_space(cs, MODEL_PREFIX, AAUNetFactory().get_configuration_space())
    add_configuration_space(cs, TRAIN_PREFIX, TrainConfig.get_configuration_space())
    return cs

ConfigFile = namedtuple("ConfigFile", "model train")
"""
.. py:attribute:: model
    dict of ModelConfig overrides

.. py:attribute:: train
    dict of TrainConfig overrides
"""

def parse_config(values, source="config", delimiter=":"):
    """
    Validate a flat dict of settings against the joint configuration space.

    Keys are either bare field names ("learning_rate") or prefixed
    ("train:learning_rate").

    Returns
    -------
    ConfigFile
    """
    if not isinstance(values, dict):
        raise ConfigError("{}: expected a flat object of settings".format(source))
    cs = joint_configuration_space()
    names = set(cs.keys())
    overrides = {MODEL_PREFIX : {}, TRAIN_PREFIX : {}}
    tunable = {}
    for key, val in values.items():
        if delimiter in key:
            prefix, name = key.split(delimiter, 1)
            candidates = [prefix] if prefix in overrides else []
        else:
            name = key
            candidates = [p for p in overrides
                    if "{}{}{}".format(p, delimiter, name) in names or name in _EXTRA_KEYS[p]]
        if len(candidates) != 1:
            raise ConfigError("{}: unknown setting '{}'".format(source, key))
        prefix = candidates[0]
        full = "{}{}{}".format(prefix, delimiter, name)
        if full in names:
            tunable[full] = val
        elif name in _EXTRA_KEYS[prefix]:
            overrides[prefix][name] = val
        else:
            raise ConfigError("{}: unknown setting '{}'".format(source, key))
    merged = dict(cs.get_default_configuration())
    merged.update(tunable)
    try:
        Configuration(cs, values=merged)
    except (ValueError, TypeError) as e:
        raise ConfigError("{}: {}".format(source, e))
    for full, val in tunable.items():
        prefix = full.split(delimiter, 1)[0]
        overrides[prefix][_get_subkey(full, delimiter)] = val
    size = overrides[MODEL_PREFIX].get("input_size")
    if size is not None:
        if not isinstance(size, list) or len(size) != 2:
            raise ConfigError("{}: input_size must be a pair [h, w]".format(source))
        overrides[MODEL_PREFIX]["input_size"] = tuple(size)
    return ConfigFile(overrides[MODEL_PREFIX], overrides[TRAIN_PREFIX])

def load_config_file(path):
    """
    Read a JSON config file.

    Returns
    -------
    ConfigFile
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            values = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("{}: invalid JSON: {}".format(path, e))
    config = parse_config(values, source=path)
    logger.debug("Loaded config %s: %s", path, config)
    return config
