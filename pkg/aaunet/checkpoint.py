# Binary checkpoint format.
#
# Layout (all integers little-endian):
#   8 bytes   magic "AAUNET01"
#   uint32    length of the JSON ModelConfig, then the JSON bytes
#   uint32    number of parameter entries, then per entry:
#               uint16 name length, utf-8 name, uint8 ndim, ndim x uint32 dims,
#               float32 payload in row-major order
#   uint8     trainer state flag; if 1:
#               uint32 length of the JSON state header, then the JSON bytes,
#               then the Adam first and second moments of every entry (float32)
#
# The file ends exactly after the last field, so any truncation is detected.

import json
import logging
import os
import struct
from collections import namedtuple, OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelConfig, build_model
from .errors import (CheckpointError, BadMagicError, TruncatedPayloadError,
        ConfigMismatchError, ConfigError)

logger = logging.getLogger(__name__)

MAGIC = b"AAUNET01"
_FLOAT = np.dtype("<f4")

@dataclass
class TrainerState:
    """
    Optimizer progress stored alongside the parameters, for resuming.
    """
    epoch: int
    step: int
    seed: int
    best_val_dice: Optional[float] = None
    moments: dict = field(default_factory=dict)

Checkpoint = namedtuple("Checkpoint", "config parameters trainer_state")
"""
Decoded checkpoint contents.

.. py:attribute:: config
    ModelConfig

.. py:attribute:: parameters
    OrderedDict of parameter name -> float32 numpy array

.. py:attribute:: trainer_state
    TrainerState or None
"""

class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError("{}: truncated payload while reading {}".format(
                self.path, what))
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, shape, what):
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(count * _FLOAT.itemsize, what)
        return np.frombuffer(raw, dtype=_FLOAT).reshape(shape).copy()

def _pack_array(arr):
    return np.ascontiguousarray(arr, dtype=_FLOAT).tobytes()

def save_checkpoint(model, path, trainer_state=None):
    """
    Write the model parameters (as float32) and optionally the trainer
    state. The file is written to a temporary name and moved into place.

    Parameters
    ----------
    model : AAUNet

    path : str

    trainer_state : TrainerState
        Optional: stored with Adam moments of every parameter.
    """
    params = model.named_parameters()
    chunks = [MAGIC]
    config = model.cfg.to_json().encode("utf-8")
    chunks.append(struct.pack("<I", len(config)))
    chunks.append(config)
    chunks.append(struct.pack("<I", len(params)))
    for name, p in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", len(p.shape)))
        chunks.append(struct.pack("<{}I".format(len(p.shape)), *p.shape))
        chunks.append(_pack_array(p.value))
    if trainer_state is None:
        chunks.append(struct.pack("<B", 0))
    else:
        chunks.append(struct.pack("<B", 1))
        header = json.dumps({"epoch" : trainer_state.epoch, "step" : trainer_state.step,
            "seed" : trainer_state.seed, "best_val_dice" : trainer_state.best_val_dice},
            sort_keys=True).encode("utf-8")
        chunks.append(struct.pack("<I", len(header)))
        chunks.append(header)
        for p in params.values():
            chunks.append(_pack_array(p.adam_m))
            chunks.append(_pack_array(p.adam_v))
    tmp_path = "{}.tmp".format(path)
    with open(tmp_path, "wb") as f:
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp_path, path)
    logger.debug("Wrote checkpoint %s (%d entries)", path, len(params))

def read_checkpoint(path):
    """
    Decode a checkpoint file without building a model.

    Returns
    -------
    Checkpoint

    Raises
    ------
    BadMagicError, TruncatedPayloadError, CheckpointError
    """
    with open(path, "rb") as f:
        buf = f.read()
    reader = _Reader(buf, path)
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise BadMagicError("{}: not an AAU-net checkpoint (bad magic)".format(path))
    reader.take(len(MAGIC), "magic")
    (config_len,) = reader.unpack("<I", "config length")
    try:
        config = ModelConfig.from_json(reader.take(config_len, "config").decode("utf-8"))
    except (ValueError, ConfigError) as e:
        raise CheckpointError("{}: invalid model config: {}".format(path, e))
    (count,) = reader.unpack("<I", "entry count")
    parameters = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "name length")
        try:
            name = reader.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError("{}: invalid parameter name: {}".format(path, e))
        (ndim,) = reader.unpack("<B", "rank of " + name)
        shape = reader.unpack("<{}I".format(ndim), "shape of " + name)
        parameters[name] = reader.array(shape, name)
    (flag,) = reader.unpack("<B", "trainer state flag")
    trainer_state = None
    if flag == 1:
        (header_len,) = reader.unpack("<I", "trainer state length")
        try:
            header = json.loads(reader.take(header_len, "trainer state").decode("utf-8"))
        except ValueError as e:
            raise CheckpointError("{}: invalid trainer state: {}".format(path, e))
        if not isinstance(header, dict):
            raise CheckpointError("{}: trainer state must be a JSON object".format(path))
        moments = OrderedDict()
        for name, value in parameters.items():
            m = reader.array(value.shape, "first moment of " + name)
            v = reader.array(value.shape, "second moment of " + name)
            moments[name] = (m, v)
        try:
            trainer_state = TrainerState(moments=moments, **header)
        except TypeError as e:
            raise CheckpointError("{}: invalid trainer state: {}".format(path, e))
    elif flag != 0:
        raise CheckpointError("{}: invalid trainer state flag {}".format(path, flag))
    if reader.pos != len(buf):
        raise CheckpointError("{}: {} unexpected trailing bytes".format(path,
            len(buf) - reader.pos))
    return Checkpoint(config, parameters, trainer_state)

def restore_parameters(model, parameters, path="<memory>"):
    """
    Assign decoded parameter values to `model`, checking that names and
    shapes agree exactly.
    """
    expected = model.named_parameters()
    if list(expected) != list(parameters):
        missing = sorted(set(expected) - set(parameters))
        extra = sorted(set(parameters) - set(expected))
        raise ConfigMismatchError("{}: parameter names differ (missing {}, unexpected {})".format(
            path, missing[:3], extra[:3]))
    for name, p in expected.items():
        if p.shape != parameters[name].shape:
            raise ConfigMismatchError("{}: parameter {} has shape {}, model expects {}".format(
                path, name, parameters[name].shape, p.shape))
        p.assign(parameters[name])

def restore_moments(model, trainer_state):
    for name, p in model.named_parameters().items():
        m, v = trainer_state.moments[name]
        p.adam_m = m.astype(p.dtype)
        p.adam_v = v.astype(p.dtype)

def load_checkpoint(path, expected_config=None):
    """
    Rebuild a model from a checkpoint.

    Parameters
    ----------
    path : str

    expected_config : ModelConfig
        Optional: the configuration the caller requires. A different stored
        configuration raises ConfigMismatchError.

    Returns
    -------
    AAUNet
    """
    ckpt = read_checkpoint(path)
    if expected_config is not None and expected_config != ckpt.config:
        diffs = ["{}: stored {} vs expected {}".format(k, v, expected_config.to_dict()[k])
                for k, v in ckpt.config.to_dict().items()
                if expected_config.to_dict()[k] != v]
        raise ConfigMismatchError("{}: config mismatch ({})".format(path, "; ".join(diffs)))
    model = build_model(ckpt.config)
    restore_parameters(model, ckpt.parameters, path)
    if ckpt.trainer_state is not None:
        restore_moments(model, ckpt.trainer_state)
    return model
