# Thread control, deterministic mode and run directories.

import json
import logging
import os
import platform
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone

from threadpoolctl import threadpool_limits

from ..errors import ConfigError

logger = logging.getLogger(__name__)

_state = {"deterministic" : False}

def set_deterministic(flag):
    """
    In deterministic mode numeric kernels run single-threaded, folds run
    sequentially and timing columns are written as zero.
    """
    _state["deterministic"] = bool(flag)

def is_deterministic():
    return _state["deterministic"]

def num_threads_from_env():
    """
    Thread count requested through AAUNET_NUM_THREADS, or None.
    """
    value = os.environ.get("AAUNET_NUM_THREADS")
    if value is None or value == "":
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError("AAUNET_NUM_THREADS must be an integer, got '{}'".format(value))
    if n < 1:
        raise ConfigError("AAUNET_NUM_THREADS must be positive")
    return n

@contextmanager
def thread_limit(n_threads=None):
    """
    Limit BLAS/OpenMP threads. Deterministic mode forces one thread;
    otherwise `n_threads` or AAUNET_NUM_THREADS applies, if set.
    """
    if is_deterministic():
        n_threads = 1
    elif n_threads is None:
        n_threads = num_threads_from_env()
    if n_threads is None:
        yield
        return
    with threadpool_limits(limits=n_threads):
        logger.debug("Limited numeric threads to %d", n_threads)
        yield

def make_run_dir(root):
    """
    Create the next free directory root/run_000, root/run_001, ...
    """
    os.makedirs(root, exist_ok=True)
    index = 0
    while True:
        path = os.path.join(root, "run_{:03d}".format(index))
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            index += 1

def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

@dataclass
class RunRecord:
    """
    Provenance of one command invocation, stored as run.json in its run
    directory.
    """
    command: str
    argv: list
    config: dict
    seed: int
    version: str
    started: str = field(default_factory=_now)
    finished: str = None
    outputs: list = field(default_factory=list)
    python: str = field(default_factory=lambda: sys.version.split()[0])
    platform: str = field(default_factory=platform.platform)

    def add_output(self, path):
        self.outputs.append(path)

    def write(self, run_dir):
        self.finished = _now()
        path = os.path.join(run_dir, "run.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
        return path

def attach_run_log(run_dir, level=logging.INFO):
    """
    Copy log records into run_dir/run.log. Returns the handler so the
    caller can detach it.
    """
    handler = logging.FileHandler(os.path.join(run_dir, "run.log"), encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler

def detach_run_log(handler):
    logging.getLogger().removeHandler(handler)
    handler.close()
