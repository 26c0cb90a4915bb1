# Standard library includes
import json
import logging
import os
import tempfile
import unittest
from unittest import mock

# Internal library includes
from aaunet.utils.cs_utils import (joint_configuration_space, parse_config, load_config_file,
        add_configuration_space)
from aaunet.utils.runtime import (set_deterministic, is_deterministic, num_threads_from_env,
        thread_limit, make_run_dir, RunRecord, attach_run_log, detach_run_log)
from aaunet.graphs import CurveGraph, TrainingCurveGraph
from aaunet.evaluation import roc_pr_curves
from aaunet.training import EpochRecord
from aaunet.errors import ConfigError

# External library includes
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from ConfigSpace import ConfigurationSpace
from ConfigSpace.hyperparameters import UniformIntegerHyperparameter

class ConfigFileTest(unittest.TestCase):
    def test_joint_space(self):
        names = set(joint_configuration_space().keys())
        self.assertIn("model:variant", names)
        self.assertIn("train:learning_rate", names)
        self.assertIn("train:batch_size", names)

    def test_add_configuration_space(self):
        inner = ConfigurationSpace()
        inner.add(UniformIntegerHyperparameter("k", lower=1, upper=3))
        cs = add_configuration_space(ConfigurationSpace(), "outer", inner)
        self.assertEqual(list(cs.keys()), ["outer:k"])
        with self.assertRaises(TypeError):
            add_configuration_space(cs, "x", {"k" : 1})

    def test_bare_and_prefixed_keys(self):
        config = parse_config({"variant" : "spatial_only", "train:epochs" : 3,
            "input_size" : [32, 32], "stratify" : True})
        self.assertEqual(config.model, {"variant" : "spatial_only", "input_size" : (32, 32)})
        self.assertEqual(config.train, {"epochs" : 3, "stratify" : True})

    def test_invalid(self):
        for values in ({"colour" : "red"}, {"epochs" : 0}, {"variant" : "triple"},
                {"model:learning_rate" : 0.1}, {"input_size" : 32}, [1, 2]):
            with self.subTest(values=values):
                with self.assertRaises(ConfigError):
                    parse_config(values)

    def test_load_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "c.json")
            with open(path, "w") as f:
                json.dump({"learning_rate" : 0.01, "depth" : 3}, f)
            config = load_config_file(path)
            self.assertEqual(config.train, {"learning_rate" : 0.01})
            self.assertEqual(config.model, {"depth" : 3})
            with open(path, "w") as f:
                f.write("{oops")
            with self.assertRaises(ConfigError):
                load_config_file(path)

class RuntimeTest(unittest.TestCase):
    def tearDown(self):
        set_deterministic(False)

    def test_deterministic_flag(self):
        self.assertFalse(is_deterministic())
        set_deterministic(True)
        self.assertTrue(is_deterministic())
        with thread_limit():
            pass

    def test_thread_env(self):
        with mock.patch.dict(os.environ, {"AAUNET_NUM_THREADS" : "2"}):
            self.assertEqual(num_threads_from_env(), 2)
            with thread_limit():
                pass
        with mock.patch.dict(os.environ, {"AAUNET_NUM_THREADS" : "many"}):
            with self.assertRaises(ConfigError):
                num_threads_from_env()
        with mock.patch.dict(os.environ, {"AAUNET_NUM_THREADS" : "0"}):
            with self.assertRaises(ConfigError):
                num_threads_from_env()

    def test_run_dirs(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = make_run_dir(os.path.join(tmp, "runs"))
            second = make_run_dir(os.path.join(tmp, "runs"))
            self.assertEqual(os.path.basename(first), "run_000")
            self.assertEqual(os.path.basename(second), "run_001")
            record = RunRecord(command="train", argv=["aaunet", "train"], config={"a" : 1},
                    seed=4, version="0.1.0")
            record.add_output("x.csv")
            with open(record.write(first)) as f:
                data = json.load(f)
            self.assertEqual(data["seed"], 4)
            self.assertEqual(data["outputs"], ["x.csv"])
            self.assertIsNotNone(data["finished"])

    def test_run_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            handler = attach_run_log(tmp)
            logger = logging.getLogger("aaunet.test")
            logger.setLevel(logging.INFO)
            logger.info("hello run log")
            detach_run_log(handler)
            with open(os.path.join(tmp, "run.log")) as f:
                self.assertIn("hello run log", f.read())

class GraphTest(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        gt = rng.random((16, 16)) > 0.5
        self.curves = roc_pr_curves([np.clip(gt + 0.3 * rng.standard_normal((16, 16)), 0, 1)],
                [gt])

    def test_curve_graphs(self):
        for kind in ("roc", "pr"):
            graph = CurveGraph(kind)
            graph.add_curves(self.curves, "full")
            fig, ax = plt.subplots()
            graph(fig, ax)
            self.assertEqual(ax.get_legend().get_texts()[0].get_text().split()[0], "full")
            plt.close(fig)
        with self.assertRaises(ValueError):
            CurveGraph("det")

    def test_training_curve(self):
        history = [EpochRecord(1, 0.7, None, 0.0), EpochRecord(2, 0.5, 60.0, 0.0)]
        fig, ax = plt.subplots()
        twin = TrainingCurveGraph()(ax, history)
        self.assertIsNotNone(twin)
        self.assertEqual(len(ax.get_lines()), 1)
        plt.close(fig)
        fig, ax = plt.subplots()
        self.assertIsNone(TrainingCurveGraph()(ax, history[:1]))
        plt.close(fig)

if __name__ == "__main__":
    unittest.main()
