# Standard library includes
import contextlib
import csv
import io
import json
import os
import shutil
import tempfile
import unittest

# Internal library includes
from aaunet.cli import main, ABLATION_ORDER
from aaunet.data import load_manifest

SMALL_CONFIG = {"depth" : 2, "base_width" : 4, "input_size" : [32, 32], "epochs" : 1,
        "batch_size" : 4}

def run(*argv):
    """
    Returns (exit code, stdout, stderr).
    """
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = main(list(argv))
        except SystemExit as e:
            code = e.code
    return code, out.getvalue(), err.getvalue()

def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return [row for row in csv.reader(f) if row and not row[0].startswith("#")]

class CliTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.data = os.path.join(cls.tmp.name, "data")
        code, _, err = run("synth", "--out", cls.data, "--n", "8", "--size", "32", "32",
                "--seed", "3", "--min-lesions", "1", "--no-progress", "--log-level", "WARNING")
        assert code == 0, err
        cls.manifest = os.path.join(cls.data, "manifest.jsonl")
        cls.config = os.path.join(cls.tmp.name, "small.json")
        with open(cls.config, "w") as f:
            json.dump(SMALL_CONFIG, f)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def setUp(self):
        self.out = tempfile.mkdtemp(dir=self.tmp.name)

    def common(self):
        return ["--config", self.config, "--no-progress", "--log-level", "WARNING"]

    def run_dir(self, index=0):
        return os.path.join(self.out, "run_{:03d}".format(index))

    def read_json(self, *parts):
        with open(os.path.join(*parts), encoding="utf-8") as f:
            return json.load(f)

class UsageTest(CliTestCase):
    def test_missing_manifest(self):
        code, _, err = run("train", "--out", self.out)
        self.assertEqual(code, 2)
        self.assertIn("--manifest", err)

    def test_unknown_variant(self):
        code, _, _ = run("train", "--manifest", self.manifest, "--out", self.out,
                "--variant", "triple")
        self.assertEqual(code, 2)

    def test_evaluate_needs_one_source(self):
        code, _, _ = run("evaluate", "--manifest", self.manifest, "--out", self.out)
        self.assertEqual(code, 2)

    def test_bad_config(self):
        path = os.path.join(self.out, "bad.json")
        for content in ({"learning_rate" : -1.0}, {"colour" : "red"}):
            with self.subTest(content=content):
                with open(path, "w") as f:
                    json.dump(content, f)
                code, _, err = run("train", "--manifest", self.manifest, "--out", self.out,
                        "--config", path, "--log-level", "WARNING")
                self.assertEqual(code, 1)
                self.assertIn("aaunet: error:", err)

    def test_missing_manifest_file(self):
        code, _, err = run("train", "--manifest", os.path.join(self.out, "none.jsonl"),
                "--out", self.out, *self.common())
        self.assertEqual(code, 1)
        self.assertIn("none.jsonl", err)

class SynthTest(CliTestCase):
    def test_synth(self):
        code, _, _ = run("synth", "--out", self.out, "--n", "3", "--size", "16", "16",
                "--seed", "1", "--log-level", "WARNING")
        self.assertEqual(code, 0)
        manifest = load_manifest(os.path.join(self.out, "manifest.jsonl"))
        self.assertEqual(len(manifest), 3)
        record = self.read_json(self.out, "run.json")
        self.assertEqual(record["command"], "synth")
        self.assertEqual(record["seed"], 1)

class TrainPredictTest(CliTestCase):
    def test_train_defaults_and_outputs(self):
        code, _, err = run("train", "--manifest", self.manifest, "--out", self.out,
                *self.common())
        self.assertEqual(code, 0, err)
        run_dir = self.run_dir()
        for name in ("config.json", "run.json", "run.log", "epochs.csv", "final.ckpt",
                "training_curve.png"):
            self.assertTrue(os.path.exists(os.path.join(run_dir, name)), name)
        config = self.read_json(run_dir, "config.json")
        self.assertEqual(config["train"]["learning_rate"], 0.001)
        self.assertEqual(config["train"]["batch_size"], 4)
        self.assertEqual(config["train"]["epochs"], 1)
        self.assertEqual(config["model"]["variant"], "full")
        self.assertEqual(config["model"]["input_size"], [32, 32])
        record = self.read_json(run_dir, "run.json")
        self.assertEqual(record["command"], "train")
        self.assertIn(os.path.join(run_dir, "final.ckpt"), record["outputs"])

    def test_flag_overrides_config(self):
        path = os.path.join(self.out, "cfg.json")
        with open(path, "w") as f:
            json.dump(dict(SMALL_CONFIG, variant="channel_only", seed=5), f)
        code, _, err = run("train", "--manifest", self.manifest, "--out", self.out,
                "--config", path, "--variant", "plain_conv", "--no-progress",
                "--log-level", "WARNING")
        self.assertEqual(code, 0, err)
        config = self.read_json(self.run_dir(), "config.json")
        self.assertEqual(config["model"]["variant"], "plain_conv")
        self.assertEqual(config["train"]["seed"], 5)
        code, _, err = run("train", "--manifest", self.manifest, "--out", self.out,
                "--config", path, "--seed", "9", "--no-progress", "--log-level", "WARNING")
        self.assertEqual(code, 0, err)
        config = self.read_json(self.run_dir(1), "config.json")
        self.assertEqual(config["model"]["variant"], "channel_only")
        self.assertEqual(config["train"]["seed"], 9)

    def test_predict_exports(self):
        code, _, err = run("train", "--manifest", self.manifest, "--out", self.out,
                *self.common())
        self.assertEqual(code, 0, err)
        checkpoint = os.path.join(self.run_dir(), "final.ckpt")
        code, _, err = run("predict", "--checkpoint", checkpoint, "--manifest", self.manifest,
                "--out", self.out, "--probabilities", "--overlays", "--attention",
                "--log-level", "WARNING")
        self.assertEqual(code, 0, err)
        run_dir = self.run_dir(1)
        for sub in ("masks", "probabilities", "overlays"):
            self.assertEqual(len(os.listdir(os.path.join(run_dir, sub))), 8, sub)
        self.assertTrue(os.path.exists(os.path.join(run_dir, "attention",
            "synth_0000_alpha.csv")))
        self.assertTrue(os.path.exists(os.path.join(run_dir, "attention",
            "synth_0000_enc1_haam1_beta.png")))

    def test_evaluate_checkpoint(self):
        code, _, err = run("train", "--manifest", self.manifest, "--out", self.out,
                *self.common())
        self.assertEqual(code, 0, err)
        code, out, err = run("evaluate", "--manifest", self.manifest, "--out", self.out,
                "--checkpoint", os.path.join(self.run_dir(), "final.ckpt"),
                "--log-level", "WARNING")
        self.assertEqual(code, 0, err)
        self.assertIn("dice", out)
        rows = read_csv(os.path.join(self.run_dir(1), "metrics.csv"))
        self.assertEqual(len([r for r in rows if r[0].startswith("synth_")]), 8)

    def test_deterministic_outputs(self):
        outs = []
        for _ in range(2):
            out = tempfile.mkdtemp(dir=self.tmp.name)
            code, _, err = run("train", "--manifest", self.manifest, "--out", out,
                    "--deterministic", *self.common())
            self.assertEqual(code, 0, err)
            outs.append(os.path.join(out, "run_000"))
        names = sorted(set(os.listdir(outs[0])) - {"run.json", "run.log"})
        self.assertEqual(names, sorted(set(os.listdir(outs[1])) - {"run.json", "run.log"}))
        for name in names:
            with open(os.path.join(outs[0], name), "rb") as a, \
                    open(os.path.join(outs[1], name), "rb") as b:
                self.assertEqual(a.read(), b.read(), name)
        rows = read_csv(os.path.join(outs[0], "epochs.csv"))
        self.assertEqual(rows[1][3], "0.000")

class EvaluatePredictionsCliTest(CliTestCase):
    def test_perfect_predictions(self):
        pred_dir = os.path.join(self.out, "preds")
        os.makedirs(pred_dir)
        for record in load_manifest(self.manifest):
            shutil.copy(record.mask_path, os.path.join(pred_dir, record.id + ".png"))
        code, out, err = run("evaluate", "--manifest", self.manifest, "--out", self.out,
                "--pred-dir", pred_dir, "--log-level", "WARNING")
        self.assertEqual(code, 0, err)
        self.assertIn("auc 1.0000", out)
        rows = read_csv(os.path.join(self.run_dir(), "metrics.csv"))
        mean = [r for r in rows if r[0] == "mean"][0]
        self.assertEqual(mean[2:], ["100.0000"] * 5)
        auc = [r for r in rows if r[0] == "auc"][0]
        self.assertEqual(auc[2], "1.000000")
        for name in ("classes.csv", "curves.csv", "roc.png", "pr.png", "run.json"):
            self.assertTrue(os.path.exists(os.path.join(self.run_dir(), name)), name)
        labels = set(load_manifest(self.manifest).labels)
        self.assertEqual(os.path.exists(os.path.join(self.run_dir(), "roc_by_class.png")),
                len(labels) > 1)

    def test_missing_prediction(self):
        pred_dir = os.path.join(self.out, "empty")
        os.makedirs(pred_dir)
        code, _, err = run("evaluate", "--manifest", self.manifest, "--out", self.out,
                "--pred-dir", pred_dir, "--log-level", "WARNING")
        self.assertEqual(code, 1)
        self.assertIn("No prediction", err)

class CrossValidationCliTest(CliTestCase):
    def test_crossval_folds(self):
        code, _, err = run("crossval", "--manifest", self.manifest, "--out", self.out,
                "--folds", "4", *self.common())
        self.assertEqual(code, 0, err)
        run_dir = self.run_dir()
        for k in range(4):
            self.assertTrue(os.path.isdir(os.path.join(run_dir, "fold_{}".format(k))))
        rows = read_csv(os.path.join(run_dir, "folds.csv"))
        self.assertEqual(len(rows), 6)
        self.assertEqual(rows[-1][0], "mean ± std")
        summary = self.read_json(run_dir, "summary.json")
        self.assertEqual(summary["variant"], "full")
        self.assertEqual(len(summary["split_checksum"]), 64)

    def test_compare_variant(self):
        code, out, err = run("crossval", "--manifest", self.manifest, "--out", self.out,
                "--folds", "2", "--variant", "spatial_only", "--compare-variant",
                "plain_conv", *self.common())
        self.assertEqual(code, 0, err)
        run_dir = self.run_dir()
        self.assertTrue(os.path.isdir(os.path.join(run_dir, "plain_conv", "fold_1")))
        rows = read_csv(os.path.join(run_dir, "ttest.csv"))
        self.assertEqual(rows[0], ["metric", "t", "df", "p"])
        self.assertEqual(len(rows), 6)
        rows = read_csv(os.path.join(run_dir, "comparison.csv"))
        self.assertEqual([r[0] for r in rows[1:]], ["spatial_only", "plain_conv"])
        self.assertIn("plain_conv", out)
        for name in ("roc.png", "pr.png"):
            self.assertTrue(os.path.exists(os.path.join(run_dir, name)), name)
            self.assertFalse(os.path.exists(os.path.join(run_dir, "plain_conv", name)), name)
        summary = self.read_json(run_dir, "summary.json")
        self.assertEqual(list(summary["auc"]), ["spatial_only", "plain_conv"])

    def test_ablate(self):
        code, out, err = run("ablate", "--manifest", self.manifest, "--out", self.out,
                "--folds", "2", *self.common())
        self.assertEqual(code, 0, err)
        run_dir = self.run_dir()
        rows = read_csv(os.path.join(run_dir, "ablation.csv"))
        self.assertEqual(rows[0][-1], "parameters")
        self.assertEqual([r[0] for r in rows[1:]], list(ABLATION_ORDER))
        summary = self.read_json(run_dir, "summary.json")
        self.assertEqual(len(set(summary["split_checksums"].values())), 1)
        self.assertGreater(summary["parameters"]["full"], summary["parameters"]["plain_conv"])
        self.assertEqual(list(summary["auc"]), list(ABLATION_ORDER))
        for name in ("roc.png", "pr.png"):
            self.assertTrue(os.path.exists(os.path.join(run_dir, name)), name)

class GradcheckCliTest(unittest.TestCase):
    def test_gradcheck(self):
        code, out, _ = run("gradcheck", "--log-level", "WARNING")
        self.assertEqual(code, 0)
        self.assertIn("block_full", out)
        self.assertNotIn("FAILED", out)

if __name__ == "__main__":
    unittest.main()
