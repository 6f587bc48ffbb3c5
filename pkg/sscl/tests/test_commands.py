"""Test the sscl subcommands and the command-line entry point."""

import contextlib
import csv
import io
import os
import unittest

from sscl import cli
from sscl.commands import COMMANDS, call_command
from sscl.commands.base import RUNTIME_ERROR, USAGE_ERROR, CommandError, mean_std
from sscl.data import load_csv
from sscl.model import load_checkpoint
from sscl.tests import TempDirTestCase

TINY = [
    "--set",
    "data.classes=3",
    "--set",
    "data.dim=8",
    "--set",
    "data.per_class=20",
    "--set",
    "model.encoder_layers=[8]",
    "--set",
    "model.projection_dim=4",
    "--set",
    "model.projection_hidden_dim=32",
    "--set",
    "train.batch_n=16",
    "--set",
    "train.epochs=2",
    "--set",
    "train.warmup_epochs=1",
    "--set",
    "probe.epochs=5",
]


def _csv_rows(path):
    with open(path, encoding="utf-8", newline="") as file:
        return list(csv.reader(file))


class CommandTestCase(TempDirTestCase):
    """Helpers to run a command and capture its output."""

    def call(self, name, *args):
        out = io.StringIO()
        call_command(name, *args, stdout=out)
        return out.getvalue()

    def path(self, *parts):
        return os.path.join(self.tmp_dir, *parts)


class TestGenData(CommandTestCase):
    """Test the gen-data command."""

    def test_rings(self):
        args = ["--kind", "rings", "--classes", "3", "--per-class", "10"]
        out = self.call("gen-data", *args, "--out", self.path("r.csv"))
        dataset = load_csv(self.path("r.csv"))
        self.assertEqual((30, 2, 3), (dataset.n, dataset.dim, dataset.class_count))
        self.assertTrue(os.path.exists(self.path("r.config.yaml")))
        self.assertIn("Wrote 30 samples", out)

    def test_blobs_from_overrides(self):
        self.call("gen-data", *TINY, "--out", self.path("b.csv"))
        dataset = load_csv(self.path("b.csv"))
        self.assertEqual((60, 8), (dataset.n, dataset.dim))

    def test_deterministic(self):
        for name in ("a.csv", "b.csv"):
            self.call("gen-data", *TINY, "--seed", "3", "--out", self.path(name))
        with open(self.path("a.csv"), encoding="utf-8") as first, open(self.path("b.csv"), encoding="utf-8") as second:
            self.assertEqual(first.read(), second.read())

    def test_file_kind(self):
        with self.assertRaises(CommandError) as context:
            self.call("gen-data", "--set", "data.kind=csv", "--set", "data.path=x.csv", "--out", self.path("x.csv"))
        self.assertEqual(USAGE_ERROR, context.exception.returncode)

    def test_missing_out(self):
        with self.assertRaises(CommandError) as context:
            self.call("gen-data", "--kind", "blobs")
        self.assertEqual(USAGE_ERROR, context.exception.returncode)


class TestPretrainProbeExport(CommandTestCase):
    """Test pretrain followed by probe and export on the written checkpoint."""

    def setUp(self):
        super().setUp()
        self.out = self.call("pretrain", *TINY, "--out-dir", self.path("run"), "--audit")
        self.checkpoint = self.path("run", "encoder.ckpt")

    def test_pretrain_outputs(self):
        for name in ("config.yaml", "metrics.csv", "encoder.ckpt", "audit.jsonl"):
            self.assertTrue(os.path.exists(self.path("run", name)), name)
        rows = _csv_rows(self.path("run", "metrics.csv"))
        self.assertEqual(["epoch", "mean_loss", "lr"], rows[0])
        self.assertEqual(3, len(rows))
        model, run = load_checkpoint(self.checkpoint)
        self.assertFalse(model.has_projection)
        self.assertEqual(16, run["train"]["batch_n"])
        self.assertIn("Final epoch mean loss", self.out)

    def test_probe(self):
        self.call("probe", "--checkpoint", self.checkpoint, "--out-dir", self.path("probe"))
        rows = _csv_rows(self.path("probe", "report.csv"))
        self.assertEqual(["method", "seed", "top1", "top5"], rows[0])
        method, seed, top1, top5 = rows[1]
        self.assertEqual(("sscl", "0"), (method, seed))
        self.assertTrue(0.0 <= float(top1) <= float(top5) <= 1.0)

    def test_probe_is_deterministic(self):
        for name in ("first", "second"):
            self.call("probe", "--checkpoint", self.checkpoint, "--out-dir", self.path(name))
        self.assertEqual(_csv_rows(self.path("first", "report.csv")), _csv_rows(self.path("second", "report.csv")))

    def test_export(self):
        self.call("export", "--checkpoint", self.checkpoint, "--out-dir", self.path("export"))
        embeddings = _csv_rows(self.path("export", "embeddings.csv"))
        self.assertEqual(60, len(embeddings))
        self.assertEqual(1 + 8, len(embeddings[0]))
        pca = _csv_rows(self.path("export", "pca.csv"))
        self.assertEqual(["label", "pc1", "pc2"], pca[0])
        self.assertEqual(61, len(pca))


class TestProbeUntrained(CommandTestCase):
    """Test probing an encoder that never saw a training step."""

    def test_near_chance(self):
        noise = ["--set", "data.classes=4", "--set", "data.per_class=250", "--set", "data.spread=100"]
        self.call("pretrain", *TINY, *noise, "--set", "train.epochs=0", "--out-dir", self.path("run"))
        self.call("probe", "--checkpoint", self.path("run", "encoder.ckpt"), "--out-dir", self.path("probe"))
        top1 = float(_csv_rows(self.path("probe", "report.csv"))[1][2])
        self.assertAlmostEqual(0.25, top1, delta=0.1)


class TestPretrainFromFile(CommandTestCase):
    """Test pretraining on a dataset file written by gen-data."""

    def test_data_flag(self):
        self.call("gen-data", *TINY, "--out", self.path("data.csv"))
        self.call("pretrain", *TINY, "--data", self.path("data.csv"), "--out-dir", self.path("run"))
        _, run = load_checkpoint(self.path("run", "encoder.ckpt"))
        self.assertEqual("csv", run["data"]["kind"])


class TestCompare(CommandTestCase):
    """Test the compare command."""

    def test_table(self):
        args = [*TINY, "--set", "train.epochs=1", "--set", "train.warmup_epochs=0", "--seeds", "2"]
        out = self.call("compare", *args, "--out-dir", self.path("compare"))
        rows = _csv_rows(self.path("compare", "compare.csv"))
        modes = ["baseline", "synth", "synth_debias", "sampling", "sscl"]
        self.assertEqual([mode for mode in modes for _ in range(2)], [row[0] for row in rows[1:]])
        self.assertEqual(["0", "1"] * 5, [row[1] for row in rows[1:]])
        for label in ("baseline", "w/ synthesis", "w/ synthesis+debias", "w/ sampling", "sscl"):
            self.assertIn(label, out)

    def test_seeds(self):
        with self.assertRaises(CommandError):
            self.call("compare", "--seeds", "0")


class TestSweepK(CommandTestCase):
    """Test the sweep-k command."""

    def test_sweep(self):
        self.call("sweep-k", *TINY, "--values", "0,2", "--out-dir", self.path("sweep"))
        rows = _csv_rows(self.path("sweep", "sweep_k.csv"))
        self.assertEqual(["k", "seed", "top1", "top5"], rows[0])
        self.assertEqual(["0", "2"], [row[0] for row in rows[1:]])

    def test_invalid_values(self):
        for values in ("a,b", "-1", ""):
            with self.subTest(values=values), self.assertRaises(CommandError):
                self.call("sweep-k", "--values", values)


class TestGradcheck(CommandTestCase):
    """Test the gradcheck command."""

    def test_passes(self):
        self.assertIn("max relative error", self.call("gradcheck", "--seed", "1"))

    def test_threshold(self):
        with self.assertRaises(CommandError) as context:
            self.call("gradcheck", "--threshold", "0")
        self.assertEqual(RUNTIME_ERROR, context.exception.returncode)


class TestMeanStd(unittest.TestCase):
    """Test the report formatting."""

    def test_format(self):
        self.assertEqual(" 50.00± 0.00", mean_std([0.5]))
        self.assertEqual(" 50.00±10.00", mean_std([0.4, 0.6]))


class TestMain(CommandTestCase):
    """Test the exit status of sscl.cli.main."""

    def main(self, *args):
        with contextlib.redirect_stdout(io.StringIO()) as out, contextlib.redirect_stderr(io.StringIO()) as err:
            code = cli.main(["sscl", *args])
        return code, out.getvalue(), err.getvalue()

    def test_help(self):
        code, out, _ = self.main("help")
        self.assertEqual(0, code)
        for name in COMMANDS:
            self.assertIn(name, out)

    def test_no_command(self):
        self.assertEqual(USAGE_ERROR, self.main()[0])

    def test_unknown_command(self):
        code, _, err = self.main("train")
        self.assertEqual(USAGE_ERROR, code)
        self.assertIn("Unknown command", err)

    def test_missing_required_flag(self):
        self.assertEqual(USAGE_ERROR, self.main("gen-data")[0])

    def test_invalid_mode(self):
        code, _, err = self.main("pretrain", "--set", "loss.mode=bogus", "--out-dir", self.path("run"))
        self.assertEqual(USAGE_ERROR, code)
        self.assertIn("loss.mode", err)

    def test_missing_checkpoint(self):
        code, _, err = self.main("probe", "--checkpoint", self.path("missing.ckpt"))
        self.assertEqual(RUNTIME_ERROR, code)
        self.assertIn("CheckpointError", err)

    def test_success(self):
        code, out, _ = self.main("gen-data", "--kind", "rings", "--per-class", "5", "--out", self.path("r.csv"))
        self.assertEqual(0, code)
        self.assertIn("Wrote", out)

    def _write(self, name, text):
        with open(self.path(name), "w", encoding="utf-8") as file:
            file.write(text)
        return self.path(name)

    def test_malformed_dataset(self):
        for name, text in (("short.csv", "bad,3,2,2\n0,0.5,0.5\n"), ("empty.csv", "")):
            path = self._write(name, text)
            code, _, err = self.main("pretrain", "--data", path, "--out-dir", self.path("run"))
            with self.subTest(name=name):
                self.assertEqual(RUNTIME_ERROR, code)
                self.assertIn("MalformedDataset", err)
                self.assertFalse(os.path.exists(self.path("run")))

    def test_invalid_config_file(self):
        path = self._write("config.yaml", "train: [1, 2\n")
        code, _, err = self.main("pretrain", "--config", path, "--out-dir", self.path("run"))
        self.assertEqual(USAGE_ERROR, code)
        self.assertIn("--config", err)

    def test_invalid_override_values(self):
        cases = [
            ("train.epochs=abc", "train"),
            ("train.epochs=[1, 2", "--set"),
            ("train.base_lr={{ 0.1 * trian.batch_n }}", "base_lr"),
        ]
        for override, key in cases:
            code, _, err = self.main("pretrain", "--set", override, "--out-dir", self.path("run"))
            with self.subTest(override=override):
                self.assertEqual(USAGE_ERROR, code)
                self.assertIn(key, err)
                self.assertFalse(os.path.exists(self.path("run")))
