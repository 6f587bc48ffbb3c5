"""Base classes and shared helpers of the sscl commands."""

import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

import numpy as np

from sscl.context import RunConfig
from sscl.data import LabeledDataset, gen_blobs, gen_rings, load_cifar10_binary, load_csv, standardize, train_test_split
from sscl.errors import ConfigValidationError, SSCLError
from sscl.evaluation import extract_features, linear_probe
from sscl.model import ModelParams
from sscl.train import pretrain

logger = logging.getLogger(__name__)

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class CommandError(SSCLError):
    """A command failed; `returncode` is the process exit status to report."""

    def __init__(self, *args, returncode: int = RUNTIME_ERROR):
        """Create the error with the exit status to report."""
        super().__init__(*args)
        self.returncode = returncode


class CommandParser(argparse.ArgumentParser):
    """Argument parser that raises CommandError instead of exiting on usage errors."""

    def error(self, message):
        """Report a usage error with exit status 1."""
        raise CommandError(f"{self.prog}: {message}", returncode=USAGE_ERROR)


class OutputWrapper:
    """Line-oriented wrapper around an output stream."""

    def __init__(self, out=None, ending="\n"):
        """Wrap `out`, or sys.stdout when it is None."""
        self._out = out
        self.ending = ending

    @property
    def out(self):  # noqa: D102
        return self._out or sys.stdout

    def write(self, msg: str = "", ending: Optional[str] = None):
        """Write `msg`, appending the line ending unless already present."""
        ending = self.ending if ending is None else ending
        if ending and not msg.endswith(ending):
            msg += ending
        self.out.write(msg)


class BaseCommand:
    """A subcommand of the `sscl` executable.

    Subclasses define `help`, `add_arguments(parser)` and `handle(**options)`.
    User-facing output goes through `self.stdout.write`; diagnostics go to the
    module loggers.
    """

    help = ""

    def __init__(self, stdout=None, stderr=None):
        """Create the command with optional output streams (sys.stdout and sys.stderr otherwise)."""
        self.stdout = OutputWrapper(stdout)
        self.stderr = OutputWrapper(stderr)

    def create_parser(self, prog_name: str, subcommand: str) -> CommandParser:
        """Parser holding the common flags plus the command's own arguments."""
        parser = CommandParser(prog=f"{os.path.basename(prog_name)} {subcommand}", description=self.help or None)
        parser.add_argument("--verbose", action="store_true", help="Log debug messages of the sscl package.")
        self.add_arguments(parser)
        return parser

    def add_arguments(self, parser: CommandParser):
        """Entry point for subclassed commands to add custom arguments."""

    def run_from_argv(self, prog_name: str, subcommand: str, argv: List[str]):
        """Parse `argv` and execute the command."""
        options = vars(self.create_parser(prog_name, subcommand).parse_args(argv))
        return self.execute(**options)

    def execute(self, **options):
        """Run `handle`, turning configuration errors into usage errors."""
        if options.get("verbose"):
            logging.getLogger("sscl").setLevel(logging.DEBUG)
        try:
            return self.handle(**options)
        except ConfigValidationError as ex:
            logger.debug("Invalid configuration keys: %s", ", ".join(ex.paths))
            raise CommandError(str(ex), returncode=USAGE_ERROR) from ex

    def handle(self, **options):
        """The actual logic of the command."""
        raise NotImplementedError("subclasses of BaseCommand must provide a handle() method")


def add_config_arguments(parser: CommandParser, data: bool = True):
    """Add the `--config`, `--preset`, `--set` (and `--data`) flags."""
    parser.add_argument("--config", help="YAML run configuration merged over the defaults.")
    parser.add_argument("--preset", help="Packaged preset merged before --config.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a dotted configuration key; may be repeated.",
    )
    if data:
        parser.add_argument("--data", help="Dataset CSV written by gen-data (sets data.kind=csv).")


def config_from_options(options: dict, extra_overrides: Tuple[str, ...] = ()) -> RunConfig:
    """Build and validate the RunConfig described by the common flags."""
    overrides = []
    if options.get("data"):
        overrides += ["data.kind=csv", f"data.path={options['data']}"]
    overrides += options.get("overrides", []) + list(extra_overrides)
    config = RunConfig.from_sources(options.get("config"), options.get("preset"), overrides)
    config.validate()
    return config


def build_dataset(config: RunConfig) -> LabeledDataset:
    """The full dataset described by the `data` section."""
    data = config.data_config()
    kind = data["kind"]
    if kind == "blobs":
        return gen_blobs(data["classes"], data["dim"], data["per_class"], data["spread"], data["seed"])
    if kind == "rings":
        return gen_rings(data["classes"], data["per_class"], data["noise"], data["seed"])
    path = data["path"]
    if kind == "cifar10":
        return load_cifar10_binary(list(path) if isinstance(path, list) else [path])
    return load_csv(path)


def load_splits(config: RunConfig) -> Tuple[LabeledDataset, LabeledDataset]:
    """Training and held-out splits, standardized with training statistics when configured."""
    data = config.data_config()
    train, test = train_test_split(build_dataset(config), data["test_fraction"], data["seed"])
    if data["standardize"]:
        train, test = standardize(train, test)
    logger.debug("Loaded %s: %d training and %d held-out samples", train.name, train.n, test.n)
    return train, test


def probe_encoder(
    encoder: ModelParams, config: RunConfig, train: LabeledDataset, test: LabeledDataset
) -> Tuple[float, float]:
    """Linear evaluation of a frozen encoder: train on `train`, report top-1/top-5 on `test`."""
    result = linear_probe(
        extract_features(encoder, train), train.labels, config.probe_config(), class_count=train.class_count
    )
    held_out = test if test.n else train
    return result.accuracy(extract_features(encoder, held_out), held_out.labels)


def pretrain_and_probe(config: RunConfig, out_dir: Optional[str] = None, audit: bool = False) -> Tuple[float, float]:
    """Run one full pretraining + linear evaluation from a configuration.

    When `out_dir` is given, the resolved config, metrics CSV, checkpoint and
    optional audit dump are written there.
    """
    train, test = load_splits(config)
    paths = {}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        config.dump(os.path.join(out_dir, "config.yaml"))
        paths = {
            "metrics_path": os.path.join(out_dir, "metrics.csv"),
            "checkpoint_path": os.path.join(out_dir, "encoder.ckpt"),
            "audit_path": os.path.join(out_dir, "audit.jsonl") if audit else None,
        }
    encoder, _ = pretrain(
        train,
        config.encoder_config(train.dim),
        config.train_config(),
        config.augment_config(),
        run_config=config.resolve(),
        **paths,
    )
    return probe_encoder(encoder, config, train, test)


def mean_std(values) -> str:
    """`mean±std` in percent (population std, 0 for a single value)."""
    values = 100.0 * np.asarray(values, dtype=np.float64)
    return f"{values.mean():6.2f}±{values.std():5.2f}"
