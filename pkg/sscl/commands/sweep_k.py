"""Repeat pretraining and probing for several synthetic-negative counts k."""

import os

from sscl.commands.base import (
    USAGE_ERROR,
    BaseCommand,
    CommandError,
    add_config_arguments,
    config_from_options,
    pretrain_and_probe,
)
from sscl.evaluation import ReportRow, write_report
from sscl.loss import LossMode


def _parse_values(text: str):
    try:
        values = [int(value) for value in text.split(",") if value.strip()]
    except ValueError as ex:
        raise CommandError(f"--values must be comma separated integers, got {text!r}", returncode=USAGE_ERROR) from ex
    if not values or any(value < 0 for value in values):
        raise CommandError(f"--values must list non-negative integers, got {text!r}", returncode=USAGE_ERROR)
    return values


class Command(BaseCommand):
    """Accuracy as a function of k with the hardest-set size s held fixed."""

    help = "Sweep the number of synthetic negatives k."

    def add_arguments(self, parser):
        """Sweep values, mode, seeds, configuration and output flags."""
        add_config_arguments(parser)
        parser.add_argument("--values", default="0,2,4,8", help="Comma separated values of k.")
        parser.add_argument("--mode", choices=[LossMode.SYNTH.value, LossMode.SSCL.value], default=LossMode.SSCL.value)
        parser.add_argument("--seeds", type=int, default=1)
        parser.add_argument("--out-dir", default="runs/sweep-k", help="Directory for per-run outputs and sweep_k.csv.")

    def handle(self, **options):
        """Handle the execution of the command."""
        values = _parse_values(options["values"])
        if options["seeds"] < 1:
            raise CommandError("--seeds must be >= 1", returncode=USAGE_ERROR)
        base = config_from_options(options)
        first_seed = int(base["seed"])
        rows = []
        for k in values:
            for seed in range(first_seed, first_seed + options["seeds"]):
                config = config_from_options(
                    options, (f"seed={seed}", f"loss.mode={options['mode']}", f"loss.k={k}")
                )
                top1, top5 = pretrain_and_probe(config, os.path.join(options["out_dir"], f"k{k}-seed{seed}"))
                rows.append(ReportRow(str(k), seed, top1, top5))
                self.stdout.write(f"k={k:<4} seed {seed:<4} top1 {100 * top1:6.2f}  top5 {100 * top5:6.2f}")
        write_report(rows, os.path.join(options["out_dir"], "sweep_k.csv"), header=("k", "seed", "top1", "top5"))
