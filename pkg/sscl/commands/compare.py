"""Run every loss mode over several seeds and tabulate linear-probe accuracy."""

import os
from collections import defaultdict

from sscl.commands.base import (
    USAGE_ERROR,
    BaseCommand,
    CommandError,
    add_config_arguments,
    config_from_options,
    mean_std,
    pretrain_and_probe,
)
from sscl.evaluation import ReportRow, write_report
from sscl.loss import LossMode


class Command(BaseCommand):
    """The ablation table: one row per loss mode with mean±std top-1/top-5."""

    help = "Compare the five loss modes across seeds."

    def add_arguments(self, parser):
        """Seeds, configuration and output flags."""
        add_config_arguments(parser)
        parser.add_argument("--seeds", type=int, default=5, help="Number of seeds, counted up from the config seed.")
        parser.add_argument("--out-dir", default="runs/compare", help="Directory for per-run outputs and compare.csv.")

    def handle(self, **options):
        """Handle the execution of the command."""
        if options["seeds"] < 1:
            raise CommandError("--seeds must be >= 1", returncode=USAGE_ERROR)
        base = config_from_options(options)
        first_seed = int(base["seed"])
        rows = []
        results = defaultdict(list)
        for mode in LossMode:
            for seed in range(first_seed, first_seed + options["seeds"]):
                config = config_from_options(options, (f"seed={seed}", f"loss.mode={mode.value}"))
                run_dir = os.path.join(options["out_dir"], f"{mode.value}-seed{seed}")
                top1, top5 = pretrain_and_probe(config, run_dir)
                rows.append(ReportRow(mode.value, seed, top1, top5))
                results[mode].append((top1, top5))
                self.stdout.write(f"{mode.label:<22} seed {seed:<4} top1 {100 * top1:6.2f}  top5 {100 * top5:6.2f}")

        write_report(rows, os.path.join(options["out_dir"], "compare.csv"))
        self.stdout.write(f"{'method':<22} {'top1':>13} {'top5':>13}")
        for mode in LossMode:
            top1s = [top1 for top1, _ in results[mode]]
            top5s = [top5 for _, top5 in results[mode]]
            self.stdout.write(f"{mode.label:<22} {mean_std(top1s):>13} {mean_std(top5s):>13}")
