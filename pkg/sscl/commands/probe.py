"""Linear evaluation of a pretrained encoder checkpoint."""

import os

from sscl.commands.base import BaseCommand, add_config_arguments, load_splits, probe_encoder
from sscl.context import RunConfig
from sscl.evaluation import ReportRow, write_report
from sscl.model import load_checkpoint


def config_for_checkpoint(run_config: dict, options: dict) -> RunConfig:
    """The checkpoint's run configuration with preset, file, `--data` and `--set` merged on top."""
    config = RunConfig(run_config)
    if options.get("preset"):
        config.apply_preset(options["preset"])
    if options.get("config"):
        config.apply_file(options["config"])
    if options.get("data"):
        config.set("data.kind=csv")
        config.set(f"data.path={options['data']}")
    for override in options.get("overrides", []):
        config.set(override)
    config.validate()
    return config


class Command(BaseCommand):
    """Train a linear classifier on frozen features and report top-1/top-5 accuracy."""

    help = "Linear-probe a pretrained encoder checkpoint."

    def add_arguments(self, parser):
        """Checkpoint, data and output flags."""
        parser.add_argument("--checkpoint", required=True, help="Encoder checkpoint written by pretrain.")
        add_config_arguments(parser)
        parser.add_argument("--out-dir", default="runs/probe", help="Directory for report.csv and config.yaml.")

    def handle(self, **options):
        """Probe the checkpoint with the configuration it was trained with, plus overrides."""
        encoder, run_config = load_checkpoint(options["checkpoint"])
        config = config_for_checkpoint(run_config, options)
        train, test = load_splits(config)
        top1, top5 = probe_encoder(encoder, config, train, test)

        out_dir = options["out_dir"]
        os.makedirs(out_dir, exist_ok=True)
        config.dump(os.path.join(out_dir, "config.yaml"))
        write_report(
            [ReportRow(config["loss"]["mode"], int(config["seed"]), top1, top5)], os.path.join(out_dir, "report.csv")
        )
        self.stdout.write(f"top1 {100 * top1:.2f}  top5 {100 * top5:.2f}")
