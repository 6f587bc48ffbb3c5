"""Pretrain an encoder with one of the contrastive loss modes."""

import os

from sscl.commands.base import BaseCommand, add_config_arguments, config_from_options, load_splits
from sscl.train import pretrain


class Command(BaseCommand):
    """Run the pretraining loop and write checkpoint, metrics and resolved config."""

    help = "Pretrain f_θ and g_θ and save the encoder checkpoint."

    def add_arguments(self, parser):
        """Configuration, output directory and audit flags."""
        add_config_arguments(parser)
        parser.add_argument("--out-dir", default="runs/pretrain", help="Directory for checkpoint, metrics and config.")
        parser.add_argument(
            "--audit", action="store_true", help="Dump every anchor's negative set to audit.jsonl (large)."
        )

    def handle(self, **options):
        """Handle the execution of the command."""
        config = config_from_options(options)
        train, _ = load_splits(config)
        train_cfg = config.train_config()
        out_dir = options["out_dir"]
        os.makedirs(out_dir, exist_ok=True)
        config.dump(os.path.join(out_dir, "config.yaml"))
        self.stdout.write(f"Pretraining on {train.n} samples in mode {train_cfg.mode.value}")
        _, history = pretrain(
            train,
            config.encoder_config(train.dim),
            train_cfg,
            config.augment_config(),
            metrics_path=os.path.join(out_dir, "metrics.csv"),
            audit_path=os.path.join(out_dir, "audit.jsonl") if options["audit"] else None,
            checkpoint_path=os.path.join(out_dir, "encoder.ckpt"),
            run_config=config.resolve(),
        )
        if history:
            self.stdout.write(f"Final epoch mean loss {history[-1].mean_loss:.6f}")
        self.stdout.write(f"Wrote {os.path.join(out_dir, 'encoder.ckpt')}")
