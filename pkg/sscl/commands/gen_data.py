"""Generate a synthetic dataset file."""

import os

from sscl.commands.base import (
    USAGE_ERROR,
    BaseCommand,
    CommandError,
    add_config_arguments,
    build_dataset,
    config_from_options,
)
from sscl.data import save_csv

FLAG_KEYS = {
    "kind": "data.kind",
    "classes": "data.classes",
    "dim": "data.dim",
    "per_class": "data.per_class",
    "spread": "data.spread",
    "noise": "data.noise",
    "seed": "data.seed",
}


class Command(BaseCommand):
    """Write gen_blobs/gen_rings output in the sscl CSV dataset format."""

    help = "Generate a synthetic blobs or rings dataset."

    def add_arguments(self, parser):
        """Dataset shape flags; unset flags fall back to the `data` section."""
        add_config_arguments(parser, data=False)
        parser.add_argument("--kind", choices=["blobs", "rings"])
        parser.add_argument("--classes", type=int)
        parser.add_argument("--dim", type=int, help="Feature width (blobs only).")
        parser.add_argument("--per-class", type=int)
        parser.add_argument("--spread", type=float, help="Standard deviation around the centers (blobs).")
        parser.add_argument("--noise", type=float, help="Radial noise (rings).")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--out", required=True, help="Destination CSV file.")

    def handle(self, **options):
        """Generate the dataset and write it next to its resolved config."""
        overrides = [f"{key}={options[flag]}" for flag, key in FLAG_KEYS.items() if options.get(flag) is not None]
        config = config_from_options(options, tuple(overrides))
        kind = config.data_config()["kind"]
        if kind not in ("blobs", "rings"):
            raise CommandError(f"gen-data only generates blobs or rings, not {kind}", returncode=USAGE_ERROR)
        dataset = build_dataset(config)
        save_csv(dataset, options["out"])
        config.dump(f"{os.path.splitext(options['out'])[0]}.config.yaml")
        self.stdout.write(
            f"Wrote {dataset.n} samples ({dataset.class_count} classes, d={dataset.dim}) to {options['out']}"
        )
