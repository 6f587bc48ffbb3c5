"""Export encoder features and their PCA-2D projection for external plotting."""

import os

from sscl.commands.base import BaseCommand, add_config_arguments, build_dataset
from sscl.commands.probe import config_for_checkpoint
from sscl.data import Standardizer, train_test_split
from sscl.evaluation import export_embeddings, export_pca, extract_features
from sscl.model import load_checkpoint


class Command(BaseCommand):
    """Write embeddings.csv (`label,f1,...`) and pca.csv (`label,pc1,pc2`)."""

    help = "Export frozen-encoder features of a dataset."

    def add_arguments(self, parser):
        """Checkpoint, data and output flags."""
        parser.add_argument("--checkpoint", required=True, help="Encoder checkpoint written by pretrain.")
        add_config_arguments(parser)
        parser.add_argument("--out-dir", default="runs/export", help="Directory for the CSV files.")

    def handle(self, **options):
        """Handle the execution of the command."""
        encoder, run_config = load_checkpoint(options["checkpoint"])
        config = config_for_checkpoint(run_config, options)
        dataset = build_dataset(config)
        data = config.data_config()
        if data["standardize"]:
            train, _ = train_test_split(dataset, data["test_fraction"], data["seed"])
            dataset = Standardizer.fit(train).apply(dataset)
        features = extract_features(encoder, dataset)

        out_dir = options["out_dir"]
        os.makedirs(out_dir, exist_ok=True)
        config.dump(os.path.join(out_dir, "config.yaml"))
        export_embeddings(features, dataset.labels, os.path.join(out_dir, "embeddings.csv"))
        export_pca(features, dataset.labels, os.path.join(out_dir, "pca.csv"))
        self.stdout.write(f"Exported {features.shape[0]} embeddings of width {features.shape[1]} to {out_dir}")
