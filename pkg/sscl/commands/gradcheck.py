"""Finite-difference check of the full SSCL gradient on a small random model."""

from sscl.autodiff import Tape, grad_check
from sscl.commands.base import BaseCommand, CommandError
from sscl.loss import sscl_loss_on_tape
from sscl.model import EncoderConfig, encode_on_tape, init_params, project_on_tape
from sscl.negatives import LossParams
from sscl.rng import KeyedRandom


def sscl_gradient_error(seed: int, batch_n: int = 2, input_dim: int = 4, eps: float = 1e-6) -> float:
    """Max relative gradient error of a 2-hidden-layer model under the complete loss.

    Selection indices and mixing coefficients are drawn once and reused for
    every finite-difference probe.
    """
    rng = KeyedRandom(seed)
    model = init_params(EncoderConfig(input_dim, encoder_layers=[6, 5], projection_dim=3, seed=seed))
    x = rng.stream("gradcheck", "inputs").standard_normal((2 * batch_n, input_dim))
    params = LossParams(r=0.5, tau=0.1, beta=1.0, s=2 * batch_n - 2, k=2)

    def build(tape: Tape, negative_sets=None):
        z = project_on_tape(tape, model, encode_on_tape(tape, model, tape.constant(x)))
        return sscl_loss_on_tape(tape, z, params, rng.child("gradcheck", "negatives"), negative_sets)

    frozen = build(Tape(model.params)).negative_sets
    return grad_check(lambda tape: build(tape, frozen).node, model.params, eps)


class Command(BaseCommand):
    """Print the max relative error and fail when it exceeds the threshold."""

    help = "Check analytic SSCL gradients against central finite differences."

    def add_arguments(self, parser):
        """Seed, batch and threshold flags."""
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--batch-n", type=int, default=2, help="Samples per batch (2N views).")
        parser.add_argument("--dim", type=int, default=4, help="Input width.")
        parser.add_argument("--eps", type=float, default=1e-6, help="Finite-difference step in (0, 1e-3].")
        parser.add_argument("--threshold", type=float, default=1e-5)

    def handle(self, **options):
        """Handle the execution of the command."""
        error = sscl_gradient_error(options["seed"], options["batch_n"], options["dim"], options["eps"])
        self.stdout.write(f"max relative error {error:.3e} (threshold {options['threshold']:.1e})")
        if not error <= options["threshold"]:
            raise CommandError(f"gradient check failed: {error:.3e} > {options['threshold']:.1e}")
