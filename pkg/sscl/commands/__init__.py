"""Subcommands of the `sscl` executable, one module per command."""

import importlib
from typing import Dict

COMMANDS: Dict[str, str] = {
    "gen-data": "gen_data",
    "pretrain": "pretrain",
    "probe": "probe",
    "compare": "compare",
    "gradcheck": "gradcheck",
    "export": "export",
    "sweep-k": "sweep_k",
}


def load_command_class(name: str, **kwargs):
    """Instantiate the Command class of subcommand `name`."""
    module = importlib.import_module(f"{__name__}.{COMMANDS[name]}")
    return module.Command(**kwargs)


def call_command(name: str, *args: str, stdout=None, stderr=None):
    """Run a subcommand in-process with command-line style arguments.

    Errors propagate as exceptions; see `sscl.cli.main` for the exit status mapping.
    """
    command = load_command_class(name, stdout=stdout, stderr=stderr)
    return command.run_from_argv("sscl", name, list(args))
