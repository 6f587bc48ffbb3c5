"""The `sscl` executable: `sscl <command> [options]`."""

import logging
import logging.config
import os
import sys
from typing import List, Optional

from sscl import __version__
from sscl.commands import COMMANDS, load_command_class
from sscl.commands.base import RUNTIME_ERROR, USAGE_ERROR, CommandError
from sscl.errors import ConfigValidationError, SSCLError

logger = logging.getLogger(__name__)


def logging_config(verbose: bool = False) -> dict:
    """`logging.config.dictConfig` settings of the command-line tool."""
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "normal": {
                "format": "%(asctime)s.%(msecs)03d %(levelname)-7s %(name)s :\n  %(message)s",
                "datefmt": "%H:%M:%S",
            },
            "verbose": {
                "format": "%(asctime)s.%(msecs)03d %(levelname)-7s %(name)-20s %(filename)-15s %(funcName)30s() :\n"
                "  %(message)s",
                "datefmt": "%H:%M:%S",
            },
        },
        "handlers": {
            "normal_console": {
                "level": "INFO",
                "class": "logging.StreamHandler",
                "formatter": "normal",
            },
            "verbose_console": {
                "level": "DEBUG",
                "class": "logging.StreamHandler",
                "formatter": "verbose",
            },
        },
        "loggers": {
            "sscl": {
                "handlers": ["verbose_console" if verbose else "normal_console"],
                "level": "DEBUG" if verbose else "INFO",
                "propagate": False,
            },
        },
    }


def main_help_text(prog_name: str) -> str:
    """Usage text listing the available commands."""
    lines = [
        f"usage: {prog_name} <command> [options]",
        "",
        f"sscl {__version__}: synthetic hard negatives for contrastive learning.",
        "",
        "Available commands:",
    ]
    for name in COMMANDS:
        lines.append(f"    {name:<10} {load_command_class(name).help}")
    lines.append("")
    lines.append(f"Type '{prog_name} <command> --help' for help on a specific command.")
    return "\n".join(lines)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit status.

    Exit status is 0 on success, 1 for usage and configuration errors and 2
    for runtime errors.
    """
    argv = list(sys.argv if argv is None else argv)
    prog_name = os.path.basename(argv[0]) if argv else "sscl"
    args = argv[1:]
    logging.config.dictConfig(logging_config(verbose="--verbose" in args))

    if not args or args[0] in ("help", "-h", "--help"):
        sys.stdout.write(main_help_text(prog_name) + "\n")
        return 0 if args else USAGE_ERROR
    if args[0] == "--version":
        sys.stdout.write(f"{__version__}\n")
        return 0
    if args[0] not in COMMANDS:
        sys.stderr.write(f"Unknown command: {args[0]!r}\nType '{prog_name} help' for usage.\n")
        return USAGE_ERROR

    command = load_command_class(args[0])
    try:
        command.run_from_argv(prog_name, args[0], args[1:])
    except CommandError as ex:
        sys.stderr.write(f"CommandError: {ex}\n")
        return ex.returncode
    except ConfigValidationError as ex:
        sys.stderr.write(f"{ex}\n")
        return USAGE_ERROR
    except (SSCLError, OSError) as ex:
        logger.debug("Command %s failed", args[0], exc_info=True)
        sys.stderr.write(f"{ex.__class__.__name__}: {ex}\n")
        return RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
