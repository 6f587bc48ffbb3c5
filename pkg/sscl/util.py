"""Helpers for packaged resources and dotted configuration paths."""

import inspect
import os
from typing import Any, Dict, List, Tuple

import yaml

from sscl.errors import ConfigValidationError


def get_class_dir(cls) -> str:
    """Function to return the directory where a given class is stored.

    Returns:
        str: A path to a directory
    """
    return os.path.dirname(inspect.getfile(cls))


def load_yaml_resource(cls, resource) -> "List | Dict":
    """Loads data from a YAML file stored next to a class.

    Args:
        cls (type): The class to use to determine the path to find the resource.

        resource (str): path of the YAML file relative to the class directory

    Returns:
        list or dict: data parsed from the YAML file
    """
    return yaml.safe_load(load_resource(cls, resource))


def load_resource(cls, resource) -> str:
    """Reads a file stored next to a class and returns it as string."""
    with open(os.path.join(get_class_dir(cls), resource), encoding="UTF-8") as file:
        return file.read()


def list_resources(cls, directory: str, suffix: str = ".yaml") -> List[str]:
    """Names (without suffix) of the resources in `directory` next to a class."""
    path = os.path.join(get_class_dir(cls), directory)
    return sorted(name[: -len(suffix)] for name in os.listdir(path) if name.endswith(suffix))


def parse_override(override: str) -> Tuple[List[str], Any]:
    """Split a `dotted.path=value` override; the value is parsed as YAML.

    Values holding a `{{ ... }}` expression are kept as template text.

    Example:
        >>> parse_override("train.epochs=0")
        (['train', 'epochs'], 0)
    """
    path, sep, raw = override.partition("=")
    keys = path.strip().split(".")
    if not sep or not all(keys):
        raise ConfigValidationError(f"Override {override!r} is not of the form dotted.path=value", path="--set")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as ex:
        if "{{" not in raw:
            raise ConfigValidationError(f"Override {override!r} has an invalid value: {ex}", path="--set") from ex
        value = None
    # an unquoted template reads as a flow mapping
    if "{{" in raw and not isinstance(value, str):
        value = raw.strip()
    return keys, value


def nest(keys: List[str], value: Any) -> Dict[str, Any]:
    """Wrap `value` in nested mappings along `keys`."""
    for key in reversed(keys):
        value = {key: value}
    return value
