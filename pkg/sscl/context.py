"""Templated run configuration.

A `Context` is a tree of `_DictNode`/`_ListNode` containers whose string
leaves are Jinja2 templates rendered to native python values against the
root of the tree. Derived defaults are therefore written directly in YAML::

    train:
      batch_n: 256
      base_lr: "{{ 0.1 * train.batch_n / 256 }}"

`RunConfig` is the context of one command run: the packaged defaults, an
optional preset, an optional user file and `--set` overrides are merged in
that order, and typed views turn the tree into the dataclasses of the
library modules.
"""

import inspect
import logging
from collections import UserDict, UserList, UserString
from functools import cached_property
from typing import Any, Iterable, Optional

import yaml
from jinja2 import TemplateError, Undefined
from jinja2.nativetypes import NativeEnvironment

from sscl.data import AugmentConfig
from sscl.errors import ConfigValidationError
from sscl.evaluation import ProbeConfig
from sscl.jinja2 import new_template_environment
from sscl.jinja_filters import to_yaml
from sscl.loss import LossMode
from sscl.model import EncoderConfig
from sscl.negatives import LossParams
from sscl.train import TrainConfig
from sscl.util import list_resources, load_yaml_resource, nest, parse_override

logger = logging.getLogger(__name__)

PRESET_DIR = "presets"
DATA_KINDS = ("blobs", "rings", "csv", "cifar10")


class ContextNodeMixin:
    """A mixin to help create tree nodes for the configuration context.

    This mixin provides overridden __getitem__ and __setitem__ magic
    methods that will automatically get and set the tree node types. The
    mixin also provides a mechanism for a node within the tree to find
    the context's root node and root render environment.
    """

    _parent: "ContextNodeMixin" = None
    _env: NativeEnvironment = None

    @cached_property
    def root(self) -> "ContextNodeMixin":
        """Lookup and return the root node in the context tree."""
        node: ContextNodeMixin = self
        while node._parent is not None:  # pylint:disable=protected-access
            node = node._parent  # pylint:disable=protected-access

        if node._env is None:  # pylint:disable=protected-access
            node._env = new_template_environment(node)  # pylint:disable=protected-access
        return node

    @property
    def env(self) -> NativeEnvironment:
        """Lookup the Jinja2 native environment from the root context node."""
        return self.root._env  # pylint:disable=protected-access

    def __repr__(self) -> str:
        """Get the printable representation of the node's container data."""
        if hasattr(self, "data"):
            return repr(getattr(self, "data"))
        return super().__repr__()

    def __setitem__(self, key: "int | str", value: Any) -> "ContextNodeMixin":
        """Store a new value within the node, merging into an existing container.

        Raises:
            ConfigValidationError: if a mapping is about to be replaced by a scalar.
        """
        value = self._create_node(value)

        if key in self.data:
            old_value = self.data[key]
            if isinstance(old_value, _DictNode) and not isinstance(value, _DictNode):
                raise ConfigValidationError(f"cannot replace a section with {value!r}", path=str(key))
            if isinstance(old_value, (_DictNode, _TemplateNode)) and type(old_value) is type(value):
                old_value.update(value)
                return old_value
        self.data[key] = value
        return value

    def __getitem__(self, key) -> Any:
        """Get the desired item, rendering template leaves to their native value.

        Raises:
            ConfigValidationError: if the template of the item cannot be rendered.
        """
        value = self.data[key]
        # Use the _TemplateNode's data descriptor to
        # render the template and get the native value
        if isinstance(value, _TemplateNode):
            try:
                value = value.data
            except (TemplateError, ArithmeticError, TypeError) as ex:
                raise ConfigValidationError(
                    f"cannot render {value._data!r}: {ex}", path=str(key)  # pylint:disable=protected-access
                ) from ex
        return value

    def _create_node(self, value):
        """Factory function for context nodes.

        Python `list`, `dict` and `str` values become `_ListNode`, `_DictNode`
        and `_TemplateNode` attached to this node; all other values are
        returned unchanged as leaves.
        """
        if isinstance(value, _TemplateNode):
            value = _TemplateNode(self, value)

        elif isinstance(value, (list, UserList)):
            value = _ListNode(list(value))

        elif isinstance(value, (dict, UserDict)):
            value = _DictNode(_raw_items(value))

        elif isinstance(value, str):
            value = _TemplateNode(self, value)

        if isinstance(value, ContextNodeMixin):
            value._parent = self  # pylint:disable=protected-access

        return value


def _raw_items(mapping) -> dict:
    if isinstance(mapping, ContextNodeMixin):
        return dict(mapping.data)
    return dict(mapping)


class _Template:
    """`_Template` is a Python descriptor to render Jinja templates.

    When the attribute is retrieved the template is rendered against the
    context root before it is returned.
    """

    def __get__(self, obj: "_TemplateNode", objtype=None) -> Any:
        """Render the template and return the native type."""
        _template = getattr(obj, "_data_template", None)
        if _template is None:
            data = getattr(obj, "_data")
            _template = obj._parent.env.from_string(data)  # pylint:disable=protected-access
            setattr(obj, "_data_template", _template)

        value = _template.render()
        # native rendering hands back a lone undefined name instead of failing
        if isinstance(value, Undefined):
            value._fail_with_undefined_error()  # pylint:disable=protected-access
        return value

    def __set__(self, obj, value):
        """Set a new template for future rendering."""
        setattr(obj, "_data", value)
        setattr(obj, "_data_template", None)


class _TemplateNode(UserString):
    """A string or jinja2 template leaf of the context tree.

    Args:
        parent: The node used to find the context root when rendering.
        seq: a jinja template to be rendered at a later time. This can also be a literal
        string.
    """

    data = _Template()

    def __init__(self, parent: ContextNodeMixin, seq):  # pylint:disable=super-init-not-called
        """Attach the template text `seq` to `parent`."""
        self._parent = parent
        if isinstance(seq, _TemplateNode):
            seq = seq._data  # pylint:disable=protected-access
        self.data = str(seq)

    def update(self, seq):
        """Update the node with a new template or string literal."""
        if isinstance(seq, _TemplateNode):
            self.data = seq._data  # pylint:disable=protected-access
        else:
            self.data = str(seq)


class _ListNode(ContextNodeMixin, UserList):
    """`_ListNode` is a `collections.UserList` that can be used as a context node.

    Upon initialization all items are converted to the appropriate node type.
    """

    def __init__(self, initlist=None):
        """Create the list, converting every item to a context node."""
        super().__init__(initlist)
        for i, item in enumerate(self.data):
            self.data[i] = self._create_node(item)

    def __setitem__(self, index, value):
        """Store `value` as a context node."""
        self.data[index] = self._create_node(value)


class _DictNode(ContextNodeMixin, UserDict):
    """A `collections.UserDict` context node whose keys are also attributes."""

    def __getattr__(self, attr) -> Any:
        """Retrieve the dictionary key that matches `attr`.

        Raises:
            AttributeError: If no dictionary key matching the attribute
            name exists.
        """
        if attr != "data" and attr in self.data:
            return self[attr]
        raise AttributeError(f"'{self.__class__.__name__}' object has no attribute '{attr}'")

    def update(self, other=(), **kwargs):  # pylint:disable=arguments-differ
        """Deep-merge `other` into this node without rendering its templates."""
        for key, value in _raw_items(other).items():
            self[key] = value
        for key, value in kwargs.items():
            self[key] = value


def context_file(*ctx_files):
    """Add a context file to a class.

    Context files are loaded in class hierarchy order (base classes first)
    and merged together to form the base context.
    """

    def wrapper(context_cls):
        if "__base_contexts" not in context_cls.__dict__:
            setattr(context_cls, "__base_contexts", [])

        base_context = getattr(context_cls, "__base_contexts")
        for ctx_file in ctx_files:
            if ctx_file not in base_context:
                base_context.append(ctx_file)

        return context_cls

    return wrapper


class Context(_DictNode):
    """A tree of variables that can include templates for values.

    Args:
        data: a dictionary of values merged on top of the context files
            attached with `@context_file`.
    """

    def __init__(self, data: dict = None):
        """Load the base context files, then merge `data`."""
        super().__init__()
        for base, filename in self.base_context_files():
            context = load_yaml_resource(base, filename)
            # don't add anything if the file was empty
            if context:
                self.update(context)
        if data:
            self.update(data)

    @classmethod
    def base_context_files(cls):
        """Calculate the complete list of context files for the class."""
        bases = list(inspect.getmro(cls))
        bases.reverse()

        files = []
        for base in bases:
            for filename in base.__dict__.get("__base_contexts", []):
                files.append((base, filename))
        return files

    def resolve(self) -> dict:
        """Render the whole tree into plain python data."""
        return _resolve(self)

    def validate(self):
        """Run every `validate_*` method and collect their failures.

        Raises:
            ConfigValidationError: a single error listing the failures of all validators.
        """
        methods = [method for method in dir(self) if method.startswith("validate_") and callable(getattr(self, method))]
        failures = []
        for method in methods:
            try:
                getattr(self, method)()
            except ConfigValidationError as ex:
                failures.extend(ex.failures)

        if len(failures) > 0:
            raise ConfigValidationError(failures=failures)


def _resolve(value):
    if isinstance(value, UserDict):
        return {key: _resolve(value[key]) for key in value.data}
    if isinstance(value, UserList):
        return [_resolve(value[index]) for index in range(len(value))]
    if isinstance(value, dict):
        return {key: _resolve(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_resolve(item) for item in value]
    return value


@context_file("defaults.yaml")
class RunConfig(Context):
    """The configuration of one command run.

    The tree has the sections `data`, `model`, `augment`, `train`, `loss` and
    `probe` plus the top-level `seed` every section seed derives from.
    """

    @classmethod
    def presets(cls):
        """Names of the packaged presets."""
        return list_resources(cls, PRESET_DIR)

    @classmethod
    def from_sources(
        cls, config_file: Optional[str] = None, preset: Optional[str] = None, overrides: Iterable[str] = ()
    ) -> "RunConfig":
        """Merge defaults, preset, user file and `dotted.path=value` overrides, in that order."""
        config = cls()
        if preset:
            config.apply_preset(preset)
        if config_file:
            config.apply_file(config_file)
        for override in overrides:
            config.set(override)
        return config

    def apply_file(self, config_file: str):
        """Merge a user YAML file into the configuration.

        Raises:
            ConfigValidationError: if the file is not valid YAML or does not hold a mapping.
        """
        with open(config_file, encoding="utf-8") as file:
            try:
                data = yaml.safe_load(file) or {}
            except yaml.YAMLError as ex:
                raise ConfigValidationError(f"{config_file} is not valid YAML: {ex}", path="--config") from ex
        if not isinstance(data, dict):
            raise ConfigValidationError(f"{config_file} does not hold a mapping", path="--config")
        logger.debug("Merging configuration file %s", config_file)
        self.update(data)

    def apply_preset(self, name: str):
        """Merge a packaged preset into the configuration."""
        if name not in self.presets():
            raise ConfigValidationError(
                f"unknown preset {name!r}, valid presets: {', '.join(self.presets())}", path="--preset"
            )
        logger.debug("Applying preset %s", name)
        self.update(load_yaml_resource(type(self), f"{PRESET_DIR}/{name}.yaml") or {})

    def set(self, override: str):
        """Apply one `dotted.path=value` override."""
        keys, value = parse_override(override)
        logger.debug("Override %s = %r", ".".join(keys), value)
        self.update(nest(keys, value))

    def dump(self, path=None) -> str:
        """The resolved configuration as YAML, written to `path` when given."""
        text = to_yaml(self.resolve())
        if path:
            with open(path, "w", encoding="utf-8") as file:
                file.write(text)
        return text

    def _section(self, name: str):
        try:
            return self[name]
        except KeyError as ex:
            raise ConfigValidationError("missing section", path=name) from ex

    def _typed(self, section: str, factory, build):
        """`factory(**build(self[section]))`, with conversion errors reported against `section`."""
        values = self._section(section)
        try:
            return factory(**build(values))
        except ConfigValidationError:
            raise
        except (TypeError, ValueError) as ex:
            raise ConfigValidationError(str(ex), path=section) from ex

    def loss_mode(self) -> LossMode:
        """The configured ablation mode."""
        mode = self._section("loss")["mode"]
        try:
            return LossMode(mode)
        except ValueError as ex:
            raise ConfigValidationError(
                f"invalid mode {mode!r}, valid modes: {', '.join(LossMode.choices())}", path="loss.mode"
            ) from ex

    def loss_params(self) -> LossParams:
        """Loss hyperparameters as configured (before the mode pins τ, k and weights)."""
        return self._typed(
            "loss",
            LossParams,
            lambda loss: {
                "r": float(loss["r"]),
                "tau": float(loss["tau"]),
                "beta": float(loss["beta"]),
                "s": int(loss["s"]),
                "k": int(loss["k"]),
                "clamp_floor_enabled": bool(loss["clamp_floor"]),
            },
        )

    def encoder_config(self, input_dim: int) -> EncoderConfig:
        """Encoder and projection shape for inputs of width `input_dim`."""
        return self._typed(
            "model",
            EncoderConfig,
            lambda model: {
                "input_dim": int(input_dim),
                "encoder_layers": list(model["encoder_layers"]),
                "projection_dim": int(model["projection_dim"]),
                "projection_hidden_dim": model["projection_hidden_dim"],
                "seed": int(model["seed"]),
            },
        )

    def train_config(self) -> TrainConfig:
        """Pretraining settings including the loss parameters and mode."""
        loss, mode = self.loss_params(), self.loss_mode()
        return self._typed(
            "train",
            TrainConfig,
            lambda train: {
                "batch_n": int(train["batch_n"]),
                "epochs": int(train["epochs"]),
                "warmup_epochs": int(train["warmup_epochs"]),
                "base_lr": float(train["base_lr"]),
                "warmup_start_lr": float(train["warmup_start_lr"]),
                "weight_decay": float(train["weight_decay"]),
                "momentum": float(train["momentum"]),
                "loss": loss,
                "mode": mode,
                "seed": int(train["seed"]),
                "checkpoint_every": int(train["checkpoint_every"]),
            },
        )

    def probe_config(self) -> ProbeConfig:
        """Linear evaluation settings."""
        return self._typed(
            "probe",
            ProbeConfig,
            lambda probe: {
                "epochs": int(probe["epochs"]),
                "lr": float(probe["lr"]),
                "momentum": float(probe["momentum"]),
                "weight_decay": float(probe["weight_decay"]),
                "batch_n": int(probe["batch_n"]),
                "seed": int(probe["seed"]),
                "standardize": bool(probe["standardize"]),
            },
        )

    def augment_config(self) -> AugmentConfig:
        """Augmentation strengths."""
        return self._typed(
            "augment",
            AugmentConfig,
            lambda augment: {
                "noise_sigma": float(augment["noise_sigma"]),
                "mask_prob": float(augment["mask_prob"]),
                "scale_jitter": float(augment["scale_jitter"]),
                "seed": int(augment["seed"]),
            },
        )

    def data_config(self) -> dict:
        """The `data` section with every value converted to its type."""
        return self._typed(
            "data",
            dict,
            lambda data: {
                "kind": str(data["kind"]),
                "path": _resolve(data["path"]),
                "classes": int(data["classes"]),
                "dim": int(data["dim"]),
                "per_class": int(data["per_class"]),
                "spread": float(data["spread"]),
                "noise": float(data["noise"]),
                "test_fraction": float(data["test_fraction"]),
                "standardize": bool(data["standardize"]),
                "seed": int(data["seed"]),
            },
        )

    def validate_data(self):
        """Check the dataset section."""
        data = self.data_config()
        if data["kind"] not in DATA_KINDS:
            raise ConfigValidationError(
                f"invalid kind {data['kind']!r}, valid kinds: {', '.join(DATA_KINDS)}", path="data.kind"
            )
        if data["kind"] in ("csv", "cifar10") and not data["path"]:
            raise ConfigValidationError(f"a {data['kind']} dataset needs a path", path="data.path")
        if not 0.0 <= data["test_fraction"] < 1.0:
            raise ConfigValidationError(f"must lie in [0, 1), got {data['test_fraction']}", path="data.test_fraction")

    def validate_model(self):
        """Check the encoder shape."""
        self.encoder_config(input_dim=1)

    def validate_augment(self):
        """Check the augmentation strengths."""
        self.augment_config().validate()

    def validate_train(self):
        """Check the schedule, optimizer, loss parameters and mode."""
        self.train_config().validate()

    def validate_probe(self):
        """Check the linear evaluation settings."""
        self.probe_config().validate()
