"""Jinja2 environment used to render templated configuration values."""

from jinja2 import StrictUndefined
from jinja2.environment import Context as JinjaContext
from jinja2.nativetypes import NativeEnvironment
from jinja2.utils import missing

from sscl.jinja_filters import FILTERS


def new_template_environment(root_context) -> NativeEnvironment:
    """Create a new template environment that will resolve identifiers using the supplied root_context.

    Args:
        root_context (sscl.context.Context): Context used to resolve identifiers missing from the render call

    Returns:
        NativeEnvironment: Jinja native environment
    """

    class RenderContext(JinjaContext):
        """Custom jinja render context that will resolve values from the provided configuration context."""

        def resolve_or_missing(self, key):
            """Resolve the missing value from the current configuration context.

            Args:
                key (str): Variable name to attempt to resolve.

            Returns:
                The resolved value or jinja2.utils.missing
            """
            value = super().resolve_or_missing(key)
            if value is missing:
                if key in root_context:
                    value = root_context[key]
                elif key == "context":
                    value = root_context
            return value

    env = NativeEnvironment(
        trim_blocks=True,
        lstrip_blocks=True,
        undefined=StrictUndefined,
    )
    env.filters.update(FILTERS)
    env.context_class = RenderContext
    return env
