"""Tasks for use with Invoke.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

import csv
import os
import statistics

from invoke.collection import Collection
from invoke.exceptions import Exit
from invoke.tasks import task as invoke_task


def is_truthy(arg):
    """Convert "truthy" strings into Booleans.

    Examples:
        >>> is_truthy('yes')
        True
    Args:
        arg (str): Truthy string (True values are y, yes, t, true, on and 1; false values are n, no,
        f, false, off and 0. Raises ValueError if val is anything else.
    """
    if isinstance(arg, bool):
        return arg

    val = str(arg).lower()
    if val in ("y", "yes", "t", "true", "on", "1"):
        return True
    elif val in ("n", "no", "f", "false", "off", "0"):
        return False
    else:
        raise ValueError(f"Invalid truthy value: `{arg}`")


# Use pyinvoke configuration for default values, see http://docs.pyinvoke.org/en/stable/concepts/configuration.html
# Variables may be overwritten in invoke.yml or by the environment variables INVOKE_SSCL_xxx
namespace = Collection("sscl")
namespace.configure(
    {
        "sscl": {
            "package": "sscl",
            "poetry_run": True,
        }
    }
)


def task(function=None, *args, **kwargs):
    """Task decorator to override the default Invoke task decorator and add each task to the invoke namespace."""

    def task_wrapper(function=None):
        """Wrapper around invoke.task to add the task to the namespace as well."""
        if args or kwargs:
            task_func = invoke_task(*args, **kwargs)(function)
        else:
            task_func = invoke_task(function)
        namespace.add_task(task_func)
        return task_func

    if function:
        # The decorator was called with no arguments
        return task_wrapper(function)
    # The decorator was called with arguments
    return task_wrapper


def run_command(context, command, **kwargs):
    """Run a command in the project's poetry environment (or directly when poetry_run is false)."""
    if is_truthy(context.sscl.poetry_run):
        command = f"poetry run {command}"
    context.run(command, **kwargs)


# ------------------------------------------------------------------------------
# BUILD
# ------------------------------------------------------------------------------
@task(help={"check": "If specified, only checks if poetry.lock is up to date with pyproject.toml."})
def lock(context, check=False):
    """Generate poetry.lock inside the project environment."""
    context.run(f"poetry {'check' if check else 'lock --no-update'}")


# ------------------------------------------------------------------------------
# DOCS
# ------------------------------------------------------------------------------
@task
def docs(context):
    """Build and serve docs locally for development."""
    print(">>> Serving Documentation at http://localhost:8001")
    run_command(context, "mkdocs serve -v -a localhost:8001")


@task
def build_and_check_docs(context):
    """Build the documentation and fail on warnings."""
    run_command(context, "mkdocs build --no-directory-urls --strict")


# ------------------------------------------------------------------------------
# TESTS
# ------------------------------------------------------------------------------
@task(
    help={
        "autoformat": "Apply formatting recommendations automatically, rather than failing if formatting is incorrect.",
    }
)
def black(context, autoformat=False):
    """Check Python code style with Black."""
    if autoformat:
        black_command = "black"
    else:
        black_command = "black --check --diff"

    command = f"{black_command} ."

    run_command(context, command)


@task
def flake8(context):
    """Check for PEP8 compliance and other style issues."""
    command = "flake8 . --max-line-length 120 --extend-ignore E203"
    run_command(context, command)


@task
def pylint(context):
    """Run pylint code analysis."""
    command = f"pylint --rcfile pyproject.toml {context.sscl.package}"
    run_command(context, command)


@task(aliases=("a",))
def autoformat(context):
    """Run code autoformatting."""
    black(context, autoformat=True)
    ruff(context, action="both", fix=True)


@task(
    help={
        "action": "One of 'lint', 'format', or 'both'",
        "fix": "Automatically fix selected actions. May not be able to fix all issues found.",
        "output_format": "see https://docs.astral.sh/ruff/settings/#output-format for details",
    }
)
def ruff(context, action="lint", fix=False, output_format="concise"):
    """Run ruff to perform code formatting and/or linting."""
    if action != "lint":
        command = "ruff format"
        if not fix:
            command += " --check"
        command += " ."
        run_command(context, command)
    if action != "format":
        command = "ruff check"
        if fix:
            command += " --fix"
        command += f" --output-format {output_format} ."
        run_command(context, command)


@task
def bandit(context):
    """Run bandit to validate basic static code security analysis."""
    command = f"bandit --recursive {context.sscl.package} --exclude {context.sscl.package}/tests"
    run_command(context, command)


@task
def yamllint(context):
    """Run yamllint to validate formatting of the packaged configuration and test data."""
    command = "yamllint . --format standard"
    run_command(context, command)


@task(
    help={
        "failfast": "fail as soon as a single test fails don't run the entire test suite",
        "buffer": "Discard output from passing tests",
        "pattern": "Run specific test methods, classes, or modules instead of all tests",
        "verbose": "Enable verbose test output.",
    }
)
def unittest(context, failfast=False, buffer=True, pattern="", verbose=False):
    """Run the unit tests under coverage."""
    command = f"coverage run --source {context.sscl.package} --module unittest discover --top-level-directory ."
    command += f" --start-directory {context.sscl.package}/tests"

    if failfast:
        command += " --failfast"
    if buffer:
        command += " --buffer"
    if pattern:
        command += f" -k '{pattern}'"
    if verbose:
        command += " --verbose"

    run_command(context, command)
    run_command(context, f"coverage lcov --include '{context.sscl.package}/*' -o lcov.info")


@task
def unittest_coverage(context):
    """Report on code test coverage as measured by 'invoke unittest'."""
    command = f"coverage report --skip-covered --include '{context.sscl.package}/*'"

    run_command(context, command)


@task(
    help={
        "failfast": "fail as soon as a single test fails don't run the entire test suite",
        "lint-only": "Only run linters; unit tests will be excluded.",
    }
)
def tests(context, failfast=False, lint_only=False):
    """Run all tests for this project."""
    # Sorted loosely from fastest to slowest
    print("Running black...")
    black(context)
    print("Running ruff...")
    ruff(context)
    print("Running flake8...")
    flake8(context)
    print("Running bandit...")
    bandit(context)
    print("Running yamllint...")
    yamllint(context)
    print("Running poetry check...")
    lock(context, check=True)
    print("Running pylint...")
    pylint(context)
    print("Running mkdocs...")
    build_and_check_docs(context)
    if not lint_only:
        print("Running unit tests...")
        unittest(context, failfast=failfast)
        unittest_coverage(context)
    print("All tests have passed!")


# ------------------------------------------------------------------------------
# ACCEPTANCE
# ------------------------------------------------------------------------------
@task(
    help={
        "out_dir": "Directory for the comparison runs and compare.csv.",
        "seeds": "Number of seeds per loss mode, counted up from 0.",
    }
)
def acceptance(context, out_dir="runs/acceptance", seeds=5):
    """Run the toy comparison and check baseline accuracy, the sscl margin and top-5 >= top-1."""
    run_command(context, f"sscl compare --preset toy --set seed=0 --seeds {seeds} --out-dir {out_dir}")
    top1 = {}
    failures = []
    with open(os.path.join(out_dir, "compare.csv"), encoding="utf-8") as file:
        for row in csv.DictReader(file):
            top1.setdefault(row["method"], []).append(float(row["top1"]))
            if float(row["top5"]) < float(row["top1"]):
                failures.append(f"{row['method']} seed {row['seed']}: top-5 below top-1")
    baseline = statistics.mean(top1["baseline"])
    sscl = statistics.mean(top1["sscl"])
    print(f"baseline top-1 {100 * baseline:.2f}, sscl top-1 {100 * sscl:.2f}")
    if baseline < 0.90:
        failures.append(f"baseline mean top-1 {100 * baseline:.2f} is below 90.00")
    if sscl < baseline - 0.005:
        failures.append(f"sscl trails baseline by {100 * (baseline - sscl):.2f} points")
    if failures:
        raise Exit("\n".join(failures), code=1)
    print("Acceptance thresholds hold.")
