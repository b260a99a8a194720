import sys
from pathlib import Path
from typing import Optional, Sequence

from absl import app, flags

from thermoreflect.version import THERMOREFLECT_VERSION

flags.DEFINE_boolean(
    "version",
    False,
    "Print the version information and exit.",
)
FLAGS = flags.FLAGS


def init_app(
    argv,
    commands: Optional[Sequence[str]] = None,
    unrecognized_flags_okay: bool = False,
) -> Optional[str]:
    """Initialize a commandline app.

    Usage:

        from absl import app
        from thermoreflect.util.py.init_app import init_app

        def main(argv):
            command = init_app(argv, commands=["render", "fit-human"])
            print(f"Running {command}")

        app.run(main)

    Args:
        argv: The commandline arguments after parsing with absl.flags.
        commands: If set, the app expects exactly one positional argument which
            must be one of these names.
        unrecognized_flags_okay: If `True`, ignore unrecognized flags.

    Returns:
        The selected command, or None if the app takes no command.

    Raises:
        UsageError: If there are unknown arguments, or the command is missing
            or not recognized.
    """
    if FLAGS.version:
        name = Path(argv[0]).stem
        print(f"{name} version {THERMOREFLECT_VERSION}")
        sys.exit(0)

    if not commands:
        if len(argv) != 1 and not unrecognized_flags_okay:
            raise app.UsageError(f"Unrecognized arguments: {argv[1:]}")
        return None

    if len(argv) < 2:
        raise app.UsageError(f"Missing command. Expected one of: {', '.join(commands)}")
    if len(argv) > 2 and not unrecognized_flags_okay:
        raise app.UsageError(f"Unrecognized arguments: {argv[2:]}")
    command = argv[1]
    if command not in commands:
        raise app.UsageError(
            f"Unknown command: `{command}`. Expected one of: {', '.join(commands)}"
        )
    return command
