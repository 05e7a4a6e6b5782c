#!/usr/bin/env python
"""adfm-selector's command-line utility."""
import sys


def main():
    """Run an analysis command."""
    try:
        from adfm_selector.cli import main as run_command
    except ImportError as exc:
        raise ImportError(
            "Couldn't import adfm_selector. Are the dependencies in "
            "requirements.txt installed and is the repository root on "
            "your PYTHONPATH?"
        ) from exc
    return run_command(sys.argv[1:])


if __name__ == '__main__':
    sys.exit(main())
