import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def cli():
    """Run the command line tool in a subprocess and return the result."""

    def run(*args, cwd=None):
        return subprocess.run(
            [sys.executable, "-m", "spdelab", *[str(a) for a in args]],
            capture_output=True,
            text=True,
            cwd=cwd,
        )

    return run
