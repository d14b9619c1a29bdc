import subprocess
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).parent.parent / "scripts"


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory) -> str:
    """Build the offline random-weight test model once per session."""
    out = tmp_path_factory.mktemp("tiny-model") / "model"
    subprocess.run(
        [sys.executable, str(SCRIPTS / "build_tiny_model.py"), "--out", str(out)],
        check=True, capture_output=True,
    )
    return str(out)
