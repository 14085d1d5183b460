"""Protocol conformance: the primary package's remote-client test suite runs
verbatim against this server, pointed at it through the documented env vars."""
import os
import subprocess
import sys
from pathlib import Path

PRIMARY_TESTS = Path(__file__).resolve().parents[2] / "tests" / "test_remote.py"


def test_primary_remote_suite_passes(live_server):
    assert PRIMARY_TESTS.exists(), f"primary suite not found at {PRIMARY_TESTS}"
    env = dict(os.environ)
    env.update({
        "CURVENS_TEST_SERVER_URL": live_server,
        "CURVENS_TEST_SERVER_MODEL": "tiny-causal",
        "CURVENS_TEST_SERVER_FILLER": "tiny-infill",
        "CURVENS_TEST_SERVER_GENERATOR": "tiny-causal",
    })
    result = subprocess.run(
        [sys.executable, "-m", "pytest", str(PRIMARY_TESTS), "-q",
         "-p", "no:cacheprovider"],
        env=env,
        cwd=PRIMARY_TESTS.parents[1],
        capture_output=True,
        text=True,
        timeout=600,
    )
    assert result.returncode == 0, (
        f"primary remote suite failed against the reference server:\n"
        f"{result.stdout}\n{result.stderr}"
    )
