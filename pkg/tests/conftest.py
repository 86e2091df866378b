"""Suite-wide fixtures plus the acceptance-line reporter.

Tests named test_criterion_NN_* (the acceptance module) get one PASS/FAIL
line each in the terminal summary, so the whole gate is readable at a
glance.
"""

import os
import re
from pathlib import Path

import numpy as np
import pytest

from duofair.data import SplitSpec, make_synthetic, split

_CRITERION = re.compile(r"test_criterion_(\d+)")
_acceptance: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.match(item.name)
    if not m:
        return
    num = int(m.group(1))
    doc = (getattr(item.function, "__doc__", None) or "").strip().splitlines()
    desc = doc[0] if doc else item.name
    prev_ok = _acceptance.get(num, (None, True))[1]
    if rep.when == "call":
        _acceptance[num] = (desc, prev_ok and rep.passed)
    elif rep.failed:
        _acceptance[num] = (desc, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance):
        desc, ok = _acceptance[num]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:02d}: {status} - {desc}")


# ---------------------------------------------------------------------------
# benchmark data location


def benchmark_dir(name: str):
    """Directory holding the named benchmark's files, or None.

    Looks under $DUOFAIR_DATA first, then <repo>/data. See the README's data
    setup section for the expected filenames.
    """
    roots = []
    env = os.environ.get("DUOFAIR_DATA")
    if env:
        roots.append(Path(env))
    roots.append(Path(__file__).resolve().parents[1] / "data")
    for root in roots:
        d = root / name
        if d.is_dir() and any(d.iterdir()):
            return d
    return None


ADULT_MISSING = (
    "census benchmark data not found: place adult.data and adult.test (or "
    "train.csv/test.csv) under $DUOFAIR_DATA/adult or <repo>/data/adult; "
    "see README.md ('Benchmark data') for schemas and download pointers"
)


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="session")
def tiny_ds():
    """Small synthetic instance with real group disparity (trained models
    reach DI well above 0.2 unconstrained)."""
    return make_synthetic(160, 3, 1.5, 5)


@pytest.fixture(scope="session")
def tiny_split(tiny_ds):
    return split(tiny_ds, SplitSpec(ratio=0.75, repeats=1, seed=3), 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
