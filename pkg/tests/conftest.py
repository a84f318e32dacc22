import time

import numpy as np
import pytest

from tendonml.dataset import build_from_spec, split
from tendonml.plant import preset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ideal_data():
    """Noise-free ideal plant, full 361-point grid, 5 replicates, 80/20 split."""
    ds = build_from_spec(-90, 90, 10, 5, preset("ideal"), seed=0, preset_name="ideal")
    return split(ds, 0.8, 0)


@pytest.fixture(scope="session")
def default_data():
    """Default plant with 0.5 degree measurement noise, 5 replicates, 80/20 split."""
    ds = build_from_spec(-90, 90, 10, 5, preset("default", noise_sigma=0.5), seed=0,
                         preset_name="default")
    return split(ds, 0.8, 0)


@pytest.fixture(scope="session")
def small_data():
    """Coarse default-plant dataset for quick model tests."""
    ds = build_from_spec(-90, 90, 30, 2, preset("default", noise_sigma=0.5), seed=1,
                         preset_name="default")
    return split(ds, 0.75, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_benchmark(default_data):
    """All eight families at their defaults on the default dataset."""
    from tendonml.evalkit import run_benchmark
    from tendonml.model_api import FAMILIES, RegressorSpec
    tr, va = default_data
    return run_benchmark([RegressorSpec(f) for f in FAMILIES], tr, va)


def run_pipeline(out, *extra):
    """generate, benchmark, distill, validate and report into ``out``; returns exit codes."""
    from tendonml.cli import main
    codes = [main(["generate", "--out", str(out), *extra])]
    for stage in ("benchmark", "distill", "validate", "report"):
        codes.append(main([stage, "--out", str(out), *extra]))
    return codes


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """A complete default-configuration pipeline run directory."""
    out = tmp_path_factory.mktemp("run_a") / "run"
    t0 = time.perf_counter()
    codes = run_pipeline(out)
    return out, codes, time.perf_counter() - t0
