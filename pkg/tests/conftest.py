"""Shared fixtures and the acceptance-criteria summary hook."""

import sys

import numpy as np
import pytest
import scipy.sparse as sp

from sifsvm.data import Dataset, SynthSpec, generate_synthetic


def random_dataset(n: int, p: int, seed: int, density: float = 0.3) -> Dataset:
    """A small random sparse dataset (not the synthetic generator, so tests
    of the generator have an independent source of instances)."""
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    mask = rng.random((p, n)) < density
    vals = rng.normal(size=(p, n)) * mask
    xbar = sp.csr_matrix(vals * y[None, :])
    return Dataset(xbar, y)


@pytest.fixture(scope="session")
def tiny():
    """The two-sample, three-feature dataset used throughout as a hand-checkable case."""
    from sifsvm.data import parse_libsvm

    return parse_libsvm("1 1:2.0 3:-1.0\n-1 2:0.5")


@pytest.fixture(scope="session")
def small():
    return generate_synthetic(SynthSpec(n=120, p=60, seed=3))


@pytest.fixture(scope="session")
def medium():
    return generate_synthetic(SynthSpec(n=400, p=100, seed=17))


@pytest.fixture(scope="session")
def warm_kernels():
    """Run every hot kernel once so JIT compilation never lands inside a
    timed or budgeted test."""
    from sifsvm.boundary import GridSpec, log_fracs
    from sifsvm.harness import run_path
    from sifsvm.solver import reference_config

    d = generate_synthetic(SynthSpec(n=80, p=60, seed=5))
    spec = GridSpec(
        beta_fracs=log_fracs(1.0, 0.5, 2), alpha_fracs=log_fracs(1.0, 0.1, 3)
    )
    for mode in ("none", "sifs"):
        run_path(d, 0.5, spec, mode=mode, cfg=reference_config(0.5), verify=True)
    return True


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[num]
        terminalreporter.write_line(
            f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} — {detail}"
        )
