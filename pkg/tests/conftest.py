import math
import re

import numpy as np
import pytest

from nearfield_crb.fim import ScenarioParams
from nearfield_crb.geometry import ArrayConfig, Gain, SourceLocation, fresnel_bounds


@pytest.fixture
def cfg15():
    """15-sensor half-wavelength array at 0.5 m wavelength."""
    return ArrayConfig(15, 0.25, 0.5)


@pytest.fixture
def loc45():
    return SourceLocation.from_degrees(10.0, 45.0)


@pytest.fixture
def cond_eg():
    return ScenarioParams.conditional(90, 1e-3, 1.0)


def random_scenario(rng, theta_max_deg=80.0, snr_db=(-10.0, 40.0), t_max=128):
    """Array, location and SNR drawn as in the randomized equivalence checks."""
    n = int(rng.integers(3, 21))
    lam = 0.5
    d = float(rng.uniform(0.25, 0.75)) * lam
    cfg = ArrayConfig(n, d, lam)
    lower, upper = fresnel_bounds(cfg)
    r = float(rng.uniform(lower, upper))
    theta = math.radians(float(rng.uniform(-theta_max_deg, theta_max_deg)))
    snr = 10.0 ** (float(rng.uniform(*snr_db)) / 10.0)
    t = int(rng.integers(1, t_max + 1))
    return cfg, SourceLocation(r, theta), snr, t


def params_for(model, gain, t, snr):
    if model == "conditional":
        return ScenarioParams.conditional(t, 1.0 / snr, 1.0, gain=Gain(gain))
    return ScenarioParams.unconditional(t, 1.0 / snr, 1.0, gain=Gain(gain))


def rel_err(a, b):
    return abs(a - b) / abs(b)


# ---- one pass/fail line per acceptance criterion in the terminal summary

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    m = re.search(r"test_acceptance\.py::test_c(\d+)([a-z]?)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    part = m.group(2) or m.group(3)
    _CRITERIA.setdefault(key, {})[part] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        parts = _CRITERIA[key]
        ok = all(v == "passed" for v in parts.values())
        # only lettered sub-criteria are itemized
        detail = ", ".join(f"{p}:{v}" for p, v in sorted(parts.items()) if len(p) == 1)
        line = f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
