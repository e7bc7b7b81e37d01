import math

import mpmath

import pytest
from hypothesis import HealthCheck, settings

from irs_skg.scenario import SPEED_OF_LIGHT, reference_scenario

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

LAMBDA = SPEED_OF_LIGHT / 1e9

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def full_scenario():
    """30x30 half-wavelength IRS, 10 dBm at both nodes."""
    return reference_scenario(30)


@pytest.fixture(scope="session")
def desk_scenario():
    """The same layout with a 4x4 IRS."""
    return reference_scenario(4)


def j0_series(x: float) -> float:
    """J0 from its power series, in enough decimal digits to survive the cancellation."""
    with mpmath.workdps(30 + int(x / math.log(10)) + 10):
        q = -(mpmath.mpf(x) / 2) ** 2
        term, total, k = mpmath.mpf(1), mpmath.mpf(1), 0
        while True:
            k += 1
            term *= q / (k * k)
            total += term
            if k > x and abs(term) < mpmath.mpf(10) ** -30:
                return float(total)


def sinc_series(x: float, terms: int = 40) -> float:
    """sin(pi x)/(pi x) from the Taylor series of sin."""
    z = math.pi * x
    return math.fsum((-1) ** k * z ** (2 * k) / math.factorial(2 * k + 1) for k in range(terms))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
