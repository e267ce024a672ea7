import pytest

from kpo_ising.fock import FockCutoff
from kpo_ising.model import SystemParams
from kpo_ising.spectrum import pump_spectrum


@pytest.fixture(scope="session")
def paper_spectrum():
    """Vacuum-branch sweep of the full-size preset at zero detuning."""
    return pump_spectrum(SystemParams(), FockCutoff(24))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, f"{title}: {detail}")
    print(f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'} {text}")
