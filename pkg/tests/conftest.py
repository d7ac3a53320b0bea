import numpy as np
import pytest

from contrastfem.mesh import generate_structured

# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES[number] = f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mesh2():
    return generate_structured(2)


@pytest.fixture(scope="session")
def mesh2_interface():
    return generate_structured(2, 0.5)


def random_mesh(rng, n, interface=True, jitter=0.2):
    """A structured mesh with interior vertices displaced, keeping x = 1/2 straight."""
    from contrastfem.mesh import Mesh

    m = generate_structured(n, 0.5 if interface and n % 2 == 0 else None)
    v = m.vertices.copy()
    inner = (v[:, 0] > 0) & (v[:, 0] < 1) & (v[:, 1] > 0) & (v[:, 1] < 1)
    movable = inner & (np.abs(v[:, 0] - 0.5) > 1e-12 if m.interface_x is not None else inner)
    v[movable] += rng.uniform(-jitter, jitter, (movable.sum(), 2)) / n
    return Mesh(v, m.cells, m.subdomain, interface_x=m.interface_x)
