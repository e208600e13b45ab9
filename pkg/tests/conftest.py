import numpy as np
import pytest

from magnonring.hamiltonian import build_model


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture(scope="session")
def model_factory():
    cache = {}

    def make(label="M", n_cells=3, material="CrBr3", a_choice="bare"):
        key = (label, n_cells, material, a_choice)
        if key not in cache:
            cache[key] = build_model(material, label, n_cells, a_choice)
        return cache[key]

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def spin_wave_band(model, a):
    """Linear spin-wave energies (a/6)(3 +- |gamma(k)|) at the momenta the ring supports."""
    from magnonring.lattice import LatticeSpec

    lat = LatticeSpec.honeycomb()
    b1, _ = lat.reciprocal()
    nc = model.n_sites // 2
    out = []
    for m in range(nc):
        k = model.q.vec + m * b1 / nc
        g = abs(np.exp(1j * lat.deltas @ k).sum())
        out += [a / 6 * (3 + g), a / 6 * (3 - g)]
    return np.sort(out)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """report(n, ok, detail): record one acceptance line for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _report(n, ok, detail=""):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(line)
