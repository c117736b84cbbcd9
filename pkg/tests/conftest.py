import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_layout_positions(rng, n, spread=1.5, min_sep=0.05):
    """n points in a cube with a minimum pairwise distance."""
    pts = []
    while len(pts) < n:
        p = rng.uniform(-spread, spread, 3)
        if all(np.linalg.norm(p - q) > min_sep for q in pts):
            pts.append(p)
    return np.array(pts)


@pytest.fixture(scope="session")
def cavity_15():
    """15x15 curved cavity (a=0.47, L=1.5, w0=2) with one target at the centre."""
    from arraycavity.geometry import add_targets, build_cavity
    from arraycavity.interaction import assemble_hamiltonian
    from arraycavity.modes import eigenmodes

    lay = add_targets(build_cavity(15, 0.47, 1.5, 2.0), [[0, 0, 0]])
    blocks = assemble_hamiltonian(lay)
    return lay, blocks, eigenmodes(blocks.H_AA)


@pytest.fixture(scope="session")
def cavity_10():
    """10x10 curved cavity (a=0.47, L=1.5, w0=1.5) with one target at the centre."""
    from arraycavity.geometry import add_targets, build_cavity
    from arraycavity.interaction import assemble_hamiltonian
    from arraycavity.modes import eigenmodes

    lay = add_targets(build_cavity(10, 0.47, 1.5, 1.5), [[0, 0, 0]])
    blocks = assemble_hamiltonian(lay)
    return lay, blocks, eigenmodes(blocks.H_AA)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
