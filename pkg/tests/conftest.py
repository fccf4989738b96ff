import numpy as np
import pytest
from hypothesis import settings

from funnelctl.plant import FaultProfile, Plant

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")


def fd_derivative(f, t, h=1e-5):
    """Central difference; works for arrays."""
    return (np.asarray(f(t + h)) - np.asarray(f(t - h))) / (2 * h)


def fd5_derivative(f, t, h=1e-3):
    """Five-point stencil, O(h^4); a larger step keeps cancellation noise down."""
    v = [np.asarray(f(t + k * h)) for k in (-2, -1, 1, 2)]
    return (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h)


def random_chain_plant(rng, p, r, n_extra, m_extra, time_varying=True, q_equals_p=False):
    """Random plant with relative degree ``r`` and internal dimension ``n_extra``.

    Built in a random basis from a chain-of-integrators skeleton, so the
    relative degree holds structurally.
    """
    pr = p * r
    n = pr + n_extra
    m = p + m_extra
    A0 = rng.normal(size=(n, n))
    A0[: pr - p] = 0.0
    A0[: pr - p, p:pr] = np.eye(pr - p)
    B0 = np.zeros((n, m))
    G = rng.normal(size=(p, m))
    while np.linalg.svd(G, compute_uv=False)[-1] < 0.2:
        G = rng.normal(size=(p, m))
    B0[pr - p:pr] = G
    if q_equals_p:
        # every input direction passes through G: rank(B L) = p
        B0[pr:] = rng.normal(size=(n_extra, p)) @ G
    else:
        B0[pr:] = rng.normal(size=(n_extra, m))
    C0 = np.zeros((p, n))
    C0[:, :p] = np.eye(p)
    T = rng.normal(size=(n, n)) + 3 * np.eye(n)
    Ti = np.linalg.inv(T)
    rel = None
    if time_varying:
        # odd actuators stay healthy, even ones lose efficiency smoothly
        rel = [FaultProfile.constant(1.0) if i % 2 else
               FaultProfile.erfc_decay([(0.2, float(rng.uniform(0, 2)), float(rng.uniform(0.5, 2))),
                                        (0.2, 5.0, 1.0)])
               for i in range(m)]
    return Plant(Ti @ A0 @ T, Ti @ B0, C0 @ T, reliability=rel)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def plant_2x2():
    return Plant([[0, 1], [0, 1]], [[1, 1], [1, 3]], [[1, 0]])


# acceptance verdicts, filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def record(criterion: int, part: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        failed = [f"{name}: {detail}" for name, p, detail in parts if not p]
        passed = [f"{name}: {detail}" for name, p, detail in parts if p and detail]
        text = "; ".join(failed) if failed else "; ".join(passed)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {text}")
