"""Acceptance criteria, each at its stated tolerance.

Every check records a verdict; the terminal summary prints one PASS/FAIL
line per criterion.
"""

import time

import numpy as np
import pytest

from funnelctl.cli import build_summary, cmd_check
from funnelctl.controller import FunnelSpec, cascade
from funnelctl.normalform import (
    InfeasibleWeight,
    build_K,
    build_U_jet,
    detect_relative_degree,
    extract_blocks,
    stacked_matrices,
)
from funnelctl.numkit import pinv
from funnelctl.ode import integrate_dp45, rk4_fixed
from funnelctl.plant import Plant
from funnelctl.scenario import boeing737, load_scenario
from funnelctl.simulator import ClosedLoop, integrate

from .conftest import fd5_derivative, random_chain_plant, record

BOEING_U = np.array([
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
    [0, 1, 0.00618, 0, 0],
    [0, 0, 1, 0, 0],
    [1, -0.0198, 1.23534, -14.16314, 219.17412],
])
BOEING_GAMMA = np.array([[0.01184, 0.01184, 0.21327, 0.21327], [-0.12879, -0.12879, 0.00171, 0.00171]])
CASES = 200


def check(criterion, part, passed, detail=""):
    record(criterion, part, passed, detail)
    assert passed, f"criterion {criterion} {part}: {detail}"


# --- 1 ----------------------------------------------------------------------

def test_c1_boeing_normal_form():
    t0 = time.perf_counter()
    plant = boeing737().plant
    r, Gamma = detect_relative_degree(plant, [0.0])
    nf = extract_blocks(plant, 0.0, r)
    elapsed = time.perf_counter() - t0
    du = np.abs(nf.U - BOEING_U).max()
    dg = np.abs(Gamma - BOEING_GAMMA).max()
    dq = abs(nf.Q[0, 0] + 0.1346)
    n_max, p2_max = np.abs(nf.N).max(), np.abs(nf.P[1]).max()
    ok = (r == 2 and du <= 1e-3 and dg <= 1e-5 and dq <= 5e-4 and n_max <= 1e-8 and p2_max <= 1e-8
          and elapsed < 1.0)
    check(1, "normal form", ok, f"r={r} |dU|={du:.1e} |dGamma|={dg:.1e} |dQ|={dq:.1e} "
                                f"|N|={n_max:.1e} |P2|={p2_max:.1e} {elapsed:.2f}s")


# --- 2 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def nf_2x2():
    t0 = time.perf_counter()
    nf = extract_blocks(Plant([[0, 1], [0, 1]], [[1, 1], [1, 3]], [[1, 0]]), 0.0, 1)
    return nf, time.perf_counter() - t0


def test_c2_ahat(nf_2x2):
    nf, _ = nf_2x2
    dev = np.abs(nf.Ahat - np.array([[2, 1], [-2, 1]])).max()
    check(2, "Ahat", dev <= 1e-10, f"Ahat={nf.Ahat.round(12).tolist()} max dev {dev:.1e}")


def test_c2_bhat_qhat(nf_2x2):
    nf, elapsed = nf_2x2
    db = np.abs(nf.Bhat - np.array([[1, 1], [-1, 1]])).max()
    dq = abs(nf.Q[0, 0] + 1)
    check(2, "Bhat, Qhat", db <= 1e-10 and dq <= 1e-10 and elapsed < 1.0,
          f"|dBhat|={db:.1e} |dQhat|={dq:.1e} {elapsed:.3f}s")


# --- 3 ----------------------------------------------------------------------

def test_c3_range_condition_counterexample():
    sc = load_scenario("scenarios/weight_range_fails.json")
    with pytest.raises(InfeasibleWeight):
        build_K(sc.plant, 0.0, "pinv_formula", r=2)
    report, code = cmd_check(sc)
    c12 = report["cond12_K_existence"]
    check(3, "cond12", not c12.passed and code == 1, f"build_K rejected; cond12 passed={c12.passed}, exit {code}")


# --- 4 ----------------------------------------------------------------------

def test_c4_scalar_decaying_gain_system():
    sc = load_scenario("scenarios/scalar_decaying_gain.json")
    r, _ = detect_relative_degree(sc.plant, sc.check_grid)
    U = build_U_jet(sc.plant, 0.0, r)[0].value
    report, _ = cmd_check(sc)
    lyap = report["P3_lyapunov"]
    grid = lyap.grid
    ok = r == 1 and np.allclose(U, [[1.0]]) and not lyap.passed and grid["start"] == 0.0 and grid["stop"] == 100.0
    check(4, "scalar", ok, f"r={r} U={U.tolist()} min det={lyap.worst:.2e} < {lyap.threshold:.0e}")


# --- 5 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def boeing_run():
    sc = boeing737()
    t0 = time.perf_counter()
    tr = integrate(sc)
    return sc, tr, time.perf_counter() - t0


def _setup_matches(sc):
    f0, f1 = sc.funnels
    ref = sc.reference.jet(1.3, 0)[0]
    Gamma = sc.plant.C @ sc.plant.A @ sc.plant.B
    K, _ = build_K(sc.plant, 0.0, sc.weight.method, r=2)
    return ((f0.a, f0.b, f0.c) == (5.0, 1.0, 0.1) and (f1.a, f1.b, f1.c) == (2.5, 0.5, 0.1)
            and np.allclose(ref, [2 * np.sin(1.3), np.cos(1.3)]) and np.allclose(K, Gamma.T)
            and sc.sim.t_end == 10.0 and sc.sim.rtol == 1e-10)


def test_c5a_margins(boeing_run):
    sc, tr, elapsed = boeing_run
    worst = tr.margin.max(axis=0)
    ok = _setup_matches(sc) and bool(np.all(tr.margin < 1.0)) and tr.t[-1] == pytest.approx(10.0)
    check(5, "a margins", ok, f"max margins {worst.round(4).tolist()}")


def test_c5b_actuator2_bound(boeing_run):
    _, tr, _ = boeing_run
    sel = (tr.t >= 6.0 - 1e-12) & (tr.t <= 10.0 + 1e-12)
    a = np.abs(tr.ueff[sel, 1])
    i = int(a.argmax())
    check(5, "b bound on [6,10]", a.max() <= 0.5 + 1e-3,
          f"max |ueff_2| = {a.max():.4f} at t={tr.t[sel][i]:.2f}")


def test_c5b_actuator2_reaches(boeing_run):
    _, tr, _ = boeing_run
    sel = (tr.t >= 7.0 - 1e-12) & (tr.t <= 9.0 + 1e-12)
    peak = np.abs(tr.ueff[sel, 1]).max()
    check(5, "b reach in [7,9]", peak >= 0.5 - 1e-3, f"max |ueff_2| on [7,9] = {peak:.6f}")


def test_c5c_actuator4(boeing_run):
    _, tr, _ = boeing_run
    peak = np.abs(tr.ueff[tr.t >= 7.2 - 1e-12, 3]).max()
    check(5, "c actuator 4", peak < 1e-3, f"max |ueff_4| for t>=7.2 = {peak:.1e}")


def test_c5d_reported_and_runtime(boeing_run):
    sc, tr, elapsed = boeing_run
    s = build_summary(sc, tr)
    finite = np.isfinite(s["max_norm_u"]) and np.all(np.isfinite(s["max_gain"]))
    check(5, "d report", finite and elapsed < 30.0,
          f"max|u|={s['max_norm_u']:.3f} max k={np.round(s['max_gain'], 2).tolist()} {elapsed:.1f}s")


# --- 6 ----------------------------------------------------------------------

def _random_shape(g):
    return int(g.integers(1, 3)), int(g.integers(1, 4)), int(g.integers(0, 3)), int(g.integers(0, 3))


def _anti_triangular_dev(plant, t, r):
    st = stacked_matrices(plant, t, r)
    p, m = plant.p, plant.m
    GL = (plant.C @ np.linalg.matrix_power(plant.A, r - 1) @ plant.B) @ np.diag(plant.reliability_diag(t))
    dev = 0.0
    for i in range(r):
        for j in range(r):
            blk = st.CB[i * p:(i + 1) * p, j * m:(j + 1) * m]
            if i + j < r - 1:
                dev = max(dev, np.abs(blk).max())
            elif i + j == r - 1:
                dev = max(dev, np.abs(blk - (-1) ** j * GL).max())
    return dev / max(1.0, np.abs(st.CB).max())


def _e0_signal(g, p):
    a, w, c = 0.01 * g.normal(size=(3, p)), g.uniform(0.2, 2, size=(3, p)), g.uniform(0, 6, size=(3, p))

    def jet(t, order):
        k = np.arange(order + 1)[:, None, None]
        return (a * w**k * np.sin(w * t + c + k * np.pi / 2)).sum(axis=1)

    return jet


def test_c6_property_suites():
    t_start = time.perf_counter()
    g = np.random.default_rng(20240601)
    fails = {k: 0 for k in ("penrose", "U Uinv", "anti-triangular", "q=p blocks", "calB identity",
                            "Udot fd", "cascade fd", "gains>=1", "r=1 identity")}
    for _ in range(CASES):
        # Penrose, including rank-deficient inputs
        rows, cols, rank = int(g.integers(1, 6)), int(g.integers(1, 6)), int(g.integers(0, 5))
        M = g.normal(size=(rows, rank)) @ g.normal(size=(rank, cols)) if rank else np.zeros((rows, cols))
        X = pinv(M)
        tol = 1e-8 * max(1.0, np.abs(M).max()) ** 2 * max(1.0, np.abs(X).max()) ** 2
        if not (np.allclose(M @ X @ M, M, atol=tol) and np.allclose(X @ M @ X, X, atol=tol)
                and np.allclose(M @ X, (M @ X).T, atol=tol) and np.allclose(X @ M, (X @ M).T, atol=tol)):
            fails["penrose"] += 1

        p, r, n_extra, m_extra = _random_shape(g)
        t = float(g.uniform(0.2, 2.8))
        plant = random_chain_plant(g, p, r, n_extra, m_extra)
        Ujet, _, res = build_U_jet(plant, t, r)
        fails["U Uinv"] += res > 1e-8
        fails["anti-triangular"] += _anti_triangular_dev(plant, t, r) > 1e-9
        fd = fd5_derivative(lambda s: build_U_jet(plant, s, r)[0].value, t)
        Udot = Ujet.coeffs[1]
        fails["Udot fd"] += np.abs(Udot - fd).max() > 1e-4 * max(1.0, np.abs(Udot).max())

        qp = random_chain_plant(g, p, r, n_extra, m_extra, q_equals_p=True)
        nf = extract_blocks(qp, t, r)
        scale = max(1.0, np.abs(nf.Ahat).max())
        blocks = [nf.N] + nf.P[1:]
        fails["q=p blocks"] += max(np.abs(b).max(initial=0.0) for b in blocks) > 1e-8 * scale
        st = stacked_matrices(qp, t, r)
        calB = st.calB.value
        resid = (np.eye(qp.n) - calB @ st.CB_pinv @ st.calC) @ calB
        fails["calB identity"] += np.abs(resid).max() > 1e-8 * max(1.0, np.abs(calB).max())

        # cascade derivatives and gains
        rr = int(g.integers(2, 5))
        sig = _e0_signal(g, p)
        fs = [FunnelSpec(a=float(g.uniform(0.5, 2)), b=float(g.uniform(0.1, 1)), c=float(g.uniform(0.5, 1)))] * rr
        h = 1e-5
        mid, lo, hi = (cascade(sig(s, rr - 1), fs, s) for s in (t, t - h, t + h))
        worst = 0.0
        for i in range(rr - 1):
            expect = (hi.e_values[i] - lo.e_values[i]) / (2 * h) + mid.gains[i] * mid.e_values[i]
            sc_ = max(1e-3, np.abs(mid.e_values[i + 1]).max())
            worst = max(worst, np.abs(mid.e_values[i + 1] - expect).max() / sc_)
        fails["cascade fd"] += worst > 1e-4
        fails["gains>=1"] += not (np.all(mid.gains >= 1.0) and np.all(mid.margins < 1.0))

        e0 = 0.2 * g.normal(size=(1, p))
        f = FunnelSpec(a=float(g.uniform(0, 2)), b=float(g.uniform(0, 1)), c=1.0)
        s1 = cascade(e0, [f], t)
        phi = 1.0 / (f.a * np.exp(-f.b * t) + f.c)
        k = 1.0 / (1.0 - phi**2 * float(e0[0] @ e0[0]))
        fails["r=1 identity"] += not (np.isclose(s1.gains[0], k, rtol=1e-12) and np.array_equal(s1.e_values[0], e0[0]))
    elapsed = time.perf_counter() - t_start
    bad = {k: v for k, v in fails.items() if v}
    check(6, "properties", not bad and elapsed < 60.0,
          f"{CASES} cases x {len(fails)} suites, failures {bad or 'none'}, {elapsed:.1f}s")


# --- 7 ----------------------------------------------------------------------

def test_c7_rk4_order():
    sc = boeing737()
    loop = ClosedLoop(sc)
    T = 1.0
    _, Y = integrate_dp45(loop, 0.0, sc.plant.x0, T, rtol=1e-13, atol=1e-15)
    ref = Y[-1]
    e1 = np.abs(rk4_fixed(loop, 0.0, sc.plant.x0, T, 0.005) - ref).max()
    e2 = np.abs(rk4_fixed(loop, 0.0, sc.plant.x0, T, 0.0025) - ref).max()
    ratio = e1 / e2
    check(7, "rk4 order", 12.0 <= ratio <= 20.0, f"error ratio {ratio:.2f} (h=0.005 -> 0.0025 on [0,1])")
