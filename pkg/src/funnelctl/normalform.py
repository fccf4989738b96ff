"""Time-varying Byrnes-Isidori normal form for plants with actuator redundancy.

With ``calC = [C; CA; ...; CA^{r-1}]`` and
``calB(t) = [BL, (d/dt - A) BL, ..., (d/dt - A)^{r-1} BL]`` the transformation

    U(t) = [calC; V^T (I - calB (calC calB)^+ calC)],   U^{-1} = [calB (calC calB)^+, V]

brings the plant into a form with a chain of integrators for the output and
its derivatives and an internal block ``eta' = Q eta + ...``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numkit import DEFAULT_RANK_TOL, Jet, min_sym_eig, nullspace_basis, pinv, rank_of
from .plant import Plant, reliability_jet, reliability_value

__all__ = [
    "NormalFormError",
    "InfeasibleWeight",
    "StackedMatrices",
    "NormalForm",
    "Check",
    "AssumptionReport",
    "build_calC",
    "build_calB_jet",
    "stacked_matrices",
    "detect_relative_degree",
    "build_U_jet",
    "extract_blocks",
    "build_K",
    "check_assumptions",
    "WEIGHT_METHODS",
]

WEIGHT_METHODS = ("gamma_transpose", "pinv_formula", "explicit")
DEFAULT_ALPHA = 1e-6
CONSTANT_Q_TOL = 1e-10
STRUCTURE_TOL = 1e-8


class NormalFormError(ValueError):
    pass


class InfeasibleWeight(NormalFormError):
    pass


def build_calC(plant: Plant, r: int) -> np.ndarray:
    if r < 1:
        raise NormalFormError(f"relative degree must be >= 1, got {r}")
    rows, CAk = [], plant.C
    for _ in range(r):
        rows.append(CAk)
        CAk = CAk @ plant.A
    return np.vstack(rows)


def build_calB_jet(plant: Plant, t: float, r: int, order: int = 0) -> Jet:
    """Jet (of the given order) of ``calB`` at ``t``, as ``n x rm`` matrices."""
    if r < 1 or order < 0:
        raise NormalFormError(f"invalid r={r} or order={order}")
    L = reliability_jet(plant, t, r - 1 + order)
    if L.order < r - 1 + order:
        raise NormalFormError(f"reliability jet of order {L.order} too short for r={r}, order={order}")
    M = np.einsum("nm,jmk->jnk", plant.B, L.coeffs)
    blocks = []
    for _ in range(r):
        blocks.append(M[: order + 1])
        # (d/dt - A) lowers the available jet order by one
        M = M[1:] - np.einsum("nk,jkm->jnm", plant.A, M[:-1])
    return Jet(np.concatenate(blocks, axis=2))


@dataclass
class StackedMatrices:
    calB: Jet
    calC: np.ndarray
    V: np.ndarray
    rho: int
    CB: np.ndarray
    CB_pinv: np.ndarray


def stacked_matrices(plant: Plant, t: float, r: int, order: int = 0,
                     tol: float = DEFAULT_RANK_TOL) -> StackedMatrices:
    """``calB``, ``calC``, ``V`` at ``t`` with the rank conditions verified."""
    calC = build_calC(plant, r)
    rho = rank_of(calC, tol)
    pr = plant.p * r
    if rho != pr:
        raise NormalFormError(f"rank of stacked output matrix is {rho}, expected p*r={pr}")
    calB = build_calB_jet(plant, t, r, order)
    CB = calC @ calB.value
    if rank_of(CB, tol) != pr:
        raise NormalFormError(f"relative degree violated at t={t}: rank(calC calB) < {pr}")
    G = CB @ CB.T
    CB_pinv = CB.T @ np.linalg.inv(G)
    V = nullspace_basis(calC, tol)
    return StackedMatrices(calB, calC, V, rho, CB, CB_pinv)


def detect_relative_degree(plant: Plant, grid: Sequence[float], tol: float = DEFAULT_RANK_TOL):
    """Smallest ``r`` with ``C A^k B L(t) = 0`` for ``k <= r-2`` and ``rank(Gamma L(t)) = p`` on the grid.

    Returns ``(r, Gamma)`` with ``Gamma = C A^{r-1} B``.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise NormalFormError("empty time grid")
    Ls = [reliability_value(plant, t) for t in grid]
    bnorm = max(np.linalg.norm(plant.B), 1e-300)
    CAk = plant.C
    for r in range(1, plant.n + 1):
        Gamma = CAk @ plant.B
        scale = max(np.linalg.norm(CAk) * bnorm, 1e-300)
        vanish = all(np.linalg.norm(Gamma @ L) <= tol * scale for L in Ls)
        if not vanish:
            if all(rank_of(Gamma @ L, tol) == plant.p for L in Ls):
                return r, Gamma
            raise NormalFormError(
                f"no strict relative degree: C A^{r - 1} B L(t) is nonzero but not of full row rank"
            )
        CAk = CAk @ plant.A
    raise NormalFormError(f"no strict relative degree <= n={plant.n}")


def _pinv_derivative(CB: np.ndarray, CBdot: np.ndarray) -> np.ndarray:
    # d/dt [CB^T (CB CB^T)^{-1}] for full-row-rank CB
    Ginv = np.linalg.inv(CB @ CB.T)
    Gdot = CBdot @ CB.T + CB @ CBdot.T
    return CBdot.T @ Ginv - CB.T @ Ginv @ Gdot @ Ginv


def build_U_jet(plant: Plant, t: float, r: int, tol: float = DEFAULT_RANK_TOL):
    """``(U jet of order 1, U^{-1}, residual |U U^{-1} - I|)`` at ``t``."""
    st = stacked_matrices(plant, t, r, order=1, tol=tol)
    calB, calBdot = st.calB.coeffs[0], st.calB.coeffs[1]
    CBdot = st.calC @ calBdot
    X = calB @ st.CB_pinv
    Xdot = calBdot @ st.CB_pinv + calB @ _pinv_derivative(st.CB, CBdot)
    n = plant.n
    Nmat = st.V.T @ (np.eye(n) - X @ st.calC)
    Ndot = -st.V.T @ Xdot @ st.calC
    U = np.vstack([st.calC, Nmat])
    Udot = np.vstack([np.zeros_like(st.calC), Ndot])
    Uinv = np.hstack([X, st.V])
    residual = float(np.max(np.abs(U @ Uinv - np.eye(n))))
    return Jet(np.stack([U, Udot])), Uinv, residual


@dataclass
class NormalForm:
    t: float
    r: int
    p: int
    U: np.ndarray
    Udot: np.ndarray
    Uinv: np.ndarray
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    R: list
    S: np.ndarray
    P: list
    Q: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray
    GammaL: np.ndarray
    residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        tl = lambda M: np.asarray(M).tolist()
        return {
            "t": self.t,
            "r": self.r,
            "U": tl(self.U),
            "Udot": tl(self.Udot),
            "Uinv": tl(self.Uinv),
            "Ahat": tl(self.Ahat),
            "Bhat": tl(self.Bhat),
            "Chat": tl(self.Chat),
            "blocks": {
                "R": [tl(Ri) for Ri in self.R],
                "S": tl(self.S),
                "P": [tl(Pi) for Pi in self.P],
                "Q": tl(self.Q),
                "N": tl(self.N),
                "Gamma": tl(self.Gamma),
                "GammaL": tl(self.GammaL),
            },
            "residuals": dict(self.residuals),
        }


def extract_blocks(plant: Plant, t: float, r: int, tol: float = DEFAULT_RANK_TOL,
                   structure_tol: float = STRUCTURE_TOL) -> NormalForm:
    """Transform the plant with ``U(t)`` and read off the normal-form blocks."""
    Ujet, Uinv, residual = build_U_jet(plant, t, r, tol)
    U, Udot = Ujet.coeffs
    n, p = plant.n, plant.p
    pr = p * r
    BL = plant.B @ reliability_value(plant, t)
    Ahat = (U @ plant.A + Udot) @ Uinv
    Bhat = U @ BL
    Chat = plant.C @ Uinv

    scale = max(1.0, float(np.max(np.abs(Ahat))), float(np.max(np.abs(Bhat))))
    chain = np.zeros((pr - p, n))
    chain[:, p:pr] = np.eye(pr - p)
    Chat_ref = np.zeros((p, n))
    Chat_ref[:, :p] = np.eye(p)
    deviations = {
        "Ahat_chain": float(np.max(np.abs(Ahat[: pr - p] - chain), initial=0.0)),
        "Bhat_chain": float(np.max(np.abs(Bhat[: pr - p]), initial=0.0)),
        "Chat": float(np.max(np.abs(Chat - Chat_ref))),
    }
    for name, dev in deviations.items():
        if dev > structure_tol * scale:
            raise NormalFormError(f"normal-form structure check failed: block {name} deviates by {dev:.3e}")

    row = slice(pr - p, pr)
    R = [Ahat[row, p * i: p * (i + 1)] for i in range(r)]
    S = Ahat[row, pr:]
    P = [Ahat[pr:, p * i: p * (i + 1)] for i in range(r)]
    Q = Ahat[pr:, pr:]
    Gamma = plant.C @ np.linalg.matrix_power(plant.A, r - 1) @ plant.B
    return NormalForm(
        t=t, r=r, p=p, U=U, Udot=Udot, Uinv=Uinv, Ahat=Ahat, Bhat=Bhat, Chat=Chat,
        R=R, S=S, P=P, Q=Q, N=Bhat[pr:], Gamma=Gamma, GammaL=Bhat[row],
        residuals={"U_Uinv": residual, **deviations},
    )


def _cond12(plant: Plant, st: StackedMatrices, BL: np.ndarray, tol: float):
    """Range inclusion ``im calB (calC calB)^+ [0; I_p] in im BL`` as a rank test."""
    p = plant.p
    X = st.calB.value @ st.CB_pinv[:, -p:]
    q = rank_of(BL, tol)
    return rank_of(np.hstack([BL, X]), tol) == q, X


def build_K(plant: Plant, t: float, method: str = "gamma_transpose", r: int | None = None,
            matrix=None, tol: float = DEFAULT_RANK_TOL, alpha: float = DEFAULT_ALPHA):
    """Controller weight matrix ``K(t)`` (``m x p``) and a diagnostics dict.

    Raises :class:`InfeasibleWeight` when ``pinv_formula`` is asked for but
    the range condition fails.  A weak definiteness margin is only flagged in
    the diagnostics.
    """
    if method not in WEIGHT_METHODS:
        raise NormalFormError(f"unknown weight method {method!r}")
    if r is None:
        r, _ = detect_relative_degree(plant, [t], tol)
    Gamma = plant.C @ np.linalg.matrix_power(plant.A, r - 1) @ plant.B
    Lt = reliability_value(plant, t)
    diag = {"method": method}
    if method == "gamma_transpose":
        K = Gamma.T.copy()
    elif method == "explicit":
        if matrix is None:
            raise NormalFormError("explicit weight method needs a matrix")
        K = np.asarray(matrix, dtype=float)
        if K.shape != (plant.m, plant.p):
            raise NormalFormError(f"explicit weight has shape {K.shape}, expected {(plant.m, plant.p)}")
    else:
        st = stacked_matrices(plant, t, r, tol=tol)
        BL = plant.B @ Lt
        ok, X = _cond12(plant, st, BL, tol)
        if not ok:
            raise InfeasibleWeight(f"no feasible weight: condition (range inclusion) violated at t={t}")
        K = pinv(BL, tol) @ X
        Nrow = st.V.T @ (np.eye(plant.n) - st.calB.value @ st.CB_pinv @ st.calC)
        diag["GammaLK_minus_I"] = float(np.max(np.abs(Gamma @ Lt @ K - np.eye(plant.p))))
        diag["NK"] = float(np.max(np.abs(Nrow @ BL @ K), initial=0.0))
    GLK = Gamma @ Lt @ K
    diag["min_sym_eig"] = min_sym_eig(GLK)
    diag["definite"] = diag["min_sym_eig"] >= alpha
    return K, diag


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    threshold: float | None
    grid: dict
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst": self.worst,
            "threshold": self.threshold,
            "grid": self.grid,
            "note": self.note,
        }


@dataclass
class AssumptionReport:
    r: int
    q: int | None
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "q": self.q,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def _grid_info(grid: np.ndarray) -> dict:
    spacing = float(grid[1] - grid[0]) if grid.size > 1 else 0.0
    return {"start": float(grid[0]), "stop": float(grid[-1]), "points": int(grid.size), "spacing": spacing}


def _decay_rate(Qfun, grid: np.ndarray) -> float:
    """Fitted exponential rate of the transition matrix of ``eta' = Q(t) eta``."""
    from .ode import integrate_dp45

    k = Qfun(grid[0]).shape[0]
    worst = -np.inf
    for j in range(k):
        eta0 = np.zeros(k)
        eta0[j] = 1.0
        _, Y = integrate_dp45(lambda t, y: Qfun(t) @ y, grid[0], eta0, grid[-1], rtol=1e-8,
                              atol=1e-14, t_eval=grid)
        logs = np.log(np.maximum(np.linalg.norm(Y, axis=1), 1e-300))
        slope = np.polyfit(grid - grid[0], logs, 1)[0]
        worst = max(worst, float(slope))
    return worst


def check_assumptions(plant: Plant, r: int | None, grid: Sequence[float], tol: float = DEFAULT_RANK_TOL,
                      alpha: float = DEFAULT_ALPHA, weight_method: str = "gamma_transpose",
                      weight_matrix=None) -> AssumptionReport:
    """Evaluate the structural assumptions on a finite time grid.

    Boundedness over the whole time axis cannot be checked numerically; all
    checks only cover ``grid`` and the report records it.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise NormalFormError("empty time grid")
    info = _grid_info(grid)
    checks = []
    p = plant.p

    ranks = [rank_of(plant.B @ reliability_value(plant, t), tol) for t in grid]
    q = ranks[0]
    checks.append(Check(
        "P1_rank_q", passed=len(set(ranks)) == 1 and q >= p, worst=float(min(ranks)), threshold=float(p),
        grid=info, note=f"rank(B L(t)) = {sorted(set(ranks))}; q {'=' if q == p else '>'} p" if q >= p
        else f"rank(B L(t)) = {sorted(set(ranks))} < p",
    ))

    try:
        detected, _ = detect_relative_degree(plant, grid, tol)
    except NormalFormError as exc:
        detected = None
        rd_note = str(exc)
    else:
        rd_note = f"detected r = {detected}"
    if r is None:
        r = detected
    rd_ok = detected is not None and detected == r
    if rd_ok and plant.has_nonlinearity:
        # f = B g enters like B itself, so C A^k B must vanish, not only C A^k B L(t)
        CAk, bnorm = plant.C, max(np.linalg.norm(plant.B), 1e-300)
        for k in range(r - 1):
            if np.linalg.norm(CAk @ plant.B) > tol * max(np.linalg.norm(CAk) * bnorm, 1e-300):
                rd_ok = False
                rd_note += f"; actuator terms reach the output at derivative {k + 1} (C A^{k} B != 0)"
                break
            CAk = CAk @ plant.A
    checks.append(Check("P2_relative_degree_r", passed=rd_ok, worst=float(detected or 0), threshold=float(r or 0),
                        grid=info, note=rd_note))
    if r is None:
        return AssumptionReport(r=0, q=q, checks=checks)

    dets, Qs, c12, c13, c13_note = [], [], [], [], ""
    stacked_ok = True
    for t in grid:
        try:
            st = stacked_matrices(plant, t, r, tol=tol)
        except NormalFormError as exc:
            stacked_ok = False
            c13_note = str(exc)
            break
        dets.append(float(np.linalg.det(st.CB @ st.CB.T)))
        BL = plant.B @ reliability_value(plant, t)
        ok12, _ = _cond12(plant, st, BL, tol)
        c12.append(ok12)
        try:
            K, d = build_K(plant, t, weight_method, r=r, matrix=weight_matrix, tol=tol, alpha=alpha)
        except InfeasibleWeight as exc:
            c13.append(-np.inf)
            c13_note = str(exc)
        else:
            Nrow = st.V.T @ (np.eye(plant.n) - st.calB.value @ st.CB_pinv @ st.calC)
            NK = float(np.max(np.abs(Nrow @ BL @ K), initial=0.0))
            scale = max(1.0, float(np.max(np.abs(Nrow), initial=0.0)) * float(np.max(np.abs(BL))) * float(np.max(np.abs(K))))
            c13.append(d["min_sym_eig"] if NK <= STRUCTURE_TOL * scale else -np.inf)
            if NK > STRUCTURE_TOL * scale:
                c13_note = f"N K != 0 at t={t} (max |N K| = {NK:.3e})"
        if plant.n > p * r:
            nf = extract_blocks(plant, t, r, tol)
            Qs.append(nf.Q)

    if not stacked_ok:
        for name in ("P3_lyapunov", "P4_zero_dynamics", "cond12_K_existence", "cond13_weight_definiteness"):
            checks.append(Check(name, passed=False, worst=float("nan"), threshold=None, grid=info, note=c13_note))
        return AssumptionReport(r=r, q=q, checks=checks)

    min_det = min(dets)
    checks.append(Check("P3_lyapunov", passed=min_det >= alpha, worst=min_det, threshold=alpha, grid=info,
                        note="min det(calC calB (calC calB)^T) over grid; sufficient condition only"))

    if plant.n == p * r:
        checks.append(Check("P4_zero_dynamics", passed=True, worst=float("-inf"), threshold=0.0, grid=info,
                            note="no internal dynamics (n = p r)"))
    else:
        Qarr = np.array(Qs)
        variation = float(np.max(np.abs(Qarr - Qarr[0])))
        if variation < CONSTANT_Q_TOL:
            worst = float(np.max(np.linalg.eigvals(Qarr[0]).real))
            note = "Q constant on grid; max real part of spectrum"
        else:
            def Qfun(s):
                return extract_blocks(plant, s, r, tol).Q
            worst = _decay_rate(Qfun, grid)
            note = "heuristic: Q time-varying; fitted exponential decay rate of transition matrix"
        checks.append(Check("P4_zero_dynamics", passed=worst < 0, worst=worst, threshold=0.0, grid=info, note=note))

    checks.append(Check("cond12_K_existence", passed=all(c12), worst=float(sum(not c for c in c12)),
                        threshold=0.0, grid=info, note="number of grid points violating the range inclusion"))
    worst13 = min(c13)
    checks.append(Check("cond13_weight_definiteness", passed=worst13 >= alpha, worst=float(worst13),
                        threshold=alpha, grid=info,
                        note=c13_note or f"min eig of Gamma L K + (Gamma L K)^T, method {weight_method}"))
    return AssumptionReport(r=r, q=q, checks=checks)
