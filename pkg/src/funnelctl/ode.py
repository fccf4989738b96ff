"""Dormand-Prince 5(4) integrator with PI step control and dense output.

Stage evaluations may raise one of ``reject_on`` (the closed loop raises
:class:`~funnelctl.controller.FunnelViolation` outside the funnel); the step is
then rejected and halved.
"""

from __future__ import annotations

import numpy as np

__all__ = ["IntegrationStalled", "integrate_dp45", "rk4_fixed", "DP_A", "DP_B", "DP_C", "DP_E", "DP_P"]

DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A_ROWS = [np.array(row) for row in DP_A]
DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# 5th minus embedded 4th order weights
DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension, y(t + s h) = y + h K^T P [s, s^2, s^3, s^4]
DP_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
PI_BETA = 0.04
EXPO1 = 0.2 - PI_BETA * 0.75


class IntegrationStalled(RuntimeError):
    def __init__(self, t: float, y: np.ndarray, h: float, cause: BaseException | None = None):
        self.t = t
        self.y = y
        self.h = h
        self.cause = cause
        msg = f"integration stalled at t={t:.12g} (step {h:.3e})"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(fun, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    try:
        f1 = fun(t0 + h0, y0 + h0 * f0)
    except Exception:
        return h0 * 1e-3
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_dp45(fun, t0: float, y0, t_end: float, rtol: float = 1e-10, atol: float = 1e-12,
                   t_eval=None, h0: float | None = None, h_min: float = 1e-12, reject_on=(),
                   on_sample=None, max_steps: int = 10_000_000):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    Returns ``(t_eval, Y)``; ``Y[i]`` is the dense-output state at
    ``t_eval[i]``.  ``on_sample(t, y)`` is called for each sample as soon as
    it is available.  Raises :class:`IntegrationStalled` when the step falls
    below ``h_min``; if the last rejection came from ``reject_on`` that
    exception is re-raised instead, with ``last_t``/``last_y`` attached.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    t_end = float(t_end)
    t_eval = np.array([t_end] if t_eval is None else t_eval, dtype=float)
    out = np.empty((t_eval.size, y.size))
    reject_on = tuple(reject_on)

    f = fun(t, y)  # a violation at the initial point propagates untouched
    span = t_end - t
    h = h0 if h0 is not None else _initial_step(fun, t, y, f, rtol, atol, span)
    facold = 1e-4
    k_idx = 0
    while k_idx < t_eval.size and t_eval[k_idx] <= t:
        out[k_idx] = y
        if on_sample is not None:
            on_sample(t_eval[k_idx], y)
        k_idx += 1

    K = np.empty((7, y.size))
    steps = 0
    last_failure = None
    while t < t_end and steps < max_steps:
        if h < h_min:
            if last_failure is not None:
                last_failure.last_t, last_failure.last_y = t, y.copy()
                raise last_failure
            raise IntegrationStalled(t, y.copy(), h)
        if t + h > t_end or t + 1.1 * h >= t_end:
            h = t_end - t
        K[0] = f
        try:
            for s in range(1, 7):
                ys = y + h * (_A_ROWS[s] @ K[:s])
                K[s] = fun(t + DP_C[s] * h, ys)
        except reject_on as exc:
            last_failure = exc
            h *= 0.5
            continue
        y_new = y + h * (DP_B[:6] @ K[:6])
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(h * (DP_E @ K) / scale)
        if not np.isfinite(err):
            h *= 0.5
            continue
        fac11 = err ** EXPO1 if err > 0 else 0.0
        if err <= 1.0:
            fac = fac11 / facold ** PI_BETA
            fac = min(1.0 / FAC_MIN, max(1.0 / FAC_MAX, fac / SAFETY))
            t_new = t + h
            Qd = K.T @ DP_P
            while k_idx < t_eval.size and t_eval[k_idx] <= t_new:
                sfrac = (t_eval[k_idx] - t) / h
                out[k_idx] = y + h * (Qd @ (sfrac ** np.arange(1, 5)))
                if on_sample is not None:
                    on_sample(t_eval[k_idx], out[k_idx])
                k_idx += 1
            t, y, f = t_new, y_new, K[6].copy()
            facold = max(err, 1e-4)
            last_failure = None
            steps += 1
            h = h / fac
        else:
            h = h / min(1.0 / FAC_MIN, fac11 / SAFETY)
    if t < t_end:
        raise IntegrationStalled(t, y.copy(), h)
    return t_eval, out


def rk4_fixed(fun, t0: float, y0, t_end: float, h: float) -> np.ndarray:
    """Classical RK4 with a fixed step; ``(t_end - t0) / h`` must be an integer."""
    nsteps = int(round((t_end - t0) / h))
    if not np.isclose(nsteps * h, t_end - t0, rtol=1e-12, atol=1e-14):
        raise ValueError("step does not divide the interval")
    y = np.array(y0, dtype=float)
    t = float(t0)
    for i in range(nsteps):
        t = t0 + i * h
        k1 = fun(t, y)
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
