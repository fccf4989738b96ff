"""Closed loop of plant and funnel controller, integrated in original coordinates.

Output derivatives are taken from the state: under the relative-degree
assumption ``y^(k) = C A^k x`` for ``k < r``.  The normal-form transformation
is therefore an analysis tool only and is never inverted in the loop.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .controller import FUNNEL_GUARD, CascadeState, FunnelViolation, cascade, feedback
from .normalform import build_K
from .ode import IntegrationStalled, integrate_dp45
from .plant import Plant, effective_action, plant_rhs

__all__ = ["ClosedLoop", "Trace", "output_jet", "closed_loop_rhs", "integrate", "IntegrationStalled"]


def output_jet(plant: Plant, r: int, x: np.ndarray, yref_jet: np.ndarray, CAk: np.ndarray | None = None) -> np.ndarray:
    """Coefficients ``C A^k x - y_ref^(k)`` for ``k = 0..r-1``, shape ``(r, p)``."""
    if CAk is None:
        CAk = _output_maps(plant, r)
    return CAk @ x - np.asarray(yref_jet)[:r]


def _output_maps(plant: Plant, r: int) -> np.ndarray:
    maps, M = [], plant.C
    for _ in range(r):
        maps.append(M)
        M = M @ plant.A
    return np.array(maps)


class ClosedLoop:
    """Precomputed closed-loop vector field for one scenario."""

    def __init__(self, scenario, kernel=None, guard: float = FUNNEL_GUARD):
        self.scenario = scenario
        self.plant = scenario.plant
        self.r = scenario.r
        self.funnels = tuple(scenario.funnels)
        self.reference = scenario.reference
        self.kernel = kernel
        self.guard = guard
        self.CAk = _output_maps(self.plant, self.r)
        w = scenario.weight
        self._K_const = None
        if w.method != "pinv_formula":
            self._K_const, _ = build_K(self.plant, 0.0, w.method, r=self.r, matrix=w.matrix)

    def weight(self, t: float) -> np.ndarray:
        if self._K_const is not None:
            return self._K_const
        K, _ = build_K(self.plant, t, "pinv_formula", r=self.r)
        return K

    def state(self, t: float, x: np.ndarray):
        """``(x', CascadeState)`` at ``(t, x)``."""
        e0 = output_jet(self.plant, self.r, x, self.reference.jet(t, self.r - 1), self.CAk)
        st = cascade(e0, self.funnels, t, self.guard, self.kernel)
        u = feedback(self.weight(t), st)
        return plant_rhs(self.plant, t, x, u), st

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.state(t, x)[0]


def closed_loop_rhs(scenario, t: float, x) -> tuple[np.ndarray, CascadeState]:
    return ClosedLoop(scenario).state(t, np.asarray(x, dtype=float))


@dataclass
class Trace:
    t: np.ndarray
    y: np.ndarray
    yref: np.ndarray
    e: np.ndarray       # (N, r, p)
    enorm: np.ndarray   # (N, r)
    margin: np.ndarray  # (N, r)
    k: np.ndarray       # (N, r)
    u: np.ndarray
    ueff: np.ndarray
    x: np.ndarray

    @property
    def r(self) -> int:
        return self.k.shape[1]

    def columns(self) -> list[str]:
        p, m, n = self.y.shape[1], self.u.shape[1], self.x.shape[1]
        cols = ["t"] + [f"y_{i + 1}" for i in range(p)] + [f"yref_{i + 1}" for i in range(p)]
        for i in range(self.r):
            cols += [f"enorm_{i}", f"margin_{i}", f"k_{i}"]
        cols += [f"u_{i + 1}" for i in range(m)] + [f"ueff_{i + 1}" for i in range(m)]
        cols += [f"x_{i + 1}" for i in range(n)]
        return cols

    def table(self) -> np.ndarray:
        per_level = np.stack([self.enorm, self.margin, self.k], axis=2).reshape(len(self.t), -1)
        return np.column_stack([self.t, self.y, self.yref, per_level, self.u, self.ueff, self.x])

    def to_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.table(), delimiter=",", fmt="%.17g", header=",".join(self.columns()), comments="")
        return buf.getvalue()


class _Recorder:
    def __init__(self, loop: ClosedLoop, n_samples: int):
        pl = loop.plant
        r, p = loop.r, pl.p
        self.loop = loop
        self.rows = 0
        self.t = np.empty(n_samples)
        self.y = np.empty((n_samples, p))
        self.yref = np.empty((n_samples, p))
        self.e = np.empty((n_samples, r, p))
        self.margin = np.empty((n_samples, r))
        self.k = np.empty((n_samples, r))
        self.u = np.empty((n_samples, pl.m))
        self.ueff = np.empty((n_samples, pl.m))
        self.x = np.empty((n_samples, pl.n))

    def __call__(self, t: float, x: np.ndarray) -> None:
        loop, i = self.loop, self.rows
        _, st = loop.state(t, x)
        self.t[i] = t
        self.x[i] = x
        self.y[i] = loop.plant.C @ x
        self.yref[i] = loop.reference.jet(t, 0)[0]
        self.e[i] = st.e_values
        self.margin[i] = st.margins
        self.k[i] = st.gains
        self.u[i] = st.u
        self.ueff[i] = effective_action(loop.plant, t, st.u)
        self.rows += 1

    def trace(self) -> Trace:
        s = slice(0, self.rows)
        return Trace(
            t=self.t[s], y=self.y[s], yref=self.yref[s], e=self.e[s],
            enorm=np.linalg.norm(self.e[s], axis=2), margin=self.margin[s], k=self.k[s],
            u=self.u[s], ueff=self.ueff[s], x=self.x[s],
        )


def integrate(scenario, kernel=None, h_min: float = 1e-12) -> Trace:
    """Run the closed loop over ``[0, t_end]`` and sample it every ``output_dt``.

    On :class:`FunnelViolation` or :class:`IntegrationStalled` the partial
    trace up to the last good sample is attached to the exception as
    ``trace``.
    """
    loop = ClosedLoop(scenario, kernel=kernel)
    times = scenario.output_times
    rec = _Recorder(loop, times.size)
    try:
        integrate_dp45(
            loop, 0.0, scenario.plant.x0, float(times[-1]), rtol=scenario.sim.rtol, atol=scenario.sim.atol,
            t_eval=times, h_min=h_min, reject_on=(FunnelViolation,), on_sample=rec,
        )
    except (FunnelViolation, IntegrationStalled) as exc:
        exc.trace = rec.trace()
        raise
    return rec.trace()
