"""Funnel functions, the error/gain cascade and the weighted feedback law.

For relative degree ``r`` the controller forms

    e_0 = y - y_ref,   e_{i+1} = e_i' + k_i e_i,   k_i = 1 / (1 - phi_i^2 |e_i|^2)

and applies ``u = -k_{r-1} K e_{r-1}``.  The derivatives ``e_i'`` are resolved
by carrying jets of ``e_0`` through the recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .numkit import Jet, exp_jet, jet_recip

__all__ = [
    "FUNNEL_GUARD",
    "FunnelSpec",
    "FunnelViolation",
    "CascadeState",
    "funnel_jet",
    "cascade",
    "feedback",
]

FUNNEL_GUARD = 1e-12


class FunnelViolation(RuntimeError):
    """An error signal reached its funnel boundary."""

    def __init__(self, index: int, t: float, margin: float):
        self.index = index
        self.t = t
        self.margin = margin
        super().__init__(f"funnel {index} violated at t={t:.12g} (margin {margin:.15g})")


@dataclass(frozen=True)
class FunnelSpec:
    """Funnel function ``phi``; the funnel boundary is ``1/phi``.

    ``exp_plus_const``: ``phi(t) = 1 / (a exp(-b t) + c)``.
    ``custom``: ``jet_fn(t, order)`` returns a :class:`Jet`.
    """

    kind: str = "exp_plus_const"
    a: float = 0.0
    b: float = 0.0
    c: float = 1.0
    jet_fn: Callable[[float, int], Jet] | None = None
    smoothness: int = 6

    def __post_init__(self):
        if self.kind == "exp_plus_const":
            if self.a < 0 or self.b < 0 or self.c <= 0:
                raise ValueError(f"need a >= 0, b >= 0, c > 0; got a={self.a}, b={self.b}, c={self.c}")
        elif self.kind == "custom":
            if self.jet_fn is None:
                raise ValueError("custom funnel needs jet_fn")
        else:
            raise ValueError(f"unknown funnel kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind != "exp_plus_const":
            raise ValueError("custom funnels are not serialisable")
        return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "FunnelSpec":
        return cls(kind=d.get("kind", "exp_plus_const"), a=d.get("a", 0.0), b=d.get("b", 0.0), c=d["c"])


def funnel_jet(spec: FunnelSpec, t: float, order: int) -> Jet:
    if order > spec.smoothness:
        raise ValueError(f"funnel smooth only up to order {spec.smoothness}, asked {order}")
    if spec.kind == "exp_plus_const":
        width = exp_jet(t, -spec.b, order).scale(spec.a) + spec.c
        jet = jet_recip(width)
    else:
        jet = spec.jet_fn(t, order)
    if not jet.value > 0:
        raise ValueError(f"funnel function not positive at t={t}: {jet.value}")
    return jet


@dataclass
class CascadeState:
    """Controller internals at one time instant.

    ``e_values[i]`` is ``e_i``, ``gains[i]`` is ``k_i`` and ``margins[i]`` is
    ``phi_i |e_i|``.  ``u`` is filled in by :func:`feedback`.
    """

    e_values: np.ndarray
    gains: np.ndarray
    margins: np.ndarray
    phi: np.ndarray
    u: np.ndarray | None = None

    @property
    def r(self) -> int:
        return self.e_values.shape[0]


def _exp_funnel_coeffs(spec: FunnelSpec, t: float, order: int) -> list:
    # same recursion as jet_recip, without building Jet objects in the hot loop
    ex = spec.a * math.exp(-spec.b * t)
    w = [ex * (-spec.b) ** j for j in range(order + 1)]
    w[0] += spec.c
    out = [1.0 / w[0]]
    for j in range(1, order + 1):
        out.append(-sum(comb(j, l) * w[l] * out[j - l] for l in range(1, j + 1)) / w[0])
    return out


def _funnel_matrix(funnels: Sequence[FunnelSpec], t: float) -> np.ndarray:
    r = len(funnels)
    phi = np.zeros((r, r))
    for i, spec in enumerate(funnels):
        order = r - 1 - i
        if spec.kind == "exp_plus_const" and order <= spec.smoothness:
            phi[i, : r - i] = _exp_funnel_coeffs(spec, t, order)
        else:
            phi[i, : r - i] = funnel_jet(spec, t, order).coeffs
    return phi


def cascade(e0_jet, funnels: Sequence[FunnelSpec], t: float, guard: float = FUNNEL_GUARD,
            kernel=None) -> CascadeState:
    """Evaluate ``e_0..e_{r-1}`` and ``k_0..k_{r-1}`` at time ``t``.

    ``e0_jet`` holds ``e_0`` and at least its first ``r-1`` derivatives, as a
    :class:`Jet` or an array of shape ``(>= r, p)``.  Raises
    :class:`FunnelViolation` when any margin reaches ``1 - guard``.
    """
    coeffs = e0_jet.coeffs if isinstance(e0_jet, Jet) else np.asarray(e0_jet, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    r = len(funnels)
    if coeffs.shape[0] < r:
        raise ValueError(f"e_0 jet of order {coeffs.shape[0] - 1} too short for r={r}")
    coeffs = coeffs[:r]
    phi = _funnel_matrix(funnels, t)
    kern = kernel or _kernels.cascade_kernel
    e_values, gains, margins, bad = kern(coeffs, phi, guard)
    if bad >= 0:
        raise FunnelViolation(int(bad), t, float(margins[bad]))
    return CascadeState(np.asarray(e_values), np.asarray(gains), np.asarray(margins), phi)


def feedback(K: np.ndarray, state: CascadeState) -> np.ndarray:
    """``u = -k_{r-1} K e_{r-1}``; also stored on ``state``."""
    K = np.asarray(K, dtype=float)
    e_last = state.e_values[-1]
    if K.shape[1] != e_last.shape[0]:
        raise ValueError(f"weight matrix {K.shape} does not match error dimension {e_last.shape[0]}")
    u = -state.gains[-1] * (K @ e_last)
    state.u = u
    return u
