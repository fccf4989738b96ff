"""Uncertain linear plant with actuator reliability profiles and faults.

The plant is ``x' = A x + B L(t) u + f(t, x, u)`` with a diagonal reliability
matrix ``L(t) = diag(l_1(t), ..., l_m(t))`` and a structured nonlinearity
``f(t, x, u) = B g(t, u)`` built from per-actuator fault primitives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .numkit import (
    MAX_SPECIAL_ORDER,
    Jet,
    chain_affine,
    erf_jet,
    erfc_jet,
    jet_mul,
    jet_recip,
)

__all__ = [
    "FaultProfile",
    "ActuatorNonlinearity",
    "Plant",
    "PlantError",
    "reliability_jet",
    "nonlinearity_eval",
    "plant_rhs",
]

PROFILE_KINDS = ("constant", "erfc_decay", "erfc_cutoff", "erf_onset", "lorentzian", "product")
NONLINEARITY_KINDS = ("none", "saturation", "bias", "stuck", "gated_saturation")


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class FaultProfile:
    """Smooth scalar profile with values in [0, 1].

    kinds
      constant      ``level``
      erfc_decay    ``sum_j level_j * erfc(slope_j * (t - center_j))``
      erfc_cutoff   ``0.5 * erfc(slope * (t - center))``, a total fault at ``center``
      erf_onset     ``sum_j level_j * (1 + erf(slope_j * (t - center_j)))``
      lorentzian    ``1 / (1 + (slope * (t - center))**2)``
      product       product of ``factors``
    """

    kind: str = "constant"
    level: float = 1.0
    center: float = 0.0
    slope: float = 1.0
    terms: tuple = ()
    factors: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise PlantError(f"unknown fault profile kind {self.kind!r}")
        object.__setattr__(self, "terms", tuple(tuple(map(float, t)) for t in self.terms))
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.kind == "constant" and not 0.0 <= self.level <= 1.0:
            raise PlantError(f"constant level {self.level} outside [0, 1]")
        if self.kind in ("erfc_decay", "erf_onset"):
            if not self.terms:
                raise PlantError(f"{self.kind} profile needs at least one term")
            levels = [t[0] for t in self.terms]
            if min(levels) < 0 or 2.0 * sum(levels) > 1.0 + 1e-12:
                raise PlantError(f"{self.kind} levels {levels} can leave [0, 1]")
        if self.kind == "product" and not self.factors:
            raise PlantError("product profile needs factors")

    @classmethod
    def constant(cls, level: float = 1.0) -> "FaultProfile":
        return cls("constant", level=level)

    @classmethod
    def erfc_decay(cls, terms: Sequence[tuple]) -> "FaultProfile":
        """``terms`` are ``(level, center, slope)`` triples."""
        return cls("erfc_decay", terms=tuple(terms))

    @classmethod
    def erfc_cutoff(cls, center: float, slope: float) -> "FaultProfile":
        return cls("erfc_cutoff", center=center, slope=slope)

    @classmethod
    def erf_onset(cls, terms: Sequence[tuple]) -> "FaultProfile":
        return cls("erf_onset", terms=tuple(terms))

    @classmethod
    def lorentzian(cls, center: float = 0.0, slope: float = 1.0) -> "FaultProfile":
        return cls("lorentzian", center=center, slope=slope)

    @classmethod
    def product(cls, factors: Sequence["FaultProfile"]) -> "FaultProfile":
        return cls("product", factors=tuple(factors))

    def value(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return self.level
        if k == "erfc_decay":
            return sum(lv * special.erfc(s * (t - c)) for lv, c, s in self.terms)
        if k == "erfc_cutoff":
            return 0.5 * special.erfc(self.slope * (t - self.center))
        if k == "erf_onset":
            return sum(lv * (1.0 + special.erf(s * (t - c))) for lv, c, s in self.terms)
        if k == "lorentzian":
            z = self.slope * (t - self.center)
            return 1.0 / (1.0 + z * z)
        v = 1.0
        for f in self.factors:
            v *= f.value(t)
        return v

    def jet(self, t: float, order: int) -> Jet:
        k = self.kind
        if k == "constant":
            return Jet.constant(self.level, order)
        if k == "erfc_decay":
            out = Jet.constant(0.0, order)
            for lv, c, s in self.terms:
                out = out + chain_affine(erfc_jet(s * (t - c), order), s).scale(lv)
            return out
        if k == "erfc_cutoff":
            s = self.slope
            return chain_affine(erfc_jet(s * (t - self.center), order), s).scale(0.5)
        if k == "erf_onset":
            out = Jet.constant(0.0, order)
            for lv, c, s in self.terms:
                out = out + (chain_affine(erf_jet(s * (t - c), order), s) + 1.0).scale(lv)
            return out
        if k == "lorentzian":
            s, d = self.slope, t - self.center
            # 1 + s^2 (t - c)^2 as a polynomial jet
            poly = np.zeros(order + 1)
            poly[0] = 1.0 + s * s * d * d
            if order >= 1:
                poly[1] = 2.0 * s * s * d
            if order >= 2:
                poly[2] = 2.0 * s * s
            return jet_recip(Jet(poly))
        out = Jet.constant(1.0, order)
        for f in self.factors:
            out = jet_mul(out, f.jet(t, order))
        return out

    def to_dict(self) -> dict:
        k = self.kind
        if k == "constant":
            return {"kind": k, "level": self.level}
        if k in ("erfc_decay", "erf_onset"):
            return {
                "kind": k,
                "terms": [{"level": lv, "center": c, "slope": s} for lv, c, s in self.terms],
            }
        if k in ("erfc_cutoff", "lorentzian"):
            return {"kind": k, "center": self.center, "slope": self.slope}
        return {"kind": k, "factors": [f.to_dict() for f in self.factors]}

    @classmethod
    def from_dict(cls, d: dict) -> "FaultProfile":
        k = d["kind"]
        if k == "constant":
            return cls.constant(d.get("level", 1.0))
        if k in ("erfc_decay", "erf_onset"):
            terms = [(t["level"], t["center"], t["slope"]) for t in d["terms"]]
            return cls(k, terms=tuple(terms))
        if k in ("erfc_cutoff", "lorentzian"):
            return cls(k, center=d.get("center", 0.0), slope=d.get("slope", 1.0))
        if k == "product":
            return cls.product([cls.from_dict(f) for f in d["factors"]])
        raise PlantError(f"unknown fault profile kind {k!r}")


def _sat(v: float, threshold: float) -> float:
    return float(np.clip(v, -threshold, threshold))


@dataclass(frozen=True)
class ActuatorNonlinearity:
    """Bounded per-actuator term ``g_i(t, u_i)``.

    kinds
      none               0
      saturation         ``sat(u) + bias``, ``sat`` clips at ``threshold``
      bias               constant ``bias``
      stuck              constant ``value`` (pair with a zero reliability profile)
      gated_saturation   ``gate(t) * sat(u)``
    """

    kind: str = "none"
    threshold: float = 1.0
    bias: float = 0.0
    value: float = 0.0
    gate: FaultProfile | None = None

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise PlantError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind in ("saturation", "gated_saturation") and self.threshold <= 0:
            raise PlantError("saturation threshold must be positive")
        if self.kind == "gated_saturation" and self.gate is None:
            raise PlantError("gated_saturation needs a gate profile")

    def __call__(self, t: float, u: float) -> float:
        k = self.kind
        if k == "none":
            return 0.0
        if k == "saturation":
            return _sat(u, self.threshold) + self.bias
        if k == "bias":
            return self.bias
        if k == "stuck":
            return self.value
        return self.gate.value(t) * _sat(u, self.threshold)

    def bound(self) -> float:
        """Upper bound of ``|g(t, u)|`` over all ``t, u``."""
        k = self.kind
        if k == "none":
            return 0.0
        if k == "saturation":
            return self.threshold + abs(self.bias)
        if k == "bias":
            return abs(self.bias)
        if k == "stuck":
            return abs(self.value)
        return self.threshold

    def saturating(self, t: float, u: float) -> bool:
        if self.kind == "saturation":
            return abs(u) >= self.threshold
        if self.kind == "gated_saturation":
            return abs(u) >= self.threshold and self.gate.value(t) >= 0.5 * _gate_sup(self.gate)
        return False

    def to_dict(self) -> dict:
        k = self.kind
        if k == "none":
            return {"kind": k}
        if k == "saturation":
            return {"kind": k, "threshold": self.threshold, "bias": self.bias}
        if k == "bias":
            return {"kind": k, "bias": self.bias}
        if k == "stuck":
            return {"kind": k, "value": self.value}
        return {"kind": k, "threshold": self.threshold, "gate": self.gate.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ActuatorNonlinearity":
        k = d.get("kind", "none")
        gate = d.get("gate")
        return cls(
            kind=k,
            threshold=d.get("threshold", 1.0),
            bias=d.get("bias", 0.0),
            value=d.get("value", 0.0),
            gate=FaultProfile.from_dict(gate) if gate is not None else None,
        )


def _gate_sup(gate: FaultProfile) -> float:
    if gate.kind == "erf_onset":
        return 2.0 * sum(t[0] for t in gate.terms)
    return 1.0


@dataclass(frozen=True)
class Plant:
    """``x' = A x + B L(t) u + B g(t, u)``, ``y = C x``.

    ``reliability`` is either a list of ``m`` :class:`FaultProfile` (diagonal
    ``L``) or a callable ``(t, order) -> Jet`` of ``m x m`` matrices.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    reliability: Sequence[FaultProfile] | Callable[[float, int], Jet] | None = None
    nonlinearity: Sequence[ActuatorNonlinearity] | None = None
    x0: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise PlantError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise PlantError(f"B has {B.shape[0]} rows, expected n={n}")
        if C.shape[1] != n:
            raise PlantError(f"C has {C.shape[1]} columns, expected n={n}")
        m, p = B.shape[1], C.shape[0]
        if m < p:
            raise PlantError(f"need m >= p, got m={m}, p={p}")
        for M, name in ((A, "A"), (B, "B"), (C, "C")):
            if not np.all(np.isfinite(M)):
                raise PlantError(f"{name} has non-finite entries")
        rel = self.reliability
        if rel is None:
            rel = tuple(FaultProfile.constant(1.0) for _ in range(m))
        elif not callable(rel):
            rel = tuple(rel)
            if len(rel) != m:
                raise PlantError(f"{len(rel)} reliability profiles for m={m} actuators")
        nl = self.nonlinearity
        if nl is None:
            nl = tuple(ActuatorNonlinearity() for _ in range(m))
        else:
            nl = tuple(nl)
            if len(nl) != m:
                raise PlantError(f"{len(nl)} nonlinearities for m={m} actuators")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise PlantError(f"x0 has length {x0.size}, expected {n}")
        for name, val in (("A", A), ("B", B), ("C", C), ("reliability", rel), ("nonlinearity", nl), ("x0", x0)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def diagonal_reliability(self) -> bool:
        return not callable(self.reliability)

    @property
    def has_nonlinearity(self) -> bool:
        return any(g.kind != "none" for g in self.nonlinearity)

    def reliability_diag(self, t: float) -> np.ndarray:
        """Values ``l_i(t)``; only for diagonal reliability."""
        return np.array([prof.value(t) for prof in self.reliability])


def reliability_jet(plant: Plant, t: float, order: int) -> Jet:
    """Jet of ``L(t)`` as ``m x m`` matrices."""
    if order > MAX_SPECIAL_ORDER:
        raise PlantError(f"reliability jets support order <= {MAX_SPECIAL_ORDER}")
    if not plant.diagonal_reliability:
        return plant.reliability(t, order)
    diag = np.array([prof.jet(t, order).coeffs for prof in plant.reliability])  # (m, order+1)
    c = np.zeros((order + 1, plant.m, plant.m))
    idx = np.arange(plant.m)
    c[:, idx, idx] = diag.T
    return Jet(c)


def reliability_value(plant: Plant, t: float) -> np.ndarray:
    if plant.diagonal_reliability:
        return np.diag(plant.reliability_diag(t))
    return plant.reliability(t, 0).value


def actuator_terms(plant: Plant, t: float, u: np.ndarray) -> np.ndarray:
    return np.array([g(t, ui) for g, ui in zip(plant.nonlinearity, u)])


def nonlinearity_eval(plant: Plant, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``f(t, x, u) = B g(t, u)``; zero when no actuator carries a fault term."""
    u = np.asarray(u, dtype=float)
    if u.shape != (plant.m,):
        raise PlantError(f"input has shape {u.shape}, expected ({plant.m},)")
    if not plant.has_nonlinearity:
        return np.zeros(plant.n)
    return plant.B @ actuator_terms(plant, t, u)


def effective_action(plant: Plant, t: float, u: np.ndarray) -> np.ndarray:
    """Per-actuator action ``l_i(t) u_i + g_i(t, u_i)`` (diagonal reliability)."""
    u = np.asarray(u, dtype=float)
    if plant.diagonal_reliability:
        lu = plant.reliability_diag(t) * u
    else:
        lu = reliability_value(plant, t) @ u
    return lu + actuator_terms(plant, t, u)


def plant_rhs(plant: Plant, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (plant.n,):
        raise PlantError(f"state has shape {x.shape}, expected ({plant.n},)")
    if u.shape != (plant.m,):
        raise PlantError(f"input has shape {u.shape}, expected ({plant.m},)")
    return plant.A @ x + plant.B @ effective_action(plant, t, u)
