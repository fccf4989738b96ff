"""Declarative closed-loop experiments: JSON loading, validation, built-ins."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from .controller import FunnelSpec
from .normalform import detect_relative_degree
from .plant import ActuatorNonlinearity, FaultProfile, Plant, PlantError

__all__ = [
    "ScenarioError",
    "Reference",
    "WeightSpec",
    "SimSettings",
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "boeing737",
    "SCHEMA",
]

BUILTINS = ("boeing737",)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Reference:
    """Reference signal with derivatives.

    ``sinusoid``: channel ``i`` is ``amplitude[i] sin(omega[i] t + phase[i]) + offset[i]``.
    ``custom``: ``jet_fn(t, order)`` returns an ``(order + 1, p)`` array.
    """

    kind: str = "sinusoid"
    amplitude: tuple = ()
    omega: tuple = ()
    phase: tuple = ()
    offset: tuple = ()
    jet_fn: Callable | None = None

    def __post_init__(self):
        if self.kind == "sinusoid":
            p = len(self.amplitude)
            for name in ("omega", "phase", "offset"):
                val = getattr(self, name)
                val = tuple(float(v) for v in val) if val else (1.0 if name == "omega" else 0.0,) * p
                if len(val) != p:
                    raise ScenarioError(f"reference.{name} has length {len(val)}, expected {p}")
                object.__setattr__(self, name, val)
            object.__setattr__(self, "amplitude", tuple(float(a) for a in self.amplitude))
        elif self.kind != "custom" or self.jet_fn is None:
            raise ScenarioError(f"reference kind {self.kind!r} needs amplitude (sinusoid) or jet_fn (custom)")

    @property
    def p(self) -> int:
        return len(self.amplitude) if self.kind == "sinusoid" else self.jet_fn(0.0, 0).shape[1]

    def jet(self, t: float, order: int) -> np.ndarray:
        if self.kind == "custom":
            return np.asarray(self.jet_fn(t, order), dtype=float)[: order + 1]
        amp = np.array(self.amplitude)
        w = np.array(self.omega)
        arg = w * t + np.array(self.phase)
        k = np.arange(order + 1)[:, None]
        out = amp * w ** k * np.sin(arg + k * (np.pi / 2))
        out[0] += np.array(self.offset)
        return out

    def to_dict(self) -> dict:
        if self.kind != "sinusoid":
            raise ScenarioError("custom references are not serialisable")
        return {
            "kind": "sinusoid",
            "amplitude": list(self.amplitude),
            "omega": list(self.omega),
            "phase": list(self.phase),
            "offset": list(self.offset),
        }


@dataclass(frozen=True)
class WeightSpec:
    method: str = "gamma_transpose"
    matrix: tuple | None = None

    def to_dict(self) -> dict:
        d = {"method": self.method}
        if self.matrix is not None:
            d["matrix"] = [list(row) for row in self.matrix]
        return d


@dataclass(frozen=True)
class SimSettings:
    t_end: float = 10.0
    rtol: float = 1e-10
    atol: float = 1e-12
    output_dt: float = 0.01
    check_grid_points: int = 201
    alpha: float = 1e-6
    override_checks: bool = False

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: Plant
    reference: Reference
    funnels: tuple
    weight: WeightSpec = field(default_factory=WeightSpec)
    sim: SimSettings = field(default_factory=SimSettings)
    relative_degree: int | None = None
    expectations: tuple = ()

    @property
    def check_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.sim.t_end, self.sim.check_grid_points)

    @property
    def r(self) -> int:
        if self.relative_degree is not None:
            return self.relative_degree
        r, _ = detect_relative_degree(self.plant, self.check_grid)
        return r

    @property
    def output_times(self) -> np.ndarray:
        n = int(round(self.sim.t_end / self.sim.output_dt))
        return np.linspace(0.0, n * self.sim.output_dt, n + 1)

    def with_sim(self, **changes) -> "Scenario":
        return replace(self, sim=replace(self.sim, **changes))

    def to_dict(self) -> dict:
        pl = self.plant
        d = {
            "name": self.name,
            "system": {
                "n": pl.n, "m": pl.m, "p": pl.p,
                "A": pl.A.tolist(), "B": pl.B.tolist(), "C": pl.C.tolist(),
            },
            "x0": pl.x0.tolist(),
            "reliability": [prof.to_dict() for prof in pl.reliability],
            "nonlinearity": [g.to_dict() for g in pl.nonlinearity],
            "reference": self.reference.to_dict(),
            "funnels": [f.to_dict() for f in self.funnels],
            "weight": self.weight.to_dict(),
            "sim": self.sim.to_dict(),
        }
        if self.relative_degree is not None:
            d["relative_degree"] = self.relative_degree
        if self.expectations:
            d["expectations"] = [dict(e) for e in self.expectations]
        return d


def _load_schema() -> dict:
    return json.loads(resources.files("funnelctl").joinpath("scenario.schema.json").read_text())


SCHEMA = _load_schema()


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _dims(name: str, arr, expected: tuple) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.shape != expected:
        raise ScenarioError(f"{name}: expected shape {expected}, got {a.shape}")
    return a


def scenario_from_dict(d: dict) -> Scenario:
    """Validate a scenario document and build a :class:`Scenario`."""
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError("; ".join(f"{_path(e)}: {e.message}" for e in errors))
    sysd = d["system"]
    n, m, p = sysd["n"], sysd["m"], sysd["p"]
    A = _dims("system/A", sysd["A"], (n, n))
    B = _dims("system/B", sysd["B"], (n, m))
    C = _dims("system/C", sysd["C"], (p, n))
    x0 = _dims("x0", d.get("x0", [0.0] * n), (n,))
    rel = d.get("reliability")
    if rel is not None and len(rel) != m:
        raise ScenarioError(f"reliability: expected {m} profiles, got {len(rel)}")
    nl = d.get("nonlinearity")
    if nl is not None and len(nl) != m:
        raise ScenarioError(f"nonlinearity: expected {m} descriptors, got {len(nl)}")
    try:
        plant = Plant(
            A, B, C,
            reliability=[FaultProfile.from_dict(x) for x in rel] if rel is not None else None,
            nonlinearity=[ActuatorNonlinearity.from_dict(x) for x in nl] if nl is not None else None,
            x0=x0,
        )
        funnels = tuple(FunnelSpec.from_dict(f) for f in d["funnels"])
    except (PlantError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    refd = d["reference"]
    reference = Reference(
        kind="sinusoid",
        amplitude=tuple(refd["amplitude"]),
        omega=tuple(refd.get("omega", ())),
        phase=tuple(refd.get("phase", ())),
        offset=tuple(refd.get("offset", ())),
    )
    if reference.p != p:
        raise ScenarioError(f"reference: expected {p} channels, got {reference.p}")
    wd = d.get("weight", {"method": "gamma_transpose"})
    matrix = wd.get("matrix")
    if wd["method"] == "explicit":
        if matrix is None:
            raise ScenarioError("weight/matrix: required for method 'explicit'")
        _dims("weight/matrix", matrix, (m, p))
    weight = WeightSpec(wd["method"], tuple(tuple(map(float, row)) for row in matrix) if matrix else None)
    sim = SimSettings(**d.get("sim", {}))
    if sim.t_end <= 0 or sim.output_dt <= 0 or sim.check_grid_points < 1:
        raise ScenarioError("sim: t_end, output_dt and check_grid_points must be positive")
    expectations = tuple(d.get("expectations", ()))
    for i, e in enumerate(expectations):
        if not 0 <= e["actuator"] < m:
            raise ScenarioError(f"expectations/{i}/actuator: index {e['actuator']} not < m={m}")
    scen = Scenario(
        name=d.get("name", "scenario"), plant=plant, reference=reference, funnels=funnels,
        weight=weight, sim=sim, relative_degree=d.get("relative_degree"), expectations=expectations,
    )
    try:
        r = scen.r
    except ValueError as exc:
        raise ScenarioError(f"relative_degree: {exc}") from exc
    if len(funnels) != r:
        raise ScenarioError(f"funnels: expected {r} funnel functions (relative degree), got {len(funnels)}")
    return scen


def load_scenario(path) -> Scenario:
    """Load a scenario file; the reserved name ``boeing737`` gives the built-in one."""
    if str(path) in BUILTINS:
        return boeing737()
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: invalid JSON ({exc})") from exc
    return scenario_from_dict(doc)


BOEING_A = [
    [-0.13858, 14.326, -219.04, 32.167, 0.0],
    [-0.02073, -2.1692, 0.91315, 0.000256, 0.0],
    [0.00289, -0.16444, -0.15768, -0.00489, 0.0],
    [0.0, 1.0, 0.00618, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
]
BOEING_B = [
    [0.15935, 0.15935, 0.00211, 0.00211],
    [0.01264, 0.01264, 0.21326, 0.21326],
    [-0.12879, -0.12879, 0.00171, 0.00171],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
]
BOEING_C = [[0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]]


def boeing737_dict() -> dict:
    """Lateral-motion Boeing 737 model with rudder and aileron faults."""
    return {
        "name": "boeing737",
        "system": {"n": 5, "m": 4, "p": 2, "A": BOEING_A, "B": BOEING_B, "C": BOEING_C},
        "x0": [0.0] * 5,
        "relative_degree": 2,
        "reliability": [
            {"kind": "constant", "level": 1.0},
            # efficiency decays to 50% around t=3, remaining half drops at t=6
            {"kind": "erfc_decay", "terms": [
                {"level": 0.25, "center": 3.0, "slope": 1.0},
                {"level": 0.25, "center": 6.0, "slope": 100.0},
            ]},
            {"kind": "constant", "level": 1.0},
            {"kind": "erfc_cutoff", "center": 7.0, "slope": 20.0},
        ],
        "nonlinearity": [
            {"kind": "none"},
            {"kind": "gated_saturation", "threshold": 1.0,
             "gate": {"kind": "erf_onset", "terms": [{"level": 0.25, "center": 6.0, "slope": 100.0}]}},
            {"kind": "none"},
            {"kind": "none"},
        ],
        "reference": {"kind": "sinusoid", "amplitude": [2.0, 1.0], "omega": [1.0, 1.0],
                      "phase": [0.0, float(np.pi / 2)], "offset": [0.0, 0.0]},
        "funnels": [
            {"kind": "exp_plus_const", "a": 5.0, "b": 1.0, "c": 0.1},
            {"kind": "exp_plus_const", "a": 2.5, "b": 0.5, "c": 0.1},
        ],
        "weight": {"method": "gamma_transpose"},
        "sim": {"t_end": 10.0, "rtol": 1e-10, "atol": 1e-12, "output_dt": 0.01, "check_grid_points": 201,
                "alpha": 1e-7},
        "expectations": [
            {"kind": "ueff_bound", "actuator": 1, "t_from": 6.05, "t_to": 10.0, "max_abs": 0.5 + 1e-3},
            {"kind": "ueff_reaches", "actuator": 1, "t_from": 7.0, "t_to": 9.0, "min_abs": 0.5 - 1e-3},
            {"kind": "ueff_below", "actuator": 3, "t_from": 7.2, "t_to": 10.0, "max_abs": 1e-3},
        ],
    }


def boeing737() -> Scenario:
    return scenario_from_dict(boeing737_dict())
