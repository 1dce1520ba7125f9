"""Scenario files: one JSON document wiring a benchmark to the synthesis and
supervisor settings.

Bundled scenarios live in ``chc/scenarios`` and are addressed by name
(``pendulum``, ``pendulum_desk``, ``threetank``, ``threetank_desk``); any other
argument is treated as a path.  Overrides (seed, amplitudes, budget, init,
des, noise seed) are applied on top of the loaded document.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from chc.benchmarks import (
    PendulumParams,
    ThreeTankParams,
    pendulum_gains,
    pendulum_model,
    threetank_hold,
    threetank_model,
)
from chc.dynamics import HybridSystemModel
from chc.errors import ScenarioParseError
from chc.graph import SymbolicInputFamily
from chc.supervisor import (
    ConstantHold,
    Controller,
    PendulumStabilizer,
    Stabilizer,
    SupervisorConfig,
    default_deltas,
)
from chc.synthesis import Synthesis, SynthesisOptions

log = logging.getLogger(__name__)

BUNDLED = ("pendulum", "pendulum_desk", "threetank", "threetank_desk")


@dataclass
class Scenario:
    name: str
    system: str
    model: HybridSystemModel
    family: SymbolicInputFamily
    options: SynthesisOptions
    init: np.ndarray
    des: np.ndarray
    supervisor: dict
    stabilizer: dict
    params: object
    document: dict = field(default_factory=dict)

    def make_stabilizer(self) -> Stabilizer:
        kind = self.stabilizer.get("kind")
        if kind == "pendulum":
            p = self.params
            if "k1" in self.stabilizer:
                k1, k2 = float(self.stabilizer["k1"]), float(self.stabilizer["k2"])
            else:
                k1, k2 = pendulum_gains(p, tuple(self.stabilizer.get("poles", (-4.0, -5.0))))
            return PendulumStabilizer(k1, k2, p.gravity_torque, p.c, p.torque_max, float(self.des[0]))
        if kind == "hold":
            if "u_c" in self.stabilizer:
                return ConstantHold(np.array(self.stabilizer["u_c"], dtype=float),
                                    tuple(self.stabilizer.get("u_b", ())))
            u, b = threetank_hold(self.params, self.des)
            return ConstantHold(u, b)
        raise ScenarioParseError(f"unknown stabilizer kind {kind!r}")

    def supervisor_config(self, synthesis: Synthesis) -> SupervisorConfig:
        s = self.supervisor
        d1, d2 = default_deltas(synthesis.partition, self.des)
        noise = s.get("noise_amplitude")
        return SupervisorConfig(
            delta1=float(s["delta1"]) if s.get("delta1") is not None else d1,
            delta2=float(s["delta2"]) if s.get("delta2") is not None else d2,
            sample_time=float(s["sample_time"]),
            max_steps=int(s.get("max_steps", 5000)),
            max_time=s.get("max_time"),
            noise_amplitude=None if noise is None else np.broadcast_to(
                np.asarray(noise, dtype=float), (self.model.n,)).copy(),
            noise_seed=int(s.get("noise_seed", 0)),
            capture_dwell=int(s.get("capture_dwell", 10)),
            t_fs_max=s.get("t_fs_max"),
            fs_linearization=s.get("fs_linearization", "state"),
        )

    def controller(self, synthesis: Synthesis) -> Controller:
        return Controller(self.model, synthesis.partition, synthesis.rs, self.family,
                          self.make_stabilizer(), self.supervisor_config(synthesis), self.des)


def _matrix(value, n: int) -> np.ndarray:
    """Accept a full matrix, a diagonal list or a scalar multiple of identity."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(n)
    if arr.ndim == 1:
        return np.diag(arr)
    return arr


def _vector(value) -> np.ndarray:
    return np.array([math.pi if v == "pi" else float(v) for v in value], dtype=float)


def scenario_from_dict(doc: dict, overrides: dict | None = None) -> Scenario:
    doc = copy.deepcopy(doc)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            doc["seed"] = list(value)
        elif key == "amplitudes":
            doc["family"]["amplitudes"] = [list(ch) for ch in value]
        elif key == "budget":
            doc["family"]["budget"] = int(value)
        elif key in ("init", "des"):
            doc[key] = list(value)
        elif key == "noise_seed":
            doc["supervisor"]["noise_seed"] = int(value)
        else:
            raise ScenarioParseError(f"unknown override {key!r}")
    try:
        system = doc["system"]
        if system == "pendulum":
            params = PendulumParams(**doc.get("params", {}))
            model = pendulum_model(params, tuple(doc.get("theta_dot_bounds", (-10.0, 10.0))))
        elif system == "threetank":
            params = ThreeTankParams(**doc.get("params", {}))
            if doc.get("area_unit", "m^3") != "m^2":
                log.warning("tank area is printed in m^3; it is used as an area in m^2")
            model = threetank_model(params)
        else:
            raise ScenarioParseError(f"unknown system {system!r}")
        fam = doc["family"]
        family = SymbolicInputFamily(
            horizon=float(fam["horizon"]),
            intervals=int(fam["intervals"]),
            amplitudes=fam["amplitudes"],
            binary_combinations=[tuple(c) for c in fam.get("binary_combinations", [[]])],
            budget=int(fam.get("budget", 100_000)),
            sample=fam.get("sample"),
            sample_seed=int(fam.get("sample_seed", 0)),
            include_constant=bool(fam.get("include_constant", True)),
        )
        syn = doc.get("synthesis", {})
        n, m = model.n, model.m
        options = SynthesisOptions(
            seed=tuple(int(s) for s in doc["seed"]),
            Q1=_matrix(syn.get("Q1", 1.0), n),
            Q2=_matrix(syn.get("Q2", 1.0), n),
            R=_matrix(syn.get("R", 0.0), m),
            p=float(syn.get("p", 2)),
            t_fs_max=syn.get("t_fs_max"),
            probes=syn.get("probes", "center"),
            inset=float(syn.get("inset", 0.1)),
            downstream=bool(syn.get("downstream", True)),
            step=syn.get("step"),
            edge_weight=syn.get("edge_weight", "goal_distance"),
        )
        return Scenario(
            name=doc.get("name", system),
            system=system,
            model=model,
            family=family,
            options=options,
            init=_vector(doc["init"]),
            des=_vector(doc["des"]),
            supervisor=dict(doc["supervisor"]),
            stabilizer=dict(doc["stabilizer"]),
            params=params,
            document=doc,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioParseError):
            raise
        raise ScenarioParseError(f"malformed scenario: {exc!r}") from exc


def read_scenario_document(name_or_path) -> dict:
    name = str(name_or_path)
    if name in BUNDLED:
        text = resources.files("chc.scenarios").joinpath(f"{name}.json").read_text()
    else:
        path = Path(name)
        if not path.is_file():
            raise ScenarioParseError(f"no bundled scenario or file named {name!r}")
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{name}: {exc}") from exc


def load_scenario(name_or_path, **overrides) -> Scenario:
    return scenario_from_dict(read_scenario_document(name_or_path), overrides)


def save_scenario(scenario: Scenario | dict, path) -> None:
    doc = scenario.document if isinstance(scenario, Scenario) else scenario
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
