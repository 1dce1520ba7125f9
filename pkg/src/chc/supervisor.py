"""Closed-loop supervisor switching between the RS lookup, the fine-tuner and a stabilizer.

Decision rule per step (previous mode starts as FS):

* near the current element's operating node (``delta1``) -> RS
* otherwise RS if the previous step was FS, else FS
* within ``delta2`` of the set point -> S, overriding the above

RS replays the stored symbolic input of the element's next hop for the whole
horizon, FS applies the fine-tuner input for its computed dwell time, and S
applies the stabilizer for one sampling period.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from chc.dynamics import (
    BinaryVector,
    HybridSystemModel,
    PiecewiseConstantSignal,
    Trajectory,
    integrate,
)
from chc.errors import ConfigurationError, DomainViolationError, ReachabilityError
from chc.finetuner import FineTuneRequest, FineTuneResult, fine_tune
from chc.graph import ReachabilitySector, SymbolicInputFamily
from chc.partition import Partition


class ControllerMode(str, enum.Enum):
    RS = "RS"
    FS = "FS"
    S = "S"


@dataclass
class SupervisorConfig:
    delta1: float
    delta2: float
    sample_time: float
    max_steps: int = 5000
    max_time: float | None = None
    noise_amplitude: np.ndarray | None = None
    noise_seed: int = 0
    capture_dwell: int = 10
    t_fs_max: float | None = None
    fs_linearization: str = "state"

    def __post_init__(self):
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ConfigurationError("delta1 and delta2 must be positive")
        if not self.sample_time > 0:
            raise ConfigurationError("sampling time must be positive")
        if self.fs_linearization not in ("state", "center"):
            raise ConfigurationError(f"unknown fs_linearization {self.fs_linearization!r}")
        if self.noise_amplitude is not None:
            self.noise_amplitude = np.asarray(self.noise_amplitude, dtype=float)


def default_deltas(partition: Partition, des) -> tuple[float, float]:
    """``delta1`` = 25% of an element half-diagonal, ``delta2`` = 50% of the
    destination element's half-diagonal."""
    dest = partition[partition.locate(des)]
    return 0.25 * partition[0].half_diagonal, 0.5 * dest.half_diagonal


class Stabilizer(Protocol):
    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, BinaryVector]: ...


@dataclass
class PendulumStabilizer:
    """Gravity-compensating PD torque around the upright position, clamped."""

    k1: float
    k2: float
    gravity_torque: float
    damping: float
    torque_max: float
    target: float = math.pi

    def __call__(self, x):
        th, w = float(x[0]), float(x[1])
        T = (self.gravity_torque * math.sin(th) + self.damping * w
             - self.k1 * (th - self.target) - self.k2 * w)
        return np.array([min(max(T, -self.torque_max), self.torque_max)]), ()


@dataclass
class ConstantHold:
    u_c: np.ndarray
    u_b: BinaryVector = ()

    def __call__(self, x):
        return np.array(self.u_c, dtype=float), tuple(self.u_b)


@dataclass
class Controller:
    """Everything the supervisor needs at run time."""

    model: HybridSystemModel
    partition: Partition
    rs: ReachabilitySector
    family: SymbolicInputFamily
    stabilizer: Stabilizer
    cfg: SupervisorConfig
    des: np.ndarray

    def __post_init__(self):
        self.des = np.asarray(self.des, dtype=float)

    @property
    def t_fs_max(self) -> float:
        return self.cfg.t_fs_max if self.cfg.t_fs_max is not None else self.family.horizon

    def nominal_step(self) -> float:
        return self.family.interval_duration / 10.0


@dataclass
class Plan:
    mode: ControllerMode
    element: int
    signal: PiecewiseConstantSignal
    input_id: int | None = None
    fine_tune: FineTuneResult | None = None


def _hold(u_c, u_b, duration) -> PiecewiseConstantSignal:
    return PiecewiseConstantSignal(duration, np.atleast_2d(u_c), [tuple(u_b)])


def _fine_tune_plan(ctrl: Controller, x, q) -> tuple[PiecewiseConstantSignal, FineTuneResult | None]:
    el = ctrl.partition[q]
    target = ctrl.des if q == ctrl.rs.destination else el.operating_node
    target = np.clip(target, el.lower, el.upper)
    x_in = np.clip(x, el.lower, el.upper)
    best = None
    for combo in ctrl.model.binary_combinations():
        if ctrl.cfg.fs_linearization == "state":
            X = x_in[None]
            mode = ctrl.model.modes[int(ctrl.model.select_modes(X, combo)[0])]
            a, B = mode.drift(X)[0], mode.input_map(X)[0]
        else:
            a, B = el.affine[combo]
        req = FineTuneRequest(x_in, target, el.lower, el.upper, a, B,
                              ctrl.model.u_min, ctrl.model.u_max, ctrl.t_fs_max)
        res = fine_tune(req)
        if res.feasible and (best is None or res.predicted_residual < best[0].predicted_residual - 1e-12):
            best = (res, combo)
    if best is None:
        return _hold(np.clip(np.zeros(ctrl.model.m), ctrl.model.u_min, ctrl.model.u_max),
                     ctrl.model.binary_combinations()[0], 0.0), None
    res, combo = best
    return _hold(res.u, combo, res.t_fs), res


def supervise_step(ctrl: Controller, x, mode_prev: ControllerMode) -> tuple[ControllerMode, Plan]:
    x = np.asarray(x, dtype=float)
    if not ctrl.partition.in_domain(x)[0]:
        raise DomainViolationError(f"state {x} outside the partition domain")
    q = ctrl.partition.locate(x)
    node = ctrl.partition[q].operating_node
    if np.linalg.norm(x - node) <= ctrl.cfg.delta1:
        mode = ControllerMode.RS
    elif mode_prev == ControllerMode.FS:
        mode = ControllerMode.RS
    else:
        mode = ControllerMode.FS
    if np.linalg.norm(x - ctrl.des) <= ctrl.cfg.delta2:
        mode = ControllerMode.S

    if mode == ControllerMode.S:
        u_c, u_b = ctrl.stabilizer(x)
        return mode, Plan(mode, q, _hold(u_c, u_b, ctrl.cfg.sample_time))
    if mode == ControllerMode.FS:
        signal, res = _fine_tune_plan(ctrl, x, q)
        return mode, Plan(mode, q, signal, fine_tune=res)
    if q == ctrl.rs.destination:
        # the destination has no successor; its RS action is the stabilizer
        u_c, u_b = ctrl.stabilizer(x)
        return mode, Plan(mode, q, _hold(u_c, u_b, ctrl.family.horizon))
    hop = ctrl.rs.next_hop.get(q)
    if hop is None:
        raise ReachabilityError(
            f"element {q} has no successor in the reachability sector (Post(RS, {q}) is empty); "
            "the set point cannot be steered to from here"
        )
    return mode, Plan(mode, q, ctrl.family.signal(hop[1]), input_id=hop[1])


@dataclass
class RunLog:
    """Fine-grained samples plus one record per supervisor decision."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    status: str = "running"
    capture_time: float | None = None
    message: str = ""

    def arrays(self):
        return (np.array(self.times), np.array(self.states), list(self.modes),
                np.array(self.inputs), list(self.binary))

    @property
    def decision_modes(self) -> list[ControllerMode]:
        return [d["mode"] for d in self.decisions]

    @property
    def captured(self) -> bool:
        return self.capture_time is not None

    def max_abs_input(self) -> np.ndarray:
        return np.max(np.abs(np.array(self.inputs)), axis=0)


def _integrate_plan(ctrl: Controller, x, signal: PiecewiseConstantSignal) -> Trajectory:
    h = ctrl.nominal_step()
    k = max(1, math.ceil(signal.interval_duration / h - 1e-9))
    return integrate(ctrl.model, x, signal, signal.interval_duration / k)


def run_closed_loop(ctrl: Controller, x_init) -> RunLog:
    """Iterate the supervisor from ``x_init`` until sustained capture.

    Stops after ``capture_dwell`` consecutive S decisions (status
    ``"captured"``), on ``max_steps``/``max_time`` (``"timeout"``), or when
    the true state leaves the domain (``"domain_exit"``).  A measured state
    in an element without a successor ends the run with status
    ``"unreachable"`` and the error text in ``message``.
    """
    cfg = ctrl.cfg
    x = np.asarray(x_init, dtype=float).copy()
    if not ctrl.partition.in_domain(x)[0]:
        raise DomainViolationError(f"initial state {x} outside the domain")
    rng = np.random.default_rng(cfg.noise_seed)
    lo, hi = ctrl.partition.domain[:, 0], ctrl.partition.domain[:, 1]
    log = RunLog()
    log.times.append(0.0)
    log.states.append(x.copy())
    log.modes.append(None)
    log.inputs.append(np.clip(np.zeros(ctrl.model.m), ctrl.model.u_min, ctrl.model.u_max))
    log.binary.append(ctrl.model.binary_combinations()[0])
    t = 0.0
    prev = ControllerMode.FS
    streak = 0
    for _ in range(cfg.max_steps):
        if cfg.max_time is not None and t >= cfg.max_time:
            log.status = "timeout"
            break
        x_meas = x
        if cfg.noise_amplitude is not None:
            x_meas = np.clip(x + rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude), lo, hi)
        try:
            mode, plan = supervise_step(ctrl, x_meas, prev)
        except ReachabilityError as exc:
            log.status = "unreachable"
            log.message = str(exc)
            return log
        sig = plan.signal
        log.decisions.append({
            "time": t, "state": x.copy(), "measured": np.array(x_meas), "mode": mode,
            "element": plan.element, "input_id": plan.input_id, "duration": sig.duration,
        })
        if sig.duration > 0:
            traj = _integrate_plan(ctrl, x, sig)
            steps_per = (len(traj.sample_times) - 1) / max(sig.n_intervals, 1)
            for i in range(1, len(traj.sample_times)):
                level = min(int((i - 1) // steps_per), sig.n_intervals - 1) if steps_per else 0
                log.times.append(t + traj.sample_times[i])
                log.states.append(traj.states[i].copy())
                log.modes.append(mode)
                log.inputs.append(sig.continuous[level].copy())
                log.binary.append(sig.binary[level])
            if traj.exited:
                log.status = "domain_exit"
                return log
            x = traj.final.copy()
            t += sig.duration
        streak = streak + 1 if mode == ControllerMode.S else 0
        if mode == ControllerMode.S and log.capture_time is None:
            log.capture_time = log.decisions[-1]["time"]
        prev = mode
        if streak >= cfg.capture_dwell:
            log.status = "captured"
            break
    else:
        log.status = "timeout"
    return log


def count_sign_changes(values) -> int:
    s = np.sign(np.asarray(values, dtype=float))
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))
