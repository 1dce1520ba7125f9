"""Input-affine hybrid models and fixed-step simulation.

Each mode of a model evaluates ``xdot = T(x) + G(x) u_c``; the active mode is
picked from the binary input vector (and, optionally, the state).  All
evaluators are batched: they take an ``(N, n)`` array of states so that whole
families of trajectories can be integrated in one pass.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from chc.errors import (
    ConfigurationError,
    DomainViolationError,
    IntegrationError,
    ModelDefinitionError,
)

BinaryVector = tuple[int, ...]

# named mode factories, filled in by modules that define closed-form dynamics
_NAMED_MODES: dict[str, Callable[[dict], "ModeDynamics"]] = {}


def register_named_mode(name: str, factory: Callable[[dict], "ModeDynamics"]) -> None:
    """Make ``{"kind": "named", "name": name}`` mode specs loadable."""
    _NAMED_MODES[name] = factory


def binary_key(u_b: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in u_b)


def parse_binary_key(key: str) -> BinaryVector:
    return tuple(int(ch) for ch in key)


@dataclass(frozen=True, eq=False)
class ModeDynamics:
    """One continuous mode ``xdot = drift(x) + input_map(x) @ u``.

    ``drift`` maps ``(N, n) -> (N, n)`` and ``input_map`` maps
    ``(N, n) -> (N, n, m)``.  ``spec`` is the serializable description the
    mode was built from (used when saving scenario files).
    """

    drift: Callable[[np.ndarray], np.ndarray]
    input_map: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    spec: dict | None = None

    @classmethod
    def affine(cls, A, c, B, label: str = "") -> "ModeDynamics":
        A = np.array(A, dtype=float)
        c = np.array(c, dtype=float)
        B = np.array(B, dtype=float)
        if A.shape[0] != A.shape[1] or c.shape != (A.shape[0],) or B.shape[0] != A.shape[0]:
            raise ModelDefinitionError(
                f"inconsistent affine mode shapes A{A.shape} c{c.shape} B{B.shape}"
            )
        spec = {"kind": "affine", "A": A.tolist(), "c": c.tolist(), "B": B.tolist()}
        if label:
            spec["label"] = label

        def drift(X):
            return X @ A.T + c

        def input_map(X):
            return np.broadcast_to(B, (X.shape[0],) + B.shape)

        return cls(drift, input_map, label, spec)

    def rate(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        G = self.input_map(X)
        return self.drift(X) + np.einsum("kij,kj->ki", G, U)


@dataclass(frozen=True, eq=False)
class HybridSystemModel:
    """Bounded input-affine hybrid system.

    ``mode_table`` maps every binary input vector to a mode index.  A
    ``mode_selector`` may refine the choice with the state; it receives the
    ``(N, n)`` states and the binary vector and returns ``N`` mode indices.
    Dimensions flagged in ``periodic`` are wrapped into their bounds at
    sampling points (angles).
    """

    state_bounds: np.ndarray
    input_bounds: np.ndarray
    modes: tuple[ModeDynamics, ...]
    mode_table: Mapping[BinaryVector, int]
    binary_input_dim: int = 0
    periodic: tuple[bool, ...] = ()
    name: str = "model"
    mode_selector: Callable[[np.ndarray, BinaryVector], np.ndarray] | None = None

    def __post_init__(self):
        sb = np.array(self.state_bounds, dtype=float)
        ib = np.array(self.input_bounds, dtype=float)
        if sb.ndim != 2 or sb.shape[1] != 2 or not np.all(np.isfinite(sb)):
            raise ModelDefinitionError("state bounds must be finite (n, 2) intervals")
        if np.any(sb[:, 0] >= sb[:, 1]):
            raise ModelDefinitionError("state bounds need lower < upper")
        if ib.ndim != 2 or ib.shape[1] != 2 or np.any(ib[:, 0] >= ib[:, 1]):
            raise ModelDefinitionError("input bounds need u_min < u_max componentwise")
        object.__setattr__(self, "state_bounds", sb)
        object.__setattr__(self, "input_bounds", ib)
        object.__setattr__(self, "modes", tuple(self.modes))
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * sb.shape[0]
        if len(periodic) != sb.shape[0]:
            raise ModelDefinitionError("periodic flags must match the state dimension")
        object.__setattr__(self, "periodic", periodic)
        table = {tuple(int(b) for b in k): int(v) for k, v in dict(self.mode_table).items()}
        for combo in self.binary_combinations():
            if combo not in table:
                raise ModelDefinitionError(f"no mode for binary input {combo}")
            if not 0 <= table[combo] < len(self.modes):
                raise ModelDefinitionError(f"mode index {table[combo]} out of range")
        object.__setattr__(self, "mode_table", table)

    @property
    def n(self) -> int:
        return self.state_bounds.shape[0]

    @property
    def m(self) -> int:
        return self.input_bounds.shape[0]

    @property
    def u_min(self) -> np.ndarray:
        return self.input_bounds[:, 0]

    @property
    def u_max(self) -> np.ndarray:
        return self.input_bounds[:, 1]

    def binary_combinations(self) -> list[BinaryVector]:
        return [tuple(c) for c in itertools.product((0, 1), repeat=self.binary_input_dim)]

    def in_domain(self, X: np.ndarray, tol: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        lo, hi = self.state_bounds[:, 0], self.state_bounds[:, 1]
        return np.all((X >= lo - tol) & (X <= hi + tol), axis=1)

    def wrap(self, X: np.ndarray) -> np.ndarray:
        """Wrap periodic coordinates into ``[lo, hi)``; other coordinates untouched."""
        if not any(self.periodic):
            return X
        X = X.copy()
        for d, per in enumerate(self.periodic):
            if per:
                lo, hi = self.state_bounds[d]
                X[:, d] = np.mod(X[:, d] - lo, hi - lo) + lo
        return X

    def select_modes(self, X: np.ndarray, u_b: BinaryVector) -> np.ndarray:
        u_b = tuple(int(b) for b in u_b)
        if self.mode_selector is not None:
            return np.asarray(self.mode_selector(X, u_b), dtype=int)
        try:
            q = self.mode_table[u_b]
        except KeyError:
            raise ModelDefinitionError(f"no mode matches binary input {u_b}") from None
        return np.full(X.shape[0], q, dtype=int)

    def rates(self, X: np.ndarray, U: np.ndarray, mode_idx: np.ndarray) -> np.ndarray:
        """Batched state rate; row ``k`` uses mode ``mode_idx[k]``."""
        first = int(mode_idx[0]) if len(mode_idx) else 0
        if np.all(mode_idx == first):
            return self.modes[first].rate(X, U)
        out = np.empty_like(X)
        for q in np.unique(mode_idx):
            rows = mode_idx == q
            out[rows] = self.modes[q].rate(X[rows], U[rows])
        return out


@dataclass(frozen=True, eq=False)
class PiecewiseConstantSignal:
    """Input held constant over consecutive intervals of equal length."""

    interval_duration: float
    continuous: np.ndarray  # (K, m)
    binary: tuple[BinaryVector, ...] = ()

    def __post_init__(self):
        c = np.array(self.continuous, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        object.__setattr__(self, "continuous", c)
        b = tuple(tuple(int(v) for v in row) for row in self.binary) or ((),) * c.shape[0]
        if len(b) != c.shape[0]:
            raise ValueError("binary levels must match the number of continuous levels")
        object.__setattr__(self, "binary", b)
        if self.interval_duration < 0:
            raise ValueError("interval duration must be non-negative")

    @property
    def n_intervals(self) -> int:
        return self.continuous.shape[0]

    @property
    def duration(self) -> float:
        return self.interval_duration * self.n_intervals

    def levels(self):
        return list(zip(self.continuous, self.binary))

    def check_bounds(self, model: HybridSystemModel, tol: float = 1e-12) -> None:
        lo, hi = model.u_min, model.u_max
        if np.any(self.continuous < lo - tol) or np.any(self.continuous > hi + tol):
            raise DomainViolationError("signal level outside the continuous input bounds")

    def split(self, k: int) -> tuple["PiecewiseConstantSignal", "PiecewiseConstantSignal"]:
        return (
            PiecewiseConstantSignal(self.interval_duration, self.continuous[:k], self.binary[:k]),
            PiecewiseConstantSignal(self.interval_duration, self.continuous[k:], self.binary[k:]),
        )


@dataclass
class Trajectory:
    sample_times: np.ndarray
    states: np.ndarray
    inputs_applied: PiecewiseConstantSignal | None = None
    exited: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _steps_per_interval(interval: float, step: float) -> int:
    if step <= 0:
        raise ConfigurationError("integration step must be positive")
    k = int(round(interval / step))
    if k < 1 or abs(k * step - interval) > 1e-9 * max(interval, 1.0):
        raise ConfigurationError(f"step {step} does not divide interval {interval}")
    return k


def default_step(interval: float) -> float:
    return interval / 10.0


def rk4_step(model: HybridSystemModel, X, U, u_b: BinaryVector, h: float):
    modes = model.select_modes(X, u_b)
    k1 = model.rates(X, U, modes)
    k2 = model.rates(X + 0.5 * h * k1, U, modes)
    k3 = model.rates(X + 0.5 * h * k2, U, modes)
    k4 = model.rates(X + h * k3, U, modes)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_point(model: HybridSystemModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (model.n,):
        raise ValueError(f"expected a {model.n}-vector, got shape {x.shape}")
    if not model.in_domain(x, tol=1e-12)[0]:
        raise DomainViolationError(f"state {x} outside {model.state_bounds.tolist()}")
    return x


def evaluate_rate(model: HybridSystemModel, x, u_c, u_b: Sequence[int] = ()) -> np.ndarray:
    x = _check_point(model, x)
    u = np.asarray(u_c, dtype=float).reshape(-1)
    if np.any(u < model.u_min - 1e-12) or np.any(u > model.u_max + 1e-12):
        raise DomainViolationError(f"input {u} outside {model.input_bounds.tolist()}")
    X = x[None]
    q = model.select_modes(X, tuple(u_b))
    return model.rates(X, u[None], q)[0]


def affine_approximation(model: HybridSystemModel, center, u_b: Sequence[int] = ()):
    """Freeze the mode selected at ``center``: returns ``(a, B)`` with
    ``a = T(center)`` and ``B = G(center)``."""
    x = _check_point(model, center)
    X = x[None]
    q = int(model.select_modes(X, tuple(u_b))[0])
    mode = model.modes[q]
    return mode.drift(X)[0].copy(), np.array(mode.input_map(X)[0], dtype=float)


def integrate(model: HybridSystemModel, x0, signal: PiecewiseConstantSignal,
              step: float | None = None) -> Trajectory:
    """Fixed-step RK4 under a piecewise-constant input.

    The mode is re-selected at every step, periodic coordinates are wrapped
    after every step, and the run stops (``exited=True``) at the first
    sample outside the state bounds.
    """
    x0 = _check_point(model, x0)
    signal.check_bounds(model)
    h = step if step is not None else default_step(signal.interval_duration)
    if signal.n_intervals == 0 or signal.interval_duration == 0.0:
        return Trajectory(np.array([0.0]), x0[None].copy(), signal)
    k = _steps_per_interval(signal.interval_duration, h)
    h = signal.interval_duration / k
    X = x0[None].copy()
    times, states = [0.0], [x0.copy()]
    t_start = 0.0
    for u_c, u_b in signal.levels():
        U = u_c[None]
        for i in range(k):
            X = model.wrap(rk4_step(model, X, U, u_b, h))
            if not np.all(np.isfinite(X)):
                raise IntegrationError(f"non-finite state after t={times[-1]}")
            if not model.in_domain(X)[0]:
                return Trajectory(np.array(times), np.array(states), signal, exited=True)
            times.append(t_start + (i + 1) * h)
            states.append(X[0].copy())
        t_start += signal.interval_duration
    return Trajectory(np.array(times), np.array(states), signal)


@dataclass
class BatchResult:
    final: np.ndarray
    exited: np.ndarray
    blocked: np.ndarray
    failed: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return ~(self.exited | self.blocked | self.failed)


def integrate_batch(model: HybridSystemModel, X0: np.ndarray, levels_c: np.ndarray,
                    levels_b: Sequence[Sequence[BinaryVector]] | np.ndarray | None,
                    interval: float, step: float | None = None,
                    forbidden: Callable[[np.ndarray], np.ndarray] | None = None) -> BatchResult:
    """Integrate ``N`` trajectories in lock step.

    ``levels_c`` has shape ``(N, K, m)``.  ``levels_b`` holds, per row and
    interval, an index into ``model.binary_combinations()`` (shape ``(N, K)``)
    or ``None`` when the model has no binary inputs.  Rows that leave the
    domain, hit a ``forbidden`` state, or turn non-finite are frozen and
    flagged.
    """
    X = np.array(X0, dtype=float)
    N, K = levels_c.shape[0], levels_c.shape[1]
    h = step if step is not None else default_step(interval)
    k = _steps_per_interval(interval, h)
    h = interval / k
    combos = model.binary_combinations()
    codes = np.zeros((N, K), dtype=int) if levels_b is None else np.asarray(levels_b, dtype=int)
    exited = np.zeros(N, dtype=bool)
    blocked = np.zeros(N, dtype=bool)
    failed = np.zeros(N, dtype=bool)
    for j in range(K):
        for _ in range(k):
            alive = ~(exited | blocked | failed)
            if not alive.any():
                break
            Xn = X.copy()
            for code in np.unique(codes[alive, j]):
                rows = alive & (codes[:, j] == code)
                Xn[rows] = rk4_step(model, X[rows], levels_c[rows, j], combos[code], h)
            Xn[alive] = model.wrap(Xn[alive])
            bad = alive & ~np.all(np.isfinite(Xn), axis=1)
            failed |= bad
            alive &= ~bad
            out = alive & ~model.in_domain(np.where(np.isfinite(Xn), Xn, 0.0))
            exited |= out
            alive &= ~out
            if forbidden is not None and alive.any():
                hit = np.zeros(N, dtype=bool)
                hit[alive] = forbidden(Xn[alive])
                blocked |= hit
                alive &= ~hit
            X[alive] = Xn[alive]
    return BatchResult(X, exited, blocked, failed)


# ----------------------------------------------------------------------------
# declarative model files


def mode_from_spec(spec: Mapping) -> ModeDynamics:
    kind = spec.get("kind")
    if kind == "affine":
        return ModeDynamics.affine(spec["A"], spec["c"], spec["B"], spec.get("label", ""))
    if kind == "named":
        name = spec.get("name")
        if name not in _NAMED_MODES:
            raise ModelDefinitionError(f"unknown named mode {name!r}")
        return _NAMED_MODES[name](dict(spec.get("params", {})))
    raise ModelDefinitionError(f"unknown mode kind {kind!r}")


def model_to_dict(model: HybridSystemModel) -> dict:
    if any(mode.spec is None for mode in model.modes) or model.mode_selector is not None:
        raise ModelDefinitionError("model contains modes with no declarative form")
    return {
        "name": model.name,
        "state_bounds": model.state_bounds.tolist(),
        "input_bounds": model.input_bounds.tolist(),
        "binary_input_dim": model.binary_input_dim,
        "periodic": list(model.periodic),
        "modes": [mode.spec for mode in model.modes],
        "mode_table": {binary_key(k): v for k, v in sorted(model.mode_table.items())},
    }


def model_from_dict(d: Mapping) -> HybridSystemModel:
    for key in ("state_bounds", "input_bounds", "modes"):
        if key not in d:
            raise ModelDefinitionError(f"model definition lacks {key!r}")
    nb = int(d.get("binary_input_dim", 0))
    table = d.get("mode_table") or {"": 0}
    return HybridSystemModel(
        state_bounds=np.array(d["state_bounds"], dtype=float),
        input_bounds=np.array(d["input_bounds"], dtype=float),
        modes=tuple(mode_from_spec(s) for s in d["modes"]),
        mode_table={parse_binary_key(k): int(v) for k, v in table.items()},
        binary_input_dim=nb,
        periodic=tuple(d.get("periodic", ())),
        name=d.get("name", "model"),
    )
