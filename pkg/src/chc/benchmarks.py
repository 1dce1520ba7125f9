"""The two benchmark systems: a torque-limited pendulum and the three-tank PWA plant."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from chc.dynamics import HybridSystemModel, ModeDynamics, register_named_mode


@dataclass(frozen=True)
class PendulumParams:
    M: float = 0.45  # pendulum mass [kg]
    m: float = 0.1  # bar mass [kg]
    l: float = 0.3  # bar length [m]
    c: float = 0.2  # damping [T s / rad]
    g: float = 9.8
    torque_max: float = 0.9

    @property
    def m_eq(self) -> float:
        return self.M + self.m / 2.0

    @property
    def inertia(self) -> float:
        return (self.m / 3.0 + self.M) * self.l ** 2

    @property
    def gravity_torque(self) -> float:
        return self.m_eq * self.g * self.l

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("M", "m", "l", "c", "g", "torque_max")}


def pendulum_dynamics(x, T, params: PendulumParams = PendulumParams()) -> np.ndarray:
    """``[theta_dot, (T - c theta_dot - m' g l sin theta) / I']``; accepts batches."""
    x = np.asarray(x, dtype=float)
    th, w = x[..., 0], x[..., 1]
    wdot = (np.asarray(T, dtype=float).reshape(np.shape(th)) - params.c * w
            - params.gravity_torque * np.sin(th)) / params.inertia
    return np.stack([w, wdot], axis=-1)


def pendulum_energy(x, params: PendulumParams = PendulumParams()) -> np.ndarray:
    """Kinetic plus potential energy (zero at the hanging rest position)."""
    x = np.asarray(x, dtype=float)
    return 0.5 * params.inertia * x[..., 1] ** 2 + params.gravity_torque * (1.0 - np.cos(x[..., 0]))


def pendulum_mode(params: PendulumParams) -> ModeDynamics:
    inv_i = 1.0 / params.inertia

    def drift(X):
        return np.column_stack([
            X[:, 1],
            -(params.c * X[:, 1] + params.gravity_torque * np.sin(X[:, 0])) * inv_i,
        ])

    def input_map(X):
        G = np.zeros((X.shape[0], 2, 1))
        G[:, 1, 0] = inv_i
        return G

    spec = {"kind": "named", "name": "pendulum", "params": params.to_dict()}
    return ModeDynamics(drift, input_map, "pendulum", spec)


register_named_mode("pendulum", lambda p: pendulum_mode(PendulumParams(**p)))


def pendulum_model(params: PendulumParams = PendulumParams(),
                   theta_dot_bounds=(-10.0, 10.0)) -> HybridSystemModel:
    return HybridSystemModel(
        state_bounds=np.array([[0.0, 2.0 * math.pi], list(theta_dot_bounds)]),
        input_bounds=np.array([[-params.torque_max, params.torque_max]]),
        modes=(pendulum_mode(params),),
        mode_table={(): 0},
        periodic=(True, False),
        name="pendulum",
    )


def pendulum_gains(params: PendulumParams, poles=(-4.0, -5.0)) -> tuple[float, float]:
    """PD gains placing the feedback-linearised upright loop at ``poles``.

    With the stabilising torque the closed loop reads
    ``I' e'' = -k1 e - k2 e'``, so ``k1 = I' p1 p2`` and ``k2 = -I' (p1 + p2)``.
    """
    p1, p2 = poles
    return params.inertia * p1 * p2, -params.inertia * (p1 + p2)


@dataclass(frozen=True)
class ThreeTankParams:
    k1: float = 3.89e-5  # connecting valve coefficient [m^2]
    k2: float = 8.65e-6  # outlet valve coefficient [m^2]
    A: float = 0.0123  # tank area, printed unit m^3
    h_max: float = 0.66
    u_max: float = 2e-5

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("k1", "k2", "A", "h_max", "u_max")}


def threetank_matrices(params: ThreeTankParams):
    """State matrices per valve setting ``(u_b1, u_b2)`` and the shared input matrix."""
    r1 = params.k1 / params.A
    r2 = params.k2 / params.A
    mats = {
        (1, 1): np.array([[-r1, 0.0, r1], [0.0, -r1, r1], [r1, r1, -(2 * params.k1 + params.k2) / params.A]]),
        (1, 0): np.array([[-r1, 0.0, r1], [0.0, 0.0, 0.0], [r1, 0.0, -(params.k1 + params.k2) / params.A]]),
        (0, 1): np.array([[0.0, 0.0, 0.0], [0.0, -r1, r1], [0.0, r1, -(params.k1 + params.k2) / params.A]]),
        (0, 0): np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -r2]]),
    }
    B = np.array([[1.0 / params.A, 0.0], [0.0, 1.0 / params.A], [0.0, 0.0]])
    return mats, B


def threetank_dynamics(x, u_c, u_b, params: ThreeTankParams = ThreeTankParams()) -> np.ndarray:
    mats, B = threetank_matrices(params)
    A = mats[tuple(int(b) for b in u_b)]
    return np.asarray(x, dtype=float) @ A.T + np.asarray(u_c, dtype=float) @ B.T


def threetank_model(params: ThreeTankParams = ThreeTankParams()) -> HybridSystemModel:
    mats, B = threetank_matrices(params)
    order = [(1, 1), (1, 0), (0, 1), (0, 0)]
    modes = tuple(
        ModeDynamics.affine(mats[k], np.zeros(3), B, label=f"V13={k[0]} V23={k[1]}") for k in order
    )
    return HybridSystemModel(
        state_bounds=np.array([[0.0, params.h_max]] * 3),
        input_bounds=np.array([[0.0, params.u_max]] * 2),
        modes=modes,
        mode_table={k: i for i, k in enumerate(order)},
        binary_input_dim=2,
        name="threetank",
    )


def threetank_hold(params: ThreeTankParams, x_des) -> tuple[np.ndarray, tuple[int, int]]:
    """Constant pump flows and valve setting that best balance the flows at ``x_des``.

    For every valve setting the pump flows cancelling the tank 1/2 rates are
    clamped into bounds; the setting with the smallest remaining rate norm is
    returned (first in table order on ties).
    """
    mats, B = threetank_matrices(params)
    x_des = np.asarray(x_des, dtype=float)
    best = None
    for key in [(1, 1), (1, 0), (0, 1), (0, 0)]:
        drift = mats[key] @ x_des
        u = np.clip(-drift[:2] * params.A, 0.0, params.u_max)
        residual = float(np.linalg.norm(drift + B @ u))
        if best is None or residual < best[0] - 1e-15:
            best = (residual, u, key)
    return best[1], best[2]
