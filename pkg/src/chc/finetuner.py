"""Fine-tuner: drive an in-element state toward the element's operating node.

With the element-local model ``xdot = a + B u`` and a single Euler step of
length ``t``, the next state is ``x0 + (a + B u) t``.  The L1 distance of that
state to the target is minimised over ``u`` and ``t`` subject to staying in
the element box, input bounds and ``0 <= t <= t_max``.  Substituting
``v = u t`` makes every constraint linear; the absolute values are then
moved into an epigraph variable ``z``.  The resulting LP works on

    p = [z (n), t (1), v (m)]

and is solved exactly by :func:`chc.lp.solve_lp`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chc.lp import LinearProgram, LPStatus, solve_lp


@dataclass
class FineTuneRequest:
    x0: np.ndarray
    target: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a: np.ndarray
    B: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    t_fs_max: float
    t_fs_min: float = 0.0

    def __post_init__(self):
        for name in ("x0", "target", "lower", "upper", "a", "u_min", "u_max"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        self.B = np.asarray(self.B, dtype=float).reshape(self.a.size, -1)
        if self.t_fs_min != 0.0 or self.t_fs_max < 0.0:
            raise ValueError("fine-tuner time window must satisfy 0 = t_min <= t_max")

    @classmethod
    def for_element(cls, element, x0, u_min, u_max, t_fs_max, mode=(), target=None,
                    a=None, B=None) -> "FineTuneRequest":
        """Build a request from a partition element.

        ``a``/``B`` default to the element's frozen model for binary mode
        ``mode``; ``target`` defaults to the element's operating node.
        """
        a0, B0 = element.affine[tuple(mode)]
        return cls(
            x0=x0,
            target=element.operating_node if target is None else target,
            lower=element.lower,
            upper=element.upper,
            a=a0 if a is None else a,
            B=B0 if B is None else B,
            u_min=u_min,
            u_max=u_max,
            t_fs_max=t_fs_max,
        )

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass
class FineTuneResult:
    u: np.ndarray
    t_fs: float
    predicted_residual: float
    feasible: bool
    v: np.ndarray | None = None
    z: np.ndarray | None = None

    def predicted_state(self, req: FineTuneRequest) -> np.ndarray:
        return req.x0 + (req.a + req.B @ self.u) * self.t_fs


def lp_blocks(req: FineTuneRequest):
    """Return ``(M, e, A1, b1, A2, b2)``: the bound/scaling rows acting on
    ``y = [t, v]`` and the epigraph rows acting on ``p = [z, y]``."""
    n, m = req.n, req.m
    M = np.column_stack([req.a, req.B])
    e = req.target - req.x0
    scale_hi = np.column_stack([-req.u_max, np.eye(m)])
    scale_lo = np.column_stack([req.u_min, -np.eye(m)])
    t_hi = np.concatenate([[1.0], np.zeros(m)])[None]
    A1 = np.vstack([M, -M, scale_hi, scale_lo, t_hi, -t_hi])
    b1 = np.concatenate([
        req.upper - req.x0,
        -req.lower + req.x0,
        np.zeros(m),
        np.zeros(m),
        [req.t_fs_max],
        [-req.t_fs_min],
    ])
    I = np.eye(n)
    A2 = np.block([[-I, -M], [-I, M]])
    b2 = np.concatenate([-e, e])
    return M, e, A1, b1, A2, b2


def assemble_lp(req: FineTuneRequest) -> LinearProgram:
    n, m = req.n, req.m
    _, _, A1, b1, A2, b2 = lp_blocks(req)
    A1p = np.hstack([np.zeros((2 * n + 2 * m + 2, n)), A1])
    f = np.concatenate([np.ones(n), np.zeros(1 + m)])
    return LinearProgram(f, np.vstack([A2, A1p]), np.concatenate([b2, b1]))


def fine_tune(req: FineTuneRequest) -> FineTuneResult:
    n, m = req.n, req.m
    res = solve_lp(assemble_lp(req))
    if res.status is LPStatus.UNBOUNDED:
        raise AssertionError("fine-tuner LP reported unbounded; all variables are boxed")
    if not res.optimal:
        return FineTuneResult(np.zeros(m), 0.0, np.inf, False)
    p = res.x
    z, t, v = p[:n], float(p[n]), p[n + 1:]
    if t <= 1e-12:
        t = 0.0
        u = np.clip(np.zeros(m), req.u_min, req.u_max)
    else:
        u = np.clip(v / t, req.u_min, req.u_max)
    return FineTuneResult(u, t, max(res.cost, 0.0), True, v=v, z=z)
