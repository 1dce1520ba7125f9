"""Rectangular partition of the state domain.

Elements form a uniform grid.  Element boxes are half-open ``[lower, upper)``
except on the upper faces of the domain, which are closed, so :meth:`locate`
is total and every point belongs to exactly one element.  Flat indices follow
C order of the per-dimension grid index (the first dimension varies slowest).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg

from chc.dynamics import BinaryVector, HybridSystemModel, affine_approximation, binary_key, parse_binary_key
from chc.errors import ConfigurationError, DomainViolationError, ScenarioParseError

TIE_TOL = 1e-12


@dataclass(eq=False)
class Element:
    index: int
    lower: np.ndarray
    upper: np.ndarray
    operating_node: np.ndarray
    affine: dict[BinaryVector, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    unactuated: dict[BinaryVector, list[np.ndarray]] = field(default_factory=dict)
    unsafe: bool = False

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, closed: bool = True) -> bool:
        x = np.asarray(x, dtype=float)
        if closed:
            return bool(np.all(x >= self.lower) and np.all(x <= self.upper))
        return bool(np.all(x >= self.lower) and np.all(x < self.upper))

    def corners(self) -> np.ndarray:
        n = self.lower.size
        pts = [np.where(bits, self.upper, self.lower) for bits in itertools.product((0, 1), repeat=n)]
        return np.array(pts)


@dataclass(eq=False)
class Partition:
    domain: np.ndarray
    seed: tuple[int, ...]
    edges: list[np.ndarray]
    elements: list[Element]

    @property
    def n(self) -> int:
        return self.domain.shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, q: int) -> Element:
        return self.elements[q]

    def multi_index(self, q: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(q, self.seed))

    def flat_index(self, idx: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(idx), self.seed))

    def locate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`locate` without the domain check."""
        X = np.atleast_2d(X)
        idx = []
        for d in range(self.n):
            i = np.searchsorted(self.edges[d], X[:, d], side="right") - 1
            idx.append(np.clip(i, 0, self.seed[d] - 1))
        return np.ravel_multi_index(tuple(idx), self.seed)

    def in_domain(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.domain[:, 0]) & (X <= self.domain[:, 1]), axis=1)

    def locate(self, x) -> int:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.n,) or not self.in_domain(x)[0]:
            raise DomainViolationError(f"{x} outside partition domain {self.domain.tolist()}")
        return int(self.locate_many(x[None])[0])

    def nodes(self) -> np.ndarray:
        return np.array([e.operating_node for e in self.elements])

    def unsafe_mask(self) -> np.ndarray:
        return np.array([e.unsafe for e in self.elements], dtype=bool)


def build_partition(domain, seed: Sequence[int]) -> Partition:
    domain = np.asarray(domain, dtype=float).reshape(-1, 2)
    seed = tuple(int(s) for s in seed)
    if len(seed) != domain.shape[0]:
        raise ConfigurationError("seed length must match the state dimension")
    if any(s < 1 for s in seed):
        raise ConfigurationError(f"seed entries must be >= 1, got {seed}")
    if not np.all(np.isfinite(domain)) or np.any(domain[:, 0] >= domain[:, 1]):
        raise ConfigurationError("domain must be finite with lower < upper")
    edges = [np.linspace(lo, hi, s + 1) for (lo, hi), s in zip(domain, seed)]
    elements = []
    for q, idx in enumerate(itertools.product(*(range(s) for s in seed))):
        lower = np.array([edges[d][i] for d, i in enumerate(idx)])
        upper = np.array([edges[d][i + 1] for d, i in enumerate(idx)])
        elements.append(Element(q, lower, upper, 0.5 * (lower + upper)))
    return Partition(domain, seed, edges, elements)


def unactuated_directions(B, a, tol: float | None = None) -> list[np.ndarray]:
    """Orthonormal basis of ``Null(B^T)`` oriented along the drift ``a``.

    Each direction is first made canonical (first non-zero entry positive)
    and then flipped when its inner product with ``a`` is negative.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    a = np.asarray(a, dtype=float).reshape(-1)
    if B.shape[0] != a.size:
        B = B.T if B.shape[1] == a.size else B
    basis = scipy.linalg.null_space(B.T, rcond=tol) if tol else scipy.linalg.null_space(B.T)
    out = []
    for col in basis.T:
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            col = -col
        col = np.where(np.abs(col) < 1e-15, 0.0, col)
        if float(col @ a) < 0:
            col = -col
        out.append(col)
    return out


def attach_local_models(partition: Partition, model: HybridSystemModel) -> None:
    """Freeze ``(a, B)`` and the unactuated directions at every element center."""
    for el in partition.elements:
        for combo in model.binary_combinations():
            a, B = affine_approximation(model, el.center, combo)
            el.affine[combo] = (a, B)
            el.unactuated[combo] = unactuated_directions(B, a)


def candidate_nodes(element: Element, inset: float = 0.0) -> np.ndarray:
    """Center followed by the ``2**n`` corners.

    ``inset`` pulls corners toward the center by that fraction of the half
    width, keeping candidates strictly inside the half-open box.
    """
    c = element.center
    corners = element.corners()
    corners = c + (1.0 - inset) * (corners - c)
    return np.vstack([c[None], corners])


def downstream_mask(element: Element, candidates, tol: float = 1e-12) -> np.ndarray:
    """Candidates that do not lean against any unactuated direction.

    A candidate ``o`` is admissible for a binary combination when
    ``n . (o - center) >= 0`` for every oriented unactuated direction ``n``
    whose drift component is non-zero, and strictly positive for at least
    one such direction; it is kept when admissible under some combination.
    Elements without informative directions admit every candidate.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    off = candidates - element.center
    keep = np.zeros(len(candidates), dtype=bool)
    informative = False
    for combo, dirs in element.unactuated.items():
        a = element.affine[combo][0]
        dirs = [n for n in dirs if abs(float(n @ a)) > tol]
        if not dirs:
            continue
        informative = True
        proj = np.column_stack([off @ n for n in dirs])
        scale = tol * max(1.0, float(np.max(np.abs(off))))
        keep |= np.all(proj >= -scale, axis=1) & np.any(proj > scale, axis=1)
    if not informative or not keep.any():
        return np.ones(len(candidates), dtype=bool)
    return keep


def probe_points(element: Element, kind: str = "center", inset: float = 0.0) -> np.ndarray:
    if kind == "center":
        return element.center[None]
    if kind == "corners":
        return candidate_nodes(element, inset)
    raise ConfigurationError(f"unknown probe set {kind!r}")


def place_operating_node(element: Element, candidates, probes,
                         fs_solver: Callable[[np.ndarray, np.ndarray], float],
                         center_index: int | None = 0) -> np.ndarray:
    """Pick the candidate with the least total fine-tuner residual.

    ``fs_solver(x0, target)`` returns the L1 residual of the fine-tuner run
    from ``x0`` toward ``target`` (``inf`` when infeasible).  Ties go to the
    candidate at ``center_index`` and then to the lowest index.  When every
    candidate is infeasible from every probe the element is flagged unsafe
    and keeps its center.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    totals = np.empty(len(candidates))
    for i, o in enumerate(candidates):
        totals[i] = sum(fs_solver(x, o) for x in probes)
    if not np.any(np.isfinite(totals)):
        element.unsafe = True
        element.operating_node = element.center.copy()
        return element.operating_node
    best = float(np.min(totals))
    winners = np.flatnonzero(totals <= best + TIE_TOL)
    if center_index is not None and center_index in winners:
        pick = center_index
    else:
        pick = int(winners[0])
    element.operating_node = candidates[pick].copy()
    return element.operating_node


def element_fs_solver(element: Element, u_min, u_max, t_fs_max: float,
                      modes: Iterable[BinaryVector] | None = None):
    """Residual oracle over the element's frozen models (best binary mode)."""
    from chc.finetuner import FineTuneRequest, fine_tune

    modes = list(modes) if modes is not None else list(element.affine)

    def solve(x0, target):
        best = np.inf
        for mode in modes:
            req = FineTuneRequest.for_element(element, x0, u_min, u_max, t_fs_max, mode, target=target)
            res = fine_tune(req)
            if res.feasible:
                best = min(best, res.predicted_residual)
        return best

    return solve


def place_operating_nodes(partition: Partition, model: HybridSystemModel, t_fs_max: float,
                          probes: str = "center", inset: float = 0.1,
                          downstream: bool = True) -> None:
    """Place every element's node; ``downstream`` drops candidates leaning
    against the flow along unactuated directions (see :func:`downstream_mask`)."""
    for el in partition.elements:
        if el.unsafe:
            continue
        solver = element_fs_solver(el, model.u_min, model.u_max, t_fs_max)
        cands = candidate_nodes(el, inset)
        center_index: int | None = 0
        if downstream:
            mask = downstream_mask(el, cands)
            center_index = 0 if mask[0] else None
            cands = cands[mask]
        place_operating_node(el, cands, probe_points(el, probes, inset), solver, center_index)


# ----------------------------------------------------------------------------
# serialization


def partition_to_dict(partition: Partition) -> dict:
    return {
        "domain": partition.domain.tolist(),
        "seed": list(partition.seed),
        "elements": [
            {
                "index": el.index,
                "lower": el.lower.tolist(),
                "upper": el.upper.tolist(),
                "operating_node": el.operating_node.tolist(),
                "unsafe": el.unsafe,
                "affine": {
                    binary_key(k): {"a": a.tolist(), "B": B.tolist()}
                    for k, (a, B) in sorted(el.affine.items())
                },
                "unactuated": {
                    binary_key(k): [d.tolist() for d in dirs]
                    for k, dirs in sorted(el.unactuated.items())
                },
            }
            for el in partition.elements
        ],
    }


def partition_from_dict(d: dict) -> Partition:
    try:
        part = build_partition(d["domain"], d["seed"])
        if len(d["elements"]) != len(part.elements):
            raise ScenarioParseError("element count does not match the seed")
        for el, rec in zip(part.elements, d["elements"]):
            el.lower = np.array(rec["lower"], dtype=float)
            el.upper = np.array(rec["upper"], dtype=float)
            el.operating_node = np.array(rec["operating_node"], dtype=float)
            el.unsafe = bool(rec.get("unsafe", False))
            el.affine = {
                parse_binary_key(k): (np.array(v["a"], dtype=float), np.array(v["B"], dtype=float))
                for k, v in rec.get("affine", {}).items()
            }
            el.unactuated = {
                parse_binary_key(k): [np.array(x, dtype=float) for x in dirs]
                for k, dirs in rec.get("unactuated", {}).items()
            }
    except (KeyError, TypeError) as exc:
        raise ScenarioParseError(f"malformed partition record: {exc}") from exc
    return part


def save_partition(partition: Partition, path) -> None:
    with open(path, "w") as fh:
        json.dump(partition_to_dict(partition), fh, indent=1, sort_keys=True)


def load_partition(path) -> Partition:
    with open(path) as fh:
        return partition_from_dict(json.load(fh))
