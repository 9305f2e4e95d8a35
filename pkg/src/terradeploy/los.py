"""Bounding-volume hierarchy over terrain bumps and binary line-of-sight queries.

Outside the union of leaf boxes the terrain is treated as ``base``; a bump's
tail beyond ``k_o`` spreads is ignored by :func:`los_query`. Use
:func:`k_o_for_tolerance` to size ``k_o`` so that ignored tails stay below a
chosen height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._accel import get_backend
from .terrain import TerrainModel


@dataclass(frozen=True)
class Aabb2:
    min_x: float
    max_x: float
    min_y: float
    max_y: float

    def __post_init__(self):
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise ValueError(f"inverted box {self}")

    def contains(self, x, y):
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def contains_box(self, other: "Aabb2"):
        return (self.min_x <= other.min_x and other.max_x <= self.max_x
                and self.min_y <= other.min_y and other.max_y <= self.max_y)


class Bvh:
    """Flat-array BVH. Node 0 is the root; leaves carry one component each."""

    def __init__(self, box, left, right, comp, k_o):
        self.box = box
        self.left = left
        self.right = right
        self.comp = comp
        self.k_o = float(k_o)
        for a in (box, left, right, comp):
            a.setflags(write=False)

    @property
    def n_nodes(self):
        return self.box.shape[0]

    @property
    def root(self):
        if self.n_nodes == 0:
            return None
        return Aabb2(*self.box[0])

    def node_box(self, k):
        return Aabb2(*self.box[k])

    def is_leaf(self, k):
        return self.comp[k] >= 0

    def height(self):
        """Number of levels (root only = 1, empty = 0)."""
        if self.n_nodes == 0:
            return 0

        def h(k):
            if self.comp[k] >= 0:
                return 1
            return 1 + max(h(self.left[k]), h(self.right[k]))

        return h(0)

    def leaves_under(self, k):
        if self.comp[k] >= 0:
            return [int(self.comp[k])]
        return self.leaves_under(self.left[k]) + self.leaves_under(self.right[k])

    def contains_point(self, x, y):
        """True if (x, y) lies in some leaf box."""
        if self.n_nodes == 0:
            return False
        stack = [0]
        while stack:
            k = stack.pop()
            b = self.box[k]
            if not (b[0] <= x <= b[1] and b[2] <= y <= b[3]):
                continue
            if self.comp[k] >= 0:
                return True
            stack += [self.left[k], self.right[k]]
        return False

    def arrays(self):
        return self.box, self.left, self.right, self.comp


def leaf_box(model: TerrainModel, i: int, k_o: float) -> Aabb2:
    h, mx, my, sx, sy = model.params[i]
    return Aabb2(mx - k_o * sx, mx + k_o * sx, my - k_o * sy, my + k_o * sy)


def build_bvh(model: TerrainModel, k_o: float = 2.0) -> Bvh:
    """Median-split BVH over component boxes ``mu +- k_o * sigma``."""
    if not k_o > 0:
        raise ValueError("k_o must be positive")
    G = model.n_components
    if G == 0:
        return Bvh(np.zeros((0, 4)), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), k_o)
    p = model.params
    leaf = np.column_stack([p[:, 1] - k_o * p[:, 3], p[:, 1] + k_o * p[:, 3],
                            p[:, 2] - k_o * p[:, 4], p[:, 2] + k_o * p[:, 4]])
    boxes, lefts, rights, comps = [], [], [], []

    def new_node():
        boxes.append(None)
        lefts.append(-1)
        rights.append(-1)
        comps.append(-1)
        return len(boxes) - 1

    def build(idx):
        k = new_node()
        sub = leaf[idx]
        bb = np.array([sub[:, 0].min(), sub[:, 1].max(), sub[:, 2].min(), sub[:, 3].max()])
        boxes[k] = bb
        if len(idx) == 1:
            comps[k] = int(idx[0])
            return k
        axis = 0 if (bb[1] - bb[0]) >= (bb[3] - bb[2]) else 1
        centers = p[idx, 1 + axis]
        order = np.argsort(centers, kind="stable")
        half = len(idx) // 2
        lefts[k] = build(idx[order[:half]])
        rights[k] = build(idx[order[half:]])
        return k

    build(np.arange(G))
    return Bvh(np.array(boxes, dtype=np.float64), np.array(lefts, dtype=np.int64),
               np.array(rights, dtype=np.int64), np.array(comps, dtype=np.int64), k_o)


def k_o_for_tolerance(model: TerrainModel, tol: float) -> float:
    """Smallest k_o whose ignored tails sum to at most ``tol`` metres anywhere."""
    total = float(np.sum(np.maximum(model.params[:, 0], 0.0))) if model.n_components else 0.0
    if total <= tol:
        return 1.0
    return math.sqrt(2.0 * math.log(total / tol))


class LosResult(NamedTuple):
    visible: int
    evaluations: int


def _check(p1, p2):
    p1 = np.asarray(p1, dtype=np.float64).reshape(3)
    p2 = np.asarray(p2, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
        raise ValueError("segment endpoints must be finite")
    return p1, p2


def los_query(bvh: Bvh, model: TerrainModel, p1, p2, epsilon: float = 1e-5, backend=None) -> LosResult:
    """Adaptive bisection LoS test; 1 = clear, 0 = blocked (touching counts as blocked)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    p1, p2 = _check(p1, p2)
    kern = get_backend(backend)
    v, n = kern.los_query(model.params, model.base, *bvh.arrays(), p1, p2, epsilon)
    return LosResult(int(v), int(n))


def los_query_many(bvh, model, P1, P2, epsilon=1e-5, backend=None):
    """Vectorised :func:`los_query`; returns (visible, evaluations) int arrays."""
    kern = get_backend(backend)
    return kern.los_many(model.params, model.base, *bvh.arrays(),
                         np.asarray(P1, dtype=np.float64).reshape(-1, 3),
                         np.asarray(P2, dtype=np.float64).reshape(-1, 3), epsilon)


def los_dense_oracle(model: TerrainModel, p1, p2, step: float = 1e-4, backend=None) -> LosResult:
    """Uniform sampling at t = 0, step, 2 step, ..., 1 against the full mixture.

    ``evaluations`` is the number of samples the uniform scheme prescribes
    (``ceil(1/step) + 1``), independent of where a blocked path exits early.
    """
    if not 0.0 < step <= 1e-3:
        raise ValueError("step must lie in (0, 1e-3]")
    p1, p2 = _check(p1, p2)
    kern = get_backend(backend)
    v, _ = kern.los_dense(model.params, model.base, p1, p2, step)
    return LosResult(int(v), kern.dense_samples(step) + 1)
