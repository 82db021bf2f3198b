"""Dyadic covers, box counting and log-log dimension regression.

Box grids are axis-aligned with the origin fixed at 0; sets get transformed,
grids never do.  Counts on a cover's own scale ladder are exact for the
separated self-similar sets built in this package, which is what lets the
regression reproduce similarity dimensions to machine precision.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .fractal_measures import DEFAULT_ATOM_BUDGET, IfsSpec, ifs_cell_positions
from .seeding import STREAM_GRID_OFFSET, rng_for


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DimFit:
    """Slope/intercept/quality of a log-log regression.

    slope is fitted against log(1/side) for box counts (so it estimates a
    dimension) or against log r for decay sweeps (so it is negative for
    decaying quantities).  r_squared < 0.95 marks the fit unreliable.
    """

    slope: float
    intercept: float
    r_squared: float
    scale_range: tuple[float, float]
    point_count: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.slope):
            raise ValueError("slope must be finite")
        if not (0.0 <= self.r_squared <= 1.0):
            raise ValueError("r_squared must lie in [0, 1]")
        if self.scale_range[0] > self.scale_range[1]:
            raise ValueError("scale_range must be ordered")
        if self.point_count < 2:
            raise ValueError("need at least 2 points")

    @property
    def reliable(self) -> bool:
        return self.r_squared >= 0.95

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "scale_range": list(self.scale_range),
            "point_count": self.point_count,
            "reliable": self.reliable,
        }


def fit_loglog(x: np.ndarray, y: np.ndarray, scale_range: tuple[float, float]) -> DimFit:
    """Unweighted least squares of y against x (both already log scale)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least 2 points for a fit")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(y ** 2))):
        # flat data across the whole scale span: slope 0, flagged unreliable
        return DimFit(0.0, float(y[0]), 0.0, scale_range, len(x))
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    r2 = max(0.0, min(1.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot))
    return DimFit(float(slope), float(intercept), r2, scale_range, len(x))


def dim_fit(counts: Sequence[tuple[float, float]]) -> DimFit:
    """Least-squares slope of log count against log(1/side).

    counts is a list of (side, count) pairs with positive counts; at least 4
    scales are required for a meaningful dimension estimate.
    """
    if len(counts) < 4:
        raise ValueError("need at least 4 scales for a dimension fit")
    sides = np.array([c[0] for c in counts], dtype=float)
    values = np.array([c[1] for c in counts], dtype=float)
    if np.any(sides <= 0) or np.any(values <= 0):
        raise ValueError("sides and counts must be positive")
    order = np.argsort(-sides)
    sides, values = sides[order], values[order]
    return fit_loglog(np.log(1.0 / sides), np.log(values), (float(sides.min()), float(sides.max())))


def scale_ladder(lo: float, hi: float, factor: float = 2.0) -> list[float]:
    """Geometric ladder of box sides from lo up to hi (inclusive-ish)."""
    if lo <= 0 or hi < lo:
        raise ValueError("need 0 < lo <= hi")
    sides = []
    s = lo
    while s <= hi * (1 + 1e-9):
        sides.append(s)
        s *= factor
    return sides


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------

@dataclass
class DyadicCover:
    """Cells of side base^-generation covering a set, identified by centers.

    cube_keys are the integer lattice coordinates of the cells at side
    cube_side (unique by the separation of the underlying construction).
    """

    ambient_dim: int
    generation: int
    cube_side: float
    centers: np.ndarray

    def __post_init__(self) -> None:
        self.centers = np.ascontiguousarray(np.atleast_2d(self.centers), dtype=float)
        if self.centers.size == 0:
            self.centers = self.centers.reshape(0, self.ambient_dim)
        if self.centers.shape[1] != self.ambient_dim:
            raise ValueError("centers must match ambient_dim")
        if self.cube_side <= 0:
            raise ValueError("cube_side must be positive")
        if self.generation > 0:
            base = self.cube_side ** (-1.0 / self.generation)
            if abs(self.cube_side * base ** self.generation - 1.0) > 1e-12:
                raise ValueError("cube_side inconsistent with generation")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def base(self) -> float:
        if self.generation == 0:
            return 1.0
        return self.cube_side ** (-1.0 / self.generation)

    @cached_property
    def cube_keys(self) -> np.ndarray:
        keys = np.floor(self.centers / self.cube_side).astype(np.int64)
        return np.unique(keys, axis=0)

    @property
    def diameter(self) -> float:
        if len(self.centers) == 0:
            return 0.0
        span = self.centers.max(axis=0) - self.centers.min(axis=0) + self.cube_side
        return float(np.linalg.norm(span))

    def keys_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"k{i}" for i in range(self.ambient_dim)])
            for row in self.cube_keys:
                writer.writerow([int(v) for v in row])

    def centers_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(self.ambient_dim)])
            for row in self.centers:
                writer.writerow([repr(float(v)) for v in row])


def cover_from_ifs(ifs: IfsSpec, generation: int, budget: int = DEFAULT_ATOM_BUDGET) -> DyadicCover:
    """The N^k generation-k cells of the IFS, keyed on a lattice of side ratio^k."""
    pos = ifs_cell_positions(ifs, generation, budget)
    side = ifs.ratio ** generation
    return DyadicCover(
        ambient_dim=ifs.ambient_dim,
        generation=generation,
        cube_side=side,
        centers=pos + 0.5 * side,
    )


def product_cover(a: DyadicCover, b: DyadicCover, budget: int = DEFAULT_ATOM_BUDGET) -> DyadicCover:
    """Cover of a product set; resolution is the coarser factor's cube side."""
    count = len(a) * len(b)
    if count > budget:
        raise ValueError(f"product cover needs {count} cells, over the budget of {budget}")
    left = np.repeat(a.centers, len(b), axis=0)
    right = np.tile(b.centers, (len(a), 1))
    return DyadicCover(
        ambient_dim=a.ambient_dim + b.ambient_dim,
        generation=max(a.generation, b.generation),
        cube_side=max(a.cube_side, b.cube_side),
        centers=np.column_stack([left, right]),
    )


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------

def _as_points(obj: np.ndarray) -> np.ndarray:
    pts = np.asarray(obj, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _count_points(points: np.ndarray, side: float, shift: np.ndarray | None = None) -> int:
    if len(points) == 0:
        return 0
    pts = points if shift is None else points - shift
    keys = np.floor(pts / side).astype(np.int64)
    return len(np.unique(keys, axis=0))


def box_count(
    obj: DyadicCover | np.ndarray,
    side: float,
    offsets: int = 0,
    seed: int = 0,
) -> float:
    """Number of side-sized grid cubes meeting the input set.

    With offsets > 0 the count is averaged over that many random grid
    translations (first one always the origin-aligned grid); this smooths the
    lattice wobble of sets whose natural scales are irrational relative to
    the grid.  Counting below the input's own resolution is refused.
    """
    if side <= 0:
        raise ValueError("side must be positive")
    if isinstance(obj, DyadicCover):
        if side < obj.cube_side * (1 - 1e-9):
            raise ValueError(
                f"side {side} below the cover resolution {obj.cube_side}"
            )
        points = obj.centers
    else:
        points = _as_points(obj)
    if len(points) == 0:
        return 0
    if offsets <= 0:
        return _count_points(points, side)
    rng = rng_for(seed, STREAM_GRID_OFFSET, 0)
    total = _count_points(points, side)
    for _ in range(offsets - 1):
        shift = rng.uniform(0.0, side, size=points.shape[1])
        total += _count_points(points, side, shift)
    return total / offsets


def count_sweep(
    obj: DyadicCover | np.ndarray,
    sides: Sequence[float],
    offsets: int = 0,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """(side, count) pairs over a ladder of sides."""
    return [(float(s), box_count(obj, float(s), offsets=offsets, seed=seed)) for s in sides]


def point_counts(points: np.ndarray, sides: Sequence[float]) -> list[tuple[float, int]]:
    """(side, count) box counts of a nonempty point set, floored at 1."""
    pts = _as_points(points)
    return [(float(s), max(1, _count_points(pts, float(s)))) for s in sides]


def fit_point_dim(points: np.ndarray, sides: Sequence[float]) -> DimFit:
    """Box-count dimension fit of a point set over the given ladder."""
    return dim_fit(point_counts(points, sides))


def sweep_to_csv(path, counts: Sequence[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["side", "count"])
        for side, count in counts:
            writer.writerow([repr(float(side)), repr(float(count))])


# ---------------------------------------------------------------------------
# Slices and intersections
# ---------------------------------------------------------------------------

def slice_set(cover: DyadicCover, P, u: np.ndarray, delta: float) -> np.ndarray:
    """Centers of cover cells within the delta-slab around the plane P^-1{u}.

    P is a geometry.Projection; u is a point in its target space.  The slab
    width must be at least the cover resolution, else the slice is
    meaningless at this generation.
    """
    if delta < cover.cube_side * (1 - 1e-9):
        raise ValueError(f"delta {delta} below cover resolution {cover.cube_side}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    proj = cover.centers @ P.rows.T
    dist = np.linalg.norm(proj - u[None, :], axis=1)
    return cover.centers[dist <= delta]


def intersect_sets(
    cover_a: DyadicCover,
    cover_b: DyadicCover,
    g,
    z: np.ndarray,
    delta: float,
    _tree: cKDTree | None = None,
) -> np.ndarray:
    """A-centers within delta of the transformed set g(B) + z.

    The neighbor search is tree-based (sub-quadratic); callers sweeping many
    z for one rotation should pass a prebuilt tree over g(B) via _tree.
    """
    if max(cover_a.cube_side, cover_b.cube_side) > 4 * min(cover_a.cube_side, cover_b.cube_side):
        raise ValueError("cover generations incompatible: cube sides differ by more than 4x")
    if delta < max(cover_a.cube_side, cover_b.cube_side) * (1 - 1e-9):
        raise ValueError("delta below the cover resolution")
    z = np.asarray(z, dtype=float)
    tree = _tree if _tree is not None else transformed_tree(cover_b, g)
    dist, _ = tree.query(cover_a.centers - z[None, :], k=1)
    return cover_a.centers[dist <= delta]


def transformed_tree(cover_b: DyadicCover, g) -> cKDTree:
    """KD-tree over the rotated B centers, reusable across z offsets."""
    return cKDTree(cover_b.centers @ np.asarray(g.matrix).T)
