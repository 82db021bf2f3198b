"""Self-similar sets with exactly known dimension and their natural measures.

An iterated function system here is always of the form x -> ratio*x + offset_i
with one common contraction ratio and branch images that do not overlap
(ratio <= 1/2 on each axis grid).  Under that separation the similarity
dimension log N / log(1/ratio) is the true Hausdorff/box dimension, which is
what makes these sets usable as ground truth.

Measures are finite weighted atom lists.  A generation-k natural measure
represents the limit measure by one atom per generation-k cell (at the cell
center, weight N^-k); every ball-mass query with radius >= cell_size is
answered by summing atom weights, with O(cell_size/radius) relative error.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_ATOM_BUDGET = 6_000_000


class BudgetError(ValueError):
    """Raised when a construction would exceed the configured atom budget."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        return np.sum((points - c) ** 2, axis=1) <= self.radius ** 2 * (1 + 1e-12)


@dataclass(frozen=True)
class BoxRegion:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((points >= lo) & (points <= hi), axis=1)


# ---------------------------------------------------------------------------
# IfsSpec
# ---------------------------------------------------------------------------

@dataclass
class IfsSpec:
    """A uniform-ratio iterated function system with separated branches.

    offsets has one row per branch; branch i is the map x -> ratio*x + offsets[i].
    All branch images of the unit cube must stay inside it and be pairwise
    disjoint except possibly for touching boundaries.
    """

    ambient_dim: int
    ratio: float
    offsets: np.ndarray
    branch_count: int = field(default=0)
    similarity_dim: float = field(default=0.0)

    def __post_init__(self) -> None:
        self.offsets = _readonly(np.atleast_2d(self.offsets))
        n = self.ambient_dim
        if self.offsets.shape[1] != n:
            raise ValueError(f"offsets must have {n} columns, got {self.offsets.shape[1]}")
        if not self.branch_count:
            self.branch_count = self.offsets.shape[0]
        if self.branch_count != self.offsets.shape[0]:
            raise ValueError("branch_count does not match number of offsets")
        if not (0.0 < self.ratio <= 0.5):
            raise ValueError(f"ratio must lie in (0, 1/2], got {self.ratio}")
        expected = math.log(self.branch_count) / math.log(1.0 / self.ratio)
        if not self.similarity_dim:
            self.similarity_dim = expected
        if abs(self.similarity_dim - expected) > 1e-12 * max(1.0, expected):
            raise ValueError("similarity_dim inconsistent with log N / log(1/ratio)")
        if not (0.0 < self.similarity_dim <= n + 1e-12):
            raise ValueError(f"similarity dimension {self.similarity_dim} outside (0, {n}]")
        if np.any(self.offsets < -1e-12) or np.any(self.offsets > 1 - self.ratio + 1e-12):
            raise ValueError("branch images must stay inside the unit cube")
        self._check_separation()

    def _check_separation(self) -> None:
        # generation-1 images are cubes [o, o + ratio]^n; they must not overlap
        # in the interior, i.e. some axis gap >= ratio for every pair.
        o = self.offsets
        for i in range(len(o)):
            for j in range(i + 1, len(o)):
                gaps = np.abs(o[i] - o[j])
                if np.all(gaps < self.ratio - 1e-12):
                    raise ValueError(
                        f"branches {i} and {j} overlap: offset gap {gaps} < ratio {self.ratio}"
                    )

    def to_json_dict(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "ratio": self.ratio,
            "offsets": [list(row) for row in self.offsets],
            "branch_count": self.branch_count,
            "similarity_dim": self.similarity_dim,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict) -> "IfsSpec":
        return cls(
            ambient_dim=int(d["ambient_dim"]),
            ratio=float(d["ratio"]),
            offsets=np.asarray(d["offsets"], dtype=float),
            branch_count=int(d.get("branch_count", 0)),
            similarity_dim=float(d.get("similarity_dim", 0.0)),
        )

    @classmethod
    def from_json(cls, s: str) -> "IfsSpec":
        return cls.from_json_dict(json.loads(s))


def build_cantor_ifs(
    ambient_dim: int,
    target_dim: float,
    branch_layout: str = "corner",
    branches_per_axis: int | Sequence[int] | None = None,
) -> IfsSpec:
    """Build a separated self-similar set with similarity dimension target_dim.

    corner layout: 2^n branches at the corners of the unit cube.
    axis layout: a regular grid of branches with a chosen count per axis,
    which is how factors with more than two branches per axis are made.

    The contraction ratio is forced by N^(-1/target_dim); if that exceeds what
    the layout can separate, the request is rejected along with the largest
    achievable dimension.
    """
    n = ambient_dim
    if n < 1:
        raise ValueError("ambient_dim must be >= 1")
    if not (0.0 < target_dim <= n):
        raise ValueError(f"target_dim must lie in (0, {n}], got {target_dim}")
    if branch_layout == "corner":
        per_axis = [2] * n
    elif branch_layout == "axis":
        if branches_per_axis is None:
            per_axis = [2] * n
        elif isinstance(branches_per_axis, int):
            per_axis = [branches_per_axis] * n
        else:
            per_axis = list(branches_per_axis)
        if len(per_axis) != n or any(b < 1 for b in per_axis):
            raise ValueError("branches_per_axis must give a positive count per axis")
    else:
        raise ValueError(f"unknown branch_layout {branch_layout!r}")

    branch_count = int(np.prod(per_axis))
    if branch_count < 2:
        raise ValueError("need at least 2 branches in total")
    ratio = branch_count ** (-1.0 / target_dim)
    k_max = max(max(per_axis), 2)
    # separation needs the per-axis offset spacing (1-r)/(k-1) >= r, i.e. r <= 1/k.
    if ratio > 1.0 / k_max + 1e-12:
        max_dim = math.log(branch_count) / math.log(k_max)
        raise ValueError(
            f"target_dim {target_dim} needs ratio {ratio:.6g} > 1/{k_max}; branches would "
            f"overlap. Max achievable dimension for this layout is {max_dim:.6g}."
        )
    axes = []
    for b in per_axis:
        if b == 1:
            axes.append(np.array([0.0]))
        else:
            axes.append(np.linspace(0.0, 1.0 - ratio, b))
    grids = np.meshgrid(*axes, indexing="ij")
    offsets = np.column_stack([g.ravel() for g in grids])
    return IfsSpec(ambient_dim=n, ratio=ratio, offsets=offsets)


# ---------------------------------------------------------------------------
# DiscreteMeasure
# ---------------------------------------------------------------------------

@dataclass
class DiscreteMeasure:
    """Weighted atom list standing in for a compactly supported Borel measure.

    cell_size > 0 marks a quadrature measure (each atom represents a cell of
    that side); cell_size == 0 is an exact atomic measure.  Zero weights are
    dropped on construction.  The empty measure (no atoms) is legal and
    flagged through is_empty.
    """

    ambient_dim: int
    atoms: np.ndarray
    weights: np.ndarray
    cell_size: float = 0.0
    total_mass: float = field(default=0.0)
    ifs: IfsSpec | None = None
    generation: int | None = None

    def __post_init__(self) -> None:
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if atoms.size == 0:
            atoms = atoms.reshape(0, self.ambient_dim)
        if atoms.shape[1] != self.ambient_dim:
            raise ValueError(f"atoms must have {self.ambient_dim} columns")
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(weights) != len(atoms):
            raise ValueError("one weight per atom required")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        keep = weights > 0.0
        if not keep.all():
            atoms, weights = atoms[keep], weights[keep]
        self.atoms = _readonly(atoms)
        self.weights = _readonly(weights)
        mass = float(weights.sum())
        if self.total_mass and abs(mass - self.total_mass) > 1e-12 * max(1.0, abs(mass)):
            raise ValueError("total_mass inconsistent with weights")
        self.total_mass = mass
        if self.cell_size < 0:
            raise ValueError("cell_size must be >= 0")
        if len(atoms):
            self.bbox_lo = _readonly(atoms.min(axis=0))
            self.bbox_hi = _readonly(atoms.max(axis=0))
        else:
            self.bbox_lo = _readonly(np.zeros(self.ambient_dim))
            self.bbox_hi = _readonly(np.zeros(self.ambient_dim))
        self._tree: cKDTree | None = None
        self._equal_weight = bool(len(weights)) and bool(
            np.all(np.abs(weights - weights[0]) <= 1e-15 * abs(weights[0]))
        )

    # -- basic queries ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def is_empty(self) -> bool:
        return len(self.atoms) == 0

    @property
    def diameter(self) -> float:
        if self.is_empty:
            return 0.0
        return float(np.linalg.norm(self.bbox_hi - self.bbox_lo))

    @property
    def support_radius(self) -> float:
        """Largest atom norm; controls Fourier-side oscillation scales."""
        if self.is_empty:
            return 0.0
        return float(np.sqrt((self.atoms ** 2).sum(axis=1).max()))

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.atoms)
        return self._tree

    def ball_mass(self, center: np.ndarray, radius: float) -> float:
        """Mass of the closed ball B(center, radius) by atom summation."""
        return float(self.ball_masses(np.atleast_2d(center), radius)[0])

    def ball_masses(self, centers: np.ndarray, radius: float) -> np.ndarray:
        """Vectorized ball masses at a common radius."""
        if self.is_empty:
            return np.zeros(len(centers))
        r = radius * (1 + 1e-12)
        if self._equal_weight:
            counts = self.tree().query_ball_point(centers, r, return_length=True)
            return np.asarray(counts, dtype=float) * self.weights[0]
        idx_lists = self.tree().query_ball_point(centers, r)
        return np.array([self.weights[idx].sum() for idx in idx_lists])

    def sample_atoms(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Indices of atoms drawn with probability proportional to weight."""
        if self.is_empty:
            raise ValueError("cannot sample from the empty measure")
        if self._equal_weight:
            return rng.integers(0, len(self.atoms), size=count)
        p = self.weights / self.total_mass
        return rng.choice(len(self.atoms), size=count, p=p)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        """Same atoms with all weights multiplied by factor."""
        return DiscreteMeasure(
            ambient_dim=self.ambient_dim,
            atoms=self.atoms,
            weights=self.weights * factor,
            cell_size=self.cell_size,
            ifs=self.ifs,
            generation=self.generation,
        )

    def to_csv(self, path) -> None:
        """One row per atom: coordinates then weight."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(self.ambient_dim)] + ["weight"])
            for atom, w in zip(self.atoms, self.weights):
                writer.writerow([repr(float(v)) for v in atom] + [repr(float(w))])


def point_mass(point: Iterable[float], weight: float = 1.0) -> DiscreteMeasure:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    return DiscreteMeasure(ambient_dim=len(p), atoms=p[None, :], weights=[weight])


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------

def ifs_cell_positions(ifs: IfsSpec, generation: int, budget: int = DEFAULT_ATOM_BUDGET) -> np.ndarray:
    """Lower-left corners of the N^k generation-k cells, in branch-digit order.

    Atom index digits are big-endian: the first subdivision choice is the
    slowest-varying digit, so the parent of child i at generation k+1 is
    i // branch_count.
    """
    if generation < 0:
        raise ValueError("generation must be >= 0")
    count = ifs.branch_count ** generation
    if count > budget:
        raise BudgetError(
            f"generation {generation} needs {count} atoms, over the budget of {budget}"
        )
    pos = np.zeros((1, ifs.ambient_dim))
    for j in range(generation):
        step = (ifs.ratio ** j) * ifs.offsets
        pos = (pos[:, None, :] + step[None, :, :]).reshape(-1, ifs.ambient_dim)
    return pos


def natural_measure(ifs: IfsSpec, generation: int, budget: int = DEFAULT_ATOM_BUDGET) -> DiscreteMeasure:
    """Generation-k quadrature of the equal-splitting self-similar measure.

    N^k atoms at cell centers, each of weight N^-k; total mass exactly 1.
    """
    pos = ifs_cell_positions(ifs, generation, budget)
    centers = pos + 0.5 * ifs.ratio ** generation
    n_atoms = len(centers)
    weights = np.full(n_atoms, 1.0 / n_atoms)
    return DiscreteMeasure(
        ambient_dim=ifs.ambient_dim,
        atoms=centers,
        weights=weights,
        cell_size=ifs.ratio ** generation,
        ifs=ifs,
        generation=generation,
    )


def lebesgue_quadrature(
    ambient_dim: int,
    resolution: int,
    lo: float = 0.0,
    hi: float = 1.0,
    budget: int = DEFAULT_ATOM_BUDGET,
) -> DiscreteMeasure:
    """Cell-center quadrature of Lebesgue measure on [lo, hi]^n."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    count = resolution ** ambient_dim
    if count > budget:
        raise BudgetError(f"{count} atoms over the budget of {budget}")
    side = (hi - lo) / resolution
    axis = lo + (np.arange(resolution) + 0.5) * side
    grids = np.meshgrid(*([axis] * ambient_dim), indexing="ij")
    atoms = np.column_stack([g.ravel() for g in grids])
    weights = np.full(count, side ** ambient_dim)
    return DiscreteMeasure(ambient_dim=ambient_dim, atoms=atoms, weights=weights, cell_size=side)


# ---------------------------------------------------------------------------
# Audits and measure algebra
# ---------------------------------------------------------------------------

def _pick_centers(mu: DiscreteMeasure, sample_centers: int | None) -> np.ndarray:
    if sample_centers is None or sample_centers >= len(mu):
        return mu.atoms
    idx = np.linspace(0, len(mu) - 1, sample_centers).round().astype(int)
    return mu.atoms[np.unique(idx)]


def frostman_constant(
    mu: DiscreteMeasure,
    s: float,
    sample_centers: int | None,
    radii: Sequence[float],
) -> float:
    """max over sampled atoms x and radii r of mu(B(x,r)) / r^s.

    Boundedness of this value over a ladder of radii certifies the Frostman
    condition at the tested scales.  Radii below cell_size are rejected: the
    quadrature cannot resolve them.
    """
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0:
        raise ValueError("radii must be nonempty")
    if np.any(radii < mu.cell_size * (1 - 1e-12)):
        raise ValueError("all radii must be >= cell_size")
    if mu.is_empty:
        raise ValueError("empty measure has no Frostman constant")
    centers = _pick_centers(mu, sample_centers)
    best = 0.0
    for r in radii:
        masses = mu.ball_masses(centers, float(r))
        best = max(best, float(masses.max()) / float(r) ** s)
    return best


def lower_density_estimate(
    mu: DiscreteMeasure,
    s: float,
    radii: Sequence[float],
    sample_centers: int | None = None,
) -> float:
    """min over atoms x and radii r of (2r)^-s * mu(B(x,r)).

    A strictly positive value certifies positive lower density at the tested
    scales when mu is read as a constant multiple of the s-dimensional
    measure on its support.
    """
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0:
        raise ValueError("radii must be nonempty")
    if np.any(radii < mu.cell_size * (1 - 1e-12)):
        raise ValueError("all radii must be >= cell_size")
    if mu.is_empty:
        raise ValueError("empty measure has no density")
    centers = _pick_centers(mu, sample_centers)
    worst = math.inf
    for r in radii:
        masses = mu.ball_masses(centers, float(r))
        worst = min(worst, float(masses.min()) * (2.0 * float(r)) ** (-s))
    return worst


def restrict(mu: DiscreteMeasure, region: Ball | BoxRegion) -> DiscreteMeasure:
    """Measure restricted to a ball or box; empty results are allowed."""
    if mu.is_empty:
        return mu
    keep = region.contains(mu.atoms)
    return DiscreteMeasure(
        ambient_dim=mu.ambient_dim,
        atoms=mu.atoms[keep],
        weights=mu.weights[keep],
        cell_size=mu.cell_size,
    )


def product_measure(
    mu: DiscreteMeasure, nu: DiscreteMeasure, budget: int = DEFAULT_ATOM_BUDGET
) -> DiscreteMeasure:
    """Product measure on R^(n+p): atoms are all pairs, weights multiply."""
    count = len(mu) * len(nu)
    if count > budget:
        raise BudgetError(f"product needs {count} atoms, over the budget of {budget}")
    if count == 0:
        return DiscreteMeasure(
            ambient_dim=mu.ambient_dim + nu.ambient_dim,
            atoms=np.zeros((0, mu.ambient_dim + nu.ambient_dim)),
            weights=np.zeros(0),
            cell_size=max(mu.cell_size, nu.cell_size),
        )
    left = np.repeat(mu.atoms, len(nu), axis=0)
    right = np.tile(nu.atoms, (len(mu), 1))
    atoms = np.column_stack([left, right])
    weights = np.repeat(mu.weights, len(nu)) * np.tile(nu.weights, len(mu))
    return DiscreteMeasure(
        ambient_dim=mu.ambient_dim + nu.ambient_dim,
        atoms=atoms,
        weights=weights,
        cell_size=max(mu.cell_size, nu.cell_size),
    )
