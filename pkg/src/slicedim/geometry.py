"""Projection families, Haar rotations, pushforwards, densities and tubes.

The three projection families:

  grassmannian(n, m)    Haar-uniform orthonormal m-frames (angle-uniform for
                        n = 2, m = 1).
  difference(n)         (x, y) -> (x - g(y)) / sqrt(2) for Haar g in O(n);
                        the sqrt(2) keeps the rows orthonormal and is
                        recorded on the Projection as `scale` so callers can
                        recover the unnormalized difference map.
  scaled_difference(n)  (x, y) -> (x - t*y) / sqrt(1 + t^2) with t uniform on
                        a configured interval.

All samplers are counter-based: sample(index) depends only on
(sampler_seed, index), so parallel sampling is deterministic and
order-independent.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

from .fractal_measures import DiscreteMeasure
from .seeding import STREAM_FAMILY, STREAM_ROTATION, rng_for


def unit_ball_volume(n: int) -> float:
    """Lebesgue volume of the unit ball in R^n."""
    return math.exp((n / 2) * math.log(math.pi) - gammaln(n / 2 + 1))


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------

@dataclass
class Rotation:
    """An orthogonal matrix, determinant +-1."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.ascontiguousarray(np.atleast_2d(self.matrix), dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("rotation matrix must be square")
        if np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) > 1e-10:
            raise ValueError("matrix is not orthogonal within 1e-10")
        m.flags.writeable = False
        self.matrix = m

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def determinant(self) -> float:
        return float(np.sign(np.linalg.det(self.matrix)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.matrix.T

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def to_json_dict(self) -> dict:
        return {"n": self.n, "matrix": [float(v) for v in self.matrix.ravel()]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Rotation":
        n = int(d["n"])
        return cls(np.asarray(d["matrix"], dtype=float).reshape(n, n))


def random_rotation(n: int, seed: int, index: int = 0) -> Rotation:
    """Haar-distributed sample from O(n).

    QR of a Gaussian matrix with the R-diagonal sign correction gives Haar
    measure on the full orthogonal group; both determinant components occur
    with probability 1/2 each.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    rng = rng_for(seed, STREAM_ROTATION, index)
    gauss = rng.normal(size=(n, n))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    return Rotation(q)


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

@dataclass
class Projection:
    """Linear map with orthonormal rows from R^n onto R^m.

    scale records the factor by which a family's natural (unnormalized) map
    differs from this orthonormal one; dimension statements are
    scale-invariant so downstream code may ignore it.
    """

    rows: np.ndarray
    scale: float = 1.0

    def __post_init__(self) -> None:
        r = np.ascontiguousarray(np.atleast_2d(self.rows), dtype=float)
        m, n = r.shape
        if m > n:
            raise ValueError("target dimension exceeds source dimension")
        if np.max(np.abs(r @ r.T - np.eye(m))) > 1e-10:
            raise ValueError("rows are not orthonormal within 1e-10")
        r.flags.writeable = False
        self.rows = r

    @property
    def source_dim(self) -> int:
        return self.rows.shape[1]

    @property
    def target_dim(self) -> int:
        return self.rows.shape[0]

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.rows.T

    def complement_basis(self) -> np.ndarray:
        """Orthonormal basis of the kernel, as columns ((n, n-m) array).

        Fiber coordinates pts @ complement_basis() parametrize the planes
        P^-1{u} isometrically, which is the right chart for box-counting
        slices without the transverse slab width polluting the counts.
        """
        n, m = self.source_dim, self.target_dim
        _, _, vt = np.linalg.svd(self.rows, full_matrices=True)
        return np.ascontiguousarray(vt[m:].T)

    def to_json_dict(self) -> dict:
        return {
            "target_dim": self.target_dim,
            "source_dim": self.source_dim,
            "rows": [float(v) for v in self.rows.ravel()],
            "scale": self.scale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict) -> "Projection":
        m, n = int(d["target_dim"]), int(d["source_dim"])
        return cls(np.asarray(d["rows"], dtype=float).reshape(m, n), float(d.get("scale", 1.0)))


FAMILY_KINDS = ("grassmannian", "difference", "scaled_difference")


@dataclass
class ProjectionFamily:
    """A parametrized family of projections with its sampling measure.

    kind "grassmannian": projections R^n -> R^m, Haar-uniform frames.
    kind "difference": projections R^2n -> R^n built from Haar rotations.
    kind "scaled_difference": projections R^2n -> R^n from t uniform on t_range.
    """

    kind: str
    n: int
    m: int = 1
    t_range: tuple[float, float] = (0.5, 2.0)
    sampler_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"kind must be one of {FAMILY_KINDS}")
        if self.kind == "grassmannian":
            if not (1 <= self.m <= self.n):
                raise ValueError("need 1 <= m <= n")
        else:
            self.m = self.n
        if self.t_range[0] > self.t_range[1]:
            raise ValueError("t_range must be ordered")

    @property
    def source_dim(self) -> int:
        return self.n if self.kind == "grassmannian" else 2 * self.n

    @property
    def target_dim(self) -> int:
        return self.m

    def sample(self, index: int) -> Projection:
        rng = rng_for(self.sampler_seed, STREAM_FAMILY, index)
        if self.kind == "grassmannian":
            gauss = rng.normal(size=(self.n, self.n))
            q, r = np.linalg.qr(gauss)
            q = q * np.sign(np.diag(r))
            return Projection(q[: self.m].copy())
        if self.kind == "difference":
            if self.n == 1:
                g = np.array([[1.0 if rng.random() < 0.5 else -1.0]])
            else:
                gauss = rng.normal(size=(self.n, self.n))
                q, r = np.linalg.qr(gauss)
                g = q * np.sign(np.diag(r))
            rows = np.column_stack([np.eye(self.n), -g]) / math.sqrt(2.0)
            return Projection(rows, scale=math.sqrt(2.0))
        t = float(rng.uniform(self.t_range[0], self.t_range[1]))
        norm = math.sqrt(1.0 + t * t)
        rows = np.column_stack([np.eye(self.n), -t * np.eye(self.n)]) / norm
        return Projection(rows, scale=norm)


def sample_projection(family: ProjectionFamily, index: int) -> Projection:
    """Deterministic sample of the family at the given counter index."""
    return family.sample(index)


# ---------------------------------------------------------------------------
# Pushforward, density, L2 functional
# ---------------------------------------------------------------------------

def project_pushforward(P: Projection, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward of mu under P: atoms mapped, weights preserved."""
    if P.source_dim != mu.ambient_dim:
        raise ValueError("projection source dimension does not match the measure")
    return DiscreteMeasure(
        ambient_dim=P.target_dim,
        atoms=P.apply(mu.atoms),
        weights=mu.weights,
        cell_size=mu.cell_size,
    )


def density_at(nu: DiscreteMeasure, u: np.ndarray, delta: float) -> float:
    """Finite-scale density alpha(m)^-1 delta^-m nu(B(u, delta))."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if nu.cell_size > 0 and delta < 2 * nu.cell_size * (1 - 1e-12):
        raise ValueError(f"delta {delta} below the resolution guard 2*cell_size")
    m = nu.ambient_dim
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return nu.ball_mass(u, delta) / (unit_ball_volume(m) * delta ** m)


def _density_grid(nu: DiscreteMeasure, delta: float, spacing: float):
    lo = nu.bbox_lo - delta
    hi = nu.bbox_hi + delta
    axes = [np.arange(lo[i], hi[i] + spacing, spacing) for i in range(nu.ambient_dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def l2_density_for_projection(
    P: Projection, mu: DiscreteMeasure, delta: float, u_spacing: float
) -> float:
    """Grid estimate of the squared-density integral for one projection."""
    nu = project_pushforward(P, mu)
    if nu.is_empty:
        return 0.0
    pts = _density_grid(nu, delta, u_spacing)
    m = nu.ambient_dim
    masses = nu.ball_masses(pts, delta)
    dens = masses / (unit_ball_volume(m) * delta ** m)
    return float(np.sum(dens ** 2) * u_spacing ** m)


def l2_density_functional(
    family: ProjectionFamily,
    mu: DiscreteMeasure,
    lambda_samples: int,
    delta: float,
    u_spacing: float,
) -> float:
    """Monte Carlo estimate of the family-averaged squared-density integral.

    Finite values over a delta-halving sweep certify the quantitative L2
    boundedness the slicing experiments rest on.
    """
    if lambda_samples < 1:
        raise ValueError("need at least one lambda sample")
    if mu.cell_size > 0 and delta < 2 * mu.cell_size * (1 - 1e-12):
        raise ValueError(f"delta {delta} below the resolution guard 2*cell_size")
    total = 0.0
    for i in range(lambda_samples):
        total += l2_density_for_projection(family.sample(i), mu, delta, u_spacing)
    return total / lambda_samples


# ---------------------------------------------------------------------------
# Mollification and rescaling
# ---------------------------------------------------------------------------

def mollify(
    mu: DiscreteMeasure, delta: float, spacing: float, budget: int = 20_000_000
) -> DiscreteMeasure:
    """Ball-kernel smoothing of mu at scale delta, on a grid of the given spacing.

    Cell weights follow alpha(n)^-1 delta^-n mu(B(center, delta)) * cell
    volume, with the ball membership antialiased linearly over one grid cell;
    the hard indicator at the allowed spacing quantizes ball volumes too
    coarsely to conserve mass.  Total mass is preserved up to boundary
    quantization of order (spacing/delta)^2.
    """
    if mu.is_empty:
        return mu
    if spacing > delta / 4 * (1 + 1e-12):
        raise ValueError("spacing must be <= delta/4")
    n = mu.ambient_dim
    span = (mu.bbox_hi - mu.bbox_lo) + 2 * (delta + spacing)
    cells = int(np.prod(np.ceil(span / spacing) + 1))
    if cells > budget:
        raise ValueError(f"mollification grid needs {cells} cells, over the budget {budget}")
    lo = mu.bbox_lo - delta - spacing
    hi = mu.bbox_hi + delta + spacing
    axes = [np.arange(lo[i], hi[i] + spacing, spacing) for i in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([g.ravel() for g in grids])

    grid_tree = cKDTree(centers)
    pairs = grid_tree.sparse_distance_matrix(
        mu.tree(), delta + spacing, output_type="coo_matrix"
    )
    ramp = np.clip((delta + spacing / 2 - pairs.data) / spacing, 0.0, 1.0)
    weights = np.zeros(len(centers))
    np.add.at(weights, pairs.row, ramp * mu.weights[pairs.col])
    weights *= spacing ** n / (unit_ball_volume(n) * delta ** n)
    return DiscreteMeasure(ambient_dim=n, atoms=centers, weights=weights, cell_size=spacing)


def rescale(mu: DiscreteMeasure, a: np.ndarray, r: float, s: float) -> DiscreteMeasure:
    """Blow-up (mu restricted to B(a,r)) around a at scale r, weights times r^-s.

    The result is supported in the closed unit ball; an empty restriction
    yields the empty measure.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if mu.is_empty:
        return mu
    keep = np.linalg.norm(mu.atoms - a[None, :], axis=1) <= r * (1 + 1e-12)
    atoms = (mu.atoms[keep] - a[None, :]) / r
    return DiscreteMeasure(
        ambient_dim=mu.ambient_dim,
        atoms=atoms,
        weights=mu.weights[keep] * r ** (-s),
        cell_size=mu.cell_size / r,
    )


# ---------------------------------------------------------------------------
# Tube masses
# ---------------------------------------------------------------------------

def tube_mass(mu: DiscreteMeasure, P: Projection, x: np.ndarray, r: float, delta: float) -> float:
    """mu({y in B(x, r): |P(y - x)| <= delta}) by atom summation."""
    if delta <= 0 or r <= 0:
        raise ValueError("r and delta must be positive")
    if mu.cell_size > 0 and delta < 2 * mu.cell_size * (1 - 1e-12):
        raise ValueError(f"delta {delta} below the resolution guard 2*cell_size")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = mu.atoms - x[None, :]
    in_ball = np.sum(diff ** 2, axis=1) <= r * r * (1 + 1e-12)
    proj = np.linalg.norm(diff @ P.rows.T, axis=1)
    return float(mu.weights[in_ball & (proj <= delta * (1 + 1e-12))].sum())


def tube_ratio(
    mu: DiscreteMeasure,
    P: Projection,
    x: np.ndarray,
    r: float,
    delta: float,
    t: float,
    m: int,
) -> float:
    """r^-t delta^-m times the tube mass; the slicing limsup functional."""
    return r ** (-t) * delta ** (-m) * tube_mass(mu, P, x, r, delta)


def tube_sweep(
    mu: DiscreteMeasure,
    P: Projection,
    x: np.ndarray,
    r_values,
    delta_values,
    t: float,
    m: int,
) -> list[tuple[float, float, float, float]]:
    """(r, delta, mass, ratio) rows over a grid of radii and slab widths."""
    rows = []
    for r in r_values:
        for delta in delta_values:
            mass = tube_mass(mu, P, x, float(r), float(delta))
            rows.append(
                (float(r), float(delta), mass, float(r) ** (-t) * float(delta) ** (-m) * mass)
            )
    return rows


def tube_sweep_to_csv(path, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "delta", "mass", "ratio"])
        for r, delta, mass, ratio in rows:
            writer.writerow([repr(r), repr(delta), repr(mass), repr(ratio)])
