"""Fourier transforms of measures, Riesz energies and spherical averages.

Conventions:
  * Fourier transform: muhat(x) = sum_j w_j exp(-2*pi*i x . y_j).
  * s-energy, spatial form: the off-diagonal double sum over atom pairs plus
    a same-cell correction (the expected kernel value between two independent
    uniform points in one quadrature cell), because the continuum energy of a
    quadrature measure is neither the bare off-diagonal sum (too small) nor a
    sum including the diagonal (infinite).
  * s-energy, frequency form: riesz_constant(n, s) times the grid sum of
    |muhat|^2 |x|^(s-n) with the origin node replaced by an exact small-ball
    integral.
  * Spherical averages use the UNNORMALIZED surface measure (total 2*pi for
    n = 2, 4*pi for n = 3).

Measures built by natural_measure record their construction, and every
frequency sweep in this module then uses the factorized transform
(exactly equal to the atom sum, at O(k*N) per node instead of O(N^k)).
"""
from __future__ import annotations

import csv
import math
from functools import lru_cache

import numpy as np
from scipy.special import gamma

from .boxdim import DimFit, fit_loglog
from .fractal_measures import DiscreteMeasure, IfsSpec
from .geometry import unit_ball_volume
from .seeding import STREAM_HAAR_CHECK, rng_for


# ---------------------------------------------------------------------------
# Frequency grids
# ---------------------------------------------------------------------------

class FrequencyGrid:
    """Regular truncation grid for integrals over frequency space.

    Nodes are the lattice points k*spacing with 0 < |x| <= cutoff.  The node
    budget guards against accidentally huge grids in dimension >= 2.
    """

    def __init__(self, ambient_dim: int, cutoff: float, spacing: float, budget: int = 2 ** 24):
        if not (0 < spacing < cutoff):
            raise ValueError("need 0 < spacing < cutoff")
        per_axis = 2 * int(math.floor(cutoff / spacing)) + 1
        if per_axis ** ambient_dim > budget:
            raise ValueError(
                f"grid would have {per_axis ** ambient_dim} nodes, over the budget {budget}"
            )
        self.ambient_dim = ambient_dim
        self.cutoff = float(cutoff)
        self.spacing = float(spacing)

    def nodes(self) -> np.ndarray:
        """All nonzero lattice nodes inside the cutoff ball."""
        kmax = int(math.floor(self.cutoff / self.spacing))
        axis = np.arange(-kmax, kmax + 1) * self.spacing
        grids = np.meshgrid(*([axis] * self.ambient_dim), indexing="ij")
        pts = np.column_stack([g.ravel() for g in grids])
        norms = np.linalg.norm(pts, axis=1)
        return pts[(norms > 0) & (norms <= self.cutoff + 1e-12)]


# ---------------------------------------------------------------------------
# Fourier transforms
# ---------------------------------------------------------------------------

def fourier_transform(mu: DiscreteMeasure, x: np.ndarray) -> complex | np.ndarray:
    """muhat(x) = sum_j w_j exp(-2*pi*i x . y_j); |result| <= total mass.

    x may be a single frequency (n,) or a stack (M, n); atom sums are chunked
    so large stacks stay within memory.
    """
    xi = np.asarray(x, dtype=float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    out = np.empty(len(xi), dtype=complex)
    chunk = max(1, int(4_000_000 // max(1, len(mu))))
    for i0 in range(0, len(xi), chunk):
        block = xi[i0 : i0 + chunk]
        out[i0 : i0 + len(block)] = np.exp(-2j * np.pi * (block @ mu.atoms.T)) @ mu.weights
    return complex(out[0]) if single else out


def ifs_fourier_transform(ifs: IfsSpec, generation: int, x: np.ndarray) -> complex | np.ndarray:
    """Transform of the generation-k natural measure in factorized form.

    The atom set is a k-fold sumset, so the transform is a k-term product of
    branch averages times the cell-center phase.  Numerically identical to
    the atom sum, but O(k*N) per frequency.
    """
    xi = np.asarray(x, dtype=float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    center = np.full(ifs.ambient_dim, 0.5) * ifs.ratio ** generation
    out = np.exp(-2j * np.pi * (xi @ center)).astype(complex)
    for j in range(generation):
        phases = np.exp(-2j * np.pi * (ifs.ratio ** j) * (xi @ ifs.offsets.T))
        out *= phases.mean(axis=1)
    return complex(out[0]) if single else out


def transform_values(mu: DiscreteMeasure, x: np.ndarray) -> np.ndarray:
    """muhat on a stack of frequencies, via the factorized fast path if available."""
    if mu.ifs is not None and mu.generation is not None:
        out = ifs_fourier_transform(mu.ifs, mu.generation, np.atleast_2d(x))
        return np.atleast_1d(out)
    return np.atleast_1d(fourier_transform(mu, np.atleast_2d(x)))


# ---------------------------------------------------------------------------
# Riesz energies
# ---------------------------------------------------------------------------

def riesz_constant(n: int, s: float) -> float:
    """The constant c(n, s) relating the two energy forms.

    c(n, s) = pi^(s - n/2) * Gamma((n-s)/2) / Gamma(s/2).  Validated
    numerically by the spatial-vs-frequency agreement tests rather than
    trusted as given.
    """
    if not (0 < s < n):
        raise ValueError(f"need 0 < s < n, got s={s}, n={n}")
    return math.pi ** (s - n / 2) * gamma((n - s) / 2) / gamma(s / 2)


@lru_cache(maxsize=128)
def same_cell_kernel(n: int, s_key: float) -> float:
    """E |U - V|^(-s) for U, V independent uniform in the unit cube of R^n.

    Evaluated exactly: closed form for n = 1, radially-integrated polar
    quadrature for n = 2 and 3 (the difference W = U - V has the product
    triangular density, and the radial integral of rho^(n-1-s) times that
    polynomial is explicit).  Scales to a cell of side c as c^(-s) * value.
    """
    s = float(s_key)
    if s >= n:
        raise ValueError(f"same-cell kernel diverges for s >= n (s={s}, n={n})")
    if n == 1:
        return 2.0 / ((1.0 - s) * (2.0 - s))
    from scipy import integrate

    if n == 2:
        def inner(phi: float) -> float:
            c, d = math.cos(phi), math.sin(phi)
            L = 1.0 / max(c, d)
            return (
                L ** (2 - s) / (2 - s)
                - (c + d) * L ** (3 - s) / (3 - s)
                + c * d * L ** (4 - s) / (4 - s)
            )

        val, _ = integrate.quad(inner, 0.0, math.pi / 2, limit=200)
        return 4.0 * val
    if n == 3:
        def inner3(theta: float, psi: float) -> float:
            w = (math.sin(psi) * math.cos(theta), math.sin(psi) * math.sin(theta), math.cos(psi))
            L = 1.0 / max(w)
            e1 = sum(w)
            e2 = w[0] * w[1] + w[0] * w[2] + w[1] * w[2]
            e3 = w[0] * w[1] * w[2]
            radial = (
                L ** (3 - s) / (3 - s)
                - e1 * L ** (4 - s) / (4 - s)
                + e2 * L ** (5 - s) / (5 - s)
                - e3 * L ** (6 - s) / (6 - s)
            )
            return radial * math.sin(psi)

        val, _ = integrate.dblquad(inner3, 0.0, math.pi / 2, 0.0, math.pi / 2)
        return 8.0 * val
    raise ValueError("same-cell kernel implemented for ambient dimension <= 3")


def pair_energy(mu: DiscreteMeasure, s: float, chunk: int = 2048) -> float:
    """Off-diagonal part of the s-energy: sum over distinct atom pairs."""
    if mu.is_empty:
        return 0.0
    atoms, w = mu.atoms, mu.weights
    total = 0.0
    for i0 in range(0, len(atoms), chunk):
        block = atoms[i0 : i0 + chunk]
        d2 = np.sum((block[:, None, :] - atoms[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2[:, i0 : i0 + len(block)], 1.0)
        kern = d2 ** (-s / 2)
        np.fill_diagonal(kern[:, i0 : i0 + len(block)], 0.0)
        total += float(w[i0 : i0 + len(block)] @ kern @ w)
    return total


def energy_spatial(mu: DiscreteMeasure, s: float, chunk: int = 2048) -> float:
    """I_s(mu): off-diagonal pair sum plus the same-cell correction."""
    n = mu.ambient_dim
    if not (0 < s < n):
        raise ValueError(f"need 0 < s < n, got s={s}, n={n}")
    if mu.cell_size == 0.0:
        raise ValueError("atomic measure has infinite s-energy (cell_size is 0)")
    if mu.is_empty:
        return 0.0
    diag = float(np.sum(mu.weights ** 2)) * same_cell_kernel(n, round(s, 12)) * mu.cell_size ** (-s)
    return pair_energy(mu, s, chunk) + diag


def energy_fourier(mu: DiscreteMeasure, s: float, grid: FrequencyGrid) -> float:
    """c(n,s) * grid sum of |muhat(x)|^2 |x|^(s-n), small-ball corrected.

    The origin node's cell is replaced by the exact integral of the radial
    weight over the ball of radius spacing/2 against |muhat(0)|^2; the
    aliasing guard spacing <= 1/(4*diameter) keeps the grid able to resolve
    the oscillation of |muhat|^2.
    """
    n = mu.ambient_dim
    if grid.ambient_dim != n:
        raise ValueError("grid dimension does not match the measure")
    if not (0 < s < n):
        raise ValueError(f"need 0 < s < n, got s={s}, n={n}")
    diam = mu.diameter
    if diam > 0 and grid.spacing > 1.0 / (4.0 * diam) * (1 + 1e-12):
        raise ValueError(
            f"grid spacing {grid.spacing} too coarse: aliasing guard needs <= {1.0 / (4 * diam):.6g}"
        )
    nodes = grid.nodes()
    vals = np.abs(transform_values(mu, nodes)) ** 2
    norms = np.linalg.norm(nodes, axis=1)
    total = float(np.sum(vals * norms ** (s - n))) * grid.spacing ** n
    half = grid.spacing / 2.0
    ball = mu.total_mass ** 2 * n * unit_ball_volume(n) * half ** s / s
    return riesz_constant(n, s) * (total + ball)


# ---------------------------------------------------------------------------
# Spherical averages
# ---------------------------------------------------------------------------

def sphere_nodes(n: int, count: int) -> tuple[np.ndarray, float]:
    """Quadrature nodes and the common weight for the unnormalized sphere.

    n = 2: equally spaced angles (trapezoid rule, spectrally accurate for the
    band-limited integrands here).  n = 3: Fibonacci sphere.
    """
    if n == 2:
        th = np.arange(count) * (2 * np.pi / count)
        return np.column_stack([np.cos(th), np.sin(th)]), 2 * np.pi / count
    if n == 3:
        i = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * i / count)
        golden = np.pi * (1 + math.sqrt(5.0))
        th = golden * i
        nodes = np.column_stack(
            [np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)]
        )
        return nodes, 4 * np.pi / count
    raise ValueError("sphere quadrature implemented for ambient_dim in {2, 3}")


def min_sphere_nodes(n: int, r: float, support_radius: float) -> int:
    """Node-count rule: resolve integrand oscillation ~ 2*pi*r*support_radius.

    n = 2 needs ~6 nodes per oscillation period for spectral accuracy of the
    trapezoid rule; n = 3 Fibonacci needs the square of the band limit.
    """
    band = 2 * math.pi * r * max(support_radius, 1e-9)
    if n == 2:
        return max(32, int(math.ceil(2.0 * band)))
    return max(256, int(math.ceil(0.5 * band ** 2)))


def spherical_average(
    nu: DiscreteMeasure, r: float, quadrature_nodes: int | None = None
) -> float:
    """sigma(nu)(r): integral of |nuhat(r v)|^2 over the unit sphere.

    Uses the unnormalized surface measure.  Passing too few nodes for the
    oscillation scale is an error; None picks the documented rule.
    """
    if r <= 1.0:
        raise ValueError("spherical averages are defined for r > 1")
    n = nu.ambient_dim
    needed = min_sphere_nodes(n, r, nu.support_radius)
    if quadrature_nodes is None:
        quadrature_nodes = needed
    elif quadrature_nodes < needed:
        raise ValueError(
            f"{quadrature_nodes} nodes cannot resolve the oscillation at r={r}; need >= {needed}"
        )
    nodes, weight = sphere_nodes(n, quadrature_nodes)
    vals = np.abs(transform_values(nu, r * nodes)) ** 2
    return float(vals.sum() * weight)


def spherical_average_sweep(
    nu: DiscreteMeasure, r_values: np.ndarray, nodes: int | None = None
) -> np.ndarray:
    return np.array([spherical_average(nu, float(r), nodes) for r in r_values])


def decay_exponent_fit(
    nu: DiscreteMeasure, r_values: np.ndarray, nodes: int | None = None
) -> DimFit:
    """Least-squares fit of log sigma(nu)(r) against log r.

    The slope estimates the spherical decay exponent (negative for decaying
    averages).  Frequencies beyond the quadrature trust band 1/(4*cell_size)
    are refused.
    """
    r_values = np.asarray(r_values, dtype=float)
    if len(r_values) < 4:
        raise ValueError("need at least 4 scales for a decay fit")
    if nu.cell_size > 0 and r_values.max() > 1.0 / (4.0 * nu.cell_size) * (1 + 1e-12):
        raise ValueError(
            f"max r {r_values.max():.6g} beyond the resolution-trustworthy band "
            f"{1.0 / (4 * nu.cell_size):.6g}"
        )
    sig = spherical_average_sweep(nu, r_values, nodes)
    if np.any(sig <= 0):
        raise ValueError("spherical average vanished on the sweep; increase nodes")
    return fit_loglog(np.log(r_values), np.log(sig), (float(r_values.min()), float(r_values.max())))


def sweep_to_csv(path, r_values, values, nodes_used) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "spherical_average", "nodes"])
        for r, v, k in zip(r_values, values, nodes_used):
            writer.writerow([repr(float(r)), repr(float(v)), int(k)])


# ---------------------------------------------------------------------------
# Rotation-average identity
# ---------------------------------------------------------------------------

def _polar_tables(
    mu: DiscreteMeasure, nu: DiscreteMeasure, cutoff: float, radial_step: float, n_theta: int
):
    radii = np.arange(radial_step, cutoff + 1e-12, radial_step)
    th = np.arange(n_theta) * (2 * np.pi / n_theta)
    directions = np.column_stack([np.cos(th), np.sin(th)])

    def table(m: DiscreteMeasure) -> np.ndarray:
        out = np.empty((len(radii), n_theta))
        block = max(1, int(2_000_000 // n_theta))
        for i0 in range(0, len(radii), block):
            rr = radii[i0 : i0 + block]
            pts = (rr[:, None, None] * directions[None, :, :]).reshape(-1, 2)
            vals = transform_values(m, pts)
            out[i0 : i0 + len(rr)] = (np.abs(vals) ** 2).reshape(len(rr), n_theta)
        return out

    return radii, table(mu), table(nu)


def rotation_average_identity_check(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    rotation_samples: int,
    grid: FrequencyGrid,
    seed: int = 0,
) -> float:
    """Relative error between the Haar rotation average and its closed form.

    LHS: mean over Haar-sampled g in O(2) of the truncated integral of
    |muhat(xi)|^2 |nuhat(-g^-1 xi)|^2.  RHS: the same integral with the
    rotation average replaced by the spherical average of |nuhat|^2 divided
    by the total surface measure.

    Implementation detail: on a polar grid a rotation acts on the angular
    coordinate alone, so the inner integral is a circular correlation (for
    det +1) or convolution (for det -1) of the two angular profiles.  Both
    are evaluated exactly from FFT coefficients, making the returned error a
    pure Monte Carlo fluctuation — which is precisely the quantity under
    test.  Only ambient dimension 2 is supported.
    """
    if mu.ambient_dim != 2 or nu.ambient_dim != 2:
        raise ValueError("identity check implemented for ambient dimension 2")
    if rotation_samples < 1:
        raise ValueError("need at least one rotation sample")
    support = max(mu.support_radius, nu.support_radius, 1e-9)
    if grid.spacing > 1.0 / (4.0 * support) * (1 + 1e-12):
        raise ValueError("grid spacing too coarse for the supports' oscillation scales")
    band = 2 * math.pi * grid.cutoff * support
    n_theta = 1 << max(6, int(math.ceil(math.log2(4.0 * band))))
    radii, A, B = _polar_tables(mu, nu, grid.cutoff, grid.spacing, n_theta)
    dtheta = 2 * np.pi / n_theta
    dr = grid.spacing

    sig_nu = B.sum(axis=1) * dtheta
    weight_mu = (A.sum(axis=1) * dtheta) * radii * dr
    rhs = float(np.dot(weight_mu, sig_nu)) / (2 * np.pi)
    if rhs == 0.0:
        raise ValueError("degenerate nu: the identity's right-hand side vanishes")

    fa = np.fft.rfft(A, axis=1)
    fb = np.fft.rfft(B, axis=1)
    radial = (radii * dr)[:, None]
    corr = ((fa * np.conj(fb)) * radial).sum(axis=0) * dtheta   # rotations
    conv = ((fa * fb) * radial).sum(axis=0) * dtheta            # reflections

    def eval_series(modes: np.ndarray, lag: float) -> float:
        k = np.arange(len(modes))
        terms = modes * np.exp(1j * k * lag)
        # rfft half-spectrum: double interior modes, Nyquist counted once.
        val = terms[0].real + 2.0 * terms[1:-1].real.sum()
        if n_theta % 2 == 0:
            val += terms[-1].real
        else:
            val += 2.0 * terms[-1].real
        return val / n_theta

    rng = rng_for(seed, STREAM_HAAR_CHECK, 0)
    total = 0.0
    for _ in range(rotation_samples):
        phi = float(rng.uniform(0.0, 2 * np.pi))
        if rng.random() < 0.5:
            # rotation by phi: value needed is B(theta - phi + pi)
            total += eval_series(corr, phi + np.pi)
        else:
            # reflection about angle phi/2: value needed is B(2*(phi/2) - theta + pi)
            total += eval_series(conv, phi + np.pi)
    lhs = total / rotation_samples
    return abs(lhs - rhs) / rhs


def frequency_tail_integral(
    mu: DiscreteMeasure,
    exponent: float,
    cutoff: float,
    radial_step: float = 0.25,
    inner: float = 1.0,
) -> float:
    """Truncated integral of |muhat(xi)|^2 |xi|^(-exponent) over inner < |xi| <= cutoff.

    Evaluated radially through the spherical average; cutoff-stability of
    this value under doubling is the finiteness signal for the energy bound.
    """
    if mu.cell_size > 0 and cutoff > 1.0 / (4.0 * mu.cell_size) * (1 + 1e-12):
        raise ValueError("cutoff beyond the resolution-trustworthy band")
    n = mu.ambient_dim
    radii = np.arange(inner, cutoff + 1e-12, radial_step)
    # sigma is defined for r > 1; nudge the endpoint node off the boundary
    sig = spherical_average_sweep(mu, np.maximum(radii, inner * (1 + 1e-9)))
    integrand = sig * radii ** (n - 1 - exponent)
    return float(np.trapezoid(integrand, radii))
