import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from slicedim import (
    DiscreteMeasure,
    Projection,
    ProjectionFamily,
    density_at,
    frostman_constant,
    lebesgue_quadrature,
    mollify,
    natural_measure,
    point_mass,
    project_pushforward,
    random_rotation,
    rescale,
    sample_projection,
    tube_mass,
    tube_ratio,
    unit_ball_volume,
)
from slicedim.geometry import l2_density_for_projection, l2_density_functional


def _ks_statistic(values: np.ndarray) -> float:
    # one-sample KS distance to the uniform distribution on [0, 1]
    v = np.sort(values)
    n = len(v)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(ecdf_hi - v)), np.max(np.abs(v - ecdf_lo))))


# ---------------------------------------------------------------------------
# unit ball volumes
# ---------------------------------------------------------------------------

def test_unit_ball_volumes():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4])
def test_rotation_is_orthogonal_with_unit_determinant(n):
    g = random_rotation(n, seed=5, index=11)
    assert np.max(np.abs(g.matrix.T @ g.matrix - np.eye(n))) < 1e-10
    assert abs(abs(np.linalg.det(g.matrix)) - 1.0) < 1e-10


def test_both_determinant_components_reachable():
    dets = {random_rotation(2, seed=1, index=i).determinant for i in range(50)}
    assert dets == {-1.0, 1.0}


def test_haar_mean_of_rotated_basis_vector_vanishes():
    e1 = np.array([1.0, 0.0])
    total = np.zeros(2)
    n_samples = 10_000
    for i in range(n_samples):
        total += random_rotation(2, seed=42, index=i).matrix @ e1
    assert np.linalg.norm(total / n_samples) < 0.02


def test_haar_first_column_angle_uniform():
    n_samples = 10_000
    angles = np.empty(n_samples)
    for i in range(n_samples):
        m = random_rotation(2, seed=7, index=i).matrix
        angles[i] = math.atan2(m[1, 0], m[0, 0])
    u = (angles + math.pi) / (2 * math.pi)
    assert _ks_statistic(u) < 0.02


def test_haar_invariance_under_fixed_composition():
    # angle statistics of g h match those of g for a fixed rotation h
    theta = 0.77
    h = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    n_samples = 10_000
    plain = np.empty(n_samples)
    composed = np.empty(n_samples)
    for i in range(n_samples):
        m = random_rotation(2, seed=13, index=i).matrix
        plain[i] = math.atan2(m[1, 0], m[0, 0])
        mc = m @ h
        composed[i] = math.atan2(mc[1, 0], mc[0, 0])
    pu = np.sort((plain + math.pi) / (2 * math.pi))
    cu = np.sort((composed + math.pi) / (2 * math.pi))
    # two-sample KS
    both = np.concatenate([pu, cu])
    d = 0.0
    for x in both[:: max(1, len(both) // 2000)]:
        d = max(d, abs(np.searchsorted(pu, x, "right") / n_samples
                       - np.searchsorted(cu, x, "right") / n_samples))
    assert d < 0.03


def test_rotation_json_roundtrip():
    from slicedim.geometry import Rotation

    g = random_rotation(3, seed=0, index=3)
    back = Rotation.from_json_dict(g.to_json_dict())
    assert np.allclose(back.matrix, g.matrix)


# ---------------------------------------------------------------------------
# projection families
# ---------------------------------------------------------------------------

def test_grassmannian_2_1_samples_unit_rows():
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=3)
    for i in range(10):
        P = sample_projection(fam, i)
        assert P.rows.shape == (1, 2)
        assert np.linalg.norm(P.rows[0]) == pytest.approx(1.0, abs=1e-12)


def test_difference_family_formula():
    fam = ProjectionFamily("difference", n=2, sampler_seed=9)
    P = fam.sample(4)
    # applied to (x, y) the map gives (x - g(y)) / sqrt(2)
    g = -P.rows[:, 2:] * math.sqrt(2.0)
    x, y = np.array([0.3, -0.2]), np.array([0.5, 0.9])
    out = P.apply(np.concatenate([x, y])[None, :])[0]
    assert np.allclose(out * P.scale, x - g @ y, atol=1e-12)
    assert np.max(np.abs(g.T @ g - np.eye(2))) < 1e-10


def test_scaled_difference_t_zero_is_first_factor():
    fam = ProjectionFamily("scaled_difference", n=2, t_range=(0.0, 0.0), sampler_seed=1)
    P = fam.sample(0)
    x, y = np.array([0.4, 0.1]), np.array([9.9, -3.0])
    out = P.apply(np.concatenate([x, y])[None, :])[0] * P.scale
    assert np.allclose(out, x, atol=1e-12)


def test_scaled_difference_range_respected():
    fam = ProjectionFamily("scaled_difference", n=1, t_range=(0.5, 2.0), sampler_seed=2)
    for i in range(20):
        P = fam.sample(i)
        t = P.scale ** 2 - 1
        assert 0.5 ** 2 - 1e-9 <= t <= 2.0 ** 2 + 1e-9


def test_family_sampling_deterministic():
    fam1 = ProjectionFamily("grassmannian", n=3, m=2, sampler_seed=21)
    fam2 = ProjectionFamily("grassmannian", n=3, m=2, sampler_seed=21)
    assert np.array_equal(fam1.sample(5).rows, fam2.sample(5).rows)


@given(st.integers(0, 200))
@settings(max_examples=30, deadline=None)
def test_projection_contracts_norms(index):
    fam = ProjectionFamily("grassmannian", n=3, m=2, sampler_seed=8)
    P = fam.sample(index)
    rng = np.random.default_rng(index)
    x = rng.normal(size=3)
    assert np.linalg.norm(P.apply(x[None, :])) <= np.linalg.norm(x) + 1e-10


def test_projection_json_roundtrip():
    fam = ProjectionFamily("difference", n=2, sampler_seed=4)
    P = fam.sample(2)
    back = Projection.from_json_dict(P.to_json_dict())
    assert np.allclose(back.rows, P.rows)
    assert back.scale == P.scale


def test_complement_basis_spans_kernel():
    fam = ProjectionFamily("grassmannian", n=3, m=1, sampler_seed=5)
    P = fam.sample(0)
    W = P.complement_basis()
    assert W.shape == (3, 2)
    assert np.max(np.abs(W.T @ W - np.eye(2))) < 1e-10
    assert np.max(np.abs(P.rows @ W)) < 1e-10


# ---------------------------------------------------------------------------
# pushforward
# ---------------------------------------------------------------------------

def test_identity_pushforward_preserves_measure(four_corner_15_g6):
    P = Projection(np.eye(2))
    out = project_pushforward(P, four_corner_15_g6)
    assert np.allclose(out.atoms, four_corner_15_g6.atoms)
    assert out.total_mass == four_corner_15_g6.total_mass


def test_first_factor_pushforward_is_marginal(mid_thirds_ifs):
    from slicedim import product_measure

    mu = natural_measure(mid_thirds_ifs, 4)
    prod = product_measure(mu, mu)
    P = Projection(np.array([[1.0, 0.0]]))
    out = project_pushforward(P, prod)
    assert out.total_mass == pytest.approx(1.0, abs=1e-12)
    # marginal masses per factor atom value agree with mu
    vals, sums = np.unique(np.round(out.atoms.ravel(), 12), return_counts=True)
    assert len(vals) == len(mu)


def test_pushforward_contracts_support(four_corner_15_g6):
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=0)
    P = fam.sample(0)
    out = project_pushforward(P, four_corner_15_g6)
    assert out.diameter <= four_corner_15_g6.diameter + 1e-12


# ---------------------------------------------------------------------------
# density_at
# ---------------------------------------------------------------------------

def test_density_of_lebesgue_is_one_1d():
    nu = lebesgue_quadrature(1, 1024)
    assert density_at(nu, np.array([0.5]), 0.05) == pytest.approx(1.0, abs=0.03)


def test_density_of_lebesgue_is_one_2d(lebesgue_2d_256):
    assert density_at(lebesgue_2d_256, np.array([0.41, 0.57]), 0.1) == pytest.approx(1.0, abs=0.03)


def test_density_of_point_mass_formula():
    nu = point_mass([0.0, 0.0], 1.0)
    delta = 0.2
    expected = 1.0 / (unit_ball_volume(2) * delta ** 2)
    assert density_at(nu, np.array([0.0, 0.0]), delta) == pytest.approx(expected, rel=1e-12)


def test_density_resolution_guard(lebesgue_2d_256):
    with pytest.raises(ValueError, match="resolution"):
        density_at(lebesgue_2d_256, np.array([0.5, 0.5]), lebesgue_2d_256.cell_size / 2)


def test_pushforward_density_mean_conserves_mass(four_corner_15_g7):
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=77)
    P = fam.sample(0)
    nu = project_pushforward(P, four_corner_15_g7)
    lo, hi = nu.atoms.min(), nu.atoms.max()
    delta = 0.02
    us = np.linspace(lo + delta, hi - delta, 200)
    dens = np.array([density_at(nu, np.array([u]), delta) for u in us])
    # mean density * support length ~ total mass (interior grid, mass 1)
    assert float(dens.mean() * (hi - lo)) == pytest.approx(1.0, abs=0.1)


def test_density_integrates_back_to_mass(four_corner_15_g6):
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=3)
    P = fam.sample(1)
    nu = project_pushforward(P, four_corner_15_g6)
    delta = 0.03
    spacing = delta / 2
    lo, hi = nu.atoms.min() - delta, nu.atoms.max() + delta
    us = np.arange(lo, hi + spacing, spacing)
    dens = np.array([density_at(nu, np.array([u]), delta) for u in us])
    integral = float(dens.sum() * spacing)
    assert integral == pytest.approx(nu.total_mass, rel=0.05)


# ---------------------------------------------------------------------------
# L2 density functional
# ---------------------------------------------------------------------------

def test_l2_functional_lebesgue_axis_value():
    mu = lebesgue_quadrature(2, 128)
    P = Projection(np.array([[1.0, 0.0]]))
    val = l2_density_for_projection(P, mu, delta=0.05, u_spacing=0.01)
    # axis marginal of the unit square is uniform: integral of density^2 = 1
    assert val == pytest.approx(1.0, abs=0.08)


def test_l2_functional_finite_for_lebesgue():
    mu = lebesgue_quadrature(2, 128)
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=6)
    val = l2_density_functional(fam, mu, lambda_samples=6, delta=0.05, u_spacing=0.02)
    assert 0.5 < val < 3.0


def test_l2_functional_point_mass_diverges_under_delta_halving():
    mu = point_mass([0.2, 0.8], 1.0)
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=6)
    vals = [
        l2_density_functional(fam, mu, lambda_samples=4, delta=d, u_spacing=d / 2)
        for d in (0.2, 0.1, 0.05)
    ]
    assert vals[1] > 1.5 * vals[0]
    assert vals[2] > 1.5 * vals[1]


def test_l2_functional_stable_for_four_corner(four_corner_15_g7):
    fam = ProjectionFamily("grassmannian", n=2, m=1, sampler_seed=1)
    vals = [
        l2_density_functional(fam, four_corner_15_g7, lambda_samples=6, delta=d, u_spacing=d / 2)
        for d in (0.05, 0.025, 0.0125)
    ]
    assert max(vals) / min(vals) <= 1.15


# ---------------------------------------------------------------------------
# mollify
# ---------------------------------------------------------------------------

def test_mollified_point_mass_is_uniform_ball():
    mu = point_mass([0.0], 1.0)
    delta = 0.1
    out = mollify(mu, delta, delta / 8)
    assert out.total_mass == pytest.approx(1.0, abs=0.02)
    assert np.all(np.abs(out.atoms) <= delta + out.cell_size)
    # interior cells carry the uniform density 1/(2 delta) * spacing
    interior = out.weights[np.abs(out.atoms.ravel()) <= delta / 2]
    assert np.allclose(interior, interior[0], rtol=1e-9)


def test_mollify_preserves_mass(four_corner_15_g6):
    out = mollify(four_corner_15_g6, 0.05, 0.0125)
    assert out.total_mass == pytest.approx(1.0, abs=0.02)


def test_mollify_spacing_guard(mid_thirds_g6):
    with pytest.raises(ValueError, match="delta/4"):
        mollify(mid_thirds_g6, 0.05, 0.02)


def test_mollified_support_in_delta_neighborhood(mid_thirds_g6):
    delta = 3.0 ** (-3)
    out = mollify(mid_thirds_g6, delta, delta / 4)
    d, _ = mid_thirds_g6.tree().query(out.atoms)
    assert np.all(d <= delta + out.cell_size)


# ---------------------------------------------------------------------------
# rescale
# ---------------------------------------------------------------------------

def test_rescale_identity_when_support_in_unit_ball():
    mu = DiscreteMeasure(1, np.array([[-0.4], [0.3]]), [0.5, 0.5])
    out = rescale(mu, np.zeros(1), 1.0, 0.7)
    assert np.allclose(out.atoms, mu.atoms)
    assert np.allclose(out.weights, mu.weights)


@given(w=st.floats(0.1, 5.0), r=st.floats(0.05, 4.0), s=st.floats(0.2, 1.8))
@settings(max_examples=40, deadline=None)
def test_rescale_point_mass_weight_rule(w, r, s):
    mu = point_mass([0.3, 0.4], w)
    out = rescale(mu, np.array([0.3, 0.4]), r, s)
    assert np.allclose(out.atoms, 0.0)
    assert out.total_mass == pytest.approx(w * r ** (-s), rel=1e-12)


def test_rescale_support_in_unit_ball(four_corner_15_g6, rng):
    for _ in range(5):
        a = four_corner_15_g6.atoms[rng.integers(len(four_corner_15_g6))]
        out = rescale(four_corner_15_g6, a, 0.3, 1.5)
        if not out.is_empty:
            assert np.max(np.linalg.norm(out.atoms, axis=1)) <= 1.0 + 1e-9


def test_rescale_exact_scaling_identity(four_corner_15_g7, rng):
    # mu_{a,r}(B(x, rho)) = r^-s mu(B(a + r x, r rho)) holds exactly on atoms
    s = 1.5
    mu = four_corner_15_g7
    for _ in range(8):
        a = mu.atoms[rng.integers(len(mu))]
        r = float(rng.uniform(0.2, 0.7))
        out = rescale(mu, a, r, s)
        x = out.atoms[rng.integers(len(out))]
        rho = float(rng.uniform(0.05, 0.5))
        lhs = out.ball_mass(x, rho)
        rhs = r ** (-s) * mu.ball_mass(a + r * x, r * rho)
        # rhs may also pick up atoms outside B(a, r); only compare when the
        # query ball stays inside the restriction ball
        if np.linalg.norm(x) + rho <= 1.0:
            assert lhs == pytest.approx(rhs, rel=1e-12)


def test_rescale_frostman_invariance(four_corner_15_g7, rng):
    # normalize with the factor-2 headroom mu(B(x, rho)) <= (rho/2)^s; the
    # rescaled measure then passes the (1 + 0.05) rho^s audit at all tested
    # scales (the headroom absorbs the off-ladder interpolation slack)
    s = 1.5
    mu = four_corner_15_g7
    cell = mu.cell_size
    radii = list(np.geomspace(4 * cell, 1.0, 12))
    c_half = max(
        frostman_constant(mu, s, 1024, [r]) * 2.0 ** s for r in radii
    )
    normalized = mu.scaled(1.0 / c_half)
    for _ in range(10):
        a = mu.atoms[rng.integers(len(mu))]
        r = float(rng.uniform(0.2, 0.7))
        out = rescale(normalized, a, r, s)
        if out.is_empty:
            continue
        rho = list(np.geomspace(max(4 * out.cell_size, 0.02), 1.0, 5))
        c = frostman_constant(out, s, 256, rho)
        assert c <= 1.05


# ---------------------------------------------------------------------------
# tube masses
# ---------------------------------------------------------------------------

def test_tube_mass_lebesgue_slab_oracle():
    # mass of {y in B(x, r): |P(y - x)| <= delta} for Lebesgue on the square:
    # analytic slab-cap area 2 * int_{-d}^{d} sqrt(r^2 - u^2) du
    mu = lebesgue_quadrature(2, 2000)
    P = Projection(np.array([[1.0, 0.0]]))
    x = np.array([0.5, 0.5])
    r, delta = 0.25, 0.001
    area, _ = integrate.quad(lambda u: 2 * math.sqrt(r * r - u * u), -delta, delta)
    got = tube_mass(mu, P, x, r, delta)
    assert got == pytest.approx(area, rel=0.02)
    assert got == pytest.approx(4 * r * delta, rel=0.02)


def test_tube_mass_total_when_everything_fits(mid_thirds_g6):
    P = Projection(np.array([[1.0]]))
    out = tube_mass(mid_thirds_g6, P, np.array([0.5]), 2.0, 2.0)
    assert out == pytest.approx(1.0, abs=1e-12)


def test_tube_mass_point_mass_any_positive_window():
    mu = point_mass([0.3, 0.3], 0.7)
    P = Projection(np.array([[0.0, 1.0]]))
    assert tube_mass(mu, P, np.array([0.3, 0.3]), 0.01, 0.01) == pytest.approx(0.7)


def test_tube_ratio_lebesgue_constant():
    # deltas are integer multiples of the cell so the slab edge cuts between
    # atom columns; otherwise cell quantization dominates
    mu = lebesgue_quadrature(2, 1000)
    P = Projection(np.array([[1.0, 0.0]]))
    x = np.array([0.5, 0.5])
    vals = [
        tube_ratio(mu, P, x, r, delta, t=1.0, m=1)
        for r, delta in [(0.25, 0.01), (0.125, 0.01), (0.25, 0.005)]
    ]
    for v in vals:
        assert v == pytest.approx(4.0, rel=0.05)


def _tube_trend_slope(mu, ifs, t, seed):
    # fitted slope of log(ratio) vs log(r): positive slope means the ratio
    # falls as r -> 0
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, math.pi)
    P = Projection(np.array([[math.cos(theta), math.sin(theta)]]))
    x = mu.atoms[rng.integers(len(mu))]
    delta = 2 * mu.cell_size
    rs = [ifs.ratio ** j for j in range(0, 5)]
    vals = [tube_ratio(mu, P, x, r, delta, t=t, m=1) for r in rs]
    good = [(math.log(r), math.log(v)) for r, v in zip(rs, vals) if v > 0]
    xlog = np.array([g[0] for g in good])
    ylog = np.array([g[1] for g in good])
    if len(good) < 3:
        return None
    A = np.column_stack([xlog, np.ones_like(xlog)])
    return float(np.linalg.lstsq(A, ylog, rcond=None)[0][0])


def test_tube_ratio_trends_about_critical_exponent(four_corner_15_ifs, four_corner_15_g7):
    # t below s - m: ratio decreases toward small r; t above: it grows
    down = up = total = 0
    for seed in range(5):
        slope_low = _tube_trend_slope(four_corner_15_g7, four_corner_15_ifs, 0.3, seed)
        slope_high = _tube_trend_slope(four_corner_15_g7, four_corner_15_ifs, 0.7, seed)
        if slope_low is None or slope_high is None:
            continue
        total += 1
        down += slope_low > 0
        up += slope_high < 0
    assert total >= 4
    assert down >= total - 1
    assert up >= total - 1


def test_tube_mass_resolution_guard(mid_thirds_g6):
    P = Projection(np.array([[1.0]]))
    with pytest.raises(ValueError, match="resolution"):
        tube_mass(mid_thirds_g6, P, np.array([0.5]), 0.5, mid_thirds_g6.cell_size / 4)


def test_tube_sweep_csv(tmp_path, four_corner_15_g6):
    from slicedim.geometry import tube_sweep, tube_sweep_to_csv

    P = Projection(np.array([[1.0, 0.0]]))
    x = four_corner_15_g6.atoms[0]
    rows = tube_sweep(
        four_corner_15_g6, P, x, [0.5, 0.25], [0.05, 0.025], t=0.5, m=1
    )
    assert len(rows) == 4
    path = tmp_path / "tubes.csv"
    tube_sweep_to_csv(path, rows)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "r,delta,mass,ratio"
    r, d, mass, ratio = map(float, lines[1].split(","))
    assert ratio == pytest.approx(r ** (-0.5) * d ** (-1) * mass, rel=1e-12)
