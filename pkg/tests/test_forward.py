import numpy as np
import pytest

from nlborn.bounds import cubic_constants
from nlborn.discretization import build_disk_grid, make_sensor_layout
from nlborn.errors import FixedPointDivergenceError
from nlborn.forward import (BornSeries, Nonlinearity, born_sum,
                            born_term_equal_args, build_forward_operators,
                            fixed_point_solve, k_n_apply,
                            kn_field_single_source, scattering_data)
from nlborn.helmholtz import B_SIGN, Field, b_apply, compute_mu


def admissible_cubic(small_gop, small_u0, gaussian_beta, fraction=0.2):
    mu = compute_mu(small_gop)
    _, K = cubic_constants(small_u0.sup_norm)
    scale = fraction / (K * mu)
    return Nonlinearity.cubic(Field(scale * gaussian_beta.values, gaussian_beta.grid))


def test_fixed_point_zero_beta(small_grid, small_op, small_gop, small_u0):
    nl = Nonlinearity.cubic(Field(np.zeros(small_grid.n_nodes), small_grid))
    res = fixed_point_solve(small_op, small_gop, small_u0, nl)
    assert res.iterations == 1
    assert np.array_equal(res.u.values, small_u0.values)


def test_fixed_point_zero_data(small_grid, small_op, small_gop, gaussian_beta):
    u0 = Field(np.zeros(small_grid.n_nodes), small_grid)
    res = fixed_point_solve(small_op, small_gop, u0, Nonlinearity.cubic(gaussian_beta))
    assert np.all(res.u.values == 0.0)


def test_fixed_point_small_beta_error_quadratic(small_op, small_gop, small_u0, gaussian_beta):
    # |u - (u0 + first series term)| = O(|beta|^2)
    nl = admissible_cubic(small_gop, small_u0, gaussian_beta, fraction=0.1)
    errs = []
    for t in (1.0, 0.5):
        scaled = nl.scale(t)
        res = fixed_point_solve(small_op, small_gop, small_u0, scaled, tol=1e-15)
        first = born_term_equal_args(1, small_u0, scaled, small_gop).field
        errs.append(np.max(np.abs(res.u.values - small_u0.values - first.values)))
    ratio = errs[1] / errs[0]
    assert 0.15 < ratio < 0.35  # quadratic scaling gives 0.25


def test_fixed_point_reports_admissibility(small_op, small_gop, small_u0, gaussian_beta):
    nl = admissible_cubic(small_gop, small_u0, gaussian_beta, fraction=0.2)
    res = fixed_point_solve(small_op, small_gop, small_u0, nl, tol=1e-13)
    assert res.admissible
    assert res.stayed_in_ball
    assert res.history[-1] <= 1e-13


def test_fixed_point_divergence_carries_history(small_op, small_gop, small_u0, small_grid):
    huge = Nonlinearity.cubic(Field(np.full(small_grid.n_nodes, 1e4), small_grid))
    with pytest.raises(FixedPointDivergenceError) as err:
        fixed_point_solve(small_op, small_gop, small_u0, huge, max_iter=12)
    assert 1 <= len(err.value.history) <= 12
    assert err.value.history[-1] > 1.0


def test_first_term_is_b_apply(small_gop, small_u0, gaussian_beta, small_grid):
    nl = Nonlinearity.cubic(gaussian_beta)
    term = born_term_equal_args(1, small_u0, nl, small_gop)
    cubed = Field(small_u0.values ** 3, small_grid)
    expected = b_apply(small_gop, cubed, gaussian_beta)
    assert np.allclose(term.field.values, expected.values, rtol=1e-13)


def test_terms_vanish_for_zero_beta(small_gop, small_u0, small_grid):
    nl = Nonlinearity.cubic(Field(np.zeros(small_grid.n_nodes), small_grid))
    series = BornSeries(small_u0, nl, small_gop)
    for n in (1, 2, 5):
        assert np.all(series.term(n).field.values == 0.0)


def test_series_matches_fixed_point(small_op, small_gop, small_u0, gaussian_beta):
    nl = admissible_cubic(small_gop, small_u0, gaussian_beta, fraction=0.3)
    res = fixed_point_solve(small_op, small_gop, small_u0, nl, tol=1e-15)
    psum, norms = born_sum(10, small_u0, nl, small_gop)
    gap = np.max(np.abs(psum.values - res.u.values)) / np.max(np.abs(res.u.values))
    assert gap < 1e-6
    ratios = norms[1:] / norms[:-1]
    mu = compute_mu(small_gop)
    _, K = cubic_constants(small_u0.sup_norm)
    assert np.all(ratios <= K * mu * nl.sup_norm + 0.1)


def test_born_sum_order_one(small_gop, small_u0, gaussian_beta):
    nl = Nonlinearity.cubic(gaussian_beta)
    psum, _ = born_sum(1, small_u0, nl, small_gop)
    term1 = born_term_equal_args(1, small_u0, nl, small_gop)
    assert np.allclose(psum.values, small_u0.values + term1.field.values, rtol=1e-14)


def test_term_norm_bound(small_gop, small_u0, gaussian_beta):
    # measured |K_n(beta..beta)| never exceeds nu (K mu |beta|)^n
    nl = admissible_cubic(small_gop, small_u0, gaussian_beta, fraction=0.5)
    _, norms = born_sum(8, small_u0, nl, small_gop)
    mu = compute_mu(small_gop)
    nu, K = cubic_constants(small_u0.sup_norm)
    bounds = nu * (K * mu * nl.sup_norm) ** np.arange(1, 9)
    assert np.all(norms <= bounds)


def test_kn_multilinearity_toy(toy_setup):
    gop, u0, rng = toy_setup
    args = [Nonlinearity.cubic(Field(rng.randn(3))) for _ in range(3)]
    base = kn_field_single_source(u0, gop, args).values
    scaled = kn_field_single_source(
        u0, gop, [args[0].scale(2.0), args[1], args[2]]).values
    assert np.allclose(scaled, 2.0 * base, rtol=1e-12)
    # additivity in an interior slot
    extra = Nonlinearity.cubic(Field(rng.randn(3)))
    summed = kn_field_single_source(
        u0, gop, [args[0], Nonlinearity.cubic(Field(args[1].component(3) + extra.component(3))), args[2]]).values
    split = base + kn_field_single_source(u0, gop, [args[0], extra, args[2]]).values
    assert np.allclose(summed, split, rtol=1e-10, atol=1e-14)


def test_kn_order_two_hand_expansion(toy_setup):
    gop, u0, rng = toy_setup
    a1 = Nonlinearity.cubic(Field(rng.randn(3)))
    a2 = Nonlinearity.cubic(Field(rng.randn(3)))
    k2 = gop.k ** 2

    def b(v, beta):
        return B_SIGN * k2 * (gop.g_matrix @ (beta * v))

    k1_of_a1 = b(u0.values ** 3, a1.component(3))
    hand = b(3.0 * u0.values ** 2 * k1_of_a1, a2.component(3))
    code = kn_field_single_source(u0, gop, [a1, a2]).values
    assert np.max(np.abs(hand - code)) < 1e-12 * np.max(np.abs(hand))


def test_kn_equal_args_matches_series(small_fw):
    rng = np.random.RandomState(7)
    grid = small_fw.grid
    beta = Nonlinearity.cubic(Field(rng.rand(grid.n_nodes), grid))
    for n in (1, 2, 3):
        data = k_n_apply(small_fw, n, [beta] * n)
        for s in range(small_fw.layout.n_sources):
            series = BornSeries(small_fw.backgrounds[s], beta,
                                small_fw.source_greens(s), trace=small_fw.trace)
            expected = series.term(n).boundary
            assert np.allclose(data[s], expected, rtol=1e-10, atol=1e-18)


def test_kn_argument_count_error(small_fw):
    grid = small_fw.grid
    beta = Nonlinearity.cubic(Field(np.ones(grid.n_nodes), grid))
    with pytest.raises(ValueError):
        k_n_apply(small_fw, 2, [beta])


def test_degree_homogeneity_in_source_strength(small_grid):
    # order-n term scales like gamma^((l-1)n+1); gamma = 0.5 scales exactly
    for degree, expo in ((3, lambda n: 2 * n + 1), (2, lambda n: n + 1)):
        layout_full = make_sensor_layout(2, 4, [1.0], g0=1.0, sigma=0.4)
        layout_half = make_sensor_layout(2, 4, [1.0], g0=0.5, sigma=0.4)
        fw_full = build_forward_operators(small_grid, layout_full, degrees=(degree,))
        fw_half = build_forward_operators(small_grid, layout_half, degrees=(degree,))
        beta = Nonlinearity.single(degree, Field(np.ones(small_grid.n_nodes), small_grid))
        for n in (1, 2, 3):
            full = k_n_apply(fw_full, n, [beta] * n)
            half = k_n_apply(fw_half, n, [beta] * n)
            assert np.allclose(half, 0.5 ** expo(n) * full, rtol=1e-12, atol=1e-300)


def test_scattering_zero_nonlinearity(small_grid):
    layout = make_sensor_layout(4, 8, [1.0], g0=1.0, sigma=0.4)
    nl = Nonlinearity.cubic(Field(np.zeros(small_grid.n_nodes), small_grid))
    data = scattering_data(layout, small_grid, nl)
    assert data.matrix.shape == (4, 8)
    assert np.all(data.matrix == 0.0)


def test_scattering_matrix_shape_paper_layout():
    grid = build_disk_grid(0.25)
    layout = make_sensor_layout(16, 32, [1.0, 2.0], g0=0.01, sigma=0.6)
    nl = Nonlinearity.cubic(Field(np.zeros(grid.n_nodes), grid))
    data = scattering_data(layout, grid, nl)
    assert data.matrix.shape == (16, 32)
    assert set(data.wavenumbers) == {1.0, 2.0}


def test_scattering_matrixfree_matches_dense(small_grid, gaussian_beta):
    layout = make_sensor_layout(3, 6, [1.0], g0=1.0, sigma=0.4)
    nl = Nonlinearity.cubic(Field(0.05 * gaussian_beta.values, small_grid))
    dense_fw = build_forward_operators(small_grid, layout, (3,), dense_greens=True)
    lean_fw = build_forward_operators(small_grid, layout, (3,), dense_greens=False)
    a = scattering_data(layout, small_grid, nl, fw=dense_fw, tol=1e-14)
    b = scattering_data(layout, small_grid, nl, fw=lean_fw, tol=1e-14)
    assert np.allclose(a.matrix, b.matrix, rtol=1e-9, atol=1e-18)


def test_scattering_cubic_scaling(small_grid, gaussian_beta):
    # phi(gamma)/gamma^3 approaches the linearized data as gamma -> 0
    nl = Nonlinearity.cubic(Field(0.2 * gaussian_beta.values, small_grid))
    ratios = []
    for gamma in (0.25, 0.125):
        layout = make_sensor_layout(2, 4, [1.0], g0=gamma, sigma=0.4)
        data = scattering_data(layout, small_grid, nl, tol=1e-16, max_iter=400)
        ratios.append(data.matrix / gamma ** 3)
    scale = np.max(np.abs(ratios[1]))
    assert np.max(np.abs(ratios[0] - ratios[1])) < 0.05 * scale


def test_born_solver_option(small_grid, gaussian_beta):
    layout = make_sensor_layout(2, 4, [1.0], g0=1.0, sigma=0.4)
    nl = Nonlinearity.cubic(Field(0.02 * gaussian_beta.values, small_grid))
    fp = scattering_data(layout, small_grid, nl, solver="fixed_point", tol=1e-14)
    born = scattering_data(layout, small_grid, nl, solver="born", born_order=10)
    assert np.allclose(fp.matrix, born.matrix, rtol=1e-6, atol=1e-20)
