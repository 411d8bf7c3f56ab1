import itertools

import numpy as np
import pytest

from nlborn.discretization import build_disk_grid, make_sensor_layout
from nlborn.errors import DegenerateRegularizerError
from nlborn.forward import (Nonlinearity, build_forward_operators, k_n_apply,
                            kn_field_single_source, scattering_data)
from nlborn.helmholtz import B_SIGN, Field
from nlborn.inverse import (LinearizedMap, Regularizer, assemble_k1,
                            ibs_reconstruct, operator_norm, projection,
                            pseudoinverse)


@pytest.fixture(scope="module")
def k1_small(small_fw):
    return assemble_k1(small_fw)


@pytest.fixture(scope="module")
def reg_small(k1_small):
    return pseudoinverse(k1_small, 1e-6)


def toy_map(matrix, grid=None):
    layout = make_sensor_layout(1, matrix.shape[0], [1.0])
    return LinearizedMap(matrix=matrix, layout=layout, grid=grid,
                         degrees=(3,), row_wavenumbers=np.ones(matrix.shape[0]))


def test_k1_zero_backgrounds(small_grid):
    layout = make_sensor_layout(3, 5, [1.0], g0=0.0, sigma=0.4)
    fw = build_forward_operators(small_grid, layout, (3,))
    k1 = assemble_k1(fw)
    assert np.all(k1.matrix == 0.0)


def test_k1_column_matches_kn(small_fw, k1_small):
    grid = small_fw.grid
    for j in (0, grid.n_nodes // 2):
        e = np.zeros(grid.n_nodes)
        e[j] = 1.0
        col = k_n_apply(small_fw, 1, [Nonlinearity.cubic(Field(e, grid))]).ravel()
        scale = max(np.max(np.abs(k1_small.matrix[:, j])), 1e-300)
        assert np.max(np.abs(col - k1_small.matrix[:, j])) < 1e-12 * scale


def test_k1_cubic_scaling_in_source_strength(small_grid):
    layout_1 = make_sensor_layout(2, 4, [1.0], g0=1.0, sigma=0.4)
    layout_g = make_sensor_layout(2, 4, [1.0], g0=0.1, sigma=0.4)
    m1 = assemble_k1(build_forward_operators(small_grid, layout_1, (3,))).matrix
    mg = assemble_k1(build_forward_operators(small_grid, layout_g, (3,))).matrix
    scale = np.max(np.abs(m1))
    assert np.max(np.abs(mg / 0.1 ** 3 - m1)) < 1e-10 * scale


def test_k1_general_degree_blocks(small_grid):
    layout = make_sensor_layout(2, 4, [1.0], g0=1.0, sigma=0.4)
    fw = build_forward_operators(small_grid, layout, (2, 3))
    k1 = assemble_k1(fw)
    n = small_grid.n_nodes
    assert k1.matrix.shape == (8, 2 * n)
    # degree blocks are the single-degree maps side by side
    fw2 = build_forward_operators(small_grid, layout, (2,))
    fw3 = build_forward_operators(small_grid, layout, (3,))
    assert np.allclose(k1.matrix[:, :n], assemble_k1(fw2).matrix, rtol=1e-14)
    assert np.allclose(k1.matrix[:, n:], assemble_k1(fw3).matrix, rtol=1e-14)


def test_pseudoinverse_identity_toy():
    k1 = toy_map(np.eye(4))
    for rcond in (1e-6, 0.5):
        reg = pseudoinverse(k1, rcond)
        assert reg.rank == 4
        assert np.allclose(reg.matrix, np.eye(4), atol=1e-14)


def test_pseudoinverse_projector_rank_deficient():
    rng = np.random.RandomState(0)
    a = rng.randn(6, 1) @ rng.randn(1, 9) + 1e-12 * rng.randn(6, 9)
    reg = pseudoinverse(toy_map(a), 1e-6)
    p = reg.matrix @ a
    assert reg.rank == 1
    assert np.max(np.abs(p @ p - p)) < 1e-10


def test_pseudoinverse_nested_ranks(k1_small):
    coarse = pseudoinverse(k1_small, 1e-4)
    fine = pseudoinverse(k1_small, 1e-6)
    assert coarse.rank <= fine.rank
    assert np.allclose(coarse.kept_right_vectors(),
                       fine.kept_right_vectors()[:coarse.rank], atol=1e-12)


def test_pseudoinverse_validation():
    with pytest.raises(ValueError):
        pseudoinverse(toy_map(np.eye(2)), 1.5)
    with pytest.raises(DegenerateRegularizerError):
        pseudoinverse(toy_map(np.zeros((3, 4))), 1e-6)


def test_pseudoinverse_reproduces_kept_subspace(k1_small, reg_small):
    # pinv * K1 acts as the identity on kept right singular vectors
    v = reg_small.kept_right_vectors()[reg_small.rank // 2]
    out = reg_small.apply(k1_small.matrix @ v)
    assert np.max(np.abs(out - v)) < 1e-10


def test_operator_norm_identity_and_scaling():
    reg = pseudoinverse(toy_map(np.eye(3)), 1e-6)
    assert operator_norm(reg) == pytest.approx(1.0)
    reg_scaled = pseudoinverse(toy_map(4.0 * np.eye(3)), 1e-6)
    assert operator_norm(reg_scaled) == pytest.approx(0.25)


def test_operator_norm_sign_enumeration_oracle():
    rng = np.random.RandomState(7)
    reg = pseudoinverse(toy_map(rng.randn(3, 3)), 1e-12)
    pinv = reg.matrix
    brute = 0.0
    for signs in itertools.product([-1.0, 1.0], repeat=3):
        brute = max(brute, np.max(np.abs(pinv @ np.array(signs))))
    assert operator_norm(reg) == pytest.approx(brute, rel=1e-12)


def test_ibs_zero_data(small_fw, reg_small):
    rec = ibs_reconstruct(np.zeros(reg_small.k1.n_rows), reg_small, small_fw, 4)
    assert all(c.sup_norm == 0.0 for c in rec.corrections)


def test_ibs_order_one_is_pinv(small_fw, k1_small, reg_small):
    rng = np.random.RandomState(9)
    phi = rng.randn(k1_small.n_rows)
    rec = ibs_reconstruct(phi, reg_small, small_fw, 1)
    assert np.array_equal(rec.cumulative(1).stack(), reg_small.apply(phi))


def test_ibs_order_two_hand_rolled():
    # tiny real instance: compare against an explicit composition of the
    # second-order inverse step
    grid = build_disk_grid(0.45)
    layout = make_sensor_layout(2, 3, [1.0], g0=1.0, sigma=0.95)
    fw = build_forward_operators(grid, layout, (3,))
    k1 = assemble_k1(fw)
    reg = pseudoinverse(k1, 1e-10)
    rng = np.random.RandomState(13)
    phi = 1e-3 * rng.randn(k1.n_rows)

    rec = ibs_reconstruct(phi, reg, fw, 2)

    c1 = reg.apply(phi)
    c1_nl = Nonlinearity.from_stack(c1, (3,), grid)
    k2_c1 = np.zeros((2, 3))
    for s in range(2):
        u0 = fw.backgrounds[s]
        gop = fw.source_greens(s)

        def b(v, beta):
            return B_SIGN * gop.k ** 2 * (gop.g_matrix @ (beta * v))

        inner = b(u0.values ** 3, c1_nl.component(3))
        k2_c1[s] = fw.trace @ b(3.0 * u0.values ** 2 * inner, c1_nl.component(3))
    c2_hand = -reg.apply(k2_c1.ravel())
    c2_code = rec.corrections[1].stack()
    assert np.max(np.abs(c2_hand - c2_code)) < 1e-12 * max(np.max(np.abs(c2_hand)), 1e-300)


def test_ibs_linearized_consistency(small_fw, k1_small, reg_small):
    rng = np.random.RandomState(21)
    beta = Nonlinearity.cubic(Field(rng.rand(small_fw.grid.n_nodes), small_fw.grid))
    phi = k1_small.apply(beta)
    rec = ibs_reconstruct(phi, reg_small, small_fw, 1)
    proj = projection(reg_small, k1_small, beta)
    assert np.max(np.abs(rec.cumulative(1).stack() - proj.stack())) < 1e-10


def test_ibs_corrections_decay_on_synthetic(small_fw, k1_small, reg_small):
    grid = small_fw.grid
    beta = Nonlinearity.cubic(
        Field(0.05 * np.exp(-np.sum((grid.nodes - [0.2, 0.0]) ** 2, axis=1) / 0.1), grid))
    data = scattering_data(small_fw.layout, grid, beta, fw=small_fw, tol=1e-14)
    rec = ibs_reconstruct(data, reg_small, small_fw, 5)
    norms = rec.correction_norms
    ratios = norms[1:] / norms[:-1]
    assert np.mean(ratios) < 1.0
    assert rec.diverged_at is None


def test_ibs_divergence_guard(small_fw, reg_small):
    rng = np.random.RandomState(33)
    phi = rng.randn(reg_small.k1.n_rows)
    rec = ibs_reconstruct(phi, reg_small, small_fw, 4, guard=1e-12)
    assert rec.diverged_at == 2
    assert rec.order == 1


def test_projection_kept_and_discarded_subspaces(small_fw, k1_small):
    reg = pseudoinverse(k1_small, 1e-4)
    vt_all = np.linalg.svd(k1_small.matrix, full_matrices=True)[2]
    kept = reg.kept_right_vectors()[0]
    nl_kept = Nonlinearity.from_stack(kept, (3,), small_fw.grid)
    out = projection(reg, k1_small, nl_kept)
    assert np.max(np.abs(out.stack() - kept)) < 1e-8
    discarded = vt_all[-1]  # nullspace direction on an underdetermined system
    nl_disc = Nonlinearity.from_stack(discarded, (3,), small_fw.grid)
    out_disc = projection(reg, k1_small, nl_disc)
    assert np.max(np.abs(out_disc.stack())) < 1e-8


def test_projection_zero(small_fw, k1_small, reg_small):
    zero = Nonlinearity.cubic(Field(np.zeros(small_fw.grid.n_nodes), small_fw.grid))
    assert projection(reg_small, k1_small, zero).sup_norm == 0.0


def test_projector_idempotent_on_real_map(k1_small, reg_small):
    p = reg_small.matrix @ k1_small.matrix
    assert np.max(np.abs(p @ p - p)) < 1e-10


def test_row_normalized_variant(k1_small):
    reg = pseudoinverse(k1_small, 1e-6, row_normalize=True)
    rng = np.random.RandomState(2)
    beta = rng.randn(k1_small.matrix.shape[1])
    # still a projector onto a subspace: pinv(K1) K1 idempotent
    p = reg.matrix @ k1_small.matrix
    assert np.max(np.abs(p @ p - p)) < 1e-9
    out = reg.apply(k1_small.matrix @ (p @ beta))
    assert np.max(np.abs(out - p @ beta)) < 1e-8 * max(np.max(np.abs(p @ beta)), 1e-300)


def test_scaling_covariance_of_dimensionless_product(small_grid):
    from nlborn.helmholtz import compute_mu
    products = []
    for g0 in (1.0, 0.1, 0.01):
        layout = make_sensor_layout(2, 4, [1.0], g0=g0, sigma=0.4)
        fw = build_forward_operators(small_grid, layout, (3,))
        reg = pseudoinverse(assemble_k1(fw), 1e-6)
        mu = max(fw.mu_by_k.values())
        products.append(81.0 / 8.0 * mu * operator_norm(reg) * fw.nu0 ** 3)
    assert np.max(np.abs(np.diff(products))) < 1e-8 * products[0]
