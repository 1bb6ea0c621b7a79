import io

import numpy as np
import pytest

from fracmix.mesh import (
    CoefficientSpec,
    DomainError,
    EllipticityError,
    assemble,
    build_coefficients,
    build_domain,
    build_shells,
    dump_operator,
)


def test_interval_nodes_and_boundary_split():
    dom = build_domain(1, 8, "left")
    assert dom.n_nodes == 9
    np.testing.assert_allclose(dom.node_coords[:, 0], np.linspace(0, 1, 9))
    assert dom.gamma0_nodes.tolist() == [0]
    assert dom.gamma1_nodes.tolist() == [8]


@pytest.mark.parametrize("spec", [[], "", ()])
def test_empty_dirichlet_part_rejected(spec):
    with pytest.raises(DomainError, match="Gamma0 empty"):
        build_domain(1, 8, spec)


def test_unknown_side_rejected():
    with pytest.raises(DomainError):
        build_domain(1, 8, "top")


def test_square_boundary_counts():
    dom = build_domain(2, 16, ["left"])
    assert dom.n_nodes == 17 * 17
    assert len(dom.gamma0_nodes) == 17
    assert np.all(dom.node_coords[dom.gamma0_nodes, 0] == 0.0)
    # 64 boundary nodes on the 17x17 grid, 17 of them on x = 0
    assert len(dom.gamma1_nodes) == 47
    assert len(np.intersect1d(dom.gamma0_nodes, dom.gamma1_nodes)) == 0


def test_corners_go_to_dirichlet_side():
    dom = build_domain(2, 4, "left,bottom")
    corner = dom.grid_index(4, 0)  # (1, 0) lies on bottom and right
    assert corner in dom.gamma0_nodes
    assert corner not in dom.gamma1_nodes


def test_level_set_is_distance_to_boundary_1d():
    dom = build_domain(1, 10, "left")
    x = dom.node_coords[:, 0]
    np.testing.assert_allclose(dom.h_values, np.minimum(x, 1 - x), atol=1e-15)


def test_identity_coefficient_constants():
    dom = build_domain(2, 6, "left")
    c = build_coefficients(dom, "identity")
    assert c.lambda1 == c.lambda2 == 1.0


def test_constant_diagonal_coefficient():
    dom = build_domain(2, 6, "left")
    c = build_coefficients(dom, CoefficientSpec("diagonal", (2.0, 0.5)))
    assert (c.lambda1, c.lambda2) == (0.5, 2.0)


def test_linear_coefficient_sampled_at_centroids():
    dom = build_domain(1, 100, "left")
    c = build_coefficients(dom, CoefficientSpec("diagonal", (lambda p: 1.0 + p[:, 0],)))
    h = 0.01
    assert c.lambda1 == pytest.approx(1 + h / 2, rel=1e-13)
    assert c.lambda2 == pytest.approx(2 - h / 2, rel=1e-13)


@pytest.mark.parametrize("entries", [(1.0, -0.1), (0.0, 1.0)])
def test_non_elliptic_coefficient_rejected(entries):
    dom = build_domain(2, 4, "left")
    with pytest.raises(EllipticityError):
        build_coefficients(dom, CoefficientSpec("diagonal", entries))


def test_indefinite_full_matrix_rejected():
    dom = build_domain(2, 4, "left")
    with pytest.raises(EllipticityError):
        build_coefficients(dom, CoefficientSpec("full_symmetric", (1.0, 2.0, 1.0)))


def _ops(dim=1, res=8, gamma0="left", coeff="identity", mass_mode="lumped"):
    dom = build_domain(dim, res, gamma0)
    return assemble(dom, build_coefficients(dom, coeff), mass_mode)


def test_interior_stencil_1d():
    ops = _ops(res=8)
    K = ops.K_A.toarray()
    h = 1 / 8
    for i in range(1, 8):
        assert K[i, i - 1] == pytest.approx(-1 / h, rel=1e-14)
        assert K[i, i] == pytest.approx(2 / h, rel=1e-14)
        assert K[i, i + 1] == pytest.approx(-1 / h, rel=1e-14)
    assert np.count_nonzero(K[3]) == 3


def test_lumped_mass_weights_1d():
    ops = _ops(res=8)
    d = ops.M.diagonal()
    h = 1 / 8
    np.testing.assert_allclose(d[1:-1], h, rtol=1e-14)
    np.testing.assert_allclose(d[[0, -1]], h / 2, rtol=1e-14)
    assert ops.M.nnz == 9


@pytest.mark.parametrize("dim,coeff", [(1, "identity"), (2, "identity"),
                                       (2, CoefficientSpec("full_symmetric", (2.0, 0.3, lambda p: 1 + p[:, 1])))])
@pytest.mark.parametrize("mass_mode", ["lumped", "consistent"])
def test_operators_exactly_symmetric(dim, coeff, mass_mode):
    ops = _ops(dim, 6, "left", coeff, mass_mode)
    for mat in (ops.K_A, ops.K_I, ops.M):
        assert abs(mat - mat.T).max() == 0.0


def test_consistent_mass_rows_sum_to_lumped():
    ops_c = _ops(2, 6, "left", mass_mode="consistent")
    ops_l = _ops(2, 6, "left")
    np.testing.assert_allclose(np.asarray(ops_c.M.sum(axis=1)).ravel(), ops_l.M.diagonal(), rtol=1e-13)


def test_constants_have_zero_gradient_energy():
    ops = _ops(2, 6, "left")
    c = np.full(ops.domain.n_nodes, 3.7)
    assert abs(c @ (ops.K_I @ c)) < 1e-12


def test_patch_test_linear_field():
    ops = _ops(res=10)
    u = ops.domain.node_coords[:, 0]
    r = ops.K_A @ u
    np.testing.assert_allclose(r[1:-1], 0.0, atol=1e-12)


def test_ellipticity_sandwich_for_variable_coefficient():
    ops = _ops(2, 8, "left", CoefficientSpec("diagonal", (lambda p: 1 + p[:, 0], 3.0)))
    rng = np.random.default_rng(5)
    for _ in range(50):
        v = rng.standard_normal(ops.domain.n_nodes)
        a, e = v @ (ops.K_A @ v), v @ (ops.K_I @ v)
        assert ops.coeff.lambda1 * e <= a * (1 + 1e-12)
        assert a <= ops.coeff.lambda2 * e * (1 + 1e-12)


def test_free_dofs_exclude_dirichlet_nodes():
    ops = _ops(2, 5, "left,top")
    assert len(np.intersect1d(ops.free_dofs, ops.domain.gamma0_nodes)) == 0
    assert len(ops.free_dofs) + len(ops.domain.gamma0_nodes) == ops.domain.n_nodes
    v = np.arange(len(ops.free_dofs), dtype=float)
    np.testing.assert_array_equal(ops.extend(v)[ops.free_dofs], v)


def test_resolution_floor():
    with pytest.raises(DomainError):
        build_domain(1, 2, "left")


def test_operator_dump_format():
    ops = _ops(res=4)
    buf = io.StringIO()
    dump_operator(buf, "K_A", ops.K_A)
    lines = buf.getvalue().splitlines()
    assert lines[0] == f"# K_A 5 5 {ops.K_A.nnz}"
    assert len(lines) == 1 + ops.K_A.nnz
    i, j, v = lines[1].split()
    assert (int(i), int(j)) == (0, 0)
    assert float(v) == pytest.approx(ops.K_A[0, 0], rel=1e-16)


def test_shells_1d_positions():
    dom = build_domain(1, 10, "left")
    fam = build_shells(dom, 3)
    np.testing.assert_allclose(fam.tau_values, [0.2, 0.1, 0.0])
    xs = [dom.node_coords[sh.facet_nodes[0, 0], 0] for sh in fam.shells]
    np.testing.assert_allclose(xs, [0.8, 0.9, 1.0])
    assert all(sh.normals[0, 0] == 1.0 for sh in fam.shells)


def test_shells_2d_right_edge_columns():
    dom = build_domain(2, 16, "left,bottom,top")
    fam = build_shells(dom, 2)
    xs = [np.unique(dom.node_coords[sh.facet_nodes, 0]) for sh in fam.shells]
    np.testing.assert_allclose(xs[1], [1.0])
    np.testing.assert_allclose(xs[0], [1 - 1 / 16])
    # 16 vertical facets of length 1/16 on each column
    assert fam.shells[0].measures.sum() == pytest.approx(1.0)


def test_shells_are_nested():
    dom = build_domain(2, 12, "left")
    fam = build_shells(dom, 4)
    depth = []
    for sh in fam.shells:
        x = dom.node_coords[sh.facet_nodes]
        # distance of each facet midpoint to the Gamma_1 sides (right, bottom, top)
        mid = x.mean(axis=1)
        depth.append(np.minimum.reduce([1 - mid[:, 0], mid[:, 1], 1 - mid[:, 1]]).max())
    assert np.all(np.diff(fam.tau_values) < 0)
    assert all(d <= t + 1e-14 for d, t in zip(depth, fam.tau_values))


@pytest.mark.parametrize("n_shells", [1, 6])
def test_shell_count_limits(n_shells):
    dom = build_domain(1, 10, "left")
    with pytest.raises(DomainError):
        build_shells(dom, n_shells)
