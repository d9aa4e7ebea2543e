import itertools

import numpy as np
import pytest

from pgc import detring as dr
from pgc.circuit import MarginalQuery, expand_joint, likelihood, marginal, marginals
from pgc.errors import ContractError, RefusalError
from pgc.polyring import Poly

from conftest import THREE_JOINT, K_BETA, L_BETA
from oracles import (cofactor_det, dpp_joint, lensemble_joint, marginal_from_joint,
                     random_connected_graph, random_marginal_kernel, random_p0_nonsymmetric,
                     random_psd, spanning_tree_joint, spanning_trees)


def test_det_numeric_examples():
    assert dr.det_numeric(L_BETA + np.eye(3)) == pytest.approx(50.0, abs=1e-10)
    assert dr.det_numeric(np.eye(3)) == 1.0
    assert dr.det_numeric([[1, 0], [0, 4]]) == pytest.approx(4.0)
    assert dr.det_numeric([[1, 2], [2, 4]]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ContractError):
        dr.det_numeric(np.ones((2, 3)))


@pytest.mark.parametrize("backend", ["bird", "evalinterp"])
def test_det_ring_diagonal(backend):
    p = Poly([1, 1], 4)
    z = Poly.zero(4)
    r = dr.det_ring([[p, z], [z, p]], backend)
    assert r.allclose(Poly([1, 2, 1], 4), 1e-12)


def _random_poly_matrix(n, deg, rng):
    return [[rng.standard_normal(deg + 1) for _ in range(n)] for _ in range(n)]


@pytest.mark.parametrize("seed", range(10))
def test_bird_matches_cofactor(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    A = _random_poly_matrix(n, 2, rng)
    expect = cofactor_det(A)
    cap = 2 * n
    got = dr.det_ring([[Poly(c, cap) for c in row] for row in A], "bird").dense()
    ref = np.zeros(cap + 1)
    ref[: len(expect)] = expect
    assert np.abs(got - ref).max() < 1e-8


@pytest.mark.parametrize("seed", range(6))
def test_evalinterp_matches_bird(seed):
    rng = np.random.default_rng(30 + seed)
    A = _random_poly_matrix(6, 2, rng)
    M = [[Poly(c, 12) for c in row] for row in A]
    a = dr.det_ring(M, "bird")
    b = dr.det_ring(M, "evalinterp")
    assert np.abs(a.dense() - b.dense()).max() < 1e-7
    assert dr.det_ring(M, "bird", check=True).allclose(a, 0)


def test_bird_matches_lu_on_constants(rng):
    for n in range(1, 8):
        A = rng.standard_normal((n, n))
        got = dr.bird_det(A[..., None], 0)[0]
        assert got == pytest.approx(np.linalg.det(A), rel=1e-9, abs=1e-12)


def test_det_ring_truncates():
    p = Poly([1, 1], 1)
    z = Poly.zero(1)
    assert dr.det_ring([[p, z], [z, p]]).allclose(Poly([1, 2], 1), 1e-12)


def test_det_ring_check_flags_disagreement(monkeypatch):
    monkeypatch.setattr(dr, "evalinterp_det", lambda A, cap: np.zeros(cap + 1))
    M = [[Poly([1, 1], 2)]]
    with pytest.raises(dr.InternalConsistencyError):
        dr.det_ring(M, check=True)


@pytest.mark.parametrize("backend", ["bird", "evalinterp"])
def test_lensemble_three(backend):
    g = dr.lensemble_gp(dr.Kernel(L_BETA, dr.LENSEMBLE), backend)
    assert likelihood(g, [1, 0, 1]) == pytest.approx(0.08, abs=1e-12)
    assert np.allclose(expand_joint(g), THREE_JOINT, atol=1e-12)


def test_lensemble_zero_kernel():
    g = dr.lensemble_gp(np.zeros((4, 4)))
    joint = expand_joint(g)
    assert joint[0] == pytest.approx(1.0) and np.abs(joint[1:]).max() < 1e-12


def test_lensemble_degenerate():
    with pytest.raises(RefusalError):
        dr.lensemble_gp(-np.eye(2))


@pytest.mark.parametrize("seed", range(10))
def test_lensemble_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    L = random_psd(n, rng)
    for backend in ("evalinterp", "bird"):
        g = dr.lensemble_gp(dr.Kernel(L, dr.LENSEMBLE), backend)
        assert np.abs(expand_joint(g) - lensemble_joint(L)).max() < 1e-9


def test_dpp_three():
    g = dr.dpp_gp(dr.Kernel(K_BETA, dr.MARGINAL))
    assert marginal(g, MarginalQuery({0})) == pytest.approx(0.3, abs=1e-12)
    assert marginal(g, MarginalQuery({0, 1})) == pytest.approx(0.20, abs=1e-12)
    assert marginal(g, MarginalQuery()) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(expand_joint(g), THREE_JOINT, atol=1e-12)


def test_dpp_marginal_direct():
    K = dr.Kernel(K_BETA, dr.MARGINAL)
    assert dr.dpp_marginal_direct(K, {2}) == pytest.approx(0.8)
    assert dr.dpp_marginal_direct(K, set()) == 1.0
    g = dr.dpp_gp(K)
    assert dr.dpp_marginal_direct(K, {0, 1, 2}) == pytest.approx(
        marginal(g, MarginalQuery({0, 1, 2})), abs=1e-9)


def test_dpp_refuses_invalid():
    with pytest.raises(RefusalError):
        dr.dpp_gp(dr.Kernel(np.diag([0.5, 1.5]), dr.MARGINAL))


@pytest.mark.parametrize("seed", range(8))
def test_dpp_marginals_equal_principal_minors(seed):
    rng = np.random.default_rng(60 + seed)
    n = int(rng.integers(1, 9))
    K = random_marginal_kernel(n, rng)
    g = dr.dpp_gp(K)
    subsets = [set(s) for r in range(n + 1) for s in itertools.combinations(range(n), r)]
    got = marginals(g, [MarginalQuery(s) for s in subsets])
    expect = [dr.dpp_marginal_direct(K, s) for s in subsets]
    assert np.abs(got - expect).max() < 1e-9
    assert np.abs(expand_joint(g) - dpp_joint(K)).max() < 1e-9


def test_l_to_marginal_kernel_examples():
    K = dr.l_to_marginal_kernel(L_BETA)
    assert K.kind == dr.MARGINAL
    assert np.allclose(K.matrix, K_BETA, atol=1e-12)
    assert np.allclose(dr.l_to_marginal_kernel(np.eye(3)).matrix, 0.5 * np.eye(3))


@pytest.mark.parametrize("seed", range(6))
def test_l_to_marginal_kernel_same_distribution(seed):
    rng = np.random.default_rng(70 + seed)
    n = int(rng.integers(1, 9))
    L = random_psd(n, rng)
    a = expand_joint(dr.lensemble_gp(L))
    b = expand_joint(dr.dpp_gp(dr.l_to_marginal_kernel(L)))
    assert np.abs(a - b).max() < 1e-9


def test_validate_kernel():
    assert dr.validate_kernel(dr.Kernel(L_BETA, dr.LENSEMBLE)).valid
    assert dr.validate_kernel(dr.Kernel(K_BETA, dr.MARGINAL)).valid
    bad = dr.validate_kernel(dr.Kernel(np.diag([0.2, 1.5]), dr.MARGINAL))
    assert not bad.valid and bad.max_eigenvalue == pytest.approx(1.5)
    assert not dr.validate_kernel(dr.Kernel(np.diag([1.0, -0.5]), dr.LENSEMBLE)).valid
    assert not dr.validate_kernel(dr.Kernel([[1, 2], [0, 1]], dr.LENSEMBLE)).valid
    # floating-point noise below tolerance is accepted
    B = np.random.default_rng(1).standard_normal((5, 2))
    assert dr.validate_kernel(dr.Kernel(B @ B.T, dr.LENSEMBLE)).valid


def test_validate_nonsymmetric_behavioural():
    L = np.array([[1.0, 2.0], [-2.0, 1.0]])
    rep = dr.validate_kernel(dr.Kernel(L, dr.NONSYMMETRIC))
    joint = lensemble_joint(L)
    assert rep.valid == bool((joint >= 0).all())
    assert rep.valid and rep.min_probability == pytest.approx(joint.min())
    bad = np.array([[1.0, 0.0], [0.0, -0.5]])
    assert not dr.validate_kernel(dr.Kernel(bad, dr.NONSYMMETRIC)).valid


def test_nonsymmetric_lensemble(rng):
    L = random_p0_nonsymmetric(5, rng)
    g = dr.lensemble_gp(dr.Kernel(L, dr.NONSYMMETRIC))
    assert np.abs(expand_joint(g) - lensemble_joint(L)).max() < 1e-9


def test_kernel_kind_checked():
    with pytest.raises(ContractError):
        dr.Kernel(np.eye(2), "other")
    with pytest.raises(ContractError):
        dr.Kernel(np.ones((2, 3)), dr.LENSEMBLE)


def _complete(n):
    return dr.WeightedGraph(n, [((i, j), 1.0) for i, j in itertools.combinations(range(n), 2)])


def test_spanning_tree_counts():
    ones3 = np.ones((1, 3))
    g3 = dr.spanning_tree_gp(_complete(3))
    from pgc.circuit import evaluate_numeric
    assert evaluate_numeric(g3, ones3[0]) == pytest.approx(3.0)
    g4 = dr.spanning_tree_gp(_complete(4))
    assert evaluate_numeric(g4, np.ones(6)) == pytest.approx(16.0)
    assert len(spanning_trees(4, _complete(4).edges)) == 16


def test_spanning_tree_path():
    G = dr.WeightedGraph(3, [((0, 1), 1.0), ((1, 2), 1.0)])
    joint = expand_joint(dr.spanning_tree_gp(G))
    assert np.allclose(joint, [0, 0, 0, 1], atol=1e-12)


def test_spanning_tree_disconnected():
    G = dr.WeightedGraph(4, [((0, 1), 1.0), ((2, 3), 1.0)])
    assert not G.is_connected()
    with pytest.raises(RefusalError):
        dr.spanning_tree_gp(G)


@pytest.mark.parametrize("seed", range(8))
def test_spanning_tree_matches_enumeration_and_vertex_invariance(seed):
    rng = np.random.default_rng(90 + seed)
    n = int(rng.integers(2, 7))
    G = random_connected_graph(n, rng)
    expect = spanning_tree_joint(G)
    for v in range(n):
        got = expand_joint(dr.spanning_tree_gp(G, removed_vertex=v))
        assert np.abs(got - expect).max() < 1e-9
    norm = expand_joint(dr.spanning_tree_gp(G, normalize=True))
    assert norm.sum() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_lensemble_negative_dependence(seed):
    rng = np.random.default_rng(110 + seed)
    n = int(rng.integers(2, 7))
    joint = expand_joint(dr.lensemble_gp(random_psd(n, rng)))
    for i, j in itertools.combinations(range(n), 2):
        pij = marginal_from_joint(joint, n, {i, j}, set())
        pi = marginal_from_joint(joint, n, {i}, set())
        pj = marginal_from_joint(joint, n, {j}, set())
        assert pij <= pi * pj + 1e-9


def test_affine_determinant_op_count():
    g = dr.lensemble_gp(L_BETA)
    assert g.size() == 2 * 27 + 9


def test_kernel_file_roundtrip(tmp_path):
    k = dr.Kernel(L_BETA, dr.LENSEMBLE)
    p = tmp_path / "k.txt"
    dr.save_kernel(k, p)
    assert p.read_text().splitlines()[0] == "kernel lensemble 3"
    back = dr.load_kernel(p)
    assert back.kind == k.kind and np.array_equal(back.matrix, k.matrix)
    p.write_text("kernel lensemble 2\n1 0\n")
    with pytest.raises(ValueError):
        dr.load_kernel(p)


def test_graph_file_roundtrip(tmp_path):
    G = dr.WeightedGraph(3, [((0, 1), 0.5), ((1, 2), 2.0)])
    p = tmp_path / "g.txt"
    dr.save_graph(G, p)
    assert p.read_text().splitlines() == ["graph 3 2", "1 2 0.5", "2 3 2"]
    back = dr.load_graph(p)
    assert back.n == 3 and list(back.edges) == list(G.edges)
