import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedsketch import golden
from codedsketch.engine import SketchFamily, SchemeParams
from codedsketch.errors import InsufficientSamplesError, ParameterError, PartitionError
from codedsketch.poly_codec import (
    BlockMatrix,
    EvaluationGrid,
    MatrixPolynomial,
    barycentric_eval,
    interpolate,
    lagrange_basis_coefficients,
    lagrange_combine,
    lagrange_weights,
    layer_entangled,
    partition,
    sketch_polynomials,
    substitute_and_eval,
)


def poly_product_coeffs(P, Q):
    """Coefficients of P(x) @ Q(x) by direct convolution."""
    out = np.zeros((P.degree + Q.degree + 1, P.block_shape[0], Q.block_shape[1]),
                   dtype=np.result_type(P.coeffs, Q.coeffs))
    for a, Pa in enumerate(P.coeffs):
        for b, Qb in enumerate(Q.coeffs):
            out[a + b] += Pa @ Qb
    return out


# ---------------------------------------------------------------- partition


def test_partition_identity():
    bm = partition(np.eye(4), 2, 2)
    np.testing.assert_array_equal(bm[0, 0], np.eye(2))
    np.testing.assert_array_equal(bm[1, 1], np.eye(2))
    assert not bm[0, 1].any() and not bm[1, 0].any()


def test_partition_worked_example_shape():
    bm = partition(np.arange(64.0).reshape(8, 8), 4, 4)
    assert bm.grid == (4, 4) and bm.block_shape == (2, 2) and bm.shape == (8, 8)
    np.testing.assert_array_equal(bm[1, 2], [[20, 21], [28, 29]])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 999))
def test_partition_round_trip(u, v, br, bc, seed):
    M = np.random.default_rng(seed).standard_normal((u * br, v * bc))
    assert partition(M, u, v).assemble().tobytes() == M.tobytes()


def test_partition_random_6x9():
    M = np.random.default_rng(0).standard_normal((6, 9))
    assert partition(M, 3, 3).assemble().tobytes() == M.tobytes()


@pytest.mark.parametrize("shape, u, v", [((5, 4), 2, 2), ((4, 4), 0, 1), ((4,), 1, 1)])
def test_partition_errors(shape, u, v):
    with pytest.raises(PartitionError):
        partition(np.zeros(shape), u, v)


# ---------------------------------------------------------------- entangled layer


def test_entangled_p1_is_identity():
    A = np.random.default_rng(1).standard_normal((4, 3))
    B = np.random.default_rng(2).standard_normal((3, 2))
    rows, cols = layer_entangled(partition(A, 1, 1), partition(B, 1, 1))
    assert rows[0].degree == 0 and cols[0].degree == 0
    np.testing.assert_array_equal(rows[0].coeffs[0], A)
    np.testing.assert_array_equal(cols[0].coeffs[0], B)


def test_entangled_p4_coefficients():
    A = partition(np.arange(32.0).reshape(4, 8), 2, 4)
    B = partition(np.arange(32.0).reshape(8, 4), 4, 2)
    rows, cols = layer_entangled(A, B)
    for k in range(4):
        np.testing.assert_array_equal(rows[1].coeffs[k], A[1, k])
        np.testing.assert_array_equal(cols[0].coeffs[k], B[3 - k, 0])


def test_entangled_product_coefficient_is_block_of_c():
    rng = np.random.default_rng(3)
    p, m, n = 3, 2, 2
    A, B = rng.standard_normal((4, 6)), rng.standard_normal((6, 4))
    rows, cols = layer_entangled(partition(A, m, p), partition(B, p, n))
    C = partition(A @ B, m, n)
    for i in range(m):
        for j in range(n):
            coeff = poly_product_coeffs(rows[i], cols[j])[p - 1]
            np.testing.assert_allclose(coeff, C[i, j], rtol=1e-13, atol=1e-13)


def test_entangled_mismatched_p():
    with pytest.raises(ParameterError):
        layer_entangled(partition(np.zeros((2, 4)), 1, 2), partition(np.zeros((4, 2)), 4, 1))


# ---------------------------------------------------------------- sketch polynomials


def test_single_row_sketch_polynomial():
    params = SchemeParams(p=2, m=1, n=1, bprime=3, d=2)
    fam = SketchFamily.from_seed(4, params)
    A = np.random.default_rng(0).standard_normal((2, 4))
    rows, cols = layer_entangled(partition(A, 1, 2), partition(np.ones((4, 2)), 2, 1))
    F, _ = sketch_polynomials(rows, cols, fam)
    for l, Fl in enumerate(F):
        h, s = fam.row_hashes[l](0), fam.row_signs[l](0)
        assert Fl.terms == ((0, s, h),)
        np.testing.assert_array_equal(Fl.coeffs[:, h], s * rows[0].coeffs)
        assert not np.delete(Fl.coeffs, h, axis=1).any()


def test_golden_first_sketch_polynomial():
    A = np.random.default_rng(5).standard_normal((8, 8))
    Ab = partition(A, 4, 4)
    rows, cols = layer_entangled(Ab, partition(np.eye(8), 4, 4))
    F, _ = sketch_polynomials(rows, cols, golden.family())
    # F_1 = (-A0 + A1 + A3) - A2 alpha, with Ai the row polynomials
    R = [r.coeffs for r in rows]
    np.testing.assert_array_equal(F[0].coeffs[:, 0], -R[0] + R[1] + R[3])
    np.testing.assert_array_equal(F[0].coeffs[:, 1], -R[2])


def test_term_count():
    params = SchemeParams(p=2, m=5, n=3, bprime=4, d=3)
    fam = SketchFamily.from_seed(11, params)
    rows, cols = layer_entangled(partition(np.ones((5, 4)), 5, 2), partition(np.ones((4, 3)), 2, 3))
    F, G = sketch_polynomials(rows, cols, fam)
    assert sum(len(f.terms) for f in F) == 3 * 5
    assert sum(len(g.terms) for g in G) == 3 * 3
    assert all(f.x_degree == 1 and f.alpha_degree == 3 for f in F)


def test_sketch_domain_mismatch():
    fam = SketchFamily.from_seed(0, SchemeParams(1, 2, 2, 2, 1))
    rows, cols = layer_entangled(partition(np.ones((3, 1)), 3, 1), partition(np.ones((1, 2)), 1, 2))
    with pytest.raises(ParameterError):
        sketch_polynomials(rows, cols, fam)


# ---------------------------------------------------------------- Lagrange layer


def test_lagrange_weights_examples():
    np.testing.assert_array_equal(lagrange_weights(1, 7.5), [1.0])
    np.testing.assert_array_equal(lagrange_weights(3, 2), [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(lagrange_weights(3, 4), [1.0, -3.0, 3.0])


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8])
def test_lagrange_basis_coefficients_cardinal(d):
    basis = lagrange_basis_coefficients(d)
    nodes = np.arange(1, d + 1)
    values = np.array([[np.polyval(row[::-1], x) for x in nodes] for row in basis])
    np.testing.assert_allclose(values, np.eye(d), atol=1e-9)
    w = 0.37 + 0.2j
    np.testing.assert_allclose([np.polyval(row[::-1], w) for row in basis],
                               lagrange_weights(d, w), rtol=1e-9)


def _random_combined(seed, p=2, m=3, n=2, width=3, d=3):
    params = SchemeParams(p, m, n, width, d)
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((m * 2, p * 2)), rng.standard_normal((p * 2, n * 2))
    rows, cols = layer_entangled(partition(A, m, p), partition(B, p, n))
    F, G = sketch_polynomials(rows, cols, SketchFamily.from_seed(seed, params))
    return params, F, G, lagrange_combine(F, d), lagrange_combine(G, d)


def test_lagrange_cardinality():
    _, F, _, Fc, _ = _random_combined(1)
    x, a = 0.3 - 0.8j, 1.1 + 0.4j
    for eta in (1, 2, 3):
        np.testing.assert_allclose(Fc(x, a, eta), F[eta - 1](x, a), rtol=1e-12, atol=1e-12)


def test_lagrange_combine_d1_identity():
    _, F, _, _, _ = _random_combined(2, d=1)
    Fc = lagrange_combine(F, 1)
    np.testing.assert_array_equal(Fc(0.5, 2.0, 9.0), F[0](0.5, 2.0))
    with pytest.raises(ParameterError):
        lagrange_combine(F, 2)
    with pytest.raises(ParameterError):
        lagrange_combine([])


def test_substitute_at_one_and_zero():
    params, F, _, Fc, _ = _random_combined(3)
    np.testing.assert_allclose(substitute_and_eval(Fc, 1.0, params.p, params.bprime), F[0](1, 1),
                               rtol=1e-12, atol=1e-12)
    w0 = lagrange_weights(params.d, 0.0)
    expected = sum(w0[l] * F[l].coeffs[0, 0] for l in range(params.d))
    np.testing.assert_allclose(substitute_and_eval(Fc, 0.0, params.p, params.bprime), expected,
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 1.3), st.floats(0, 2 * np.pi))
def test_substitute_matches_expanded_polynomial(seed, r, phi):
    params, _, _, Fc, Gc = _random_combined(seed)
    theta = r * np.exp(1j * phi)
    for comb in (Fc, Gc):
        uni = comb.to_univariate(params.p, params.bprime)
        assert uni.degree == params.share_degree
        direct = substitute_and_eval(comb, theta, params.p, params.bprime)
        np.testing.assert_allclose(direct, uni(theta), rtol=1e-10, atol=1e-10)


def test_product_degree_bookkeeping():
    params, _, _, Fc, Gc = _random_combined(7)
    F = Fc.to_univariate(params.p, params.bprime)
    G = Gc.to_univariate(params.p, params.bprime)
    prod = MatrixPolynomial(poly_product_coeffs(F, G))
    assert prod.effective_degree(1e-12) == params.threshold - 1


# ---------------------------------------------------------------- grids and interpolation


def test_grids():
    g = EvaluationGrid.roots_of_unity(8)
    np.testing.assert_allclose(g.points, np.exp(2j * np.pi * np.arange(8) / 8))
    assert EvaluationGrid.chebyshev(5).points.imag.max() == 0
    assert len(EvaluationGrid.make("roots-of-unity", 3, radius=2.0)) == 3
    with pytest.raises(ParameterError):
        EvaluationGrid(np.array([1, 2, 1]))
    with pytest.raises(ParameterError):
        EvaluationGrid.make("explicit", 3)
    with pytest.raises(ParameterError):
        EvaluationGrid.roots_of_unity(4, radius=0)


def test_interpolate_constant():
    res = interpolate([(0.3, np.array([[2.5]]))], 0)
    np.testing.assert_allclose(res.polynomial.coeffs, [[[2.5]]])


def test_interpolate_square():
    res = interpolate([(1, 1.0), (2, 4.0), (3, 9.0)], 2)
    np.testing.assert_allclose(res.polynomial.coeffs.ravel(), [0, 0, 1], atol=1e-12)


@pytest.mark.parametrize("radius", [1.0, 1.05])
def test_interpolate_degree_74_round_trip(radius):
    coeffs = np.random.default_rng(74).standard_normal(75)
    z = EvaluationGrid.roots_of_unity(75, radius).points
    values = np.polyval(coeffs[::-1], z)
    got = interpolate(list(zip(z, values)), 74).polynomial.coeffs.ravel()
    assert np.max(np.abs(got - coeffs)) <= 1e-9 * np.max(np.abs(coeffs))


@pytest.mark.parametrize("method", ["auto", "solve", "barycentric"])
def test_interpolate_subset_round_trip(method):
    rng = np.random.default_rng(9)
    coeffs = rng.standard_normal((61, 2, 3))
    z = EvaluationGrid.roots_of_unity(64).points
    chosen = rng.choice(64, 61, replace=False)
    poly = MatrixPolynomial(coeffs)
    got = interpolate([(z[j], poly(z[j])) for j in chosen], 60, method).polynomial.coeffs
    assert np.max(np.abs(got - coeffs)) <= 1e-9 * np.max(np.abs(coeffs))


def test_interpolate_uses_first_samples_and_reports_residual():
    z = np.arange(1.0, 6.0)
    samples = [(x, x**2) for x in z[:3]] + [(4.0, 16.0), (5.0, 26.0)]
    res = interpolate(samples, 2)
    assert res.used == 3
    np.testing.assert_allclose(res.polynomial.coeffs.ravel(), [0, 0, 1], atol=1e-12)
    assert res.residual == pytest.approx(1.0)


def test_interpolate_errors():
    with pytest.raises(InsufficientSamplesError) as info:
        interpolate([(1, 1.0), (2, 2.0)], 4)
    assert info.value.shortfall == 3
    with pytest.raises(ParameterError):
        interpolate([(1, 1.0), (1, 2.0)], 1)
    with pytest.raises(ParameterError):
        interpolate([(1, 1.0)], 0, method="newton")


def test_barycentric_eval_hits_nodes_exactly():
    nodes = np.array([0.0, 1.0, 2.0])
    vals = np.array([1.0, 3.0, 7.0])
    out = barycentric_eval(nodes, vals, np.array([1.0, 0.5]))
    assert out[0] == 3.0
    # x^2 + x + 1 at 0.5
    assert out[1] == pytest.approx(1.75)


def test_block_matrix_accessors():
    bm = BlockMatrix(np.zeros((2, 3, 4, 5)))
    assert bm.grid == (2, 3) and bm.block_shape == (4, 5) and bm.shape == (8, 15)
