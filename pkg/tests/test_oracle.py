import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtsda.algebra import DenseMatrix
from qtsda.errors import OracleInapplicable
from qtsda.models import build_coefficients, preset
from qtsda.oracle import (_drift, brauer_shift_check, companion_pencil, defect_pencil,
                          dense_truncation, dual_subspace, invariant_subspace_residual,
                          match_spectra, minimal_solution_oracle, pencil_equivalence_check,
                          qbd_coefficients, random_qbd, spectrum)
from qtsda.solver import Standard, Termination, solve_sda


def random_stochastic(rng, n):
    g = rng.random((n, n))
    return g / g.sum(axis=1)[:, None]


def dense_case(seed, n):
    b = random_qbd(n, np.random.default_rng(seed))
    coeffs = qbd_coefficients(*b)
    rep = solve_sda(*coeffs, Standard())
    assert rep.termination is Termination.CONVERGED
    return coeffs, rep.solution.array


# ---------------------------------------------------------------- random QBDs


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_random_qbd_is_positive_recurrent(seed, n):
    b = random_qbd(n, np.random.default_rng(seed))
    assert all(x.min() >= 0 for x in b)
    np.testing.assert_allclose(sum(b).sum(axis=1), 1.0, atol=1e-14)
    assert _drift(*b) < 0


# ---------------------------------------------------------------- minimal solution


def test_oracle_zero_constant_term():
    z = np.zeros((1, 1))
    g = minimal_solution_oracle(z, [[0.5]], [[-0.5]])
    assert g.array[0, 0] == 0.0


def test_oracle_null_recurrent_scalar():
    # -t^2/4 + t/2 - 1/4 = 0 has the double root 1.  The iteration converges
    # like 1/k and the residual is (1 - x)^2 / 4, so G is resolved to about
    # 2 sqrt(tol) and tol must be loose enough to be reached in time.
    g = minimal_solution_oracle([[-0.25]], [[0.5]], [[-0.25]], tol=1e-10)
    assert g.array[0, 0] == pytest.approx(1.0, abs=3e-5)
    assert g.array[0, 0] <= 1.0


def test_oracle_agrees_with_sda():
    b = random_qbd(10, np.random.default_rng(10))
    coeffs = qbd_coefficients(*b)
    g = minimal_solution_oracle(*coeffs).array
    rep = solve_sda(*coeffs)
    assert np.abs(rep.solution.array - g).max() <= 1e-10
    assert g.min() >= 0


def test_oracle_rejects_non_qbd():
    with pytest.raises(OracleInapplicable):
        minimal_solution_oracle([[0.5]], [[0.5]], [[-0.5]])
    with pytest.raises(OracleInapplicable):
        minimal_solution_oracle([[-0.6]], [[0.2]], [[-0.6]])


# ---------------------------------------------------------------- pencils


def test_pencil_equivalence_examples(rng):
    am1, a0, a1 = (rng.random((5, 5)) for _ in range(3))
    assert pencil_equivalence_check(am1, a0, a1, np.zeros((5, 5)))
    m, n = companion_pencil(am1, a0, a1)
    mt, nt = defect_pencil(am1, a0, a1, np.zeros((5, 5)))
    np.testing.assert_array_equal(m, mt)
    np.testing.assert_array_equal(n, nt)
    gt = rng.random((5, 5))
    assert pencil_equivalence_check(am1, a0, a1, gt)
    mt, nt = defect_pencil(am1, a0, a1, gt)
    mt[3, 2] += 1e-6
    assert not pencil_equivalence_check(am1, a0, a1, gt, mt, nt)


@pytest.mark.parametrize("seed", range(5))
def test_invariant_subspaces(seed):
    coeffs, g = dense_case(seed, 6)
    arrays = [c.array for c in coeffs]
    assert invariant_subspace_residual(companion_pencil(*arrays), g, g) <= 1e-13
    gt = random_stochastic(np.random.default_rng(seed), 6)
    assert invariant_subspace_residual(defect_pencil(*arrays, gt), g - gt, g) <= 1e-13
    x = np.random.default_rng(seed + 1).random((6, 6))
    assert invariant_subspace_residual(companion_pencil(*arrays), x, x) > 0


# ---------------------------------------------------------------- dual subspace


def test_dual_subspace_examples(rng):
    v = rng.random((4, 4))
    y, z = dual_subspace(v, np.zeros((4, 4)))
    np.testing.assert_array_equal(y.array, v)
    np.testing.assert_allclose(z.array, v, atol=1e-15)
    y, z = dual_subspace([[0.5]], [[0.9]])
    assert y.array[0, 0] == pytest.approx(10 / 11, abs=1e-15)
    assert z.array[0, 0] == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_dual_subspace_spectrum_and_relation(seed):
    coeffs, _ = dense_case(seed, 5)
    am1, a0, a1 = coeffs
    v = minimal_solution_oracle(a1, a0, am1).array
    gt = random_stochastic(np.random.default_rng(seed), 5) * 0.5
    _, z = dual_subspace(v, gt, coeffs=[c.array for c in coeffs], tol=1e-11)
    assert match_spectra(spectrum(z.array).eigenvalues, spectrum(v).eigenvalues, 1e-9)


# ---------------------------------------------------------------- Brauer shift


def test_brauer_examples():
    assert brauer_shift_check([[0.5, 0.5], [0.3, 0.7]], [1.0, 0.0])
    assert brauer_shift_check([[1.0]], [1.0])
    assert not brauer_shift_check([[0.5, 0.0], [0.0, 0.5]], [1.0, 0.0])


def test_brauer_with_unit_modulus_eigenvalues():
    # the shift does not need 1 to be the only unimodular eigenvalue
    perm = np.roll(np.eye(3), 1, axis=1)
    assert brauer_shift_check(perm, [1.0, 0.0, 0.0])
    shifted = spectrum(perm - np.outer(np.ones(3), [1.0, 0.0, 0.0]))
    assert sorted(abs(e) for e in shifted.eigenvalues)[1:] == pytest.approx([1.0, 1.0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_brauer_on_random_stochastic(seed, n):
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    assert brauer_shift_check(random_stochastic(rng, n), u / u.sum())


def test_match_spectra():
    assert match_spectra([1, 2j], [2j, 1])
    assert not match_spectra([1, 2], [1, 2.1])
    assert not match_spectra([1], [1, 1])


# ---------------------------------------------------------------- truncations


def test_dense_truncation_of_test1_block():
    am1, _, _ = build_coefficients(preset("test1"))
    np.testing.assert_allclose(-dense_truncation(am1, 2, 3), np.array([[3, 3, 0], [2, 0, 1]]) / 9,
                               atol=1e-16)
    with pytest.raises(ValueError):
        dense_truncation(am1, 0)
    assert isinstance(dense_truncation(am1, 3), DenseMatrix)
