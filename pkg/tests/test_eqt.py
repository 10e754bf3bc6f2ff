import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtsda.errors import WindingError
from qtsda.oracle import dense_truncation
from qtsda.qt import CompactCorrection, EqtMatrix, LaurentSymbol, toeplitz_times

SETTINGS = settings(max_examples=40, deadline=None)


@st.composite
def eqt_matrices(draw, qt=False, scale=1.0):
    """Small random EQT matrices with all three parts present."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    lo, hi = draw(st.integers(-4, 0)), draw(st.integers(0, 4))
    sym = LaurentSymbol(rng.uniform(-1, 1, hi - lo + 1), lo)
    r, c = draw(st.integers(1, 8)), draw(st.integers(1, 8))
    corr = CompactCorrection.from_dense(rng.uniform(-1, 1, (r, c)))
    nv = 0 if qt else draw(st.integers(0, 5))
    lim = rng.uniform(-1, 1, nv)
    a = EqtMatrix(sym, corr, lim)
    return a * (scale / a.norm_inf())


def extent(a: EqtMatrix) -> int:
    """Index past which row ``i < n`` of ``a`` can only reach column ``n + extent``."""
    s = a.symbol
    return max(abs(s.kmin), abs(s.kmax), a.correction.rows, a.correction.cols, a.limit.size) + 1


def product_oracle(a: EqtMatrix, b: EqtMatrix, n: int) -> np.ndarray:
    m = n + 2 * (extent(a) + extent(b))
    return a.truncate(n, m) @ b.truncate(m, n)


# ---------------------------------------------------------------- construction


def test_truncation_is_definitional():
    sym = LaurentSymbol.from_dict({-1: 0.2, 0: 0.5, 2: 0.3})
    e = np.arange(6.0).reshape(2, 3)
    v = np.array([0.1, 0.0, 0.4])
    a = EqtMatrix(sym, CompactCorrection.from_dense(e), v)
    n = 7
    ref = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ref[i, j] = sym.coef(i - j)
    ref[:2, :3] += e
    ref += np.outer(np.ones(n), np.pad(v, (0, n - 3)))
    np.testing.assert_array_equal(a.truncate(n), ref)


def test_dense_truncation_examples():
    np.testing.assert_array_equal(dense_truncation(EqtMatrix.eye(), 3).array, np.eye(3))
    np.testing.assert_array_equal(dense_truncation(EqtMatrix.ones_outer([1.0]), 2).array,
                                  [[1, 0], [1, 0]])


# ---------------------------------------------------------------- add / mul


def test_add_zero_and_cancel():
    a = EqtMatrix.toeplitz({-1: 0.2, 0: 0.5, 1: 0.3})
    np.testing.assert_array_equal((a + a.zeros()).truncate(20), a.truncate(20))
    v = EqtMatrix.ones_outer([0.3, 0.7])
    z = v + (-v)
    assert z.storage_size() == 0
    assert z.norm_inf() == 0.0


def test_identity_product():
    a = EqtMatrix(LaurentSymbol.from_dict({-2: 0.1, 1: 0.4}),
                  CompactCorrection.from_dense([[1.0, 2.0]]), np.array([0.5]))
    i = EqtMatrix.eye()
    np.testing.assert_allclose((i @ a).truncate(30), a.truncate(30), atol=1e-15)
    np.testing.assert_allclose((a @ i).truncate(30), a.truncate(30), atol=1e-15)


def test_rank_one_limit_product():
    v = EqtMatrix.ones_outer([0.25, 0.75])
    w = EqtMatrix.ones_outer([0.5, 0.0, 0.5])
    np.testing.assert_allclose((v @ w).truncate(6), w.truncate(6), atol=1e-16)


def test_banded_toeplitz_square_matches_padded_dense():
    a = EqtMatrix.toeplitz({-1: 0.2, 0: 0.5, 1: 0.3})
    sq = a @ a
    ref = a.truncate(200) @ a.truncate(200)
    assert np.abs(sq.truncate(100) - ref[:100, :100]).max() <= 1e-14
    assert sq.is_qt


@pytest.mark.parametrize("n", [50, 200])
def test_product_truncation_oracle_wide_symbols(n, rng):
    a = EqtMatrix(LaurentSymbol(rng.uniform(0, 1, 61) * 0.9 ** np.abs(np.arange(-30, 31)), -30),
                  CompactCorrection.from_dense(rng.uniform(-1, 1, (40, 25))),
                  rng.uniform(0, 0.1, 12))
    b = EqtMatrix(LaurentSymbol(rng.uniform(0, 1, 41), -25),
                  CompactCorrection.from_dense(rng.uniform(-1, 1, (15, 60))),
                  rng.uniform(0, 0.1, 7))
    got = (a @ b).truncate(n)
    ref = product_oracle(a, b, n)
    assert np.abs(got - ref).max() <= 1e-13 * max(1.0, np.abs(ref).max())


@SETTINGS
@given(eqt_matrices(), eqt_matrices())
def test_product_agrees_with_truncation_oracle(a, b):
    n = 40
    np.testing.assert_allclose((a @ b).truncate(n), product_oracle(a, b, n), rtol=0, atol=1e-13)


@SETTINGS
@given(eqt_matrices(), eqt_matrices())
def test_sum_agrees_with_truncations(a, b):
    n = 30
    np.testing.assert_allclose((a + b).truncate(n), a.truncate(n) + b.truncate(n), atol=1e-15)
    np.testing.assert_allclose((a - b).truncate(n), a.truncate(n) - b.truncate(n), atol=1e-15)


@SETTINGS
@given(eqt_matrices(qt=True), eqt_matrices(qt=True, scale=0.5))
def test_qt_closure(a, b):
    assert (a + b).is_qt and (a - b).is_qt and (a @ b).is_qt and (-a).is_qt
    assert (a.identity() - b).inv().is_qt


@SETTINGS
@given(eqt_matrices(), eqt_matrices())
def test_eqt_closure(a, b):
    for c in (a + b, a @ b, a.compress()):
        assert isinstance(c, EqtMatrix)
        assert np.isfinite(c.norm_inf())


# ---------------------------------------------------------------- inverse


def test_inverse_examples():
    np.testing.assert_array_equal(EqtMatrix.eye().inv().truncate(5), np.eye(5))
    inv2 = EqtMatrix.toeplitz({0: 2.0}).inv()
    assert inv2.symbol.as_dict() == {0: 0.5}
    n_ = EqtMatrix.toeplitz({-1: 0.1, 0: 0.2, 1: 0.1})
    a = EqtMatrix.eye() - n_
    ref = np.linalg.inv(a.truncate(300))[:50, :50]
    assert np.abs(a.inv().truncate(50) - ref).max() <= 1e-10


@SETTINGS
@given(eqt_matrices(scale=0.5))
def test_inverse_agrees_with_dense_section(n_):
    a = n_.identity() - n_
    ref = np.linalg.inv(a.truncate(400))[:50, :50]
    assert np.abs(a.inv().truncate(50) - ref).max() <= 1e-10


@SETTINGS
@given(eqt_matrices(scale=0.5))
def test_inverse_is_two_sided(n_):
    a = n_.identity() - n_
    ai = a.inv()
    for p in (a @ ai, ai @ a):
        assert (p - p.identity()).norm_inf() <= 1e-12


def test_inverse_of_nonzero_winding_symbol_fails():
    with pytest.raises(WindingError):
        EqtMatrix.toeplitz({1: 1.0, 0: 0.1}).inv()


# ---------------------------------------------------------------- norms


def test_norm_examples():
    assert EqtMatrix.zero().norm_inf() == 0.0
    assert EqtMatrix.ones_outer([0.5, 0.5]).norm_inf() == 1.0
    c = EqtMatrix(LaurentSymbol.from_dict({-1: 0.2, 0: 0.5, 1: 0.3}), limit=np.array([0.1]))
    assert c.norm_inf() == pytest.approx(1.1, abs=1e-15)
    assert np.abs(c.truncate(2000)).sum(axis=1).max() == pytest.approx(1.1, abs=1e-15)


@SETTINGS
@given(eqt_matrices())
def test_norm_is_supremum_of_sections(a):
    m = 200
    sums = np.abs(a.truncate(m, m + 50)).sum(axis=1)
    assert a.norm_inf() == pytest.approx(sums.max(), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("coeffs, scalar, tail", [
    ({0: 1.0}, 1.0, []),
    ({-1: 0.2, 0: 0.5, 1: 0.3}, 1.0, [-0.3]),
    ({1: 1.0}, 1.0, [-1.0]),
])
def test_toeplitz_ones_action(coeffs, scalar, tail):
    act = EqtMatrix.toeplitz(coeffs).ones_action()
    assert act.scalar_part == pytest.approx(scalar)
    np.testing.assert_allclose(np.trim_zeros(act.tail, "b"), tail, atol=1e-16)


@SETTINGS
@given(eqt_matrices())
def test_ones_action_matches_row_sums(a):
    n = 60
    act = a.ones_action()
    ref = a.truncate(n, n + 2 * extent(a)).sum(axis=1)
    np.testing.assert_allclose(act.head(n), ref, atol=1e-13)


# ---------------------------------------------------------------- compression / stats


@SETTINGS
@given(eqt_matrices())
def test_compress_is_idempotent(a):
    once = a.compress()
    twice = once.compress()
    assert once.to_dict() == twice.to_dict()


def test_compress_drops_tiny_coefficients():
    a = EqtMatrix(LaurentSymbol.from_dict({0: 1.0, 3: 1e-20}))
    assert a.compress().symbol.as_dict() == {0: 1.0}


def test_rank_one_dense_block_becomes_factored():
    block = np.outer(np.arange(1.0, 11.0), np.linspace(0.1, 1.0, 10))
    a = EqtMatrix(correction=CompactCorrection.from_dense(block)).compress()
    assert a.correction.storage == "factored"
    assert a.structure_stats().rk == 1
    np.testing.assert_allclose(a.correction.to_dense(), block, atol=1e-13)


def test_structure_stats_identity_and_injected_identity():
    assert EqtMatrix.eye().structure_stats().as_row() == [0, 0, 0, 0, 0, 0]


def test_structure_stats_counts():
    a = EqtMatrix(LaurentSymbol.from_dict({-3: 0.1, 0: 1.0, 2: 0.2}),
                  CompactCorrection.from_dense(np.outer(np.ones(4), [1.0, 2.0, 0.0])),
                  np.array([0.1, 0.2]))
    st_ = a.structure_stats()
    assert (st_.lb, st_.ub, st_.rc, st_.cc, st_.rk, st_.lim) == (2, 3, 4, 2, 1, 2)


# ---------------------------------------------------------------- misc


def test_toeplitz_times_matches_dense():
    sym = LaurentSymbol.from_dict({-2: 1.0, 0: 2.0, 1: -1.0})
    x = np.arange(12.0).reshape(6, 2)
    got = toeplitz_times(sym, x)
    t = EqtMatrix(sym).truncate(got.shape[0], 6)
    np.testing.assert_allclose(got, t @ x)


@SETTINGS
@given(eqt_matrices())
def test_json_round_trip(a):
    b = EqtMatrix.from_json(a.to_json())
    np.testing.assert_array_equal(a.truncate(20), b.truncate(20))
    json.loads(a.to_json())


def test_apply_qt_matches_truncation(rng):
    # the limit part is not part of the QT action
    a = EqtMatrix(LaurentSymbol.from_dict({-1: 0.5, 0: 1.0, 1: 0.25}),
                  CompactCorrection.from_dense(rng.random((3, 4))))
    x = rng.random(10)
    got = a.apply_qt(x).ravel()
    np.testing.assert_allclose(got[:5], a.truncate(5, 10) @ x, atol=1e-15)
