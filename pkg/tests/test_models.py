from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtsda.errors import BranchAmbiguous, ModelInvalid, NotSubstochastic
from qtsda.models import (PRESETS, DriftClass, QuarterPlaneModel, build_coefficients,
                          classify_drift, compute_symbol_g, load_model, make_gtilde_rank1,
                          make_gtilde_toeplitz, parse_model, preset, preset_file,
                          symbol_g_cyclic_reduction, symbol_residual)
from qtsda.qt import LaurentSymbol
from qtsda.solver import Standard, Termination, solve_sda

NAMES = sorted(PRESETS)


def leading(block, r=2, c=3):
    return block.truncate(r, c)


def off_grid_points(k=64, seed=7):
    # irrational-ish angles avoid every power-of-two grid node
    t = np.random.default_rng(seed).random(k) + np.sqrt(2) / 1000
    return np.exp(2j * np.pi * t)


def scalar_min_root(a, b, c):
    """Smaller root of ``a t^2 + b t + c`` by the quadratic formula."""
    if a == 0:
        return -c / b
    d = np.sqrt(b * b - 4 * a * c)
    return min((-b - d) / (2 * a), (-b + d) / (2 * a), key=abs)


# ---------------------------------------------------------------- presets and files


@pytest.mark.parametrize("name, block, alpha, ref", [
    ("test1", 0, 9, [[3, 3, 0], [2, 0, 1]]),
    ("test1", 1, 9, [[1, 1, 0], [1, 0, 1]]),
    ("test2", 2, 16, [[1, 1, 0], [2, 1, 1]]),
    ("test3", 0, 968, [[484, 121, 0], [80, 120, 160]]),
])
def test_preset_leading_blocks(name, block, alpha, ref):
    am1, a0, a1 = build_coefficients(preset(name))
    b = [-am1, a0.identity() - a0, -a1][block]
    np.testing.assert_allclose(leading(b), np.array(ref) / alpha, atol=1e-16)


@pytest.mark.parametrize("name", NAMES)
def test_golden_files_match_presets(name):
    assert load_model(preset_file(name)) == preset(name)
    assert parse_model(preset(name).to_toml()) == preset(name)


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("test9")


@pytest.mark.parametrize("inner, bx", [
    ([[0.2, 0.2, 0.2], [0.1, 0.1, 0.1], [0.1, 0.1, 0.1]], [[0.5, 0.0], [0.25, 0.0], [0.0, 0.0]]),
    ([[-0.1, 0.2, 0.2], [0.1, 0.1, 0.1], [0.1, 0.2, 0.1]], [[0.5, 0.0], [0.5, 0.0], [0.0, 0.0]]),
    ([[0.2, 0.2], [0.1, 0.1]], [[1, 0]]),
])
def test_invalid_models(inner, bx):
    with pytest.raises(ModelInvalid):
        QuarterPlaneModel(inner, bx)


def test_malformed_model_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("inner = [[1, 0, 0]]\n")
    with pytest.raises(ModelInvalid):
        load_model(p)
    with pytest.raises(ModelInvalid):
        parse_model("inner = [")


def test_fraction_strings_are_exact():
    m = parse_model(preset("test3").to_toml())
    assert m.a(-1, 1) == Fraction(160, 968)


# ---------------------------------------------------------------- coefficients


def test_uniform_walk_coefficients():
    ninth, sixth = Fraction(1, 9), Fraction(1, 6)
    m = QuarterPlaneModel([[ninth] * 3] * 3, [[sixth] * 2] * 3, "uniform")
    am1, a0, a1 = build_coefficients(m)
    b0 = a0.identity() - a0
    for k, v in b0.symbol.as_dict().items():
        assert v == pytest.approx(1 / 9, abs=1e-16), k
    np.testing.assert_allclose(b0.correction.to_dense()[0, :2], [1 / 6 - 1 / 9] * 2, atol=1e-16)
    np.testing.assert_allclose(leading(b0, 1, 3), [[1 / 6, 1 / 6, 0]], atol=1e-16)


def test_test1_a0_symbol():
    _, a0, _ = build_coefficients(preset("test1"))
    got = a0.symbol.as_dict()
    # a_{0,0} = 0 for this walk, so the diagonal of A0 = I - B0 is exactly 1
    assert got == pytest.approx({-1: -1 / 9, 0: 1.0, 1: -1 / 9}, abs=1e-16)


@pytest.mark.parametrize("name", NAMES)
def test_coefficient_row_sums(name):
    am1, a0, a1 = build_coefficients(preset(name))
    # (B_{-1} + B_0 + B_1) 1 = 1, i.e. (A_{-1} + A_0 + A_1) 1 = 0
    act = (am1 + a0 + a1).ones_action()
    assert act.deviation_from(0.0) <= 1e-15
    for c in (am1, a0, a1):
        assert c.is_qt


def test_absorbing_walk_breaks_down():
    m = QuarterPlaneModel([[0, 0, 0], [0, 1, 0], [0, 0, 0]], [[0, 0], [1, 0], [0, 0]], "stuck")
    am1, a0, a1 = build_coefficients(m)
    assert am1.norm_inf() == 0.0 and a1.norm_inf() == 0.0
    assert solve_sda(am1, a0, a1, Standard()).termination is Termination.BREAKDOWN


# ---------------------------------------------------------------- drift


def test_drift_examples():
    m = preset("test1")
    assert m.level_sum(-1) == Fraction(3, 9) and m.level_sum(1) == Fraction(4, 9)
    assert classify_drift(m) is DriftClass.EQT_SOLUTION
    assert classify_drift(m.mirrored()) is DriftClass.QT_SOLUTION
    sym = QuarterPlaneModel([[0.1, 0.1, 0.1], [0.1, 0.2, 0.1], [0.1, 0.1, 0.1]],
                            [[0.2, 0.1], [0.2, 0.2], [0.2, 0.1]])
    assert classify_drift(sym) is DriftClass.NULL_RECURRENT_BOUNDARY
    with pytest.raises(BranchAmbiguous):
        compute_symbol_g(sym)


@pytest.mark.parametrize("name", NAMES)
def test_presets_have_limit_part(name):
    assert classify_drift(preset(name)) is DriftClass.EQT_SOLUTION


# ---------------------------------------------------------------- symbol of G


@pytest.mark.parametrize("name", NAMES)
def test_symbol_residual_off_grid(name):
    m = preset(name)
    g = compute_symbol_g(m)
    assert symbol_residual(m, g, off_grid_points()).max() <= 1e-12


@pytest.mark.parametrize("name", NAMES)
def test_symbol_is_minimal_branch(name):
    m = preset(name)
    g = compute_symbol_g(m)
    z = off_grid_points()
    assert np.abs(g(z)).max() <= 1.0 + 1e-12
    assert g.at_one() <= 1.0 + 1e-12
    gc = symbol_g_cyclic_reduction(m)
    assert np.abs(g(z) - gc(z)).max() <= 1e-13


def test_test1_g_at_one():
    g = compute_symbol_g(preset("test1"))
    assert g.at_one() == pytest.approx(0.75, abs=1e-12)
    assert scalar_min_root(-4 / 9, 7 / 9, -3 / 9) == pytest.approx(0.75, abs=1e-15)


def test_decoupled_walk_has_constant_symbol():
    m = QuarterPlaneModel([[0, 0.3, 0], [0, 0.3, 0], [0, 0.4, 0]],
                          [[0.3, 0], [0.3, 0], [0.4, 0]], "vertical")
    g = compute_symbol_g(m)
    ref = scalar_min_root(0.4, 0.3 - 1, 0.3)
    assert set(g.as_dict()) == {0}
    assert g.coef(0) == pytest.approx(ref, abs=1e-14)


def test_no_downward_moves_gives_zero_symbol():
    m = QuarterPlaneModel([[0, 0, 0], [0.2, 0.3, 0.2], [0.1, 0.1, 0.1]],
                          [[0, 0], [0.4, 0.3], [0.2, 0.1]])
    assert compute_symbol_g(m).is_zero


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=9, max_size=9), st.booleans())
def test_random_walk_symbols(weights, flip):
    w = np.array(weights, dtype=float).reshape(3, 3)
    down, up = w[0].sum(), w[2].sum()
    if down == up:
        w[2, 1] += 1
    if flip:
        w = w[::-1]
    w = w / w.sum()
    m = QuarterPlaneModel([[Fraction(x).limit_denominator(10**6) for x in r] for r in w],
                          [[0.2, 0.1], [0.3, 0.1], [0.2, 0.1]])
    g = compute_symbol_g(m)
    z = off_grid_points(32)
    # every coefficient may be cut at the threshold; near-null drifts have long symbols
    assert symbol_residual(m, g, z).max() <= 1e-12 + 4e-15 * g.coeffs.size
    assert np.abs(g(z)).max() <= 1 + 1e-12


# ---------------------------------------------------------------- initial approximations


def test_gtilde_rank1():
    gt = make_gtilde_rank1()
    st_ = gt.structure_stats()
    assert (st_.lb, st_.ub, st_.rc, st_.cc, st_.rk, st_.lim) == (0, 0, 0, 0, 0, 1)
    act = gt.ones_action()
    assert act.scalar_part == 1.0 and not np.any(act.tail)
    np.testing.assert_allclose(gt.truncate(3), 0.5 * np.eye(3) + 0.5 * np.eye(3)[[0, 0, 0]])


def test_gtilde_toeplitz_identity_symbol():
    gt = make_gtilde_toeplitz(LaurentSymbol.constant(1.0))
    assert gt.correction.is_zero and gt.is_qt
    np.testing.assert_array_equal(gt.truncate(4), np.eye(4))


@pytest.mark.parametrize("name", NAMES)
def test_gtilde_toeplitz_is_stochastic(name):
    g = compute_symbol_g(preset(name))
    gt = make_gtilde_toeplitz(g)
    assert gt.ones_action().deviation_from(1.0) <= 1e-13
    sec = gt.truncate(400, 400 + g.coeffs.size)
    assert sec.min() >= -1e-13
    np.testing.assert_allclose(sec.sum(axis=1), 1.0, atol=1e-13)
    assert gt.symbol == g.trim(gt.threshold)


def test_gtilde_toeplitz_rejects_superstochastic_symbol():
    with pytest.raises(NotSubstochastic):
        make_gtilde_toeplitz(LaurentSymbol.constant(1.5))
