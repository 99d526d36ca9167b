"""Sanity checks of the independent oracles before anything is compared to them."""

import math

import numpy as np
import pytest
from scipy.optimize import linprog

from oracles import (c5_maxcut_closed_form, dense_sdp, lp_basis_enumeration, maxcut_oracle, random_box_lp,
                     theta_oracle)

C5 = [(i, (i + 1) % 5) for i in range(5)]


def test_dense_sdp_triangle_maxcut():
    assert maxcut_oracle(3, [(0, 1), (1, 2), (0, 2)]) == pytest.approx(2.25, abs=1e-7)


def test_dense_sdp_odd_cycle_closed_form():
    assert maxcut_oracle(5, C5) == pytest.approx(c5_maxcut_closed_form(), abs=1e-7)


def test_theta_oracle_pentagon():
    # self-complementary graph: both edge sets give the same value
    comp = [(0, 2), (2, 4), (4, 1), (1, 3), (3, 0)]
    assert theta_oracle(5, C5) == pytest.approx(-math.sqrt(5), abs=1e-7)
    assert theta_oracle(5, comp) == pytest.approx(-math.sqrt(5), abs=1e-7)


def test_dense_sdp_keeps_feasibility():
    A = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    val, X = dense_sdp(C, A, [1.0, 1.0])
    assert val == pytest.approx(-2.0, abs=1e-7)
    assert np.diag(X) == pytest.approx([1.0, 1.0], abs=1e-12)


def test_dense_sdp_rejects_infeasible_start():
    with pytest.raises(ValueError):
        dense_sdp(np.eye(2), [np.eye(2)], [3.0])


@pytest.mark.parametrize("seed", range(8))
def test_basis_enumeration_matches_linprog(seed):
    A, b, c, lo, hi = random_box_lp(np.random.default_rng(seed))
    val, x = lp_basis_enumeration(A, b, c, lo, hi)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=list(zip(lo, hi)), method="highs")
    assert val == pytest.approx(ref.fun, abs=1e-8)
    assert np.allclose(A @ x, b, atol=1e-8)
    assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)
