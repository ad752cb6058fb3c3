import numpy as np
import pytest
from hypothesis import given, strategies as st

from phaserx import groups
from phaserx.autodiff import Tensor, circular_group_conv


def test_roots_examples():
    assert groups.roots_of_unity(1).roots.tolist() == [1]
    assert groups.roots_of_unity(4).roots.tolist() == [1, 1j, -1, -1j]
    z3 = groups.roots_of_unity(3).roots
    np.testing.assert_allclose(z3, [1, -0.5 + 0.8660254037844386j, -0.5 - 0.8660254037844386j], atol=1e-15)
    with pytest.raises(ValueError):
        groups.roots_of_unity(0)


@pytest.mark.parametrize("n", range(1, 17))
def test_group_axioms(n):
    g = groups.roots_of_unity(n)
    assert g[0] == 1
    assert np.abs(np.abs(g.roots) - 1).max() <= 1e-15
    for j in range(n):
        assert abs(g[g.inverse(j)] * g[j] - 1) <= 1e-12
        for k in range(n):
            assert abs(g[j] * g[k] - g[g.compose(j, k)]) <= 1e-12


def test_rotate_grid_examples(rng):
    x = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    np.testing.assert_array_equal(groups.rotate_grid(x, 1), x)
    assert groups.rotate_grid(groups.rotate_grid(np.array([1 + 0j]), 1j), 1j).tolist() == [-1 + 0j]
    z = np.exp(0.7j)
    np.testing.assert_allclose(groups.rotate_grid(groups.rotate_grid(x, z), np.conj(z)), x, atol=1e-12)
    with pytest.raises(ValueError):
        groups.rotate_grid(x, 1.1)


def test_lift_examples():
    out = groups.lift(np.array([2 + 0j]), groups.roots_of_unity(2))
    assert out.tolist() == [[2 + 0j], [-2 + 0j]]
    x = np.array([[1 + 2j, 3 - 1j]])
    l1 = groups.lift(x, groups.roots_of_unity(1))
    assert l1.shape == (1,) + x.shape and np.array_equal(l1[0], x)


@given(st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_lift_of_rotation_is_group_shift(n, seed):
    r = np.random.default_rng(seed)
    g = groups.roots_of_unity(n)
    x = r.standard_normal((2, 3, 5)) + 1j * r.standard_normal((2, 3, 5))
    base = groups.lift(x, g)
    np.testing.assert_array_equal(base[0], x)
    for m in range(n):
        rot = groups.lift(groups.rotate_grid(x, g[m]), g)
        for k in range(n):
            assert np.abs(rot[k] - base[(k + m) % n]).max() <= 1e-12


def test_cyclic_shift_examples():
    assert groups.cyclic_shift(np.array([1, 2, 3]), 0, 0).tolist() == [1, 2, 3]
    assert groups.cyclic_shift(np.array([1, 2, 3]), 0, 1).tolist() == [3, 1, 2]


@given(st.lists(st.integers(), min_size=1, max_size=10), st.integers(0, 20))
def test_cyclic_shift_inverse(values, m):
    a = np.array(values)
    n = a.size
    back = groups.cyclic_shift(groups.cyclic_shift(a, 0, m % n), 0, n - m % n)
    assert back.tolist() == values


def test_circulant_examples():
    np.testing.assert_array_equal(groups.circulant_from_kernel([1, 0, 0], 3), np.eye(3))
    p = groups.circulant_from_kernel([0, 1, 0], 3)
    np.testing.assert_array_equal(p, [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(ValueError):
        groups.circulant_from_kernel([1, 2], 3)


@given(st.integers(1, 16), st.integers(0, 2 ** 32 - 1))
def test_circulant_matches_group_conv(n, seed):
    r = np.random.default_rng(seed)
    s = r.standard_normal(n)
    psi = r.standard_normal(n)
    out = circular_group_conv(Tensor(s.reshape(n, 1, 1, 1)), Tensor(psi.reshape(1, n))).data.reshape(-1)
    assert np.abs(groups.circulant_from_kernel(psi, n) @ s - out).max() <= 1e-12
    assert np.abs(groups.circular_conv(s, psi) - out).max() <= 1e-12


def test_theorem1_forward_examples(rng):
    assert groups.verify_theorem1_forward(1, 10, rng).max_deviation == 0
    assert groups.verify_theorem1_forward(5, 100, rng).passed
    rep = groups.verify_theorem1_forward(8, 100, rng, kernel_size=3)
    assert rep.passed and rep.details["kernel_size"] == 3


def test_theorem1_converse_hand_projection():
    a, b, c, d = 1.0, 2.0, 5.0, -3.0
    proj = groups.commutant_projection(np.array([[a, b], [c, d]]))
    np.testing.assert_allclose(proj, [[(a + d) / 2, (b + c) / 2], [(b + c) / 2, (a + d) / 2]])
    eye = np.eye(5)
    np.testing.assert_allclose(groups.commutant_projection(eye), eye)
    assert groups.circulant_defect(proj) == 0


@pytest.mark.parametrize("n", range(2, 10))
def test_theorem1_both_directions(n, rng):
    assert groups.verify_theorem1_forward(n, 100, rng).passed
    rep = groups.verify_theorem1_converse(n, 100, rng)
    assert rep.passed and rep.details["random_matrix_fails_commutation"]


def test_converse_requires_n_at_least_2(rng):
    with pytest.raises(ValueError):
        groups.verify_theorem1_converse(1, 1, rng)


def test_non_circulant_commutation_fails():
    p = groups.shift_matrix(4)
    a = np.diag([1.0, 2.0, 3.0, 4.0])
    assert np.abs(p @ a - a @ p).max() > 0.5
    assert groups.circulant_defect(a) > 0.5
