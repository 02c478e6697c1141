import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pdmp_boundary.errors import NotFinite
from pdmp_boundary.velocity import (
    Basis,
    CoordinateAxes,
    IsoGaussian,
    SignedHypercube,
    UnitSphere,
    make_space,
)


def _counts(space, rng, n):
    atoms, _ = space.enumerate()
    draws = np.array([space.sample(rng) for _ in range(n)])
    idx = np.argmin(np.abs(draws[:, None, :] - atoms[None]).sum(axis=2), axis=1)
    return np.bincount(idx, minlength=len(atoms))


def test_hypercube_uniform_on_four_atoms(rng):
    counts = _counts(SignedHypercube(2), rng, 20000)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_axes_uniform_on_six_atoms(rng):
    counts = _counts(CoordinateAxes(3), rng, 24000)
    assert len(counts) == 6
    assert stats.chisquare(counts).pvalue > 1e-3


def test_sphere_angle_is_uniform(rng):
    v = UnitSphere(2).proposals(rng, 100_000)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    angle = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi)
    assert stats.kstest(angle, stats.uniform(0, 2 * np.pi).cdf).pvalue > 1e-3


@pytest.mark.parametrize("space", [UnitSphere(3), IsoGaussian(3)])
def test_continuous_laws_are_centred(space, rng):
    v = np.array([space.sample(rng) for _ in range(100_000)])
    se = v.std(axis=0) / math.sqrt(len(v))
    assert np.all(np.abs(v.mean(axis=0)) < 4 * se)


def test_refresh_is_a_fresh_draw(rng):
    space = SignedHypercube(3)
    v = space.sample(rng)
    r1 = np.random.default_rng(5)
    r2 = np.random.default_rng(5)
    np.testing.assert_array_equal(space.refresh(v, r1), space.sample(r2))


def test_enumerate_counts_and_symmetry():
    for space, m in [(SignedHypercube(2), 4), (CoordinateAxes(2), 4), (SignedHypercube(4), 16)]:
        atoms, probs = space.enumerate()
        assert len(atoms) == m
        assert probs.sum() == pytest.approx(1.0, abs=1e-15)
        for a in atoms:
            assert np.any(np.all(np.isclose(atoms, -a), axis=1))


@pytest.mark.parametrize("space", [UnitSphere(2), IsoGaussian(2)])
def test_continuous_laws_are_not_enumerable(space):
    with pytest.raises(NotFinite):
        space.enumerate()


def _as_set(atoms):
    return {tuple(np.round(a, 12) + 0.0) for a in atoms}


def test_split_hypercube_axis_normal():
    plus, minus, tangent = SignedHypercube(2).split_by_normal(np.array([1.0, 0.0]))
    assert _as_set(plus) == {(1.0, 1.0), (1.0, -1.0)}
    assert _as_set(minus) == {(-1.0, 1.0), (-1.0, -1.0)}
    assert len(tangent) == 0


def test_split_axes_axis_normal():
    plus, minus, tangent = CoordinateAxes(2).split_by_normal(np.array([1.0, 0.0]))
    assert _as_set(plus) == {(1.0, 0.0)}
    assert _as_set(minus) == {(-1.0, 0.0)}
    assert _as_set(tangent) == {(0.0, 1.0), (0.0, -1.0)}


def test_split_hypercube_diagonal_normal():
    plus, minus, tangent = SignedHypercube(2).split_by_normal(np.array([1.0, 1.0]) / math.sqrt(2))
    assert _as_set(plus) == {(1.0, 1.0)}
    assert _as_set(minus) == {(-1.0, -1.0)}
    assert _as_set(tangent) == {(1.0, -1.0), (-1.0, 1.0)}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_random_basis_is_a_rotation(d, seed):
    b = Basis.random(d, seed)
    np.testing.assert_allclose(b.R.T @ b.R, np.eye(d), atol=1e-10)
    assert np.linalg.det(b.R) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(Basis.random(d, seed).R, b.R)


def test_rotated_atoms_and_signs():
    b = Basis.random(3, 7)
    space = SignedHypercube(3, b)
    atoms, _ = space.enumerate()
    for a in atoms:
        np.testing.assert_allclose(space.basis.from_basis(space.signs(a)), a, atol=1e-14)
    ax = CoordinateAxes(3, b)
    for i in range(3):
        assert ax.axis_of(ax.atom(i, -1.0)) == (i, -1.0)


def test_non_orthonormal_basis_rejected():
    with pytest.raises(ValueError):
        Basis(np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_make_space_names():
    assert isinstance(make_space("sphere", 2), UnitSphere)
    assert isinstance(make_space("gaussian", 2), IsoGaussian)
    assert isinstance(make_space("hypercube", 2), SignedHypercube)
    assert isinstance(make_space("axes", 2), CoordinateAxes)
    with pytest.raises(ValueError):
        make_space("cube", 2)
