import math

import numpy as np
import pytest
from scipy import integrate

from pdmp_boundary import oracle
from pdmp_boundary.errors import EnvelopeViolation, InvarianceViolation, NotClosedForm
from pdmp_boundary.kernels import FLIP, LIMIT, BoundaryKernel
from pdmp_boundary.target import BoundaryPoint, hypercube_target
from pdmp_boundary.velocity import CoordinateAxes, SignedHypercube

# variance of N(0, 1) truncated to [-1, 1]; 30-digit mpmath quadrature, confirmed by scipy quad
TRUNC_VAR_SIGMA1 = 0.29112509477279321
# inside occupancy for alpha_in = 2, alpha_out = 1, sigma = 1, d = 2: 2p^2 / (2p^2 + 1 - p^2), p = erf(1/sqrt 2)
OCC_INSIDE_2_1 = 0.63580395261917617

E1 = np.array([1.0, 0.0])


def bp_ratio(n, ratio):
    return BoundaryPoint.from_ratio(np.asarray(n, dtype=float), ratio)


def test_flip_matrix_is_negation():
    sp = SignedHypercube(2)
    M = oracle.kernel_matrix_exact(FLIP, bp_ratio(E1, 0.5), sp)
    atoms, _ = sp.enumerate()
    for i, j in zip(*np.nonzero(M)):
        np.testing.assert_array_equal(atoms[j], -atoms[i])
    assert M.sum() == len(atoms)


def test_limit_bps_axes_row():
    sp = CoordinateAxes(2)
    M = oracle.kernel_matrix_exact(LIMIT, bp_ratio(E1, 0.5), sp, "bps")
    atoms, _ = sp.enumerate()
    i = oracle.atom_index(atoms, [-1.0, 0.0])
    assert M[i, i] == 0.5
    assert M[i, oracle.atom_index(atoms, [1.0, 0.0])] == 0.5


def test_mh_one_step_entries():
    sp = SignedHypercube(2)
    bp = bp_ratio(np.array([0.6, 0.8]), 0.4)
    atoms, probs = sp.enumerate()
    l = oracle.l_weights(bp, atoms, probs)
    P = oracle.mh_matrix(bp, atoms, probs)
    for i in range(4):
        for j in range(4):
            if i != j:
                assert P[i, j] == pytest.approx(min(1.0, l[j] / l[i]) / 4, rel=1e-14)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("kernel", ["flip", "mh:1", "mh:7", "limit"])
@pytest.mark.parametrize("sampler,space", [("bps", SignedHypercube(2)), ("cs", CoordinateAxes(3))])
def test_exact_rows_sum_to_one(kernel, sampler, space):
    n = np.array([1.0, 0.0]) if space.dim == 2 else np.array([0.6, 0.0, 0.8])
    M = oracle.kernel_matrix_exact(BoundaryKernel.parse(kernel), bp_ratio(n, 0.3), space, sampler)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-12)


def test_zigzag_limit_has_no_closed_form():
    with pytest.raises(NotClosedForm):
        oracle.kernel_matrix_exact(LIMIT, bp_ratio(E1, 0.5), SignedHypercube(2), "zigzag")


def test_reflection_outside_atom_set_is_refused():
    with pytest.raises(NotClosedForm):
        oracle.kernel_matrix_exact(LIMIT, bp_ratio([0.6, 0.8], 0.5), SignedHypercube(2), "bps")


def test_flip_invariance_residual_is_zero():
    sp = SignedHypercube(3)
    bp = bp_ratio([0.2, 0.5, -0.7], 0.1)
    atoms, probs = sp.enumerate()
    Qp = oracle.negate_rows(oracle.kernel_matrix_exact(FLIP, bp, sp), atoms)
    np.testing.assert_array_equal(Qp, np.eye(len(atoms)))
    assert oracle.check_l_invariance(Qp, oracle.l_weights(bp, atoms, probs)) == 0.0


def test_limit_bps_hypercube_invariance():
    sp = SignedHypercube(2)
    bp = bp_ratio(E1, 0.5)
    atoms, probs = sp.enumerate()
    Qp = oracle.negate_rows(oracle.kernel_matrix_exact(LIMIT, bp, sp, "bps"), atoms)
    assert oracle.check_l_invariance(Qp, oracle.l_weights(bp, atoms, probs)) < 1e-12


def test_always_pass_kernel_is_caught():
    sp = SignedHypercube(2)
    bp = bp_ratio(E1, 0.5)
    atoms, probs = sp.enumerate()
    Q = np.eye(len(atoms))  # keep the velocity: pass straight through
    res = oracle.check_l_invariance(oracle.negate_rows(Q, atoms), oracle.l_weights(bp, atoms, probs))
    assert res > 0.05
    with pytest.raises(InvarianceViolation):
        oracle.check_l_invariance(oracle.negate_rows(Q, atoms), oracle.l_weights(bp, atoms, probs), tol=1e-10)


def test_mc_flip_is_exact(rng):
    sp = SignedHypercube(2)
    est = oracle.kernel_matrix_mc(FLIP, bp_ratio(E1, 0.5), sp, 50, rng)
    np.testing.assert_array_equal(est.estimate, oracle.kernel_matrix_exact(FLIP, bp_ratio(E1, 0.5), sp))
    np.testing.assert_array_equal(est.stderr, 0.0)


def test_mc_zigzag_one_dimension_pass_rate(rng):
    sp = SignedHypercube(1)
    est = oracle.kernel_matrix_mc(LIMIT, bp_ratio([1.0], 0.5), sp, 1_000_000, rng, "zigzag")
    atoms, _ = sp.enumerate()
    i = oracle.atom_index(atoms, [-1.0])
    assert abs(est.estimate[i, i] - 0.5) < 3 * math.sqrt(0.25 / 1e6)


@pytest.mark.parametrize("kernel", ["limit", "mh:1", "mh:5"])
def test_mc_agrees_with_exact_for_cs(kernel, rng):
    sp = CoordinateAxes(2)
    bp = bp_ratio([0.6, 0.8], 0.3)
    k = BoundaryKernel.parse(kernel)
    exact = oracle.kernel_matrix_exact(k, bp, sp, "cs")
    mc = oracle.kernel_matrix_mc(k, bp, sp, 20000, rng, "cs")
    np.testing.assert_array_equal(mc.counts.sum(axis=1), mc.n)
    se = np.sqrt(exact * (1 - exact) / mc.n)
    assert np.all(np.abs(mc.estimate - exact) <= 4 * se + 1e-12)


def test_truncated_moments_frozen_constant():
    m = oracle.truncated_gaussian_moments(1.0, -1.0, 1.0)
    assert m.variance == pytest.approx(TRUNC_VAR_SIGMA1, abs=1e-14)
    assert m.mean == 0.0


def test_truncated_moments_limits():
    assert oracle.truncated_gaussian_moments(1e6, -1.0, 1.0).variance == pytest.approx(1 / 3, abs=1e-6)
    m = oracle.truncated_gaussian_moments(2.0, -np.inf, np.inf)
    assert (m.mass, m.mean, m.variance) == (1.0, 0.0, 2.0)


@pytest.mark.parametrize("sigma,a,b", [(1.0, 0.5, np.inf), (0.3, -2.0, 0.1), (4.0, 1.0, 3.0), (1.0, 6.0, 9.0)])
def test_truncated_moments_against_quadrature(sigma, a, b):
    f = lambda x: math.exp(-x * x / (2 * sigma))
    Z = integrate.quad(f, a, b, epsabs=0, epsrel=1e-12)[0]
    mean = integrate.quad(lambda x: x * f(x), a, b, epsabs=0, epsrel=1e-12)[0] / Z
    var = integrate.quad(lambda x: (x - mean) ** 2 * f(x), a, b, epsabs=0, epsrel=1e-12)[0] / Z
    m = oracle.truncated_gaussian_moments(sigma, a, b)
    assert m.mass == pytest.approx(Z / math.sqrt(2 * math.pi * sigma), rel=1e-10)
    assert m.mean == pytest.approx(mean, rel=1e-9, abs=1e-12)
    assert m.variance == pytest.approx(var, rel=1e-7)


def test_analytic_occupancy_constant():
    assert oracle.hypercube_occupancy(2, 1.0, 1.0, 2.0, 1.0) == pytest.approx(OCC_INSIDE_2_1, rel=1e-14)


def test_rejection_restricted_support(rng):
    ref = oracle.rejection_reference(hypercube_target(2, alpha_out=0.0), 200_000, rng)
    assert ref.occupancy[0] == 1.0
    var = np.diag(ref.second_moment) - ref.mean**2
    # per-coordinate variance of x^2 under the truncated law bounds the standard error
    se = math.sqrt(0.2 / ref.n)
    assert np.all(np.abs(var - TRUNC_VAR_SIGMA1) < 4 * se)
    assert np.all(np.abs(ref.mean) < 4 * ref.mean_se)


def test_rejection_occupancy_matches_analytic(rng):
    ref = oracle.rejection_reference(hypercube_target(2, alpha_in=2.0, alpha_out=1.0), 400_000, rng)
    assert abs(ref.occupancy[0] - OCC_INSIDE_2_1) < 4 * ref.occupancy_se[0]


def test_rejection_envelope_violation(rng):
    with pytest.raises(EnvelopeViolation):
        oracle.rejection_reference(hypercube_target(2, alpha_in=2.0, alpha_out=1.0), 1000, rng, envelope=(1.0, 0.0))
