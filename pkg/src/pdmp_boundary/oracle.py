"""Independent references for the test-suite.

Kernel matrices are indexed ``M[i, j] = P(v_out = atom_j | v_in = atom_i)``
for the kernel as applied at a boundary hit. The invariance condition is
stated for the *negated* kernel ``Q'(v' | v) = Q(v' | -v)``; use
:func:`negate_rows` to go from one to the other before calling
:func:`check_l_invariance`.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import special

from . import kernels as kern
from .errors import EnvelopeViolation, InvarianceViolation, NotClosedForm
from .velocity import TANGENT_TOLERANCE

_ATOM_MATCH = 1e-9


def atom_index(atoms, v):
    """Index of the atom equal to ``v`` (to ``1e-9``), or ``-1``."""
    d = np.max(np.abs(atoms - np.asarray(v)[None, :]), axis=1)
    i = int(np.argmin(d))
    return i if d[i] < _ATOM_MATCH else -1


def negation_index(atoms):
    idx = np.array([atom_index(atoms, -a) for a in atoms])
    if np.any(idx < 0):
        raise ValueError("atom set is not closed under negation")
    return idx


def reflection_closure(atoms, n):
    """Smallest superset of ``atoms`` closed under negation and reflection in ``n``.

    With uniform weights the result is a finite velocity law sharing the two
    symmetries the BPS limit kernel relies on.
    """
    n = np.asarray(n, dtype=float)
    out = []
    for a in np.asarray(atoms, dtype=float):
        for w in (a, -a, kern.reflect(a, n), -kern.reflect(a, n)):
            if not out or atom_index(np.array(out), w) < 0:
                out.append(w)
    return np.array(out)


def _atoms_of(space, atoms):
    if atoms is None:
        atoms, probs = space.enumerate()
    else:
        atoms = np.asarray(atoms, dtype=float)
        probs = np.full(len(atoms), 1.0 / len(atoms))
    return atoms, probs


def l_weights(bp, atoms, probs):
    """``l`` evaluated on each atom with atom probabilities ``probs``."""
    dots = atoms @ bp.n
    pi = np.where(dots > 0, bp.pi2, bp.pi1)
    return np.where(np.abs(dots) < TANGENT_TOLERANCE, 0.0, np.abs(dots) * probs * pi)


def mh_matrix(bp, atoms, probs):
    """One-step MH matrix targeting ``l`` with uniform proposals over ``atoms``."""
    m = len(atoms)
    l = l_weights(bp, atoms, probs / probs[0])
    M = np.zeros((m, m))
    for i in range(m):
        if l[i] == 0:
            acc = (l > 0).astype(float)
        else:
            acc = np.minimum(1.0, l / l[i])
        M[i] = acc / m
        M[i, i] = 0.0
        M[i, i] = 1.0 - M[i].sum()
    return M


def kernel_matrix_exact(kernel, bp, space=None, sampler_kind=None, atoms=None):
    """Closed-form transition matrix of ``kernels.apply`` over a finite atom set.

    Args:
        kernel: a :class:`~pdmp_boundary.kernels.BoundaryKernel`.
        bp: the boundary point.
        space: finite velocity space providing the atoms (ignored when
            ``atoms`` is given, which implies uniform probabilities).
        sampler_kind: ``"bps"`` or ``"cs"`` for limit kernels.

    Raises:
        NotClosedForm: the Zig-Zag limit kernel, or a BPS reflection leaving
            the atom set.
    """
    atoms, probs = _atoms_of(space, atoms)
    m = len(atoms)
    neg = negation_index(atoms)
    dots = atoms @ bp.n
    tangent = np.abs(dots) < TANGENT_TOLERANCE
    r = bp.ratio
    if kernel.policy == "flip":
        M = np.zeros((m, m))
        M[np.arange(m), neg] = 1.0
        return M
    if kernel.policy == "mh":
        P = np.linalg.matrix_power(mh_matrix(bp, atoms, probs), kernel.iters)
        M = P[neg]
        M[tangent] = 0.0
        M[np.flatnonzero(tangent), neg[tangent]] = 1.0
        return M
    name = getattr(sampler_kind, "name", sampler_kind)
    if name == "zigzag":
        raise NotClosedForm("the Zig-Zag limit kernel is defined by simulation")
    M = np.zeros((m, m))
    for i in range(m):
        if tangent[i]:
            M[i, neg[i]] = 1.0
        elif dots[i] > 0:
            M[i, i] = 1.0
        elif name == "bps":
            j = atom_index(atoms, kern.reflect(atoms[i], bp.n))
            if j < 0:
                raise NotClosedForm("reflection leaves the atom set; see reflection_closure")
            M[i, i] += r
            M[i, j] += 1.0 - r
        elif name == "cs":
            plus = np.flatnonzero(dots > TANGENT_TOLERANCE)
            K = math.fsum(dots[plus])
            M[i, i] += r
            M[i, plus] += (1.0 - r) * dots[plus] / K
        else:
            raise ValueError(f"unknown sampler {name!r}")
    return M


def negate_rows(M, atoms):
    """``Q'`` from ``Q``: ``Q'[i] = Q[index of -atom_i]``."""
    return M[negation_index(atoms)]


class MCMatrix(NamedTuple):
    estimate: np.ndarray
    stderr: np.ndarray
    n: int
    counts: np.ndarray


def kernel_matrix_mc(kernel, bp, space, N, rng, sampler_kind=None, atoms=None):
    """Empirical transition matrix from ``N`` kernel applications per atom.

    Standard errors are the binomial ``sqrt(p (1 - p) / N)``.
    """
    atoms, _ = _atoms_of(space, atoms)
    m = len(atoms)
    counts = np.zeros((m, m))
    name = getattr(sampler_kind, "name", sampler_kind)
    batch = kernel.policy == "limit" and name == "zigzag"
    for i, a in enumerate(atoms):
        if batch and abs(a @ bp.n) >= TANGENT_TOLERANCE:
            out = kern.limit_zz_batch(bp, space, a, N, rng)
            bits = 1 << np.arange(space.dim)
            codes = (space.basis.to_basis(out.T).T > 0) @ bits
            atom_codes = (space.basis.to_basis(atoms.T).T > 0) @ bits
            lookup = {int(c): j for j, c in enumerate(atom_codes)}
            uniq, cnt = np.unique(codes, return_counts=True)
            counts[i, [lookup[int(c)] for c in uniq]] += cnt
        else:
            for _ in range(N):
                out = kern.apply(kernel, sampler_kind, bp, space, a, rng)
                j = atom_index(atoms, out)
                if j < 0:
                    raise ValueError("kernel produced a velocity outside the atom set")
                counts[i, j] += 1
    p = counts / N
    return MCMatrix(p, np.sqrt(p * (1.0 - p) / N), N, counts)


def check_l_invariance(matrix, l_weights, tol=None):
    """Scale-free invariance residual ``max_j |sum_i l_i M_ij - l_j| / sum l``.

    ``matrix`` must be the negated kernel ``Q'``.

    Raises:
        InvarianceViolation: when ``tol`` is given and the residual exceeds it.
    """
    l = np.asarray(l_weights, dtype=float)
    total = l.sum()
    if total <= 0 or np.any(l < 0):
        raise ValueError("l weights must be nonnegative and not all zero")
    res = float(np.max(np.abs(l @ matrix - l)) / total)
    if tol is not None and res > tol:
        raise InvarianceViolation(f"residual {res:.3e} exceeds {tol:.3e}")
    return res


def l_invariance_zscores(matrix, stderr, l_weights):
    """Per-column z-scores of ``sum_i l_i M_ij - l_j`` for an MC matrix ``Q'``.

    Rows are independent, so column variances add over rows. Columns whose
    standard error is zero get a z-score of 0 if the residual is 0 and
    ``inf`` otherwise.
    """
    l = np.asarray(l_weights, dtype=float)
    resid = l @ matrix - l
    se = np.sqrt((l**2) @ (stderr**2))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, resid / se, np.where(np.abs(resid) < 1e-12 * l.sum(), 0.0, np.inf))
    return z


def detailed_balance_zscores(Q, stderr, atoms, l):
    """z-scores of ``l(-v) Q(v'|v) - l(v') Q(-v|-v')`` for all atom pairs.

    ``Q`` is the kernel as applied (not negated). Pairs where both sides are
    the same matrix entry are reported as 0.
    """
    neg = negation_index(atoms)
    m = len(atoms)
    Z = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            a, b = (i, j), (neg[j], neg[i])
            lhs = l[neg[i]] * Q[a]
            rhs = l[j] * Q[b]
            if a == b:
                continue
            se = math.hypot(l[neg[i]] * stderr[a], l[j] * stderr[b])
            diff = lhs - rhs
            if se > 0:
                Z[i, j] = diff / se
            elif abs(diff) > 0:
                Z[i, j] = math.inf
    return Z


class Moments(NamedTuple):
    mass: float
    mean: float
    variance: float


def truncated_gaussian_moments(sigma, a, b):
    """Moments of ``N(0, sigma)`` (``sigma`` is the variance) truncated to ``[a, b]``.

    Returns:
        ``(mass, mean, variance)`` where ``mass = P(a < X < b)``.
    """
    if not a < b:
        raise ValueError("need a < b")
    s = math.sqrt(sigma)
    al, be = a / s, b / s
    mass = float(special.ndtr(be) - special.ndtr(al))
    if al > 0:
        mass = float(special.ndtr(-al) - special.ndtr(-be))

    def phi(z):
        return 0.0 if math.isinf(z) else math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    def zphi(z):
        return 0.0 if math.isinf(z) else z * phi(z)

    dphi = phi(al) - phi(be)
    mean = s * dphi / mass
    variance = sigma * (1.0 + (zphi(al) - zphi(be)) / mass - (dphi / mass) ** 2)
    return Moments(mass, mean, variance)


class Reference(NamedTuple):
    mean: np.ndarray
    mean_se: np.ndarray
    second_moment: np.ndarray
    occupancy: dict
    occupancy_se: dict
    n: int


def _log_target(target, X):
    out = np.full(len(X), -np.inf)
    region = np.full(len(X), -1)
    for k, r in enumerate(target.regions):
        mask = np.asarray(r.membership(X), dtype=bool)
        region[mask] = k
        if mask.any():
            out[mask] = r.log_density(X[mask])
    return out, region


def rejection_reference(target, N, rng, envelope=None, chunk=1_000_000):
    """Exact i.i.d. draws by rejection from a Gaussian envelope.

    Args:
        envelope: ``(sigma_env, log_alpha_env)`` with the envelope
            ``alpha_env exp(-|x|^2 / (2 sigma_env))``. Defaults to the largest
            ``sigma`` and ``alpha`` over ``gaussian_iso`` regions.

    Raises:
        EnvelopeViolation: a target evaluation exceeded the envelope.
    """
    if envelope is None:
        if any(r.kind != "gaussian_iso" for r in target.regions):
            raise ValueError("generic targets need an explicit envelope")
        sig = max(r.sigma for r in target.regions)
        alpha = max(r.alpha for r in target.regions)
        envelope = (sig, math.log(alpha))
    sig_env, log_alpha_env = envelope
    d = target.dim
    K = len(target.regions)
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    occ = np.zeros(K)
    got = 0
    while got < N:
        X = rng.standard_normal((chunk, d)) * math.sqrt(sig_env)
        log_env = log_alpha_env - 0.5 * np.sum(X * X, axis=1) / sig_env
        log_pi, region = _log_target(target, X)
        if np.any(log_pi > log_env + 1e-12):
            raise EnvelopeViolation("target exceeds the rejection envelope")
        keep = np.log(rng.random(chunk)) < log_pi - log_env
        X, region = X[keep][: N - got], region[keep][: N - got]
        s1 += X.sum(axis=0)
        s2 += X.T @ X
        occ += np.bincount(region, minlength=K)
        got += len(X)
    mean = s1 / N
    second = s2 / N
    var = np.diag(second) - mean**2
    p = occ / N
    names = range(K)
    return Reference(
        mean=mean,
        mean_se=np.sqrt(var / N),
        second_moment=second,
        occupancy={k: float(p[k]) for k in names},
        occupancy_se={k: float(math.sqrt(p[k] * (1 - p[k]) / N)) for k in names},
        n=N,
    )


def hypercube_occupancy(dim, sigma_in, sigma_out, alpha_in, alpha_out, half_width=1.0):
    """Exact probability of the inside region for the cube target."""
    m_in = truncated_gaussian_moments(sigma_in, -half_width, half_width).mass
    m_out = truncated_gaussian_moments(sigma_out, -half_width, half_width).mass
    z_in = alpha_in * (2 * math.pi * sigma_in) ** (dim / 2) * m_in**dim
    z_out = alpha_out * (2 * math.pi * sigma_out) ** (dim / 2) * (1.0 - m_out**dim)
    return z_in / (z_in + z_out)
