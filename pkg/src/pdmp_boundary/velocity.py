"""Velocity laws for the three samplers.

Velocities are always stored in ambient coordinates. The two finite laws
carry a :class:`Basis`; their atoms are ``R s`` with ``s`` in ``{±1}^d``
(Zig-Zag) or ``±R e_i`` (Coordinate Sampler).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import NotFinite

TANGENT_TOLERANCE = 1e-12
_MAX_ENUMERATE_DIM = 16


class Basis:
    """Orthonormal basis, stored as the matrix ``R`` whose columns are the axes."""

    def __init__(self, R):
        R = np.array(R, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("basis matrix must be square")
        if not np.allclose(R.T @ R, np.eye(R.shape[0]), rtol=0.0, atol=1e-10):
            raise ValueError("basis columns are not orthonormal")
        self.R = R
        self.canonical = bool(np.array_equal(R, np.eye(R.shape[0])))

    @property
    def dim(self):
        return self.R.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def random(cls, dim, seed):
        """Haar-random rotation from the QR factorisation of a Gaussian matrix.

        The sign correction ``Q * sign(diag(R))`` makes the law Haar on O(d);
        flipping the first column when ``det < 0`` lands in SO(d).
        """
        rng = np.random.default_rng(seed)
        Q, Rr = np.linalg.qr(rng.standard_normal((dim, dim)))
        Q = Q * np.sign(np.diag(Rr))
        if np.linalg.det(Q) < 0:
            Q[:, 0] = -Q[:, 0]
        return cls(Q)

    def to_basis(self, v):
        return self.R.T @ v

    def from_basis(self, s):
        return self.R @ s

    def __repr__(self):
        return f"Basis(dim={self.dim}, canonical={self.canonical})"


class VelocitySpace:
    """Common interface. ``refresh`` is a full resample for every law."""

    finite = False
    name = "abstract"

    def __init__(self, dim):
        self.dim = int(dim)

    def sample(self, rng):
        raise NotImplementedError

    def refresh(self, v, rng):
        return self.sample(rng)

    def density(self, v):
        """Atom probability (finite laws) or density value (continuous laws)."""
        raise NotImplementedError

    def proposals(self, rng, size):
        """``size`` independent draws from the MH proposal law, shape (size, d)."""
        raise NotImplementedError

    def proposal_density(self, v):
        """Density of the MH proposal law at ``v`` (any constant if uniform)."""
        return np.ones(np.shape(v)[:-1])

    def enumerate(self):
        raise NotFinite(f"{self.name} has no finite atom set")

    def split_by_normal(self, n):
        """Partition the atoms by the sign of ``<v, n>``.

        Returns:
            ``(V_plus, V_minus, tangent)`` arrays of atoms; ``|<v, n>|`` below
            ``TANGENT_TOLERANCE`` counts as tangent.
        """
        atoms, _ = self.enumerate()
        dots = atoms @ np.asarray(n, dtype=float)
        plus = dots > TANGENT_TOLERANCE
        minus = dots < -TANGENT_TOLERANCE
        return atoms[plus], atoms[minus], atoms[~(plus | minus)]

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class UnitSphere(VelocitySpace):
    name = "sphere"

    def sample(self, rng):
        g = rng.standard_normal(self.dim)
        return g / np.linalg.norm(g)

    def density(self, v):
        d = self.dim
        area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
        return np.full(np.shape(v)[:-1], 1.0 / area)

    def proposals(self, rng, size):
        g = rng.standard_normal((size, self.dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


class IsoGaussian(VelocitySpace):
    name = "gaussian"

    def sample(self, rng):
        return rng.standard_normal(self.dim)

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-0.5 * np.sum(v * v, axis=-1)) / (2.0 * math.pi) ** (self.dim / 2)

    def proposals(self, rng, size):
        return rng.standard_normal((size, self.dim))

    def proposal_density(self, v):
        return self.density(v)


class SignedHypercube(VelocitySpace):
    """Zig-Zag velocities ``R s``, ``s`` uniform on ``{±1}^d``."""

    finite = True
    name = "hypercube"

    def __init__(self, dim, basis=None):
        super().__init__(dim)
        self.basis = basis if basis is not None else Basis.identity(dim)
        if self.basis.dim != self.dim:
            raise ValueError("basis dimension mismatch")

    @property
    def n_atoms(self):
        return 2**self.dim

    def signs(self, v):
        """Basis-coordinate signs ``s`` of an atom ``v = R s``."""
        return np.where(self.basis.to_basis(v) >= 0, 1.0, -1.0)

    def sample(self, rng):
        s = np.where(rng.random(self.dim) < 0.5, -1.0, 1.0)
        return self.basis.from_basis(s)

    def density(self, v):
        return np.full(np.shape(v)[:-1], 2.0 ** (-self.dim))

    def proposals(self, rng, size):
        S = np.where(rng.random((size, self.dim)) < 0.5, -1.0, 1.0)
        return S @ self.basis.R.T

    def enumerate(self):
        if self.dim > _MAX_ENUMERATE_DIM:
            raise ValueError(f"refusing to enumerate 2^{self.dim} atoms")
        S = np.array(list(itertools.product((1.0, -1.0), repeat=self.dim)))
        return S @ self.basis.R.T, np.full(len(S), 2.0 ** (-self.dim))


class CoordinateAxes(VelocitySpace):
    """Coordinate Sampler velocities ``±R e_i``, uniform over the ``2d`` atoms."""

    finite = True
    name = "axes"

    def __init__(self, dim, basis=None):
        super().__init__(dim)
        self.basis = basis if basis is not None else Basis.identity(dim)
        if self.basis.dim != self.dim:
            raise ValueError("basis dimension mismatch")

    @property
    def n_atoms(self):
        return 2 * self.dim

    def atom(self, i, sign):
        return sign * self.basis.R[:, i]

    def axis_of(self, v):
        """``(i, sign)`` such that ``v = sign * R e_i``."""
        c = self.basis.to_basis(v)
        i = int(np.argmax(np.abs(c)))
        return i, (1.0 if c[i] > 0 else -1.0)

    def sample(self, rng):
        j = int(rng.integers(2 * self.dim))
        return self.atom(j % self.dim, 1.0 if j < self.dim else -1.0)

    def density(self, v):
        return np.full(np.shape(v)[:-1], 1.0 / (2 * self.dim))

    def proposals(self, rng, size):
        j = rng.integers(2 * self.dim, size=size)
        signs = np.where(j < self.dim, 1.0, -1.0)
        return (self.basis.R[:, j % self.dim] * signs).T

    def enumerate(self):
        atoms = np.concatenate([self.basis.R.T, -self.basis.R.T])
        return atoms, np.full(2 * self.dim, 1.0 / (2 * self.dim))


def make_space(name, dim, basis=None):
    """Build a velocity space from its short name."""
    if name in ("sphere", "unit_sphere"):
        return UnitSphere(dim)
    if name in ("gaussian", "iso_gaussian"):
        return IsoGaussian(dim)
    if name == "hypercube":
        return SignedHypercube(dim, basis)
    if name == "axes":
        return CoordinateAxes(dim, basis)
    raise ValueError(f"unknown velocity space {name!r}")
