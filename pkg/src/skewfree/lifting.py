"""Quadratic lift of whitened data into ``N + N(N+1)/2`` dimensions.

Each added coordinate is ``z = alpha + beta . x + x . gamma . x`` for one
element ``gamma`` of an orthonormal basis of symmetric matrices.  With
``alpha = -tr(gamma)`` and ``beta_i = -Q[i,j,k] gamma[j,k]`` the new
coordinate has zero mean and is uncorrelated with every ``x_i`` on the
whitened sample it was fitted on.  The added block is then whitened jointly.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient
from .moments import SymTensor3, as_data_matrix, compute_third_moment
from .whitening import DEFAULT_EIG_THRESHOLD, AffineMap, apply_affine, fit_whitening

_SQRT2 = np.sqrt(2.0)


def lifted_count(n):
    return n * (n + 1) // 2


@dataclass(frozen=True, eq=False)
class SymBasis:
    """Orthonormal basis (trace inner product) of symmetric n x n matrices.

    Order: ``E_ii`` for ascending i, then ``(E_ij + E_ji)/sqrt(2)`` for
    ``i < j`` in lexicographic order.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray

    @property
    def m(self):
        return len(self.rows)

    @property
    def elements(self):
        out = np.zeros((self.m, self.n, self.n))
        for xi, (i, j) in enumerate(zip(self.rows, self.cols)):
            if i == j:
                out[xi, i, i] = 1.0
            else:
                out[xi, i, j] = out[xi, j, i] = 1.0 / _SQRT2
        return out

    def quadratic_features(self, x):
        """``x . gamma_xi . x`` for every basis element, shape (P, M)."""
        weights = np.where(self.rows == self.cols, 1.0, _SQRT2)
        return x[:, self.rows] * x[:, self.cols] * weights


def make_sym_basis(n):
    if n < 1:
        raise ValueError("n must be >= 1")
    diag = [(i, i) for i in range(n)]
    off = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rows, cols = zip(*(diag + off))
    return SymBasis(n, np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp))


def lift_coefficients(gamma, tensor):
    """Return ``(alpha, beta)`` for one symmetric lift matrix `gamma`."""
    gamma = np.asarray(gamma, dtype=float)
    n = tensor.dim
    if gamma.shape != (n, n):
        raise DimensionMismatch(f"gamma has shape {gamma.shape}, tensor dim is {n}")
    alpha = -float(np.trace(gamma))
    beta = -np.einsum("ijk,jk->i", tensor.dense, gamma)
    return alpha, beta


@dataclass(frozen=True, eq=False)
class LiftSpec:
    basis: SymBasis
    alphas: np.ndarray
    betas: np.ndarray
    z_whitening: AffineMap

    def __post_init__(self):
        n, m = self.basis.n, self.basis.m
        alphas = np.array(self.alphas, dtype=float).ravel()
        betas = np.array(self.betas, dtype=float)
        if alphas.shape != (m,) or betas.shape != (m, n):
            raise DimensionMismatch(
                f"alphas {alphas.shape} / betas {betas.shape} do not match n={n}, m={m}")
        if self.z_whitening.dim_in != m or self.z_whitening.dim_out != m:
            raise DimensionMismatch("z-whitening must map the M lifted coordinates to M")
        alphas.setflags(write=False)
        betas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)

    @property
    def n(self):
        return self.basis.n

    @property
    def m(self):
        return self.basis.m

    def __eq__(self, other):
        if not isinstance(other, LiftSpec):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.alphas, other.alphas)
                and np.array_equal(self.betas, other.betas)
                and self.z_whitening == other.z_whitening)


def lift_coefficient_arrays(basis, tensor):
    """Stack ``(alpha, beta)`` over all basis elements."""
    pairs = [lift_coefficients(gamma, tensor) for gamma in basis.elements]
    return np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])


def raw_lift(data_whitened, basis, alphas, betas):
    """The M added coordinates before z-whitening, shape (P, M)."""
    x = as_data_matrix(data_whitened)
    if x.shape[1] != basis.n:
        raise DimensionMismatch(f"lift expects {basis.n} dims, data has {x.shape[1]}")
    return alphas + x @ betas.T + basis.quadratic_features(x)


def fit_lift(data_whitened, eig_threshold=DEFAULT_EIG_THRESHOLD):
    """Fit lift coefficients and the z-block whitening on whitened data.

    The third moment is measured on `data_whitened` itself so the zero-mean
    and zero-correlation identities hold on this sample.

    Raises
    ------
    RankDeficient
        The quadratic features are linearly dependent on the sample, for
        instance when there are fewer than ``N + M + 1`` points.
    """
    x = as_data_matrix(data_whitened)
    basis = make_sym_basis(x.shape[1])
    tensor = compute_third_moment(x)
    alphas, betas = lift_coefficient_arrays(basis, tensor)
    z = raw_lift(x, basis, alphas, betas)
    try:
        z_whitening, _ = fit_whitening(z, eig_threshold)
    except RankDeficient as exc:
        raise RankDeficient(f"lifted coordinates are degenerate: {exc}", exc.report) from exc
    return LiftSpec(basis, alphas, betas, z_whitening)


def lift_data(data_whitened, spec):
    """Map ``(P, N)`` whitened data to ``(P, N + M)`` lifted data.

    The first N columns are the input unchanged; the rest are the whitened
    quadratic coordinates.
    """
    x = as_data_matrix(data_whitened)
    z = raw_lift(x, spec.basis, spec.alphas, spec.betas)
    return np.hstack([x, apply_affine(spec.z_whitening, z)])


def recover_third_moment(spec):
    """Invert ``beta_i = -Q[i,j,k] gamma[j,k]`` for the fit-time tensor."""
    n = spec.n
    basis = spec.basis
    # betas[xi, i] = -sum_jk Q[i,j,k] gamma_xi[j,k]; gamma basis is orthonormal
    dense = -np.einsum("xi,xjk->ijk", spec.betas, basis.elements)
    return SymTensor3.from_dense(dense.reshape(n, n, n))
