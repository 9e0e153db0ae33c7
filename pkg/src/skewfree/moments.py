"""Empirical moments and symmetric order-3 tensors.

Data are plain ``(P, D)`` float arrays, one point per row.  All moments use
population normalization (divide by ``P``).  Sums over points are
accumulated in fixed-size chunks and combined with a pairwise reduction, so
results do not depend on anything but the chunk size.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InsufficientData

DEFAULT_CHUNK_SIZE = 4096


def as_data_matrix(data, name="data"):
    """Validate and convert `data` to a 2-D float array.

    A 1-D input is read as ``P`` points in one dimension.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D (points x dims), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInput(f"{name} has no points")
    if arr.shape[1] == 0:
        raise DimensionMismatch(f"{name} has no dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _pairwise_reduce(parts):
    while len(parts) > 1:
        merged = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def chunked_sum(data, func, chunk_size=DEFAULT_CHUNK_SIZE):
    """Sum ``func(chunk)`` over row chunks of `data` with a pairwise tree."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    parts = [func(data[start:start + chunk_size])
             for start in range(0, data.shape[0], chunk_size)]
    return _pairwise_reduce(parts)


@lru_cache(maxsize=None)
def _index_tables(dim):
    triples = np.array(list(combinations_with_replacement(range(dim), 3)),
                       dtype=np.intp).reshape(-1, 3)
    lookup = np.empty((dim, dim, dim), dtype=np.intp)
    for pos, (i, j, k) in enumerate(triples):
        for a, b, c in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            lookup[a, b, c] = pos
    triples.setflags(write=False)
    lookup.setflags(write=False)
    return triples, lookup


@lru_cache(maxsize=None)
def _pair_tables(dim):
    rows, cols = np.triu_indices(dim)
    pair_of = np.empty((dim, dim), dtype=np.intp)
    pair_of[rows, cols] = np.arange(rows.size)
    pair_of[cols, rows] = np.arange(rows.size)
    return rows, cols, pair_of


def packed_size(dim):
    return dim * (dim + 1) * (dim + 2) // 6


@dataclass(frozen=True, eq=False)
class SymTensor3:
    """Symmetric order-3 tensor stored by its independent components.

    ``packed`` holds the entries ``Q[i, j, k]`` with ``i <= j <= k`` in
    lexicographic order.  Any permutation of an index triple reads the same
    stored value, so symmetry is exact.
    """

    dim: int
    packed: np.ndarray

    def __post_init__(self):
        packed = np.array(self.packed, dtype=float).ravel()
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if packed.size != packed_size(self.dim):
            raise DimensionMismatch(
                f"expected {packed_size(self.dim)} components for dim {self.dim}, "
                f"got {packed.size}")
        packed.setflags(write=False)
        object.__setattr__(self, "packed", packed)

    @classmethod
    def zeros(cls, dim):
        return cls(dim, np.zeros(packed_size(dim)))

    @classmethod
    def from_dense(cls, dense, symmetrize=False):
        """Build from a full ``(D, D, D)`` array.

        Without `symmetrize` the ``i <= j <= k`` entries are taken as they
        are; with it the array is first averaged over all index permutations.
        """
        dense = np.asarray(dense, dtype=float)
        if dense.ndim != 3 or len(set(dense.shape)) != 1:
            raise DimensionMismatch(f"expected a cubic 3-D array, got shape {dense.shape}")
        if symmetrize:
            dense = (dense + dense.transpose(0, 2, 1) + dense.transpose(1, 0, 2)
                     + dense.transpose(1, 2, 0) + dense.transpose(2, 0, 1)
                     + dense.transpose(2, 1, 0)) / 6.0
        dim = dense.shape[0]
        triples, _ = _index_tables(dim)
        return cls(dim, dense[triples[:, 0], triples[:, 1], triples[:, 2]])

    @classmethod
    def from_entries(cls, dim, entries):
        """Build from a mapping ``{(i, j, k): value}``; unlisted entries are 0."""
        _, lookup = _index_tables(dim)
        packed = np.zeros(packed_size(dim))
        for (i, j, k), value in entries.items():
            packed[lookup[i, j, k]] = value
        return cls(dim, packed)

    @cached_property
    def dense(self):
        """Full ``(D, D, D)`` read-only array."""
        _, lookup = _index_tables(self.dim)
        out = self.packed[lookup]
        out.setflags(write=False)
        return out

    def __getitem__(self, index):
        i, j, k = index
        _, lookup = _index_tables(self.dim)
        return float(self.packed[lookup[i, j, k]])

    def __neg__(self):
        return SymTensor3(self.dim, -self.packed)

    def frobenius_norm(self):
        """Frobenius norm of the full tensor, counting every permutation."""
        return float(np.sqrt(np.sum(self.dense ** 2)))

    def allclose(self, other, rtol=1e-10, atol=0.0):
        return self.dim == other.dim and np.allclose(self.packed, other.packed,
                                                     rtol=rtol, atol=atol)


def compute_mean(data, chunk_size=DEFAULT_CHUNK_SIZE):
    data = as_data_matrix(data)
    return chunked_sum(data, lambda c: c.sum(axis=0), chunk_size) / data.shape[0]


def compute_covariance(data, mean=None, chunk_size=DEFAULT_CHUNK_SIZE):
    """Population covariance ``(1/P) sum (x - mean)(x - mean)^T``."""
    data = as_data_matrix(data)
    if data.shape[0] < 2:
        raise InsufficientData("covariance needs at least 2 points")
    if mean is None:
        mean = compute_mean(data, chunk_size)
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (data.shape[1],):
        raise DimensionMismatch(f"mean has shape {mean.shape}, data has {data.shape[1]} dims")

    def block(chunk):
        centered = chunk - mean
        return centered.T @ centered

    cov = chunked_sum(data, block, chunk_size) / data.shape[0]
    return 0.5 * (cov + cov.T)


def compute_third_moment(data, chunk_size=DEFAULT_CHUNK_SIZE):
    """Third moment ``Q[i,j,k] = <x_i x_j x_k>`` of (already centered) data.

    Only the independent components are accumulated: each chunk forms the
    pair products ``x_j x_k`` (``j <= k``) and contracts them with ``x_i``.
    """
    data = as_data_matrix(data)
    dim = data.shape[1]
    rows, cols, pair_of = _pair_tables(dim)

    def block(chunk):
        return chunk.T @ (chunk[:, rows] * chunk[:, cols])

    sums = chunked_sum(data, block, chunk_size) / data.shape[0]
    triples, _ = _index_tables(dim)
    packed = sums[triples[:, 0], pair_of[triples[:, 1], triples[:, 2]]]
    return SymTensor3(dim, packed)


def projected_norm_sq(tensor, horizontal_dim):
    """Sum of squares of the components whose three indices are all < N."""
    n = int(horizontal_dim)
    if n > tensor.dim or n < 0:
        raise DimensionMismatch(f"horizontal dim {n} exceeds tensor dim {tensor.dim}")
    block = tensor.dense[:n, :n, :n]
    return float(np.sum(block * block))


def rotate_dense(dense, matrix):
    """Apply ``matrix`` to all three modes of a dense cubic array."""
    out = np.tensordot(matrix, dense, axes=(1, 0))
    out = np.einsum("nb,mbg->mng", matrix, out, optimize=True)
    return np.einsum("lg,mng->mnl", matrix, out, optimize=True)


def rotate_tensor(tensor, matrix):
    """Transform as ``Q'[m,n,l] = A[m,a] A[n,b] A[l,c] Q[a,b,c]``.

    The contraction is done one mode at a time, ``O(D^4)``.  `matrix` is
    expected to be orthogonal but this is not checked.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"rotation must be square, got shape {matrix.shape}")
    if matrix.shape[0] != tensor.dim:
        raise DimensionMismatch(
            f"rotation is {matrix.shape[0]}x{matrix.shape[0]}, tensor dim is {tensor.dim}")
    return SymTensor3.from_dense(rotate_dense(tensor.dense, matrix))
