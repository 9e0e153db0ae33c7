"""RX standardization: zero the mean and make the covariance the identity."""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InsufficientData, RankDeficient
from .moments import as_data_matrix, compute_covariance, compute_mean

DEFAULT_EIG_THRESHOLD = 1e-12
_TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x -> linear @ x + offset`` applied row-wise."""

    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        linear = np.array(self.linear, dtype=float)
        offset = np.array(self.offset, dtype=float).ravel()
        if linear.ndim != 2 or offset.shape != (linear.shape[0],):
            raise DimensionMismatch(
                f"linear {linear.shape} and offset {offset.shape} are inconsistent")
        if not (np.all(np.isfinite(linear)) and np.all(np.isfinite(offset))):
            raise ValueError("affine map entries must be finite")
        linear.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "offset", offset)

    @property
    def dim_in(self):
        return self.linear.shape[1]

    @property
    def dim_out(self):
        return self.linear.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    def __call__(self, data):
        return apply_affine(self, data)

    def __eq__(self, other):
        if not isinstance(other, AffineMap):
            return NotImplemented
        return (np.array_equal(self.linear, other.linear)
                and np.array_equal(self.offset, other.offset))


@dataclass(frozen=True)
class WhiteningReport:
    eigenvalues: np.ndarray
    condition_number: float
    dropped: int


def apply_affine(affine, data):
    data = as_data_matrix(data)
    if data.shape[1] != affine.dim_in:
        raise DimensionMismatch(
            f"map expects {affine.dim_in} dims, data has {data.shape[1]}")
    return data @ affine.linear.T + affine.offset


def _normalize_signs(vectors):
    # column-wise: the largest-magnitude entry of each eigenvector is positive
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _ordered_eigh(cov):
    values, vectors = np.linalg.eigh(cov)
    vectors = _normalize_signs(vectors)
    order = list(np.argsort(-values, kind="stable"))
    scale = max(abs(values).max(), np.finfo(float).tiny)
    # equal eigenvalues: lexicographically larger eigenvector first
    result, start = [], 0
    while start < len(order):
        stop = start + 1
        while (stop < len(order)
               and values[order[start]] - values[order[stop]] <= _TIE_RTOL * scale):
            stop += 1
        cluster = sorted(order[start:stop], key=lambda c: tuple(vectors[:, c]), reverse=True)
        result.extend(cluster)
        start = stop
    result = np.array(result)
    return values[result], vectors[:, result]


def fit_whitening(data, eig_threshold=DEFAULT_EIG_THRESHOLD):
    """Fit the RX map ``x -> L^{-1/2} V^T (x - mean)``.

    Parameters
    ----------
    data : array_like, shape (P, D)
    eig_threshold : float
        Eigenvalues below ``eig_threshold * max eigenvalue`` mean the data
        do not span all D dimensions.

    Returns
    -------
    affine : AffineMap
    report : WhiteningReport

    Raises
    ------
    InsufficientData
        Fewer than two points.
    RankDeficient
        The covariance is (numerically) singular.
    """
    data = as_data_matrix(data)
    if data.shape[0] < 2:
        raise InsufficientData(f"whitening needs at least 2 points, got {data.shape[0]}")
    mean = compute_mean(data)
    cov = compute_covariance(data, mean)
    values, vectors = _ordered_eigh(cov)
    largest = values[0]
    keep = values > eig_threshold * largest if largest > 0 else np.zeros(len(values), bool)
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        report = WhiteningReport(values, np.inf, dropped)
        raise RankDeficient(
            f"{dropped} of {len(values)} covariance eigenvalues are below "
            f"{eig_threshold:g} x the largest", report)
    linear = vectors.T / np.sqrt(values)[:, None]
    offset = -linear @ mean
    report = WhiteningReport(values, float(values[0] / values[-1]), 0)
    return AffineMap(linear, offset), report
