"""End-to-end fit of the quadratic standardizing map, scoring, and demo data."""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InsufficientData, MalformedDocument, VersionMismatch
from .lifting import LiftSpec, fit_lift, lift_data, lifted_count, make_sym_basis
from .moments import as_data_matrix, compute_third_moment
from .rotation import DescentConfig, minimize_projected_norm, orthogonality_error
from .whitening import DEFAULT_EIG_THRESHOLD, AffineMap, apply_affine, fit_whitening

FORMAT_VERSION = "1"
MIN_POINTS_PER_DIM = 10


class NonConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class FittedTransform:
    """Whitening, quadratic lift, rotation, and projection back to N dims.

    ``outcome`` holds descent diagnostics from :func:`fit`; it is not part of
    the serialized document and is ignored by ``==``.
    """

    n: int
    m: int
    whitening: AffineMap
    lift: LiftSpec
    rotation: np.ndarray
    residual_norm: float
    version: str = FORMAT_VERSION
    outcome: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=float)
        size = self.n + self.m
        if self.m != lifted_count(self.n):
            raise DimensionMismatch(f"m={self.m} but n={self.n} needs {lifted_count(self.n)}")
        if rotation.shape != (size, size):
            raise DimensionMismatch(f"rotation must be {size}x{size}, got {rotation.shape}")
        if self.whitening.dim_in != self.n or self.lift.n != self.n:
            raise DimensionMismatch("whitening / lift dimensions disagree with n")
        rotation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)

    def __eq__(self, other):
        if not isinstance(other, FittedTransform):
            return NotImplemented
        return (self.n == other.n and self.m == other.m and self.version == other.version
                and self.whitening == other.whitening and self.lift == other.lift
                and np.array_equal(self.rotation, other.rotation)
                and self.residual_norm == other.residual_norm)

    def __call__(self, data):
        return transform(self, data)


def fit(data, cfg=None, eig_threshold=DEFAULT_EIG_THRESHOLD, progress=None):
    """Fit the standardizing quadratic map on `data`.

    Steps: RX-whiten, lift to ``N + N(N+1)/2`` dims and whiten the lifted
    block, then rotate so the third moment of the projection onto the
    original N axes vanishes.

    A descent that does not converge still yields a usable model; a
    :class:`NonConvergenceWarning` is issued and ``residual_norm`` records
    how far it got.

    Raises
    ------
    InsufficientData
        Fewer than ``10 * (N + M)`` points.
    RankDeficient
        The data, or their quadratic features, do not span full rank.
    """
    data = as_data_matrix(data)
    n_points, n = data.shape
    m = lifted_count(n)
    if n_points < MIN_POINTS_PER_DIM * (n + m):
        raise InsufficientData(
            f"{n_points} points for {n} dims; need at least "
            f"{MIN_POINTS_PER_DIM * (n + m)} (10 x (N + N(N+1)/2))")
    whitening, _ = fit_whitening(data, eig_threshold)
    xw = apply_affine(whitening, data)
    lift = fit_lift(xw, eig_threshold)
    lifted = lift_data(xw, lift)
    tensor = compute_third_moment(lifted)
    state, outcome = minimize_projected_norm(tensor, n, cfg or DescentConfig(), progress)
    if not outcome.converged:
        warnings.warn(f"rotation search ended with status {outcome.status.value}, "
                      f"relative residual {outcome.final_rel_norm:.3g}",
                      NonConvergenceWarning, stacklevel=2)
    return FittedTransform(n, m, whitening, lift, state.A_total,
                           outcome.final_rel_norm, outcome=outcome)


def transform(model, data):
    data = as_data_matrix(data)
    if data.shape[1] != model.n:
        raise DimensionMismatch(f"model expects {model.n} dims, data has {data.shape[1]}")
    xw = apply_affine(model.whitening, data)
    lifted = lift_data(xw, model.lift)
    return lifted @ model.rotation[:model.n].T


def anomaly_scores(model, data):
    return np.linalg.norm(transform(model, data), axis=1)


def rx_scores(whitening, data):
    """Norm after whitening only (classical RX score)."""
    return np.linalg.norm(apply_affine(whitening, data), axis=1)


@dataclass(frozen=True)
class DemoSpec:
    """Uniform triangle ``x, y >= 0, x + y <= 1`` plus anomalies above it.

    Anomalies sit at evenly spaced points of the hypotenuse, moved by
    `anomaly_offset` along its outward normal and jittered by up to
    `jitter` in each coordinate.
    """

    n_points: int = 10_000
    n_anomalies: int = 4
    seed: int = 42
    anomaly_offset: float = 0.1
    jitter: float = 0.02

    def __post_init__(self):
        if self.n_points < 1 or self.n_anomalies < 0:
            raise ValueError("need n_points >= 1 and n_anomalies >= 0")
        if self.anomaly_offset <= np.sqrt(2) * self.jitter:
            raise ValueError("anomaly_offset must exceed the jitter so anomalies stay "
                             "above the diagonal")


def generate_demo(spec=None):
    """Return ``(points, anomaly_indices)``; anomalies are the last rows."""
    spec = spec or DemoSpec()
    rng = np.random.default_rng(spec.seed)
    uv = rng.uniform(size=(spec.n_points, 2))
    fold = uv.sum(axis=1) > 1.0
    uv[fold] = 1.0 - uv[fold]
    k = spec.n_anomalies
    t = (np.arange(k) + 1.0) / (k + 1.0)
    along = np.column_stack([t, 1.0 - t])
    normal = np.array([1.0, 1.0]) / np.sqrt(2.0)
    jitter = rng.uniform(-spec.jitter, spec.jitter, size=(k, 2))
    anomalies = along + spec.anomaly_offset * normal + jitter
    points = np.vstack([uv, anomalies]) if k else uv
    return points, np.arange(spec.n_points, spec.n_points + k)


def _array_node(arr):
    arr = np.asarray(arr, dtype=float)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _read_array(node, path, shape=None):
    try:
        got = tuple(int(s) for s in node["shape"])
        values = np.array(node["data"], dtype=float)
        arr = values.reshape(got)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad array at {path}: {exc}") from exc
    if shape is not None and got != tuple(shape):
        raise MalformedDocument(f"{path} has shape {got}, expected {tuple(shape)}")
    return arr


def _affine_node(affine):
    return {"linear": _array_node(affine.linear), "offset": _array_node(affine.offset)}


def _read_affine(node, path, dim):
    if not isinstance(node, dict):
        raise MalformedDocument(f"{path} must be a mapping")
    linear = _read_array(_get(node, "linear", path), f"{path}.linear", (dim, dim))
    offset = _read_array(_get(node, "offset", path), f"{path}.offset", (dim,))
    return AffineMap(linear, offset)


def _get(node, key, path):
    try:
        return node[key]
    except (KeyError, TypeError):
        raise MalformedDocument(f"missing field {path + '.' if path else ''}{key}") from None


def to_document(model):
    return {
        "version": model.version,
        "n": model.n,
        "m": model.m,
        "whitening": _affine_node(model.whitening),
        "lift": {
            "alphas": _array_node(model.lift.alphas),
            "betas": _array_node(model.lift.betas),
            "z_whitening": _affine_node(model.lift.z_whitening),
        },
        "rotation": _array_node(model.rotation),
        "residual_norm": model.residual_norm,
    }


def from_document(doc):
    if not isinstance(doc, dict):
        raise MalformedDocument("model document must be a mapping")
    version = str(_get(doc, "version", ""))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {version!r}, supported {FORMAT_VERSION!r}")
    try:
        n, m = int(_get(doc, "n", "")), int(_get(doc, "m", ""))
        residual = float(_get(doc, "residual_norm", ""))
    except (TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad scalar field: {exc}") from exc
    if n < 1 or m != lifted_count(n):
        raise MalformedDocument(f"inconsistent dimensions n={n}, m={m}")
    lift_node = _get(doc, "lift", "")
    whitening = _read_affine(_get(doc, "whitening", ""), "whitening", n)
    alphas = _read_array(_get(lift_node, "alphas", "lift"), "lift.alphas", (m,))
    betas = _read_array(_get(lift_node, "betas", "lift"), "lift.betas", (m, n))
    z_whitening = _read_affine(_get(lift_node, "z_whitening", "lift"), "lift.z_whitening", m)
    rotation = _read_array(_get(doc, "rotation", ""), "rotation", (n + m, n + m))
    if orthogonality_error(rotation) > 1e-10:
        raise MalformedDocument("rotation is not orthogonal")
    lift = LiftSpec(make_sym_basis(n), alphas, betas, z_whitening)
    return FittedTransform(n, m, whitening, lift, rotation, residual, version)


def serialize(model):
    """JSON text; floats use the shortest repr that round-trips exactly."""
    return json.dumps(to_document(model), indent=1)


def deserialize(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    return from_document(doc)


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(serialize(model))


def load_model(path):
    with open(path) as fh:
        return deserialize(fh.read())
