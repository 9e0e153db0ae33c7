"""Rotation of the lifted distribution that cancels the projected third moment.

The lifted space has ``D = N + M`` coordinates; the first N span the
horizontal subspace H.  The objective is the squared Frobenius norm of the
H-block of the third-moment tensor.  Steps are exact exponentials of block
skew generators ``[[0, -w*phi], [w*phi^T, 0]]`` that mix H with the lifted
coordinates only, and the steepest-descent direction is

    Phi[i, xi] = Q[i, j, k] Q[N + xi, j, k]    (j, k summed over H)

with first-order change ``-6 sum(phi * Phi)`` of the objective.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch
from .moments import SymTensor3, projected_norm_sq, rotate_dense


_ZERO_RTOL = 1e-12
_STALL_WINDOW = 100
_PROBE_STEPS = 25


class DescentStatus(str, Enum):
    CONVERGED = "Converged"
    GRADIENT_VANISHED_NONZERO_NORM = "GradientVanishedNonzeroNorm"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class DescentConfig:
    """Knobs for :func:`minimize_projected_norm`.

    `step0` of ``None`` means ``0.1 / max(1, |Phi_0|_F)``.  The step grows
    by `grow` after each accepted step, up to ``10 * step0``, and shrinks by
    `shrink` on each rejected trial.
    """

    step0: float = None
    shrink: float = 0.5
    grow: float = 1.5
    max_iters: int = 5000
    tol_rel_norm: float = 1e-6
    tol_grad: float = 1e-10
    seed: int = 42
    restarts: int = 3
    saddle_trials: int = 64
    restart_probes: int = 8

    def __post_init__(self):
        if self.step0 is not None and not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if not 0 < self.shrink < 1 < self.grow:
            raise ValueError("need 0 < shrink < 1 < grow")
        if not (self.tol_rel_norm > 0 and self.tol_grad > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0 or self.restarts < 0:
            raise ValueError("max_iters and restarts must be >= 0")
        if self.saddle_trials < 1 or self.restart_probes < 1:
            raise ValueError("saddle_trials and restart_probes must be >= 1")


@dataclass
class RotationState:
    A_total: np.ndarray
    Q_current: SymTensor3
    norm_sq: float
    iter: int = 0


@dataclass
class DescentOutcome:
    status: DescentStatus
    final_rel_norm: float
    iters: int
    history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status is DescentStatus.CONVERGED


@dataclass(frozen=True)
class SaddleReport:
    is_escapable: bool
    best_direction: np.ndarray
    best_value: float


def _check_split(dim, n):
    if not 0 < n < dim:
        raise DimensionMismatch(f"horizontal dim {n} must lie in (0, {dim})")


def _dense(tensor):
    return tensor.dense if isinstance(tensor, SymTensor3) else np.asarray(tensor, float)


def compute_phi(tensor, n):
    """Gradient matrix ``Phi[i, xi] = sum_{j,k<n} Q[i,j,k] Q[n+xi,j,k]``."""
    _check_split(_dense(tensor).shape[0], n)
    dense = _dense(tensor)
    return np.einsum("ijk,xjk->ix", dense[:n, :n, :n], dense[n:, :n, :n], optimize=True)


def block_generator(phi, omega=1.0):
    phi = np.asarray(phi, dtype=float)
    n, m = phi.shape
    gen = np.zeros((n + m, n + m))
    gen[:n, n:] = -omega * phi
    gen[n:, :n] = omega * phi.T
    return gen


def block_rotation(phi, omega=1.0):
    """Exact ``expm([[0, -w*phi], [w*phi^T, 0]])``.

    Uses the singular value decomposition ``w*phi = U S V^T``, under which
    the exponential is a set of plane rotations by the angles ``S``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or not np.all(np.isfinite(phi)):
        raise ValueError("phi must be a finite 2-D array")
    n, m = phi.shape
    u, s, vt = np.linalg.svd(omega * phi, full_matrices=False)
    cos, sin = np.cos(s), np.sin(s)
    v = vt.T
    out = np.empty((n + m, n + m))
    out[:n, :n] = np.eye(n) + (u * (cos - 1.0)) @ u.T
    out[:n, n:] = -(u * sin) @ vt
    out[n:, :n] = (v * sin) @ u.T
    out[n:, n:] = np.eye(m) + (v * (cos - 1.0)) @ vt
    return out


def orthogonality_error(matrix):
    return float(np.max(np.abs(matrix.T @ matrix - np.eye(matrix.shape[0]))))


def _polar(matrix):
    u, _, vt = np.linalg.svd(matrix)
    return u @ vt


def flow_derivative(tensor, n):
    """Time derivative of Q along the gradient flow, block by block.

    Indices i, j, k, m run over H and xi, eta, zeta, rho over the lifted
    coordinates; repeated indices are summed.
    """
    q = _dense(tensor)
    _check_split(q.shape[0], n)
    phi = compute_phi(q, n)
    h, z = slice(0, n), slice(n, None)
    out = np.empty_like(q)
    # dQ_ijk = -Phi_ir Q_rjk - Phi_jr Q_irk - Phi_kr Q_ijr
    out[h, h, h] = -(np.einsum("ir,rjk->ijk", phi, q[z, h, h])
                     + np.einsum("jr,irk->ijk", phi, q[h, z, h])
                     + np.einsum("kr,ijr->ijk", phi, q[h, h, z]))
    # dQ_ijx = -Phi_ir Q_rjx - Phi_jr Q_irx + Phi_mx Q_ijm
    hhz = (-np.einsum("ir,rjx->ijx", phi, q[z, h, z])
           - np.einsum("jr,irx->ijx", phi, q[h, z, z])
           + np.einsum("mx,ijm->ijx", phi, q[h, h, h]))
    # dQ_ixy = -Phi_ir Q_rxy + Phi_mx Q_imy + Phi_my Q_ixm
    hzz = (-np.einsum("ir,rxy->ixy", phi, q[z, z, z])
           + np.einsum("mx,imy->ixy", phi, q[h, h, z])
           + np.einsum("my,ixm->ixy", phi, q[h, z, h]))
    # dQ_xyw = Phi_mx Q_myw + Phi_my Q_xmw + Phi_mw Q_xym
    out[z, z, z] = (np.einsum("mx,myw->xyw", phi, q[h, z, z])
                    + np.einsum("my,xmw->xyw", phi, q[z, h, z])
                    + np.einsum("mw,xym->xyw", phi, q[z, z, h]))
    out[h, h, z] = hhz
    out[h, z, h] = hhz.transpose(0, 2, 1)
    out[z, h, h] = hhz.transpose(2, 0, 1)
    out[h, z, z] = hzz
    out[z, h, z] = hzz.transpose(1, 0, 2)
    out[z, z, h] = hzz.transpose(1, 2, 0)
    return out


def gradient_flow_check(tensor, n, dt, steps):
    """Max deviation between Euler-integrated flow and discrete rotations.

    Both paths start at `tensor`; one integrates :func:`flow_derivative`
    with explicit Euler, the other applies ``block_rotation(Phi, dt)`` at
    each step.  The deviation is ``O(dt^2 * steps)``.
    """
    start = _dense(tensor)
    _check_split(start.shape[0], n)
    euler = start.copy()
    discrete = start.copy()
    deviation = 0.0
    for _ in range(int(steps)):
        euler = euler + dt * flow_derivative(euler, n)
        discrete = rotate_dense(discrete, block_rotation(compute_phi(discrete, n), dt))
        deviation = max(deviation, float(np.max(np.abs(euler - discrete))))
    return deviation


def second_order_form(tensor, n):
    """Hessian-like 4-index array of the objective's quadratic term.

    For a block generator ``phi`` the objective changes by
    ``-6 sum(phi * Phi) + einsum('ix,ixjy,jy', phi, H, phi) + O(phi^3)``.
    """
    _check_split(_dense(tensor).shape[0], n)
    q = _dense(tensor)
    hhh, zhh, zzh = q[:n, :n, :n], q[n:, :n, :n], q[n:, n:, :n]
    eye_h = np.eye(n)
    eye_z = np.eye(q.shape[0] - n)
    form = -3.0 * np.einsum("ijk,ljk,xy->ixly", hhh, hhh, eye_z)
    form += 3.0 * np.einsum("xij,yij,kl->kxly", zhh, zhh, eye_h)
    form += 6.0 * np.einsum("yik,xjk->ixjy", zhh, zhh)
    form += 6.0 * np.einsum("ijk,xyk->ixjy", hhh, zzh)
    shape = form.shape
    flat = form.reshape(shape[0] * shape[1], -1)
    return (0.5 * (flat + flat.T)).reshape(shape)


def second_order_change(tensor, n, phi):
    """Quadratic term of the objective change along ``phi``."""
    return float(np.einsum("ix,ixjy,jy->", phi, second_order_form(tensor, n), phi))


def saddle_diagnostic(tensor, n, trials=64, seed=None):
    """Look for a direction of negative curvature at a stationary point.

    Evaluates the quadratic term on `trials` random unit directions and on
    the exact most-negative eigendirection of the form.
    """
    q = _dense(tensor)
    _check_split(q.shape[0], n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    form = second_order_form(q, n)
    m = q.shape[0] - n
    flat = form.reshape(n * m, n * m)
    candidates = rng.normal(size=(int(trials), n * m))
    candidates /= np.linalg.norm(candidates, axis=1, keepdims=True)
    _, vecs = np.linalg.eigh(flat)
    candidates = np.vstack([candidates, vecs[:, 0]])
    values = np.einsum("ta,ab,tb->t", candidates, flat, candidates)
    best = int(np.argmin(values))
    scale = float(np.sum(q * q))
    is_escapable = bool(values[best] < -1e-12 * max(scale, np.finfo(float).tiny))
    return SaddleReport(is_escapable, candidates[best].reshape(n, m), float(values[best]))


class _Descent:
    """Mutable bookkeeping for one call of minimize_projected_norm."""

    def __init__(self, q0, n, cfg, progress):
        self.q0 = q0
        self.n = n
        self.cfg = cfg
        self.progress = progress
        self.full_sq = float(np.sum(q0 ** 2))
        self.iters = 0

    def evaluate(self, a_total):
        q = rotate_dense(self.q0, a_total)
        h = q[:self.n, :self.n, :self.n]
        return q, float(np.sum(h * h))

    def run(self, a_total, q, norm_sq, step0, target, history, limit=None):
        """Line-searched descent; returns (a_total, q, norm_sq, reason).

        Stops after `limit` accepted steps if given.  Less than a 1e-9
        relative decrease over a window of accepted steps counts as
        stationary: the gradient is then too small to make progress.
        """
        cfg, n = self.cfg, self.n
        step = step0
        taken = 0
        while True:
            if norm_sq <= target:
                return a_total, q, norm_sq, "converged"
            if self.iters >= cfg.max_iters:
                return a_total, q, norm_sq, "max_iters"
            if limit is not None and taken >= limit:
                return a_total, q, norm_sq, "limit"
            if (taken >= _STALL_WINDOW
                    and history[-_STALL_WINDOW] - norm_sq <= 1e-9 * history[-_STALL_WINDOW]):
                return a_total, q, norm_sq, "stationary"
            phi = compute_phi(q, n)
            if np.linalg.norm(phi) <= cfg.tol_grad * self.full_sq:
                return a_total, q, norm_sq, "stationary"
            accepted = False
            while step > step0 * 1e-30:
                candidate = block_rotation(phi, step) @ a_total
                q_try, norm_try = self.evaluate(candidate)
                if norm_try < norm_sq:
                    accepted = True
                    break
                step *= cfg.shrink
            if not accepted:
                return a_total, q, norm_sq, "stationary"
            if orthogonality_error(candidate) > 1e-12:
                candidate = _polar(candidate)
                q_try, norm_try = self.evaluate(candidate)
            a_total, q, norm_sq = candidate, q_try, norm_try
            step = min(step * cfg.grow, 10.0 * step0)
            self.iters += 1
            taken += 1
            history.append(norm_sq)
            if self.progress is not None and self.iters % 100 == 0:
                self.progress(self.iters, norm_sq)


def _random_block(rng, n, m, scale):
    phi = rng.normal(size=(n, m))
    return phi * (scale / np.linalg.norm(phi))


def _escape(descent, direction, a_total, norm_sq, shrink):
    # the linear term vanishes here, so only the step length needs searching
    step = np.pi / 4
    while step > 1e-12:
        candidate = block_rotation(direction, step) @ a_total
        q_try, norm_try = descent.evaluate(candidate)
        if norm_try < norm_sq:
            return candidate, q_try, norm_try
        step *= shrink
    return None


def minimize_projected_norm(tensor, n, cfg=None, progress=None):
    """Rotate `tensor` to minimize its projected norm on the first `n` axes.

    Parameters
    ----------
    tensor : SymTensor3
        Third moment of the lifted, whitened distribution.
    n : int
        Dimension of the horizontal subspace.
    cfg : DescentConfig, optional
    progress : callable, optional
        Called as ``progress(iteration, norm_sq)`` every 100 iterations.

    Returns
    -------
    state : RotationState
    outcome : DescentOutcome

    Notes
    -----
    When the gradient vanishes at a nonzero norm, the second-order form is
    checked for an escape direction.  If there is none, a short descent is
    run from each of ``cfg.restart_probes`` random block rotations, the most
    promising one is continued, and its result is kept only if it ends
    lower.  At most ``cfg.restarts`` such events are handled
    before reporting ``GradientVanishedNonzeroNorm``.
    """
    cfg = cfg or DescentConfig()
    _check_split(_dense(tensor).shape[0], n)
    q0 = np.array(tensor.dense)
    dim = tensor.dim
    m = dim - n
    rng = np.random.default_rng(cfg.seed)
    descent = _Descent(q0, n, cfg, progress)

    a_total = np.eye(dim)
    q, norm_sq = q0, projected_norm_sq(tensor, n)
    norm0 = norm_sq
    history = [norm_sq]
    # an H-block at roundoff level relative to the whole tensor counts as zero
    if np.sqrt(norm0) <= _ZERO_RTOL * tensor.frobenius_norm():
        state = RotationState(a_total, tensor, norm0, 0)
        return state, DescentOutcome(DescentStatus.CONVERGED, 0.0, 0, history)

    target = cfg.tol_rel_norm ** 2 * norm0
    step0 = cfg.step0 or 0.1 / max(1.0, float(np.linalg.norm(compute_phi(q0, n))))
    events = 0
    while True:
        a_total, q, norm_sq, reason = descent.run(a_total, q, norm_sq, step0, target, history)
        if reason != "stationary" or events >= cfg.restarts:
            break
        events += 1
        report = saddle_diagnostic(q, n, cfg.saddle_trials, rng)
        if report.is_escapable:
            escaped = _escape(descent, report.best_direction, a_total, norm_sq, cfg.shrink)
            if escaped is not None:
                a_total, q, norm_sq = escaped
                descent.iters += 1
                history.append(norm_sq)
                continue
        # local minimum: probe a few random rotations briefly, continue the best
        probes = []
        for _ in range(cfg.restart_probes):
            start = block_rotation(_random_block(rng, n, m, rng.uniform(0.1, np.pi))) @ a_total
            q_start, norm_start = descent.evaluate(start)
            probe_history = [norm_start]
            result = descent.run(start, q_start, norm_start, step0, target, probe_history,
                                 limit=_PROBE_STEPS)
            probes.append((result, probe_history))
        (sub, sub_history) = min(probes, key=lambda p: p[0][2])
        if sub[3] == "limit":
            sub = descent.run(*sub[:3], step0, target, sub_history)
        if sub[2] < norm_sq:
            history.extend(h for h in sub_history if h < norm_sq)
            a_total, q, norm_sq = sub[0], sub[1], sub[2]

    if norm_sq <= target:
        status = DescentStatus.CONVERGED
    elif descent.iters >= cfg.max_iters:
        status = DescentStatus.MAX_ITERS
    else:
        status = DescentStatus.GRADIENT_VANISHED_NONZERO_NORM
    if orthogonality_error(a_total) > 1e-12:
        a_total = _polar(a_total)
        q, norm_sq = descent.evaluate(a_total)
    state = RotationState(a_total, SymTensor3.from_dense(q), norm_sq, descent.iters)
    outcome = DescentOutcome(status, float(np.sqrt(norm_sq / norm0)), descent.iters, history)
    return state, outcome
