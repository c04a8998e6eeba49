"""Classical kicked coupled tops on two unit spheres.

Spins are unit 3-vectors (classical spins divided by their length).  One
kick rotates ``J`` about z by ``beta``; then both spins precess rigidly about
``f = I + J`` by the angle ``alpha |f|``, which is the flow of ``alpha I.J``
over one period.  All functions accept a single pair (shape ``(3,)``) or a
batch (shape ``(n, 3)``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

AXIS_EPS = 1e-12


@dataclass(frozen=True)
class MapParameters:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")


@dataclass(frozen=True)
class ClassicalSpinPair:
    i_vec: np.ndarray
    j_vec: np.ndarray

    @property
    def fz(self):
        return self.i_vec[..., 2] + self.j_vec[..., 2]


@dataclass
class LyapunovEstimate:
    lam: float
    stderr: float
    n_steps: int
    n_initial_conditions: int
    converged: bool = True
    per_trajectory: np.ndarray = field(default=None, repr=False)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def spin_vector(cos_theta, phi):
    cos_theta = np.asarray(cos_theta, float)
    s = np.sqrt(np.clip(1 - cos_theta**2, 0, 1))
    return np.stack([s * np.cos(phi), s * np.sin(phi), cos_theta * np.ones_like(s)], axis=-1)


def rotate_z(v, angle):
    """Counterclockwise rotation about z."""
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1], v[..., 2]], axis=-1)


def rotate_about(v, axis, angle):
    """Rodrigues rotation of ``v`` by ``angle`` about unit ``axis`` (right-handed)."""
    angle = np.asarray(angle)[..., None]
    c, s = np.cos(angle), np.sin(angle)
    dot = np.sum(axis * v, axis=-1, keepdims=True)
    return v * c + np.cross(axis, v) * s + axis * dot * (1 - c)


def _precess(i_vec, j_vec, angle_scale):
    f = i_vec + j_vec
    norm = np.linalg.norm(f, axis=-1)
    small = norm < AXIS_EPS
    axis = f / np.where(small, 1.0, norm)[..., None]
    # antiparallel spins: no precession
    angle = np.where(small, 0.0, angle_scale * norm)
    return rotate_about(i_vec, axis, angle), rotate_about(j_vec, axis, angle)


def kct_map_step(state, params):
    """One kick: ``J <- R_z(beta) J``, then precession about ``I + J`` by ``alpha |I + J|``."""
    j_vec = rotate_z(state.j_vec, params.beta)
    i_vec, j_vec = _precess(state.i_vec, j_vec, params.alpha)
    return ClassicalSpinPair(_unit(i_vec), _unit(j_vec))


def kct_map_inverse(state, params):
    """Undo :func:`kct_map_step`; ``|I + J|`` is invariant under the precession."""
    i_vec, j_vec = _precess(state.i_vec, state.j_vec, -params.alpha)
    return ClassicalSpinPair(_unit(i_vec), _unit(rotate_z(j_vec, -params.beta)))


def iterate_map(state, params, n_steps):
    for _ in range(n_steps):
        state = kct_map_step(state, params)
    return state


# Coordinates on the constant-fz manifold.
#
# Phase-space labels (dtheta, dphi) follow the projected coherent states:
# at fz = 0 they correspond to theta_I = pi/2 - dtheta/2,
# theta_J = pi/2 + dtheta/2 and phi_J - phi_I = dphi/2.  For other fz the
# polar split keeps cos(theta_I) + cos(theta_J) = fz.


def spins_from_labels(delta_theta, delta_phi, fz=0.0):
    """Classical pair at phase-space label ``(dtheta, dphi)`` on the ``fz`` manifold."""
    delta_theta = np.asarray(delta_theta, float)
    delta_phi = np.asarray(delta_phi, float)
    width = 1 - abs(fz) / 2
    ci = fz / 2 + width * np.sin(delta_theta / 2)
    cj = fz - ci
    i_vec = spin_vector(ci, -delta_phi / 4)
    j_vec = spin_vector(cj, delta_phi / 4)
    return ClassicalSpinPair(i_vec, j_vec)


def labels_from_spins(state):
    """Inverse of :func:`spins_from_labels`; ``dphi`` is returned in ``[0, 4 pi)``."""
    fz = state.fz
    width = 1 - np.abs(fz) / 2
    s = np.clip((state.i_vec[..., 2] - fz / 2) / np.where(width > 0, width, 1), -1, 1)
    dtheta = 2 * np.arcsin(s)
    phi_i = np.arctan2(state.i_vec[..., 1], state.i_vec[..., 0])
    phi_j = np.arctan2(state.j_vec[..., 1], state.j_vec[..., 0])
    dphi = np.mod(2 * (phi_j - phi_i), 4 * np.pi)
    return dtheta, dphi


def section_coordinates(state):
    """``(phi_I - phi_J mod 2 pi, cos theta_J)``."""
    phi_i = np.arctan2(state.i_vec[..., 1], state.i_vec[..., 0])
    phi_j = np.arctan2(state.j_vec[..., 1], state.j_vec[..., 0])
    return np.mod(phi_i - phi_j, 2 * np.pi), state.j_vec[..., 2]


def _check_fz(fz):
    if not np.isfinite(fz) or abs(fz) > 2:
        raise ValueError(f"fz={fz} outside [-2, 2]")


def sample_fixed_fz(fz, n, seed=0):
    """``n`` pairs on the ``I_z + J_z = fz`` manifold.

    ``cos theta_I`` is uniform on the compatible interval and both azimuths
    are uniform; trajectory ``k`` draws from the stream ``(seed, k)`` so any
    subset can be regenerated on its own.
    """
    _check_fz(fz)
    lo, hi = max(-1.0, fz - 1.0), min(1.0, fz + 1.0)
    draws = np.array([np.random.default_rng([seed, k]).random(3) for k in range(n)]).reshape(n, 3)
    ci = lo + (hi - lo) * draws[:, 0]
    cj = np.clip(fz - ci, -1, 1)
    phi_i = 2 * np.pi * draws[:, 1]
    phi_j = 2 * np.pi * draws[:, 2]
    return ClassicalSpinPair(spin_vector(ci, phi_i), spin_vector(cj, phi_j))


def poincare_section(fz_target, grid, n_steps, params, tol=1e-10):
    """Stroboscopic section for each initial label in ``grid``.

    ``grid`` is a sequence of ``(dtheta, dphi)`` labels (see
    :func:`spins_from_labels`).  Returns a dict of flat arrays with keys
    ``traj_id, step, delta_phi, cos_theta_j``; one row per trajectory per
    kick, starting with the initial point at step 0.
    """
    _check_fz(fz_target)
    grid = np.atleast_2d(np.asarray(grid, float))
    state = spins_from_labels(grid[:, 0], grid[:, 1], fz_target)
    if np.any(np.abs(state.fz - fz_target) > tol):
        raise ValueError("initial conditions are off the requested fz manifold")
    n = grid.shape[0]
    dphi = np.empty((n_steps + 1, n))
    cj = np.empty((n_steps + 1, n))
    dphi[0], cj[0] = section_coordinates(state)
    for k in range(1, n_steps + 1):
        state = kct_map_step(state, params)
        dphi[k], cj[k] = section_coordinates(state)
    steps, traj = np.meshgrid(np.arange(n_steps + 1), np.arange(n), indexing="ij")
    return {
        "traj_id": traj.ravel(),
        "step": steps.ravel(),
        "delta_phi": dphi.ravel(),
        "cos_theta_j": cj.ravel(),
    }


def _tangent_displacement(state, rng, eps):
    """Shadow pair displaced by ``eps`` along a random direction inside the fz manifold."""
    i_vec, j_vec = np.atleast_2d(state.i_vec), np.atleast_2d(state.j_vec)
    n = i_vec.shape[0]
    u = rng.standard_normal((n, 3))
    ci, cj = i_vec[:, 2], j_vec[:, 2]
    phi_i = np.arctan2(i_vec[:, 1], i_vec[:, 0])
    phi_j = np.arctan2(j_vec[:, 1], j_vec[:, 0])
    # moving cos(theta) of one spin up and the other down keeps fz fixed
    shadow = ClassicalSpinPair(
        spin_vector(np.clip(ci + 1e-3 * u[:, 0], -1, 1), phi_i + 1e-3 * u[:, 1]),
        spin_vector(np.clip(cj - 1e-3 * u[:, 0], -1, 1), phi_j + 1e-3 * u[:, 2]),
    )
    return _rescale(ClassicalSpinPair(i_vec, j_vec), shadow, eps)[0]


def _separation(a, b):
    return np.sqrt(np.sum((a.i_vec - b.i_vec) ** 2, -1) + np.sum((a.j_vec - b.j_vec) ** 2, -1))


def _rescale(ref, shadow, eps):
    dist = _separation(ref, shadow)
    k = (eps / dist)[..., None]
    out = ClassicalSpinPair(
        _unit(ref.i_vec + (shadow.i_vec - ref.i_vec) * k),
        _unit(ref.j_vec + (shadow.j_vec - ref.j_vec) * k),
    )
    return out, dist


def benettin_lyapunov(initial, params, n_steps, renorm_every=1, separation=1e-8, seed=0):
    """Largest Lyapunov exponent per kick by the two-trajectory renormalization method.

    ``initial`` may hold a batch of initial conditions; the estimate is the
    mean over them with its standard error.  Convergence is flagged as failed
    when the running mean moves by more than 5% of its value (and more than
    1e-3 absolutely) over the last fifth of the run.
    """
    if n_steps < 1000:
        raise ValueError("n_steps must be at least 1000")
    if renorm_every < 1:
        raise ValueError("renorm_every must be >= 1")
    rng = np.random.default_rng([seed, 1])
    ref = ClassicalSpinPair(np.atleast_2d(initial.i_vec), np.atleast_2d(initial.j_vec))
    shadow = _tangent_displacement(ref, rng, separation)
    n = ref.i_vec.shape[0]
    logsum = np.zeros(n)
    check_at = int(0.8 * n_steps)
    running_at_check = None
    for k in range(1, n_steps + 1):
        ref = kct_map_step(ref, params)
        shadow = kct_map_step(shadow, params)
        if k % renorm_every == 0 or k == n_steps:
            shadow, dist = _rescale(ref, shadow, separation)
            logsum += np.log(dist / separation)
        if k == check_at:
            running_at_check = logsum.mean() / k
    per = logsum / n_steps
    lam = float(per.mean())
    stderr = float(per.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    converged = True
    if running_at_check is not None:
        change = abs(lam - running_at_check)
        converged = not (change > 0.05 * abs(lam) and change > 1e-3)
    if not converged:
        warnings.warn(f"Lyapunov estimate not converged (lambda={lam:.4g})", RuntimeWarning)
    return LyapunovEstimate(lam, stderr, n_steps, n, converged, per)


def lyapunov_vs_fz(params, fz_values, n_initial_conditions, n_steps=10_000, renorm_every=1, seed=0):
    """Benettin estimate on each ``fz`` manifold, initial conditions from :func:`sample_fixed_fz`."""
    out = []
    for fz in fz_values:
        ic = sample_fixed_fz(fz, n_initial_conditions, seed)
        out.append(benettin_lyapunov(ic, params, n_steps, renorm_every, seed=seed))
    return out


def finite_time_lyapunov(initial, params, n_steps, separation=1e-8, seed=0):
    """Per-trajectory stretching rate over a short run, for telling islands from the sea."""
    rng = np.random.default_rng([seed, 2])
    ref = ClassicalSpinPair(np.atleast_2d(initial.i_vec), np.atleast_2d(initial.j_vec))
    shadow = _tangent_displacement(ref, rng, separation)
    logsum = np.zeros(ref.i_vec.shape[0])
    for _ in range(n_steps):
        ref = kct_map_step(ref, params)
        shadow = kct_map_step(shadow, params)
        shadow, dist = _rescale(ref, shadow, separation)
        logsum += np.log(dist / separation)
    return logsum / n_steps


def fit_log_law(alphas, lambdas):
    """Least-squares ``lambda = a + b log(alpha)``; returns ``(a, b, r_squared)``."""
    x = np.log(np.asarray(alphas, float))
    y = np.asarray(lambdas, float)
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    r2 = 1 - resid @ resid / np.sum((y - y.mean()) ** 2)
    return float(a), float(b), float(r2)
