"""Husimi distributions of zero-magnetization states and the regular/chaotic split.

Phase-space points are the projected coherent-state labels
``(dtheta, dphi)``.  Those states are ``4 pi``-periodic in ``dphi`` (odd
``m`` flips sign after ``2 pi``), so grids cover ``dphi`` in ``[0, 4 pi)``.
The area element is ``cos(dtheta/2)/2 d(dtheta) d(dphi)``, the flat measure
in ``(cos theta_I, phi)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .spin import check_twice_j, coherent_state_matrix, m_values

MIN_GRID = 16
DEFAULT_GRID = (128, 128)
PHI_PERIOD = 4 * np.pi


@dataclass(frozen=True)
class HusimiGrid:
    theta_values: np.ndarray
    phi_values: np.ndarray
    q: np.ndarray  # shape (n_theta, n_phi)

    @property
    def cell_area(self):
        """``Delta Omega`` per node, broadcast over the grid."""
        dth = 2 * np.pi / self.theta_values.size
        dph = PHI_PERIOD / self.phi_values.size
        return (0.5 * np.cos(self.theta_values / 2) * dth * dph)[:, None] * np.ones(self.phi_values.size)

    def total(self):
        return float(np.sum(self.q * self.cell_area))


def grid_axes(dims=DEFAULT_GRID, phi_offset=0.0):
    """Cell-centred ``dtheta`` over ``[-pi, pi]`` and ``dphi`` over ``[0, 4 pi)``."""
    nt, nphi = dims
    if nt < MIN_GRID or nphi < MIN_GRID:
        raise ValueError(f"grid {dims} is undersampled; need at least {MIN_GRID}x{MIN_GRID}")
    theta = -np.pi + (np.arange(nt) + 0.5) * 2 * np.pi / nt
    phi = phi_offset + np.arange(nphi) * PHI_PERIOD / nphi
    return theta, phi


def _coherent_columns(twice_j, theta, phi):
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return coherent_state_matrix(twice_j, tt, pp)


def husimi(state, dims=DEFAULT_GRID, twice_j=None, phi_offset=0.0):
    """``Q = |<dtheta, dphi|psi>|^2`` on a grid, ``psi`` in the ``|m, -m>`` basis."""
    psi = np.asarray(state)
    if twice_j is None:
        twice_j = psi.size - 1
    check_twice_j(twice_j)
    if psi.size != twice_j + 1:
        raise ValueError("state length does not match 2j+1")
    if abs(np.linalg.norm(psi) - 1) > 1e-8:
        raise ValueError("state must be normalized")
    theta, phi = grid_axes(dims, phi_offset)
    cs = _coherent_columns(twice_j, theta, phi)
    q = np.abs(cs.conj().T @ psi) ** 2
    return HusimiGrid(theta, phi, q.reshape(theta.size, phi.size))


def husimi_entropy(grid):
    """``-sum p log p`` with ``p`` the normalized ``Q * Delta Omega`` on the grid (nats)."""
    w = grid.q * grid.cell_area
    p = w[w > 0] / w.sum()
    return float(-np.sum(p * np.log(p)))


def _entropies_of_columns(vectors, twice_j, dims, chunk=4096):
    """Husimi entropy for every column of ``vectors`` without storing the full Q table."""
    theta, phi = grid_axes(dims)
    area = (0.5 * np.cos(theta / 2))[:, None] * np.ones(phi.size)
    area = area.ravel()
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    tt, pp = tt.ravel(), pp.ravel()
    n = vectors.shape[1]
    total = np.zeros(n)
    plogp = np.zeros(n)
    # two passes would double the work; accumulate sum w and sum w log w instead
    for s in range(0, tt.size, chunk):
        cs = coherent_state_matrix(twice_j, tt[s : s + chunk], pp[s : s + chunk])
        w = np.abs(cs.conj().T @ vectors) ** 2 * area[s : s + chunk, None]
        total += w.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp += np.where(w > 0, w * np.log(w), 0.0).sum(axis=0)
    # -sum (w/W) log(w/W) = log W - sum w log w / W
    return np.log(total) - plogp / total


def husimi_entropies(vectors, twice_j=None, dims=DEFAULT_GRID):
    vectors = np.asarray(vectors)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if twice_j is None:
        twice_j = vectors.shape[0] - 1
    grid_axes(dims)
    return _entropies_of_columns(vectors, twice_j, dims)


@dataclass(frozen=True)
class StateClassification:
    index: int
    husimi_entropy: float
    mean_sz: float
    label: str


def reference_entropies(twice_j, dims=DEFAULT_GRID, n_random=32, seed=0):
    """Entropy of a coherent state at the origin and mean entropy of random states.

    These bracket what a state of the block can reach: fully localized on
    the minimum-uncertainty scale, and spread like a random vector.
    """
    from .spin import projected_coherent_state

    coh = projected_coherent_state(twice_j, 0.0, 0.0).amplitudes
    rng = np.random.default_rng([seed, twice_j])
    z = rng.standard_normal((twice_j + 1, n_random)) + 1j * rng.standard_normal((twice_j + 1, n_random))
    z /= np.linalg.norm(z, axis=0)
    s = husimi_entropies(np.column_stack([coh, z]), twice_j, dims)
    return float(s[0]), float(s[1:].mean())


def percival_partition(eig, twice_j=None, dims=DEFAULT_GRID, factor=0.7, uniform_fraction=0.25, sz=None):
    """Label each Floquet state regular or chaotic from its Husimi entropy.

    A state is chaotic when ``S > S_min + factor (S_max - S_min)`` over the
    block's entropies.  A block whose entropy spread is below
    ``uniform_fraction`` of the span between a coherent state and a random
    state (see :func:`reference_entropies`) has no regular/chaotic split to
    find; it is labelled as a whole against the reference cut instead, with
    a warning.  ``sz`` defaults to ``I_z`` on the sector basis.
    """
    states = eig.states
    if twice_j is None:
        twice_j = states.shape[0] - 1
    s = husimi_entropies(states, twice_j, dims)
    if sz is None:
        sz = np.diag(m_values(twice_j))
    mean_sz = np.real(np.einsum("ik,ij,jk->k", states.conj(), np.asarray(sz), states))
    lo, hi = float(s.min()), float(s.max())
    ref_lo, ref_hi = reference_entropies(twice_j, dims)
    if hi - lo < max(1e-6, uniform_fraction * (ref_hi - ref_lo)):
        cut = ref_lo + factor * (ref_hi - ref_lo)
        kind = "chaotic" if np.median(s) > cut else "regular"
        warnings.warn(f"Husimi entropies do not separate; labelling the whole block {kind}", RuntimeWarning)
        return [StateClassification(k, float(s[k]), float(mean_sz[k]), kind) for k in range(s.size)]
    cut = lo + factor * (hi - lo)
    return [
        StateClassification(k, float(s[k]), float(mean_sz[k]), "chaotic" if s[k] > cut else "regular")
        for k in range(s.size)
    ]
