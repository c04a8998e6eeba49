"""Random-matrix samplers and ensemble-averaged OTOCs.

The averaged correlators use ``A = O1 x 1`` and ``B = 1 x O2`` with ``O1``,
``O2`` drawn independently.  GUE matrices are scaled so that
``E Tr(O^2) = d^2`` and ``E (Tr O)^2 = d``: unit variance on every
independent entry, off-diagonal entries complex with ``E |O_ij|^2 = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .floquet import SectorFloquet, eigendecompose, sector_fz_values
from .spin import check_twice_j, sector_m1

KINDS = ("GUE", "diagonal-Gaussian", "CUE", "COE")


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str
    dim: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble {self.kind!r}; expected one of {KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")


@dataclass
class AveragedOtocResult:
    times: np.ndarray
    values: np.ndarray
    method: str
    stderr: np.ndarray = None
    n_samples: int = 0
    seed: int = None


def _rng(spec, index):
    return np.random.default_rng([spec.seed, index])


def _ginibre(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def haar_unitary(d, rng):
    """Haar unitary from the QR of a complex Ginibre matrix with the phases of ``R`` divided out."""
    q, r = np.linalg.qr(_ginibre(rng, d) / np.sqrt(2))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph[None, :]


def sample(spec, index=0):
    """Draw sample number ``index`` of the ensemble; each index has its own RNG stream."""
    rng = _rng(spec, index)
    d = spec.dim
    if spec.kind == "GUE":
        # E|G_ij|^2 = 2, so (G + G^dagger)/2 has unit-variance entries
        g = _ginibre(rng, d)
        return (g + g.conj().T) / 2
    if spec.kind == "diagonal-Gaussian":
        return np.diag(rng.standard_normal(d))
    u = haar_unitary(d, rng)
    if spec.kind == "CUE":
        return u
    return u.T @ u


def _powers(u, times):
    """``U^t`` for each requested ``t`` by repeated multiplication."""
    u = np.asarray(u)
    out = {}
    cur = np.eye(u.shape[0], dtype=complex)
    step = 0
    for t in sorted(set(int(t) for t in times)):
        while step < t:
            cur = cur @ u
            step += 1
        out[t] = cur
    return out


def _check_bipartite(u):
    u = np.asarray(u)
    D = u.shape[0]
    d = int(round(np.sqrt(D)))
    if u.shape != (D, D) or d * d != D:
        raise ValueError("c_gue_analytic needs a square bipartition d1 = d2")
    return u, d


def swap_trace(v, d):
    """``Tr(S11 (V^dagger x V^dagger) S11 (V x V))`` for ``V`` on ``C^d x C^d``.

    With ``Q[(c,a),(e,b)] = V[(c,e),(a,b)]`` (first-factor indices grouped)
    the trace is ``||Q Q^dagger||_F^2``; nothing of size ``d^4 x d^4`` is formed.
    """
    q = np.asarray(v).reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    m = q @ q.conj().T
    return float(np.vdot(m, m).real)


def swap_trace_dense(v, d):
    """Same trace from explicit doubled-space matrices; for small ``d`` only."""
    v = np.asarray(v)
    vv = np.kron(v, v)
    idx = np.arange(d**4).reshape(d, d, d, d)
    perm = idx.transpose(2, 1, 0, 3).ravel()
    s = np.eye(d**4)[perm]
    return float(np.trace(s @ vv.conj().T @ s @ vv).real)


def c_gue_analytic(u, times):
    """GUE-averaged OTOC ``(d^4 - Tr(S11 U^-t x U^-t S11 U^t x U^t)) / d^2``."""
    u, d = _check_bipartite(u)
    times = np.asarray(times, int)
    pw = _powers(u, times)
    vals = np.array([(d**4 - swap_trace(pw[int(t)], d)) / d**2 for t in times])
    if np.any(vals < -1e-9 * d**2):
        raise ArithmeticError("negative GUE-averaged OTOC")
    return AveragedOtocResult(times, vals, "analytic")


def _block_list(blocks):
    out = []
    for b in blocks:
        out.append(b.block if isinstance(b, SectorFloquet) else np.asarray(b))
    if not out:
        raise ValueError("no sector blocks given")
    return out


def c_dgue_analytic(blocks, times, expected_dim=None):
    """Diagonal-Gaussian-averaged OTOC ``1 - (1/D) sum_f sum_kl |<k|U_f^t|l>|^4``.

    ``blocks`` must cover every sector; pass ``expected_dim=(2J+1)^2`` to
    have that checked.
    """
    mats = _block_list(blocks)
    D = sum(m.shape[0] for m in mats)
    if expected_dim is not None and D != expected_dim:
        raise ValueError(f"sector blocks span {D} states, expected {expected_dim}")
    times = np.asarray(times, int)
    acc = np.zeros(len(times))
    for m in mats:
        if m.shape[0] == 1:
            acc += 1.0
            continue
        eig = eigendecompose(m)
        for k, t in enumerate(times):
            if t == 0:
                # U^0 is the identity: sum |delta_kl|^4 = d exactly
                acc[k] += m.shape[0]
                continue
            acc[k] += np.sum(np.abs(eig.power(int(t))) ** 4)
    vals = 1.0 - acc / D
    return AveragedOtocResult(times, vals, "analytic")


def c_rmt_ixjx_baseline(twice_j):
    """COE-averaged ``C2`` for ``A = I_x x 1``, ``B = 1 x J_x``; ``C4`` averages to zero.

    ``(1/D) sum_f [Tr(A2_f^T B2_f) + Tr(A2_f) Tr(B2_f)] / (d_f + 1)`` with
    ``A2_f`` the sector block of ``A^2``.  Inside a sector ``A^2`` can only
    keep ``m1`` fixed, so the blocks are the diagonals
    ``(j(j+1) - m1^2)/2`` and ``(j(j+1) - m2^2)/2``.
    """
    twice_j = check_twice_j(twice_j)
    j = twice_j / 2
    total = 0.0
    for fz in sector_fz_values(twice_j):
        m1 = sector_m1(twice_j, fz)
        a2 = (j * (j + 1) - m1**2) / 2
        b2 = (j * (j + 1) - (fz - m1) ** 2) / 2
        total += (a2 @ b2 + a2.sum() * b2.sum()) / (m1.size + 1)
    return total / (twice_j + 1) ** 2


def coe_average_c2(blocks_a2, blocks_b2):
    """``sum_f [Tr(X_f^T Y_f) + Tr X_f Tr Y_f] / (d_f + 1)`` for arbitrary sector blocks."""
    total = 0.0
    for x, y in zip(blocks_a2, blocks_b2):
        x = np.asarray(x)
        y = np.asarray(y)
        total += (np.sum(x * y) + np.trace(x) * np.trace(y)) / (x.shape[0] + 1)
    return float(np.real(total))


def monte_carlo_otoc(u, spec_a, spec_b, times, n_samples, seed=0, batch=256):
    """Sample mean and standard error of the maximally mixed OTOC for ``A = O1 x 1``, ``B = 1 x O2``.

    Sample ``k`` draws ``O1`` from stream ``(seed, 2k)`` and ``O2`` from
    ``(seed, 2k+1)``, so results do not depend on ``batch``.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    u = np.asarray(u)
    d1, d2 = spec_a.dim, spec_b.dim
    D = d1 * d2
    if u.shape != (D, D):
        raise ValueError(f"unitary is {u.shape}, operators need {D}x{D}")
    times = np.asarray(times, int)
    pw = _powers(u, times)
    e1 = np.eye(d1)
    e2 = np.eye(d2)
    spec_a = EnsembleSpec(spec_a.kind, d1, seed)
    spec_b = EnsembleSpec(spec_b.kind, d2, seed)
    vals = np.empty((n_samples, len(times)))
    for s in range(0, n_samples, batch):
        ks = range(s, min(s + batch, n_samples))
        a = np.array([np.kron(sample(spec_a, 2 * k), e2) for k in ks])
        b = np.array([np.kron(e1, sample(spec_b, 2 * k + 1)) for k in ks])
        for i, t in enumerate(times):
            ut = pw[int(t)]
            at = ut.conj().T @ a @ ut
            comm = at @ b - b @ at
            c = 0.5 * np.einsum("kij,kij->k", comm.conj(), comm).real / D
            vals[s : s + len(ks), i] = c
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return AveragedOtocResult(times, mean, f"monte-carlo({n_samples})", stderr, n_samples, seed)
