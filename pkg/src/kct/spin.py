"""Angular-momentum primitives for two equal spins.

Everything here uses the ``|j, m>`` basis with ``m`` running downward from
``j`` to ``-j``.  Spin magnitudes are passed around as ``twice_j`` integers so
half-integer spins never go through a float.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

CG_MAGIC = b"KCTCG1"


def check_twice_j(twice_j):
    if int(twice_j) != twice_j or twice_j < 0:
        raise ValueError(f"twice_j must be a non-negative integer, got {twice_j!r}")
    return int(twice_j)


def m_values(twice_j):
    """Magnetic quantum numbers ``j, j-1, ..., -j``."""
    twice_j = check_twice_j(twice_j)
    return (twice_j - 2 * np.arange(twice_j + 1)) / 2.0


def raising_amplitude(j, m):
    """``<m+1|J+|m> = sqrt(j(j+1) - m(m+1))``; zero outside the multiplet."""
    return np.sqrt(np.maximum(j * (j + 1) - m * (m + 1), 0.0))


def lowering_amplitude(j, m):
    """``<m-1|J-|m> = sqrt(j(j+1) - m(m-1))``."""
    return np.sqrt(np.maximum(j * (j + 1) - m * (m - 1), 0.0))


@dataclass(frozen=True)
class SpinOperators:
    """Dense ``jx, jy, jz`` for one spin of magnitude ``twice_j / 2``."""

    twice_j: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray

    @property
    def j(self):
        return self.twice_j / 2

    @property
    def dim(self):
        return self.twice_j + 1

    @property
    def jplus(self):
        return self.jx + 1j * self.jy


def build_spin_operators(twice_j):
    """Spin matrices from the ladder operators, ``hbar = 1``."""
    twice_j = check_twice_j(twice_j)
    j = twice_j / 2
    m = m_values(twice_j)
    # m is descending, so J+ sits on the first superdiagonal
    jp = np.diag(raising_amplitude(j, m[1:]), 1).astype(complex)
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    jz = np.diag(m).astype(complex)
    for a in (jx, jy, jz):
        a.setflags(write=False)
    return SpinOperators(twice_j, jx, jy, jz)


def sector_m1(twice_j, M):
    """First-spin magnetic numbers (descending) compatible with ``m1 + m2 = M``."""
    j = twice_j / 2
    hi = min(j, M + j)
    lo = max(-j, M - j)
    if hi < lo:
        raise ValueError(f"M={M} out of range for j={j}")
    n = int(round(hi - lo)) + 1
    return hi - np.arange(n)


def sector_dim(twice_j, M):
    return twice_j + 1 - int(round(abs(M)))


def sector_values(twice_j):
    """All total magnetizations ``2j, 2j-1, ..., -2j``."""
    return np.arange(twice_j, -twice_j - 1, -1, dtype=float)


def sector_coupling(twice_j, M):
    """``I.J`` restricted to the ``m1 + m2 = M`` sector as (diagonal, offdiagonal).

    Basis order follows :func:`sector_m1`; the matrix is real symmetric
    tridiagonal.
    """
    j = twice_j / 2
    m1 = sector_m1(twice_j, M)
    m2 = M - m1
    diag = m1 * m2
    # <m1-1, m2+1| (I- J+)/2 |m1, m2>
    off = lowering_amplitude(j, m1[:-1]) * raising_amplitude(j, m2[:-1]) / 2
    return diag, off


def _edge_overlap(diag, off, lam, vecs):
    """Overlap of each column of ``vecs`` with the top-edge recursion solution.

    The recursion solves ``(T - lam) c = 0`` starting from ``c[0] = 1`` and
    stops at the middle of the sector: beyond that point the wanted solution
    decays and the recursion would pick up the growing one.  The running
    solution is rescaled every step, so only the sign of the result means
    anything.
    """
    half = (diag.size - 1) // 2 + 1
    prev = np.zeros(lam.size)
    cur = np.ones(lam.size)
    acc = vecs[0].copy()
    for k in range(half - 1):
        nxt = (lam - diag[k]) * cur / off[k]
        if k:
            nxt -= off[k - 1] * prev / off[k]
        scale = np.maximum(np.abs(nxt), np.abs(cur))
        scale[scale == 0] = 1.0
        prev, cur = cur / scale, nxt / scale
        acc = acc / scale + vecs[k + 1] * cur
    return acc


def _cg_block_nonnegative(twice_j, M):
    j = twice_j / 2
    diag, off = sector_coupling(twice_j, M)
    if diag.size == 1:
        return np.ones((1, 1))
    _, vecs = eigh_tridiagonal(diag, off, lapack_driver="stemr")
    # eigenvalues of I.J ascend with F
    F = np.arange(int(round(M)), twice_j + 1, dtype=float)
    lam = (F * (F + 1) - 2 * j * (j + 1)) / 2
    overlap = _edge_overlap(diag, off, lam, vecs)
    # Condon-Shortley: <F, M | j, j; j, M - j> > 0 for M >= 0
    vecs = vecs * np.where(overlap < 0, -1.0, 1.0)[None, :]
    return np.ascontiguousarray(vecs.T)


@dataclass
class CGTable:
    """Clebsch-Gordan coefficients ``<F, M | j, m1; j, M - m1>`` for ``j x j``.

    ``block(M)`` is a square orthogonal matrix whose rows are
    ``F = |M|, ..., 2j`` and whose columns are the ``m1`` labels from
    :func:`sector_m1`.  Each block is an eigenbasis of ``I.J`` on its sector,
    signed by the Condon-Shortley rule; blocks are built on first use.
    Negative ``M`` uses ``C(F,-M; -m1,-m2) = (-1)^(2j-F) C(F,M; m1,m2)``.
    """

    twice_j: int
    cache: bool = True
    _blocks: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.twice_j = check_twice_j(self.twice_j)

    @property
    def j(self):
        return self.twice_j / 2

    def f_values(self, M):
        return np.arange(int(round(abs(M))), self.twice_j + 1)

    def m1_values(self, M):
        return sector_m1(self.twice_j, M)

    def block(self, M):
        M = float(M)
        # m1 + m2 is always an integer for two equal spins
        if abs(M) > self.twice_j or abs(M - round(M)) > 1e-9:
            raise ValueError(f"invalid total magnetization M={M} for 2j={self.twice_j}")
        key = round(M)
        if key in self._blocks:
            return self._blocks[key]
        if M < 0:
            pos = self.block(-M)
            F = self.f_values(M)
            sign = np.where((self.twice_j - F) % 2 == 0, 1.0, -1.0)
            # columns of -M are m1 descending; reflecting m1 -> -m1 reverses them
            out = sign[:, None] * pos[:, ::-1]
        else:
            out = _cg_block_nonnegative(self.twice_j, M)
        out.setflags(write=False)
        if self.cache:
            self._blocks[key] = out
        return out

    def coefficient(self, F, M, m1, m2):
        """Single coefficient; zero when the selection rules fail."""
        if abs(m1 + m2 - M) > 1e-9 or F < abs(M) or F > self.twice_j:
            return 0.0
        if abs(m1) > self.j or abs(m2) > self.j:
            return 0.0
        blk = self.block(M)
        row = int(round(F - abs(M)))
        col = int(round(self.m1_values(M)[0] - m1))
        return float(blk[row, col])

    def coupled_basis_matrix(self):
        """Full ``(2j+1)^2`` orthogonal matrix; rows ``(F, M)``, columns ``|m1 m2>``.

        Rows run over ``M`` descending, then ``F`` ascending.  Product-basis
        columns use ``m1`` descending outer, ``m2`` descending inner.
        """
        tj = self.twice_j
        n = tj + 1
        out = np.zeros((n * n, n * n))
        row = 0
        for M in sector_values(tj):
            blk = self.block(M)
            m1 = self.m1_values(M)
            cols = product_index(tj, m1, M - m1)
            out[row : row + blk.shape[0], cols] = blk
            row += blk.shape[0]
        return out

    def save(self, path):
        write_cg_table(self, path)


def clebsch_gordan_table(twice_j, cache=True):
    return CGTable(twice_j, cache=cache)


def product_index(twice_j, m1, m2):
    """Position of ``|m1, m2>`` in the product basis (m1 outer, both descending)."""
    n = twice_j + 1
    j = twice_j / 2
    i1 = np.rint(j - np.asarray(m1)).astype(int)
    i2 = np.rint(j - np.asarray(m2)).astype(int)
    return i1 * n + i2


def write_cg_table(table, path):
    """Flat record: magic, twice_j (int64 LE), then float64 coefficients.

    Order is ``F`` descending, then ``M`` descending, then ``m1`` descending,
    over the ``m1`` range allowed for each ``M``.
    """
    tj = table.twice_j
    blocks = {round(M): table.block(M) for M in sector_values(tj)}
    with open(path, "wb") as fh:
        fh.write(CG_MAGIC)
        fh.write(struct.pack("<q", tj))
        for F in range(tj, -1, -1):
            for M in range(F, -F - 1, -1):
                row = blocks[M][F - abs(M)]
                fh.write(np.asarray(row, dtype="<f8").tobytes())


def read_cg_table(path):
    raw = Path(path).read_bytes()
    if raw[: len(CG_MAGIC)] != CG_MAGIC:
        raise ValueError(f"{path}: not a KCTCG1 record")
    (tj,) = struct.unpack_from("<q", raw, len(CG_MAGIC))
    data = np.frombuffer(raw, dtype="<f8", offset=len(CG_MAGIC) + 8)
    table = CGTable(tj)
    blocks = {M: np.zeros((tj + 1 - abs(M),) * 2) for M in range(-tj, tj + 1)}
    pos = 0
    for F in range(tj, -1, -1):
        for M in range(F, -F - 1, -1):
            d = tj + 1 - abs(M)
            blocks[M][F - abs(M)] = data[pos : pos + d]
            pos += d
    if pos != data.size:
        raise ValueError(f"{path}: truncated or oversized CG record")
    for M, blk in blocks.items():
        blk.setflags(write=False)
        table._blocks[M] = blk
    return table


@dataclass(frozen=True)
class ProjectedCoherentState:
    """Product of two spin coherent states projected onto ``m1 + m2 = 0``.

    ``amplitudes`` are over ``|m, -m>`` with ``m`` descending.
    """

    twice_j: int
    delta_theta: float
    delta_phi: float
    amplitudes: np.ndarray


def _log_binomial_row(twice_j):
    k = np.arange(twice_j + 1)
    return gammaln(twice_j + 1) - gammaln(k + 1) - gammaln(twice_j - k + 1)


def coherent_weights(twice_j, delta_theta):
    """Normalized magnitudes ``|mu|^m (2j)!/((j-m)!(j+m)!)`` for each ``delta_theta``.

    Returns an array of shape ``(len(delta_theta), 2j+1)``; rows sum (in
    squares) to one.  Log-space throughout so ``j`` in the thousands is fine.
    """
    delta_theta = np.atleast_1d(np.asarray(delta_theta, dtype=float))
    m = m_values(twice_j)
    s = np.sin(delta_theta / 2)
    with np.errstate(divide="ignore"):
        log_r = np.log1p(s) - np.log1p(-s)
    lb = _log_binomial_row(twice_j)  # indexed by j - m, symmetric anyway
    with np.errstate(invalid="ignore"):
        logw = log_r[:, None] * m[None, :] + lb[None, :]
    # sin(dtheta/2) = +-1 puts all weight on m = +-j
    logw[s >= 1.0] = np.where(m == m[0], 0.0, -np.inf)
    logw[s <= -1.0] = np.where(m == m[-1], 0.0, -np.inf)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return w


def projected_coherent_state(twice_j, delta_theta, delta_phi):
    """Coherent state ``|dtheta, dphi>`` of the zero-magnetization sector.

    Amplitudes are ``mu^m (2j)!/((j-m)!(j+m)!)`` with
    ``mu = exp(i dphi/2) (1 + sin(dtheta/2)) / (1 - sin(dtheta/2))``.
    For integer-spin pairs the state corresponds to the classical spins
    ``theta_I = pi/2 - dtheta/2``, ``theta_J = pi/2 + dtheta/2`` and relative
    azimuth ``phi_J - phi_I = dphi/2``, so ``dphi`` has period ``4 pi``.
    """
    twice_j = check_twice_j(twice_j)
    if not (np.isfinite(delta_theta) and np.isfinite(delta_phi)):
        raise ValueError("coherent-state angles must be finite")
    w = coherent_weights(twice_j, delta_theta)[0]
    m = m_values(twice_j)
    amp = w * np.exp(0.5j * delta_phi * m)
    amp.setflags(write=False)
    return ProjectedCoherentState(twice_j, float(delta_theta), float(delta_phi), amp)


def coherent_state_matrix(twice_j, delta_theta, delta_phi):
    """Coherent states for every ``(dtheta, dphi)`` pair as columns.

    ``delta_theta`` and ``delta_phi`` broadcast against each other; the result
    has shape ``(2j+1, n_points)``.
    """
    dt, dp = np.broadcast_arrays(np.asarray(delta_theta, float), np.asarray(delta_phi, float))
    dt = dt.ravel()
    dp = dp.ravel()
    if not (np.all(np.isfinite(dt)) and np.all(np.isfinite(dp))):
        raise ValueError("coherent-state angles must be finite")
    w = coherent_weights(twice_j, dt)
    m = m_values(twice_j)
    return (w * np.exp(0.5j * dp[:, None] * m[None, :])).T
