"""Floquet operator of the kicked coupled tops, full and per magnetization sector.

One period is ``U = exp(-i alpha/(2J) F(F+1)) exp(-i beta J_z)``: a kick of
the second spin about z followed by the coupling, which is diagonal in the
total-spin basis.  ``F_z`` is conserved, so ``U`` is a direct sum of blocks
labelled by ``fz = m1 + m2``.  Everything large is done block by block; the
full matrix is only assembled for small ``J``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import CacheVersionError, NumericalInstabilityError
from .spin import CGTable, build_spin_operators, check_twice_j, product_index, sector_dim, sector_m1

DEFAULT_MAX_DIM = 4001
RECONSTRUCTION_TOL = 1e-8
CACHE_MAGIC = b"KCTU1"
CACHE_VERSION = 1


@dataclass(frozen=True)
class SectorFloquet:
    """Block of ``U`` on the ``m1 + m2 = fz`` sector.

    Rows and columns follow ``m1`` descending (see :func:`kct.spin.sector_m1`);
    the second-spin label of a basis vector is ``fz - m1``.
    """

    twice_j: int
    fz: int
    alpha: float
    beta: float
    block: np.ndarray

    @property
    def dim(self):
        return self.block.shape[0]

    @property
    def m1(self):
        return sector_m1(self.twice_j, self.fz)

    @property
    def m2(self):
        return self.fz - self.m1

    @property
    def basis_labels(self):
        return list(zip(self.m1.tolist(), self.m2.tolist()))


@dataclass(frozen=True)
class FloquetOperator:
    """Full ``U`` on the product basis (``m1`` descending outer, ``m2`` inner)."""

    twice_j: int
    alpha: float
    beta: float
    matrix: np.ndarray


@dataclass(frozen=True)
class EigenDecomposition:
    """``U = states @ diag(exp(-1j * phases)) @ states^dagger``."""

    phases: np.ndarray
    states: np.ndarray

    @property
    def dim(self):
        return self.phases.size

    def evolve_phases(self, t):
        return np.exp(-1j * self.phases * t)

    def power(self, t):
        """``U^t`` rebuilt from the eigenbasis."""
        return (self.states * self.evolve_phases(t)) @ self.states.conj().T


def coupling_rate(twice_j, alpha):
    """Prefactor of ``F(F+1)`` in the coupling phase, ``alpha / (2J)``."""
    return alpha / twice_j if twice_j else 0.0


def _resolve_cg(twice_j, cg):
    if cg is None:
        return CGTable(twice_j)
    if cg.twice_j != twice_j:
        raise ValueError(f"CG table built for 2j={cg.twice_j}, operator needs 2j={twice_j}")
    return cg


def build_sector_floquet(twice_j, fz, alpha, beta, cg=None):
    """Block ``sum_F exp(-i alpha/(2J) F(F+1)) C_F(m1) C_F(m1') exp(-i beta m2')``.

    The kick phase uses the second-spin label of the column.
    """
    twice_j = check_twice_j(twice_j)
    if int(fz) != fz or abs(fz) > twice_j:
        raise ValueError(f"fz={fz} outside [-2j, 2j] for 2j={twice_j}")
    fz = int(fz)
    cg = _resolve_cg(twice_j, cg)
    C = cg.block(fz)
    F = cg.f_values(fz).astype(float)
    theta = coupling_rate(twice_j, alpha) * F * (F + 1)
    # two real products are cheaper than one complex one
    re = C.T @ (np.cos(theta)[:, None] * C)
    im = C.T @ (np.sin(theta)[:, None] * C)
    m2 = fz - sector_m1(twice_j, fz)
    block = (re - 1j * im) * np.exp(-1j * beta * m2)[None, :]
    block.setflags(write=False)
    return SectorFloquet(twice_j, fz, float(alpha), float(beta), block)


def sector_fz_values(twice_j):
    return list(range(check_twice_j(twice_j), -twice_j - 1, -1))


def iter_sector_floquets(twice_j, alpha, beta, cg=None, fz_values=None):
    """Yield sector blocks one at a time so large ``J`` never holds them all."""
    cg = _resolve_cg(check_twice_j(twice_j), cg)
    for fz in sector_fz_values(twice_j) if fz_values is None else fz_values:
        yield build_sector_floquet(twice_j, fz, alpha, beta, cg)


def check_sector_dimensions(twice_j):
    total = sum(sector_dim(twice_j, fz) for fz in sector_fz_values(twice_j))
    if total != (twice_j + 1) ** 2:
        raise AssertionError(f"sector dimensions sum to {total}, expected {(twice_j + 1) ** 2}")
    return total


def sector_indices(twice_j, fz):
    """Product-basis positions of the sector's basis vectors."""
    m1 = sector_m1(twice_j, fz)
    return product_index(twice_j, m1, fz - m1)


def build_full_floquet(twice_j, alpha, beta, cg=None, max_dim=DEFAULT_MAX_DIM):
    """Assemble ``U`` on the full product space from its sector blocks.

    ``max_dim`` caps the matrix dimension ``(2J+1)^2``; larger systems must
    be handled blockwise.
    """
    twice_j = check_twice_j(twice_j)
    D = (twice_j + 1) ** 2
    if D > max_dim:
        raise MemoryError(
            f"full Floquet matrix would be {D}x{D} (cap {max_dim}); use the sector blocks instead"
        )
    check_sector_dimensions(twice_j)
    U = np.zeros((D, D), dtype=complex)
    for sec in iter_sector_floquets(twice_j, alpha, beta, cg):
        idx = sector_indices(twice_j, sec.fz)
        U[np.ix_(idx, idx)] = sec.block
    U.setflags(write=False)
    return FloquetOperator(twice_j, float(alpha), float(beta), U)


def extract_sector(u, fz):
    """Sector block of a full operator, in the same basis order as the blocks."""
    idx = sector_indices(u.twice_j, fz)
    return u.matrix[np.ix_(idx, idx)]


def check_time_reversal(u, beta=None):
    """``max |e^{i beta Jz} conj(U) e^{-i beta Jz} - U^dagger|`` with ``Jz`` on the second spin.

    ``u`` may be a :class:`FloquetOperator` or a bare matrix together with
    ``beta``; bare matrices are taken to live on a ``(2j+1)^2`` product space.
    """
    if isinstance(u, FloquetOperator):
        mat, beta, twice_j = u.matrix, u.beta, u.twice_j
    else:
        mat = np.asarray(u)
        n = int(round(np.sqrt(mat.shape[0])))
        if n * n != mat.shape[0]:
            raise ValueError("matrix dimension is not a perfect square")
        twice_j = n - 1
    n = twice_j + 1
    m2 = np.tile(build_spin_operators(twice_j).jz.diagonal().real, n)
    ph = np.exp(1j * beta * m2)
    lhs = ph[:, None] * mat.conj() * ph.conj()[None, :]
    return float(np.abs(lhs - mat.conj().T).max())


def _check_reconstruction(U, phases, states):
    rec = (states * np.exp(-1j * phases)) @ states.conj().T
    return float(np.abs(rec - U).max())


def _sorted(phases, states):
    # map into (-pi, pi]
    phases = -np.angle(np.exp(-1j * phases))
    phases[phases <= -np.pi + 1e-12] += 2 * np.pi
    order = np.argsort(phases, kind="stable")
    return phases[order], states[:, order]


def _eig_schur(U):
    T, Z = sla.schur(U, output="complex")
    return -np.angle(np.diag(T)), Z


def _eig_symmetric_kick(block, m2, beta):
    """Real-orthogonal route for ``U = V diag(exp(-i beta m2))`` with ``V`` symmetric.

    ``S = K^(1/2) U K^(-1/2)`` is a complex-symmetric unitary, so its real
    and imaginary parts are commuting real symmetric matrices and one real
    ``eigh`` of a generic combination diagonalizes both.
    """
    half = np.exp(-0.5j * beta * m2)
    S = half[:, None] * block * half.conj()[None, :]
    X = 0.5 * (S + S.T)
    # irrational mixing so accidental degeneracies of Re S are lifted
    mix = np.sqrt(2.0) - 0.3
    _, R = np.linalg.eigh(X.real + mix * X.imag)
    lam = np.einsum("ij,ij->j", R, X @ R)
    return -np.angle(lam), half.conj()[:, None] * R


def eigendecompose(u, tol=RECONSTRUCTION_TOL):
    """Eigenphases in ``(-pi, pi]`` ascending and unitary eigenvectors.

    Accepts a :class:`SectorFloquet` (uses the structure of the block when it
    can) or any unitary matrix (complex Schur form).
    """
    if isinstance(u, SectorFloquet):
        U = u.block
        phases, states = _eig_symmetric_kick(U, u.m2, u.beta)
        err = _check_reconstruction(U, phases, states)
        if err > tol:
            phases, states = _eig_schur(U)
    else:
        U = np.asarray(u)
        phases, states = _eig_schur(U)
    err = _check_reconstruction(U, phases, states)
    if err > tol:
        raise NumericalInstabilityError(f"eigendecomposition reconstruction error {err:.3g} > {tol:g}")
    phases, states = _sorted(phases, states)
    phases.setflags(write=False)
    states.setflags(write=False)
    return EigenDecomposition(phases, states)


def cache_key(twice_j, fz, alpha, beta):
    raw = json.dumps([CACHE_VERSION, int(twice_j), int(fz), repr(float(alpha)), repr(float(beta))])
    return hashlib.sha256(raw.encode()).hexdigest()[:32]


def write_sector_cache(path, sec, eig):
    """Binary record: magic, header length, JSON header, then raw arrays."""
    head = json.dumps(
        {
            "version": CACHE_VERSION,
            "twice_j": sec.twice_j,
            "fz": sec.fz,
            "alpha": repr(sec.alpha),
            "beta": repr(sec.beta),
            "dim": sec.dim,
        }
    ).encode()
    tmp = Path(str(path) + ".part")
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(sec.block, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(eig.phases, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(eig.states, dtype="<c16").tobytes())
    tmp.replace(path)


def read_sector_cache(path):
    raw = Path(path).read_bytes()
    if raw[: len(CACHE_MAGIC)] != CACHE_MAGIC:
        raise CacheVersionError(f"{path}: not a KCTU1 record")
    pos = len(CACHE_MAGIC)
    (n,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    head = json.loads(raw[pos : pos + n])
    pos += n
    if head.get("version") != CACHE_VERSION:
        raise CacheVersionError(f"{path}: cache version {head.get('version')} != {CACHE_VERSION}")
    d = head["dim"]
    block = np.frombuffer(raw, "<c16", d * d, pos).reshape(d, d)
    pos += 16 * d * d
    phases = np.frombuffer(raw, "<f8", d, pos)
    pos += 8 * d
    states = np.frombuffer(raw, "<c16", d * d, pos).reshape(d, d)
    sec = SectorFloquet(head["twice_j"], head["fz"], float(head["alpha"]), float(head["beta"]), block)
    return sec, EigenDecomposition(phases, states)


def sector_with_eigen(twice_j, fz, alpha, beta, cg=None, cache_dir=None):
    """Sector block and its eigendecomposition, through the disk cache if given."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"kctu1_{cache_key(twice_j, fz, alpha, beta)}.bin"
        if path.exists():
            return read_sector_cache(path)
    sec = build_sector_floquet(twice_j, fz, alpha, beta, cg)
    eig = eigendecompose(sec)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_sector_cache(path, sec, eig)
    return sec, eig
