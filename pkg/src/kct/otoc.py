"""Out-of-time-ordered correlators.

``C(t) = 1/2 <[A(t), B]^dagger [A(t), B]>`` with ``A(t) = U^-t A U^t``,
split as ``C = C2 - C4``.  Most routines work in the Floquet eigenbasis:
there ``A(t)_mn = A_mn exp(i(phi_m - phi_n) t)``, so any integer time costs
one matrix product and no repeated powering.

Correlators over the maximally mixed state are divided by the matrix
dimension unless stated otherwise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .floquet import (
    EigenDecomposition,
    SectorFloquet,
    eigendecompose,
    sector_fz_values,
    sector_with_eigen,
)
from .spin import CGTable, check_twice_j, sector_m1

DEGENERACY_TOL = 1e-10
IMAG_TOL = 1e-10


@dataclass
class OtocSeries:
    times: np.ndarray
    c: np.ndarray
    c2: np.ndarray
    c4: np.ndarray
    meta: dict = field(default_factory=dict)

    def normalized(self, average):
        value = average.value if isinstance(average, InfiniteTimeAverage) else float(average)
        return self.c / value


@dataclass(frozen=True)
class InfiniteTimeAverage:
    value: float
    method: str  # "analytic" or "numerical-long-time"


@dataclass(frozen=True)
class GrowthFit:
    lam: float
    slope: float
    intercept: float
    window: tuple


@dataclass(frozen=True)
class RelaxationFit:
    model: str
    rate: float
    window: tuple
    residual: float
    amplitude: float


def _times(times):
    t = np.asarray(times)
    if t.ndim != 1 or not np.all(t == np.round(t)) or np.any(t < 0):
        raise ValueError("times must be non-negative integers")
    return t.astype(int)


def _as_eigen(u):
    if isinstance(u, EigenDecomposition):
        return u
    return eigendecompose(u)


def _real_if_close(x, scale=1.0):
    if np.iscomplexobj(x) and np.abs(x.imag).max(initial=0.0) <= 1e-12 * max(scale, 1.0):
        return np.ascontiguousarray(x.real)
    return x


def to_eigenbasis(eig, op):
    """``E^dagger op E``; real when the imaginary part is roundoff."""
    op = np.asarray(op)
    out = eig.states.conj().T @ op @ eig.states
    return _real_if_close(out, np.abs(out).max(initial=0.0))


def _check_real(x, what):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        scale = max(np.abs(x.real).max(initial=0.0), 1.0)
        if np.abs(x.imag).max(initial=0.0) > IMAG_TOL * scale:
            raise ArithmeticError(f"{what} has imaginary part {np.abs(x.imag).max():.3g}")
        return x.real
    return x


def _evolved_product(at, bt, phases, t):
    """``Y = A(t) B`` in the eigenbasis."""
    v = np.exp(1j * phases * t)
    w = v.conj()[:, None] * bt
    if np.isrealobj(at):
        # .real/.imag are strided views; matmul only reaches BLAS on contiguous input
        z = at @ np.ascontiguousarray(w.real) + 1j * (at @ np.ascontiguousarray(w.imag))
    else:
        z = at @ w
    return v[:, None] * z


def _series_from_products(at, bt, phases, times, index=None, weight=None):
    """C2, C4 in the mixture ``weight * sum_{i in index} |E_i><E_i|``.

    With ``index=None`` this is the full trace.  Uses
    ``Tr(rho B A(t)^2 B) = sum_i |(A(t) B) e_i|^2`` and its mirror image for
    ``A(t) B^2 A(t)``, so each time costs one product.
    """
    n = len(times)
    c2 = np.empty(n)
    c4 = np.empty(n)
    for k, t in enumerate(times):
        y = _evolved_product(at, bt, phases, t)
        if index is None:
            c2[k] = np.vdot(y, y).real
            c4[k] = _check_real(np.sum(y * y.T), "C4")
        else:
            cols = np.sum(np.abs(y[:, index]) ** 2)
            rows = np.sum(np.abs(y[index, :]) ** 2)
            c2[k] = 0.5 * (cols + rows)
            c4[k] = np.real(np.sum(y[index, :] * y[:, index].T))
    w = 1.0 if weight is None else weight
    return w * c2, w * c4


def _check_square(*mats):
    d = mats[0].shape[0]
    for m in mats:
        if m.shape != (d, d):
            raise ValueError(f"dimension mismatch: {m.shape} vs ({d}, {d})")
    return d


def otoc_direct(u, a, b, state, times):
    """Reference evaluation by repeated conjugation and the explicit commutator.

    ``state`` is a density matrix.  ``c2 = <B A(t)^2 B + A(t) B^2 A(t)> / 2``
    and ``c4 = Re <A(t) B A(t) B>``, so ``c = c2 - c4`` for any state.
    """
    u = np.asarray(u)
    a = np.asarray(a)
    b = np.asarray(b)
    rho = np.asarray(state)
    _check_square(u, a, b, rho)
    if abs(np.trace(rho) - 1) > 1e-10:
        raise ValueError("state must have unit trace")
    times = _times(times)
    out = np.empty((3, len(times)))
    ud = u.conj().T
    at = a.astype(complex)
    cur = 0
    for k, t in enumerate(times):
        if t < cur:
            at, cur = a.astype(complex), 0
        for _ in range(t - cur):
            at = ud @ at @ u
        cur = t
        comm = at @ b - b @ at
        c = 0.5 * np.trace(rho @ comm.conj().T @ comm)
        c2 = 0.5 * np.trace(rho @ (b @ at @ at @ b + at @ b @ b @ at))
        c4 = np.trace(rho @ at @ b @ at @ b).real
        out[:, k] = _check_real(c, "C"), _check_real(c2, "C2"), c4
    return OtocSeries(times, out[0], out[1], out[2], {"method": "direct"})


def otoc_correlator(u, a, b, times, norm=None):
    """Maximally mixed OTOC from the eigenbasis: ``C2 = Tr(A(t)^2 B^2)/d``, ``C4 = Tr(A(t) B A(t) B)/d``."""
    eig = _as_eigen(u)
    a = np.asarray(a)
    b = np.asarray(b)
    d = _check_square(a, b)
    if eig.dim != d:
        raise ValueError("operator and unitary dimensions differ")
    times = _times(times)
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    c2, c4 = _series_from_products(at, bt, eig.phases, times)
    norm = d if norm is None else norm
    c2, c4 = c2 / norm, c4 / norm
    return OtocSeries(times, c2 - c4, c2, c4, {"method": "eigenbasis", "norm": norm})


def _degenerate(phases, tol=DEGENERACY_TOL):
    if phases.size < 2:
        return False
    p = np.sort(np.mod(phases, 2 * np.pi))
    gaps = np.diff(np.concatenate([p, [p[0] + 2 * np.pi]]))
    return bool(gaps.min() < tol)


def numerical_average_operator(eig, a, b, n_kicks, basis="eigen"):
    """Long-time average of ``1/2 [A(t), B]^dagger [A(t), B]`` over ``t = 0..n_kicks-1``.

    Returned in the eigenbasis unless ``basis="product"``.
    """
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    acc = np.zeros(at.shape, dtype=complex)
    for t in range(n_kicks):
        y = _evolved_product(at, bt, eig.phases, t)
        comm = y - y.conj().T
        acc += comm.conj().T @ comm
    acc *= 0.5 / n_kicks
    if basis == "product":
        return eig.states @ acc @ eig.states.conj().T
    return acc


def numerical_time_average(eig, a, b, n_kicks=20_000, norm=None):
    """Mean of the maximally mixed ``C(t)`` over ``t = 0..n_kicks-1``."""
    eig = _as_eigen(eig)
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    c2, c4 = _series_from_products(at, bt, eig.phases, np.arange(n_kicks))
    norm = eig.dim if norm is None else norm
    return InfiniteTimeAverage(float(np.mean(c2 - c4) / norm), "numerical-long-time")


def infinite_time_average_analytic(eig, a, b, norm=None, fallback_kicks=20_000):
    """Time average of the maximally mixed OTOC, assuming a non-degenerate spectrum.

    ``sum_m (A^2)_mm (B^2)_mm - sum_{m,n} A_mm A_nn |B_mn|^2
    - sum_{m,n} |A_mn|^2 B_mm B_nn + sum_m A_mm^2 B_mm^2`` in the eigenbasis,
    divided by ``norm`` (default: the dimension).  Degenerate phases fall
    back to a long-time numerical mean with a warning.
    """
    eig = _as_eigen(eig)
    norm = eig.dim if norm is None else norm
    if _degenerate(eig.phases):
        warnings.warn("degenerate eigenphases: using a long-time numerical average", RuntimeWarning)
        return numerical_time_average(eig, a, b, fallback_kicks, norm)
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    value = _analytic_average_eigenbasis(at, bt)
    return InfiniteTimeAverage(value / norm, "analytic")


def _analytic_average_eigenbasis(at, bt):
    da = np.real(np.diag(at))
    db = np.real(np.diag(bt))
    a2 = np.real(np.einsum("ij,ji->i", at, at))
    b2 = np.real(np.einsum("ij,ji->i", bt, bt))
    c2 = a2 @ b2
    c4 = da @ (np.abs(bt) ** 2) @ da + db @ (np.abs(at) ** 2) @ db - np.sum(da**2 * db**2)
    return float(c2 - c4)


@dataclass
class FloquetStateAverages:
    indices: np.ndarray
    values: np.ndarray
    mean_sz: np.ndarray = None
    method: str = "analytic"


def floquet_state_otoc(eig, a, b, indices=None, sz=None, fallback_kicks=20_000):
    """Time-averaged OTOC in individual Floquet states ``|E_n>``.

    Keeps the phase-stationary terms:
    ``1/2 [sum_p |B_np|^2 (A^2)_pp + sum_p |A_np|^2 (B^2)_pp - 2 Re T3_n]`` with
    ``T3_n = A_nn sum_q |B_nq|^2 A_qq + B_nn sum_p |A_np|^2 B_pp - A_nn^2 B_nn^2``.
    ``sz`` (product-basis operator) adds ``<E_n|sz|E_n>`` for each state.
    """
    eig = _as_eigen(eig)
    d = eig.dim
    idx = np.arange(d) if indices is None else np.atleast_1d(np.asarray(indices, int))
    if idx.size and (idx.min() < 0 or idx.max() >= d):
        raise IndexError("state index out of range")
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    if _degenerate(eig.phases):
        warnings.warn("degenerate eigenphases: using a long-time numerical average", RuntimeWarning)
        xbar = numerical_average_operator(eig, a, b, fallback_kicks)
        values = np.real(np.diag(xbar))[idx]
        method = "numerical-long-time"
    else:
        da = np.real(np.diag(at))
        db = np.real(np.diag(bt))
        a2 = np.real(np.einsum("ij,ji->i", at, at))
        b2 = np.real(np.einsum("ij,ji->i", bt, bt))
        aa = np.abs(at) ** 2
        bb = np.abs(bt) ** 2
        t1 = bb @ a2
        t4 = aa @ b2
        t3 = da * (bb @ da) + db * (aa @ db) - da**2 * db**2
        values = (0.5 * (t1 + t4) - t3)[idx]
        method = "analytic"
    mean_sz = None
    if sz is not None:
        sz_e = eig.states.conj().T @ np.asarray(sz) @ eig.states
        mean_sz = np.real(np.diag(sz_e))[idx]
    return FloquetStateAverages(idx, values, mean_sz, method)


def time_averaged_otoc_operator(eig, a, b):
    """Phase-stationary part of ``1/2 [A(t), B]^dagger [A(t), B]`` in the eigenbasis.

    Valid for a non-degenerate, non-resonant spectrum; ``<psi|X|psi>`` is
    then the infinite-time average of the OTOC in ``|psi>``.
    """
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    da = np.diag(at).real
    db = np.diag(bt).real
    a2 = np.real(np.einsum("ij,ji->i", at, at))
    b2m = bt @ bt
    b2 = np.real(np.diag(b2m))
    aa = np.abs(at) ** 2
    # B A(t)^2 B
    t1 = (bt * a2[None, :]) @ bt
    # A(t) B^2 A(t)
    t4 = da[:, None] * b2m * da[None, :]
    np.fill_diagonal(t4, aa @ b2)
    # A(t) B A(t) B
    t3 = ((da[:, None] * bt * da[None, :]) @ bt) + ((aa @ db) - da**2 * db)[:, None] * bt
    return 0.5 * (t1 + t4 - t3 - t3.conj().T)


def coherent_state_otoc_scan(eig, a, b, states, fallback_kicks=20_000):
    """Time-averaged OTOC in each column of ``states`` (sector basis vectors).

    Returns a real array with one value per column.
    """
    eig = _as_eigen(eig)
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[:, None]
    if _degenerate(eig.phases):
        warnings.warn("degenerate eigenphases: using a long-time numerical average", RuntimeWarning)
        xbar = numerical_average_operator(eig, a, b, fallback_kicks)
    else:
        xbar = time_averaged_otoc_operator(eig, a, b)
    c = eig.states.conj().T @ states
    return np.real(np.einsum("ik,ik->k", c.conj(), xbar @ c))


def mixture_otoc(eig, a, b, state_set, times, normalization="dimension"):
    """OTOC in ``w * sum_{i in state_set} |E_i><E_i|``.

    ``normalization="dimension"`` uses ``w = 1/d`` whatever the number of states
    (so the full set reproduces :func:`otoc_correlator`); ``"normalized"``
    uses ``w = 1/len(state_set)``.
    """
    eig = _as_eigen(eig)
    idx = np.asarray(state_set, int).ravel()
    if idx.size == 0:
        raise ValueError("state_set must not be empty")
    if np.unique(idx).size != idx.size:
        raise ValueError("state_set contains duplicate indices")
    if idx.min() < 0 or idx.max() >= eig.dim:
        raise IndexError("state index out of range")
    if normalization == "dimension":
        w = 1.0 / eig.dim
    elif normalization == "normalized":
        w = 1.0 / idx.size
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    times = _times(times)
    at, bt = to_eigenbasis(eig, a), to_eigenbasis(eig, b)
    c2, c4 = _series_from_products(at, bt, eig.phases, times, idx, w)
    meta = {"normalization": normalization, "n_states": int(idx.size), "weight": w}
    return OtocSeries(times, c2 - c4, c2, c4, meta)


# Sector-resolved spin correlators


def sector_iz(twice_j, fz):
    """``I_z`` on the ``fz`` sector: ``diag(m1)``."""
    return np.diag(sector_m1(twice_j, fz))


def sector_otoc_sums(eig, m1, times, fz=0):
    """Unnormalized ``C2``, ``C4`` sums for ``A = I_z``, ``B = J_z`` on one sector.

    On the sector ``B = fz - A``; both sums then differ from the ``A = B``
    ones by ``fz^2 Tr(A^2) - 2 fz Tr(A(t)^2 A)``, which cancels in ``C``.
    """
    at = to_eigenbasis(eig, np.diag(m1))
    c2, c4 = _series_from_products(at, at, eig.phases, times)
    if fz != 0:
        a2 = at @ at
        pq = a2 * at.T
        tr_a2 = float(np.sum(np.asarray(m1, float) ** 2))
        for k, t in enumerate(times):
            v = np.exp(1j * eig.phases * t)
            shift = fz * fz * tr_a2 - 2 * fz * np.real(v @ pq @ v.conj())
            c2[k] += shift
            c4[k] += shift
    return c2, c4


def largest_sector_otoc(twice_j, alpha, beta, times, fz=0, cg=None, cache_dir=None, eig=None):
    """Sector OTOC for ``A = I_z``, ``B = J_z`` restricted to ``fz``, normalized by the block size.

    In a sector ``J_z = fz - I_z``, so ``C`` equals the ``A = B = I_z`` value;
    ``C2`` and ``C4`` are those of the ``I_z, J_z`` pair.
    """
    twice_j = check_twice_j(twice_j)
    times = _times(times)
    if eig is None:
        _, eig = sector_with_eigen(twice_j, fz, alpha, beta, cg, cache_dir)
    m1 = sector_m1(twice_j, fz)
    c2, c4 = sector_otoc_sums(eig, m1, times, fz)
    d = m1.size
    meta = {"twice_j": twice_j, "alpha": alpha, "beta": beta, "operators": "Iz,Jz", "state": f"sector fz={fz}"}
    return OtocSeries(times, (c2 - c4) / d, c2 / d, c4 / d, meta)


def largest_sector_average(twice_j, alpha, beta, fz=0, cg=None, cache_dir=None, eig=None):
    if eig is None:
        _, eig = sector_with_eigen(twice_j, fz, alpha, beta, cg, cache_dir)
    m1 = sector_m1(twice_j, fz)
    return infinite_time_average_analytic(eig, np.diag(m1), np.diag(m1))


def izjz_otoc(twice_j, alpha, beta, times, cg=None, cache_dir=None, use_reflection=True, with_average=True):
    """``A = I_z x 1``, ``B = 1 x J_z`` summed sector by sector over ``(2J+1)^2``.

    Both operators are diagonal in the product basis, and on a sector
    ``J_z = fz - I_z``.  Sectors ``fz`` and ``-fz`` contribute equally (a pi
    rotation about x on both spins combined with time reversal maps one onto
    the other), so by default only ``fz >= 0`` is evaluated.  Sectors are
    built, used and dropped one at a time.

    Returns the series and, if requested, the analytic infinite-time average
    accumulated from the same eigendecompositions.
    """
    twice_j = check_twice_j(twice_j)
    times = _times(times)
    cg = CGTable(twice_j) if cg is None else cg
    D = (twice_j + 1) ** 2
    c2 = np.zeros(len(times))
    c4 = np.zeros(len(times))
    avg = 0.0
    fzs = range(twice_j, -1, -1) if use_reflection else sector_fz_values(twice_j)
    for fz in fzs:
        _, eig = sector_with_eigen(twice_j, fz, alpha, beta, cg, cache_dir)
        m1 = sector_m1(twice_j, fz)
        s2, s4 = sector_otoc_sums(eig, m1, times, fz)
        w = 2.0 if (use_reflection and fz != 0) else 1.0
        c2 += w * s2
        c4 += w * s4
        if with_average:
            at = to_eigenbasis(eig, np.diag(m1))
            if _degenerate(eig.phases):
                warnings.warn(f"degenerate eigenphases in sector {fz}: numerical average", RuntimeWarning)
                avg += w * eig.dim * numerical_time_average(eig, np.diag(m1), np.diag(m1)).value
            else:
                avg += w * _analytic_average_eigenbasis(at, at)
        if not cg.cache:
            continue
        # blocks are needed once; keep memory flat at large J
        cg._blocks.pop(fz, None)
        cg._blocks.pop(-fz, None)
    meta = {"twice_j": twice_j, "alpha": alpha, "beta": beta, "operators": "IzJz", "state": "maximally mixed"}
    series = OtocSeries(times, (c2 - c4) / D, c2 / D, c4 / D, meta)
    if with_average:
        return series, InfiniteTimeAverage(avg / D, "analytic")
    return series


def otoc_sector_ratio(numerator, denominator, guard=1e-14):
    """Elementwise ``numerator.c / denominator.c``.

    NaN where ``|denominator|`` is below ``guard`` times the series scale
    (at least 1), which catches the roundoff-level values at ``t = 0``.
    """
    if not np.array_equal(numerator.times, denominator.times):
        raise ValueError("series are on different time grids")
    den = np.asarray(denominator.c, float)
    num = np.asarray(numerator.c, float)
    out = np.full(den.shape, np.nan)
    ok = np.abs(den) >= guard * max(1.0, np.abs(den).max(initial=0.0))
    out[ok] = num[ok] / den[ok]
    return out


# I_x J_x: operators that hop between neighbouring sectors


def _ix_hop(twice_j, f):
    """``<f, m1 | I_x x 1 | f+1, m1+1>`` as a dense ``d_f x d_{f+1}`` matrix."""
    from .spin import raising_amplitude

    j = twice_j / 2
    rows = sector_m1(twice_j, f)
    cols = sector_m1(twice_j, f + 1)
    out = np.zeros((rows.size, cols.size))
    # I_x = (I+ + I-)/2 and only I- lowers m1: (m1+1, m2) -> (m1, m2)
    pos = {round(m * 2): k for k, m in enumerate(cols)}
    for r, m1 in enumerate(rows):
        k = pos.get(round((m1 + 1) * 2))
        if k is not None:
            out[r, k] = raising_amplitude(j, m1) / 2
    return out


def _jx_hop(twice_j, f):
    """``<f, m1 | 1 x J_x | f+1, m1>``: the second spin drops by one."""
    from .spin import raising_amplitude

    j = twice_j / 2
    rows = sector_m1(twice_j, f)
    cols = sector_m1(twice_j, f + 1)
    out = np.zeros((rows.size, cols.size))
    pos = {round(m * 2): k for k, m in enumerate(cols)}
    for r, m1 in enumerate(rows):
        k = pos.get(round(m1 * 2))
        if k is not None:
            m2 = f - m1
            out[r, k] = raising_amplitude(j, m2) / 2
    return out


def ixjx_within_sector_c4(twice_j, alpha, beta, times, cg=None):
    """``Tr(U_f^-t A_ff U_f^t B_ff U_f^-t A_ff U_f^t B_ff)`` for every sector.

    ``A_ff`` and ``B_ff`` are the diagonal sector blocks of ``I_x x 1`` and
    ``1 x J_x``, read off elementwise from the single-spin matrices so no
    ``(2J+1)^2`` operator is formed.  Returns an array of shape
    ``(n_sectors, len(times))``.
    """
    from .floquet import build_sector_floquet
    from .spin import build_spin_operators

    twice_j = check_twice_j(twice_j)
    times = _times(times)
    cg = CGTable(twice_j) if cg is None else cg
    jx = build_spin_operators(twice_j).jx.real
    j = twice_j / 2
    out = np.zeros((2 * twice_j + 1, len(times)))
    for k, fz in enumerate(sector_fz_values(twice_j)):
        m1 = sector_m1(twice_j, fz)
        i1 = np.rint(j - m1).astype(int)
        i2 = np.rint(j - (fz - m1)).astype(int)
        a_ff = jx[np.ix_(i1, i1)] * (i2[:, None] == i2[None, :])
        b_ff = jx[np.ix_(i2, i2)] * (i1[:, None] == i1[None, :])
        eig = eigendecompose(build_sector_floquet(twice_j, fz, alpha, beta, cg))
        at, bt = to_eigenbasis(eig, a_ff), to_eigenbasis(eig, b_ff)
        _, s4 = _series_from_products(at, bt, eig.phases, times)
        out[k] = s4
    return out


def _hop_blocks(twice_j, alpha, beta, cg, cache_dir):
    """Eigenbasis hops ``E_f^dagger X_{f,f+1} E_{f+1}`` for ``X = I_x, J_x``.

    ``E = K^(-1/2) R`` with ``R`` real for these blocks: ``I_x`` keeps
    ``m2`` so the kick phases cancel; ``J_x`` lowers ``m2`` by one, leaving
    the constant factor ``exp(i beta / 2)``.  Both hops are stored as real
    matrices with that phase split off.
    """
    fzs = sector_fz_values(twice_j)[::-1]  # ascending
    phases = {}
    ahop = {}
    bhop = {}
    prev = None
    for f in fzs:
        _, eig = sector_with_eigen(twice_j, f, alpha, beta, cg, cache_dir)
        phases[f] = np.asarray(eig.phases)
        if prev is not None:
            g, e_g = prev
            a = e_g.states.conj().T @ _ix_hop(twice_j, g) @ eig.states
            b = e_g.states.conj().T @ _jx_hop(twice_j, g) @ eig.states
            b = b * np.exp(-0.5j * beta)
            # stays complex if a sector fell back to a Schur basis
            ahop[g] = _real_if_close(a, np.abs(a).max(initial=0.0))
            bhop[g] = _real_if_close(b, np.abs(b).max(initial=0.0))
        prev = (f, eig)
        cg._blocks.pop(f, None)
    return phases, ahop, bhop


def ixjx_otoc(twice_j, alpha, beta, times, cg=None, cache_dir=None, with_average=True):
    """``A = I_x x 1``, ``B = 1 x J_x``, normalized by ``(2J+1)^2``.

    Both operators connect sector ``f`` only to ``f +- 1``, so ``A(t) B`` has
    blocks ``(f, f)`` and ``(f, f +- 2)``; ``C2 = ||A(t) B||^2`` and
    ``C4 = Tr((A(t) B)^2)`` are assembled from those blocks without building
    anything of the full dimension.  The time average keeps only
    ``sum_f sum_m (A^2)_ff,mm (B^2)_ff,mm``: every four-point term hops
    through a different sector and averages out.
    """
    twice_j = check_twice_j(twice_j)
    times = _times(times)
    cg = CGTable(twice_j) if cg is None else cg
    D = (twice_j + 1) ** 2
    phases, ahop, bhop = _hop_blocks(twice_j, alpha, beta, cg, cache_dir)
    fzs = sorted(phases)
    kick = np.exp(0.5j * beta)

    def a_blk(f, g):
        return ahop[f] if g == f + 1 else ahop[g].conj().T

    def b_blk(f, g):
        return kick * bhop[f] if g == f + 1 else np.conj(kick) * bhop[g].conj().T

    c2 = np.zeros(len(times))
    c4 = np.zeros(len(times))
    lo, hi = fzs[0], fzs[-1]

    def product_row(f, v):
        """Blocks ``(A(t) B)_{f h}`` for ``h = f, f +- 2``."""
        row = {}
        for g in (f - 1, f + 1):
            if g < lo or g > hi:
                continue
            # A(t)_{fg} = diag(v_f) A_{fg} diag(conj v_g)
            left = a_blk(f, g)
            for h in (g - 1, g + 1):
                if h < lo or h > hi:
                    continue
                w = v[g].conj()[:, None] * b_blk(g, h)
                if np.isrealobj(left):
                    prod = left @ np.ascontiguousarray(w.real) + 1j * (left @ np.ascontiguousarray(w.imag))
                else:
                    prod = left @ w
                row[h] = row.get(h, 0) + prod
        for h in row:
            row[h] = v[f][:, None] * row[h]
        return row

    for k, t in enumerate(times):
        v = {f: np.exp(1j * phases[f] * t) for f in fzs}
        # C4 pairs (f, h) with (h, f) and |f - h| <= 2, so only a window of
        # five block rows is alive at a time
        rows = {}
        s2 = 0.0
        s4 = 0.0
        for f in fzs:
            for h in range(f, min(f + 2, hi) + 1):
                if h not in rows:
                    rows[h] = product_row(h, v)
            for h, y in rows[f].items():
                s2 += np.vdot(y, y).real
                s4 += np.sum(y * rows[h][f].T)
            rows.pop(f - 2, None)
        c2[k] = s2
        c4[k] = _check_real(s4, "C4")
    meta = {"twice_j": twice_j, "alpha": alpha, "beta": beta, "operators": "IxJx", "state": "maximally mixed"}
    series = OtocSeries(times, (c2 - c4) / D, c2 / D, c4 / D, meta)
    if not with_average:
        return series
    total = 0.0
    for f in fzs:
        a2 = np.zeros(phases[f].size)
        b2 = np.zeros(phases[f].size)
        for g in (f - 1, f + 1):
            if lo <= g <= hi:
                a2 += np.sum(np.abs(a_blk(f, g)) ** 2, axis=1)
                b2 += np.sum(np.abs(b_blk(f, g)) ** 2, axis=1)
        total += a2 @ b2
    return series, InfiniteTimeAverage(total / D, "analytic")


# Series post-processing


def relaxation_series(series, average):
    """``1 - C(t) / Cbar``."""
    value = average.value if isinstance(average, InfiniteTimeAverage) else float(average)
    if not value > 0:
        raise ValueError("infinite-time average must be positive")
    return 1.0 - np.asarray(series.c) / value


def ehrenfest_time(series, average, threshold=0.5):
    """First kick at which ``C(t)`` reaches ``threshold`` of its time average; None if never."""
    value = average.value if isinstance(average, InfiniteTimeAverage) else float(average)
    hit = np.nonzero(np.asarray(series.c) >= threshold * value)[0]
    return int(series.times[hit[0]]) if hit.size else None


def fit_growth_rate(series, window=(1, 4)):
    """Least-squares slope ``s`` of ``log C`` over ``window``; reports ``lambda = s / 2``."""
    t = np.asarray(series.times, float)
    c = np.asarray(series.c, float)
    sel = (t >= window[0]) & (t <= window[1]) & (c > 0)
    if sel.sum() < 2:
        raise ValueError("need at least two positive points in the growth window")
    slope, intercept = np.polyfit(t[sel], np.log(c[sel]), 1)
    return GrowthFit(float(slope / 2), float(slope), float(intercept), (float(window[0]), float(window[1])))


def fit_relaxation(times, values, model="exponential", window=None, min_points=5):
    """Fit ``y ~ A exp(-r t)`` (``model="exponential"``) or ``y ~ A t^-p`` (``"power-law"``).

    Least squares on ``(t, log y)`` or ``(log t, log y)``.  Non-positive
    points inside the window are dropped with a warning.
    """
    t = np.asarray(times, float)
    y = np.asarray(values, float)
    if window is None:
        window = (t.min(), t.max())
    sel = (t >= window[0]) & (t <= window[1])
    bad = sel & ~(y > 0)
    if bad.any():
        warnings.warn(f"dropping {int(bad.sum())} non-positive points from the fit window", RuntimeWarning)
        sel &= y > 0
    if model == "power-law":
        sel &= t > 0
    if sel.sum() < min_points:
        raise ValueError(f"fit window holds {int(sel.sum())} usable points, need {min_points}")
    x = t[sel] if model == "exponential" else np.log(t[sel]) if model == "power-law" else None
    if x is None:
        raise ValueError(f"unknown model {model!r}")
    ly = np.log(y[sel])
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    return RelaxationFit(
        model,
        float(-slope),
        (float(t[sel].min()), float(t[sel].max())),
        float(np.sqrt(np.mean(resid**2))),
        float(np.exp(intercept)),
    )
