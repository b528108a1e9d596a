"""Interpolative decompositions and proxy-based skeletonization of one cell.

A cell owns an active set of functions (hat functions at nodes and constant
functions on elements).  Its interactions with everything outside are
witnessed by a proxy circle plus the active functions of other cells whose
support reaches inside the circle.  Column IDs of the witness rows M(J', C)
select skeleton functions per space (shared by both displacement
components); the same skeletons then give row IDs of M(C, J').
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .assembly import PHI, PSI, BlockSystem, FunctionSet
from .geometry import ProxySurface

log = logging.getLogger(__name__)


class RankDeficiencyError(np.linalg.LinAlgError):
    """The leading k x k triangle of a pivoted QR is numerically singular."""

    def __init__(self, msg, numerical_rank):
        super().__init__(msg)
        self.numerical_rank = numerical_rank


class IllConditionedCell(np.linalg.LinAlgError):
    """Inverting the reduced diagonal R D^-1 L of a cell failed."""


@dataclass
class IDResult:
    """B ~= B[:, skeleton] @ coeff with coeff[:, skeleton] = I."""

    coeff: np.ndarray
    skeleton: np.ndarray
    perm: np.ndarray

    @property
    def rank(self):
        return len(self.skeleton)


def _numerical_rank(diag, n):
    d = np.abs(diag)
    if d.size == 0 or d[0] == 0:
        return 0
    return int(np.count_nonzero(d > max(n, 1) * np.finfo(float).eps * d[0]))


def _coeff_from_r(R, perm, k, n):
    V = np.zeros((k, n), dtype=R.dtype)
    V[:, perm[:k]] = np.eye(k)
    if k < n:
        V[:, perm[k:]] = linalg.solve_triangular(R[:k, :k], R[:k, k:n], check_finite=False)
    return V


def cpqr_id_columns(B, k: int) -> IDResult:
    """Rank-k column interpolative decomposition from column-pivoted QR.

    Ties in the column norms go to the lowest index (LAPACK geqp3 order).
    """
    B = np.asarray(B)
    m, n = B.shape
    if not 0 < k <= min(m, n):
        raise ValueError(f"rank {k} outside 1..{min(m, n)}")
    R, perm = linalg.qr(B, mode="r", pivoting=True, check_finite=False)
    R = R[0] if isinstance(R, tuple) else R
    rank = _numerical_rank(np.diag(R)[:k], max(m, n))
    if rank < k < n:
        raise RankDeficiencyError(f"leading {k}x{k} triangle is singular (numerical rank {rank})",
                                  rank)
    return IDResult(_coeff_from_r(R, perm, k, n), perm[:k].copy(), perm)


def interpolation_coeff(B, skeleton) -> np.ndarray:
    """ID coefficient of B on a prescribed skeleton: columns permuted so the
    skeleton comes first, plain QR, truncation to the skeleton size."""
    B = np.asarray(B)
    n = B.shape[1]
    skeleton = np.asarray(skeleton, dtype=np.int64)
    k = len(skeleton)
    rest = np.setdiff1d(np.arange(n), skeleton, assume_unique=False)
    perm = np.concatenate([skeleton, rest])
    if k == n:
        return _coeff_from_r(np.eye(n, dtype=B.dtype), perm, k, n)
    R = linalg.qr(B[:, perm], mode="r", check_finite=False)
    R = R[0] if isinstance(R, tuple) else R
    if R.shape[0] < k or _numerical_rank(np.diag(R)[:k], max(B.shape)) < k:
        raise RankDeficiencyError("skeleton columns are numerically dependent",
                                  _numerical_rank(np.diag(R)[:k], max(B.shape)))
    return _coeff_from_r(R, perm, k, n)


def rank_schedule(k_leaf: int, levels: int, growth: float = 1.15):
    """Skeleton counts from the leaves upward: each level multiplies the previous
    count by ``growth`` and truncates (30 -> 34 -> 39 -> 44 ...)."""
    if growth < 1:
        raise ValueError("growth must be >= 1")
    ks = [int(k_leaf)]
    for _ in range(levels - 1):
        ks.append(int(math.floor(ks[-1] * growth + 1e-9)))
    return ks


# ---------------------------------------------------------------------------
# witness matrices

def witness_sets(system: BlockSystem, proxy: ProxySurface):
    """Function sets on the proxy polygon and in the near field."""
    pm = proxy.mesh
    return (FunctionSet(pm, np.arange(pm.N), np.arange(pm.N)),
            FunctionSet(system.mesh, proxy.near_phi, proxy.near_psi))


def witness_matrices(system: BlockSystem, cand: FunctionSet, proxy: ProxySurface):
    """(M(J', C), M(C, J')) with J' the proxy functions followed by the near field."""
    rows, cols = [], []
    for ws in witness_sets(system, proxy):
        if ws.size() == 0:
            continue
        m_cw, m_wc = system.matrix_pair(cand, ws)
        cols.append(m_cw)
        rows.append(m_wc)
    return np.vstack(rows), np.hstack(cols)


def _space_groups(system: BlockSystem, cand: FunctionSet):
    """For each space, the list of (group index, slice) of both components."""
    sl = cand.group_slices(system.formulation)
    out = {PHI: [], PSI: []}
    for g, (sp, _) in enumerate(system.formulation.groups):
        out[sp].append((g, sl[g]))
    return out


def _clamp(k, space_count, rows, where):
    kk = min(k, space_count, rows)
    if kk < k:
        log.warning("rank %d clamped to %d (%s)", k, kk, where)
    return kk


def compute_right_coeff(system: BlockSystem, cand: FunctionSet, Mrow, k: int):
    """Right coefficients R^g (k_s x n_s per group) and skeleton positions per space.

    Pivots of a space come from one CPQR of the stacked witness columns of its
    two component groups, so both components share the skeleton.
    """
    R = [None] * 4
    pos = {}
    for sp, grp in _space_groups(system, cand).items():
        n_s = cand.count(sp)
        if n_s == 0:
            pos[sp] = np.zeros(0, dtype=np.int64)
            for g, s in grp:
                R[g] = np.zeros((0, 0), dtype=complex)
            continue
        target = np.vstack([Mrow[:, s] for _, s in grp])
        ks = _clamp(k, n_s, target.shape[0], "right coefficient")
        try:
            idr = cpqr_id_columns(target, ks)
        except RankDeficiencyError as err:
            log.info("rank %d reduced to numerical rank %d", ks, err.numerical_rank)
            idr = cpqr_id_columns(target, max(err.numerical_rank, 1))
        sk = np.sort(idr.skeleton)
        pos[sp] = sk
        for g, s in grp:
            R[g] = _robust_coeff(Mrow[:, s], sk)
    return R, pos


def _robust_coeff(B, sk):
    try:
        return interpolation_coeff(B, sk)
    except RankDeficiencyError:
        # one component alone may not resolve every shared skeleton column;
        # a least-squares fit keeps the interpolation property on the skeleton
        V = linalg.lstsq(B[:, sk], B, cond=None, check_finite=False)[0]
        V[:, sk] = np.eye(len(sk))
        return V


def compute_left_coeff(system: BlockSystem, cand: FunctionSet, Mcol, pos):
    """Left coefficients L^g (n_s x k_s) on the skeleton fixed by the right step."""
    L = [None] * 4
    for sp, grp in _space_groups(system, cand).items():
        for g, s in grp:
            if len(pos[sp]) == 0:
                L[g] = np.zeros((cand.count(sp), 0), dtype=complex)
                continue
            V = _robust_coeff(Mcol[s, :].conj().T, pos[sp])
            L[g] = V.conj().T
    return L


def skeleton_block(system: BlockSystem, sk_i: FunctionSet, sk_j: FunctionSet):
    """S_ij = M(skeleton_i, skeleton_j), overlapping supports included."""
    return system.matrix(sk_i, sk_j)


# ---------------------------------------------------------------------------
# cell factors

@dataclass
class CellFactor:
    """Skeletonization of one cell.

    ``lu`` factors the cell diagonal D; ``R``/``L`` hold the four per-group
    interpolation blocks; ``skeleton`` is the retained function set and
    ``A_tilde`` = (R D^-1 L)^-1 in the skeleton's group layout.
    """

    cell: tuple
    active: FunctionSet
    lu: tuple
    R: list
    L: list
    skeleton: FunctionSet
    positions: dict
    A_tilde: np.ndarray
    slices: list
    sk_slices: list
    Y: np.ndarray | None = None
    w: np.ndarray | None = None
    g: np.ndarray | None = None

    @property
    def rank(self):
        return {sp: len(p) for sp, p in self.positions.items()}

    def apply_R(self, v):
        out = np.empty((sum(r.shape[0] for r in self.R),) + v.shape[1:], dtype=complex)
        for g, (s, t) in enumerate(zip(self.slices, self.sk_slices)):
            out[t] = self.R[g] @ v[s]
        return out

    def apply_L(self, y):
        out = np.empty((self.active.size(),) + y.shape[1:], dtype=complex)
        for g, (s, t) in enumerate(zip(self.slices, self.sk_slices)):
            out[s] = self.L[g] @ y[t]
        return out

    def solve_diag(self, v):
        if self.lu is None:
            raise RuntimeError("diagonal factors were released (single right side mode)")
        return linalg.lu_solve(self.lu, v, check_finite=False)

    def correction(self, z):
        """D^-1 L z."""
        if self.Y is not None:
            return self.Y @ z
        return self.solve_diag(self.apply_L(z))

    def memory_bytes(self):
        n = self.A_tilde.nbytes + sum(r.nbytes for r in self.R) + sum(x.nbytes for x in self.L)
        for a in (self.lu[0] if self.lu is not None else None, self.Y, self.w, self.g):
            n += 0 if a is None else a.nbytes
        return n


def compress_cell(system: BlockSystem, cand: FunctionSet, D, proxy: ProxySurface, k: int,
                  cell=None, rhs=None, keep_lu: bool = True) -> CellFactor:
    """Factor the diagonal block D of a cell and skeletonize it to rank k per space.

    With ``rhs`` the upward sweep quantities w = D^-1 rhs and g = A~ R w are
    stored too.  ``keep_lu=False`` then keeps D^-1 L instead of the LU
    factors, which is enough to finish that one right side with less memory.
    """
    form = system.formulation
    Mrow, Mcol = witness_matrices(system, cand, proxy)
    R, pos = compute_right_coeff(system, cand, Mrow, k)
    L = compute_left_coeff(system, cand, Mcol, pos)
    del Mrow, Mcol
    skel = FunctionSet(cand.mesh, cand.phi[pos[PHI]], cand.psi[pos[PSI]])
    lu = linalg.lu_factor(D, overwrite_a=True, check_finite=False)
    if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0):
        raise IllConditionedCell(f"diagonal block of cell {cell} is singular")
    fac = CellFactor(cell=cell, active=cand, lu=lu, R=R, L=L, skeleton=skel, positions=pos,
                     A_tilde=None, slices=cand.group_slices(form),
                     sk_slices=skel.group_slices(form))
    Y = fac.solve_diag(fac.apply_L(np.eye(skel.size(), dtype=complex)))
    red = fac.apply_R(Y)
    try:
        At = linalg.inv(red, check_finite=False)
    except (linalg.LinAlgError, ValueError) as err:
        raise IllConditionedCell(f"reduced diagonal of cell {cell} is not invertible") from err
    if not np.all(np.isfinite(At)):
        raise IllConditionedCell(f"reduced diagonal of cell {cell} is not invertible")
    fac.A_tilde = At
    if rhs is not None:
        fac.w = fac.solve_diag(rhs)
        fac.g = At @ fac.apply_R(fac.w)
    if not keep_lu:
        if rhs is None:
            raise ValueError("releasing the diagonal factors needs the right side")
        fac.Y = Y
        fac.lu = None
    return fac
