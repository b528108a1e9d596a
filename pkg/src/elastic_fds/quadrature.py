"""Element-pair quadrature for the Galerkin boundary forms.

For every pair (test element e, basis element f) the routines here return
the moments

    M[m, kernel, a, b, i, j] = int_e int_f N_a(x) N_b(y) K_ij(x, y) ds_y ds_x

for both media m, the kernels U, T, T* and the regularized W, and the
local shape functions N_0 = 1 - s/h, N_1 = s/h.  Three rules are used:

* identical elements: the kernel depends only on the offset w = s_x - s_y,
  so the double integral collapses to one integral in w whose inner shape
  polynomial integrals are exact; the outer rule is graded towards w = 0
  and the odd 1/w parts of T, T* cancel between +w and -w,
* elements sharing a node: Duffy splitting at the shared node with a
  graded rule in the radial variable,
* separated elements: tensor Gauss-Legendre with an order chosen from the
  gap-to-length ratio and the wavenumber.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .kernels import bessel_table, _point_kernels

MAX_ORDER = 64
# singular rules: (self order, self grading, adjacent radial order,
# adjacent angular order, adjacent grading)
SINGULAR_RULE = np.array([24, 5, 16, 16, 3], dtype=np.int64)
QUAD_TOL = 1e-10
CHUNK_POINTS = 300_000

PAIR_REGULAR, PAIR_SELF, PAIR_ADJACENT = 0, 1, 2


def _gauss_table(nmax):
    gx = np.zeros((nmax + 1, nmax))
    gw = np.zeros((nmax + 1, nmax))
    for n in range(1, nmax + 1):
        x, w = np.polynomial.legendre.leggauss(n)
        gx[n, :n] = 0.5 * (x + 1)
        gw[n, :n] = 0.5 * w
    return gx, gw


GX, GW = _gauss_table(MAX_ORDER)


class ElementPool:
    """Geometry of a list of elements taken from one surface.

    ``ids`` are element indices in ``mesh``; ``surface`` tags the mesh so
    that singular rules are only applied between elements of the same one.
    """

    def __init__(self, mesh, ids):
        ids = np.asarray(ids, dtype=np.int64)
        self.mesh = mesh
        self.ids = ids
        self.surface = id(mesh)
        self.A = np.ascontiguousarray(mesh.nodes[ids])
        self.B = np.ascontiguousarray(mesh.nodes[(ids + 1) % mesh.N])
        self.h = np.ascontiguousarray(mesh.lengths[ids])
        self.nrm = np.ascontiguousarray(mesh.normals[ids])
        # tangential derivative (tau = (-nu_2, nu_1)) of the local shape functions
        tau = np.stack([-self.nrm[:, 1], self.nrm[:, 0]], axis=1)
        td = np.einsum("ek,ek->e", tau, mesh.tangents[ids])
        self.dN = np.ascontiguousarray(np.stack([-td / self.h, td / self.h], axis=1))
        self.node_ids = np.ascontiguousarray(np.stack([ids, (ids + 1) % mesh.N], axis=1))

    def __len__(self):
        return len(self.ids)


@nb.njit(cache=True, nogil=True, inline="always")
def _point_seg(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return math.sqrt(qx * qx + qy * qy)


@nb.njit(cache=True, nogil=True)
def _seg_gap(a0, a1, b0, b1):
    """Distance between segments a0-a1 and b0-b1 (assumed non-crossing)."""
    return min(_point_seg(a0[0], a0[1], b0[0], b0[1], b1[0], b1[1]),
               _point_seg(a1[0], a1[1], b0[0], b0[1], b1[0], b1[1]),
               _point_seg(b0[0], b0[1], a0[0], a0[1], a1[0], a1[1]),
               _point_seg(b1[0], b1[1], a0[0], a0[1], a1[0], a1[1]))


@nb.njit(cache=True, nogil=True)
def _osc_order(kh, tol):
    """Smallest Gauss order integrating exp(i k s) over a length h to ``tol``."""
    if kh <= 0.0:
        return 1
    for n in range(1, MAX_ORDER + 1):
        # (kh)^(2n) (n!)^4 / ((2n+1) ((2n)!)^3)
        fact_n = math.lgamma(n + 1.0)
        fact_2n = math.lgamma(2.0 * n + 1.0)
        lg = 2 * n * math.log(kh) + 4 * fact_n - math.log(2.0 * n + 1.0) - 3 * fact_2n
        if lg < math.log(tol):
            return n
    return MAX_ORDER


@nb.njit(cache=True, nogil=True)
def classify_pairs(tA, tB, th, tnodes, bA, bB, bh, bnodes, same_surface, pe, pf, kmax, tol,
                   max_regular):
    """Pair type, Gauss orders and shared-node positions for each element pair.

    Regular pairs get one order per element from that element's length
    against the gap, so a short element facing a long one stays cheap.
    """
    npair = len(pe)
    ptype = np.zeros(npair, dtype=np.int64)
    order = np.zeros((npair, 2), dtype=np.int64)
    ce = np.zeros(npair, dtype=np.int64)
    cf = np.zeros(npair, dtype=np.int64)
    ltol = -math.log(tol)
    for p in range(npair):
        e = pe[p]
        f = pf[p]
        if same_surface:
            if tnodes[e, 0] == bnodes[f, 0] and tnodes[e, 1] == bnodes[f, 1]:
                ptype[p] = PAIR_SELF
                continue
            shared = False
            for a in range(2):
                for b in range(2):
                    if tnodes[e, a] == bnodes[f, b]:
                        ce[p] = a
                        cf[p] = b
                        shared = True
            if shared:
                ptype[p] = PAIR_ADJACENT
                continue
        gap = _seg_gap(tA[e], tB[e], bA[f], bB[f])
        for side in range(2):
            h = th[e] if side == 0 else bh[f]
            aa = 1.0 + 2.0 * gap / h
            rho = aa + math.sqrt(aa * aa - 1.0)
            if rho <= 1.0 + 1e-12:
                n = max_regular
            else:
                n = int(math.ceil(0.5 * ltol / math.log(rho)))
            n = max(n, _osc_order(kmax * h, tol), 2)
            order[p, side] = min(n, max_regular)
    return ptype, order, ce, cf


@nb.njit(cache=True, nogil=True)
def _point_counts(ptype, order, rule):
    cnt = np.empty(len(ptype) + 1, dtype=np.int64)
    cnt[0] = 0
    for p in range(len(ptype)):
        if ptype[p] == PAIR_SELF:
            c = 4 * rule[0]
        elif ptype[p] == PAIR_ADJACENT:
            c = 2 * rule[2] * rule[3]
        else:
            c = order[p, 0] * order[p, 1]
        cnt[p + 1] = cnt[p] + c
    return cnt


@nb.njit(cache=True, nogil=True)
def _fill_points(tA, tB, th, bA, bB, bh, pe, pf, ptype, order, ce, cf, offs, gx, gw,
                 rule, zx, zy, wt, na, nb_):
    ns, qs, nu, nv, qa = rule[0], rule[1], rule[2], rule[3], rule[4]
    for p in range(len(pe)):
        e = pe[p]
        f = pf[p]
        k = offs[p]
        if ptype[p] == PAIR_SELF:
            h = th[e]
            dx = (tB[e, 0] - tA[e, 0]) / h
            dy = (tB[e, 1] - tA[e, 1]) / h
            for it in range(ns):
                t = gx[ns, it]
                w = h * t**qs
                ww = h * qs * t ** (qs - 1) * gw[ns, it]
                L = h - w
                for ii in range(2):
                    g = gx[2, ii]
                    gwi = gw[2, ii] * L * ww
                    for sgn in (1.0, -1.0):
                        if sgn > 0:
                            sy = L * g
                            sx = sy + w
                        else:
                            sy = w + L * g
                            sx = sy - w
                        zx[k] = sgn * w * dx
                        zy[k] = sgn * w * dy
                        wt[k] = gwi
                        na[k, 0] = 1.0 - sx / h
                        na[k, 1] = sx / h
                        nb_[k, 0] = 1.0 - sy / h
                        nb_[k, 1] = sy / h
                        k += 1
        elif ptype[p] == PAIR_ADJACENT:
            he = th[e]
            hf = bh[f]
            if ce[p] == 0:
                cx, cy = tA[e, 0], tA[e, 1]
                ox, oy = tB[e, 0], tB[e, 1]
            else:
                cx, cy = tB[e, 0], tB[e, 1]
                ox, oy = tA[e, 0], tA[e, 1]
            uex = (ox - cx) / he
            uey = (oy - cy) / he
            if cf[p] == 0:
                fx, fy = bB[f, 0], bB[f, 1]
            else:
                fx, fy = bA[f, 0], bA[f, 1]
            ufx = (fx - cx) / hf
            ufy = (fy - cy) / hf
            for iu in range(nu):
                t = gx[nu, iu]
                u = t**qa
                wu = qa * t ** (qa - 1) * gw[nu, iu]
                for iv in range(nv):
                    v = gx[nv, iv]
                    wv = gw[nv, iv]
                    wgt = he * hf * u * wu * wv
                    for tri in range(2):
                        if tri == 0:
                            se = he * u
                            sf = hf * u * v
                        else:
                            se = he * u * v
                            sf = hf * u
                        zx[k] = se * uex - sf * ufx
                        zy[k] = se * uey - sf * ufy
                        wt[k] = wgt
                        a = se / he
                        b = sf / hf
                        na[k, ce[p]] = 1.0 - a
                        na[k, 1 - ce[p]] = a
                        nb_[k, cf[p]] = 1.0 - b
                        nb_[k, 1 - cf[p]] = b
                        k += 1
        else:
            n = order[p, 0]
            m = order[p, 1]
            he = th[e]
            hf = bh[f]
            for i in range(n):
                s = gx[n, i]
                xx = tA[e, 0] + s * (tB[e, 0] - tA[e, 0])
                xy = tA[e, 1] + s * (tB[e, 1] - tA[e, 1])
                for j in range(m):
                    t = gx[m, j]
                    yx = bA[f, 0] + t * (bB[f, 0] - bA[f, 0])
                    yy = bA[f, 1] + t * (bB[f, 1] - bA[f, 1])
                    zx[k] = xx - yx
                    zy[k] = xy - yy
                    wt[k] = gw[n, i] * gw[m, j] * he * hf
                    na[k, 0] = 1.0 - s
                    na[k, 1] = s
                    nb_[k, 0] = 1.0 - t
                    nb_[k, 1] = t
                    k += 1


@nb.njit(cache=True, nogil=True, fastmath=True)
def _accumulate(offs, pe, pf, tn, bn, tdN, bdN, zx, zy, wt, na, nb_, bes, mp, need, mom):
    """Integrate kernels over point pairs; ``bes[m, s]`` holds Bessel rows for
    medium m at wavenumber kT (s = 0) and kL (s = 1)."""
    kv = np.zeros(28, dtype=np.complex128)
    acc = np.zeros((4, 4, 4), dtype=np.complex128)   # kernel (U, T, T*, Wa), 2a + b, 2i + j
    accB = np.zeros((2, 2, 4), dtype=np.complex128)  # [0]: Wby per a, [1]: Wbx per b
    accC = np.zeros(4, dtype=np.complex128)
    wab = np.zeros(4)
    for p in range(len(pe)):
        e = pe[p]
        f = pf[p]
        nx = tn[e]
        ny = bn[f]
        for m in range(2):
            nm = need[m]
            if not (nm[0] or nm[1] or nm[2] or nm[3]):
                continue
            acc[:] = 0.0
            accB[:] = 0.0
            accC[:] = 0.0
            for k in range(offs[p], offs[p + 1]):
                _point_kernels(mp[m], zx[k], zy[k], nx, ny, bes[m, 0, k], bes[m, 1, k],
                               nm, kv)
                w = wt[k]
                wab[0] = w * na[k, 0] * nb_[k, 0]
                wab[1] = w * na[k, 0] * nb_[k, 1]
                wab[2] = w * na[k, 1] * nb_[k, 0]
                wab[3] = w * na[k, 1] * nb_[k, 1]
                for kk in range(4):
                    if nm[kk]:
                        base = 4 * kk
                        k0 = kv[base]
                        k1 = kv[base + 1]
                        k2 = kv[base + 2]
                        k3 = kv[base + 3]
                        for ab in range(4):
                            x = wab[ab]
                            acc[kk, ab, 0] += x * k0
                            acc[kk, ab, 1] += x * k1
                            acc[kk, ab, 2] += x * k2
                            acc[kk, ab, 3] += x * k3
                if nm[3]:
                    for a in range(2):
                        xa = w * na[k, a]
                        xb = w * nb_[k, a]
                        for c in range(4):
                            accB[0, a, c] += xa * kv[16 + c]
                            accB[1, a, c] += xb * kv[20 + c]
                    for c in range(4):
                        accC[c] += w * kv[24 + c]
            for kk in range(3):
                if nm[kk]:
                    for ab in range(4):
                        for c in range(4):
                            mom[p, m, kk, ab // 2, ab % 2, c // 2, c % 2] = acc[kk, ab, c]
            if nm[3]:
                mu = mp[m, 1]
                rw2 = mp[m, 6]
                for a in range(2):
                    for b in range(2):
                        for c in range(4):
                            mom[p, m, 3, a, b, c // 2, c % 2] = (
                                rw2 * acc[3, 2 * a + b, c]
                                + 2.0 * mu * bdN[f, b] * accB[0, a, c]
                                - 2.0 * mu * tdN[e, a] * accB[1, b, c]
                                - 4.0 * mu * mu / rw2 * tdN[e, a] * bdN[f, b] * accC[c])


def pair_moments_chunks(tpool: ElementPool, bpool: ElementPool, pe, pf, mats, need,
                        chunk_points: int = CHUNK_POINTS, rule=None, tol: float = QUAD_TOL,
                        max_regular: int = 32):
    """Yield ``(slice, moments)`` for consecutive chunks of the pair list.

    ``mats`` is a pair of Materials (media 0 and 1), ``need`` a (2, 4)
    boolean array of requested kernels per medium.
    """
    pe = np.ascontiguousarray(pe, dtype=np.int64)
    pf = np.ascontiguousarray(pf, dtype=np.int64)
    need = np.ascontiguousarray(need, dtype=np.bool_)
    mp = np.stack([m.params() for m in mats])
    kmax = max(m.kT for m in mats)
    same = tpool.surface == bpool.surface
    ptype, order, ce, cf = classify_pairs(tpool.A, tpool.B, tpool.h, tpool.node_ids,
                                          bpool.A, bpool.B, bpool.h, bpool.node_ids,
                                          same, pe, pf, kmax, tol, max_regular)
    rule = SINGULAR_RULE if rule is None else np.asarray(rule, dtype=np.int64)
    counts = _point_counts(ptype, order, rule)
    npair = len(pe)
    start = 0
    while start < npair:
        stop = int(np.searchsorted(counts, counts[start] + chunk_points, side="right")) - 1
        stop = min(max(stop, start + 1), npair)
        sl = slice(start, stop)
        offs = counts[start:stop + 1] - counts[start]
        npts = int(offs[-1])
        zx = np.empty(npts)
        zy = np.empty(npts)
        wt = np.empty(npts)
        na = np.empty((npts, 2))
        nbv = np.empty((npts, 2))
        _fill_points(tpool.A, tpool.B, tpool.h, bpool.A, bpool.B, bpool.h, pe[sl], pf[sl],
                     ptype[sl], order[sl], ce[sl], cf[sl], offs, GX, GW, rule, zx, zy, wt, na, nbv)
        r = np.hypot(zx, zy)
        bes = np.zeros((2, 2, npts, 4))
        for m in range(2):
            if need[m].any():
                bes[m, 0] = bessel_table(mats[m].kT * r)
                bes[m, 1] = bessel_table(mats[m].kL * r)
        mom = np.zeros((stop - start, 2, 4, 2, 2, 2, 2), dtype=np.complex128)
        _accumulate(offs, pe[sl], pf[sl], tpool.nrm, bpool.nrm, tpool.dN, bpool.dN,
                    zx, zy, wt, na, nbv, bes, mp, need, mom)
        yield sl, mom, ptype[sl]
        start = stop
