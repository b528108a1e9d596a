"""Galerkin assembly for the PMCHWT and Burton-Miller transmission systems.

Displacements are expanded in piecewise-linear hat functions (one per node,
``phi``) and tractions in piecewise-constant functions (one per element,
``psi``).  A block of the system couples a set of test functions with a set
of basis functions; both are described by :class:`FunctionSet`.  Within a
set, unknowns are grouped by (space, component) in the order fixed by the
formulation: PMCHWT uses (t_1 | t_2 | u_1 | u_2), Burton-Miller
(u_1 | u_2 | t_1 | t_2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .geometry import BoundaryMesh
from .kernels import K_T, K_TS, K_U, K_W, Material
from .quadrature import (GW, GX, PAIR_SELF, ElementPool, _osc_order, pair_moments_chunks)

PHI, PSI = 0, 1
_HEAVY_RULE = np.array([40, 6, 32, 32, 4], dtype=np.int64)


@dataclass(frozen=True)
class Formulation:
    """Boundary integral formulation; ``alpha`` is the Burton-Miller coupling constant."""

    kind: str = "pmchwt"
    alpha: complex | None = None

    def __post_init__(self):
        if self.kind not in ("pmchwt", "bm"):
            raise ValueError("formulation kind must be 'pmchwt' or 'bm'")
        if self.kind == "bm" and self.alpha is not None and complex(self.alpha).imag == 0:
            raise ValueError("Burton-Miller coupling constant needs a nonzero imaginary part")

    @classmethod
    def pmchwt(cls):
        return cls("pmchwt")

    @classmethod
    def burton_miller(cls, alpha=None):
        return cls("bm", alpha)

    def coupling(self, mat0: Material) -> complex:
        if self.kind != "bm":
            return 0.0
        return complex(self.alpha) if self.alpha is not None else 1j / mat0.kT

    @property
    def groups(self):
        """(space, component) of the four unknown groups in block order."""
        if self.kind == "pmchwt":
            return ((PSI, 0), (PSI, 1), (PHI, 0), (PHI, 1))
        return ((PHI, 0), (PHI, 1), (PSI, 0), (PSI, 1))

    def operator_table(self, mat0: Material):
        """Kernel coefficients coef[test space, basis space, medium, kernel],
        identity (Gram) coefficients and the kernels needed per medium."""
        coef = np.zeros((2, 2, 2, 4), dtype=np.complex128)
        gram = np.zeros((2, 2), dtype=np.complex128)
        if self.kind == "pmchwt":
            for m in range(2):
                coef[PSI, PSI, m, K_U] = -1.0
                coef[PSI, PHI, m, K_T] = 1.0
                coef[PHI, PSI, m, K_TS] = -1.0
                coef[PHI, PHI, m, K_W] = 1.0
        else:
            a = self.coupling(mat0)
            coef[PHI, PHI, 0, K_T] = 1.0
            coef[PHI, PHI, 0, K_W] = a
            coef[PHI, PSI, 0, K_U] = -1.0
            coef[PHI, PSI, 0, K_TS] = -a
            coef[PSI, PHI, 1, K_T] = 1.0
            coef[PSI, PSI, 1, K_U] = -1.0
            gram[PHI, PHI] = 0.5
            gram[PHI, PSI] = 0.5 * a
            gram[PSI, PHI] = -0.5
        need = np.any(coef != 0, axis=(0, 1))
        # reversed element pairs reuse the moments with T and T* exchanged
        need[:, K_T] = need[:, K_TS] = need[:, K_T] | need[:, K_TS]
        return coef, gram, need


@dataclass(frozen=True)
class IncidentWave:
    """Plane longitudinal wave u = amplitude * d * exp(i kL x.d) in medium 0."""

    direction: tuple = (1.0, 0.0)
    amplitude: complex = 1.0
    omega: float | None = None
    polarization: str = "longitudinal"

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.hypot(*d) - 1.0) > 1e-12:
            raise ValueError("incident direction must be a unit vector")
        if self.polarization != "longitudinal":
            raise ValueError("only longitudinal incidence is supported")

    @classmethod
    def at_angle(cls, theta: float, amplitude=1.0, omega=None):
        return cls((math.cos(theta), math.sin(theta)), amplitude, omega)

    def _check(self, mat0: Material):
        if self.omega is not None and abs(self.omega - mat0.omega) > 1e-12 * mat0.omega:
            raise ValueError("incident frequency differs from the material frequency")

    def displacement(self, mat0: Material, points) -> np.ndarray:
        self._check(mat0)
        d = np.asarray(self.direction, dtype=float)
        ph = np.exp(1j * mat0.kL * (np.asarray(points, dtype=float) @ d))
        return self.amplitude * ph[..., None] * d

    def traction(self, mat0: Material, points, normals) -> np.ndarray:
        """Traction with medium-0 constants on surfaces with the given normals."""
        self._check(mat0)
        d = np.asarray(self.direction, dtype=float)
        ph = np.exp(1j * mat0.kL * (np.asarray(points, dtype=float) @ d))
        nd = np.asarray(normals) @ d
        val = mat0.lam * np.asarray(normals) + 2 * mat0.mu * nd[..., None] * d
        return 1j * mat0.kL * self.amplitude * ph[..., None] * val


class FunctionSet:
    """Hat functions at nodes ``phi`` and element functions ``psi`` of a mesh."""

    def __init__(self, mesh: BoundaryMesh, phi, psi):
        self.mesh = mesh
        self.phi = np.asarray(phi, dtype=np.int64)
        self.psi = np.asarray(psi, dtype=np.int64)

    @classmethod
    def full(cls, mesh):
        return cls(mesh, np.arange(mesh.N), np.arange(mesh.N))

    @classmethod
    def cell(cls, mesh, start, stop):
        return cls(mesh, np.arange(start, stop), np.arange(start, stop))

    def count(self, space):
        return len(self.phi) if space == PHI else len(self.psi)

    def size(self):
        return 2 * (len(self.phi) + len(self.psi))

    def offsets(self, form: Formulation):
        """off[space, comp]: first row of that group inside the block layout."""
        off = np.zeros((2, 2), dtype=np.int64)
        pos = 0
        for sp, c in form.groups:
            off[sp, c] = pos
            pos += self.count(sp)
        return off

    def group_slices(self, form: Formulation):
        off = self.offsets(form)
        return [slice(off[sp, c], off[sp, c] + self.count(sp)) for sp, c in form.groups]

    def elements(self):
        return np.unique(np.concatenate([self.mesh.node_support(self.phi), self.psi]))

    def maps(self, pool: ElementPool):
        """Local positions of the set's functions on the pool elements (-1 if absent)."""
        N = self.mesh.N
        lut_phi = np.full(N, -1, dtype=np.int64)
        lut_phi[self.phi] = np.arange(len(self.phi))
        lut_psi = np.full(N, -1, dtype=np.int64)
        lut_psi[self.psi] = np.arange(len(self.psi))
        return (np.ascontiguousarray(lut_phi[pool.node_ids]),
                np.ascontiguousarray(lut_psi[pool.ids]))

    def __len__(self):
        return self.size()


@nb.njit(cache=True, nogil=True)
def _scatter(mom, pe, pf, ptype, hel, rphi, rpsi, cphi, cpsi, roff, coff, coef, gram,
             transpose, skip_self, out):
    """Add Galerkin entries of a chunk of element pairs into ``out``.

    Without ``transpose`` rows come from the test element ``pe`` and columns
    from the basis element ``pf``.  With ``transpose`` the roles swap: the
    moments are reused for the reversed pair, so row maps refer to ``pf``.
    """
    V = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    for p in range(len(pe)):
        selfpair = ptype[p] == PAIR_SELF
        if transpose and skip_self and selfpair:
            continue
        if transpose:
            er = pf[p]
            ec = pe[p]
        else:
            er = pe[p]
            ec = pf[p]
        for ts in range(2):
            for bs in range(2):
                V[:] = 0.0
                hit = False
                for m in range(2):
                    for k in range(4):
                        c = coef[ts, bs, m, k]
                        if c == 0:
                            continue
                        hit = True
                        if transpose:
                            kk = k
                            if k == 1:
                                kk = 2
                            elif k == 2:
                                kk = 1
                            for a in range(2):
                                for b in range(2):
                                    for i in range(2):
                                        for j in range(2):
                                            V[a, b, i, j] += c * mom[p, m, kk, b, a, j, i]
                        else:
                            for a in range(2):
                                for b in range(2):
                                    for i in range(2):
                                        for j in range(2):
                                            V[a, b, i, j] += c * mom[p, m, k, a, b, i, j]
                g = gram[ts, bs]
                if selfpair and g != 0:
                    hit = True
                    h = hel[er]
                    for a in range(2):
                        for b in range(2):
                            gv = g * h * (1.0 / 3.0 if a == b else 1.0 / 6.0)
                            V[a, b, 0, 0] += gv
                            V[a, b, 1, 1] += gv
                if not hit:
                    continue
                for a in range(2):
                    if ts == 0:
                        r = rphi[er, a]
                    else:
                        r = rpsi[er]
                    if r < 0:
                        continue
                    for b in range(2):
                        if bs == 0:
                            cc = cphi[ec, b]
                        else:
                            cc = cpsi[ec]
                        if cc < 0:
                            continue
                        for i in range(2):
                            for j in range(2):
                                out[roff[ts, i] + r, coff[bs, j] + cc] += V[a, b, i, j]


class BlockSystem:
    """Discretized transmission problem on a mesh for one formulation.

    Blocks are produced on demand for arbitrary pairs of function sets, so
    the same object serves the dense solver, the tree-structured solver and
    the proxy compression.
    """

    def __init__(self, mesh: BoundaryMesh, mat0: Material, mat1: Material,
                 formulation: Formulation = Formulation()):
        if abs(mat0.omega - mat1.omega) > 1e-12 * mat0.omega:
            raise ValueError("both media must share the same frequency")
        self.mesh = mesh
        self.mat0 = mat0
        self.mat1 = mat1
        self.formulation = formulation
        self.alpha = formulation.coupling(mat0)
        self.coef, self.gram, self.need = formulation.operator_table(mat0)

    @property
    def mats(self):
        return (self.mat0, self.mat1)

    def _rule(self, *pools):
        kmax = max(self.mat0.kT, self.mat1.kT)
        hmax = max(float(p.h.max()) for p in pools)
        return None if kmax * hmax <= 0.5 else _HEAVY_RULE

    def add_interactions(self, test: FunctionSet, basis: FunctionSet, out=None, out_t=None):
        """Accumulate the block M(test, basis) into ``out`` and, if given,
        the reversed block M(basis, test) into ``out_t`` from the same element
        pair integrals.  When ``test is basis`` only unordered pairs are
        integrated and ``out_t`` is ignored."""
        symmetric = test is basis
        tpool = ElementPool(test.mesh, test.elements())
        bpool = tpool if symmetric else ElementPool(basis.mesh, basis.elements())
        form = self.formulation
        rphi, rpsi = test.maps(tpool)
        cphi, cpsi = basis.maps(bpool)
        roff = test.offsets(form)
        coff = basis.offsets(form)
        if symmetric:
            iu, ju = np.triu_indices(len(tpool))
            pe, pf = iu.astype(np.int64), ju.astype(np.int64)
        else:
            pe = np.repeat(np.arange(len(tpool), dtype=np.int64), len(bpool))
            pf = np.tile(np.arange(len(bpool), dtype=np.int64), len(tpool))
        rule = self._rule(tpool, bpool)
        for sl, mom, ptype in pair_moments_chunks(tpool, bpool, pe, pf, self.mats, self.need,
                                                  rule=rule):
            if out is not None:
                _scatter(mom, pe[sl], pf[sl], ptype, tpool.h, rphi, rpsi, cphi, cpsi, roff, coff,
                         self.coef, self.gram, False, False, out)
            if symmetric:
                _scatter(mom, pe[sl], pf[sl], ptype, tpool.h, rphi, rpsi, cphi, cpsi, roff, coff,
                         self.coef, self.gram, True, True, out)
            elif out_t is not None:
                _scatter(mom, pe[sl], pf[sl], ptype, bpool.h, cphi, cpsi, rphi, rpsi, coff, roff,
                         self.coef, self.gram, True, False, out_t)
        return out, out_t

    def matrix(self, test: FunctionSet, basis: FunctionSet | None = None, order="C"):
        basis = test if basis is None else basis
        out = np.zeros((test.size(), basis.size()), dtype=np.complex128, order=order)
        if basis is test:
            self.add_interactions(test, test, out)
        else:
            self.add_interactions(test, basis, out)
        return out

    def matrix_pair(self, a: FunctionSet, b: FunctionSet):
        """(M(a, b), M(b, a)) computed from one pass over element pairs."""
        out = np.zeros((a.size(), b.size()), dtype=np.complex128)
        out_t = np.zeros((b.size(), a.size()), dtype=np.complex128)
        self.add_interactions(a, b, out, out_t)
        return out, out_t

    def full_set(self) -> FunctionSet:
        return FunctionSet.full(self.mesh)

    def full_matrix(self) -> np.ndarray:
        """4N x 4N matrix in the global grouped layout of :meth:`full_set`."""
        fs = self.full_set()
        return self.matrix(fs, fs, order="F")

    def cell_set(self, start, stop) -> FunctionSet:
        return FunctionSet.cell(self.mesh, start, stop)

    def assemble_block(self, cell_i, cell_j) -> np.ndarray:
        """Dense block A_ij between two cells given as (start, stop) ranges."""
        fi = self.cell_set(*cell_i)
        if tuple(cell_i) == tuple(cell_j):
            return self.matrix(fi)
        return self.matrix(fi, self.cell_set(*cell_j))

    def rhs(self, incident: IncidentWave, fset: FunctionSet | None = None) -> np.ndarray:
        """Right-hand side restricted to the test functions of ``fset``."""
        fset = self.full_set() if fset is None else fset
        mesh = fset.mesh
        form = self.formulation
        out = np.zeros(fset.size(), dtype=np.complex128)
        if incident.amplitude == 0:
            return out
        elems = fset.elements()
        h = mesh.lengths[elems]
        n = max(8, _osc_order(self.mat0.kL * float(h.max()), 1e-15))
        n = min(n, GX.shape[0] - 1)
        s = GX[n, :n]
        w = GW[n, :n]
        a = mesh.nodes[elems]
        b = mesh.nodes[(elems + 1) % mesh.N]
        pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        nrm = np.broadcast_to(mesh.normals[elems][:, None, :], pts.shape)
        uI = incident.displacement(self.mat0, pts)
        tI = incident.traction(self.mat0, pts, nrm)
        shp = np.stack([1 - s, s])                                  # (2, n)
        wh = w[None, :] * h[:, None]                                # (E, n)
        u_lin = np.einsum("en,an,enc->eac", wh, shp, uI)           # (E, 2 local, comp)
        t_lin = np.einsum("en,an,enc->eac", wh, shp, tI)
        off = fset.offsets(form)
        lut_phi = np.full(mesh.N, -1)
        lut_phi[fset.phi] = np.arange(len(fset.phi))
        lut_psi = np.full(mesh.N, -1)
        lut_psi[fset.psi] = np.arange(len(fset.psi))
        nodes = np.stack([elems, (elems + 1) % mesh.N], axis=1)
        if form.kind == "pmchwt":
            phi_data, psi_data = t_lin, u_lin
        else:
            phi_data, psi_data = u_lin + self.alpha * t_lin, None
        for c in range(2):
            for loc in range(2):
                r = lut_phi[nodes[:, loc]]
                ok = r >= 0
                np.add.at(out, off[PHI, c] + r[ok], phi_data[ok, loc, c])
            if psi_data is not None:
                r = lut_psi[elems]
                ok = r >= 0
                np.add.at(out, off[PSI, c] + r[ok], psi_data[ok, 0, c] + psi_data[ok, 1, c])
        return out


def gram_matrices(mesh: BoundaryMesh):
    """Closed-form Gram matrices (phi-phi, phi-psi, psi-psi) as dense arrays."""
    N = mesh.N
    h = mesh.lengths
    Ipp = np.zeros((N, N))
    Ips = np.zeros((N, N))
    for e in range(N):
        i, j = e, (e + 1) % N
        Ipp[i, i] += h[e] / 3
        Ipp[j, j] += h[e] / 3
        Ipp[i, j] += h[e] / 6
        Ipp[j, i] += h[e] / 6
        Ips[i, e] += h[e] / 2
        Ips[j, e] += h[e] / 2
    return Ipp, Ips, np.diag(h)


def pair_integral(kind: str, mat: Material, mesh: BoundaryMesh, test, basis) -> np.ndarray:
    """Galerkin integral of one kernel between two basis pieces.

    ``test`` and ``basis`` are ``(element, piece)`` with ``piece`` either
    ``"psi"`` (the constant function) or ``0`` / ``1`` (the local hat
    function starting or ending at the element's first node).  Returns the
    2x2 matrix of component integrals.  For ``"W"`` the value is the
    element-pair contribution of the regularized form, which reproduces the
    hypersingular form once full hat supports are summed.
    """
    k = {"U": K_U, "T": K_T, "T*": K_TS, "W": K_W}[kind]
    need = np.zeros((2, 4), dtype=bool)
    need[0, k] = True
    e, pt = test
    f, pb = basis
    tpool = ElementPool(mesh, [e])
    bpool = ElementPool(mesh, [f])
    _, mom, _ = next(pair_moments_chunks(tpool, bpool, np.array([0]), np.array([0]),
                                         (mat, mat), need))
    m = mom[0, 0, k]
    wa = np.ones(2) if pt == "psi" else np.eye(2)[pt]
    wb = np.ones(2) if pb == "psi" else np.eye(2)[pb]
    return np.einsum("a,b,abij->ij", wa, wb, m)
