"""Dense reference solver and the multi-level fast direct solver."""
from __future__ import annotations

import ctypes
import ctypes.util
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .assembly import PHI, PSI, BlockSystem, FunctionSet
from .compression import compress_cell, rank_schedule
from .geometry import ClusterTree, NearFieldIndex, build_proxy, build_tree

log = logging.getLogger(__name__)

DEFAULT_DENSE_LIMIT_BYTES = 3.0e9


def _libc_trim():
    name = ctypes.util.find_library("c")
    try:
        return ctypes.CDLL(name).malloc_trim if name else None
    except (OSError, AttributeError):
        return None


_MALLOC_TRIM = _libc_trim()


def release_free_memory():
    """Return freed heap pages to the OS (glibc only; a no-op elsewhere).

    Cell factors interleave with many freed temporaries, and glibc keeps
    those pages otherwise, which adds up across large solves.
    """
    if _MALLOC_TRIM is not None:
        _MALLOC_TRIM(0)


class ConvRefused(MemoryError):
    """The dense solver declines problems whose matrix would not fit in memory."""


@dataclass
class BoundarySolution:
    """Nodal displacements ``u`` (N, 2) and element tractions ``t`` (N, 2)."""

    u: np.ndarray
    t: np.ndarray

    def vector(self) -> np.ndarray:
        """(u_1 nodes, u_2 nodes, t_1 elements, t_2 elements)."""
        return np.concatenate([self.u[:, 0], self.u[:, 1], self.t[:, 0], self.t[:, 1]])

    @classmethod
    def from_vector(cls, x, N):
        x = np.asarray(x)
        return cls(u=np.stack([x[:N], x[N:2 * N]], axis=1), t=np.stack([x[2 * N:3 * N], x[3 * N:]], axis=1))

    def relative_error(self, ref: "BoundarySolution") -> float:
        return float(np.linalg.norm(self.vector() - ref.vector()) / np.linalg.norm(ref.vector()))


def unpack(system: BlockSystem, fset: FunctionSet, x, u=None, t=None):
    """Write the entries of a block-layout vector into nodal/element arrays."""
    N = system.mesh.N
    u = np.zeros((N, 2), dtype=complex) if u is None else u
    t = np.zeros((N, 2), dtype=complex) if t is None else t
    off = fset.offsets(system.formulation)
    for c in range(2):
        u[fset.phi, c] = x[off[PHI, c]:off[PHI, c] + len(fset.phi)]
        t[fset.psi, c] = x[off[PSI, c]:off[PSI, c] + len(fset.psi)]
    return u, t


def pack(system: BlockSystem, fset: FunctionSet, sol: BoundarySolution):
    x = np.zeros(fset.size(), dtype=complex)
    off = fset.offsets(system.formulation)
    for c in range(2):
        x[off[PHI, c]:off[PHI, c] + len(fset.phi)] = sol.u[fset.phi, c]
        x[off[PSI, c]:off[PSI, c] + len(fset.psi)] = sol.t[fset.psi, c]
    return x


def dense_matrix_bytes(N: int) -> float:
    return 16.0 * (4 * N) ** 2


def solve_dense(system: BlockSystem, rhs=None, incident=None,
                memory_limit: float | None = DEFAULT_DENSE_LIMIT_BYTES) -> BoundarySolution:
    """Assemble the full 4N x 4N matrix and solve it by LU factorization.

    ``rhs`` is a vector in the global layout of ``system.full_set()``;
    alternatively pass an ``incident`` wave.
    """
    N = system.mesh.N
    if memory_limit is not None and dense_matrix_bytes(N) > memory_limit:
        raise ConvRefused(f"dense solve needs {dense_matrix_bytes(N) / 1e9:.1f} GB for the matrix, "
                          f"limit is {memory_limit / 1e9:.1f} GB")
    fs = system.full_set()
    if rhs is None:
        rhs = system.rhs(incident, fs)
    rhs = np.asarray(rhs, dtype=complex)
    if not np.any(rhs):
        z = np.zeros((N, 2), dtype=complex)
        return BoundarySolution(z, z.copy())
    release_free_memory()
    A = system.full_matrix()
    lu = linalg.lu_factor(A, overwrite_a=True, check_finite=False)
    del A
    x = linalg.lu_solve(lu, rhs, check_finite=False)
    u, t = unpack(system, fs, x)
    return BoundarySolution(u, t)


# ---------------------------------------------------------------------------
# fast direct solver

def worker_count() -> int:
    """Thread count for per-cell work, capped by ELASTIC_FDS_THREADS."""
    n = os.cpu_count() or 1
    cap = os.environ.get("ELASTIC_FDS_THREADS")
    if cap:
        n = max(1, min(n, int(cap)))
    return n


def _map(fn, items):
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _merge(system: BlockSystem, children):
    """Active set of a parent made of the children's skeletons, plus the
    positions of each child skeleton vector inside the parent vector."""
    mesh = system.mesh
    form = system.formulation
    sks = [c.skeleton for c in children]
    parent = FunctionSet(mesh, np.concatenate([s.phi for s in sks]),
                         np.concatenate([s.psi for s in sks]))
    off = parent.offsets(form)
    before = {PHI: 0, PSI: 0}
    idx = []
    for s in sks:
        parts = [off[sp, c] + before[sp] + np.arange(s.count(sp)) for sp, c in form.groups]
        idx.append(np.concatenate(parts))
        before[PHI] += s.count(PHI)
        before[PSI] += s.count(PSI)
    return parent, idx


def _global_index(system: BlockSystem, fset: FunctionSet):
    off = system.full_set().offsets(system.formulation)
    return np.concatenate([off[sp, c] + (fset.phi if sp == PHI else fset.psi)
                           for sp, c in system.formulation.groups])


def _merged_matrix(system: BlockSystem, parent: FunctionSet, children, idx):
    """Diagonal block of a parent: reduced child diagonals on the diagonal,
    skeleton interactions elsewhere."""
    if len(children) == 2:
        a, b = children
        D = np.zeros((parent.size(), parent.size()), dtype=np.complex128)
        S_ab, S_ba = system.matrix_pair(a.skeleton, b.skeleton)
        D[np.ix_(idx[0], idx[1])] = S_ab
        D[np.ix_(idx[1], idx[0])] = S_ba
    else:
        D = system.matrix(parent, parent, order="F")
    for c, ix in zip(children, idx):
        D[np.ix_(ix, ix)] = c.A_tilde
    return D


@dataclass
class Stage:
    """One compressed level: cell factors and where their skeleton vectors go."""

    depth: int
    rank: int
    factors: list
    parent: list = field(default_factory=list)
    index_in_parent: list = field(default_factory=list)
    global_index: list | None = None


@dataclass
class TopSystem:
    active: FunctionSet
    lu: tuple
    children_index: list | None
    global_index: np.ndarray | None

    @property
    def size(self):
        return self.active.size()


@dataclass
class ForwardState:
    w: list
    g: list
    top_rhs: np.ndarray


@dataclass
class FDSFactorization:
    """Reusable hierarchy of cell factors plus the factored top system."""

    system: BlockSystem
    tree: ClusterTree
    stages: list
    top: TopSystem
    ranks: list
    timings: dict = field(default_factory=dict)
    reusable: bool = True
    first_rhs: np.ndarray | None = None

    @property
    def N(self):
        return self.system.mesh.N

    def memory_bytes(self):
        n = self.top.lu[0].nbytes
        return n + sum(f.memory_bytes() for st in self.stages for f in st.factors)

    def solve(self, f) -> np.ndarray:
        """Solution vector(s) in the global layout for right side(s) ``f``."""
        f = np.asarray(f, dtype=np.complex128)
        if f.shape[0] != 4 * self.N or f.ndim > 2:
            raise ValueError(f"right side must have {4 * self.N} rows, got shape {f.shape}")
        if self.first_rhs is not None and f.shape == self.first_rhs.shape \
                and np.array_equal(f, self.first_rhs) and self.stages:
            state = stored_forward(self)
        elif not self.reusable:
            raise RuntimeError("factorization kept no diagonal factors; only its own right "
                               "side can be solved")
        else:
            state = forward(self, f)
        y = linalg.lu_solve(self.top.lu, state.top_rhs, check_finite=False)
        return back_substitute(self, state, y)


def compress_level(system: BlockSystem, cells, children, k: int, radius_factor: float = 1.75,
                   proxy_points: int = 64, proxies=None, depth=None, rhs=None,
                   keep_lu: bool = True):
    """Skeletonize every cell of one level.

    ``cells`` are the active function sets; ``children`` is None at the leaves
    or, per cell, the (child factors, positions) it was merged from.  ``rhs``
    optionally lists the cells' right-side vectors for a fused upward sweep.
    """
    if proxies is None:
        proxies = level_proxies(system, cells, radius_factor, proxy_points)

    def task(i):
        cand = cells[i]
        if children is None:
            D = system.matrix(cand, cand, order="F")
        else:
            D = _merged_matrix(system, cand, *children[i])
        return compress_cell(system, cand, D, proxies[i], k, cell=(depth, i),
                             rhs=None if rhs is None else rhs[i], keep_lu=keep_lu)

    return _map(task, list(range(len(cells))))


def level_proxies(system: BlockSystem, cells, radius_factor=1.75, proxy_points=64):
    mesh = system.mesh
    own_phi = np.concatenate([np.full(len(c.phi), i) for i, c in enumerate(cells)])
    own_psi = np.concatenate([np.full(len(c.psi), i) for i, c in enumerate(cells)])
    index = NearFieldIndex(mesh, np.concatenate([c.phi for c in cells]),
                           np.concatenate([c.psi for c in cells]), own_phi, own_psi)
    return [build_proxy(mesh, c.phi, c.psi, radius_factor, proxy_points, near_index=index, owner=i)
            for i, c in enumerate(cells)]


def factorize_fds(system: BlockSystem, tree: ClusterTree | None = None, k_leaf: int = 30,
                  growth: float = 1.15, radius_factor: float = 1.75, proxy_points: int = 64,
                  leaf_size: int = 100, top_size: int | None = None, rhs=None,
                  keep_lu: bool = True) -> FDSFactorization:
    """Multi-level skeletonization of the system matrix.

    Levels are compressed from the leaves upward until the compressed system
    has at most ``top_size`` unknowns (default max(32 k, 4096)), a single cell
    remains, or a proxy circle would enclose the whole boundary; the remaining
    system is then factored densely.

    A right side ``rhs`` is swept upward during the compression.  With
    ``keep_lu=False`` the cell LU factors are released, so that right side is
    the only one the factorization can solve.
    """
    mesh = system.mesh
    tree = build_tree(mesh, leaf_size) if tree is None else tree
    if tree.N != mesh.N:
        raise ValueError("tree and mesh sizes differ")
    ks = rank_schedule(k_leaf, tree.levels, growth)
    timings = {"compress": 0.0, "top": 0.0}
    depth = tree.depth
    cells = [FunctionSet.cell(mesh, a, b) for a, b in tree.ranges[depth]]
    children = None
    stages = []
    level = 0
    if not keep_lu and rhs is None:
        raise ValueError("keep_lu=False needs the right side")
    vecs = None
    if rhs is not None:
        rhs = np.asarray(rhs, dtype=np.complex128)
        vecs = [rhs[_global_index(system, c)] for c in cells]
    t0 = time.perf_counter()
    while True:
        k = ks[level]
        limit = max(32 * k, 4096) if top_size is None else top_size
        total = sum(c.size() for c in cells)
        proxies = None
        stop = len(cells) == 1 or total <= limit
        if not stop:
            proxies = level_proxies(system, cells, radius_factor, proxy_points)
            stop = any(p.degenerate for p in proxies)
        if stop:
            break
        log.info("compressing depth %d: %d cells, rank %d", depth, len(cells), k)
        factors = compress_level(system, cells, children, k, radius_factor, proxy_points,
                                 proxies, depth, vecs, keep_lu)
        stage = Stage(depth=depth, rank=k, factors=factors)
        if level == 0:
            stage.global_index = [_global_index(system, c) for c in cells]
        stages.append(stage)
        parents, children = [], []
        for p in range(len(factors) // 2):
            kids = [factors[2 * p], factors[2 * p + 1]]
            pset, idx = _merge(system, kids)
            parents.append(pset)
            children.append((kids, idx))
            stage.parent += [p, p]
            stage.index_in_parent += idx
        if vecs is not None:
            vecs = [np.zeros(c.size(), dtype=np.complex128) for c in parents]
            for i, f in enumerate(factors):
                vecs[stage.parent[i]][stage.index_in_parent[i]] = f.g
        cells = parents
        depth -= 1
        level += 1
    timings["compress"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if stages:
        last = stages[-1]
        active, idx = _merge(system, last.factors)
        A = _merged_matrix(system, active, last.factors, idx)
        # the top vector is indexed by the last stage's skeletons directly
        last.parent = [0] * len(last.factors)
        last.index_in_parent = idx
        top = TopSystem(active=active, lu=None, children_index=idx, global_index=None)
    else:
        active = system.full_set()
        A = system.full_matrix()
        top = TopSystem(active=active, lu=None, children_index=None,
                        global_index=_global_index(system, active))
    log.info("top system of size %d", A.shape[0])
    top.lu = linalg.lu_factor(A, overwrite_a=True, check_finite=False)
    del A
    timings["top"] = time.perf_counter() - t0
    fact = FDSFactorization(system=system, tree=tree, stages=stages, top=top,
                            ranks=ks[:max(len(stages), 1)], timings=timings,
                            reusable=keep_lu or not stages)
    if rhs is not None:
        fact.first_rhs = rhs
    release_free_memory()
    return fact


def forward(fact: FDSFactorization, f) -> ForwardState:
    """Upward sweep: w = D^-1 v and g = A~ R w per cell, g passed to the parent."""
    f = np.asarray(f, dtype=np.complex128)
    extra = f.shape[1:]
    if not fact.stages:
        return ForwardState([], [], f[fact.top.global_index])
    st0 = fact.stages[0]
    vecs = [f[ix] for ix in st0.global_index]
    W, G = [], []
    for st in fact.stages:
        def task(i, st=st, vecs=vecs):
            fac = st.factors[i]
            w = fac.solve_diag(vecs[i])
            return w, fac.A_tilde @ fac.apply_R(w)
        res = _map(task, list(range(len(st.factors))))
        w = [r[0] for r in res]
        g = [r[1] for r in res]
        W.append(w)
        G.append(g)
        n_par = max(st.parent) + 1
        sizes = [0] * n_par
        for i, p in enumerate(st.parent):
            sizes[p] += len(st.index_in_parent[i])
        vecs = [np.zeros((s,) + extra, dtype=np.complex128) for s in sizes]
        for i, p in enumerate(st.parent):
            vecs[p][st.index_in_parent[i]] = g[i]
    return ForwardState(W, G, vecs[0])


def stored_forward(fact: FDSFactorization) -> ForwardState:
    """Upward sweep results recorded while factoring with a right side."""
    last = fact.stages[-1]
    top = np.zeros(fact.top.size, dtype=np.complex128)
    for f, ix in zip(last.factors, last.index_in_parent):
        top[ix] = f.g
    return ForwardState([[f.w for f in st.factors] for st in fact.stages],
                        [[f.g for f in st.factors] for st in fact.stages], top)


def back_substitute(fact: FDSFactorization, state: ForwardState, y) -> np.ndarray:
    """Downward sweep x = w + D^-1 L (A~ y - g), ending in the global layout."""
    y = np.asarray(y, dtype=np.complex128)
    if not fact.stages:
        x = np.zeros_like(y)
        x[fact.top.global_index] = y
        return x
    parent_vecs = [y]
    for s in range(len(fact.stages) - 1, -1, -1):
        st = fact.stages[s]
        w, g = state.w[s], state.g[s]

        def task(i, st=st, w=w, g=g, parent_vecs=parent_vecs):
            fac = st.factors[i]
            yi = parent_vecs[st.parent[i]][st.index_in_parent[i]]
            return w[i] + fac.correction(fac.A_tilde @ yi - g[i])

        parent_vecs = _map(task, list(range(len(st.factors))))
    st0 = fact.stages[0]
    x = np.zeros((4 * fact.N,) + y.shape[1:], dtype=np.complex128)
    for ix, xi in zip(st0.global_index, parent_vecs):
        x[ix] = xi
    return x


def solve_fds(system: BlockSystem, tree: ClusterTree | None = None, k_leaf: int = 30,
              growth: float = 1.15, radius_factor: float = 1.75, proxy_points: int = 64,
              incident=None, rhs=None, leaf_size: int = 100, top_size: int | None = None,
              keep_lu: bool = True):
    """Factor the system with the fast direct solver and solve one right side.

    Returns ``(BoundarySolution, FDSFactorization)``; the factorization serves
    further right sides through :func:`solve_additional_rhs` unless
    ``keep_lu=False`` traded that ability for memory.
    """
    if tree is not None and tree.depth < 1:
        raise ValueError("the cluster tree needs at least two levels")
    if rhs is None:
        if incident is None:
            raise ValueError("pass an incident wave or a right-hand side")
        rhs = system.rhs(incident)
    fact = factorize_fds(system, tree, k_leaf, growth, radius_factor, proxy_points, leaf_size,
                         top_size, rhs=rhs, keep_lu=keep_lu)
    return solve_additional_rhs(fact, rhs), fact


def solve_additional_rhs(fact: FDSFactorization, f_new):
    """Solve for a new right side (4N vector) or several (4N x m) with stored factors."""
    f_new = np.asarray(f_new, dtype=np.complex128)
    x = fact.solve(f_new)
    fs = fact.system.full_set()
    if x.ndim == 1:
        u, t = unpack(fact.system, fs, x)
        return BoundarySolution(u, t)
    return [BoundarySolution(*unpack(fact.system, fs, x[:, j])) for j in range(x.shape[1])]
