import math

import numpy as np
import pytest

from elastic_fds import (BlockSystem, Formulation, FunctionSet, IncidentWave, build_tree,
                         gram_matrices, green_displacement, kernel_T, kernel_Tstar,
                         make_circle_mesh, make_square_mesh, solve_dense)
from elastic_fds.assembly import PHI, PSI, pair_integral

from conftest import materials, rel

GX16, GW16 = np.polynomial.legendre.leggauss(16)
GX16, GW16 = (GX16 + 1) / 2, GW16 / 2


def _points(mesh, e, piece, gx=GX16, gw=GW16):
    """Quadrature points, weights (times the shape value) and normal of one basis piece."""
    a, b = mesh.nodes[e], mesh.nodes[(e + 1) % mesh.N]
    shape = np.ones_like(gx) if piece == "psi" else (1 - gx if piece == 0 else gx)
    return a + gx[:, None] * (b - a), gw * mesh.lengths[e] * shape, mesh.normals[e]


def _direct(kind, mat, mesh, test, basis, gx=GX16, gw=GW16):
    xs, wx, nx = _points(mesh, *test, gx, gw)
    ys, wy, ny = _points(mesh, *basis, gx, gw)
    acc = np.zeros((2, 2), complex)
    for x, a in zip(xs, wx):
        for y, b in zip(ys, wy):
            if kind == "U":
                k = green_displacement(mat, x, y)
            elif kind == "T":
                k = kernel_T(mat, x, y, ny)
            else:
                k = kernel_Tstar(mat, x, y, nx)
            acc += a * b * k
    return acc


def test_u_self_term_oracle(mats):
    # static log part integrated in closed form, dynamic remainder with t = (h/8) s^4
    # substitution and Gauss-Legendre at 40 digits (mpmath)
    ref = np.array([[0.00260962740538187 + 0.0015949238879455964j,
                     -0.00022973005062082 - 3.0126664298655309e-06j],
                    [-0.00022973005062082 - 3.0126664298655309e-06j,
                     0.0028552139460206 + 0.001598144495456933j]])
    val = pair_integral("U", mats[0], make_circle_mesh(64), (5, "psi"), (5, "psi"))
    assert np.abs(val - ref).max() <= 1e-9


@pytest.mark.parametrize("kind", ["U", "T", "T*"])
def test_far_pair_matches_plain_gauss(mats, kind):
    mesh = make_circle_mesh(64)
    # element 0 and 12: centroids about 1.0 apart, ten element lengths
    for test, basis in (((0, "psi"), (12, "psi")), ((0, 0), (12, 1)), ((2, 1), (14, "psi"))):
        val = pair_integral(kind, mats[1], mesh, test, basis)
        ref = _direct(kind, mats[1], mesh, test, basis)
        assert np.abs(val - ref).max() <= 1e-10 * np.abs(ref).max()


def test_w_far_pair_matches_raw_hypersingular_integrand(mats):
    """Regularized W summed over two hat supports against the raw finite-part
    kernel N_x T(x, y), which is regular for separated supports; the x-derivative
    uses a fourth-order difference."""
    m = mats[0]
    mesh = make_circle_mesh(64)
    C = m.elastic_tensor()
    gx, gw = np.polynomial.legendre.leggauss(20)
    gx, gw = (gx + 1) / 2, gw / 2
    h = 1e-4
    e = np.eye(2)

    def raw(x, y, nx, ny):
        dT = np.array([(-kernel_T(m, x + 2 * h * e[b], y, ny) + 8 * kernel_T(m, x + h * e[b], y, ny)
                        - 8 * kernel_T(m, x - h * e[b], y, ny) + kernel_T(m, x - 2 * h * e[b], y, ny))
                       / (12 * h) for b in range(2)])
        return np.einsum("iakb,a,bkj->ij", C, nx, dT)

    hat_r, hat_s = [(3, 1), (4, 0)], [(20, 1), (21, 0)]
    reg = sum(pair_integral("W", m, mesh, a, b) for a in hat_r for b in hat_s)
    acc = np.zeros((2, 2), complex)
    for a in hat_r:
        xs, wx, nx = _points(mesh, *a, gx, gw)
        for b in hat_s:
            ys, wy, ny = _points(mesh, *b, gx, gw)
            for x, p in zip(xs, wx):
                for y, q in zip(ys, wy):
                    acc += p * q * raw(x, y, nx, ny)
    assert np.abs(reg - acc).max() <= 1e-8 * np.abs(acc).max()


def test_w_form_symmetric_for_single_medium():
    m0, _ = materials(4.0)
    mesh = make_square_mesh(32)
    s = BlockSystem(mesh, m0, m0, Formulation.pmchwt())
    # two distinct set objects: every ordered element pair is integrated separately
    A = s.matrix(FunctionSet.full(mesh), FunctionSet.full(mesh))
    off = FunctionSet.full(mesh).offsets(s.formulation)
    n = mesh.N
    W = A[off[PHI, 0]:off[PHI, 0] + 2 * n, off[PHI, 0]:off[PHI, 0] + 2 * n]
    assert np.abs(W - W.T).max() <= 1e-10 * np.abs(W).max()


def test_pmchwt_single_layer_block_symmetric(mats):
    mesh = make_circle_mesh(48)
    s = BlockSystem(mesh, *mats, Formulation.pmchwt())
    A = s.matrix(FunctionSet.full(mesh), FunctionSet.full(mesh))
    n = mesh.N
    U = A[:2 * n, :2 * n]              # psi rows and columns come first for PMCHWT
    assert np.abs(U - U.T).max() <= 1e-12 * np.abs(U).max()


def test_gram_closed_forms():
    mesh = make_square_mesh(16, side=2.0)
    Ipp, Ips, Iss = gram_matrices(mesh)
    h = mesh.lengths
    assert np.array_equal(Iss, np.diag(h))
    for r in range(mesh.N):
        for s in range(mesh.N):
            endpoint = s in (r, (r - 1) % mesh.N)
            assert Ips[r, s] == (h[s] / 2 if endpoint else 0.0)
    # cyclic tridiagonal with row sums equal to half of the two incident lengths
    assert np.allclose(Ipp.sum(axis=1), 0.5 * (h + np.roll(h, 1)))
    band = np.abs(np.subtract.outer(np.arange(16), np.arange(16))) % 15 > 1
    assert np.all(Ipp[band] == 0)


def test_gram_matches_quadrature():
    mesh = make_circle_mesh(12)
    Ipp, Ips, _ = gram_matrices(mesh)
    gx, gw = np.polynomial.legendre.leggauss(4)
    gx, gw = (gx + 1) / 2, gw / 2
    e = 7
    h = mesh.lengths[e]
    assert Ipp[e, e + 1] == pytest.approx(h * np.sum(gw * (1 - gx) * gx))
    assert Ips[e + 1, e] == pytest.approx(h * np.sum(gw * gx))


@pytest.mark.parametrize("kind", ["pmchwt", "bm"])
def test_blocks_equal_monolithic_matrix(mats, kind):
    mesh = make_circle_mesh(64)
    s = BlockSystem(mesh, *mats, Formulation(kind))
    full = s.full_matrix()
    fs = s.full_set()
    glob = fs.offsets(s.formulation)
    tree = build_tree(mesh, 16)
    A = np.zeros_like(full)
    for ci in tree.leaves:
        for cj in tree.leaves:
            B = s.assemble_block(ci, cj)
            ri = _block_index(s, glob, ci)
            rj = _block_index(s, glob, cj)
            A[np.ix_(ri, rj)] = B
    assert np.abs(A - full).max() <= 1e-14 * np.abs(full).max()


def _block_index(s, glob, cell):
    a, b = cell
    out = []
    for sp, c in s.formulation.groups:
        out.append(glob[sp, c] + np.arange(a, b))
    return np.concatenate(out)


def test_bm_lower_block_is_medium1_single_layer(mats):
    mesh = make_circle_mesh(64)
    s = BlockSystem(mesh, *mats, Formulation.burton_miller())
    B = s.assemble_block((0, 8), (32, 40))
    # BM layout (u1 | u2 | t1 | t2): the (2, 2) super-block is -U1 on psi x psi
    for i in range(8):
        for j in range(8):
            ref = -_direct("U", mats[1], mesh, (i, "psi"), (32 + j, "psi"))
            got = B[[16 + i, 24 + i]][:, [16 + j, 24 + j]]
            assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()


def test_rhs_zero_incident(mats):
    s = BlockSystem(make_circle_mesh(32), *mats, Formulation.pmchwt())
    f = s.rhs(IncidentWave(amplitude=0.0))
    assert f.shape == (128,) and not np.any(f)


def test_bm_rhs_lower_half_zero(mats):
    mesh = make_circle_mesh(64)
    s = BlockSystem(mesh, *mats, Formulation.burton_miller())
    for a, b in build_tree(mesh, 16).leaves:
        fi = s.rhs(IncidentWave(), s.cell_set(a, b))
        assert np.all(fi[32:] == 0) and np.any(fi[:32])


def test_pwave_rhs_spot_check(mats):
    m0 = mats[0]
    assert m0.kL == pytest.approx(4 / math.sqrt(3))
    mesh = make_square_mesh(40)
    s = BlockSystem(mesh, *mats, Formulation.pmchwt())
    f = s.rhs(IncidentWave())
    off = s.full_set().offsets(s.formulation)
    gx, gw = np.polynomial.legendre.leggauss(32)
    gx, gw = (gx + 1) / 2, gw / 2
    for e in (0, 13, 31):
        pts, w, _ = _points(mesh, e, "psi", gx, gw)
        uI = np.exp(1j * m0.kL * pts[:, 0])        # d = (1, 0): only the first component
        ref = np.sum(w * uI)
        assert abs(f[off[PSI, 0] + e] - ref) <= 1e-13 * abs(ref)
        assert f[off[PSI, 1] + e] == 0


def test_matrix_size(mats):
    s = BlockSystem(make_circle_mesh(40), *mats, Formulation.burton_miller())
    assert s.full_matrix().shape == (160, 160)


def test_bm_alpha_default_and_validation(mats):
    assert Formulation.burton_miller().coupling(mats[0]) == pytest.approx(1j / mats[0].kT)
    with pytest.raises(ValueError):
        Formulation.burton_miller(2.0)


def _calderon_residuals(N, mats):
    m0, m1 = mats
    mesh = make_circle_mesh(N)
    s = BlockSystem(mesh, m0, m1, Formulation.burton_miller())
    A = s.full_matrix()
    # medium-1 plane P wave: the second block row vanishes for its traces
    d = np.array([0.6, 0.8])
    inc = IncidentWave(tuple(d))
    u = inc.displacement(m1, mesh.nodes)
    t = inc.traction(m1, mesh.centroids, mesh.normals)
    x = np.concatenate([u[:, 0], u[:, 1], t[:, 0], t[:, 1]])
    xu = x.copy()
    xu[2 * N:] = 0
    r1 = np.linalg.norm((A @ x)[2 * N:]) / np.linalg.norm((A @ xu)[2 * N:])
    # medium-0 field radiated by a point source inside the inclusion: the first row vanishes
    xs, pol = np.array([0.1, 0.05]), np.array([1.0, 0.3])
    u0 = np.array([green_displacement(m0, p, xs) @ pol for p in mesh.nodes])
    t0 = np.array([kernel_Tstar(m0, p, xs, n) @ pol for p, n in zip(mesh.centroids, mesh.normals)])
    x0 = np.concatenate([u0[:, 0], u0[:, 1], t0[:, 0], t0[:, 1]])
    xu = x0.copy()
    xu[2 * N:] = 0
    r0 = np.linalg.norm((A @ x0)[:2 * N]) / np.linalg.norm((A @ xu)[:2 * N])
    return r0, r1


def test_calderon_rows_converge(mats):
    res = [_calderon_residuals(N, mats) for N in (64, 128, 256)]
    for row in range(2):
        for a, b in zip(res, res[1:]):
            assert math.log2(a[row] / b[row]) >= 1.0


def test_pmchwt_and_bm_agree(mats):
    mesh = make_circle_mesh(800)
    inc = IncidentWave()
    a = solve_dense(BlockSystem(mesh, *mats, Formulation.pmchwt()), incident=inc)
    b = solve_dense(BlockSystem(mesh, *mats, Formulation.burton_miller()), incident=inc)
    assert rel(a.vector(), b.vector()) <= 1e-3
