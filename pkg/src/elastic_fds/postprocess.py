"""Displacement at observation points from boundary data via the integral representations.

Outside the inclusion  u = u_inc - D0[u] + S0[t];  inside  u = D1[u] - S1[t],
where S is the single layer with kernel G and D the double layer with the
traction of G taken at the boundary point (normal pointing into the inclusion).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .assembly import IncidentWave
from .geometry import BoundaryMesh
from .kernels import Material, _point_kernels, bessel_table
from .quadrature import GW, GX, MAX_ORDER, _osc_order
from .solver import BoundarySolution

log = logging.getLogger(__name__)

FIELD_TOL = 1e-10


@dataclass
class FieldSample:
    point: np.ndarray
    region: int
    u: np.ndarray
    near_boundary: bool = False


@nb.njit(cache=True, nogil=True)
def _layer_sums(mp, x, qp, qn, qw, u_q, t_q, bT, bL, sign_d, sign_s, out):
    """out += sign_d * sum T(x, y) u(y) w + sign_s * sum U(x, y) t(y) w."""
    need = np.array([True, True, False, False])
    buf = np.zeros(28, dtype=np.complex128)
    nx = np.zeros(2)
    for q in range(qp.shape[0]):
        for s in range(28):
            buf[s] = 0.0
        _point_kernels(mp, x[0] - qp[q, 0], x[1] - qp[q, 1], nx, qn[q], bT[q], bL[q], need, buf)
        w = qw[q]
        for i in range(2):
            acc = 0.0j
            for j in range(2):
                acc += sign_d * buf[4 + 2 * i + j] * u_q[q, j] + sign_s * buf[2 * i + j] * t_q[q, j]
            out[i] += w * acc


def _order(mat: Material, dist, hmax):
    a = 1.0 + 2.0 * max(dist, 1e-300) / hmax
    rho = a + math.sqrt(a * a - 1.0)
    n = math.ceil(-math.log(FIELD_TOL) / (2.0 * math.log(rho))) if rho > 1 else MAX_ORDER
    n = max(n, _osc_order(mat.kT * hmax, FIELD_TOL), 4)
    return min(n, MAX_ORDER - 1)


def evaluate_field(solution: BoundarySolution, mesh: BoundaryMesh, mat0: Material, mat1: Material,
                   incident: IncidentWave | None, points, regions=None) -> list:
    """Total displacement at ``points`` (scattered plus incident outside).

    Regions come from a winding-number test unless ``regions`` (0 outside,
    1 inside, per point) forces the representation to use.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    inside = mesh.contains(pts) if regions is None else np.asarray(regions, dtype=bool)
    dist = mesh.distance(pts)
    hmax = float(mesh.lengths.max())
    if np.any(dist <= 1e-12 * hmax):
        raise ValueError("observation point lies on the boundary")
    a = mesh.nodes
    b = np.roll(mesh.nodes, -1, axis=0)
    u = np.asarray(solution.u, dtype=complex)
    t = np.asarray(solution.t, dtype=complex)
    u_next = np.roll(u, -1, axis=0)
    cache = {}
    out = []
    for p, x in enumerate(pts):
        region = 1 if inside[p] else 0
        mat = mat1 if region else mat0
        near = bool(dist[p] < hmax)
        if near:
            log.warning("point %s lies within one element length of the boundary", x)
        n = _order(mat, dist[p], hmax)
        key = n
        if key not in cache:
            s = GX[n, :n]
            w = GW[n, :n]
            qp = (a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
            qw = (w[None, :] * mesh.lengths[:, None]).reshape(-1)
            qn = np.repeat(mesh.normals, n, axis=0)
            u_q = ((1 - s)[None, :, None] * u[:, None, :]
                   + s[None, :, None] * u_next[:, None, :]).reshape(-1, 2)
            t_q = np.repeat(t, n, axis=0)
            cache = {key: (qp, qw, qn, u_q, t_q)}
        qp, qw, qn, u_q, t_q = cache[key]
        r = np.hypot(*(x - qp).T)
        val = np.zeros(2, dtype=complex)
        sign_d, sign_s = (1.0, -1.0) if region else (-1.0, 1.0)
        _layer_sums(mat.params(), x, qp, np.ascontiguousarray(qn), qw, u_q, t_q,
                    bessel_table(mat.kT * r), bessel_table(mat.kL * r), sign_d, sign_s, val)
        if region == 0 and incident is not None:
            val = val + incident.displacement(mat0, x)
        out.append(FieldSample(point=x.copy(), region=region, u=val, near_boundary=near))
    return out
