"""Series solution for a plane P-wave scattered by a circular elastic inclusion.

The fields are written with Helmholtz potentials, u = grad(phi) + curl(psi e_z).
Per angular order n the incident potential is a Bessel term, the scattered
potentials in the background are outgoing Hankel terms and the refracted
potentials in the inclusion are Bessel terms; the four coefficients follow
from continuity of u_r, u_theta, sigma_rr and sigma_rtheta on r = a.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .kernels import Material


def _radial_columns(kind, n, k, r, mat: Material, use_hankel: bool):
    """Rows (u_r, u_theta, sigma_rr, sigma_rtheta) of a unit potential of order n.

    ``kind`` "P": phi = Z_n(k r) cos(n theta); "S": psi = Z_n(k r) sin(n theta).
    The angular factors (cos for u_r, sigma_rr; sin for u_theta, sigma_rtheta)
    are left out.
    """
    z = k * r
    if use_hankel:
        F = special.hankel1(n, z)
        dF = k * special.h1vp(n, z)
    else:
        F = special.jv(n, z)
        dF = k * special.jvp(n, z)
    lam, mu = mat.lam, mat.mu
    d2F = -dF / r - (k * k - n * n / r**2) * F
    if kind == "P":
        return np.array([dF, -n / r * F, -lam * k * k * F + 2 * mu * d2F,
                         2 * mu * n * (F / r**2 - dF / r)])
    return np.array([n / r * F, -dF, 2 * mu * n * (dF / r - F / r**2),
                     mu * (2 * dF / r + k * k * F - 2 * n * n * F / r**2)])


class AnalyticCircleSolution:
    """Mode-matching solution; the incident wave is u = exp(i kL0 x1) e_1."""

    def __init__(self, mat0: Material, mat1: Material, a: float = 1.0, n_max: int | None = None):
        self.mat0, self.mat1, self.a = mat0, mat1, a
        self.n_max = int(math.ceil(mat0.kL * a)) + 20 if n_max is None else int(n_max)
        k = (mat0.kL, mat0.kT, mat1.kL, mat1.kT)
        self.coeffs = np.zeros((self.n_max + 1, 4), dtype=complex)
        self.incident = np.zeros(self.n_max + 1, dtype=complex)
        for n in range(self.n_max + 1):
            eps = 1.0 if n == 0 else 2.0
            inc = eps * 1j**n / (1j * k[0])
            M = np.stack([
                _radial_columns("P", n, k[0], a, mat0, True),
                _radial_columns("S", n, k[1], a, mat0, True),
                -_radial_columns("P", n, k[2], a, mat1, False),
                -_radial_columns("S", n, k[3], a, mat1, False),
            ], axis=1)
            rhs = -inc * _radial_columns("P", n, k[0], a, mat0, False)
            if n == 0:
                # the S potential carries no order-0 field; keep the system regular
                M[:, 1] = 0.0
                M[:, 3] = 0.0
                M[1, 1] = M[3, 3] = 1.0
                rhs[1] = rhs[3] = 0.0
            # equilibrate: Hankel columns grow and Bessel columns decay with n
            rs = 1.0 / np.abs(M).max(axis=1)
            cs = 1.0 / np.abs(M * rs[:, None]).max(axis=0)
            Ms = M * rs[:, None] * cs[None, :]
            cond = np.linalg.cond(Ms)
            if not np.isfinite(cond) or cond > 1e13:
                raise np.linalg.LinAlgError(f"mode system singular at order {n}")
            self.coeffs[n] = cs * np.linalg.solve(Ms, rs * rhs)
            self.incident[n] = inc

    def _polar(self, r, theta, region, parts=("inc", "sca")):
        """(u_r, u_theta, sigma_rr, sigma_rtheta) at polar points of one region."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r, theta = np.broadcast_arrays(r, theta)
        out = np.zeros((4,) + r.shape, dtype=complex)
        m0, m1 = self.mat0, self.mat1
        for n in range(self.n_max + 1):
            A, B, C, D = self.coeffs[n]
            c, s = np.cos(n * theta), np.sin(n * theta)
            if region == 0:
                col = 0
                if "sca" in parts:
                    col = A * _radial_columns("P", n, m0.kL, r, m0, True)
                    if n:
                        col = col + B * _radial_columns("S", n, m0.kT, r, m0, True)
                if "inc" in parts:
                    col = col + self.incident[n] * _radial_columns("P", n, m0.kL, r, m0, False)
            else:
                col = C * _radial_columns("P", n, m1.kL, r, m1, False)
                if n:
                    col = col + D * _radial_columns("S", n, m1.kT, r, m1, False)
            out += col * np.stack([c, s, c, s])
        return out

    @staticmethod
    def _to_cartesian(vr, vt, theta):
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([vr * c - vt * s, vr * s + vt * c], axis=-1)

    def boundary_displacement(self, theta, side: int = 0) -> np.ndarray:
        """Displacement on r = a at angles ``theta`` (Cartesian components)."""
        p = self._polar(self.a, theta, side)
        return self._to_cartesian(p[0], p[1], np.asarray(theta, dtype=float))

    def boundary_traction(self, theta, side: int = 0) -> np.ndarray:
        """Traction on r = a for the normal pointing into the inclusion."""
        p = self._polar(self.a, theta, side)
        return -self._to_cartesian(p[2], p[3], np.asarray(theta, dtype=float))

    def displacement(self, points, parts=("inc", "sca")) -> np.ndarray:
        """Total displacement at Cartesian points (scattered only if parts=("sca",))."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        out = np.zeros((len(pts), 2), dtype=complex)
        for region, mask in ((0, r > self.a), (1, r <= self.a)):
            if mask.any():
                p = self._polar(r[mask], th[mask], region, parts)
                out[mask] = self._to_cartesian(p[0], p[1], th[mask])
        return out

    def continuity_residual(self, theta) -> float:
        """Max relative jump of (u_r, u_theta, sigma_rr, sigma_rtheta) across r = a."""
        outer = self._polar(self.a, theta, 0)
        inner = self._polar(self.a, theta, 1)
        scale = np.abs(outer).max(axis=1, keepdims=True)
        return float(np.max(np.abs(outer - inner) / scale))


def analytic_circle_solution(mat0: Material, mat1: Material, omega: float | None = None,
                             a: float = 1.0, n_max: int | None = None) -> AnalyticCircleSolution:
    if omega is not None and (abs(mat0.omega - omega) > 1e-12 * omega
                              or abs(mat1.omega - omega) > 1e-12 * omega):
        raise ValueError("omega does not match the materials")
    return AnalyticCircleSolution(mat0, mat1, a, n_max)
