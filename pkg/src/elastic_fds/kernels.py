"""Material data, Hankel functions and the in-plane elastodynamic kernels.

Conventions: time factor exp(-i omega t), ``x`` is the observation (test)
point, ``y`` the source (basis) point, and normals point into the inclusion.
Bessel values come from the Cephes routines shipped with SciPy; everything
built on top of them (the fundamental solution, its derivatives and the
traction kernels) is evaluated in closed form inside numba kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import special

EULER_GAMMA = 0.5772156649015329
_TWO_OVER_PI = 2.0 / math.pi

# kernel slots used throughout the assembly code
K_U, K_T, K_TS, K_W = 0, 1, 2, 3
KERNEL_NAMES = ("U", "T", "T*", "W")


@dataclass(frozen=True)
class Material:
    """Isotropic elastic medium at a fixed angular frequency."""

    lam: float
    mu: float
    rho: float
    omega: float

    def __post_init__(self):
        if not (self.mu > 0 and self.rho > 0 and self.omega > 0):
            raise ValueError("mu, rho and omega must be positive")
        if not self.lam + 2 * self.mu > 0:
            raise ValueError("lambda + 2 mu must be positive")

    @classmethod
    def from_speeds(cls, cL: float, cT: float, rho: float, omega: float) -> "Material":
        if not cL > cT > 0:
            raise ValueError("wave speeds must satisfy cL > cT > 0")
        mu = rho * cT**2
        return cls(lam=rho * cL**2 - 2 * mu, mu=mu, rho=rho, omega=omega)

    @property
    def cL(self) -> float:
        return math.sqrt((self.lam + 2 * self.mu) / self.rho)

    @property
    def cT(self) -> float:
        return math.sqrt(self.mu / self.rho)

    @property
    def kL(self) -> float:
        return self.omega / self.cL

    @property
    def kT(self) -> float:
        return self.omega / self.cT

    def with_rho(self, rho: float) -> "Material":
        """Same wave speeds, different density."""
        return Material.from_speeds(self.cL, self.cT, rho, self.omega)

    def params(self) -> np.ndarray:
        """Packed parameters consumed by the numba kernels."""
        return np.array([self.lam, self.mu, self.rho, self.omega, self.kT, self.kL,
                         self.rho * self.omega**2])

    def elastic_tensor(self) -> np.ndarray:
        d = np.eye(2)
        return (self.lam * np.einsum("ip,jq->ipjq", d, d)
                + self.mu * (np.einsum("ij,pq->ipjq", d, d) + np.einsum("iq,pj->ipjq", d, d)))


# ---------------------------------------------------------------------------
# Bessel / Hankel functions

@nb.vectorize(["float64(float64)"], cache=True)
def _y1_regular_series(z):
    """Y1(z) + 2/(pi z) from the ascending series, for 0 < z <= 1."""
    q = -0.25 * z * z
    half = 0.5 * z
    term = half              # (z/2)^(2k+1) (-1)^k / (k! (k+1)!)
    psi_sum = 2 * (-EULER_GAMMA) + 1.0    # psi(k+1) + psi(k+2) at k = 0
    acc = psi_sum * term
    j1 = term
    for k in range(1, 16):
        term = term * q / (k * (k + 1))
        psi_sum += 1.0 / k + 1.0 / (k + 1)
        acc = acc + psi_sum * term
        j1 = j1 + term
    return _TWO_OVER_PI * math.log(half) * j1 - acc / math.pi


def bessel_table(z) -> np.ndarray:
    """Columns J0, Y0, J1 and Y1 + 2/(pi z) evaluated at positive ``z``.

    The last column removes the 1/z pole of Y1 so that differences of
    Hankel functions at two wavenumbers can be formed without cancellation.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape + (4,))
    out[..., 0] = special.j0(z)
    out[..., 1] = special.y0(z)
    out[..., 2] = special.j1(z)
    small = z <= 1.0
    y1 = special.y1(z)
    with np.errstate(divide="ignore"):
        out[..., 3] = np.where(small, 0.0, y1 + _TWO_OVER_PI / z)
    if np.any(small):
        out[..., 3][small] = _y1_regular_series(z[small])
    return out


def hankel1(order: int, x):
    """Hankel function of the first kind H_order(x) for order 0 or 1, x > 0."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise ValueError("hankel1 requires a positive real argument")
    if order == 0:
        val = special.j0(x_arr) + 1j * special.y0(x_arr)
    elif order == 1:
        val = special.j1(x_arr) + 1j * special.y1(x_arr)
    else:
        raise ValueError("only orders 0 and 1 are supported")
    return val if np.ndim(x) else complex(val)


# ---------------------------------------------------------------------------
# pointwise kernels (numba)

@nb.njit(cache=True, inline="always", fastmath=True)
def _radial(mp, r, bT, bL):
    """Radial profiles of Phi_T, Phi_L and chi = Phi_T - Phi_L.

    Returns Phi_T, Phi_L, Phi_T', Phi_L', chi', chi'', chi''' (d/dr).
    """
    kT = mp[4]
    kL = mp[5]
    H0T = bT[0] + 1j * bT[1]
    H0L = bL[0] + 1j * bL[1]
    h1T = bT[2] + 1j * bT[3]
    h1L = bL[2] + 1j * bL[3]
    H1T = h1T - 2j / (math.pi * kT * r)
    H1L = h1L - 2j / (math.pi * kL * r)
    q = 0.25j
    phiT = q * H0T
    phiL = q * H0L
    dphiT = -q * kT * H1T
    dphiL = -q * kL * H1L
    ri = 1.0 / r
    chi1 = q * (-kT * h1T + kL * h1L)
    chi2 = q * (-kT * kT * H0T + kT * h1T * ri + kL * kL * H0L - kL * h1L * ri)
    chi3 = q * (kT**3 * H1T + kT * kT * H0T * ri - 2.0 * kT * h1T * ri * ri
                - kL**3 * H1L - kL * kL * H0L * ri + 2.0 * kL * h1L * ri * ri)
    return phiT, phiL, dphiT, dphiL, chi1, chi2, chi3


@nb.njit(cache=True, nogil=True, fastmath=True)
def _point_kernels(mp, zx, zy, nx, ny, bT, bL, need, out):
    """Evaluate kernel values for one point pair, offset z = x - y.

    ``need`` flags (U, T, T*, W).  ``out`` receives 28 complex numbers laid
    out as seven row-major 2x2 blocks: U, T, T*, Wa, Wby, Wbx, Wc, where the
    last four are the pieces of the regularized hypersingular form.

    With r_i the direction cosines, the gradient of G has the form
    d_k G_ij = P r_k d_ij + Q r_i r_j r_k + S (d_ik r_j + d_jk r_i).
    """
    lam = mp[0]
    mu = mp[1]
    kL = mp[5]
    rw2 = mp[6]
    r = math.sqrt(zx * zx + zy * zy)
    r0 = zx / r
    r1 = zy / r
    phiT, phiL, dphiT, dphiL, chi1, chi2, chi3 = _radial(mp, r, bT, bL)
    c1r = chi1 / r
    # second derivatives of chi
    d00 = chi2 * r0 * r0 + c1r * (1.0 - r0 * r0)
    d01 = (chi2 - c1r) * r0 * r1
    d11 = chi2 * r1 * r1 + c1r * (1.0 - r1 * r1)
    if need[0]:
        a = phiT / mu
        out[0] = a + d00 / rw2
        out[1] = d01 / rw2
        out[2] = d01 / rw2
        out[3] = a + d11 / rw2
    if need[1] or need[2]:
        aa = (chi2 - c1r) / r
        S = aa / rw2
        P = dphiT / mu + S
        Q = (chi3 - 3.0 * aa) / rw2
        c1 = lam * (P + Q + 3.0 * S)
        c2 = mu * (P + S)
        c3 = 2.0 * mu * Q
        c4 = 2.0 * mu * S
        if need[1]:
            rn = r0 * ny[0] + r1 * ny[1]
            q = c3 * rn
            dg = c2 * rn
            out[4] = -(c1 * r0 * ny[0] + dg + q * r0 * r0 + c2 * ny[0] * r0 + c4 * ny[0] * r0)
            out[5] = -(c1 * r0 * ny[1] + q * r0 * r1 + c2 * ny[0] * r1 + c4 * ny[1] * r0)
            out[6] = -(c1 * r1 * ny[0] + q * r1 * r0 + c2 * ny[1] * r0 + c4 * ny[0] * r1)
            out[7] = -(c1 * r1 * ny[1] + dg + q * r1 * r1 + c2 * ny[1] * r1 + c4 * ny[1] * r1)
        if need[2]:
            rn = r0 * nx[0] + r1 * nx[1]
            q = c3 * rn
            dg = c2 * rn
            out[8] = c1 * nx[0] * r0 + dg + q * r0 * r0 + c2 * r0 * nx[0] + c4 * nx[0] * r0
            out[9] = c1 * nx[0] * r1 + q * r0 * r1 + c2 * r0 * nx[1] + c4 * nx[0] * r1
            out[10] = c1 * nx[1] * r0 + q * r1 * r0 + c2 * r1 * nx[0] + c4 * nx[1] * r0
            out[11] = c1 * nx[1] * r1 + dg + q * r1 * r1 + c2 * r1 * nx[1] + c4 * nx[1] * r1
    if need[3]:
        tx0 = -nx[1]
        tx1 = nx[0]
        ty0 = -ny[1]
        ty1 = ny[0]
        gT0 = dphiT * r0
        gT1 = dphiT * r1
        # rotated gradient e_jd d_d Phi_L with e_12 = 1, e_21 = -1
        eL0 = dphiL * r1
        eL1 = -dphiL * r0
        out[12] = nx[0] * ny[0] * phiL + tx0 * ty0 * phiT
        out[13] = nx[0] * ny[1] * phiL + tx0 * ty1 * phiT
        out[14] = nx[1] * ny[0] * phiL + tx1 * ty0 * phiT
        out[15] = nx[1] * ny[1] * phiL + tx1 * ty1 * phiT
        out[16] = nx[0] * eL0 + tx0 * gT0
        out[17] = nx[0] * eL1 + tx0 * gT1
        out[18] = nx[1] * eL0 + tx1 * gT0
        out[19] = nx[1] * eL1 + tx1 * gT1
        out[20] = ty0 * gT0 + ny[0] * eL0
        out[21] = ty1 * gT0 + ny[1] * eL0
        out[22] = ty0 * gT1 + ny[0] * eL1
        out[23] = ty1 * gT1 + ny[1] * eL1
        kl2 = kL * kL * phiL
        out[24] = d00 - kl2
        out[25] = d01
        out[26] = d01
        out[27] = d11 - kl2


def _eval_point(mat: Material, x, y, nx, ny, need):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = x - y
    r = float(np.hypot(z[0], z[1]))
    if r == 0.0:
        raise ValueError("kernel evaluated at coincident points x = y")
    bT = bessel_table(mat.kT * r)
    bL = bessel_table(mat.kL * r)
    out = np.zeros(28, dtype=np.complex128)
    _point_kernels(mat.params(), z[0], z[1], np.asarray(nx, dtype=float),
                   np.asarray(ny, dtype=float), bT, bL, np.asarray(need, dtype=np.bool_), out)
    return out


def green_displacement(mat: Material, x, y) -> np.ndarray:
    """Displacement fundamental solution G_ij(x, y) as a 2x2 complex array."""
    zero = np.zeros(2)
    return _eval_point(mat, x, y, zero, zero, (True, False, False, False))[0:4].reshape(2, 2)


def kernel_T(mat: Material, x, y, ny) -> np.ndarray:
    """Double-layer integrand: traction of G with respect to y, normal ``ny``."""
    return _eval_point(mat, x, y, np.zeros(2), ny, (False, True, False, False))[4:8].reshape(2, 2)


def kernel_Tstar(mat: Material, x, y, nx) -> np.ndarray:
    """Adjoint double-layer integrand: traction of G with respect to x, normal ``nx``."""
    return _eval_point(mat, x, y, nx, np.zeros(2), (False, False, True, False))[8:12].reshape(2, 2)


def hypersingular_parts(mat: Material, x, y, nx, ny) -> dict:
    """Pointwise pieces of the regularized hypersingular bilinear form.

    With D the tangential derivative (tau = (-nu_2, nu_1)) acting on the test
    function v at x or the basis function u at y, the form reads

        rho w^2 <v Wa u> + 2 mu <v Wby Du> - 2 mu <Dv Wbx u>
        - (4 mu^2 / rho w^2) <Dv Wc Du>.
    """
    out = _eval_point(mat, x, y, nx, ny, (False, False, False, True))
    return {name: out[s:s + 4].reshape(2, 2)
            for name, s in (("Wa", 12), ("Wby", 16), ("Wbx", 20), ("Wc", 24))}
