"""Compiled inner-loop kernels for the simulator.

These evaluate the same model as :mod:`maglev_ff.dynamics` without forming
the Christoffel tensor: only the rotational 3x3 block of ``M`` is non-trivial,
and ``C(q, qdot) v`` is assembled from the two nonzero mass-matrix partials::

    C(q, qdot) v = 1/2 (Mdot(qdot) v + Mdot(v) qdot - [v' dM/dq_i qdot]_i)

The test-suite checks every kernel against the reference implementation.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def rot_blocks(chi, psi, Ix, Iy, Iz):
    """Rotational block of M and of its chi/psi partials (indices 3..5)."""
    s_chi = math.sin(chi)
    c_chi = math.cos(chi)
    s_psi = math.sin(psi)
    c_psi = math.cos(psi)
    s2chi = math.sin(2.0 * chi)
    c2chi = math.cos(2.0 * chi)
    s2psi = math.sin(2.0 * psi)
    dI = Iy - Iz

    M = np.zeros((3, 3))
    M[0, 0] = Ix
    M[1, 1] = Iy * c_chi * c_chi + Iz * s_chi * s_chi
    M[2, 2] = c_psi * c_psi * (Iz * c_chi * c_chi + Iy * s_chi * s_chi) + Ix * s_psi * s_psi
    M[0, 2] = M[2, 0] = -Ix * s_psi
    M[1, 2] = M[2, 1] = s2chi * c_psi * dI / 2.0

    Mc = np.zeros((3, 3))
    Mc[1, 1] = -dI * s2chi
    Mc[1, 2] = Mc[2, 1] = c2chi * c_psi * dI
    Mc[2, 2] = c_psi * c_psi * dI * s2chi

    Mp = np.zeros((3, 3))
    Mp[0, 2] = Mp[2, 0] = -Ix * c_psi
    Mp[1, 2] = Mp[2, 1] = -s2chi * s_psi * dI / 2.0
    Mp[2, 2] = -s2psi * (Iz * c_chi * c_chi + Iy * s_chi * s_chi) + Ix * s2psi
    return M, Mc, Mp


@njit(cache=True)
def _coriolis_rot(Mc, Mp, w, v):
    # C(q, w) v restricted to the rotational rows; w, v are rotational 3-vectors
    Mdot_w = Mc * w[0] + Mp * w[1]
    Mdot_v = Mc * v[0] + Mp * v[1]
    out = 0.5 * (Mdot_w @ v + Mdot_v @ w)
    out[0] -= 0.5 * (v @ (Mc @ w))
    out[1] -= 0.5 * (v @ (Mp @ w))
    return out


@njit(cache=True)
def coriolis_apply(q, qdot, v, Ix, Iy, Iz):
    """``C(q, qdot) @ v`` as a 6-vector."""
    M, Mc, Mp = rot_blocks(q[3], q[4], Ix, Iy, Iz)
    w = np.empty(3)
    u = np.empty(3)
    for i in range(3):
        w[i] = qdot[3 + i]
        u[i] = v[3 + i]
    out = np.zeros(6)
    rot = _coriolis_rot(Mc, Mp, w, u)
    for i in range(3):
        out[3 + i] = rot[i]
    return out


@njit(cache=True)
def mass_apply(q, v, m, Ix, Iy, Iz):
    """``M(q) @ v``."""
    M, Mc, Mp = rot_blocks(q[3], q[4], Ix, Iy, Iz)
    out = np.empty(6)
    for i in range(3):
        out[i] = m * v[i]
    for i in range(3):
        acc = 0.0
        for j in range(3):
            acc += M[i, j] * v[3 + j]
        out[3 + i] = acc
    return out


@njit(cache=True)
def inverse_dynamics(q, qdot, qddot, vel, m, Ix, Iy, Iz, c):
    """``M(q) qddot + C(q, qdot) vel + D vel``."""
    out = mass_apply(q, qddot, m, Ix, Iy, Iz) + coriolis_apply(q, qdot, vel, Ix, Iy, Iz)
    for i in range(6):
        out[i] += c[i] * vel[i]
    return out


@njit(cache=True)
def accel(q, qdot, W, m, Ix, Iy, Iz, c):
    """Solve ``M qddot = W - (C + D) qdot``; NaNs signal a non-PD rotational block."""
    M, Mc, Mp = rot_blocks(q[3], q[4], Ix, Iy, Iz)
    w = np.empty(3)
    for i in range(3):
        w[i] = qdot[3 + i]
    cor = _coriolis_rot(Mc, Mp, w, w)
    out = np.empty(6)
    for i in range(3):
        out[i] = (W[i] - c[i] * qdot[i]) / m
    b = np.empty(3)
    for i in range(3):
        b[i] = W[3 + i] - cor[i] - c[3 + i] * qdot[3 + i]
    # Cholesky of the 3x3 rotational block
    l00 = M[0, 0]
    if l00 <= 0.0:
        out[:] = np.nan
        return out
    l00 = math.sqrt(l00)
    l10 = M[1, 0] / l00
    l20 = M[2, 0] / l00
    d11 = M[1, 1] - l10 * l10
    if d11 <= 0.0:
        out[:] = np.nan
        return out
    l11 = math.sqrt(d11)
    l21 = (M[2, 1] - l20 * l10) / l11
    d22 = M[2, 2] - l20 * l20 - l21 * l21
    if d22 <= 0.0:
        out[:] = np.nan
        return out
    l22 = math.sqrt(d22)
    y0 = b[0] / l00
    y1 = (b[1] - l10 * y0) / l11
    y2 = (b[2] - l20 * y0 - l21 * y1) / l22
    x2 = y2 / l22
    x1 = (y1 - l21 * x2) / l11
    x0 = (y0 - l10 * x1 - l20 * x2) / l00
    out[3] = x0
    out[4] = x1
    out[5] = x2
    return out
