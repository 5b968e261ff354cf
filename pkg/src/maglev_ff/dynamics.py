"""Closed-form rigid-body model of the levitated plate.

Equations of motion::

    M(q) qddot + C(q, qdot) qdot = W - D qdot

The mass matrix depends on the pitch/yaw angles ``chi`` and ``psi`` only, so
every partial derivative except the ``chi`` and ``psi`` ones vanishes.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SingularMass
from .params import CHI, PSI, GeneralizedState, PlantParams


def mass_matrix(q, params: PlantParams) -> np.ndarray:
    chi, psi = q[CHI], q[PSI]
    s_chi, c_chi = math.sin(chi), math.cos(chi)
    s_psi, c_psi = math.sin(psi), math.cos(psi)
    Ix, Iy, Iz = params.I_chi, params.I_psi, params.I_zeta

    a1 = math.sin(2.0 * chi) * c_psi * (Iy - Iz) / 2.0
    a2 = -Ix * s_psi
    a3 = c_psi**2 * (Iz * c_chi**2 + Iy * s_chi**2) + Ix * s_psi**2

    M = np.zeros((6, 6))
    M[0, 0] = M[1, 1] = M[2, 2] = params.m
    M[3, 3] = Ix
    M[4, 4] = Iy * c_chi**2 + Iz * s_chi**2
    M[5, 5] = a3
    M[3, 5] = M[5, 3] = a2
    M[4, 5] = M[5, 4] = a1
    return M


def mass_matrix_partials(q, params: PlantParams) -> np.ndarray:
    """``dM[k] = dM/dq_k``, shape (6, 6, 6)."""
    chi, psi = q[CHI], q[PSI]
    s2chi, c2chi = math.sin(2.0 * chi), math.cos(2.0 * chi)
    s_chi, c_chi = math.sin(chi), math.cos(chi)
    s_psi, c_psi = math.sin(psi), math.cos(psi)
    s2psi = math.sin(2.0 * psi)
    Ix, Iy, Iz = params.I_chi, params.I_psi, params.I_zeta

    dM = np.zeros((6, 6, 6))

    d = dM[CHI]
    d[4, 4] = (Iz - Iy) * s2chi
    d[4, 5] = d[5, 4] = c2chi * c_psi * (Iy - Iz)
    d[5, 5] = c_psi**2 * (Iy - Iz) * s2chi

    d = dM[PSI]
    d[3, 5] = d[5, 3] = -Ix * c_psi
    d[4, 5] = d[5, 4] = -s2chi * s_psi * (Iy - Iz) / 2.0
    d[5, 5] = -s2psi * (Iz * c_chi**2 + Iy * s_chi**2) + Ix * s2psi
    return dM


def christoffel(q, params: PlantParams) -> np.ndarray:
    """Christoffel symbols of the first kind, ``G[i, j, k]``."""
    dM = mass_matrix_partials(q, params)
    # dM[k, i, j] = dM_ij / dq_k
    return 0.5 * (
        dM.transpose(1, 2, 0) + dM.transpose(1, 0, 2) - dM.transpose(0, 2, 1)
    )


def coriolis_matrix(q, qdot, params: PlantParams) -> np.ndarray:
    return christoffel(q, params) @ np.asarray(qdot, dtype=float)


def mass_matrix_rate(q, qdot, params: PlantParams) -> np.ndarray:
    return np.tensordot(np.asarray(qdot, dtype=float), mass_matrix_partials(q, params), axes=1)


def leading_minors(q, params: PlantParams) -> np.ndarray:
    """Closed-form leading principal minors of M(q), orders 1..6."""
    chi, psi = q[CHI], q[PSI]
    m, Ix, Iy, Iz = params.m, params.I_chi, params.I_psi, params.I_zeta
    m3 = m**3
    return np.array([
        m,
        m**2,
        m3,
        Ix * m3,
        Ix * m3 * (Iy * math.cos(chi) ** 2 + Iz * math.sin(chi) ** 2),
        m3 * Ix * Iy * Iz * math.cos(psi) ** 2,
    ])


# minors are compared against the same minor at zero angles; below this ratio
# (|psi| within about 1e-6 rad of pi/2) the matrix is treated as singular
PD_RTOL = 1e-12


def is_mass_pd(q, params: PlantParams) -> tuple[bool, np.ndarray]:
    """Sylvester test on the closed-form minors, with a relative floor."""
    minors = leading_minors(q, params)
    scale = np.cumprod(params.rigid_inertia)
    return bool(np.all(minors > PD_RTOL * scale)), minors


def forward_dynamics(state: GeneralizedState, W, params: PlantParams) -> np.ndarray:
    """Accelerations from ``M qddot = W - (C + D) qdot``."""
    return accelerations(state.q, state.qdot, W, params)


def accelerations(q, qdot, W, params: PlantParams) -> np.ndarray:
    ok, minors = is_mass_pd(q, params)
    if not ok:
        raise SingularMass(f"mass matrix not positive definite at psi={q[PSI]!r} (minors {minors})")
    M = mass_matrix(q, params)
    rhs = np.asarray(W, dtype=float) - coriolis_matrix(q, qdot, params) @ qdot - np.multiply(params.c, qdot)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMass(str(exc)) from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def kinetic_energy(q, qdot, params: PlantParams) -> float:
    return 0.5 * float(qdot @ mass_matrix(q, params) @ qdot)


__all__ = [
    "mass_matrix",
    "mass_matrix_partials",
    "christoffel",
    "coriolis_matrix",
    "mass_matrix_rate",
    "leading_minors",
    "is_mass_pd",
    "forward_dynamics",
    "accelerations",
    "kinetic_energy",
]
