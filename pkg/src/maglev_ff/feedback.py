"""Decentralized feedback and numerical Lyapunov verification.

Controllers take the control error ``r - q`` (and its rate) and return a
wrench.  The Lyapunov helpers work with the tracking error ``e = q - r``; the
quadratic forms do not depend on the sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import coriolis_matrix, is_mass_pd, mass_matrix, mass_matrix_rate
from .errors import NoFeasibleEpsilon, ShapeMismatch, SingularMass
from .params import GeneralizedState, PlantParams

DEFAULT_BANDWIDTH = 2 * np.pi * 50.0


@dataclass(frozen=True)
class PidGains:
    kp: tuple[float, ...]
    ki: tuple[float, ...]
    kd: tuple[float, ...]
    omega_f: tuple[float, ...]

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "omega_f"):
            vals = tuple(float(v) for v in np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (6,)))
            object.__setattr__(self, name, vals)
        if min(self.kp + self.ki + self.kd) < 0:
            raise ValueError("PID gains must be non-negative")
        if min(self.omega_f) <= 0:
            raise ValueError("derivative filter cutoff must be positive")

    @classmethod
    def loop_shaped(cls, params: PlantParams, omega_c: float = DEFAULT_BANDWIDTH, zeta: float = 0.7) -> PidGains:
        """Inertia-scaled PID placing the crossover near ``omega_c``."""
        inertia = params.rigid_inertia
        kp = inertia * omega_c**2
        return cls(tuple(kp), tuple(kp * omega_c / 10.0), tuple(2 * zeta * inertia * omega_c), (10 * omega_c,) * 6)


@njit(cache=True)
def pid_update(e, integ, prev_e, deriv, kp, ki, kd, tau, dt, first):
    """One PID sample; updates ``integ``, ``prev_e`` and ``deriv`` in place.

    Trapezoidal integral, backward-Euler filtered derivative
    ``d_k = (tau d_{k-1} + e_k - e_{k-1}) / (tau + dt)``.  On the first call
    the previous error is taken equal to the current one, so neither the
    integral nor the derivative kicks.
    """
    u = np.empty(6)
    for i in range(6):
        if first:
            prev_e[i] = e[i]
        else:
            integ[i] += 0.5 * dt * (e[i] + prev_e[i])
        deriv[i] = (tau[i] * deriv[i] + e[i] - prev_e[i]) / (tau[i] + dt)
        prev_e[i] = e[i]
        u[i] = kp[i] * e[i] + ki[i] * integ[i] + kd[i] * deriv[i]
    return u


class PidController:
    """Six decoupled PID channels with their own integrator/filter state."""

    def __init__(self, gains: PidGains):
        self.gains = gains
        self._kp = np.array(gains.kp)
        self._ki = np.array(gains.ki)
        self._kd = np.array(gains.kd)
        self._tau = 1.0 / np.array(gains.omega_f)
        self.reset()

    def reset(self) -> None:
        self.integ = np.zeros(6)
        self.prev_e = np.zeros(6)
        self.deriv = np.zeros(6)
        self.started = False

    def step(self, e, dt: float) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be positive")
        u = pid_update(
            np.asarray(e, dtype=float), self.integ, self.prev_e, self.deriv,
            self._kp, self._ki, self._kd, self._tau, dt, not self.started,
        )
        self.started = True
        return u


def pid_step(e, controller: PidController, dt: float) -> np.ndarray:
    return controller.step(e, dt)


@dataclass(frozen=True)
class ProportionalController:
    """``u = Kp (r - q) + Kv (rdot - qdot)``; Kv is the optional derivative term."""

    Kp: np.ndarray
    Kv: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))

    def __post_init__(self):
        object.__setattr__(self, "Kp", _as_gain_matrix(self.Kp, "Kp"))
        object.__setattr__(self, "Kv", _as_gain_matrix(self.Kv, "Kv", allow_zero=True))

    def __call__(self, err, err_rate) -> np.ndarray:
        return self.Kp @ np.asarray(err, dtype=float) + self.Kv @ np.asarray(err_rate, dtype=float)


def _as_gain_matrix(K, name, allow_zero=False) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim == 1:
        K = np.diag(np.broadcast_to(K, (6,)))
    if K.shape != (6, 6):
        raise ShapeMismatch(f"{name} must be 6x6 or a 6-vector diagonal, got {K.shape}")
    if not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(K)
    if allow_zero:
        if eig.min() < -1e-12 * max(1.0, eig.max()):
            raise ValueError(f"{name} must be positive semi-definite")
    elif eig.min() <= 0:
        raise ValueError(f"{name} must be positive definite (smallest eigenvalue {eig.min():.3g})")
    return K


# ---------------------------------------------------------------------------
# Lyapunov analysis


@dataclass(frozen=True)
class LyapunovConfig:
    Kp: np.ndarray
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "Kp", _as_gain_matrix(self.Kp, "Kp"))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def _pd_mass(q, params):
    ok, minors = is_mass_pd(q, params)
    if not ok:
        raise SingularMass(f"mass matrix not positive definite (minors {minors})")
    return mass_matrix(q, params)


def lyapunov_matrix(q, cfg: LyapunovConfig, params: PlantParams) -> np.ndarray:
    M = _pd_mass(q, params)
    return np.block([[cfg.Kp, cfg.epsilon * M], [cfg.epsilon * M, M]])


def lyapunov_value(e, edot, q, cfg: LyapunovConfig, params: PlantParams) -> float:
    x = np.concatenate([np.asarray(e, dtype=float), np.asarray(edot, dtype=float)])
    return 0.5 * float(x @ lyapunov_matrix(q, cfg, params) @ x)


def rate_matrix(state: GeneralizedState, cfg: LyapunovConfig, params: PlantParams, Kv=None, form: str = "exact"):
    """Symmetric ``Q`` with ``Vdot = [e; edot]' Q [e; edot]``.

    Along the error dynamics ``M e'' + (C + D + Kv) e' + Kp e = 0`` the exact
    cross block is ``eps/2 (C' - D_eff)``.  ``form="symmetric-rate"`` uses
    ``eps/2 (Mdot/2 - D_eff)`` instead, which drops the skew part of the
    bilinear term (see the decisions ledger).
    """
    M = _pd_mass(state.q, params)
    D_eff = params.D + (np.zeros((6, 6)) if Kv is None else _as_gain_matrix(Kv, "Kv", allow_zero=True))
    eps = cfg.epsilon
    if form == "exact":
        X = coriolis_matrix(state.q, state.qdot, params).T - D_eff
    elif form == "symmetric-rate":
        X = 0.5 * mass_matrix_rate(state.q, state.qdot, params) - D_eff
    else:
        raise ValueError(f"form must be 'exact' or 'symmetric-rate', got {form!r}")
    return np.block([[-eps * cfg.Kp, 0.5 * eps * X], [0.5 * eps * X.T, eps * M - D_eff]])


def lyapunov_rate(e, edot, state: GeneralizedState, cfg: LyapunovConfig, params: PlantParams, Kv=None, form="exact"):
    x = np.concatenate([np.asarray(e, dtype=float), np.asarray(edot, dtype=float)])
    return float(x @ rate_matrix(state, cfg, params, Kv, form) @ x)


def schur_pd_check(A, B, C, D, epsilon) -> bool:
    """Positive definiteness of ``N = [[eps A, eps B], [eps B', C - eps D]]``.

    Uses the Schur complement: ``eps A > 0`` and ``C - eps (D + B' A^-1 B) > 0``.
    Inputs may carry a leading batch axis; the result is then a boolean array.
    """
    A, B, C, D = (np.asarray(X, dtype=float) for X in (A, B, C, D))
    n, m = A.shape[-1], C.shape[-1]
    if A.shape[-2:] != (n, n) or B.shape[-2:] != (n, m) or C.shape[-2:] != (m, m) or D.shape[-2:] != (m, m):
        raise ShapeMismatch(f"incompatible block shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
    eps = float(epsilon)
    if eps <= 0:
        return np.zeros(np.broadcast_shapes(A.shape[:-2], C.shape[:-2]), dtype=bool) if A.ndim > 2 else False
    ok_a = np.linalg.eigvalsh(eps * A).min(axis=-1) > 0
    AinvB = np.linalg.solve(A, B)
    S = C - eps * (D + np.swapaxes(B, -1, -2) @ AinvB)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    ok_s = np.linalg.eigvalsh(S).min(axis=-1) > 0
    res = ok_a & ok_s
    return bool(res) if np.ndim(res) == 0 else res


def block_matrix(A, B, C, D, epsilon) -> np.ndarray:
    eps = float(epsilon)
    return np.block([[eps * A, eps * B], [eps * np.swapaxes(B, -1, -2), C - eps * D]])


@dataclass(frozen=True)
class EpsilonSearch:
    epsilon: float  # largest feasible value found
    report_epsilon: float  # strictly interior value used for V / Vdot reports
    iterations: int


def _sample_blocks(qs, qdots, params, Kp, Kv):
    from .dynamics import christoffel

    n = len(qs)
    M = np.array([mass_matrix(q, params) for q in qs])
    Cm = np.array([christoffel(q, params) @ qd for q, qd in zip(qs, qdots)])
    D_eff = np.broadcast_to(params.D + Kv, (n, 6, 6))
    B = 0.5 * (D_eff - np.swapaxes(Cm, -1, -2))
    return M, B, D_eff


def feasible(eps, M, B, D_eff, Kp) -> bool:
    """Both Lyapunov conditions at every sample."""
    v_ok = schur_pd_check(Kp, M, M, np.zeros_like(M), eps * eps)
    r_ok = schur_pd_check(np.broadcast_to(Kp, M.shape), B, D_eff, M, eps)
    return bool(np.all(v_ok) and np.all(r_ok))


def find_epsilon(samples, Kp, params: PlantParams, Kv=None, eps_max: float = 1e3, rtol: float = 1e-6) -> EpsilonSearch:
    """Largest cross-term weight making V positive and -Vdot positive at all samples.

    ``samples`` is an iterable of :class:`GeneralizedState` (or an (N, 12)
    array of ``(q, qdot)``) along a closed-loop run.  The feasible set is an
    interval ``(0, eps*]`` because both Schur complements decrease
    monotonically in eps, so a geometric bisection applies.
    """
    Kp = _as_gain_matrix(Kp, "Kp")
    Kv = np.zeros((6, 6)) if Kv is None else _as_gain_matrix(Kv, "Kv", allow_zero=True)
    if isinstance(samples, np.ndarray):
        qs, qdots = samples[:, :6], samples[:, 6:12]
    else:
        samples = list(samples)
        qs = np.array([s.q for s in samples])
        qdots = np.array([s.qdot for s in samples])
    for q in qs:
        ok, minors = is_mass_pd(q, params)
        if not ok:
            raise SingularMass(f"sample outside the positive-definite region (minors {minors})")
    M, B, D_eff = _sample_blocks(qs, qdots, params, Kp, Kv)

    it = 0
    if feasible(eps_max, M, B, D_eff, Kp):
        return EpsilonSearch(eps_max, 0.5 * eps_max, 0)
    lo = eps_max
    while not feasible(lo, M, B, D_eff, Kp):
        lo *= 0.5
        it += 1
        if lo < 1e-14:
            raise NoFeasibleEpsilon(
                "no eps > 0 makes V and -Vdot positive definite at all samples; "
                "check that D + Kv is positive definite"
            )
    hi = 2.0 * lo
    while hi / lo > 1 + rtol:
        mid = np.sqrt(lo * hi)
        if feasible(mid, M, B, D_eff, Kp):
            lo = mid
        else:
            hi = mid
        it += 1
    return EpsilonSearch(lo, 0.5 * lo, it)
