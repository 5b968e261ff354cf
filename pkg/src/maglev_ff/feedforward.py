"""Feedforward strategies.

Each strategy maps reference signals (and, for some, the measured plant state)
to a wrench.  The pure functions at the top implement the individual laws; the
``FeedforwardMethod`` adaptors at the bottom give them the common per-stage
interface used by the simulator, including the internal state of the
inversion-based realizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import coriolis_matrix, is_mass_pd, mass_matrix
from .errors import RankDeficientInput, RelativeDegreeViolation, SingularMass
from .lpv import AffineMatrixFamily, DescriptorLpvModel, LocalLpvModel
from .params import PSI, GeneralizedState, PlantParams
from .scheduling import SchedulingPoint

PINV_RTOL = 1e-10
RELATIVE_DEGREE = 2


@dataclass(frozen=True)
class ReferenceSample:
    r: np.ndarray
    rdot: np.ndarray
    rddot: np.ndarray

    def __post_init__(self):
        for name in ("r", "rdot", "rddot"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(6))


@dataclass(frozen=True)
class FeedforwardInput:
    reference: ReferenceSample
    measured: GeneralizedState | None = None
    scheduling: SchedulingPoint | None = None

    def require(self, *fields: str) -> None:
        missing = [f for f in fields if getattr(self, f) is None]
        if missing:
            raise ValueError(f"feedforward input lacks required field(s): {', '.join(missing)}")


def checked_pinv(mat, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose inverse that refuses numerically rank-deficient input."""
    mat = np.asarray(mat, dtype=float)
    U, s, Vt = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[-1] <= rtol * s[0]:
        smin = s[-1] if s.size else 0.0
        raise RankDeficientInput(f"smallest singular value {smin:.3e} below {rtol:g} x largest")
    return (Vt.T / s) @ U.T


def _check_pd(q, params):
    ok, minors = is_mass_pd(q, params)
    if not ok:
        raise SingularMass(f"mass matrix not positive definite at psi={q[PSI]!r} (minors {minors})")


# ---------------------------------------------------------------------------
# stateless laws


def ff_mass(ref: ReferenceSample, params: PlantParams) -> np.ndarray:
    return params.rigid_inertia * ref.rddot


def steady_state_decoupler(G0) -> np.ndarray:
    """Right inverse of the steady-state gain, ``G0 @ Q2 = I``."""
    G0 = np.asarray(G0, dtype=float)
    if G0.ndim != 2 or G0.shape[0] > G0.shape[1]:
        raise RankDeficientInput(f"G0 of shape {G0.shape} cannot have full row rank")
    return checked_pinv(G0)


def local_annihilator(model: LocalLpvModel, p) -> np.ndarray:
    """``Q1 = B(p)^+ Btilde`` with ``Btilde`` selecting the acceleration rows."""
    Btilde = np.zeros((model.n_x, model.n_u))
    Btilde[6:] = np.eye(model.n_u)
    return checked_pinv(model.B(p)) @ Btilde


def ff_annihilation(
    inp: FeedforwardInput,
    mode: str,
    params: PlantParams,
    local_model: LocalLpvModel | None = None,
    Q2=None,
) -> np.ndarray:
    """``u = Q1 Q2 F rddot`` with ``F = I``; ``Q2`` defaults to the identity."""
    rdd = inp.reference.rddot
    if Q2 is not None:
        rdd = np.asarray(Q2, dtype=float) @ rdd
    if mode == "global":
        inp.require("measured")
        q = inp.measured.q
        _check_pd(q, params)
        return mass_matrix(q, params) @ rdd
    if mode == "local":
        inp.require("scheduling")
        model = local_model if local_model is not None else _default_local(params)
        return local_annihilator(model, inp.scheduling.p) @ rdd
    raise ValueError(f"annihilation mode must be 'global' or 'local', got {mode!r}")


def _default_local(params):
    from .lpv import build_local_model

    return build_local_model(params)


def ff_nonlinear(ref: ReferenceSample, params: PlantParams) -> np.ndarray:
    """Rigid-body inverse dynamics evaluated along the reference."""
    _check_pd(ref.r, params)
    return (
        mass_matrix(ref.r, params) @ ref.rddot
        + coriolis_matrix(ref.r, ref.rdot, params) @ ref.rdot
        + params.D @ ref.rdot
    )


def ff_global_lpv_ic(inp: FeedforwardInput, params: PlantParams) -> np.ndarray:
    """Inverse dynamics with the matrices evaluated at the measured state."""
    inp.require("measured")
    q, qd = inp.measured.q, inp.measured.qdot
    ref = inp.reference
    _check_pd(q, params)
    return mass_matrix(q, params) @ ref.rddot + coriolis_matrix(q, qd, params) @ ref.rdot + params.D @ ref.rdot


# ---------------------------------------------------------------------------
# inversion-based realizations


def _family_arrays(fam: AffineMatrixFamily):
    stack = np.array([fam.base] + [m for _, m in fam.terms])
    idx = np.array([i for i, _ in fam.terms], dtype=np.int64)
    return stack, idx


@njit(cache=True)
def _fam_eval(stack, idx, pk, k):
    out = stack[0] * (1.0 if k == 0 else 0.0)
    for t in range(idx.shape[0]):
        w = pk[idx[t]]
        if w != 0.0:
            term = stack[1 + t]
            for i in range(out.shape[0]):
                for j in range(out.shape[1]):
                    out[i, j] += w * term[i, j]
    return out


@njit(cache=True)
def _mm(A, B):
    # explicit loops beat BLAS dispatch for these 6..18-sized products
    n, m = A.shape
    p = B.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for k in range(m):
            a = A[i, k]
            if a != 0.0:
                for j in range(p):
                    out[i, j] += a * B[k, j]
    return out


@njit(cache=True)
def _binom(n, k):
    r = 1.0
    for i in range(k):
        r = r * (n - i) / (i + 1)
    return r


@njit(cache=True)
def _derivative_stack(Es, Ei, As, Ai, Bs, Bi, Cs, Ci, pj, n):
    """Coefficients of ``y^[k] = Ex_k x + Fu_k [u; u'; ...; u^[n]]`` for k = 0..n.

    ``pj[k]`` is the k-th derivative of the scheduling vector.  Returns the
    x- and U-coefficient arrays of every output derivative and ``E(p)``.
    """
    nx = Es.shape[1]
    nu = Bs.shape[2]
    ny = Cs.shape[1]
    nU = nu * (n + 1)
    Ed = np.empty((n + 1, nx, nx))
    Ad = np.empty((n + 1, nx, nx))
    Bd = np.empty((n + 1, nx, nu))
    Cd = np.empty((n + 1, ny, nx))
    for k in range(n + 1):
        Ed[k] = _fam_eval(Es, Ei, pj[k], k)
        Ad[k] = _fam_eval(As, Ai, pj[k], k)
        Bd[k] = _fam_eval(Bs, Bi, pj[k], k)
        Cd[k] = _fam_eval(Cs, Ci, pj[k], k)
    # derivatives of E^-1 via d(E^-1)/dt = -E^-1 Edot E^-1 and its Leibniz extension
    Eid = np.empty((n, nx, nx))
    Eid[0] = np.linalg.inv(Ed[0])
    for j in range(1, n):
        acc = np.zeros((nx, nx))
        for k in range(j):
            acc += _binom(j, k) * _mm(Ed[j - k], Eid[k])
        Eid[j] = -_mm(Eid[0], acc)
    # x^[k] = Px[k] x + Pu[k] U,  z^[j] = Zx[j] x + Zu[j] U
    Px = np.zeros((n + 1, nx, nx))
    Pu = np.zeros((n + 1, nx, nU))
    Zx = np.zeros((n, nx, nx))
    Zu = np.zeros((n, nx, nU))
    for i in range(nx):
        Px[0, i, i] = 1.0
    for k in range(1, n + 1):
        j = k - 1
        for i in range(j + 1):
            c = _binom(j, i)
            Zx[j] += c * _mm(Ad[j - i], Px[i])
            Zu[j] += c * _mm(Ad[j - i], Pu[i])
            Zu[j, :, i * nu : (i + 1) * nu] += c * Bd[j - i]
        for jj in range(k):
            c = _binom(k - 1, jj)
            Px[k] += c * _mm(Eid[k - 1 - jj], Zx[jj])
            Pu[k] += c * _mm(Eid[k - 1 - jj], Zu[jj])
    Yx = np.zeros((n + 1, ny, nx))
    Yu = np.zeros((n + 1, ny, nU))
    for m in range(n + 1):
        for k in range(m + 1):
            c = _binom(m, k)
            Yx[m] += c * _mm(Cd[m - k], Px[k])
            Yu[m] += c * _mm(Cd[m - k], Pu[k])
    return Yx, Yu, Ed[0], Ad[0], Bd[0]


@njit(cache=True)
def _inverse_eval(Es, Ei, As, Ai, Bs, Bi, Cs, Ci, pj, n, x_ref, y_n, rtol):
    """State derivative and output of the inverse system at one instant.

    Status codes: 0 ok, 1 rank-deficient input matrix, 2 relative degree
    violated (input visible below order n or through its own derivatives).
    """
    Yx, Yu, E, A, B = _derivative_stack(Es, Ei, As, Ai, Bs, Bi, Cs, Ci, pj, n)
    nu = B.shape[1]
    scale = 1.0
    for v in np.abs(Yu[n, :, :nu]).ravel():
        scale = max(scale, v)
    leak = 0.0
    for m in range(n):
        leak = max(leak, np.abs(Yu[m]).max())
    leak = max(leak, np.abs(Yu[n, :, nu:]).max())
    xdot = np.zeros(x_ref.shape[0])
    u = np.zeros(nu)
    if leak > 1e-12 * scale:
        return xdot, u, 2
    Eb = Yx[n]
    Fb = Yu[n, :, :nu].copy()
    U, s, Vt = np.linalg.svd(Fb, full_matrices=False)
    if s[-1] <= rtol * s[0]:
        return xdot, u, 1
    Kff = (Vt.T / s) @ U.T
    # u = C_ff x + D_ff y_n with C_ff = -K Eb, D_ff = K;  E xdot = A_ff x + B_ff y_n
    u = Kff @ (y_n - Eb @ x_ref)
    xdot = np.linalg.solve(E, A @ x_ref + B @ u)
    return xdot, u, 0


@dataclass
class InverseSystemRealization:
    """Inverse of an LPV model with relative degree ``n``.

    ``E_ff(p) xdot_ref = A_ff(p) x_ref + B_ff(p) y^[n]``,
    ``u_ff = C_ff(p) x_ref + D_ff(p) y^[n]``.  The coefficient matrices are
    formed from the derivative stack of the output at every evaluation; the
    scheduling jets ``pj`` must hold ``p, p', ..., p^[n]``.
    """

    model: DescriptorLpvModel | LocalLpvModel
    n: int = RELATIVE_DEGREE
    x_ref: np.ndarray | None = None

    def __post_init__(self):
        if self.n != RELATIVE_DEGREE:
            raise ValueError(f"relative degree is fixed at {RELATIVE_DEGREE}, got {self.n}")
        E = self.model.E
        n_p = E.n_p
        self._arrays = []
        for fam in (E, _as_family(self.model.A, n_p), self.model.B, _as_family(self.model.C, n_p)):
            self._arrays.extend(_family_arrays(fam))
        self.n_p = n_p
        # p^[n] only enters through C^[n]; with a constant C one order less suffices
        self.sched_order = self.n - 1 if _as_family(self.model.C, n_p).is_constant else self.n
        if self.x_ref is None:
            self.x_ref = np.zeros(self.model.n_x)

    def reset(self, x0) -> None:
        self.x_ref = np.array(x0, dtype=float).reshape(self.model.n_x)

    def _jets(self, scheduling) -> np.ndarray:
        if isinstance(scheduling, SchedulingPoint):
            rows = [scheduling.deriv(k) for k in range(self.n + 1)] if scheduling.order >= self.n else None
            if rows is None:
                rows = [scheduling.p, *scheduling.p_derivs]
                rows += [np.zeros(self.n_p)] * (self.n + 1 - len(rows))
            return np.array(rows, dtype=float)
        pj = np.zeros((self.n + 1, self.n_p))
        arr = np.asarray(scheduling, dtype=float)
        pj[: arr.shape[0]] = arr
        return pj

    def derivative_stack(self, scheduling):
        """``(Yx, Yu)``: coefficients of y, y', ..., y^[n] on x and on (u, ..., u^[n])."""
        Yx, Yu, *_ = _derivative_stack(*self._arrays, self._jets(scheduling), self.n)
        return Yx, Yu

    def matrices(self, scheduling):
        """``(E_ff, A_ff, B_ff, C_ff, D_ff)`` at a scheduling point."""
        Yx, Yu, E, A, B = _derivative_stack(*self._arrays, self._jets(scheduling), self.n)
        nu = B.shape[1]
        self._check_relative_degree(Yu, nu)
        Eb, Fb = Yx[self.n], Yu[self.n, :, :nu]
        Kff = checked_pinv(Fb)
        return E, A - B @ Kff @ Eb, B @ Kff, -Kff @ Eb, Kff

    def _check_relative_degree(self, Yu, nu):
        scale = max(1.0, np.abs(Yu[self.n, :, :nu]).max())
        leak = max(np.abs(Yu[: self.n]).max(), np.abs(Yu[self.n, :, nu:]).max() if Yu.shape[2] > nu else 0.0)
        if leak > 1e-12 * scale:
            raise RelativeDegreeViolation(f"input reaches an output derivative below order {self.n} (|coef| {leak:.3e})")

    def evaluate(self, x_ref, y_n, jets) -> tuple[np.ndarray, np.ndarray]:
        """``(xdot_ref, u_ff)`` for an explicit internal state."""
        xdot, u, status = _inverse_eval(
            *self._arrays, jets, self.n, np.asarray(x_ref, dtype=float), np.asarray(y_n, dtype=float), PINV_RTOL
        )
        if status == 1:
            raise RankDeficientInput("inverse-system input matrix is numerically rank deficient")
        if status == 2:
            raise RelativeDegreeViolation(f"relative degree {self.n} violated at the current scheduling point")
        return xdot, u

    def output(self, y_n, scheduling) -> np.ndarray:
        return self.evaluate(self.x_ref, y_n, self._jets(scheduling))[1]


def _as_family(mat, n_p):
    if isinstance(mat, AffineMatrixFamily):
        return mat
    return AffineMatrixFamily.constant(mat, n_p)


def build_local_lpv_inverse(model: LocalLpvModel, n: int = RELATIVE_DEGREE) -> InverseSystemRealization:
    real = InverseSystemRealization(model, n)
    _probe_realization(real)
    return real


def build_global_lpv_inverse(model: DescriptorLpvModel, n: int = RELATIVE_DEGREE) -> InverseSystemRealization:
    real = InverseSystemRealization(model, n)
    _probe_realization(real)
    return real


def _probe_realization(real: InverseSystemRealization, n_probes: int = 8, seed: int = 0):
    """Check rank and relative degree at a few states of the operating box."""
    from .scheduling import get_strategy

    strat = get_strategy(real.model.strategy)
    rng = np.random.default_rng(seed)
    for i in range(n_probes):
        q = np.zeros(6) if i == 0 else np.r_[rng.uniform(-1e-2, 1e-2, 3), rng.uniform(-1e-2, 1e-2, 3)]
        derivs = [rng.uniform(-1, 1, 6) * (i > 0) for _ in range(real.n)]
        jets = strat.jets(q, derivs[0], tuple(derivs[1:]), real.sched_order)
        real.matrices(jets)


def ff_step(real: InverseSystemRealization, ref_highest_deriv, scheduling, dt: float) -> np.ndarray:
    """Advance the internal state one RK4 step with frozen inputs; return u_ff at the start."""
    jets = real._jets(scheduling)
    y_n = np.asarray(ref_highest_deriv, dtype=float)
    x = real.x_ref
    k1, u = real.evaluate(x, y_n, jets)
    k2, _ = real.evaluate(x + 0.5 * dt * k1, y_n, jets)
    k3, _ = real.evaluate(x + 0.5 * dt * k2, y_n, jets)
    k4, _ = real.evaluate(x + dt * k3, y_n, jets)
    real.x_ref = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u
