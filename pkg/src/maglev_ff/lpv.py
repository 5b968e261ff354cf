"""Affine LPV representations of the plate model.

Two models are built here:

* the global descriptor form ``E(p) xdot = A(p) x + B u``, ``y = C x`` with
  ``x = (q, qdot)``, which keeps the mass matrix on the left-hand side, and
* the local form ``xdot = A x + B(p) u`` obtained by a first-order expansion of
  the accelerations around zero angles and rates.

Affine families of the global model are obtained by least-squares regression
of the closed-form matrices on ``[1, p]`` over sampled states, followed by an
exactness check on separate probe states.  This keeps the scheduling choice a
pure configuration matter: a strategy that cannot express the model exactly is
rejected with :class:`AffinityViolation` instead of being silently approximated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import coriolis_matrix, mass_matrix, mass_matrix_partials
from .errors import AffinityViolation, ShapeMismatch, SingularMass
from .params import CHI, PSI, GeneralizedState, PlantParams
from .scheduling import SchedulingPoint, get_strategy, scheduling_map

AFFINITY_TOL = 1e-12


@dataclass(frozen=True)
class AffineMatrixFamily:
    """``M(p) = base + sum_i p_i * terms[i]``; only nonzero terms are stored."""

    base: np.ndarray
    terms: tuple[tuple[int, np.ndarray], ...] = ()
    n_p: int = 0

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        object.__setattr__(self, "base", base)
        cleaned = []
        for idx, mat in self.terms:
            mat = np.asarray(mat, dtype=float)
            if mat.shape != base.shape:
                raise ShapeMismatch(f"term {idx} has shape {mat.shape}, base has {base.shape}")
            if not 0 <= idx < self.n_p:
                raise ShapeMismatch(f"term index {idx} outside scheduling vector of size {self.n_p}")
            cleaned.append((int(idx), mat))
        object.__setattr__(self, "terms", tuple(cleaned))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.base.shape

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def _check_p(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_p,):
            raise ShapeMismatch(f"scheduling vector of shape {p.shape}, expected ({self.n_p},)")
        return p

    def evaluate(self, p) -> np.ndarray:
        if isinstance(p, SchedulingPoint):
            p = p.p
        out = self.base.copy()
        if self.terms:
            p = self._check_p(p)
            for idx, mat in self.terms:
                out += p[idx] * mat
        return out

    def derivative(self, p_k) -> np.ndarray:
        """k-th time derivative (k >= 1) given ``p^[k]``: the base drops out."""
        out = np.zeros_like(self.base)
        if self.terms:
            p_k = self._check_p(p_k)
            for idx, mat in self.terms:
                out += p_k[idx] * mat
        return out

    def __call__(self, p) -> np.ndarray:
        return self.evaluate(p)

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "n_p": self.n_p,
            "base": self.base.tolist(),
            "terms": [{"index": idx, "matrix": mat.tolist()} for idx, mat in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> AffineMatrixFamily:
        base = np.array(data["base"], dtype=float).reshape(data["shape"])
        terms = tuple((int(t["index"]), np.array(t["matrix"], dtype=float)) for t in data["terms"])
        return cls(base, terms, int(data["n_p"]))

    @classmethod
    def constant(cls, mat, n_p: int) -> AffineMatrixFamily:
        return cls(np.asarray(mat, dtype=float), (), n_p)


def fit_affine_family(samples_p: np.ndarray, samples_mat: np.ndarray, zero_tol: float = 1e-13):
    """Least-squares fit of matrices on ``[1, p]``.

    Returns the family and the design-matrix rank.  Coefficients below
    ``zero_tol`` times the largest entry magnitude are set to exactly zero.
    """
    n_s, n_p = samples_p.shape
    shape = samples_mat.shape[1:]
    design = np.hstack([np.ones((n_s, 1)), samples_p])
    targets = samples_mat.reshape(n_s, -1)
    coef, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    scale = max(np.abs(targets).max(), 1.0)
    coef[np.abs(coef) < zero_tol * scale] = 0.0
    base = coef[0].reshape(shape)
    terms = tuple((i, coef[i + 1].reshape(shape)) for i in range(n_p) if np.any(coef[i + 1]))
    return AffineMatrixFamily(base, terms, n_p), int(rank)


def _sample_states(rng, n, angle_box, rate_box):
    q = np.zeros((n, 6))
    qdot = np.zeros((n, 6))
    q[:, :3] = rng.uniform(-1.0, 1.0, (n, 3))
    q[:, 3:] = rng.uniform(-angle_box, angle_box, (n, 3))
    qdot[:, :3] = rng.uniform(-1.0, 1.0, (n, 3))
    qdot[:, 3:] = rng.uniform(-rate_box, rate_box, (n, 3))
    return [GeneralizedState(a, b) for a, b in zip(q, qdot)]


def _descriptor_E(state, params):
    E = np.eye(12)
    E[6:, 6:] = mass_matrix(state.q, params)
    return E


def _descriptor_A(state, params):
    A = np.zeros((12, 12))
    A[:6, 6:] = np.eye(6)
    A[6:, 6:] = -params.D - coriolis_matrix(state.q, state.qdot, params)
    return A


def _input_output():
    B = np.zeros((12, 6))
    B[6:, :] = np.eye(6)
    C = np.zeros((6, 12))
    C[:, :6] = np.eye(6)
    return B, C


@dataclass(frozen=True)
class DescriptorLpvModel:
    """``E(p) xdot = A(p) x + B u``, ``y = C x``; B and C are constant."""

    E: AffineMatrixFamily
    A: AffineMatrixFamily
    B: AffineMatrixFamily
    C: AffineMatrixFamily
    strategy: str

    n_x = 12
    n_u = 6
    n_y = 6

    def scheduling(self, state: GeneralizedState, qddot=None, higher=()) -> SchedulingPoint:
        return scheduling_map(state, self.strategy, qddot, higher)

    def evaluate(self, p):
        return self.E(p), self.A(p), self.B(p), self.C(p)

    def residual(self, state: GeneralizedState, xdot, u) -> np.ndarray:
        """``E(p) xdot - A(p) x - B u`` at a state."""
        E, A, B, _ = self.evaluate(self.scheduling(state))
        return E @ np.asarray(xdot, dtype=float) - A @ state.as_vector() - B @ np.asarray(u, dtype=float)

    def to_dict(self) -> dict:
        return {
            "kind": "descriptor",
            "strategy": self.strategy,
            "E": self.E.to_dict(),
            "A": self.A.to_dict(),
            "B": self.B.to_dict(),
            "C": self.C.to_dict(),
        }


@dataclass(frozen=True)
class LocalLpvModel:
    """``xdot = A x + B(p) u``, ``y = C x`` with constant A and C."""

    A: np.ndarray
    B: AffineMatrixFamily
    C: np.ndarray
    strategy: str = "local-angles"

    n_x = 12
    n_u = 6
    n_y = 6

    def scheduling(self, state: GeneralizedState, qddot=None, higher=()) -> SchedulingPoint:
        return scheduling_map(state, self.strategy, qddot, higher)

    @property
    def E(self) -> AffineMatrixFamily:
        return AffineMatrixFamily.constant(np.eye(12), self.B.n_p)

    def evaluate(self, p):
        return np.eye(12), self.A, self.B(p), self.C

    def accelerations(self, state: GeneralizedState, u) -> np.ndarray:
        """``qddot`` predicted by the local model."""
        p = self.scheduling(state).p
        xdot = self.A @ state.as_vector() + self.B(p) @ np.asarray(u, dtype=float)
        return xdot[6:]

    def to_dict(self) -> dict:
        return {
            "kind": "local",
            "strategy": self.strategy,
            "A": np.asarray(self.A).tolist(),
            "B": self.B.to_dict(),
            "C": np.asarray(self.C).tolist(),
        }


def build_global_descriptor(
    params: PlantParams,
    sched_strategy="trig-products",
    *,
    n_samples: int = 160,
    n_probes: int = 40,
    angle_box: float = np.pi,
    rate_box: float = 2.0,
    seed: int = 0,
) -> DescriptorLpvModel:
    """Fit the descriptor model on sampled states and verify exactness on probes."""
    strat = get_strategy(sched_strategy)
    rng = np.random.default_rng(seed)
    states = _sample_states(rng, n_samples, angle_box, rate_box)
    P = np.array([strat.values(s.q, s.qdot) for s in states])
    families = {}
    for name, fn in (("E", _descriptor_E), ("A", _descriptor_A)):
        mats = np.array([fn(s, params) for s in states])
        fam, rank = fit_affine_family(P, mats)
        if rank < strat.size + 1:
            raise AffinityViolation(
                f"scheduling strategy {strat.name!r} has linearly dependent entries (rank {rank} < {strat.size + 1})"
            )
        families[name] = fam

    for s in _sample_states(rng, n_probes, angle_box, rate_box):
        p = strat.values(s.q, s.qdot)
        for name, fn in (("E", _descriptor_E), ("A", _descriptor_A)):
            exact = fn(s, params)
            err = np.abs(families[name](p) - exact).max() / max(np.abs(exact).max(), 1.0)
            if err > AFFINITY_TOL:
                raise AffinityViolation(
                    f"strategy {strat.name!r} cannot express {name}(p) affinely: probe residual {err:.3e}"
                )

    B, C = _input_output()
    return DescriptorLpvModel(
        families["E"],
        families["A"],
        AffineMatrixFamily.constant(B, strat.size),
        AffineMatrixFamily.constant(C, strat.size),
        strat.name,
    )


def build_local_model(params: PlantParams) -> LocalLpvModel:
    """First-order expansion of the accelerations around zero angles and rates.

    The Coriolis term is quadratic in the rates and drops out, the damping
    stays in the constant A, and the input map becomes
    ``M0^-1 - chi M0^-1 M_chi M0^-1 - psi M0^-1 M_psi M0^-1``.
    """
    M0inv = np.diag(1.0 / params.rigid_inertia)
    dM = mass_matrix_partials(np.zeros(6), params)
    A = np.zeros((12, 12))
    A[:6, 6:] = np.eye(6)
    A[6:, 6:] = -M0inv @ params.D
    base = np.zeros((12, 6))
    base[6:] = M0inv
    terms = []
    for i, k in enumerate((CHI, PSI)):
        t = np.zeros((12, 6))
        t[6:] = -M0inv @ dM[k] @ M0inv
        if np.any(t):
            terms.append((i, t))
    _, C = _input_output()
    return LocalLpvModel(A, AffineMatrixFamily(base, tuple(terms), 2), C)


def frozen_lti(model, p):
    """``(E^-1 A, E^-1 B, C)`` at a fixed scheduling point."""
    if isinstance(p, SchedulingPoint):
        p = p.p
    E, A, B, C = model.evaluate(p)
    try:
        L = np.linalg.cholesky(E)
    except np.linalg.LinAlgError as exc:
        raise SingularMass(f"E(p) not positive definite at p={p}") from exc
    solve = lambda X: np.linalg.solve(L.T, np.linalg.solve(L, X))  # noqa: E731
    return solve(A), solve(B), np.array(C)


def model_to_json(model) -> str:
    return json.dumps(model.to_dict(), indent=1, sort_keys=True)


def model_from_json(text: str):
    data = json.loads(text)
    if data["kind"] == "descriptor":
        return DescriptorLpvModel(
            *(AffineMatrixFamily.from_dict(data[k]) for k in ("E", "A", "B", "C")), data["strategy"]
        )
    if data["kind"] == "local":
        return LocalLpvModel(
            np.array(data["A"]), AffineMatrixFamily.from_dict(data["B"]), np.array(data["C"]), data["strategy"]
        )
    raise ValueError(f"unknown model kind {data['kind']!r}")
