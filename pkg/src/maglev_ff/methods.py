"""Feedforward methods by name, packaged for the simulation engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine as E
from .errors import RankDeficientInput, RelativeDegreeViolation, SingularMass
from .feedforward import InverseSystemRealization, build_global_lpv_inverse, build_local_lpv_inverse
from .lpv import LocalLpvModel, build_global_descriptor, build_local_model
from .params import PlantParams
from .scheduling import get_strategy

COMPARISON_METHODS = ("mass", "annihilate-global", "nonlinear", "lpv-local", "lpv-global-ic")
ALL_METHODS = COMPARISON_METHODS + ("annihilate-local", "lpv-global-inv")
# variants share the number of the comparison method they implement
METHOD_INDEX = {
    "mass": 1,
    "annihilate-global": 2,
    "annihilate-local": 2,
    "nonlinear": 3,
    "lpv-local": 4,
    "lpv-global-ic": 5,
    "lpv-global-inv": 5,
}
_KERNEL_ID = {
    "none": E.FF_NONE,
    "mass": E.FF_MASS,
    "annihilate-global": E.FF_ANN_GLOBAL,
    "annihilate-local": E.FF_ANN_LOCAL,
    "nonlinear": E.FF_NONLINEAR,
    "lpv-local": E.FF_LPV_LOCAL,
    "lpv-global-ic": E.FF_LPV_IC,
    "lpv-global-inv": E.FF_LPV_INV,
}

_DUMMY_FAMILY = (np.zeros((1, 1, 1)), np.zeros(0, dtype=np.int64))


def _status_error(status: int, name: str):
    if status == E.STATUS_RANK:
        return RankDeficientInput(f"{name}: input matrix numerically rank deficient")
    if status == E.STATUS_RELDEG:
        return RelativeDegreeViolation(f"{name}: relative degree violated")
    return SingularMass(f"{name}: mass matrix not positive definite")


@dataclass
class FeedforwardMethod:
    """A named feedforward law and the arrays the compiled engine needs."""

    name: str
    params: PlantParams
    realization: InverseSystemRealization | None = None
    local_model: LocalLpvModel | None = None

    def __post_init__(self):
        if self.name not in _KERNEL_ID:
            raise ValueError(f"unknown feedforward method {self.name!r}; choose from {', '.join(ALL_METHODS)}")
        self.kernel_id = _KERNEL_ID[self.name]
        self.index = METHOD_INDEX.get(self.name, 0)
        p = self.params
        self._plant = np.array([p.m, p.I_chi, p.I_psi, p.I_zeta])
        self._c = np.array(p.c)
        self._inertia = p.rigid_inertia
        if self.realization is not None:
            arrs = self.realization._arrays
            self._inv = tuple(a if a.dtype == np.int64 else np.ascontiguousarray(a) for a in arrs)
            self._codes = get_strategy(self.realization.model.strategy)._codes
            self._sched_order = self.realization.sched_order
        else:
            self._inv = _DUMMY_FAMILY * 4
            self._codes = np.zeros((1, 1), dtype=np.int64)
            self._sched_order = 0
        if self.local_model is not None:
            B = self.local_model.B
            self._lB = (np.array([B.base] + [m for _, m in B.terms]), np.array([i for i, _ in B.terms], dtype=np.int64))
        else:
            self._lB = _DUMMY_FAMILY

    @property
    def n_states(self) -> int:
        return 12 if self.realization is not None else 0

    def initial_state(self, x0) -> np.ndarray:
        """Internal state at t0: inverse systems start from the plant state."""
        if self.realization is None:
            return np.zeros(0)
        return np.array(x0, dtype=float).reshape(12)

    def engine_args(self):
        return (self.kernel_id, self._plant, self._c, self._inertia, self._inv, self._codes, self._sched_order, self._lB)

    def evaluate(self, r, rd, rdd, q, qd, qdd=None, z=None):
        """``(u_ff, zdot)`` at one instant, through the same code the engine runs."""
        f64 = lambda v: np.ascontiguousarray(v, dtype=float)  # noqa: E731
        z = self.initial_state(np.concatenate([q, qd])) if z is None else z
        qdd = np.zeros(6) if qdd is None else qdd
        kid, plant, c, inertia, inv, codes, so, lB = self.engine_args()
        u, zdot, status = E.ff_eval(kid, f64(r), f64(rd), f64(rdd), f64(q), f64(qd), f64(qdd), f64(z), plant, c,
                                    inertia, inv, codes, so, lB)
        if status:
            raise _status_error(status, self.name)
        return u, zdot


def make_method(name: str, params: PlantParams, strategy: str = "trig-products") -> FeedforwardMethod:
    """Instantiate a feedforward method by its configuration name."""
    if name == "lpv-local":
        return FeedforwardMethod(name, params, realization=build_local_lpv_inverse(build_local_model(params)))
    if name == "lpv-global-inv":
        model = build_global_descriptor(params, strategy)
        return FeedforwardMethod(name, params, realization=build_global_lpv_inverse(model))
    if name == "annihilate-local":
        return FeedforwardMethod(name, params, local_model=build_local_model(params))
    return FeedforwardMethod(name, params)
