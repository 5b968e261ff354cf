"""Fixed-step simulation of the plate under feedforward, feedback and disturbances."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _engine as E
from .errors import EmptyRecord, SimulationError, SingularMass
from .feedback import PidController, PidGains, ProportionalController
from .methods import FeedforwardMethod, _status_error
from .params import COORDS, GeneralizedState, PlantParams
from .trajectory import DisturbanceProfile, MotionProfile, PiecewisePolynomial, zero_disturbance

CSV_GROUPS = ("q", "r", "e", "uff", "ufb", "d")


@dataclass(frozen=True)
class SimConfig:
    """Timing and initial-condition settings of one run.

    The plant is integrated with RK4 at ``h = Ts / substeps``; records and the
    PID feedback are sampled at ``Ts``.  The plant starts at the reference
    start pose plus ``mismatch`` (and reference velocity plus
    ``mismatch_rate``).
    """

    Ts: float = 65e-6
    substeps: int = 10
    horizon: float = 1.0
    mismatch: tuple[float, ...] = (0.0,) * 6
    mismatch_rate: tuple[float, ...] = (0.0,) * 6
    split_at_breaks: bool = True

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be a positive integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        for name in ("mismatch", "mismatch_rate"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 6 or not all(np.isfinite(v)):
                raise ValueError(f"{name} must have six finite entries")
            object.__setattr__(self, name, v)

    @property
    def h(self) -> float:
        return self.Ts / self.substeps

    @property
    def n_samples(self) -> int:
        return int(round(self.horizon / self.Ts)) + 1


@dataclass
class SimulationRecord:
    """Samples at ``t = k Ts``; ``e = q - r``."""

    t: np.ndarray
    q: np.ndarray
    r: np.ndarray
    u_ff: np.ndarray
    u_fb: np.ndarray
    d: np.ndarray
    qdot: np.ndarray | None = None
    rdot: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def e(self) -> np.ndarray:
        return self.q - self.r

    @property
    def edot(self) -> np.ndarray:
        if self.qdot is None or self.rdot is None:
            raise ValueError("record carries no velocities")
        return self.qdot - self.rdot

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        header = ["t"] + [f"{g}{i}" for g in CSV_GROUPS for i in range(1, 7)]
        data = np.hstack([self.t[:, None], self.q, self.r, self.e, self.u_ff, self.u_fb, self.d])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, metadata=None) -> SimulationRecord:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(header))
        cols = {name: data[:, i] for i, name in enumerate(header)}
        grab = lambda g: np.column_stack([cols[f"{g}{i}"] for i in range(1, 7)]) if len(data) else np.zeros((0, 6))  # noqa: E731
        return cls(cols["t"], grab("q"), grab("r"), grab("uff"), grab("ufb"), grab("d"), metadata=dict(metadata or {}))


@dataclass(frozen=True)
class ErrorMetrics:
    l2: np.ndarray
    linf: np.ndarray

    def as_dict(self) -> dict:
        return {c: {"l2": float(a), "linf": float(b)} for c, a, b in zip(COORDS, self.l2, self.linf)}


def error_metrics(record: SimulationRecord) -> ErrorMetrics:
    """Unnormalized root-sum-square and peak of the sampled error per coordinate."""
    if len(record) == 0:
        raise EmptyRecord("record has no samples")
    e = record.e
    return ErrorMetrics(np.sqrt(np.sum(e * e, axis=0)), np.max(np.abs(e), axis=0))


# ---------------------------------------------------------------------------


def _plant_arrays(params: PlantParams):
    return np.array([params.m, params.I_chi, params.I_psi, params.I_zeta]), np.array(params.c)


def integrate_step(state: GeneralizedState, wrench, params: PlantParams, h: float, n_steps: int = 1):
    """Classical RK4 on ``(q, qdot)`` with a constant wrench."""
    if not h > 0:
        raise ValueError("h must be positive")
    plant, c = _plant_arrays(params)
    x = E.rk4_constant(state.as_vector(), np.asarray(wrench, dtype=float), float(h), int(n_steps), plant, c)
    if not np.all(np.isfinite(x)):
        raise SingularMass("mass matrix lost positive definiteness during the step")
    return GeneralizedState.from_vector(x)


def _as_pp(profile) -> PiecewisePolynomial:
    if profile is None:
        return zero_disturbance()
    if isinstance(profile, (MotionProfile, DisturbanceProfile)):
        return profile.compile()
    return profile


def _run(cfg: SimConfig, params: PlantParams, ff: FeedforwardMethod | None, traj, fb, dist, metadata) -> SimulationRecord:
    ref_pp = _as_pp(traj)
    dist_pp = _as_pp(dist)
    r0 = ref_pp(0.0)
    x0 = np.concatenate([r0[0] + np.array(cfg.mismatch), r0[1] + np.array(cfg.mismatch_rate)])
    ff = ff if ff is not None else FeedforwardMethod("none", params)
    if ff.params != params:
        raise SimulationError("feedforward method was built for different plant parameters")
    z0 = ff.initial_state(x0)

    zeros6, zeros66 = np.zeros(6), np.zeros((6, 6))
    kp = ki = kd = tau = zeros6
    Kp = Kv = zeros66
    if fb is None:
        mode = E.FB_NONE
    elif isinstance(fb, (PidGains, PidController)):
        ctrl = fb if isinstance(fb, PidController) else PidController(fb)
        mode = E.FB_PID
        kp, ki, kd, tau = ctrl._kp, ctrl._ki, ctrl._kd, ctrl._tau
    elif isinstance(fb, ProportionalController):
        mode = E.FB_PROP
        Kp, Kv = fb.Kp, fb.Kv
    else:
        raise SimulationError(f"unsupported feedback object {type(fb).__name__}")

    kid, plant, c, inertia, inv, codes, so, lB = ff.engine_args()
    breaks = np.unique(np.concatenate([ref_pp.knots, dist_pp.knots])) if cfg.split_at_breaks else np.zeros(0)
    out = E.simulate(
        x0, z0, cfg.n_samples, int(cfg.substeps), float(cfg.Ts), kid, plant, c, inertia, inv, codes, so, lB,
        ref_pp.knots, ref_pp.coefs, dist_pp.knots, dist_pp.coefs, breaks, mode, kp, ki, kd, tau, Kp, Kv,
    )
    q, qd, r, rd, uff, ufb, d, status, fail = out
    if status:
        err = _status_error(status, ff.name)
        raise SimulationError(f"run failed at t = {fail * cfg.Ts:.6g} s: {err}") from err
    t = np.arange(cfg.n_samples) * cfg.Ts
    meta = {"method": ff.name, "method_index": ff.index}
    meta.update(metadata or {})
    return SimulationRecord(t, q, r, uff, ufb, d, qd, rd, meta)


def run_open_loop(cfg: SimConfig, plant: PlantParams, ff: FeedforwardMethod, traj, metadata=None) -> SimulationRecord:
    """Feedforward only."""
    return _run(cfg, plant, ff, traj, None, None, metadata)


def run_closed_loop(cfg: SimConfig, plant: PlantParams, ff, fb, traj, dist=None, metadata=None) -> SimulationRecord:
    """Feedforward plus feedback (PID sampled at Ts, or continuous proportional) plus disturbance."""
    return _run(cfg, plant, ff, traj, fb, dist, metadata)
