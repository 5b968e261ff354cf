"""Rest-to-rest reference trajectories and input-disturbance profiles.

Both are stored as piecewise polynomials on a common knot vector, so the
simulator can evaluate position, velocity and acceleration analytically at
any instant (including inside compiled code) without numerical
differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .params import PSI

DEGREE = 5  # quintic covers both profile kinds; cubic segments are zero-padded


@dataclass(frozen=True)
class PiecewisePolynomial:
    """``value_c(t) = sum_j coefs[i, c, j] (t - knots[i])**j`` on ``[knots[i], knots[i+1])``.

    Before the first knot every channel holds its value there with zero
    derivatives; after the last knot it holds the end value, again at rest.
    """

    knots: np.ndarray
    coefs: np.ndarray  # (n_seg, n_channels, DEGREE + 1)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        coefs = np.asarray(self.coefs, dtype=float)
        if coefs.ndim != 3 or coefs.shape[0] != knots.size - 1:
            raise ValueError("coefs must have shape (len(knots) - 1, n_channels, degree + 1)")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coefs", coefs)

    @property
    def n_channels(self) -> int:
        return self.coefs.shape[1]

    def __call__(self, t, nderiv: int = 2) -> np.ndarray:
        """Array (nderiv+1, n_channels) at scalar t, or (len(t), nderiv+1, n_channels)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = pp_eval_many(self.knots, self.coefs, t_arr, nderiv)
        return out[0] if np.ndim(t) == 0 else out


@njit(cache=True)
def pp_eval(knots, coefs, t, nderiv, seg_hint):
    """Evaluate value and derivatives; returns (array (nderiv+1, n_ch), segment index)."""
    n_seg = coefs.shape[0]
    n_ch = coefs.shape[1]
    deg = coefs.shape[2] - 1
    out = np.zeros((nderiv + 1, n_ch))
    if n_seg == 0:
        return out, 0
    if t < knots[0]:
        for c in range(n_ch):
            out[0, c] = coefs[0, c, 0]
        return out, 0
    end = t >= knots[n_seg]
    if end:
        i = n_seg - 1
        tau = knots[n_seg] - knots[i]
    else:
        i = seg_hint
        if i < 0 or i >= n_seg or t < knots[i]:
            i = 0
        while t >= knots[i + 1]:
            i += 1
        tau = t - knots[i]
    top = 0 if end else nderiv
    for c in range(n_ch):
        for d in range(top + 1):
            acc = 0.0
            for j in range(deg, d - 1, -1):
                f = 1.0
                for m in range(d):
                    f *= j - m
                acc = acc * tau + f * coefs[i, c, j]
            out[d, c] = acc
    return out, i


@njit(cache=True)
def pp_eval_many(knots, coefs, ts, nderiv):
    out = np.empty((ts.shape[0], nderiv + 1, coefs.shape[1]))
    hint = 0
    for k in range(ts.shape[0]):
        val, hint = pp_eval(knots, coefs, ts[k], nderiv, hint)
        out[k] = val
    return out


def _taylor_shift(c: np.ndarray, delta: float) -> np.ndarray:
    """Coefficients of ``p(tau + delta)`` given those of ``p(tau)``."""
    poly = np.polynomial.Polynomial(c)
    shifted = poly(np.polynomial.Polynomial([delta, 1.0]))
    out = np.zeros_like(c)
    out[: shifted.coef.size] = shifted.coef[: c.size]
    return out


def merge_channels(channels: list[tuple[np.ndarray, np.ndarray]]) -> PiecewisePolynomial:
    """Combine single-channel (knots, coefs[n_seg, deg+1]) pieces on the union of knots."""
    all_knots = np.unique(np.concatenate([k for k, _ in channels if k.size > 1] or [np.array([0.0, 1.0])]))
    n_seg = all_knots.size - 1
    coefs = np.zeros((n_seg, len(channels), DEGREE + 1))
    for c, (knots, cc) in enumerate(channels):
        for i in range(n_seg):
            t0 = all_knots[i]
            if knots.size < 2 or t0 < knots[0]:
                coefs[i, c, 0] = cc[0, 0] if cc.size else 0.0
                continue
            if t0 >= knots[-1]:
                # hold the final value
                last = np.polynomial.Polynomial(cc[-1])(knots[-1] - knots[-2])
                coefs[i, c, 0] = last
                continue
            j = np.searchsorted(knots, t0, side="right") - 1
            coefs[i, c] = _taylor_shift(cc[j], t0 - knots[j])
    return PiecewisePolynomial(all_knots, coefs)


# ---------------------------------------------------------------------------
# motion profiles


@dataclass(frozen=True)
class AxisProfile:
    """One coordinate: stroke and kinematic limits of a rest-to-rest move."""

    stroke: float = 0.0
    vmax: float = 1.0
    amax: float = 1.0
    jmax: float = 1.0
    start_time: float = 0.0
    duration: float | None = None  # used by the polynomial kind

    def __post_init__(self):
        for name in ("vmax", "amax", "jmax"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.start_time < 0:
            raise ValueError("start_time must be >= 0")


def scurve_phases(S: float, vmax: float, amax: float, jmax: float) -> tuple[float, float, float, float, float, float]:
    """Phase times (Tj, Ta, Tv) and attained (v, a, J) of a 7-segment move over |S|.

    The limits are lowered where the stroke is too short to reach them.
    """
    S = abs(S)
    J = jmax
    a = min(amax, np.sqrt(vmax * J))
    Tj = a / J
    v = vmax
    Ta = v / a - Tj
    if v * (Tj + v / a) > S:
        # cannot cruise at vmax: lower v keeping a, or drop the constant-a phase
        v = a * (-Tj + np.sqrt(Tj * Tj + 4.0 * S / a)) / 2.0
        Ta = v / a - Tj
        if Ta < 0:
            Tj = (S / (2.0 * J)) ** (1.0 / 3.0)
            a = J * Tj
            v = J * Tj * Tj
            Ta = 0.0
    Tv = max(S / v - (2.0 * Tj + Ta), 0.0) if v > 0 else 0.0
    return Tj, Ta, Tv, v, a, J


def limits_for_duration(S: float, T: float, frac_j: float = 0.125, frac_a: float = 0.125):
    """(vmax, amax, jmax) for which the move over |S| takes exactly T.

    Phases: jerk time ``frac_j T``, constant-acceleration time ``frac_a T``,
    cruise for the remainder.
    """
    Tj, Ta = frac_j * T, frac_a * T
    Tv = T - 4 * Tj - 2 * Ta
    if Tv < 0 or Tj <= 0:
        raise ValueError("phase fractions leave no room for the move")
    v = abs(S) / (2 * Tj + Ta + Tv)
    a = v / (Tj + Ta)
    return v, a, a / Tj


def _scurve_segments(S, start, t0, vmax, amax, jmax):
    """Knots and cubic coefficients (zero-padded to DEGREE) of a rest-to-rest move."""
    if S == 0:
        return np.array([t0]), np.array([[start] + [0.0] * DEGREE])
    Tj, Ta, Tv, v, a, J = scurve_phases(S, vmax, amax, jmax)
    sign = np.sign(S)
    jerks = [J, 0.0, -J, 0.0, -J, 0.0, J]
    durs = [Tj, Ta, Tj, Tv, Tj, Ta, Tj]
    knots = [t0]
    coefs = []
    p, vel, acc = float(start), 0.0, 0.0
    for jk, d in zip(jerks, durs):
        if d <= 1e-15:
            continue
        jk *= sign
        coefs.append([p, vel, acc / 2.0, jk / 6.0] + [0.0] * (DEGREE - 3))
        p += vel * d + acc * d * d / 2.0 + jk * d**3 / 6.0
        vel += acc * d + jk * d * d / 2.0
        acc += jk * d
        knots.append(knots[-1] + d)
    coefs = np.array(coefs)
    return np.array(knots), coefs


def _quintic_segments(S, start, t0, T):
    if S == 0:
        return np.array([t0]), np.array([[start] + [0.0] * DEGREE])
    c = np.zeros(DEGREE + 1)
    c[0] = start
    c[3], c[4], c[5] = 10 * S / T**3, -15 * S / T**4, 6 * S / T**5
    return np.array([t0, t0 + T]), c[None, :]


@dataclass(frozen=True)
class MotionProfile:
    """Six-axis rest-to-rest motion."""

    axes: tuple[AxisProfile, ...] = field(default_factory=lambda: tuple(AxisProfile() for _ in range(6)))
    start: tuple[float, ...] = (0.0,) * 6
    kind: str = "trapezoidal-acceleration"

    def __post_init__(self):
        if len(self.axes) != 6 or len(self.start) != 6:
            raise ValueError("a motion profile needs six axes and a six-entry start pose")
        if self.kind not in ("trapezoidal-acceleration", "polynomial"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        object.__setattr__(self, "start", tuple(float(s) for s in self.start))

    @classmethod
    def fitted(cls, strokes, duration: float, start_time: float = 0.0, kind="trapezoidal-acceleration", start=None):
        """Profile in which every moving axis completes its stroke in ``duration``."""
        axes = []
        for S in strokes:
            if S == 0:
                axes.append(AxisProfile(0.0, start_time=start_time, duration=duration))
            else:
                v, a, j = limits_for_duration(S, duration)
                axes.append(AxisProfile(float(S), v, a, j, start_time, duration))
        return cls(tuple(axes), tuple(start) if start is not None else (0.0,) * 6, kind)

    def end_time(self) -> float:
        t_end = 0.0
        for ax in self.axes:
            if ax.stroke == 0:
                continue
            if self.kind == "polynomial":
                t_end = max(t_end, ax.start_time + self._poly_duration(ax))
            else:
                Tj, Ta, Tv, *_ = scurve_phases(ax.stroke, ax.vmax, ax.amax, ax.jmax)
                t_end = max(t_end, ax.start_time + 4 * Tj + 2 * Ta + Tv)
        return t_end

    @staticmethod
    def _poly_duration(ax: AxisProfile) -> float:
        if ax.duration is not None:
            return ax.duration
        # quintic peak velocity 15S/(8T) and peak acceleration 10S/(sqrt(3)T^2)
        S = abs(ax.stroke)
        return max(15 * S / (8 * ax.vmax), np.sqrt(10 * S / (np.sqrt(3) * ax.amax)))

    def compile(self) -> PiecewisePolynomial:
        pieces = []
        for ax, s0 in zip(self.axes, self.start):
            if self.kind == "polynomial":
                pieces.append(_quintic_segments(ax.stroke, s0, ax.start_time, self._poly_duration(ax)))
            else:
                pieces.append(_scurve_segments(ax.stroke, s0, ax.start_time, ax.vmax, ax.amax, ax.jmax))
        return merge_channels(pieces)

    def breakpoints(self) -> np.ndarray:
        return self.compile().knots


def sample_reference(profile: MotionProfile | PiecewisePolynomial, t):
    """Reference sample(s) ``(r, rdot, rddot)`` at time(s) t."""
    from .feedforward import ReferenceSample

    pp = profile.compile() if isinstance(profile, MotionProfile) else profile
    if np.ndim(t) == 0:
        if t < 0:
            raise ValueError("t must be >= 0")
        val = pp(float(t))
        return ReferenceSample(val[0], val[1], val[2])
    vals = pp(np.asarray(t, dtype=float))
    return vals[:, 0], vals[:, 1], vals[:, 2]


# ---------------------------------------------------------------------------
# disturbances


@dataclass(frozen=True)
class DisturbanceProfile:
    """Pulse on one wrench channel.

    The ramped pulse rises linearly over ``ramp``, holds ``amplitude`` until
    ``onset + duration`` and falls linearly over ``ramp``; it is zero outside
    ``[onset, onset + duration + ramp]`` and integrates to
    ``amplitude * duration``.
    """

    channel: int = PSI
    shape: str = "ramped-pulse"
    amplitude: float = 0.05
    onset: float = 0.35
    duration: float = 0.05
    ramp: float = 0.005

    def __post_init__(self):
        if self.shape not in ("pulse", "ramped-pulse"):
            raise ValueError(f"unknown disturbance shape {self.shape!r}")
        if not 0 <= self.channel < 6:
            raise ValueError("channel must index the wrench (0..5)")
        if self.duration <= 0 or self.onset < 0 or self.ramp < 0:
            raise ValueError("disturbance timing must be non-negative with positive duration")
        if self.shape == "ramped-pulse" and self.ramp > self.duration:
            raise ValueError("ramp may not exceed duration")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")

    @property
    def effective_ramp(self) -> float:
        return self.ramp if self.shape == "ramped-pulse" else 0.0

    def compile(self) -> PiecewisePolynomial:
        A, t0, D, R = self.amplitude, self.onset, self.duration, self.effective_ramp
        pts = []
        if R > 0:
            pts = [(t0, 0.0, A / R), (t0 + R, A, 0.0), (t0 + D, A, -A / R), (t0 + D + R, 0.0, 0.0)]
        else:
            pts = [(t0, A, 0.0), (t0 + D, 0.0, 0.0)]
        knots = np.array([p[0] for p in pts] + [pts[-1][0] + 1.0])
        coefs = np.zeros((len(pts), 6, DEGREE + 1))
        for i, (_, val, slope) in enumerate(pts):
            coefs[i, self.channel, 0] = val
            coefs[i, self.channel, 1] = slope
        return PiecewisePolynomial(knots, coefs)

    def breakpoints(self) -> np.ndarray:
        return self.compile().knots[:-1]


def sample_disturbance(profile: DisturbanceProfile, t) -> np.ndarray:
    if np.ndim(t) == 0 and t < 0:
        raise ValueError("t must be >= 0")
    vals = profile.compile()(t, nderiv=0)
    return vals[0] if np.ndim(t) == 0 else vals[:, 0]


def zero_disturbance() -> PiecewisePolynomial:
    return PiecewisePolynomial(np.array([0.0, 1.0]), np.zeros((1, 6, DEGREE + 1)))


DEFAULT_STROKES = (10e-3, 10e-3, 1e-3, 1e-3, 1e-3, 1e-3)


def default_profile(kind: str = "trapezoidal-acceleration") -> MotionProfile:
    return MotionProfile.fitted(DEFAULT_STROKES, duration=0.5, start_time=0.1, kind=kind)
