"""Plant parameters and state containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# coordinate layout of q, W and every 6-vector in the package
COORDS = ("x", "y", "z", "chi", "psi", "zeta")
X, Y, Z, CHI, PSI, ZETA = range(6)


@dataclass(frozen=True)
class PlantParams:
    """Rigid-body constants of the levitated plate.

    Defaults are a plausible nominal plate: the in-plane inertias satisfy the
    thin-plate relation ``I_zeta = I_chi + I_psi``.
    """

    m: float = 10.0
    I_chi: float = 0.1
    I_psi: float = 0.1
    I_zeta: float = 0.2
    c: tuple[float, ...] = (5.0, 5.0, 5.0, 0.1, 0.1, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        if len(self.c) != 6:
            raise ValueError(f"c must have 6 entries, got {len(self.c)}")
        for name in ("m", "I_chi", "I_psi", "I_zeta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if any(not (np.isfinite(v) and v >= 0) for v in self.c):
            raise ValueError(f"friction coefficients must be >= 0, got {self.c}")

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.c)

    @property
    def rigid_inertia(self) -> np.ndarray:
        """Diagonal of the mass matrix at zero angles."""
        return np.array([self.m, self.m, self.m, self.I_chi, self.I_psi, self.I_zeta])

    def with_damping(self, c) -> PlantParams:
        return PlantParams(self.m, self.I_chi, self.I_psi, self.I_zeta, tuple(c))


@dataclass(frozen=True)
class GeneralizedState:
    """Pose ``q`` and its rate ``qdot``, both in (x, y, z, chi, psi, zeta) order."""

    q: np.ndarray = field(default_factory=lambda: np.zeros(6))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(6)
        qdot = np.asarray(self.qdot, dtype=float).reshape(6)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @classmethod
    def from_vector(cls, x) -> GeneralizedState:
        x = np.asarray(x, dtype=float)
        return cls(x[:6], x[6:12])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])
