"""Scheduling variables and their analytic time derivatives.

A scheduling strategy is a list of monomials over a small set of elementary
signals (trig functions of the pitch/yaw angles, the angular rates, the raw
angles).  Each signal is carried as a truncated Taylor jet ``[f, f', f'', ...]``
so the derivatives of every monomial follow from the Leibniz product rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .params import CHI, PSI, ZETA, GeneralizedState

ANGLE_INDEX = {"chi": CHI, "psi": PSI, "zeta": ZETA}

# elementary signals -> (kind, angle)
FACTORS = {
    "s_chi": ("sin", "chi"),
    "c_chi": ("cos", "chi"),
    "s_psi": ("sin", "psi"),
    "c_psi": ("cos", "psi"),
    "w_chi": ("rate", "chi"),
    "w_psi": ("rate", "psi"),
    "w_zeta": ("rate", "zeta"),
    "chi": ("angle", "chi"),
    "psi": ("angle", "psi"),
}


@njit(cache=True)
def _binom(n, k):
    r = 1.0
    for i in range(k):
        r = r * (n - i) / (i + 1)
    return r


@njit(cache=True)
def jet_product(a, b):
    """Derivatives of ``a * b`` from the derivatives of each factor."""
    out = np.zeros_like(a)
    for k in range(a.shape[0]):
        for j in range(k + 1):
            out[k] += _binom(k, j) * a[j] * b[k - j]
    return out


@njit(cache=True)
def sincos_jet(theta):
    s = np.zeros_like(theta)
    c = np.zeros_like(theta)
    s[0], c[0] = np.sin(theta[0]), np.cos(theta[0])
    for k in range(theta.shape[0] - 1):
        # (sin)' = cos * theta', (cos)' = -sin * theta'
        for j in range(k + 1):
            s[k + 1] += _binom(k, j) * c[j] * theta[k - j + 1]
            c[k + 1] -= _binom(k, j) * s[j] * theta[k - j + 1]
    return s, c


_FACTOR_CODE = {name: i for i, name in enumerate(FACTORS)}


@njit(cache=True)
def _jets_kernel(derivs, codes, order):
    """Monomial jets; ``derivs`` rows are q, qdot, qddot, ...; ``codes`` padded with -1.

    Factor codes follow the FACTORS order: s_chi, c_chi, s_psi, c_psi,
    w_chi, w_psi, w_zeta, chi, psi.
    """
    L = order + 1
    fj = np.zeros((9, L))
    s, c = sincos_jet(derivs[:L, 3].copy())
    fj[0], fj[1] = s, c
    s, c = sincos_jet(derivs[:L, 4].copy())
    fj[2], fj[3] = s, c
    for k in range(min(L, derivs.shape[0] - 1)):
        fj[4, k] = derivs[1 + k, 3]
        fj[5, k] = derivs[1 + k, 4]
        fj[6, k] = derivs[1 + k, 5]
    fj[7] = derivs[:L, 3]
    fj[8] = derivs[:L, 4]
    out = np.empty((L, codes.shape[0]))
    for i in range(codes.shape[0]):
        jet = fj[codes[i, 0]].copy()
        for f in range(1, codes.shape[1]):
            if codes[i, f] < 0:
                break
            jet = jet_product(jet, fj[codes[i, f]])
        out[:, i] = jet
    return out


@dataclass(frozen=True)
class SchedulingStrategy:
    """Named list of monomials; each monomial is a tuple of factor names."""

    name: str
    monomials: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        for mono in self.monomials:
            unknown = [f for f in mono if f not in FACTORS]
            if unknown:
                raise ValueError(f"unknown scheduling factors {unknown} in strategy {self.name!r}")
        width = max(len(m) for m in self.monomials)
        codes = np.full((len(self.monomials), width), -1, dtype=np.int64)
        for i, mono in enumerate(self.monomials):
            codes[i, : len(mono)] = [_FACTOR_CODE[f] for f in mono]
        object.__setattr__(self, "_codes", codes)

    @property
    def size(self) -> int:
        return len(self.monomials)

    @property
    def labels(self) -> list[str]:
        return ["*".join(m) for m in self.monomials]

    @property
    def uses_rates(self) -> bool:
        return any(FACTORS[f][0] == "rate" for mono in self.monomials for f in mono)

    def max_order(self, n_higher: int) -> int:
        """Highest derivative of p computable from q, qdot and n_higher more."""
        return n_higher if self.uses_rates else n_higher + 1

    def jets(self, q, qdot, higher=(), order: int = 0) -> np.ndarray:
        """Array (order+1, n_p): row k is the k-th time derivative of p."""
        if order > self.max_order(len(higher)):
            raise ValueError(
                f"strategy {self.name!r} needs more state derivatives for order-{order} scheduling derivatives"
            )
        derivs = np.empty((2 + len(higher), 6))
        derivs[0], derivs[1] = q, qdot
        for k, h in enumerate(higher):
            derivs[2 + k] = h
        return _jets_kernel(derivs, self._codes, order)

    def values(self, q, qdot) -> np.ndarray:
        return self.jets(q, qdot, (), 0)[0]


BASE_MONOMIALS = (
    ("s_chi",), ("c_chi",), ("s_psi",), ("c_psi",), ("w_chi",), ("w_psi",), ("w_zeta",),
)

# products needed so that M(q) and C(q, qdot) are exactly affine in p
_MASS_PRODUCTS = (
    ("s_chi", "s_chi"),
    ("s_chi", "c_chi", "c_psi"),
    ("c_psi", "c_psi"),
    ("c_psi", "c_psi", "s_chi", "s_chi"),
)
_CORIOLIS_SHAPES = (
    ("s_chi", "c_chi"),
    ("s_chi", "s_chi", "c_psi"),
    ("c_psi", "c_psi", "s_chi", "c_chi"),
    ("c_psi",),
    ("s_chi", "c_chi", "s_psi"),
    ("s_psi", "c_psi"),
    ("s_psi", "c_psi", "s_chi", "s_chi"),
)
_CORIOLIS_PRODUCTS = tuple(
    shape + (rate,) for shape in _CORIOLIS_SHAPES for rate in ("w_chi", "w_psi", "w_zeta")
)

STRATEGIES = {
    "trig-rates": SchedulingStrategy("trig-rates", BASE_MONOMIALS),
    "trig-products": SchedulingStrategy(
        "trig-products", BASE_MONOMIALS + _MASS_PRODUCTS + _CORIOLIS_PRODUCTS
    ),
    "local-angles": SchedulingStrategy("local-angles", (("chi",), ("psi",))),
}


def get_strategy(strategy) -> SchedulingStrategy:
    if isinstance(strategy, SchedulingStrategy):
        return strategy
    try:
        return STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown scheduling strategy {strategy!r}; choose from {sorted(STRATEGIES)}") from None


@dataclass(frozen=True)
class SchedulingPoint:
    """Scheduling vector ``p`` and its derivatives ``p_derivs[k-1] = p^[k]``."""

    p: np.ndarray
    p_derivs: tuple[np.ndarray, ...] = field(default_factory=tuple)
    strategy: str = "trig-rates"

    @property
    def order(self) -> int:
        return len(self.p_derivs)

    def deriv(self, k: int) -> np.ndarray:
        if k == 0:
            return self.p
        if k > len(self.p_derivs):
            raise ValueError(f"scheduling derivative of order {k} not available (have {len(self.p_derivs)})")
        return self.p_derivs[k - 1]


def scheduling_map(
    state: GeneralizedState, strategy="trig-rates", qddot=None, higher=(), order: int | None = None
) -> SchedulingPoint:
    """Scheduling point of a plant state.

    Derivatives are produced up to the order the supplied state derivatives
    allow (or ``order`` if given): for strategies containing angular rates,
    ``qddot`` gives ``p^[1]`` and each entry of ``higher`` (``q^[3]``, ...) one
    more; pure-angle strategies get one order from ``qdot`` alone.
    """
    strat = get_strategy(strategy)
    extra = () if qddot is None else (qddot, *higher)
    if order is None:
        order = strat.max_order(len(extra))
    jets = strat.jets(state.q, state.qdot, extra, order)
    return SchedulingPoint(jets[0].copy(), tuple(jets[k].copy() for k in range(1, order + 1)), strat.name)
