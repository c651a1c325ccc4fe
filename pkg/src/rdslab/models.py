"""Piecewise-smooth circle map models with explicit derivative data.

A model is a map ``f`` of the circle R/Z given by a lift ``eval_raw`` (the
un-wrapped expression), its derivative, the finite critical set where the
derivative vanishes or fails to exist, and the power-law constants ``B > 1``
and ``beta > 0`` bounding the derivative in terms of the distance to the
critical set:

    (1/B) * dist(x, C)**beta  <=  |f'(x)|  <=  B * dist(x, C)**(-beta)

All closures are polymorphic: they accept floats, numpy arrays, and mpmath
``mpf`` scalars, so the same model object drives fast Monte Carlo loops and
the high-precision pullback machinery.

Shipped models: ``doubling`` (2x mod 1), ``ternary`` (3x mod 1) and
``logistic16`` (16x(1-x) mod 1, critical set {1/2}).  Models register by
name; ``register_model`` extends the table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError


def wrap01(x):
    """Reduce to [0, 1); works on floats, arrays, and mpf scalars."""
    if isinstance(x, np.ndarray):
        return np.mod(x, 1.0)
    return x - math.floor(x)


def circle_dist(x, y):
    """Distance on R/Z between x and y (both already in [0, 1))."""
    d = x - y
    if isinstance(d, np.ndarray):
        return np.abs(np.mod(d + 0.5, 1.0) - 0.5)
    return abs(wrap01(d + 0.5) - 0.5)


@dataclass(frozen=True)
class MapModel:
    """A circle map with derivative cocycle data and branch geometry.

    ``mono_cuts`` are the circle points where monotonicity of the lift can
    change (critical points, kinks at the wrap point); [0, 1) split at them
    gives the maximal monotone pieces, indexed in cut order.  ``wrap_smooth``
    declares the lift degree-consistent across 0 (eval_raw(x+1) = eval_raw(x)
    + degree), letting arc enclosures pass the wrap point without an
    artificial seam.  ``branch_inverse(k, y)`` inverts the lift on piece
    ``k`` and must accept mpf arguments when supplied; models without one
    fall back to bisection in the pullback code.
    """

    name: str
    eval_raw: Callable
    deriv: Callable
    critical_points: tuple[float, ...]
    B: float
    beta: float
    mono_cuts: tuple[float, ...] = ()
    wrap_smooth: bool = False
    branch_inverse: Optional[Callable] = None
    constant_log_inv_deriv: Optional[float] = None
    dim: int = 1

    def __post_init__(self):
        if self.B <= 1.0 or self.beta <= 0.0:
            raise ConfigError(f"model {self.name}: need B > 1 and beta > 0")
        if list(self.mono_cuts) != sorted(set(self.mono_cuts)):
            raise ConfigError(f"model {self.name}: mono_cuts must be sorted and unique")
        if self.mono_cuts and not (0.0 <= self.mono_cuts[0] and self.mono_cuts[-1] < 1.0):
            raise ConfigError(f"model {self.name}: mono_cuts must lie in [0, 1)")
        if not self.wrap_smooth and self.mono_cuts and self.mono_cuts[0] != 0.0:
            raise ConfigError(f"model {self.name}: non-wrap-smooth lifts must cut at 0.0")

    def eval(self, x):
        """f(x) reduced mod 1 per coordinate."""
        return wrap01(self.eval_raw(x))

    def inv_deriv_norm(self, x):
        """||df(x)^{-1}|| = 1/|f'(x)| for the one-dimensional circle."""
        d = self.deriv(x)
        if isinstance(d, np.ndarray):
            return 1.0 / np.abs(d)
        return 1.0 / abs(d)

    def critical_distance(self, x):
        """Circle distance to the critical set; 1.0 when the set is empty.

        The circle diameter is 1/2, so the empty-set convention 1.0 reads as
        "farther than any truncation radius" and keeps dist_r == 1 exact.
        """
        if not self.critical_points:
            if isinstance(x, np.ndarray):
                return np.ones_like(x)
            return 1.0
        dists = [circle_dist(x, c) for c in self.critical_points]
        if isinstance(x, np.ndarray):
            return np.minimum.reduce(dists)
        return min(dists)

    @property
    def pieces(self) -> list[tuple[float, float]]:
        """Monotone pieces of the lift as closed subintervals of [0, 1]."""
        cuts = (list(self.mono_cuts) if self.mono_cuts and self.mono_cuts[0] == 0.0
                else [0.0] + list(self.mono_cuts))
        cuts.append(1.0)
        return [(cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1)]

    def piece_index(self, x) -> int:
        """Index of the monotone piece containing x in [0, 1)."""
        for k, (lo, hi) in reversed(list(enumerate(self.pieces))):
            if x >= lo:
                return k
        return 0

    def piece_raw_range(self, k: int) -> tuple[float, float, int]:
        """(low, high, orientation) of the lift over piece k; orientation +1/-1."""
        lo, hi = self.pieces[k]
        a, b = self.eval_raw(lo), self.eval_raw(hi)
        if a <= b:
            return a, b, 1
        return b, a, -1


def _doubling() -> MapModel:
    return MapModel(
        name="doubling",
        eval_raw=lambda x: 2.0 * x,
        deriv=lambda x: x * 0 + 2.0,
        critical_points=(),
        B=2.0,
        beta=0.5,
        mono_cuts=(),
        wrap_smooth=True,
        branch_inverse=lambda k, y: y / 2.0 if k == 0 else None,
        constant_log_inv_deriv=-math.log(2.0),
    )


def _ternary() -> MapModel:
    return MapModel(
        name="ternary",
        eval_raw=lambda x: 3.0 * x,
        deriv=lambda x: x * 0 + 3.0,
        critical_points=(),
        B=3.0,
        beta=0.5,
        mono_cuts=(),
        wrap_smooth=True,
        branch_inverse=lambda k, y: y / 3.0 if k == 0 else None,
        constant_log_inv_deriv=-math.log(3.0),
    )


def _logistic16_inverse(k: int, y):
    # solve 16x(1-x) = y on the increasing (k=0) or decreasing (k=1) piece;
    # mpf inputs must stay in mpmath (math.sqrt would silently round to double)
    if isinstance(y, np.ndarray):
        root = np.sqrt(1.0 - y / 4.0)
    elif isinstance(y, float):
        root = math.sqrt(1.0 - y / 4.0)
    else:
        import mpmath

        root = mpmath.sqrt(1 - y / 4)
    if k == 0:
        return (1 - root) / 2
    return (1 + root) / 2


def _logistic16() -> MapModel:
    # |f'(x)| = 16|1-2x| = 32 * dist(x, {1/2}), so beta = 1 and B = 33 covers
    # both sides of the power-law bound with margin.
    return MapModel(
        name="logistic16",
        eval_raw=lambda x: 16.0 * x * (1.0 - x),
        deriv=lambda x: 16.0 - 32.0 * x,
        critical_points=(0.5,),
        B=33.0,
        beta=1.0,
        mono_cuts=(0.0, 0.5),  # the wrap point is a genuine kink: f'(0+) = +16, f'(1-) = -16
        wrap_smooth=False,
        branch_inverse=_logistic16_inverse,
    )


_REGISTRY: dict[str, Callable[[], MapModel]] = {
    "doubling": _doubling,
    "ternary": _ternary,
    "logistic16": _logistic16,
}


def get_model(name: str) -> MapModel:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; registered: {sorted(_REGISTRY)}") from None


def register_model(name: str, factory: Callable[[], MapModel]) -> None:
    if name in _REGISTRY:
        raise ConfigError(f"model {name!r} already registered")
    _REGISTRY[name] = factory


def registered_models() -> list[str]:
    return sorted(_REGISTRY)


def validate_power_law(model: MapModel, n_samples: int = 100_000, seed: int = 0,
                       min_dist: float = 1e-6) -> bool:
    """Sample the two-sided derivative bound at points away from the critical set."""
    rng = np.random.default_rng(seed)
    x = rng.random(n_samples)
    d = model.critical_distance(x)
    keep = d >= min_dist
    x, d = x[keep], d[keep]
    a = np.abs(model.deriv(x))
    lower = (1.0 / model.B) * d ** model.beta
    upper = model.B * d ** (-model.beta)
    return bool(np.all(lower <= a) and np.all(a <= upper))
