"""Random orbits of the additive-noise skew product and their derivative cocycle.

One step is x -> f(x) + omega_i (mod 1).  An orbit keeps a full ledger:
states, inverse-derivative norms 1/|f'(x_i)|, and distances to the critical
set, plus a cached log-space cumulative sum so cocycle products over any
window cost O(1) and never under/overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, CriticalHit
from .models import MapModel, wrap01
from .noise import NoiseStream


def iterate(model: MapModel, x, w):
    """One random step f(x) + w reduced mod 1; total on the circle."""
    return wrap01(model.eval_raw(x) + w)


@dataclass(frozen=True)
class RandomOrbit:
    """Ledger of one realization x_0..x_n with derivative data per state.

    ``inv_deriv_norms[i]`` is 1/|f'(x_i)|; construction fails loudly with
    CriticalHit if any state lies exactly on the critical set.
    """

    model: MapModel
    noise: NoiseStream | None
    x0: float
    length: int
    states: np.ndarray
    inv_deriv_norms: np.ndarray
    critical_distances: np.ndarray

    @cached_property
    def log_inv_cumsum(self) -> np.ndarray:
        """L with L[j] = sum_{i<j} log(1/|f'(x_i)|), j = 0 .. length+1."""
        out = np.empty(self.length + 2)
        out[0] = 0.0
        np.cumsum(np.log(self.inv_deriv_norms), out=out[1:])
        return out

    def __len__(self) -> int:
        return self.length


def orbit(model: MapModel, noise: NoiseStream, x0: float, n: int) -> RandomOrbit:
    """Simulate n steps; deterministic given (model, noise seed, x0, n)."""
    if n < 1:
        raise ConfigError("orbit length must be >= 1")
    states = np.empty(n + 1)
    states[0] = x0 = wrap01(float(x0))
    w = noise.block(0, n)
    wl = w.tolist()
    f = model.eval_raw
    x = x0
    for i in range(n):
        x = (f(x) + wl[i]) % 1.0
        states[i + 1] = x
    dist = model.critical_distance(states)
    hits = np.nonzero(dist == 0.0)[0]
    if hits.size:
        i = int(hits[0])
        raise CriticalHit(i, float(states[i]))
    inv = 1.0 / np.abs(model.deriv(states))
    return RandomOrbit(model=model, noise=noise, x0=x0, length=n,
                       states=states, inv_deriv_norms=inv, critical_distances=dist)


def orbit_states_only(model: MapModel, noise: NoiseStream, x0: float, n: int) -> float:
    """Advance n steps and return the final state (burn-in helper, no ledger)."""
    w = noise.block(0, n).tolist()
    f = model.eval_raw
    x = wrap01(float(x0))
    for i in range(n):
        x = (f(x) + w[i]) % 1.0
    return x


def cocycle_product(orb: RandomOrbit, k: int, n: int) -> float:
    """prod_{i=k}^{n-1} 1/|f'(x_i)|, accumulated in log space."""
    if not (0 <= k < n <= orb.length):
        raise ConfigError(f"cocycle window must satisfy 0 <= k < n <= length, got k={k}, n={n}")
    L = orb.log_inv_cumsum
    return float(np.exp(L[n] - L[k]))


def ensemble_orbit(model: MapModel, x: np.ndarray, w_rows: np.ndarray) -> np.ndarray:
    """Evolve a replica vector through the rows of a noise matrix; returns states
    stacked as (steps+1, replicas).  Used by vectorized Monte Carlo stages."""
    steps = w_rows.shape[0]
    out = np.empty((steps + 1, x.size))
    out[0] = x
    f = model.eval_raw
    for i in range(steps):
        x = np.mod(f(x) + w_rows[i], 1.0)
        out[i + 1] = x
    return out


def export_orbit_csv(orb: RandomOrbit, path) -> None:
    """Columns (i, x_i, inv_deriv_norm_i, crit_dist_i), full float precision."""
    with open(path, "w") as fh:
        fh.write("i,x_i,inv_deriv_norm_i,crit_dist_i\n")
        for i in range(orb.length + 1):
            fh.write(f"{i},{orb.states[i]!r},{orb.inv_deriv_norms[i]!r},{orb.critical_distances[i]!r}\n")
