"""Exception hierarchy shared across the laboratory stages.

Every error that maps to a CLI exit code lives here so the command-line
front end can translate failures uniformly (config errors exit 3,
verification failures exit 2, horizon/convergence exhaustion exit 4).
"""


class RdsLabError(Exception):
    """Base class for all package errors."""


class ConfigError(RdsLabError):
    """Invalid configuration value, unknown key, or degenerate input size."""


class CriticalHit(RdsLabError):
    """An orbit landed exactly on the critical set.

    Measure-zero event; signals the caller to perturb the seed.
    """

    def __init__(self, index: int, state: float):
        self.index = index
        self.state = state
        super().__init__(f"orbit state x_{index} = {state!r} lies exactly on the critical set")


class ThetaTooLarge(ConfigError):
    """Tilt parameter at or beyond the integrability cap 0.9/beta."""


class GridTooCoarse(ConfigError):
    """Noise half-width smaller than two Ulam cells; kernel under-resolved."""


class NoConvergence(RdsLabError):
    """Power iteration failed to reach the residual tolerance.

    Carries the best residual seen; signals a spectral-gap failure.
    """

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"no convergence after {iterations} iterations (best residual {residual:.3e})")


class BranchExplosion(RdsLabError):
    """Enclosure arc count exceeded the cap; the tracked set is too large for the horizon."""


class CalibrationFailed(RdsLabError):
    """Reference-set calibration could not certify a positive covering rate.

    ``missing_cells`` lists partition cells the pilot orbit never visited,
    which indicates the ergodic component is smaller than assumed.
    """

    def __init__(self, message: str, missing_cells=None):
        self.missing_cells = list(missing_cells) if missing_cells is not None else []
        super().__init__(message)


class HorizonExceeded(RdsLabError):
    """A stopping-time search ran out of horizon; carries the partial record."""

    def __init__(self, record):
        self.record = record
        super().__init__(f"horizon exhausted without an admissible hit (horizon={getattr(record, 'horizon', '?')})")


class NoFeasibleM(RdsLabError):
    """No ball count below the cap makes M * V_M exceed one; carries the V_M curve."""

    def __init__(self, curve):
        self.curve = curve
        super().__init__("no feasible M below the cap; inspect .curve for the V_M profile")


class EmptyIntersection(RdsLabError):
    """The best ball pair shares no covering times at this horizon; extend T."""


class VerificationFailed(RdsLabError):
    """A horseshoe certificate clause failed re-verification."""

    def __init__(self, clause: str, block: int = -1, pair=None):
        self.clause = clause
        self.block = block
        self.pair = pair
        super().__init__(f"clause {clause} failed at block {block}, pair {pair}")


class PullbackEmpty(RdsLabError):
    """A symbolic pullback produced an empty interval; enclosure slack too large."""


class NoWitness(RdsLabError):
    """No horizon prefix achieves the requested density; the implication is vacuous."""


class MissingArtifact(RdsLabError):
    """Report stage could not find required stage outputs."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing stage artifacts: " + ", ".join(self.missing))
