"""rdslab: a numerical laboratory for noisy expanding circle maps.

Stages: orbit simulation, Lyapunov and large-deviation estimation, tilted
transfer-operator spectra, hyperbolic/Young time detection, covering-event
calibration, and construction plus verification of random horseshoes with
symbolic coding.

Kept import-light on purpose: submodules pull in numpy (and mpmath for the
certificate machinery) only when actually used.
"""

__version__ = "0.1.0"
