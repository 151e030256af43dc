"""Shipped calibration constants.

``annulus_golden_u`` is the Richardson-extrapolated radial reference value
for the annulus benchmark (outer radius 1, cavity radius 0.5, unit flux,
t = 1, evaluated on the outer boundary).  ``c_bias`` is the projected-Euler
weak-bias coefficient: the Monte Carlo field estimate deviates from the
reference by at most ``c_bias * sqrt(step)`` plus statistical error, as
measured by the step-refinement sweep in ``scripts/calibrate.py`` (which
regenerates this file).
"""

from __future__ import annotations

import json
from pathlib import Path

_DATA = Path(__file__).parent / "data" / "calibration.json"


def load_calibration() -> dict:
    return json.loads(_DATA.read_text())
