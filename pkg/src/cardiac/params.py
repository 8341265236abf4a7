"""
Parameter objects of the heart and ICD models. Times are in seconds and
potentials in millivolts throughout; EGM amplitudes are in millivolts after
normalisation by the electrode constant K.
"""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from backend.exceptions import ModelError

# Events shared by the components of the closed loop.
VEVENT = "VEvent"
WINDOW_ENDS = "WindowEnds"
FAST = "Fast"
SLOW = "Slow"
DURATION_BEGINS = "DurationBegins"
DURATION_ENDS = "DurationEnds"
END = "End"
PACE = "Pace"

VOLTAGE_RANGE = (-80.0, 60.0)
VT_MODES = ("VT_1", "VT_2", "VT_3")


def _positive(params, names, errors):
    for name in names:
        value = getattr(params, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            errors[name] = ["Must be a positive number."]


def _raise(errors, m):
    if errors:
        raise ModelError(d=errors, m=m)


class ParamsMixin:

    def to_dict(self):
        return asdict(self)

    def replace(self, **overrides):
        """A copy with ``overrides`` applied; unknown names are an error."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ModelError(d={name: ["Unknown parameter."] for name in unknown}, m="unknown_parameter")
        values = self.to_dict()
        values.update(overrides)
        return type(self)(**values)


@dataclass
class HeartParams(ParamsMixin):
    N: int = 4
    R_h: float = 0.025
    R_v: float = 0.025
    V_min: float = -80.0
    V_th: float = -60.0
    V_th2: float = -40.0
    V_max2: float = 10.0
    V_max: float = 20.0
    V_plateau: float = 0.0
    PD: float = 0.2
    T0: float = 0.002
    T1: float = 0.008
    T3: float = 0.04
    T_u2: float = 0.004
    rrp_rate: float = 2000.0
    D: float = 30.0

    def __post_init__(self):
        errors = {}
        if not (isinstance(self.N, int) and self.N >= 1):
            errors["N"] = ["Grid side must be a positive integer."]
        _positive(self, ("R_h", "R_v", "PD", "T0", "T1", "T3", "T_u2", "rrp_rate", "D"), errors)
        ordering = (self.V_min, self.V_th, self.V_th2, self.V_max2, self.V_max)
        if not all(a < b for a, b in zip(ordering, ordering[1:])):
            errors["V_th2"] = ["Need V_min < V_th < V_th2 < V_max2 < V_max."]
        if not self.V_th < self.V_plateau < self.V_max:
            errors["V_plateau"] = ["Need V_th < V_plateau < V_max."]
        low, high = VOLTAGE_RANGE
        for name in ("V_min", "V_th", "V_th2", "V_max2", "V_max", "V_plateau"):
            if not low <= getattr(self, name) <= high:
                errors.setdefault(name, []).append(f"Must lie in [{low:g}, {high:g}] mV.")
        _raise(errors, "invalid_heart_params")

    @property
    def cells(self):
        return self.N * self.N

    def index(self, row, col):
        if not (0 <= row < self.N and 0 <= col < self.N):
            raise ModelError(d={"cell": [f"({row}, {col}) is outside the {self.N}x{self.N} grid."]},
                             m="unknown_cell")
        return row * self.N + col

    def positions(self, spacing=1.0):
        """(x, y) = (column, row) * spacing for every cell, row-major."""
        rows, cols = np.divmod(np.arange(self.cells), self.N)
        return np.column_stack([cols, rows]).astype(float) * spacing

    @property
    def sa_node(self):
        return 0

    def atrial_rows(self):
        return range(0, max(1, self.N // 4))

    def ventricular_rows(self):
        return range(self.N - max(1, self.N // 2), self.N)

    def min_dwell(self):
        """A lower bound on the time any cell spends in a phase."""
        fastest = (2.0 / self.R_h + 2.0 / self.R_v) * (self.V_max - self.V_min)
        rises = [
            (self.V_th - self.V_min) / fastest,
            (self.V_th2 - self.V_th) / fastest,
            (self.V_th - self.V_min) / (fastest + self.rrp_rate),
        ]
        return min([self.T0, self.T1, self.PD, self.T_u2, self.T3] + rises)


@dataclass
class ElectrodeConfig(ParamsMixin):
    p0: Optional[Tuple[float, float]] = None
    p1: Optional[Tuple[float, float]] = None
    K: Optional[float] = None
    spacing: float = 1.0

    def __post_init__(self):
        errors = {}
        for name in ("p0", "p1"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(float(v) for v in value)
                if len(value) != 2 or not all(math.isfinite(v) for v in value):
                    errors[name] = ["Give a finite 2-D position."]
                setattr(self, name, value)
        if self.K is not None and not (math.isfinite(self.K) and self.K > 0):
            errors["K"] = ["Must be a positive number."]
        _positive(self, ("spacing",), errors)
        _raise(errors, "invalid_electrodes")

    def placed(self, N):
        """
        Electrodes for an N x N grid. By default both sit by the SA node, p1 off its
        corner and p0 beside the first column, so every SA-origin complex starts
        under them and late, distant cells barely register.
        """
        p0 = self.p0 if self.p0 is not None else (-0.43, 1.63)
        p1 = self.p1 if self.p1 is not None else (0.37, -0.37)
        return ElectrodeConfig(tuple(p0), tuple(p1), self.K, self.spacing)


@dataclass
class SenseParams(ParamsMixin):
    min_th: float = 0.25
    V_M: float = 5.0
    TC: float = 0.1
    MinTP: float = 0.1
    MaxTP: float = 0.15
    BlankingPeriod: float = 0.1
    MinDecP: float = 0.02
    MaxDecP: float = 1.0
    quantum: float = 0.02
    track_fraction: float = 0.95

    def __post_init__(self):
        errors = {}
        _positive(self, ("min_th", "V_M", "TC", "MinTP", "MaxTP", "BlankingPeriod", "MinDecP", "MaxDecP",
                         "quantum"), errors)
        if not errors:
            if not self.MinDecP < self.MaxDecP:
                errors["MaxDecP"] = ["Need MinDecP < MaxDecP."]
            if not self.MinTP < self.MaxTP:
                errors["MaxTP"] = ["Need MinTP < MaxTP."]
            if not self.min_th < self.V_M:
                errors["V_M"] = ["Need min_th < V_M."]
        if not 0 < self.track_fraction < 1:
            errors["track_fraction"] = ["Must lie in (0, 1)."]
        _raise(errors, "invalid_sense_params")

    @property
    def track_end(self):
        return self.track_fraction * self.MinTP

    @property
    def refractory(self):
        """Minimum separation of two declared events."""
        return self.MinTP + self.BlankingPeriod + self.MinDecP


@dataclass
class DiscrimParams(ParamsMixin):
    tachy_th: float = 0.33
    m: float = 0.2
    B: float = 2.0
    DL: float = 10.0
    vtc_threshold: float = 0.94
    template: Optional[List[float]] = None
    T_s: float = 0.01
    gamma: float = 1.0
    stab_threshold: float = 0.0009
    svt_count: int = 3
    window: int = 10
    faster_fraction: float = 0.8

    SAMPLES = 8

    def __post_init__(self):
        errors = {}
        _positive(self, ("tachy_th", "m", "B", "DL", "T_s", "gamma", "stab_threshold"), errors)
        if "m" not in errors and "B" not in errors and not self.m < self.B:
            errors["B"] = ["Need 0 < m < B."]
        if not 0 < self.vtc_threshold < 1:
            errors["vtc_threshold"] = ["Must lie in (0, 1)."]
        if not (isinstance(self.window, int) and isinstance(self.svt_count, int)
                and 1 <= self.svt_count <= self.window):
            errors["svt_count"] = ["Need 1 <= svt_count <= window."]
        if not 0 < self.faster_fraction <= 1:
            errors["faster_fraction"] = ["Must lie in (0, 1]."]
        if self.template is not None:
            template = [float(v) for v in self.template]
            if len(template) != self.SAMPLES or not all(math.isfinite(v) for v in template):
                errors["template"] = [f"Give {self.SAMPLES} finite samples."]
            elif np.var(template) == 0:
                errors["template"] = ["Template must not be constant."]
            self.template = template
        _raise(errors, "invalid_discrim_params")

    @property
    def flag_level(self):
        """sum(nu) at which svt_count of the last ``window`` outcomes are +1."""
        return 2 * self.svt_count - self.window


@dataclass
class DetectionTreeConfig(ParamsMixin):
    paths: Dict[str, List[str]] = field(default_factory=lambda: {
        "VT_1": ["tree.e1"],
        "VT_2": ["tree.e1", "tree.e2"],
        "VT_3": ["tree.e1", "tree.e2"],
    })
    deadline: float = 30.0
    name: str = "tree"

    def __post_init__(self):
        errors = {}
        unknown = sorted(set(self.paths) - set(VT_MODES))
        if unknown:
            errors["paths"] = [f"{mode} is not a VT decision mode." for mode in unknown]
        elif not self.paths:
            errors["paths"] = ["Give at least one path."]
        for mode, clocks in self.paths.items():
            if not clocks:
                errors.setdefault("paths", []).append(f"Path of {mode} has no clocks.")
        _positive(self, ("deadline",), errors)
        _raise(errors, "invalid_tree_config")
