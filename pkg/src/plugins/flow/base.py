import abc

import numpy as np


class FlowPlugin(abc.ABC):
    """A mode's continuous dynamics, evaluated in closed form or via the matrix exponential."""

    plugin_type = "flow"

    def __init__(self, dim):
        self.dim = dim

    @abc.abstractmethod
    def evaluate(self, x, t):
        """Return the state reached from ``x`` after flowing for ``t`` time units."""

    @abc.abstractmethod
    def velocity(self, x):
        pass

    def affine_parts(self):
        """``(A, b)`` with xdot = A x + b, or ``None`` when the flow is not affine."""
        return None

    def velocity_bounds(self, lo, hi):
        """
        ``(v_lo, v_hi)`` holding the velocity along every trajectory that starts
        in the box [lo, hi], or ``None``.
        """
        return None

    @abc.abstractmethod
    def to_dict(self):
        pass

    @classmethod
    @abc.abstractmethod
    def from_dict(cls, data, dim):
        pass

    def check_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            from backend.exceptions import ModelError
            raise ModelError(
                d={"x": [f"Expected a {self.dim}-vector, got shape {x.shape}."]},
                m="dimension_mismatch",
            )
        return x
