import numpy as np

from backend.exceptions import ModelError
from plugins.flow.base import FlowPlugin


class Clock(FlowPlugin):
    """Every coordinate advances at its own constant rate."""

    name = "clock"

    def __init__(self, rates):
        rates = np.atleast_1d(np.asarray(rates, dtype=float))
        super().__init__(rates.shape[0])
        self.rates = rates

    @classmethod
    def on(cls, dim, coords, rate=1.0):
        rates = np.zeros(dim)
        rates[list(coords)] = rate
        return cls(rates)

    def evaluate(self, x, t):
        x = self.check_state(x)
        return x + self.rates * t

    def velocity(self, x):
        return self.rates.copy()

    def affine_parts(self):
        return np.zeros((self.dim, self.dim)), self.rates.copy()

    def to_dict(self):
        return {"kind": self.name, "rates": self.rates.tolist()}

    @classmethod
    def from_dict(cls, data, dim):
        if "rates" in data:
            flow = cls(data["rates"])
        else:
            coords = data.get("coords", list(range(dim)))
            flow = cls.on(dim, coords, data.get("rate", 1.0))
        if flow.dim != dim:
            raise ModelError(d={"rates": [f"Expected {dim} rates."]}, m="dimension_mismatch")
        return flow
