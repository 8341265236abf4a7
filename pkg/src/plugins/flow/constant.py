import numpy as np

from plugins.flow.base import FlowPlugin


class Constant(FlowPlugin):
    name = "constant"

    def evaluate(self, x, t):
        return self.check_state(x).copy()

    def velocity(self, x):
        return np.zeros(self.dim)

    def affine_parts(self):
        return np.zeros((self.dim, self.dim)), np.zeros(self.dim)

    def to_dict(self):
        return {"kind": self.name}

    @classmethod
    def from_dict(cls, data, dim):
        return cls(dim)
