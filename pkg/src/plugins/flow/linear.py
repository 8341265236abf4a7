from collections import OrderedDict

import numpy as np
from scipy.sparse.linalg import expm_multiply

from backend.exceptions import ModelError, NumericalError
from plugins.flow.base import FlowPlugin
from setgeom.operators import mat_exp

# Propagators up to this size are always cached; larger systems cache only a few step sizes.
DENSE_CACHE_DIM = 64
CACHE_SIZE = 16
# Short steps (||A|| t below this) are evaluated by a Taylor series of matrix-vector products.
TAYLOR_RADIUS = 1.0
TAYLOR_TERMS = 60
TAYLOR_TOL = 1e-17


class LinearODE(FlowPlugin):
    name = "linear"

    def __init__(self, A, b=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ModelError(d={"A": [f"Flow matrix must be square, got {A.shape}."]}, m="dimension_mismatch")
        super().__init__(A.shape[0])
        self.A = A
        self.b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=float).reshape(-1)
        if self.b.shape != (self.dim,):
            raise ModelError(d={"b": [f"Expected a {self.dim}-vector."]}, m="dimension_mismatch")
        self.affine = bool(np.any(self.b))
        self.norm = float(np.linalg.norm(A, 1)) if A.size else 0.0
        self._propagators = OrderedDict()

    def augmented(self):
        """The (n+1)-dimensional homogeneous system for (x, 1)."""
        M = np.zeros((self.dim + 1, self.dim + 1))
        M[:self.dim, :self.dim] = self.A
        M[:self.dim, self.dim] = self.b
        return M

    def _generator(self):
        return self.augmented() if self.affine else self.A

    def _lift(self, x):
        return np.append(x, 1.0) if self.affine else x

    def _taylor(self, x, t):
        total = x.copy()
        derivative = self.A @ x + self.b
        coef = 1.0
        for k in range(1, TAYLOR_TERMS):
            coef *= t / k
            increment = coef * derivative
            total = total + increment
            if np.max(np.abs(increment)) <= TAYLOR_TOL * (1.0 + np.max(np.abs(total))):
                return total
            derivative = self.A @ derivative
        raise NumericalError(d={"t": t}, m="taylor_not_converged")

    def evaluate(self, x, t):
        x = self.check_state(x)
        if t == 0:
            return x.copy()
        key = float(t)
        if key in self._propagators:
            self._propagators.move_to_end(key)
            return (self._propagators[key] @ self._lift(x))[:self.dim]
        if self.norm * key <= TAYLOR_RADIUS:
            return self._taylor(x, key)
        if self.dim <= DENSE_CACHE_DIM or len(self._propagators) < 4:
            propagator = mat_exp(self._generator(), key)
            self._propagators[key] = propagator
            if len(self._propagators) > CACHE_SIZE:
                self._propagators.popitem(last=False)
            return (propagator @ self._lift(x))[:self.dim]
        return expm_multiply(self._generator() * key, self._lift(x))[:self.dim]

    def propagator(self, t):
        """The (augmented when affine) transition matrix for a step of ``t``."""
        key = float(t)
        if key not in self._propagators:
            self._propagators[key] = mat_exp(self._generator(), key)
            if len(self._propagators) > CACHE_SIZE:
                self._propagators.popitem(last=False)
        return self._propagators[key]

    def velocity(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    def affine_parts(self):
        return self.A, self.b

    def to_dict(self):
        return {"kind": self.name, "A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, data, dim):
        flow = cls(data["A"], data.get("b"))
        if flow.dim != dim:
            raise ModelError(
                d={"A": [f"Flow matrix is {flow.dim}x{flow.dim} but the automaton has dim {dim}."]},
                m="dimension_mismatch",
            )
        return flow
