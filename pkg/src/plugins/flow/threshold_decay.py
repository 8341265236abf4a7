import numpy as np

from backend.exceptions import ModelError
from plugins.flow.base import FlowPlugin


class ThresholdDecay(FlowPlugin):
    """
    Clocks advance at ``rates`` and the threshold coordinate follows
    Th = max(min_th, Th0 * exp(-(eF / tc) * (t - t_p))).
    """

    name = "threshold_decay"

    def __init__(self, rates, th, th0, ef, t, tp, min_th, tc):
        rates = np.atleast_1d(np.asarray(rates, dtype=float))
        super().__init__(rates.shape[0])
        if min_th <= 0 or tc <= 0:
            raise ModelError(d={"min_th": ["min_th and tc must be positive."]}, m="invalid_flow")
        self.rates = rates
        self.th, self.th0, self.ef, self.t, self.tp = th, th0, ef, t, tp
        self.min_th = float(min_th)
        self.tc = float(tc)

    def threshold(self, x):
        return max(self.min_th, x[self.th0] * np.exp(-(x[self.ef] / self.tc) * (x[self.t] - x[self.tp])))

    def evaluate(self, x, t):
        x = self.check_state(x)
        if t == 0:
            return x.copy()
        y = x + self.rates * t
        y[self.th] = self.threshold(y)
        return y

    def velocity(self, x):
        v = self.rates.copy()
        value = self.threshold(x)
        if value > self.min_th:
            v[self.th] = -(x[self.ef] / self.tc) * value * (self.rates[self.t] - self.rates[self.tp])
        return v

    def velocity_bounds(self, lo, hi):
        """
        Clocks move at their rates; the threshold only falls, no faster than at
        the largest Th0 and eF the box allows, taken at its shortest elapsed
        time. States are assumed to hold Th = threshold(x).
        """
        k = self.rates[self.t] - self.rates[self.tp]
        if lo[self.ef] < 0 or k < 0 or self.rates[self.th0] or self.rates[self.ef]:
            return None
        rate = hi[self.ef] / self.tc
        peak = max(self.min_th, hi[self.th0] * np.exp(rate * max(0.0, hi[self.tp] - lo[self.t])))
        v_lo, v_hi = self.rates.copy(), self.rates.copy()
        v_lo[self.th] = -rate * peak * k
        v_hi[self.th] = 0.0
        return v_lo, v_hi

    def to_dict(self):
        return {
            "kind": self.name, "rates": self.rates.tolist(), "th": self.th, "th0": self.th0,
            "ef": self.ef, "t": self.t, "tp": self.tp, "min_th": self.min_th, "tc": self.tc,
        }

    @classmethod
    def from_dict(cls, data, dim):
        flow = cls(data["rates"], data["th"], data["th0"], data["ef"], data["t"], data["tp"],
                   data["min_th"], data["tc"])
        if flow.dim != dim:
            raise ModelError(d={"rates": [f"Expected {dim} rates."]}, m="dimension_mismatch")
        return flow
