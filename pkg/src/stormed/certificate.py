"""
STORMED certificates: the witness tuple (phi, eps, zeta, d_min, b_minus,
b_plus) together with the Lipschitz and jump-diameter bounds it was derived
from.
"""
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from backend.exceptions import ModelError


@dataclass
class StormedCertificate:
    phi: np.ndarray
    eps: float
    zeta: float
    d_min: float
    b_minus: float
    b_plus: float
    lipschitz: List[float] = field(default_factory=list)
    diameter: float = 0.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).reshape(-1)
        self.lipschitz = [float(value) for value in self.lipschitz]
        errors = {}
        for key in ("eps", "zeta", "d_min"):
            value = getattr(self, key)
            if not (math.isfinite(value) and value > 0):
                errors[key] = ["Must be a positive number."]
        if not self.b_minus < self.b_plus:
            errors["b_plus"] = [f"Band ({self.b_minus}, {self.b_plus}) is empty."]
        if not (math.isfinite(self.diameter) and self.diameter >= 0):
            errors["diameter"] = ["Must be finite and nonnegative."]
        if not np.all(np.isfinite(self.phi)):
            errors["phi"] = ["Entries must be finite."]
        if self.lipschitz and len(self.lipschitz) != self.dim:
            errors["lipschitz"] = [f"Expected {self.dim} bounds."]
        if errors:
            raise ModelError(d=errors, m="invalid_certificate")

    @property
    def dim(self):
        return self.phi.shape[0]

    def scaled(self, c):
        """The certificate for c * phi; every check is positively homogeneous in it."""
        if c <= 0:
            raise ModelError(d={"c": ["Scale must be positive."]}, m="invalid_scale")
        return StormedCertificate(self.phi * c, self.eps * c, self.zeta * c, self.d_min,
                                  self.b_minus * c, self.b_plus * c, self.lipschitz, self.diameter)

    def to_dict(self):
        return {
            "phi": self.phi.tolist(), "eps": float(self.eps), "zeta": float(self.zeta),
            "d_min": float(self.d_min), "b_minus": float(self.b_minus), "b_plus": float(self.b_plus),
            "lipschitz": list(self.lipschitz), "diameter": float(self.diameter),
        }

    def __repr__(self):
        return (f"StormedCertificate(dim={self.dim}, eps={self.eps:.4g}, zeta={self.zeta:.4g}, "
                f"d_min={self.d_min:.4g}, band=({self.b_minus:.4g}, {self.b_plus:.4g}))")


def delimited_band(phi, region):
    """(-rho(-phi, region), rho(phi, region)), the range of phi.x over a bounded region."""
    phi = np.asarray(phi, dtype=float)
    hi, hi_bounded, _ = region.support(phi)
    lo, lo_bounded, _ = region.support(-phi)
    if not (hi_bounded and lo_bounded):
        return -np.inf, np.inf
    return -lo, hi


def transition_bound(cert):
    """
    U = ceil((b_plus - b_minus) / min(zeta, eps * d_min)): every jump, and the
    flow that precedes it, advances phi.x by at least the denominator inside
    the band.
    """
    span = cert.b_plus - cert.b_minus
    if not (math.isfinite(span) and span > 0):
        raise ModelError(d={"b_plus": [f"Band ({cert.b_minus}, {cert.b_plus}) is degenerate."]}, m="degenerate_band")
    step = min(cert.zeta, cert.eps * cert.d_min)
    return max(1, math.ceil(round(span / step, 9)))
