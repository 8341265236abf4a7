"""
Certificates of parallel compositions: component certificates combine into
one for the product once every pair of components keeps apart, i.e. while a
component sits in a guard, every other component stays d_min^{ij} away from
its own guards.
"""
import logging

import numpy as np

from backend.exceptions import ModelError
from config import config
from hybrid_core.automaton import HybridState
from hybrid_core.simulate import simulate
from setgeom.operators import point_distance
from stormed.certificate import StormedCertificate, delimited_band
from stormed.checks import CheckResult, finish, witness

logger = logging.getLogger(__name__)


def _cross(cross_dmin, i, j):
    try:
        if isinstance(cross_dmin, dict):
            value = cross_dmin[(i, j)] if (i, j) in cross_dmin else cross_dmin[(j, i)]
        else:
            value = np.asarray(cross_dmin, dtype=float)[i, j]
    except (KeyError, IndexError):
        raise ModelError(d={"cross_dmin": [f"No separation given for components {i} and {j}."]},
                         m="missing_cross_dmin")
    if not value > 0:
        raise ModelError(d={"cross_dmin": [f"Separation of components {i} and {j} must be positive."]},
                         m="invalid_cross_dmin")
    return float(value)


def compose_certificate(certs, cross_dmin=None, diameters=None, state_box=None):
    """
    phi = (phi^1, ..., phi^m), zeta = min zeta^i,
    eps = min(min eps^i, min zeta^i / B^i), d_min = min(min d_min^i, min d_min^{ij}).
    The band comes from ``state_box`` when given, else the component bands add up.
    """
    if not certs:
        raise ModelError(d={"certs": ["Nothing to compose."]}, m="empty_composition")
    m = len(certs)
    diameters = [cert.diameter for cert in certs] if diameters is None else list(diameters)
    if len(diameters) != m:
        raise ModelError(d={"diameters": [f"Expected {m} diameters."]}, m="dimension_mismatch")
    zeta = min(cert.zeta for cert in certs)
    eps = min(min(cert.eps for cert in certs),
              min((cert.zeta / B for cert, B in zip(certs, diameters) if B > 0), default=np.inf))
    d_min = min(cert.d_min for cert in certs)
    for i in range(m):
        for j in range(m):
            if i != j:
                d_min = min(d_min, _cross(cross_dmin if cross_dmin is not None else {}, i, j))
    phi = np.concatenate([cert.phi for cert in certs])
    if state_box is not None:
        b_minus, b_plus = delimited_band(phi, state_box)
    else:
        b_minus = sum(cert.b_minus for cert in certs)
        b_plus = sum(cert.b_plus for cert in certs)
    lipschitz = []
    if all(cert.lipschitz for cert in certs):
        lipschitz = [value for cert in certs for value in cert.lipschitz]
    diameter = float(np.sqrt(sum(B ** 2 for B in diameters)))
    composed = StormedCertificate(phi, eps, zeta, d_min, b_minus, b_plus, lipschitz, diameter)
    logger.info("Composed %d certificates: %r", m, composed)
    return composed


def _own_jumpers(product, jump):
    """Indices of components that jumped along their own (non-listening) edges."""
    jumpers = set()
    for name in jump.edges:
        component, _, edge_name = name.partition(".")
        i = product.names.index(component)
        if product.components[i].edge(edge_name).listens is None:
            jumpers.add(i)
    return jumpers


def _reactors(product, jump):
    return {product.names.index(name.partition(".")[0]) for name in jump.edges} - _own_jumpers(product, jump)


def guard_distance(component, mode, x):
    """Distance from ``x`` to the nearest own guard of ``mode`` (inf without guards)."""
    distances = []
    for edge in component.own_edges(mode):
        region = edge.guard.intersect(component.invariant(mode))
        if not region.is_empty():
            distances.append(point_distance(x, region))
    return min(distances, default=np.inf)


def check_collection_separability(product, cross_dmin, samples=None, rng=None, executions=None, duration=None,
                                  dt=None, domain=None):
    """
    At every recorded jump, each component j that did not react to an event
    keeps more than d_min^{ij} between its state and its own guards, for every
    component i that jumped on its own guard.
    """
    rng = rng if rng is not None else np.random.default_rng(config.get('seed'))
    if executions is None:
        runs = samples or max(1, config.get('cert_samples') // 100)
        duration = duration or config.get('horizon')
        dt = dt or config.get('delta')
        executions = []
        for k in range(runs):
            mode, region = product.init[k % len(product.init)]
            if domain is not None:
                region = region.intersect(domain)
            (x0,) = region.sample(rng, 1)
            executions.append(simulate(product, HybridState(mode, x0), duration, dt))
    result = CheckResult("collection_separability", True)
    for execution in executions:
        for jump in execution.jumps:
            mode, x = jump.pre.mode, jump.pre.x
            jumpers = _own_jumpers(product, jump)
            reactors = _reactors(product, jump)
            parts = product.split(x)
            for i in sorted(jumpers):
                for j, component in enumerate(product.components):
                    if j == i or j in reactors:
                        continue
                    distance = guard_distance(component, mode[j], parts[j])
                    if not np.isfinite(distance):
                        continue
                    margin = distance - _cross(cross_dmin, i, j)
                    result.samples += 1
                    result.margin = min(result.margin, margin)
                    if margin <= 0 and result.passed:
                        result.passed = False
                        result.witness = witness(mode, x, jump.time, jumper=product.names[i],
                                                 neighbour=product.names[j], distance=float(distance))
    if not result.samples:
        result.note = "no pair of components met at a jump"
    return finish(result)
