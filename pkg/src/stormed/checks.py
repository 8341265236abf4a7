"""
Numerical checks of the STORMED conditions: separable guards, time-independent
semigroup flows, flow and reset monotonicity along phi, and delimited ends.

Every check returns a ``CheckResult`` whose witness holds a concrete state
(and time, where one applies) when it fails.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from backend import signals
from backend.exceptions import UnboundedError
from config import config
from hybrid_core.automaton import HybridState
from hybrid_core.simulate import simulate
from setgeom.operators import closest_points, poly_distance
from stormed.certificate import delimited_band, transition_bound
from stormed.sampling import StateSampler

logger = logging.getLogger(__name__)

# Points per trajectory used to confirm a sampled flow stays in its invariant.
INVARIANT_PROBES = 4
# Halvings of a sampled flow time before the sample is skipped.
SHRINK_ATTEMPTS = 12


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float = np.inf
    samples: int = 0
    witness: Optional[dict] = None
    note: str = ""

    def to_dict(self):
        return {
            "passed": bool(self.passed), "margin": float(self.margin), "samples": int(self.samples),
            "witness": self.witness, "note": self.note,
        }


@dataclass
class CertReport:
    certificate: object = None
    results: "OrderedDict[str, CheckResult]" = field(default_factory=OrderedDict)

    def add(self, result):
        self.results[result.name] = result
        return result

    @property
    def passed(self):
        return all(result.passed for result in self.results.values())

    def failed(self):
        return [name for name, result in self.results.items() if not result.passed]

    def to_dict(self):
        return {
            "passed": self.passed,
            "certificate": self.certificate.to_dict() if self.certificate is not None else None,
            "checks": {name: result.to_dict() for name, result in self.results.items()},
        }

    def to_text(self):
        lines = [f"STORMED certificate report: {'PASS' if self.passed else 'FAIL'}"]
        if self.certificate is not None:
            lines.append(f"  {self.certificate!r}")
        for name, result in self.results.items():
            status = "pass" if result.passed else "FAIL"
            margin = "" if not np.isfinite(result.margin) else f" margin={result.margin:.6g}"
            note = f" {result.note}" if result.note else ""
            lines.append(f"  {name:<24} {status}{margin} samples={result.samples}{note}")
            if result.witness and not result.passed:
                lines.append(f"    witness: {result.witness}")
        return "\n".join(lines) + "\n"


def witness(mode=None, state=None, time=None, **extra):
    entry = {"mode": None if mode is None else str(mode),
             "state": None if state is None else np.asarray(state, dtype=float).tolist(),
             "time": None if time is None else float(time)}
    entry.update(extra)
    return entry


def finish(result):
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, "Check %s %s (margin %.6g)", result.name, "passed" if result.passed else "failed", result.margin)
    signals.certificate_checked.send(sender=CheckResult, check=result.name, passed=result.passed, margin=result.margin)
    return result


def _sampler(aut, rng, domain, executions, sampler):
    return sampler or StateSampler(aut, rng=rng, domain=domain, executions=executions)


def check_separability(aut, d_min, rng=None, domain=None, executions=None, sampler=None, listening=True):
    """
    For every edge e into a mode and every edge e' leaving it, the reset image
    of e's enabled guard keeps a distance above d_min from the guard of e'.
    Listening edges count as e only when ``listening`` is set: in a product
    they are reactions to events from outside it.
    """
    sampler = _sampler(aut, rng, domain, executions, sampler)
    result = CheckResult("separability", True)
    edges = [edge for edge in sampler.edges() if listening or edge.listens is None]
    for edge in edges:
        enabled = sampler.enabled(edge)
        if enabled.is_empty():
            continue
        image = edge.reset.image(enabled)
        for following in aut.edges_from(edge.dst):
            if following.listens is not None:
                continue
            target = sampler.enabled(following)
            if target.is_empty():
                continue
            if not (image.is_bounded() and target.is_bounded()):
                raise UnboundedError(d={"guards": [f"{edge.name} or {following.name} is unbounded."]},
                                     m="unbounded_polytope")
            distance = poly_distance(image, target)
            result.samples += 1
            margin = distance - d_min
            if margin < result.margin:
                result.margin = margin
            if distance <= d_min and result.passed:
                result.passed = False
                p, _ = closest_points(image, target)
                result.witness = witness(edge.dst, p, edge=edge.name, next=following.name, distance=distance)
    return finish(result)


def check_tisg(aut, samples=None, tol=None, rng=None, domain=None, executions=None, sampler=None, horizon=1.0):
    """theta(t + t'; x) = theta(t'; theta(t; x)) and theta(0; x) = x, up to tol * (1 + |x|)."""
    samples = samples or config.get('cert_samples')
    tol = tol or config.get('semigroup_tolerance')
    sampler = _sampler(aut, rng, domain, executions, sampler)
    result = CheckResult("tisg", True)
    for mode, x in sampler.states(samples):
        flow = aut.flow(mode)
        t, t2 = sampler.rng.uniform(0.0, horizon, size=2)
        scale = 1.0 + np.linalg.norm(x)
        error = max(np.linalg.norm(flow.evaluate(x, t + t2) - flow.evaluate(flow.evaluate(x, t), t2)),
                    np.linalg.norm(flow.evaluate(x, 0.0) - x)) / scale
        result.samples += 1
        result.margin = min(result.margin, tol - error)
        if error > tol and result.passed:
            result.passed = False
            result.witness = witness(mode, x, t, t2=float(t2), error=float(error))
    return finish(result)


def _stays_inside(aut, mode, flow, x, t):
    for s in np.linspace(0.0, t, INVARIANT_PROBES + 1)[1:]:
        if aut.invariant_violation(mode, flow.evaluate(x, s)) > config.get('guard_tolerance'):
            return False
    return True


def check_flow_monotonic(aut, cert, samples=None, rng=None, domain=None, executions=None, sampler=None,
                         horizon=1.0, slack=None):
    """phi.(theta(t + tau; x) - theta(t; x)) >= eps |theta(t + tau; x) - theta(t; x)| while in the invariant."""
    samples = samples or config.get('cert_samples')
    slack = config.get('monotonic_slack') if slack is None else slack
    sampler = _sampler(aut, rng, domain, executions, sampler)
    result = CheckResult("flow_monotonic", True)
    skipped = 0
    for mode, x in sampler.states(samples):
        flow = aut.flow(mode)
        t, tau = sampler.rng.uniform(0.0, horizon, size=2)
        for _ in range(SHRINK_ATTEMPTS):
            if _stays_inside(aut, mode, flow, x, t + tau):
                break
            t, tau = t / 2.0, tau / 2.0
        else:
            skipped += 1
            continue
        start = flow.evaluate(x, t)
        delta = flow.evaluate(x, t + tau) - start
        margin = cert.phi @ delta - cert.eps * np.linalg.norm(delta)
        result.samples += 1
        result.margin = min(result.margin, margin)
        if margin < -slack and result.passed:
            result.passed = False
            result.witness = witness(mode, start, t, tau=float(tau), advance=float(cert.phi @ delta))
    if skipped:
        result.note = f"{skipped} samples left the invariant"
    return finish(result)


def _reset_margin(cert, same_mode, pre, post):
    delta = post - pre
    size = np.linalg.norm(delta)
    if same_mode:
        if size <= config.get('coefficient_tolerance'):
            return np.inf
        return cert.phi @ delta - cert.zeta
    return cert.phi @ delta - cert.eps * size


def check_reset_monotonic(aut, cert, samples=None, rng=None, domain=None, executions=None, sampler=None,
                          slack=None, listening=False):
    """
    Self-loops either keep the state or advance phi.x by at least zeta; mode
    changes advance it by at least eps |x+ - x-|. Guard points are sampled per
    own edge, and per listening edge too when ``listening`` is set; recorded
    jumps of the executions are checked as well.
    """
    samples = samples or config.get('cert_samples')
    slack = config.get('monotonic_slack') if slack is None else slack
    sampler = _sampler(aut, rng, domain, executions, sampler)
    result = CheckResult("reset_monotonic", True)

    def record(mode, same_mode, pre, post, edge_name, time=None):
        margin = _reset_margin(cert, same_mode, pre, post)
        result.samples += 1
        result.margin = min(result.margin, margin)
        if margin < -slack and result.passed:
            result.passed = False
            result.witness = witness(mode, pre, time, edge=edge_name, successor=np.asarray(post).tolist())

    if not sampler.executions:
        edges = [edge for edge in sampler.edges() if listening or edge.listens is None]
        per_edge = max(1, samples // max(1, len(edges)))
        for edge in edges:
            enabled = sampler.enabled(edge)
            if enabled.is_empty():
                continue
            for x in enabled.sample(sampler.rng, per_edge):
                record(edge.src, edge.src == edge.dst, x, edge.reset.apply(x), edge.name)
    for jump in sampler.jumps():
        record(jump.pre.mode, jump.pre.mode == jump.post.mode, jump.pre.x, jump.post.x, jump.edge, jump.time)
    return finish(result)


def check_ends_delimited(aut, cert, rng=None, domain=None, executions=None, sampler=None, slack=None):
    """phi.x stays within [b_minus, b_plus] on every enabled guard."""
    slack = config.get('monotonic_slack') if slack is None else slack
    sampler = _sampler(aut, rng, domain, executions, sampler)
    result = CheckResult("ends_delimited", True)
    for edge in sampler.edges():
        region = edge.guard.intersect(aut.invariant(edge.src))
        if sampler.domain is not None:
            region = region.intersect(sampler.domain)
        if region.is_empty():
            continue
        result.samples += 1
        lo, hi = delimited_band(cert.phi, region)
        margin = min(lo - cert.b_minus, cert.b_plus - hi)
        result.margin = min(result.margin, margin)
        if margin < -slack and result.passed:
            result.passed = False
            if np.isfinite(margin):
                direction = cert.phi if cert.b_plus - hi < lo - cert.b_minus else -cert.phi
                _, _, x = region.support(direction)
                result.witness = witness(edge.src, x, edge=edge.name, range=[float(lo), float(hi)])
            else:
                result.witness = witness(edge.src, edge=edge.name, range=[float(lo), float(hi)], unbounded=True)
    if not result.samples:
        result.note = "no enabled guards"
    return finish(result)


def check_transition_bound(aut, cert, runs=100, duration=None, dt=None, rng=None, domain=None):
    """Simulated executions from sampled initial states never jump more than U times."""
    bound = transition_bound(cert)
    rng = rng if rng is not None else np.random.default_rng(config.get('seed'))
    duration = duration or config.get('horizon')
    dt = dt or config.get('delta')
    result = CheckResult("transition_bound", True, note=f"U={bound}")
    worst = 0
    for k in range(runs):
        mode, region = aut.init[k % len(aut.init)]
        if domain is not None:
            region = region.intersect(domain)
        (x0,) = region.sample(rng, 1)
        jumps = len(simulate(aut, HybridState(mode, x0), duration, dt).jumps)
        result.samples += 1
        worst = max(worst, jumps)
        if jumps > bound and result.passed:
            result.passed = False
            result.witness = witness(mode, x0, 0.0, jumps=jumps)
    result.margin = float(bound - worst)
    return finish(result)


def phi_progress(execution, phi, slack=None):
    """The largest drop of phi.x between consecutive rows of an execution (0 when monotone)."""
    slack = config.get('monotonic_slack') if slack is None else slack
    values = [float(phi @ x) for _, _, x in execution.rows()]
    drops = [before - after for before, after in zip(values, values[1:])]
    worst = max(drops, default=0.0)
    return worst if worst > slack else 0.0


def check_all(aut, cert, samples=None, tol=None, rng=None, domain=None, executions=None, listening=False):
    """The five STORMED checks under one sampler; o-minimality is structural."""
    sampler = StateSampler(aut, rng=rng, domain=domain, executions=executions)
    report = CertReport(cert)
    report.add(check_separability(aut, cert.d_min, sampler=sampler, listening=listening))
    report.add(check_tisg(aut, samples, tol, sampler=sampler))
    report.add(CheckResult("o_minimal", True, note="structural: flows and resets are polynomial or exponential"))
    report.add(check_flow_monotonic(aut, cert, samples, sampler=sampler))
    report.add(check_reset_monotonic(aut, cert, samples, sampler=sampler, listening=listening))
    report.add(check_ends_delimited(aut, cert, sampler=sampler))
    logger.info("Certificate for %s: %s", aut.name, "pass" if report.passed else "fail: " + ", ".join(report.failed()))
    return report
