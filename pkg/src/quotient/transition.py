import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List

import numpy as np

from config import config

logger = logging.getLogger(__name__)

TAU = "tau"


def _hits(target, image):
    """``image`` reaches ``target``: full-dimensional overlap, or any contact for thin images."""
    overlap = target.intersect(image)
    if overlap.is_empty():
        return False
    return overlap.has_interior() or not image.has_interior()


class QuotientTS:
    """The finite transition system over the blocks of a partition."""

    def __init__(self, automaton, partition, edges, initial, converged=True):
        self.automaton = automaton
        self.partition = partition
        self.nodes = [block.id for block in partition]
        self.edges = set(edges)
        self.initial = sorted(initial)
        self.labels = {block.id: block.labels for block in partition}
        self.converged = converged

    def __repr__(self):
        return f"QuotientTS(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def block(self, block_id):
        return self.partition.get(block_id)

    def successors(self, block_id):
        return sorted((dst, label) for src, dst, label in self.edges if src == block_id)

    def without_edge(self, edge):
        return QuotientTS(self.automaton, self.partition, self.edges - {edge}, self.initial, self.converged)

    def reachable(self):
        seen = set(self.initial)
        frontier = deque(self.initial)
        while frontier:
            node = frontier.popleft()
            for dst, _ in self.successors(node):
                if dst not in seen:
                    seen.add(dst)
                    frontier.append(dst)
        return seen


def build_quotient(aut, partition, cfg, post):
    edges = set()
    for block in partition:
        for image in post.tau(aut, block.mode, block.polytope, cfg):
            edges.update((block.id, target.id, TAU) for target in partition.by_mode(block.mode)
                         if _hits(target.polytope, image))
        for edge, dst, image in post.edges(aut, block.mode, block.polytope, cfg):
            edges.update((block.id, target.id, edge.name) for target in partition.by_mode(dst)
                         if _hits(target.polytope, image))
    initial = {
        block.id
        for mode, polytope in aut.init
        for block in partition.by_mode(mode)
        if not block.polytope.intersect(polytope).is_empty()
    }
    return QuotientTS(aut, partition, edges, initial)


@dataclass
class SimulationReport:
    samples: int
    checked: int = 0
    skipped: int = 0
    violations: List[dict] = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def _flow_sample(aut, mode, x, rng, dt, tol):
    tau = rng.uniform(0.0, dt)
    flow = aut.flow(mode)
    for s in np.linspace(0.0, tau, 5)[1:]:
        y = flow.evaluate(x, s)
        if aut.invariant_violation(mode, y) > tol:
            return None
    return TAU, mode, y


def _jump_sample(aut, block, rng):
    candidates = [edge for edge in aut.edges_from(block.mode)
                  if edge.listens is None and not block.polytope.intersect(edge.guard).is_empty()]
    if not candidates:
        return None
    edge = candidates[rng.integers(len(candidates))]
    x = block.polytope.intersect(edge.guard).sample(rng, 1)[0]
    y = edge.reset.apply(x)
    if aut.invariant_violation(edge.dst, y) > 1e-9:
        return None
    return x, (edge.name, edge.dst, y)


def check_simulation(aut, quotient, samples=None, rng=None, dt=None, tol=1e-9):
    """
    Sample concrete flow steps and jumps from states of abstractly reachable
    blocks and check each is matched by an abstract edge between covering blocks.
    """
    samples = samples or config.get('simulation_samples')
    rng = rng or np.random.default_rng(config.get('seed'))
    dt = dt or config.get('delta')
    report = SimulationReport(samples)
    blocks = [quotient.block(block_id) for block_id in sorted(quotient.reachable())]
    partition = quotient.partition
    for _ in range(samples):
        block = blocks[rng.integers(len(blocks))]
        if rng.random() < 0.5:
            x = block.polytope.sample(rng, 1)[0]
            step = _flow_sample(aut, block.mode, x, rng, dt, tol)
        else:
            sampled = _jump_sample(aut, block, rng)
            x, step = sampled if sampled else (None, None)
        if step is None:
            report.skipped += 1
            continue
        report.checked += 1
        label, dst, y = step
        sources = partition.covering(block.mode, x, tol)
        targets = partition.covering(dst, y, tol)
        if not targets:
            report.violations.append({"kind": "coverage", "label": label, "mode": str(dst), "state": y.tolist()})
            continue
        if not any((s.id, t.id, label) in quotient.edges for s in sources for t in targets):
            report.violations.append({
                "kind": "missing_edge", "label": label, "source": [s.id for s in sources],
                "target": [t.id for t in targets], "state": x.tolist(), "successor": y.tolist(),
            })
    if report.violations:
        logger.warning("Simulation check found %d violations in %d samples", len(report.violations), report.checked)
    return report
