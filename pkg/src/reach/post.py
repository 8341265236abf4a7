"""Over-approximate Post operators on (mode, polytope) blocks."""
import logging

from reach.flowpipe import reach_cont
from setgeom.operators import discrete_post_over

logger = logging.getLogger(__name__)


def post_tau_over(aut, blocks, cfg, merge=True):
    """
    Continuous successors of every block: the template hull of its eps-bloated
    flowpipe (``merge``) or every flowpipe section separately.
    """
    results = []
    for mode, P in blocks:
        flowpipe = reach_cont(aut, mode, P, cfg)
        if merge:
            hull = flowpipe.hull(cfg.V)
            if hull is not None:
                results.append((mode, hull.intersect(aut.invariant(mode))))
        else:
            results.extend((mode, segment.polytope) for segment in flowpipe)
    return results


def edge_posts(aut, mode, P, V):
    """(edge, destination mode, polytope) for every edge out of ``mode`` that ``P`` can take."""
    for edge in aut.edges_from(mode):
        if edge.listens is not None:
            # Waits for an event from outside the automaton.
            continue
        image = discrete_post_over(P, edge, V, aut.invariant(edge.dst))
        if not image.is_empty():
            yield edge, edge.dst, image


def post_edge_over(aut, blocks, V):
    results = []
    for mode, P in blocks:
        results.extend((dst, image) for _, dst, image in edge_posts(aut, mode, P, V))
    return results
