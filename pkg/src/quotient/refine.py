"""
Partition refinement. ``refine`` splits blocks by over-approximate Post images
until no image cuts a block; ``fd`` splits by edge preimages; ``fixpoint``
iterates W <- ft_eps(fd(W)).
"""
import logging

from backend import signals
from config import config
from plugins.providers import get_provider
from quotient.partition import Partition, split_cells
from quotient.transition import TAU, build_quotient
from reach.flowpipe import ReachConfig

logger = logging.getLogger(__name__)


def _posts(aut, block, post, cfg, labels):
    """(label, mode, polytope) images of ``block``, in label order."""
    images = []
    if labels in ("all", TAU):
        images.extend((TAU, block.mode, image) for image in post.tau(aut, block.mode, block.polytope, cfg))
    if labels in ("all", "edges"):
        images.extend((edge.name, dst, image) for edge, dst, image in post.edges(aut, block.mode, block.polytope, cfg))
    return sorted(images, key=lambda item: (item[0] != TAU, str(item[0])))


def refine(aut, initial, post=None, max_blocks=None, cfg=None, labels="all"):
    """
    Split blocks P' by P' & Post(P) and P' - Post(P) until no image of any
    block cuts another. Returns the refined partition; ``stable`` is false when
    ``max_blocks`` stopped the search first.
    """
    post = post or get_provider('post')
    cfg = cfg or ReachConfig.from_config(aut.dim)
    max_blocks = max_blocks or config.get('max_blocks')
    partition = Partition(list(initial), stable=True)
    cache = {}
    changed = True
    while changed:
        changed = False
        for source in list(partition):
            if source.id not in {block.id for block in partition}:
                continue
            if source.id not in cache:
                cache[source.id] = _posts(aut, source, post, cfg, labels)
            for label, mode, image in cache[source.id]:
                for target in partition.by_mode(mode):
                    cells = split_cells(target.polytope, image)
                    if cells is None:
                        continue
                    if len(partition) + len(cells) - 1 > max_blocks:
                        logger.warning("Refinement of %s stopped at %d blocks", aut.name, len(partition))
                        partition.stable = False
                        signals.refinement_finished.send(sender=refine, partition=partition, stable=False)
                        return partition
                    partition, children = partition.replace(target, cells)
                    cache.pop(target.id, None)
                    changed = True
                    signals.split_applied.send(sender=refine, block=target, splitter=source, label=label,
                                               cells=children)
                    logger.debug("Split block %d by %s(%d) into %d cells", target.id, label, source.id, len(cells))
                if all(block.id != source.id for block in partition):
                    # The source itself was split; its children carry on.
                    break
    signals.refinement_finished.send(sender=refine, partition=partition, stable=True)
    return partition


def ft_eps(aut, P, cfg=None, post=None, max_blocks=None):
    """Refinement against the continuous Post of every mode only."""
    return refine(aut, P, post=post, max_blocks=max_blocks, cfg=cfg, labels=TAU)


def fd(aut, P):
    """
    Split every block along reset^-1(T) & guard for each edge and target block
    T. Resets without a polytope preimage split along the guard alone.
    """
    cells_by_mode = {}
    for block in P:
        cuts = []
        for edge in aut.edges_from(block.mode):
            if edge.listens is not None:
                continue
            for target in P.by_mode(edge.dst):
                preimage = edge.reset.preimage(target.polytope)
                cuts.append(edge.guard if preimage is None else edge.guard.intersect(preimage))
        cells_by_mode[block.id] = cuts
    partition = Partition(list(P), stable=P.stable)
    for block in list(P):
        pieces = [block]
        for cut in cells_by_mode[block.id]:
            refined = []
            for piece in pieces:
                cells = split_cells(piece.polytope, cut)
                if cells is None:
                    refined.append(piece)
                    continue
                partition, children = partition.replace(piece, cells)
                refined.extend(children)
            pieces = refined
    return partition


def fixpoint(aut, P0, cfg=None, U=None, post=None, max_blocks=None, check_convergence=True):
    """
    W_0 = ft_eps(P0), W_{i+1} = ft_eps(fd(W_i)) until W_{i+1} = W_i or i = U.
    Returns the quotient over the last partition and its index.
    """
    post = post or get_provider('post')
    cfg = cfg or ReachConfig.from_config(aut.dim)
    U = U if U is not None else config.get('max_iters')
    W = ft_eps(aut, P0, cfg, post, max_blocks)
    iterations = 0
    converged = False
    while iterations < U and W.stable:
        following = ft_eps(aut, fd(aut, W), cfg, post, max_blocks)
        if check_convergence and following.equals(W):
            converged = True
            break
        W = following
        iterations += 1
    if not converged and W.stable:
        converged = ft_eps(aut, fd(aut, W), cfg, post, max_blocks).equals(W)
    if not converged:
        logger.warning("Refinement of %s did not reach a fixed point within %d iterations", aut.name, U)
    quotient = build_quotient(aut, W, cfg, post)
    quotient.converged = converged and W.stable
    logger.info("Quotient of %s: %d blocks, %d edges after %d iterations", aut.name, len(W), len(quotient.edges),
                iterations)
    return quotient, iterations
