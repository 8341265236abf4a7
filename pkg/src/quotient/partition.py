import itertools
from dataclasses import dataclass, field
from typing import Any, FrozenSet, Optional

from backend.exceptions import ModelError
from setgeom.polytope import Polytope

_ids = itertools.count()


@dataclass(frozen=True)
class Block:
    id: int
    mode: Any
    polytope: Polytope = field(compare=False)
    origin: int = None
    parent: Optional[int] = None
    labels: FrozenSet[str] = frozenset()

    def key(self, decimals=9):
        return str(self.mode), self.polytope.canonical_key(decimals)

    def contains_state(self, mode, x, tol=1e-9):
        return mode == self.mode and self.polytope.contains_point(x, tol)

    def child(self, polytope):
        return Block(next(_ids), self.mode, polytope, self.origin, self.id, self.labels)


def new_block(mode, polytope, labels=()):
    block_id = next(_ids)
    return Block(block_id, mode, polytope, block_id, None, frozenset(labels))


class Partition:
    """A finite cover of the reachable hybrid state space by (mode, polytope) blocks."""

    def __init__(self, blocks, stable=True):
        self.blocks = sorted(blocks, key=lambda block: block.id)
        self.stable = stable

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __repr__(self):
        return f"Partition(blocks={len(self)}, stable={self.stable})"

    @property
    def modes(self):
        return list(dict.fromkeys(block.mode for block in self.blocks))

    def by_mode(self, mode):
        return [block for block in self.blocks if block.mode == mode]

    def get(self, block_id):
        for block in self.blocks:
            if block.id == block_id:
                return block
        raise ModelError(d={"block": [f"No block {block_id}."]}, m="unknown_block")

    def covering(self, mode, x, tol=1e-9):
        return [block for block in self.blocks if block.contains_state(mode, x, tol)]

    def replace(self, block, cells):
        """A new partition with ``block`` split into ``cells`` (polytopes)."""
        children = [block.child(cell) for cell in cells]
        return Partition([b for b in self.blocks if b.id != block.id] + children, self.stable), children

    def key(self, decimals=9):
        return tuple(sorted(block.key(decimals) for block in self.blocks))

    def equals(self, other, decimals=9):
        return len(self) == len(other) and self.key(decimals) == other.key(decimals)


def split_cells(polytope, splitter):
    """
    ``[polytope & splitter] + (polytope - splitter)`` when the splitter cuts the
    polytope with full-dimensional pieces on both sides, else ``None``.
    """
    inside = polytope.intersect(splitter)
    if inside.is_empty() or not inside.has_interior():
        return None
    if splitter.contains(polytope):
        return None
    outside = polytope.difference(splitter)
    if not outside:
        return None
    return [inside] + outside


def initial_partition(aut, domain=None, cuts=(), modes=None):
    """
    Blocks over the modes reachable in the syntactic mode graph, taking only
    edges whose guard meets the invariant inside ``domain``: each mode's
    invariant (intersected with ``domain``) split along every cut.

    ``cuts`` holds ``(name, polytope)`` or ``(name, polytope, modes)``; a block
    inside a cut's polytope carries its name as a label.
    """
    modes = aut.reachable_modes(domain) if modes is None else list(modes)
    blocks = []
    for mode in modes:
        region = aut.invariant(mode)
        if domain is not None:
            region = region.intersect(domain)
        if region.is_empty():
            continue
        cells = [(region, frozenset())]
        for cut in cuts:
            name, polytope = cut[0], cut[1]
            if len(cut) > 2 and mode not in cut[2]:
                continue
            refined = []
            for cell, labels in cells:
                pieces = split_cells(cell, polytope)
                if pieces is None:
                    inside = polytope.contains(cell)
                    refined.append((cell, labels | {name} if inside else labels))
                else:
                    refined.append((pieces[0], labels | {name}))
                    refined.extend((piece, labels) for piece in pieces[1:])
            cells = refined
        blocks.extend(new_block(mode, cell, labels) for cell, labels in cells)
    if not blocks:
        raise ModelError(d={"domain": ["No mode has a nonempty region."]}, m="empty_partition")
    return Partition(blocks)
