from collections import deque

from setgeom.polytope import Polytope


class Target:
    """
    Blocks in one of ``modes`` (any mode when ``None``) that meet ``region``.
    The negation matches blocks holding some state outside the target set.
    """

    def __init__(self, modes=None, region=None, negated=False, name="target"):
        self.modes = None if modes is None else set(modes)
        self.region = region
        self.negated = negated
        self.name = name

    def __repr__(self):
        return f"Target({self.name}{', negated' if self.negated else ''})"

    def _in_modes(self, mode):
        return self.modes is None or mode in self.modes

    def matches(self, block):
        if self.negated:
            if not self._in_modes(block.mode):
                return True
            return self.region is not None and not self.region.contains(block.polytope)
        if not self._in_modes(block.mode):
            return False
        return self.region is None or not block.polytope.intersect(self.region).is_empty()

    def holds(self, mode, x, tol=1e-9):
        inside = self._in_modes(mode) and (self.region is None or self.region.contains_point(x, tol))
        return inside != self.negated

    def negate(self):
        return Target(self.modes, self.region, not self.negated, f"not {self.name}")

    @classmethod
    def from_dict(cls, data, dim):
        region = Polytope.from_dict(data["region"], dim) if data.get("region") else None
        return cls(data.get("modes"), region, data.get("negated", False), data.get("name", "target"))


def _matcher(targets):
    if hasattr(targets, "matches"):
        return targets.matches
    if callable(targets):
        return targets
    ids = set(targets)
    return lambda block: block.id in ids


def reach_query(quotient, targets):
    """
    Breadth-first search from the initial blocks. Returns ``(True, path)`` with
    the shortest list of (src, dst, label) edges to a target block, else
    ``(False, None)``.
    """
    match = _matcher(targets)
    parents = {}
    frontier = deque()
    for node in quotient.initial:
        parents[node] = None
        frontier.append(node)
    while frontier:
        node = frontier.popleft()
        if match(quotient.block(node)):
            path = []
            while parents[node] is not None:
                src, label = parents[node]
                path.append((src, node, label))
                node = src
            return True, path[::-1]
        for dst, label in quotient.successors(node):
            if dst not in parents:
                parents[dst] = (node, label)
                frontier.append(dst)
    return False, None
