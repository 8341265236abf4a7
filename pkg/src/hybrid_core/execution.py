from dataclasses import dataclass, field
from typing import Any, List, Tuple

import numpy as np

from hybrid_core.automaton import HybridState


@dataclass
class FlowSegment:
    mode: Any
    t_start: float
    t_end: float = None
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)

    def record(self, t, x):
        self.times.append(t)
        self.states.append(np.array(x, dtype=float))
        self.t_end = t


@dataclass
class Jump:
    edges: Tuple[str, ...]
    pre: HybridState
    post: HybridState
    time: float
    emits: Tuple[str, ...] = ()

    @property
    def edge(self):
        return "+".join(self.edges)


class Execution:
    """Alternating flow segments and instantaneous jumps, in time order."""

    def __init__(self, automaton=None):
        self.automaton = automaton
        self.segments = []
        self.ambiguities = []
        self.invariant_exits = []

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    @property
    def flows(self):
        return [segment for segment in self.segments if isinstance(segment, FlowSegment)]

    @property
    def jumps(self):
        return [segment for segment in self.segments if isinstance(segment, Jump)]

    @property
    def final(self):
        for segment in reversed(self.segments):
            if isinstance(segment, Jump):
                return segment.post
            if segment.states:
                return HybridState(segment.mode, segment.states[-1])
        return None

    @property
    def end_time(self):
        for segment in reversed(self.segments):
            return segment.time if isinstance(segment, Jump) else segment.t_end
        return 0.0

    def events(self, name=None):
        """(time, event) for every event emitted along the execution."""
        return [(jump.time, event) for jump in self.jumps for event in jump.emits if name in (None, event)]

    def modes_visited(self):
        visited = []
        for segment in self.segments:
            mode = segment.post.mode if isinstance(segment, Jump) else segment.mode
            if not visited or visited[-1] != mode:
                visited.append(mode)
        return visited

    def rows(self):
        """(time, mode, x) rows: every flow sample and every jump's post-state."""
        for segment in self.segments:
            if isinstance(segment, Jump):
                yield segment.time, segment.post.mode, segment.post.x
            else:
                for t, x in zip(segment.times, segment.states):
                    yield t, segment.mode, x

    def sample_times(self):
        return np.array([t for t, _, _ in self.rows()])
