import itertools

import numpy as np

from backend.exceptions import ModelError


class TemplateDirections:
    """A fixed, ordered list of unit directions used to hull sets into polytopes."""

    def __init__(self, V):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if V.size == 0:
            raise ModelError(d={"V": ["Template needs at least one direction."]}, m="empty_template")
        norms = np.linalg.norm(V, axis=1)
        if np.any(norms == 0):
            raise ModelError(d={"V": ["Template directions must be nonzero."]}, m="invalid_template")
        self.V = V / norms[:, None]
        self.dim = V.shape[1]

    def __iter__(self):
        return iter(self.V)

    def __len__(self):
        return self.V.shape[0]

    @classmethod
    def box(cls, dim):
        eye = np.eye(dim)
        return cls(np.vstack([eye, -eye]))

    @classmethod
    def octagonal(cls, dim):
        rows = [row for row in cls.box(dim).V]
        for i, j in itertools.combinations(range(dim), 2):
            for si, sj in itertools.product((1.0, -1.0), repeat=2):
                row = np.zeros(dim)
                row[i], row[j] = si, sj
                rows.append(row)
        return cls(np.array(rows))

    def extended(self, extra):
        """Directions padded with ``extra`` zero coordinates plus +-e for each new axis."""
        padded = np.hstack([self.V, np.zeros((len(self), extra))])
        eye = np.eye(self.dim + extra)[self.dim:]
        return TemplateDirections(np.vstack([padded, eye, -eye]))


def templates_for(dim, name=None):
    """Resolve a template name ('auto', 'box', 'oct') through the template plugins."""
    from config import config
    from plugins.plugins import get_plugin

    name = name or config.get('templates')
    if name == 'auto':
        name = 'oct' if dim <= config.get('octagonal_max_dim') else 'box'
    return get_plugin('template', name)().directions(dim)
