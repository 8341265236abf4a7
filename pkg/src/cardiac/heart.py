"""
The cellular-automaton heart.

An N x N grid of cells, each cycling through the action-potential phases.
Resting (Phase 4) and relatively refractory (Phase 3-RRP) cells follow the
diffusion rows of the coupling matrix; every other phase is a linear ramp.
A cell's clock t_p holds the time of its last phase change, so the global
clock t never needs resetting.

The mode is the tuple of cell phases, far too many to enumerate, so the
automaton builds flows and edges on demand and steps all enabled cells at
once. The last coordinate is the electrogram seen between two electrodes;
it is carried as state with a consistent flow row and is re-evaluated at
every jump.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from backend.exceptions import ModelError
from cardiac.params import END, ElectrodeConfig
from hybrid_core.automaton import AffineReset, Edge, HybridAutomaton, StepResult
from plugins.flow.base import FlowPlugin
from plugins.flow.constant import Constant
from plugins.flow.linear import LinearODE
from setgeom.polytope import Polytope

logger = logging.getLogger(__name__)

P4, P0, P1, P2, P3E, P3R, U2 = "P4", "P0", "P1", "P2", "P3E", "P3R", "U2"
PHASES = (P4, P0, P1, P2, P3E, P3R, U2)
PHASE_INDEX = {phase: i for i, phase in enumerate(PHASES)}
DIFFUSING = (P4, P3R)
SUCCESSORS = {P4: (P0,), P0: (P1,), P1: (P2,), P2: (P3E,), P3E: (P3R,), P3R: (P4, U2), U2: (P2,)}
CACHE_SIZE = 256
# Electrodes closer than this to a cell centre are treated as touching it.
COINCIDENCE = 1e-12
# Below this |z| the phi functions are summed as series.
PHI_SERIES = 1e-2
PHI_TERMS = 8


def coupling_matrix(N, R_h, R_v):
    """
    Row (i, j) holds 1/R_h for horizontal neighbours, 1/R_v for vertical ones
    and minus their sum on the diagonal; missing neighbours at the boundary
    are simply left out, so every row sums to zero.
    """
    n = N * N
    A = np.zeros((n, n))
    for row in range(N):
        for col in range(N):
            k = row * N + col
            for dr, dc, R in ((0, -1, R_h), (0, 1, R_h), (-1, 0, R_v), (1, 0, R_v)):
                r, c = row + dr, col + dc
                if 0 <= r < N and 0 <= c < N:
                    A[k, r * N + c] = 1.0 / R
                    A[k, k] -= 1.0 / R
    return A


def grid_side(n):
    N = int(round(np.sqrt(n)))
    if N * N != n:
        raise ModelError(d={"Vdot": [f"{n} values do not fill a square grid."]}, m="dimension_mismatch")
    return N


def kernel(N, electrodes):
    """1/|p_ij - p0| - 1/|p_ij - p1| for every cell, row-major."""
    electrodes = electrodes.placed(N)
    rows, cols = np.divmod(np.arange(N * N), N)
    positions = np.column_stack([cols, rows]).astype(float) * electrodes.spacing
    d0 = np.linalg.norm(positions - np.asarray(electrodes.p0), axis=1)
    d1 = np.linalg.norm(positions - np.asarray(electrodes.p1), axis=1)
    touching = np.flatnonzero((d0 < COINCIDENCE) | (d1 < COINCIDENCE))
    if touching.size:
        cells = [f"({k // N}, {k % N})" for k in touching]
        raise ModelError(d={"electrodes": [f"Electrode sits on cell {cell}." for cell in cells]},
                         m="electrode_on_cell")
    return 1.0 / d0 - 1.0 / d1


def egm(Vdot, electrodes):
    """s = (1/K) sum_ij (1/|p_ij - p0| - 1/|p_ij - p1|) Vdot_ij, with K = 1 when unset."""
    Vdot = np.asarray(Vdot, dtype=float).reshape(-1)
    w = kernel(grid_side(Vdot.size), electrodes)
    K = electrodes.K if electrodes.K is not None else 1.0
    return float(w @ Vdot) / K


def normalised(params, electrodes):
    """Electrodes placed on the grid, with K scaling the strongest single upstroke to 1 mV."""
    electrodes = electrodes.placed(params.N)
    if electrodes.K is None:
        w = kernel(params.N, electrodes)
        K = float(np.max(np.abs(w))) * (params.V_max - params.V_th) / params.T0
        electrodes = electrodes.replace(K=K)
    return electrodes


def phi(z):
    """(e^z - 1) / z and (e^z - 1 - z) / z^2, elementwise."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < PHI_SERIES
    safe = np.where(small, 1.0, z)
    em1 = np.expm1(safe)
    p1 = em1 / safe
    p2 = (em1 - safe) / (safe * safe)
    if small.any():
        zs = z[small]
        s1 = np.zeros_like(zs)
        s2 = np.zeros_like(zs)
        for k in range(PHI_TERMS - 1, -1, -1):
            s1 = s1 * zs + 1.0 / math.factorial(k + 1)
            s2 = s2 * zs + 1.0 / math.factorial(k + 2)
        p1[small] = s1
        p2[small] = s2
    return p1, p2


@dataclass
class ModeTables:
    """Per-cell coefficients of one mode."""
    cells: np.ndarray
    ramping: np.ndarray
    b: np.ndarray
    slope_v: np.ndarray
    slope_age: np.ndarray
    level: np.ndarray
    rrp: np.ndarray
    egm_row: np.ndarray
    egm_offset: float


class HeartFlow(LinearODE):
    """
    The heart's flow in one mode. Ramping cells move linearly; the diffusing
    cells form a symmetric linear system forced by their ramping neighbours,
    solved exactly in its eigenbasis. The (A, b) of the whole state is only
    assembled when something asks for it.
    """

    def __init__(self, heart, mode):
        FlowPlugin.__init__(self, heart.dim)
        self.heart = heart
        self.mode = mode
        self.tables = heart.tables(mode)
        self.affine = True
        self._parts = None
        self._propagators = OrderedDict()
        self._start = None

    @property
    def A(self):
        return self._affine()[0]

    @property
    def b(self):
        return self._affine()[1]

    @property
    def norm(self):
        return float(np.linalg.norm(self.A, 1))

    def _affine(self):
        if self._parts is None:
            self._parts = self.heart.affine_flow(self.mode)
        return self._parts

    def _projection(self, x):
        # The crossing search flows many times from one start.
        if self._start is not None and np.array_equal(self._start[0], x):
            return self._start[1]
        tab = self.tables
        lam, Q, coupling = self.heart.spectrum(tab)
        V = x[:self.heart.n]
        g0 = coupling @ V[tab.ramping] + tab.b[tab.cells]
        g1 = coupling @ tab.b[tab.ramping]
        projection = (lam, Q, Q.T @ V[tab.cells], Q.T @ g0, Q.T @ g1)
        self._start = (x.copy(), projection)
        return projection

    def evaluate(self, x, t):
        x = self.check_state(x)
        if t == 0:
            return x.copy()
        heart, tab = self.heart, self.tables
        V = x[:heart.n]
        V_t = V + tab.b * t
        if tab.cells.size:
            lam, Q, y0, h0, h1 = self._projection(x)
            z = lam * t
            p1, p2 = phi(z)
            V_t[tab.cells] = Q @ ((1.0 + z * p1) * y0 + t * p1 * h0 + t * t * p2 * h1)
        y = x.copy()
        y[:heart.n] = V_t
        y[heart.T] += t
        y[heart.EGM] += tab.egm_row @ (V_t - V)
        return y

    def velocity(self, x):
        x = np.asarray(x, dtype=float)
        heart, tab = self.heart, self.tables
        v = np.zeros(self.dim)
        v[:heart.n] = tab.b
        v[tab.cells] += heart.A[tab.cells] @ x[:heart.n]
        v[heart.T] = 1.0
        v[heart.EGM] = tab.egm_row @ v[:heart.n]
        return v


class HeartAutomaton(HybridAutomaton):
    modes = None
    supports_group_jumps = True

    def __init__(self, params, electrodes=None, pacing=None, horizon=True, initial_v=None, name="heart"):
        self.params = params
        self.name = name
        self.n = n = params.cells
        self.dim = 2 * n + 2
        self.T, self.EGM = 2 * n, 2 * n + 1
        cells = [f"{r}_{c}" for r in range(params.N) for c in range(params.N)]
        self.coords = [f"V_{cell}" for cell in cells] + [f"tp_{cell}" for cell in cells] + ["t", "egm"]
        self.electrodes = normalised(params, electrodes or ElectrodeConfig())
        self.weights = kernel(params.N, self.electrodes) / self.electrodes.K
        self.A = coupling_matrix(params.N, params.R_h, params.R_v)
        self.pacing = {}
        for event, targets in (pacing or {}).items():
            targets = sorted({int(k) for k in targets})
            if any(not 0 <= k < n for k in targets):
                raise ModelError(d={"pacing": [f"{event} paces a cell outside the grid."]}, m="unknown_cell")
            self.pacing[event] = targets
        self.horizon = horizon
        self.terminal = {END}
        self.ramps = {
            P4: 0.0,
            P0: (params.V_max - params.V_th) / params.T0,
            P1: (params.V_plateau - params.V_max) / params.T1,
            P2: 0.0,
            P3E: (params.V_th - params.V_plateau) / params.T3,
            P3R: -params.rrp_rate,
            U2: (params.V_max2 - params.V_th2) / params.T_u2,
        }
        # First-change residual per phase: slope_v V + slope_age (t - t_p) + level.
        residuals = {
            P4: (-1.0, 0.0, params.V_th),
            P0: (-1.0, 0.0, params.V_max),
            P1: (1.0, 0.0, -params.V_plateau),
            P2: (0.0, -1.0, params.PD),
            P3E: (1.0, 0.0, -params.V_th),
            P3R: (1.0, 0.0, -params.V_min),
            U2: (-1.0, 0.0, params.V_max2),
        }
        self._phase_ramp = np.array([self.ramps[phase] for phase in PHASES])
        self._phase_diffusing = np.array([phase in DIFFUSING for phase in PHASES])
        self._phase_residual = np.array([residuals[phase] for phase in PHASES])
        self._tables = OrderedDict()
        self._spectra = OrderedDict()
        self._dynamics = OrderedDict()
        self._flows = OrderedDict()
        self._whole = Polytope.whole(self.dim)

        V0 = np.full(n, params.V_min) if initial_v is None else np.asarray(initial_v, dtype=float).reshape(-1)
        if V0.shape != (n,):
            raise ModelError(d={"initial_v": [f"Expected {n} potentials."]}, m="dimension_mismatch")
        rest = (P4,) * n
        x0 = np.zeros(self.dim)
        x0[:n] = V0
        x0[self.EGM] = self.egm_value(rest, V0)
        self.init = [(rest, Polytope.point(x0))]

    # dynamics

    @staticmethod
    def _cached(cache, key, build):
        if key in cache:
            cache.move_to_end(key)
            return cache[key]
        value = cache[key] = build()
        if len(cache) > CACHE_SIZE:
            cache.popitem(last=False)
        return value

    def tables(self, mode):
        def build():
            index = np.fromiter((PHASE_INDEX[phase] for phase in mode), dtype=int, count=self.n)
            diffusing = self._phase_diffusing[index]
            cells = np.flatnonzero(diffusing)
            b = self._phase_ramp[index]
            residual = self._phase_residual[index]
            return ModeTables(
                cells=cells, ramping=np.flatnonzero(~diffusing), b=b,
                slope_v=residual[:, 0], slope_age=residual[:, 1], level=residual[:, 2],
                rrp=index == PHASE_INDEX[P3R],
                egm_row=self.weights[cells] @ self.A[cells], egm_offset=float(self.weights @ b),
            )

        return self._cached(self._tables, mode, build)

    def spectrum(self, tables):
        """Eigenpairs of the coupling among the diffusing cells, and their coupling to the ramping ones."""
        def build():
            lam, Q = np.linalg.eigh(self.A[np.ix_(tables.cells, tables.cells)])
            return lam, Q, self.A[np.ix_(tables.cells, tables.ramping)]

        return self._cached(self._spectra, tables.cells.tobytes(), build)

    def dynamics(self, mode):
        """(A, b) with Vdot = A V + b in ``mode``."""
        def build():
            tab = self.tables(mode)
            A = np.zeros((self.n, self.n))
            A[tab.cells] = self.A[tab.cells]
            return A, tab.b

        return self._cached(self._dynamics, mode, build)

    def egm_value(self, mode, V):
        tab = self.tables(mode)
        return float(tab.egm_row @ V + tab.egm_offset)

    def affine_flow(self, mode):
        """(A, b) of the whole state in ``mode``."""
        n = self.n
        At, bt = self.dynamics(mode)
        A = np.zeros((self.dim, self.dim))
        b = np.zeros(self.dim)
        A[:n, :n] = At
        b[:n] = bt
        b[self.T] = 1.0
        A[self.EGM, :n] = self.weights @ At @ At
        b[self.EGM] = self.weights @ At @ bt
        return A, b

    def flow(self, mode):
        if mode == END:
            return Constant(self.dim)
        return self._cached(self._flows, mode, lambda: HeartFlow(self, mode))

    def invariant(self, mode):
        return self._whole

    def invariant_violation(self, mode, x):
        return 0.0

    def is_terminal(self, mode):
        return mode == END

    # urgent semantics

    def _residuals(self, mode, x):
        """Per cell: the residual of its first phase change and of the RRP re-excitation (<= 0 enabled)."""
        tab = self.tables(mode)
        V = x[:self.n]
        age = x[self.T] - x[self.n:2 * self.n]
        first = tab.slope_v * V + tab.slope_age * age + tab.level
        second = np.where(tab.rrp, self.params.V_th2 - V, np.inf)
        return first, second

    def guard_residuals(self, mode, x):
        if mode == END:
            return np.full(1, np.inf)
        x = np.asarray(x, dtype=float)
        first, second = self._residuals(mode, x)
        if not self.horizon:
            return np.concatenate([first, second])
        return np.concatenate([first, second, [self.params.D - x[self.T]]])

    def _enter(self, mode, x, cells):
        y = np.array(x, dtype=float)
        y[self.n + np.asarray(cells, dtype=int)] = y[self.T]
        y[self.EGM] = self.egm_value(mode, y[:self.n])
        return y

    def step(self, mode, x, tol):
        if mode == END:
            return None
        x = np.asarray(x, dtype=float)
        if self.horizon and x[self.T] >= self.params.D - tol:
            return StepResult(END, x.copy(), ("end",), (END,))
        first, second = self._residuals(mode, x)
        fires, rises = first <= tol, second <= tol
        cells = np.flatnonzero(fires | rises)
        if not cells.size:
            return None
        phases = list(mode)
        names = []
        for k in cells:
            src = phases[k]
            dst = SUCCESSORS[src][0] if fires[k] else U2
            phases[k] = dst
            names.append(f"c{k}:{src}>{dst}")
        new_mode = tuple(phases)
        return StepResult(new_mode, self._enter(new_mode, x, cells), tuple(names))

    def react(self, mode, x, event, tol):
        if mode == END:
            return None
        if event == END:
            return StepResult(END, np.array(x, dtype=float), ("stop",))
        cells = [k for k in self.pacing.get(event, ()) if mode[k] == P4]
        if not cells:
            return None
        phases = list(mode)
        for k in cells:
            phases[k] = P0
        new_mode = tuple(phases)
        return StepResult(new_mode, self._enter(new_mode, x, cells), tuple(f"c{k}:{event}" for k in cells))

    # structure, built on demand

    def _guard(self, k, src, dst):
        p = self.params
        a = np.zeros(self.dim)
        if src == P2:
            a[self.T], a[self.n + k] = -1.0, 1.0
            return Polytope.halfspace(a, -p.PD)
        rising = {(P4, P0): p.V_th, (P0, P1): p.V_max, (P3R, U2): p.V_th2, (U2, P2): p.V_max2}
        falling = {(P1, P2): p.V_plateau, (P3E, P3R): p.V_th, (P3R, P4): p.V_min}
        if (src, dst) in rising:
            a[k] = -1.0
            return Polytope.halfspace(a, -rising[src, dst])
        a[k] = 1.0
        return Polytope.halfspace(a, falling[src, dst])

    def _reset(self, k, new_mode):
        tab = self.tables(new_mode)
        M = np.eye(self.dim)
        c = np.zeros(self.dim)
        M[self.n + k] = 0.0
        M[self.n + k, self.T] = 1.0
        M[self.EGM] = 0.0
        M[self.EGM, :self.n] = tab.egm_row
        c[self.EGM] = tab.egm_offset
        return AffineReset(M, c)

    def edges_from(self, mode):
        if mode == END:
            return []
        edges = []
        for k, src in enumerate(mode):
            for dst in SUCCESSORS[src]:
                new_mode = mode[:k] + (dst,) + mode[k + 1:]
                edges.append(Edge(mode, new_mode, self._guard(k, src, dst), self._reset(k, new_mode),
                                  name=f"c{k}:{src}>{dst}"))
            if src == P4:
                new_mode = mode[:k] + (P0,) + mode[k + 1:]
                for event, cells in self.pacing.items():
                    if k in cells:
                        edges.append(Edge(mode, new_mode, self._whole, self._reset(k, new_mode),
                                          name=f"c{k}:{event}", listens=event))
        if self.horizon:
            a = np.zeros(self.dim)
            a[self.T] = -1.0
            edges.append(Edge(mode, END, Polytope.halfspace(a, -self.params.D), name="end", emits=(END,)))
        edges.append(Edge(mode, END, self._whole, name="stop", listens=END))
        return edges

    def all_edges(self):
        raise ModelError(d={"edges": [f"{self.name} builds its edges per mode."]}, m="lazy_modes")

    def edge(self, name):
        """An edge carrying ``name`` and its event; guards and resets depend on the mode and are not filled in."""
        listens = None
        if name == "stop":
            listens = END
        elif name != "end":
            cell, _, change = name.partition(":")
            if not (cell[:1] == "c" and cell[1:].isdigit() and int(cell[1:]) < self.n):
                raise ModelError(d={"edge": [f"No edge named {name}."]}, m="unknown_edge")
            src, arrow, dst = change.partition(">")
            if arrow:
                if dst not in SUCCESSORS.get(src, ()):
                    raise ModelError(d={"edge": [f"No edge named {name}."]}, m="unknown_edge")
            elif change in self.pacing and int(cell[1:]) in self.pacing[change]:
                listens = change
            else:
                raise ModelError(d={"edge": [f"No edge named {name}."]}, m="unknown_edge")
        return Edge(None, None, self._whole, name=name, listens=listens)

    def has_edge(self, name):
        try:
            self.edge(name)
        except ModelError:
            return False
        return True

    def events_listened(self):
        return set(self.pacing) | {END}

    def events_emitted(self):
        return {END} if self.horizon else set()

    def overlapping_guards(self):
        return []

    def mode_graph(self, domain=None):
        raise ModelError(d={"modes": [f"{self.name} has too many modes to enumerate."]}, m="lazy_modes")

    def reachable_modes(self, domain=None):
        return self.mode_graph(domain)

    # observations

    def potentials(self, x):
        return np.asarray(x, dtype=float)[:self.n].reshape(self.params.N, self.params.N)

    def phase_counts(self, mode):
        if mode == END:
            return {}
        return {phase: mode.count(phase) for phase in PHASES if phase in mode}


def build_heart(params, electrodes=None, pacing=None, horizon=True, initial_v=None, name="heart"):
    heart = HeartAutomaton(params, electrodes, pacing, horizon, initial_v, name)
    logger.info("Built %s: %dx%d cells, K=%.6g", heart, params.N, params.N, heart.electrodes.K)
    return heart
