"""Parameters, admissible spin pairs, heights, and the spin-to-bond coupling.

Spins are stored as labels ``0..q-1`` indexing into the alphabet ``Params.Q``
(``Q'`` for the dual spins); contour sets and weights only see equality
patterns, while heights use the alphabet values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .lattice import (
    DUAL,
    GENUS0,
    PRIMAL,
    TORUS,
    Cluster,
    ClusterPartition,
    EdgeSet,
    EmbeddedGraph,
    TopologyError,
    clusters,
)

LINE_TOL = 1e-12


class InadmissibleError(ValueError):
    """The primal and dual contour sets cross."""


class HeightConsistencyError(RuntimeError):
    pass


def default_alphabet(q: int) -> tuple[float, ...]:
    """``{-(q-1), -(q-3), ..., q-1}``."""
    return tuple(float(-(q - 1) + 2 * i) for i in range(q))


@dataclass(frozen=True)
class Params:
    """Model parameters ``(q, q', a, b)`` with spin alphabets.

    ``a`` weighs dual-spin contours (primal edges in eta(sigma')) and ``b``
    weighs primal-spin contours.
    """

    q: int
    qp: int
    a: float
    b: float
    Q: tuple = None
    Qp: tuple = None

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1 or int(self.qp) != self.qp or self.qp < 1:
            raise ValueError("q and q' must be positive integers")
        for name, val in (("a", self.a), ("b", self.b)):
            if not (0.0 < val <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {val}")
        object.__setattr__(self, "Q", tuple(float(x) for x in (self.Q or default_alphabet(self.q))))
        object.__setattr__(self, "Qp", tuple(float(x) for x in (self.Qp or default_alphabet(self.qp))))
        for name, alpha, n in (("Q", self.Q, self.q), ("Q'", self.Qp, self.qp)):
            if len(alpha) != n or len(set(alpha)) != n:
                raise ValueError(f"{name} must hold {n} distinct values")
            if sorted(alpha) != sorted(-x for x in alpha):
                raise ValueError(f"{name} must be symmetric under negation")

    @property
    def on_line(self) -> bool:
        """``a + b == 1`` up to rounding."""
        return abs(self.a + self.b - 1.0) <= LINE_TOL

    @property
    def low(self) -> bool:
        """``a + b <= 1``."""
        return self.a + self.b <= 1.0 + LINE_TOL

    @property
    def high(self) -> bool:
        """``a + b >= 1``."""
        return self.a + self.b >= 1.0 - LINE_TOL

    @property
    def p(self) -> float:
        return self.qp / (self.qp + 1.0 / self.a - 1.0)

    @property
    def alpha(self) -> Optional[float]:
        """``ln((1-a)/b)``; None when a = 1."""
        if self.a >= 1.0:
            return None
        return math.log((1.0 - self.a) / self.b)

    @property
    def beta(self) -> Optional[float]:
        """``ln(1 + q'a/(1-a))``; None when a = 1."""
        if self.a >= 1.0:
            return None
        return math.log1p(self.qp * self.a / (1.0 - self.a))

    @property
    def x_primal(self) -> float:
        """Potts parameter ``e^J - 1`` of the sigma side (``e^-J = b``)."""
        return 1.0 / self.b - 1.0

    @property
    def x_dual(self) -> float:
        """Potts parameter of the sigma' side (``e^-J = a``)."""
        return 1.0 / self.a - 1.0

    @property
    def C(self) -> float:
        return 2.0 * max(abs(x) for x in self.Qp)

    def moment(self, k: int) -> float:
        """``m(k)``: k-th moment of a uniform draw from Q."""
        return float(np.mean(np.asarray(self.Q) ** k))

    def as_dict(self) -> dict:
        return {"q": self.q, "qp": self.qp, "a": self.a, "b": self.b, "Q": list(self.Q), "Qp": list(self.Qp)}


def contours(spins, g: EmbeddedGraph, on: str = PRIMAL) -> EdgeSet:
    """Edges whose two sides carry different spins.

    For spins on vertices (``on="primal"``) the result is a dual edge set; for
    spins on faces it is a primal edge set.
    """
    spins = np.asarray(spins)
    ends = g.ev if on == PRIMAL else g.eu
    diff = spins[ends[:, 0]] != spins[ends[:, 1]]
    return EdgeSet.from_array(DUAL if on == PRIMAL else PRIMAL, diff)


@dataclass
class SpinPair:
    """An admissible pair: labels on vertices and labels on faces."""

    sigma: np.ndarray
    sigmap: np.ndarray
    eta: EdgeSet = field(repr=False)
    etap: EdgeSet = field(repr=False)

    @classmethod
    def make(cls, g: EmbeddedGraph, sigma, sigmap, check: bool = True) -> "SpinPair":
        sigma = np.asarray(sigma, dtype=np.int64)
        sigmap = np.asarray(sigmap, dtype=np.int64)
        if sigma.shape != (g.n_vertices,) or sigmap.shape != (g.n_faces,):
            raise ValueError("spin arrays do not match the graph")
        eta = contours(sigma, g, PRIMAL)
        etap = contours(sigmap, g, DUAL)
        if check and eta.bits & etap.bits:
            raise InadmissibleError("eta(sigma)* meets eta(sigma')")
        return cls(sigma, sigmap, eta, etap)

    @classmethod
    def constant(cls, g: EmbeddedGraph) -> "SpinPair":
        return cls.make(g, np.zeros(g.n_vertices, np.int64), np.zeros(g.n_faces, np.int64))

    def values(self, p: Params) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(p.Q)[self.sigma], np.asarray(p.Qp)[self.sigmap]

    def admissible(self) -> bool:
        return not (self.eta.bits & self.etap.bits)


def contour_weight(n_etap, n_eta, p: Params):
    """``a^n_etap * b^n_eta``; accepts arrays."""
    return p.a ** np.asarray(n_etap, dtype=float) * p.b ** np.asarray(n_eta, dtype=float)


def weight(sp: SpinPair, p: Params) -> float:
    """Unnormalised weight ``a^|eta(sigma')| b^|eta(sigma)|``."""
    if not sp.admissible():
        raise InadmissibleError("weight is undefined off the admissible set")
    return float(contour_weight(len(sp.etap), len(sp.eta), p))


# ---------------------------------------------------------------------------
# heights


@dataclass
class HeightField:
    vertex: np.ndarray
    face: np.ndarray
    base: tuple
    base_value: float

    def at(self, cell: tuple) -> float:
        kind, i = cell
        return float(self.vertex[i] if kind == "v" else self.face[i])


def _incidence_lists(g: EmbeddedGraph) -> list[list[int]]:
    nV = g.n_vertices
    adj: list[set] = [set() for _ in range(nV + g.n_faces)]
    for (v1, v2), (u1, u2) in zip(g.ev, g.eu):
        for v in (v1, v2):
            for u in (u1, u2):
                adj[v].add(nV + u)
                adj[nV + u].add(v)
    return [sorted(s) for s in adj]


def height(
    sp: SpinPair,
    g: EmbeddedGraph,
    p: Params,
    base: Optional[tuple] = None,
    base_value: float = 0.0,
) -> HeightField:
    """Integrate ``H(u) - H(v) = sigma(v) sigma'(u)`` from a base cell.

    ``base`` is ``("u", face)`` or ``("v", vertex)``; it defaults to the outer face.
    """
    if g.topology != GENUS0:
        raise TopologyError("heights are single-valued on genus-0 graphs only")
    if base is None:
        base = ("u", g.outer_face)
    sv, su = sp.values(p)
    nV = g.n_vertices
    H = np.full(nV + g.n_faces, np.nan)
    start = base[1] + (nV if base[0] == "u" else 0)
    H[start] = base_value
    adj = _incidence_lists(g)
    queue = [start]
    for x in queue:
        for y in adj[x]:
            if np.isnan(H[y]):
                if y >= nV:
                    H[y] = H[x] + sv[x] * su[y - nV]
                else:
                    H[y] = H[x] - sv[y] * su[x - nV]
                queue.append(y)
    hv, hu = H[:nV], H[nV:]
    for (v1, v2), (u1, u2) in zip(g.ev, g.eu):
        for v in (v1, v2):
            for u in (u1, u2):
                if abs(hu[u] - hv[v] - sv[v] * su[u]) > 1e-9:
                    raise HeightConsistencyError(f"quad rule fails at ({v}, {u})")
    return HeightField(hv, hu, tuple(base), base_value)


def _path_arrays(g: EmbeddedGraph, path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalise a face path (list of faces, or ``(edge, from, to)`` steps) into arrays."""
    steps = list(path)
    if steps and not isinstance(steps[0], (tuple, list, np.ndarray)):
        faces = [int(u) for u in steps]
        steps = []
        for f, t in zip(faces, faces[1:]):
            shared = [e for e, (u1, u2) in enumerate(g.eu) if {int(u1), int(u2)} == {f, t}]
            if not shared:
                raise ValueError(f"faces {f} and {t} are not adjacent")
            steps.append((min(shared), f, t))
    for e, f, t in steps:
        if {int(g.eu[e, 0]), int(g.eu[e, 1])} != {int(f), int(t)}:
            raise ValueError(f"edge {e} does not join faces {f} and {t}")
    pe = np.array([s[0] for s in steps], dtype=np.int64)
    pf = np.array([s[1] for s in steps], dtype=np.int64)
    pt = np.array([s[2] for s in steps], dtype=np.int64)
    return pe, pf, pt


def height_increment(sp: SpinPair, g: EmbeddedGraph, p: Params, path, endpoint: int = 0) -> float:
    """``h'`` increment along a face path; ``endpoint`` picks which end of each crossed edge reads sigma."""
    pe, pf, pt = _path_arrays(g, path)
    sv, su = sp.values(p)
    return float(sum(sv[g.ev[e, endpoint]] * (su[t] - su[f]) for e, f, t in zip(pe, pf, pt)))


def height_increment_torus(sp: SpinPair, g: EmbeddedGraph, p: Params, path) -> float:
    """Path-based ``h'`` increment on the torus, where heights are not single-valued."""
    if g.topology != TORUS:
        raise TopologyError("use height() on genus-0 graphs")
    return height_increment(sp, g, p, path)


# ---------------------------------------------------------------------------
# percolation coupling


@dataclass
class PercolationPair:
    omega: EdgeSet
    omegap: EdgeSet
    _g: EmbeddedGraph = field(repr=False)
    _parts: dict = field(default_factory=dict, repr=False)

    @property
    def primal_clusters(self) -> ClusterPartition:
        if "p" not in self._parts:
            self._parts["p"] = clusters(self._g, self.omega)
        return self._parts["p"]

    @property
    def dual_clusters(self) -> ClusterPartition:
        if "d" not in self._parts:
            self._parts["d"] = clusters(self._g, self.omegap)
        return self._parts["d"]

    def check(self, sp: SpinPair, p: Params) -> None:
        """Assert regime and forcing inclusions and spin constancy on clusters."""
        full = (1 << self.omega.n_edges) - 1
        dag = full ^ self.omega.bits
        if p.low:
            assert dag & ~self.omegap.bits == 0, "omega-dagger not inside omega'"
        if p.high:
            assert self.omegap.bits & ~dag == 0, "omega' not inside omega-dagger"
        assert sp.etap.bits & ~self.omega.bits == 0
        assert sp.eta.bits & ~self.omegap.bits == 0
        om = self.omega.to_array()
        omp = self.omegap.to_array()
        ev, eu = self._g.ev, self._g.eu
        assert (sp.sigma[ev[om, 0]] == sp.sigma[ev[om, 1]]).all()
        assert (sp.sigmap[eu[omp, 0]] == sp.sigmap[eu[omp, 1]]).all()


def couple_percolation(sp: SpinPair, g: EmbeddedGraph, p: Params, rng: np.random.Generator) -> PercolationPair:
    """Draw ``(omega, omega')`` given the spins, one independent die per free quad."""
    u = rng.random(g.n_edges)
    om, omp = kernels.couple(sp.sigma, sp.sigmap, g.ev, g.eu, p.a, p.b, p.low, u)
    return PercolationPair(EdgeSet.from_array(PRIMAL, om), EdgeSet.from_array(DUAL, omp), g)


def cluster_increment(sp: SpinPair, g: EmbeddedGraph, p: Params, c: Cluster, path) -> float:
    """``d sigma'_C``: sigma' jumps along the path at crossed edges of ``c`` lying in eta(sigma')."""
    pe, pf, pt = _path_arrays(g, path)
    _, su = sp.values(p)
    total = 0.0
    for e, f, t in zip(pe, pf, pt):
        if c.edges[e] and e in sp.etap:
            total += su[t] - su[f]
    return float(total)


def erase_contours(sp: SpinPair, g: EmbeddedGraph, p: Params, c: Cluster, base: Optional[int] = None) -> np.ndarray:
    """Face values of ``sigma'_C``: sigma' with every contour outside ``c`` erased.

    Values are anchored so that ``sigma'_C(base) = sigma'(base)``. Raises if the
    retained jumps are not a gradient.
    """
    _, su = sp.values(p)
    base = g.outer_face if base is None else base
    keep = np.array([c.edges[e] and e in sp.etap for e in range(g.n_edges)])
    val = np.full(g.n_faces, np.nan)
    val[base] = su[base]
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n_faces)]
    for e, (u1, u2) in enumerate(g.eu):
        adj[u1].append((e, u2))
        adj[u2].append((e, u1))
    queue = [base]
    for x in queue:
        for e, y in adj[x]:
            step = (su[y] - su[x]) if keep[e] else 0.0
            if np.isnan(val[y]):
                val[y] = val[x] + step
                queue.append(y)
            elif abs(val[y] - val[x] - step) > 1e-9:
                raise HeightConsistencyError("erased contours leave a non-exact jump field")
    return val


# ---------------------------------------------------------------------------
# text fixtures


def dump_spins(sp: SpinPair, p: Params) -> str:
    """One ``cell_id spin_value`` line per cell; faces follow vertices."""
    sv, su = sp.values(p)
    vals = np.concatenate([sv, su])
    return "".join(f"{i} {x:g}\n" for i, x in enumerate(vals))


def load_spins(text: str, g: EmbeddedGraph, p: Params) -> SpinPair:
    vals = {}
    for line in text.strip().splitlines():
        i, x = line.split()
        vals[int(i)] = float(x)
    n = g.n_vertices + g.n_faces
    if sorted(vals) != list(range(n)):
        raise ValueError("cell ids must cover every vertex and face exactly once")
    qi = {x: i for i, x in enumerate(p.Q)}
    qpi = {x: i for i, x in enumerate(p.Qp)}
    try:
        sigma = [qi[vals[i]] for i in range(g.n_vertices)]
        sigmap = [qpi[vals[g.n_vertices + u]] for u in range(g.n_faces)]
    except KeyError as exc:
        raise ValueError(f"spin value {exc.args[0]} not in the alphabet") from None
    return SpinPair.make(g, sigma, sigmap)


def random_admissible(g: EmbeddedGraph, p: Params, rng: np.random.Generator, sweeps: int = 3) -> SpinPair:
    """A random admissible pair from a few cluster moves started at the constant pair (test helper)."""
    sig = np.zeros(g.n_vertices, np.int64)
    sigp = np.zeros(g.n_faces, np.int64)
    E, nV, nU = g.n_edges, g.n_vertices, g.n_faces
    for _ in range(sweeps):
        kernels.cluster_half(sig, p.q, g.ev, sigp, g.eu, p.b, rng.random(E), rng.random(nV))
        kernels.cluster_half(sigp, p.qp, g.eu, sig, g.ev, p.a, rng.random(E), rng.random(nU))
    return SpinPair.make(g, sig, sigp)
