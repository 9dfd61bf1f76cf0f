"""Embedded graphs, their duals and medial graphs, and cluster topology.

Graphs are stored as combinatorial maps. Edge ``e`` owns two darts:
``2e`` runs ``v1 -> v2`` and ``2e + 1`` runs back. ``rot_next[d]`` is the next
dart counter-clockwise around the tail of ``d`` and ``dart_face[d]`` is the face
on the left of ``d``. The dual edge ``e*`` joins ``u1 = dart_face[2e]`` (left of
``v1 -> v2``) to ``u2 = dart_face[2e + 1]``, so a primal edge and its dual share
the index ``e``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels

GENUS0 = "genus0"
TORUS = "torus"
PRIMAL = "primal"
DUAL = "dual"


class TopologyError(ValueError):
    """Operation not defined for the graph's surface."""


@dataclass(eq=False)
class EmbeddedGraph:
    """A cellularly embedded graph together with its dual.

    Attributes:
        ev: ``(E, 2)`` primal endpoints ``(v1, v2)``.
        eu: ``(E, 2)`` dual endpoints ``(u1, u2)``.
        rot_next, rot_prev: counter-clockwise dart rotation around dart tails.
        dart_face: face on the left of each dart.
        topology: ``"genus0"`` or ``"torus"``.
        outer_face: the unbounded face ``u_inf`` for planar graphs, else None.
        winding, dual_winding: ``(E, 2)`` integer winding of ``v1 -> v2`` and
            ``u1 -> u2`` across the two fundamental cuts (torus only).
    """

    name: str
    n_vertices: int
    n_faces: int
    ev: np.ndarray
    eu: np.ndarray
    rot_next: np.ndarray
    rot_prev: np.ndarray
    dart_face: np.ndarray
    topology: str
    outer_face: Optional[int] = None
    winding: Optional[np.ndarray] = None
    dual_winding: Optional[np.ndarray] = None
    coords: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.ev)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def dart_tail(self, d: int) -> int:
        return int(self.ev[d >> 1, d & 1])

    def dart_head(self, d: int) -> int:
        return int(self.ev[d >> 1, 1 - (d & 1)])

    def ends(self, side: str) -> np.ndarray:
        return self.ev if side == PRIMAL else self.eu

    def n_nodes(self, side: str) -> int:
        return self.n_vertices if side == PRIMAL else self.n_faces

    def face_darts(self) -> list[list[int]]:
        """Dart cycle bounding each face, in traversal order."""
        out: list[list[int]] = [[] for _ in range(self.n_faces)]
        seen = np.zeros(2 * self.n_edges, dtype=bool)
        for d0 in range(2 * self.n_edges):
            if seen[d0]:
                continue
            d = d0
            cyc = []
            while not seen[d]:
                seen[d] = True
                cyc.append(d)
                d = int(self.rot_prev[d ^ 1])
            out[int(self.dart_face[d0])] = cyc
        return out

    def incidence_csr(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """CSR lists of incident edge indices per vertex (or per face)."""
        ends = self.ends(side)
        n = self.n_nodes(side)
        deg = np.bincount(ends.ravel(), minlength=n)
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=ptr[1:])
        fill = ptr[:-1].copy()
        idx = np.empty(ptr[-1], dtype=np.int64)
        for e, (x, y) in enumerate(ends):
            idx[fill[x]] = e
            fill[x] += 1
            idx[fill[y]] = e
            fill[y] += 1
        return ptr, idx

    def check(self, deep: bool = True) -> None:
        """Assert the structural invariants; raises AssertionError."""
        E = self.n_edges
        d = np.arange(2 * E)
        assert np.array_equal(self.rot_prev[self.rot_next], d)
        for dd in range(2 * E):
            assert self.dart_tail(int(self.rot_next[dd])) == self.dart_tail(dd)
        chi = 2 if self.topology == GENUS0 else 0
        assert self.euler_characteristic == chi, self.euler_characteristic
        # quads: u1, u2 are the faces on either side of e
        assert np.array_equal(self.eu[:, 0], self.dart_face[0::2])
        assert np.array_equal(self.eu[:, 1], self.dart_face[1::2])
        # face walks close and reproduce the declared faces
        for u, cyc in enumerate(self.face_darts()):
            assert cyc, f"face {u} is empty"
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                assert self.dart_head(a) == self.dart_tail(b)
                assert self.dart_face[a] == u
        if deep and self.topology == GENUS0:
            assert self.outer_face is not None
        if deep:
            dual = self.dual()
            assert np.array_equal(dual.eu, self.ev[:, ::-1])
            traced, faces = _trace_faces(dual.rot_prev)
            assert len(faces) == self.n_vertices
            for cyc in faces:
                assert len({int(dual.dart_face[d]) for d in cyc}) == 1
            dual.check(deep=False)

    def dual(self) -> "EmbeddedGraph":
        """The dual map; its faces are this graph's vertices.

        ``dual().dual()`` is this map with every edge reversed.
        """
        E = self.n_edges
        # dual dart 2e runs u1 -> u2 and crosses v1 -> v2 from left to right
        # around face f, dual darts leave in the order of the boundary walk of f
        rot_next = self.rot_prev[np.arange(2 * E) ^ 1].astype(np.int64)
        rot_prev = np.empty_like(rot_next)
        rot_prev[rot_next] = np.arange(2 * E)
        dart_face = np.empty(2 * E, dtype=np.int64)
        # left of u1 -> u2 is v2 (we cross v1 -> v2 heading to its right side)
        dart_face[0::2] = self.ev[:, 1]
        dart_face[1::2] = self.ev[:, 0]
        return EmbeddedGraph(
            name=self.name + "*",
            n_vertices=self.n_faces,
            n_faces=self.n_vertices,
            ev=self.eu.copy(),
            eu=np.stack([self.ev[:, 1], self.ev[:, 0]], axis=1),
            rot_next=rot_next,
            rot_prev=rot_prev,
            dart_face=dart_face,
            topology=self.topology,
            outer_face=None,
            winding=self.dual_winding,
            dual_winding=None if self.winding is None else -self.winding,
        )


def _trace_faces(rot_prev: np.ndarray) -> tuple[np.ndarray, list[list[int]]]:
    n_darts = len(rot_prev)
    dart_face = np.full(n_darts, -1, dtype=np.int64)
    faces: list[list[int]] = []
    for d0 in range(n_darts):
        if dart_face[d0] >= 0:
            continue
        d = d0
        cyc = []
        while dart_face[d] < 0:
            dart_face[d] = len(faces)
            cyc.append(d)
            d = int(rot_prev[d ^ 1])
        faces.append(cyc)
    return dart_face, faces


def from_rotation(
    name: str,
    n_vertices: int,
    edges: Sequence[tuple[int, int]],
    rotation: Sequence[Sequence[int]],
    topology: str,
    face_order: Optional[Sequence[int]] = None,
    outer_dart: Optional[int] = None,
) -> EmbeddedGraph:
    """Build a map from per-vertex counter-clockwise dart lists.

    ``face_order`` lists one dart per face; the face left of ``face_order[i]``
    gets index ``i``. ``outer_dart`` names a dart whose left face is ``u_inf``.
    """
    ev = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n_darts = 2 * len(ev)
    rot_next = np.full(n_darts, -1, dtype=np.int64)
    for v, darts in enumerate(rotation):
        for i, d in enumerate(darts):
            assert (ev[d >> 1, d & 1]) == v, (v, d)
            rot_next[d] = darts[(i + 1) % len(darts)]
    assert (rot_next >= 0).all()
    rot_prev = np.empty_like(rot_next)
    rot_prev[rot_next] = np.arange(n_darts)
    dart_face, faces = _trace_faces(rot_prev)
    if face_order is not None:
        assert len(face_order) == len(faces)
        relabel = np.empty(len(faces), dtype=np.int64)
        for i, d in enumerate(face_order):
            relabel[dart_face[d]] = i
        assert len(set(relabel.tolist())) == len(faces)
        dart_face = relabel[dart_face]
    outer = None if outer_dart is None else int(dart_face[outer_dart])
    eu = np.stack([dart_face[0::2], dart_face[1::2]], axis=1)
    return EmbeddedGraph(
        name=name,
        n_vertices=n_vertices,
        n_faces=len(faces),
        ev=ev,
        eu=eu,
        rot_next=rot_next,
        rot_prev=rot_prev,
        dart_face=dart_face,
        topology=topology,
        outer_face=outer,
    )


def from_coords(name: str, coords: np.ndarray, edges: Sequence[tuple[int, int]]) -> EmbeddedGraph:
    """Planar map with straight-line embedding; faces ordered row-major, ``u_inf`` last."""
    coords = np.asarray(coords, dtype=float)
    ev = np.asarray(edges, dtype=np.int64)
    n = len(coords)
    rotation: list[list[int]] = [[] for _ in range(n)]
    for e, (a, b) in enumerate(ev):
        rotation[a].append(2 * e)
        rotation[b].append(2 * e + 1)
    for v in range(n):
        def angle(d, v=v):
            w = ev[d >> 1, 1 - (d & 1)]
            dx, dy = coords[w] - coords[v]
            return np.arctan2(dy, dx) % (2 * np.pi)

        rotation[v].sort(key=angle)
    g = from_rotation(name, n, ev, rotation, GENUS0)
    faces = g.face_darts()
    area = []
    centroid = []
    for cyc in faces:
        pts = coords[[g.dart_tail(d) for d in cyc]]
        x, y = pts[:, 0], pts[:, 1]
        area.append(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        centroid.append(pts.mean(axis=0))
    outer = [i for i, s in enumerate(area) if s < 0]
    assert len(outer) == 1, area
    inner = [i for i in range(len(faces)) if i != outer[0]]
    inner.sort(key=lambda i: (round(centroid[i][1], 9), round(centroid[i][0], 9)))
    order = [faces[i][0] for i in inner] + [faces[outer[0]][0]]
    g = from_rotation(name, n, ev, rotation, GENUS0, face_order=order, outer_dart=faces[outer[0]][0])
    g.coords = coords
    return g


def build_box(n: int) -> EmbeddedGraph:
    """The ``2n x 2n`` grid with free boundary; its dual has a single outer face."""
    if n < 1:
        raise ValueError("box size n must be >= 1")
    L = 2 * n
    coords = np.array([(x, y) for y in range(L) for x in range(L)], dtype=float)
    edges = []
    for y in range(L):
        for x in range(L - 1):
            edges.append((y * L + x, y * L + x + 1))
    for y in range(L - 1):
        for x in range(L):
            edges.append((y * L + x, (y + 1) * L + x))
    return from_coords(f"box{n}", coords, edges)


def build_prism() -> EmbeddedGraph:
    """Triangular prism: the 3-regular planar test graph (6 vertices, 9 edges)."""
    ang = np.deg2rad([90.0, 210.0, 330.0])
    outer = np.stack([2 * np.cos(ang), 2 * np.sin(ang)], axis=1)
    inner = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    coords = np.vstack([outer, inner])
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)]
    return from_coords("prism", coords, edges)


def build_torus(n: int) -> EmbeddedGraph:
    """``n x n`` square-lattice torus; face ``y*n + x`` has lower-left corner ``(x, y)``."""
    if n < 2:
        raise ValueError("torus size n must be >= 2")
    N = n * n
    vid = lambda x, y: (y % n) * n + (x % n)  # noqa: E731
    edges = []
    wind = []
    for y in range(n):
        for x in range(n):
            edges.append((vid(x, y), vid(x + 1, y)))
            wind.append((1 if x == n - 1 else 0, 0))
    for y in range(n):
        for x in range(n):
            edges.append((vid(x, y), vid(x, y + 1)))
            wind.append((0, 1 if y == n - 1 else 0))
    rotation = []
    for y in range(n):
        for x in range(n):
            h = y * n + x
            vtx = N + y * n + x
            w_ = y * n + (x - 1) % n
            s_ = N + ((y - 1) % n) * n + x
            rotation.append([2 * h, 2 * vtx, 2 * w_ + 1, 2 * s_ + 1])
    order = [2 * (y * n + x) for y in range(n) for x in range(n)]
    g = from_rotation(f"torus{n}", N, edges, rotation, TORUS, face_order=order)
    g.winding = np.asarray(wind, dtype=np.int64)
    # u1 -> u2 crosses v1 -> v2 from left to right: east edges step south,
    # north edges step east
    dw = np.zeros((2 * N, 2), dtype=np.int64)
    for y in range(n):
        for x in range(n):
            dw[y * n + x] = (0, -1 if y == 0 else 0)
            dw[N + y * n + x] = (1 if x == 0 else 0, 0)
    g.dual_winding = dw
    return g


def torus_dual_isomorphism(g: EmbeddedGraph) -> np.ndarray:
    """``perm[e]``: the primal edge onto which ``e*`` maps under the half-cell shift of the square torus.

    Face ``(x, y)`` goes to vertex ``(x, y)``.
    """
    if g.topology != TORUS:
        raise TopologyError("needs a torus")
    n = int(round(np.sqrt(g.n_vertices)))
    N = n * n
    perm = np.empty(2 * N, dtype=np.int64)
    for y in range(n):
        for x in range(n):
            # dual of the east edge at (x, y) joins faces (x, y) and (x, y-1)
            perm[y * n + x] = N + ((y - 1) % n) * n + x
            # dual of the north edge at (x, y) joins faces (x-1, y) and (x, y)
            perm[N + y * n + x] = y * n + (x - 1) % n
    return perm


# ---------------------------------------------------------------------------
# edge sets and clusters


@dataclass(frozen=True)
class EdgeSet:
    """Subset of primal edges or of dual edges, as an integer bitset over edge indices."""

    side: str
    bits: int
    n_edges: int

    @classmethod
    def from_indices(cls, side: str, idx, n_edges: int) -> "EdgeSet":
        bits = 0
        for e in idx:
            bits |= 1 << int(e)
        return cls(side, bits, n_edges)

    @classmethod
    def from_array(cls, side: str, arr) -> "EdgeSet":
        arr = np.asarray(arr, dtype=bool)
        return cls.from_indices(side, np.flatnonzero(arr), len(arr))

    def to_array(self) -> np.ndarray:
        return bits_to_array(self.bits, self.n_edges)

    def indices(self) -> list[int]:
        return [e for e in range(self.n_edges) if self.bits >> e & 1]

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def __contains__(self, e: int) -> bool:
        return bool(self.bits >> e & 1)

    def dagger(self) -> "EdgeSet":
        """``omega -> E* minus omega*`` (and the mirror map for dual sets)."""
        full = (1 << self.n_edges) - 1
        return EdgeSet(DUAL if self.side == PRIMAL else PRIMAL, full ^ self.bits, self.n_edges)


def bits_to_array(bits: int, n: int) -> np.ndarray:
    return np.array([(bits >> e) & 1 for e in range(n)], dtype=bool)


@dataclass
class Cluster:
    side: str
    nodes: np.ndarray  # bool over V (primal) or U (dual)
    edges: np.ndarray  # bool over edge indices

    @property
    def trivial(self) -> bool:
        return not self.edges.any()


@dataclass
class ClusterPartition:
    side: str
    labels: np.ndarray
    k: int
    edges: np.ndarray
    ends: np.ndarray = field(repr=False, default=None)

    def component(self, x: int) -> int:
        return int(self.labels[x])

    def same(self, x: int, y: int) -> bool:
        return self.labels[x] == self.labels[y]

    def cluster(self, label: int) -> Cluster:
        nodes = self.labels == label
        return Cluster(self.side, nodes, self._edge_labels() == label)

    def _edge_labels(self) -> np.ndarray:
        out = np.full(len(self.edges), -1, dtype=np.int64)
        out[self.edges] = self.labels[self.ends[self.edges, 0]]
        return out

    def all_clusters(self) -> list[Cluster]:
        return [self.cluster(i) for i in range(self.k)]


def clusters(g: EmbeddedGraph, s: EdgeSet | np.ndarray, side: Optional[str] = None) -> ClusterPartition:
    """Connected components of ``(V, s)`` or ``(U, s*)``, isolated nodes included."""
    if isinstance(s, EdgeSet):
        side, mask = s.side, s.to_array()
    else:
        mask = np.asarray(s, dtype=bool)
        side = side or PRIMAL
    ends = g.ends(side)
    labels, k = kernels.label_components(g.n_nodes(side), ends, mask)
    return ClusterPartition(side, labels, int(k), mask, ends)


def count_clusters(g: EmbeddedGraph, s: EdgeSet) -> int:
    return clusters(g, s).k


def torus_delta(g: EmbeddedGraph, s: EdgeSet | np.ndarray, side: Optional[str] = None) -> int:
    """Rank over Q of the homology classes carried by the cycles of ``s`` (0, 1 or 2)."""
    if g.topology != TORUS:
        raise TopologyError("torus_delta needs a torus")
    if isinstance(s, EdgeSet):
        side, mask = s.side, s.to_array()
    else:
        mask = np.asarray(s, dtype=bool)
        side = side or PRIMAL
    ends = g.ends(side)
    wind = g.winding if side == PRIMAL else g.dual_winding
    vecs = kernels.cycle_windings(g.n_nodes(side), ends, wind, mask)
    if len(vecs) == 0:
        return 0
    return int(np.linalg.matrix_rank(vecs.astype(float)))


# ---------------------------------------------------------------------------
# disconnection in genus 0


def complement_regions(g: EmbeddedGraph, c: Cluster) -> np.ndarray:
    """Region label of every cell ``V ∪ U`` (vertices first) in the sphere minus ``c``.

    Cells lying on ``c`` get label -1. Two cells share a region iff they are
    joined by vertex-face incidences at free cells or by quads not cut by ``c``.
    """
    if g.topology != GENUS0:
        raise TopologyError("disconnection is defined on genus-0 graphs only")
    on_dual = c.side == DUAL
    labels = kernels.complement_regions(
        g.n_vertices, g.n_faces, g.ev, g.eu, c.nodes.astype(np.bool_), c.edges.astype(np.bool_), on_dual
    )
    return labels


def disconnects(g: EmbeddedGraph, c: Cluster, x1: int, x2: int, cell_side: str = DUAL) -> bool:
    """Whether cluster ``c`` disconnects cell ``x1`` from cell ``x2``.

    For dual clusters (clusters of omega') the cells are faces and a face lying
    on ``c`` counts as disconnected. For primal clusters the cells are faces
    and only genuine separation counts.
    """
    if g.topology != GENUS0:
        raise TopologyError("disconnection is defined on genus-0 graphs only")
    off = g.n_vertices if cell_side == DUAL else 0
    if c.side == DUAL and cell_side == DUAL and (c.nodes[x1] or c.nodes[x2]):
        return True
    if c.side == PRIMAL and cell_side == PRIMAL and (c.nodes[x1] or c.nodes[x2]):
        return True
    reg = complement_regions(g, c)
    return bool(reg[off + x1] != reg[off + x2])


# ---------------------------------------------------------------------------
# paths in the dual


def face_path(g: EmbeddedGraph, start: int, end: int) -> list[tuple[int, int, int]]:
    """Shortest face-adjacency path as ``(edge, from_face, to_face)`` steps.

    Breadth-first search; among shortest paths, the one using the lowest edge
    index at each step from ``start`` is returned.
    """
    if start == end:
        return []
    nbrs: list[list[tuple[int, int]]] = [[] for _ in range(g.n_faces)]
    for e, (u1, u2) in enumerate(g.eu):
        if u1 != u2:
            nbrs[u1].append((e, u2))
            nbrs[u2].append((e, u1))
    dist = np.full(g.n_faces, -1)
    dist[end] = 0
    queue = [end]
    for u in queue:
        for _, w in nbrs[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    if dist[start] < 0:
        raise ValueError("faces are not connected")
    path = []
    u = start
    while u != end:
        e, w = min((e, w) for e, w in nbrs[u] if dist[w] == dist[u] - 1)
        path.append((e, u, w))
        u = w
    return path


def torus_face_path(g: EmbeddedGraph, start: int, end: int) -> list[tuple[int, int, int]]:
    """Shortest dual path on the square torus: horizontal steps first, then vertical."""
    if g.topology != TORUS:
        raise TopologyError("torus_face_path needs a torus")
    n = int(round(np.sqrt(g.n_faces)))
    x0, y0 = start % n, start // n
    x1, y1 = end % n, end // n
    N = n * n
    path = []

    def step(dx_total, x, y, horizontal):
        sgn = 1 if dx_total > 0 else -1
        for _ in range(abs(dx_total)):
            if horizontal:
                # crossing the vertical edge on the east (or west) side of face (x, y)
                xe = (x + 1) % n if sgn > 0 else x
                e = N + y * n + xe
                nx = (x + sgn) % n
                path.append((e, y * n + x, y * n + nx))
                x = nx
            else:
                ye = (y + 1) % n if sgn > 0 else y
                e = ye * n + x
                ny = (y + sgn) % n
                path.append((e, y * n + x, ny * n + x))
                y = ny
        return x, y

    def shortest(d):
        d %= n
        return d if d <= n - d else d - n

    x, y = step(shortest(x1 - x0), x0, y0, True)
    step(shortest(y1 - y0), x, y, False)
    return path


def box_center_face(g: EmbeddedGraph) -> int:
    """Inner face touching the centre of a ``build_box`` grid."""
    L = int(round(np.sqrt(g.n_vertices)))
    n = L // 2
    return (n - 1) * (L - 1) + (n - 1)


# ---------------------------------------------------------------------------
# medial graph


@dataclass(eq=False)
class MedialGraph:
    """Medial graph of a planar map.

    Medial vertex ``e`` sits on primal edge ``e``. Medial edge ``c`` is the corner
    at dart ``c`` of the primal map: it runs from medial vertex ``c >> 1`` to
    ``rot_next[c] >> 1`` and separates vertex ``sep_vertex[c]`` (on its left)
    from face ``sep_face[c]`` (on its right).
    """

    graph: EmbeddedGraph
    base: EmbeddedGraph
    quad: np.ndarray  # (E, 4): v1, u1, v2, u2
    sep_vertex: np.ndarray
    sep_face: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    def degrees(self) -> np.ndarray:
        return np.bincount(self.graph.ev.ravel(), minlength=self.n_vertices)


def medial(g: EmbeddedGraph) -> MedialGraph:
    if g.topology != GENUS0:
        raise TopologyError("medial graphs are built for genus-0 maps only")
    E = g.n_edges
    n_corners = 2 * E
    edges = [(c >> 1, int(g.rot_next[c]) >> 1) for c in range(n_corners)]
    rotation = []
    for e in range(E):
        dp, dm = 2 * e, 2 * e + 1
        # counter-clockwise around the crossing: (v2,uL), (v1,uL), (v1,uR), (v2,uR)
        rotation.append([
            2 * int(g.rot_prev[dm]) + 1,
            2 * dp,
            2 * int(g.rot_prev[dp]) + 1,
            2 * dm,
        ])
    mg = from_rotation(g.name + "x", E, edges, rotation, GENUS0)
    mg.outer_face = None
    sep_vertex = np.array([g.dart_tail(c) for c in range(n_corners)], dtype=np.int64)
    sep_face = g.dart_face.copy()
    quad = np.stack([g.ev[:, 0], g.eu[:, 0], g.ev[:, 1], g.eu[:, 1]], axis=1)
    return MedialGraph(mg, g, quad, sep_vertex, sep_face)


def dump_edges(g: EmbeddedGraph) -> str:
    """Plain-text adjacency dump: one ``index v1 v2 u1 u2`` line per edge."""
    return "".join(f"{e} {a} {b} {c} {d}\n" for e, ((a, b), (c, d)) in enumerate(zip(g.ev, g.eu)))
