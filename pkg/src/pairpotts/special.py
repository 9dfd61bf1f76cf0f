"""Specialisations: six-vertex arrows, random-current traces, loop O(n).

Arrow convention: the arrow on medial edge ``c`` points so that the cell with
the larger model height ``H`` lies on its left. Reading arrows back, the
height ``Ht`` goes up by one when an arrow crosses the reading path from its
right to its left; with that rule ``Ht = -H + const`` and the spin rule
``sigma(v) = i^Ht(v)``, ``sigma'(u) = i^(Ht(u)+1)`` returns the original pair
up to a joint sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels, oracle
from .lattice import GENUS0, EdgeSet, EmbeddedGraph, MedialGraph, TopologyError, medial
from .model import Params, SpinPair, height
from .oracle import Report, _report, popcount, rel_error

PM = (-1.0, 1.0)


def _require_ising(p: Params) -> None:
    if p.q != 2 or p.qp != 2 or tuple(p.Q) != PM or tuple(p.Qp) != PM:
        raise ValueError("six-vertex mapping needs q = q' = 2 with alphabets {-1, +1}")


@dataclass
class ArrowConfig:
    """One arrow per medial edge; ``forward[c]`` means it runs along medial edge ``c``'s stored direction."""

    forward: np.ndarray
    host: MedialGraph

    def in_degrees(self) -> np.ndarray:
        ev = self.host.graph.ev
        heads = np.where(self.forward, ev[:, 1], ev[:, 0])
        return np.bincount(heads, minlength=self.host.n_vertices)

    def ice(self) -> bool:
        return bool((self.in_degrees() == 2).all())

    def to_bits(self) -> str:
        return "".join("1" if f else "0" for f in self.forward)

    @classmethod
    def from_bits(cls, bits: str, host: MedialGraph) -> "ArrowConfig":
        if len(bits) != host.n_edges or set(bits) - {"0", "1"}:
            raise ValueError("need one 0/1 character per medial edge")
        ac = cls(np.array([c == "1" for c in bits]), host)
        if not ac.ice():
            raise ValueError("arrow configuration violates the ice rule")
        return ac


def spins_to_arrows(sp: SpinPair, g: EmbeddedGraph, p: Params, mg: Optional[MedialGraph] = None) -> ArrowConfig:
    _require_ising(p)
    if g.topology != GENUS0:
        raise TopologyError("six-vertex mapping is implemented on genus 0")
    mg = mg or medial(g)
    H = height(sp, g, p, base=("u", g.outer_face), base_value=1.0)
    # the separated vertex sits on the left of the stored direction
    forward = H.vertex[mg.sep_vertex] > H.face[mg.sep_face]
    ac = ArrowConfig(forward, mg)
    assert ac.ice()
    return ac


def arrow_heights(ac: ArrowConfig, base_value: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Six-vertex height on vertices and faces, ``base_value`` at the outer face."""
    mg = ac.host
    g = mg.base
    nV = g.n_vertices
    # crossing c from its vertex to its face: +1 when the arrow runs forward
    step = np.where(ac.forward, 1, -1)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(nV + g.n_faces)]
    for c in range(mg.n_edges):
        v, u = int(mg.sep_vertex[c]), nV + int(mg.sep_face[c])
        adj[v].append((u, int(step[c])))
        adj[u].append((v, -int(step[c])))
    Ht = np.full(nV + g.n_faces, np.iinfo(np.int64).min, dtype=np.int64)
    start = nV + g.outer_face
    Ht[start] = base_value
    queue = [start]
    for x in queue:
        for y, s in adj[x]:
            if Ht[y] == np.iinfo(np.int64).min:
                Ht[y] = Ht[x] + s
                queue.append(y)
            elif Ht[y] != Ht[x] + s:
                raise ValueError("arrow heights are inconsistent (ice rule broken?)")
    return Ht[:nV], Ht[nV:]


def arrows_to_spins(ac: ArrowConfig, sign: int = 1) -> SpinPair:
    """Spins ``i^Ht`` on vertices and ``i^(Ht+1)`` on faces; ``sign`` picks ``Ht(u_inf) = +-1``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    hv, hu = arrow_heights(ac, base_value=sign)
    # i^k for k even is (-1)^(k/2); labels index {-1, +1}
    sv = 1 - 2 * ((hv // 2) % 2)
    su = 1 - 2 * (((hu + 1) // 2) % 2)
    g = ac.host.base
    return SpinPair.make(g, (sv + 1) // 2, (su + 1) // 2)


def vertex_types(ac: ArrowConfig) -> np.ndarray:
    """Type 1, 2 or 3 per medial vertex, read from the arrows alone.

    Alternating in/out around the vertex is type 3. Otherwise the two
    adjacent incoming arrows enclose a cell: a primal vertex gives type 1, a
    face gives type 2.
    """
    mg = ac.host
    G = mg.graph
    out = np.empty(mg.n_vertices, dtype=np.int64)
    for m in range(mg.n_vertices):
        e0 = int(np.flatnonzero((G.ev == m).any(axis=1))[0])
        start = 2 * e0 if G.ev[e0, 0] == m else 2 * e0 + 1
        darts, d = [], start
        while True:
            darts.append(d)
            d = int(G.rot_next[d])
            if d == start:
                break
        # outgoing dart t carries an incoming arrow when it points against t
        incoming = [bool(ac.forward[t >> 1]) == (t % 2 == 1) for t in darts]
        if all(incoming[k] != incoming[(k + 1) % 4] for k in range(4)):
            out[m] = 3
            continue
        for k in range(4):
            if incoming[k] and incoming[(k + 1) % 4]:
                c1, c2 = darts[k] >> 1, darts[(k + 1) % 4] >> 1
                out[m] = 1 if mg.sep_vertex[c1] == mg.sep_vertex[c2] else 2
                break
    return out


def ice_configurations(mg: MedialGraph) -> list[ArrowConfig]:
    """Every ice-rule orientation of a small medial graph (brute force)."""
    E = mg.n_edges
    if E > 24:
        raise oracle.CapExceeded("brute-force arrow enumeration limited to 24 medial edges")
    out = []
    for bits in range(1 << E):
        fw = np.array([(bits >> c) & 1 for c in range(E)], dtype=bool)
        ac = ArrowConfig(fw, mg)
        if ac.ice():
            out.append(ac)
    return out


def check_six_vertex(g: EmbeddedGraph, p: Params) -> Report:
    """Ice count = |Sigma|/2, round trips, weight correspondence and the induced law."""
    _require_ising(p)
    mg = medial(g)
    ices = ice_configurations(mg)
    sig = oracle.enumerate_sigma(g, p)
    dist = sig.distribution()
    n_sigma = len(dist)
    details: dict = {"ice_configurations": len(ices), "admissible_pairs": n_sigma}
    bad = 0 if 2 * len(ices) == n_sigma else 1
    weight_err = 0.0
    induced = np.zeros(sig.config_weight().shape)
    roundtrip_bad = 0
    for ac in ices:
        types = vertex_types(ac)
        w6 = p.a ** int((types == 1).sum()) * p.b ** int((types == 2).sum())
        sps = [arrows_to_spins(ac, s) for s in (1, -1)]
        for sp in sps:
            w = p.a ** len(sp.etap) * p.b ** len(sp.eta)
            weight_err = max(weight_err, abs(w - w6) / w)
            back = spins_to_arrows(sp, g, p, mg)
            roundtrip_bad += int(not np.array_equal(back.forward, ac.forward))
            r = int((sp.sigma * (2 ** np.arange(g.n_vertices))).sum())
            rp = int((sp.sigmap * (2 ** np.arange(g.n_faces))).sum())
            induced[r, rp] += 0.5 * w6
        s0, s1 = sps
        if not (np.array_equal(s0.sigma, 1 - s1.sigma) and np.array_equal(s0.sigmap, 1 - s1.sigmap)):
            roundtrip_bad += 1
    # spins -> arrows -> spins for every admissible pair
    labels, labelsp = sig.st.labels, sig.stp.labels
    for r, rp in dist.configs:
        sp = SpinPair.make(g, labels[r], labelsp[rp])
        ac = spins_to_arrows(sp, g, p, mg)
        hv, hu = arrow_heights(ac)
        H = height(sp, g, p)
        shift = np.concatenate([hv + H.vertex, hu + H.face])
        if np.ptp(shift) > 1e-9:
            roundtrip_bad += 1
        back = [arrows_to_spins(ac, s) for s in (1, -1)]
        if not any(np.array_equal(b.sigma, sp.sigma) and np.array_equal(b.sigmap, sp.sigmap) for b in back):
            roundtrip_bad += 1
    induced /= induced.sum()
    law_err = rel_error(induced, sig.config_weight() / sig.Z)
    details.update(weight_error=weight_err, law_error=law_err, roundtrip_failures=roundtrip_bad)
    err = max(weight_err, law_err, float(bad + roundtrip_bad))
    return _report("six_vertex", g, p, err, **details)


# ---------------------------------------------------------------------------
# random currents


@dataclass
class CurrentTrace:
    eta: EdgeSet
    omega: EdgeSet

    def check(self, g: EmbeddedGraph) -> None:
        assert self.eta.bits & ~self.omega.bits == 0, "eta not inside omega"
        deg = np.bincount(g.ev[self.eta.to_array()].ravel(), minlength=g.n_vertices)
        assert (deg % 2 == 0).all(), "eta is not even"


def current_trace(sp: SpinPair, omega: EdgeSet, p: Params) -> CurrentTrace:
    if p.qp != 2:
        raise ValueError("current traces need q' = 2")
    return CurrentTrace(sp.etap, omega)


def even_subgraphs(g: EmbeddedGraph) -> np.ndarray:
    """Bitmasks of all edge sets with even degree everywhere."""
    E = g.n_edges
    masks = np.arange(1 << E, dtype=np.int64)
    par = np.zeros((1 << E, g.n_vertices), dtype=np.int64)
    for e, (v1, v2) in enumerate(g.ev):
        bit = (masks >> e) & 1
        par[:, v1] ^= bit
        par[:, v2] ^= bit
    return masks[(par == 0).all(axis=1)]


def double_current_x(a: float) -> float:
    """Root in (0, 1] of ``a = 2x / (1 + x^2)``."""
    return (1.0 - math.sqrt(1.0 - a * a)) / a


def trace_law(g: EmbeddedGraph, p: Params) -> dict[tuple[int, int], float]:
    """Exact law of ``(eta(sigma'), omega)`` from the explicit joint enumeration."""
    jd = oracle.enumerate_joint(g, p)
    cfg, pr = jd.dist.configs, jd.dist.probs
    eta = jd.sig.stp.masks[cfg[:, 1]]
    out: dict[tuple[int, int], float] = {}
    for h, w, x in zip(eta.tolist(), cfg[:, 2].tolist(), pr):
        out[(h, w)] = out.get((h, w), 0.0) + float(x)
    return out


def check_current_traces(g: EmbeddedGraph, p: Params) -> Report:
    """Single current (q = 1) or double current (q = 2) form of the trace law."""
    if g.topology != GENUS0:
        raise TopologyError("stated on genus 0")
    if p.qp != 2 or p.q not in (1, 2):
        raise ValueError("traces are checked for q' = 2 and q in {1, 2}")
    E = g.n_edges
    law = trace_law(g, p)
    gamma = [(int(h), int(w)) for h in even_subgraphs(g) for w in range(1 << E) if (int(h) & ~w) == 0]
    ref = {}
    for h, w in gamma:
        nh, nw = int(popcount(h)), int(popcount(w))
        if p.q == 1:
            val = p.a**nh * (1 - p.b) ** (nw - nh) * p.b ** (E - nw)
        else:
            x = double_current_x(p.a)
            k = oracle._k_of(g, w)
            val = 2.0 ** (k + nw) * x**nh * (x * x) ** (nw - nh) * (1 - x * x) ** (E - nw)
        ref[(h, w)] = val
    tot = sum(ref.values())
    keys = sorted(set(ref) | set(law))
    a = np.array([law.get(k, 0.0) for k in keys])
    b = np.array([ref.get(k, 0.0) / tot for k in keys])
    details = {"support": len(keys), "free_fermion": abs(p.a**2 + p.b**2 - 1) < 1e-12}
    if p.q == 2:
        details["x"] = double_current_x(p.a)
    return _report("single_current" if p.q == 1 else "double_current", g, p, rel_error(a, b), **details)


# ---------------------------------------------------------------------------
# loop O(n)


def _require_cubic(g: EmbeddedGraph) -> None:
    deg = np.bincount(g.ev.ravel(), minlength=g.n_vertices)
    if not (deg == 3).all():
        raise ValueError("loop representation needs a 3-regular graph")


def loop_weights(g: EmbeddedGraph, n: int, x: float) -> dict[int, float]:
    """``n^(#loops) x^|eta|`` over loop configurations (even subgraphs of a cubic graph)."""
    _require_cubic(g)
    out = {}
    for h in even_subgraphs(g):
        mask = np.array([(int(h) >> e) & 1 for e in range(g.n_edges)], dtype=bool)
        lab, k = kernels.label_components(g.n_vertices, g.ev, mask)
        touched = np.zeros(g.n_vertices, bool)
        touched[g.ev[mask].ravel()] = True
        loops = len(set(lab[touched].tolist()))
        out[int(h)] = float(n) ** loops * x ** int(mask.sum())
    return out


def loop_marginal(g: EmbeddedGraph, p: Params) -> oracle.Distribution:
    """Enumerated law of ``eta(sigma')`` at ``q' = 2, b = 1``; configs are primal bitmasks."""
    _require_cubic(g)
    if p.qp != 2 or p.b != 1.0:
        raise ValueError("loop representation needs q' = 2 and b = 1")
    law = oracle.enumerate_sigma(g, p).etap_law()
    keys = np.array(sorted(law), dtype=np.int64)
    return oracle.Distribution(keys, np.array([law[int(k)] for k in keys]))


def check_loop_marginal(g: EmbeddedGraph, p: Params) -> Report:
    dist = loop_marginal(g, p)
    ref = loop_weights(g, p.q, p.a / p.q)
    tot = sum(ref.values())
    keys = sorted(set(ref) | set(int(k) for k in dist.configs))
    got = dict(zip((int(k) for k in dist.configs), dist.probs))
    a = np.array([got.get(k, 0.0) for k in keys])
    b = np.array([ref.get(k, 0.0) / tot for k in keys])
    return _report("loop_on", g, p, rel_error(a, b), n_loop_configs=len(ref))
