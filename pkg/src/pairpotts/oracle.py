"""Exact enumeration on small graphs and the identity checks built on it.

Spin configurations are indexed in mixed radix with cell 0 least
significant. Contour sets are int64 bitmasks over edge indices, and every
law is aggregated over contour classes (configurations sharing the same
contour mask have the same weight), which keeps the prism at q = q' = 3
within a fraction of a second.

Joint bond states use one ternary digit per quad: 0 = (e open, e* closed),
1 = (e closed, e* open), 2 = the regime's remaining state (both open when
a + b <= 1, both closed otherwise).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Optional, Sequence

import numpy as np

from . import kernels, model
from .lattice import (
    DUAL,
    GENUS0,
    PRIMAL,
    TORUS,
    EdgeSet,
    EmbeddedGraph,
    TopologyError,
    clusters,
    disconnects,
    face_path,
    torus_delta,
    torus_dual_isomorphism,
)
from .model import Params

DEFAULT_CAP = 10**8
TOL = 1e-10
ABS_FLOOR = 1e-12


class CapExceeded(RuntimeError):
    """Enumeration would exceed the configured size cap."""


def popcount(x) -> np.ndarray:
    return np.bitwise_count(np.asarray(x, dtype=np.int64)).astype(np.int64)


def rel_error(x, y, floor: float = ABS_FLOOR) -> float:
    """``max |x - y| / max(|y|, floor)``; entries below the floor compare absolutely."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - y) / np.maximum(np.abs(y), floor)))


def tv(x, y) -> float:
    return 0.5 * float(np.abs(np.asarray(x) - np.asarray(y)).sum())


# ---------------------------------------------------------------------------
# results


@dataclass
class Report:
    identity: str
    graph: str
    params: dict
    max_error: Optional[float] = None
    counterexample: Any = None
    passed: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"identity": self.identity, "graph": self.graph, "params": self.params}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        else:
            out["max_error"] = self.max_error
        out["pass"] = bool(self.passed)
        if self.details:
            out["details"] = self.details
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _report(identity, g, p, err, tol=TOL, **details) -> Report:
    params = p.as_dict() if isinstance(p, Params) else dict(p)
    return Report(identity, g.name, params, float(err), None, bool(err <= tol), details)


@dataclass
class Distribution:
    """Finite law; ``configs`` holds one row (or integer code) per support point."""

    configs: np.ndarray
    weights: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def keys(self) -> list[bytes]:
        return [np.ascontiguousarray(c).tobytes() for c in self.configs]

    def __len__(self) -> int:
        return len(self.weights)


COND_LIMIT = 1e6


@dataclass
class PartitionValue:
    """``value`` with ``condition = sum |terms| / |sum|`` of the evaluated series."""

    value: float
    tag: str
    condition: float = 1.0

    @property
    def ill_conditioned(self) -> bool:
        return self.condition > COND_LIMIT


def _summed(terms: np.ndarray, scale: float, tag: str) -> PartitionValue:
    total = float(terms.sum())
    mag = float(np.abs(terms).sum())
    cond = mag / abs(total) if total != 0.0 else math.inf
    return PartitionValue(total * scale, tag, cond)


# ---------------------------------------------------------------------------
# spin tables


@dataclass(eq=False)
class SpinTable:
    """All ``q^n`` labelings of ``n`` cells with their contour masks and classes."""

    n: int
    q: int
    labels: np.ndarray
    masks: np.ndarray
    cls: np.ndarray
    cmask: np.ndarray
    ccount: np.ndarray

    @property
    def csize(self) -> np.ndarray:
        return popcount(self.cmask)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.cls == c)


def mixed_radix(n: int, q: int) -> np.ndarray:
    r = np.arange(q**n, dtype=np.int64)
    return ((r[:, None] // (q ** np.arange(n, dtype=np.int64))) % q).astype(np.int8)


def _edge_masks(labels: np.ndarray, ends: np.ndarray) -> np.ndarray:
    diff = labels[:, ends[:, 0]] != labels[:, ends[:, 1]]
    weights = np.left_shift(np.int64(1), np.arange(ends.shape[0], dtype=np.int64))
    return diff.astype(np.int64) @ weights


@lru_cache(maxsize=64)
def spin_table(g: EmbeddedGraph, q: int, side: str) -> SpinTable:
    n = g.n_nodes(side)
    labels = mixed_radix(n, q)
    masks = _edge_masks(labels, g.ends(side))
    cmask, cls, ccount = np.unique(masks, return_inverse=True, return_counts=True)
    return SpinTable(n, q, labels, masks, cls.ravel(), cmask, ccount)


def _check_cap(g: EmbeddedGraph, p: Params, cap: int, factor: int = 1) -> None:
    size = p.q**g.n_vertices * p.qp**g.n_faces * factor
    if size > cap:
        raise CapExceeded(f"{size} configurations exceed the cap {cap}")


# ---------------------------------------------------------------------------
# law of (sigma, sigma')


@dataclass(eq=False)
class SigmaLaw:
    g: EmbeddedGraph
    p: Params
    st: SpinTable
    stp: SpinTable
    W: np.ndarray  # class-pair weights, counts included
    Z: float

    @property
    def class_prob(self) -> np.ndarray:
        return self.W / self.Z

    def config_weight(self) -> np.ndarray:
        """Per-configuration weight matrix ``(q^|V|, q'^|U|)``."""
        w = self.W / np.outer(self.st.ccount, self.stp.ccount)
        return w[self.st.cls][:, self.stp.cls]

    def sigma_marginal(self) -> np.ndarray:
        return (self.W.sum(axis=1) / self.st.ccount / self.Z)[self.st.cls]

    def sigmap_marginal(self) -> np.ndarray:
        return (self.W.sum(axis=0) / self.stp.ccount / self.Z)[self.stp.cls]

    def eta_law(self) -> dict[int, float]:
        """Law of ``eta(sigma)`` as ``{dual-edge bitmask: probability}``."""
        pr = self.W.sum(axis=1) / self.Z
        return {int(m): float(x) for m, x in zip(self.st.cmask, pr)}

    def etap_law(self) -> dict[int, float]:
        pr = self.W.sum(axis=0) / self.Z
        return {int(m): float(x) for m, x in zip(self.stp.cmask, pr)}

    def distribution(self) -> Distribution:
        """Explicit law over admissible pairs; configs are ``(sigma index, sigma' index)``."""
        w = self.config_weight()
        i, j = np.nonzero(w)
        return Distribution(np.stack([i, j], axis=1), w[i, j])

    def increment_matrix(self, path) -> np.ndarray:
        """``h'`` increment along ``path`` for every (sigma, sigma') configuration pair."""
        pe = np.array([s[0] for s in path], dtype=np.int64)
        pf = np.array([s[1] for s in path], dtype=np.int64)
        pt = np.array([s[2] for s in path], dtype=np.int64)
        qv = np.asarray(self.p.Q)
        qpv = np.asarray(self.p.Qp)
        A = qv[self.st.labels[:, self.g.ev[pe, 0]]]
        B = qpv[self.stp.labels[:, pt]] - qpv[self.stp.labels[:, pf]]
        return A @ B.T

    def increment_law(self, path) -> tuple[np.ndarray, np.ndarray]:
        """Distinct increment values and their probabilities."""
        D = np.round(self.increment_matrix(path), 9)
        w = self.config_weight() / self.Z
        vals, inv = np.unique(D.ravel(), return_inverse=True)
        return vals, np.bincount(inv, weights=w.ravel())


def enumerate_sigma(g: EmbeddedGraph, p: Params, cap: int = DEFAULT_CAP) -> SigmaLaw:
    """Exact law of the admissible pair ``(sigma, sigma')``."""
    _check_cap(g, p, cap)
    st = spin_table(g, p.q, PRIMAL)
    stp = spin_table(g, p.qp, DUAL)
    compat = (st.cmask[:, None] & stp.cmask[None, :]) == 0
    w = model.contour_weight(stp.csize[None, :], st.csize[:, None], p)
    W = np.outer(st.ccount, stp.ccount) * w * compat
    return SigmaLaw(g, p, st, stp, W, float(W.sum()))


# ---------------------------------------------------------------------------
# joint law with bonds


def _tables(p: Params) -> tuple[float, float, float]:
    """Coupling-table probabilities of states 0, 1, 2 for a free quad."""
    if p.low:
        return p.a, p.b, max(1.0 - p.a - p.b, 0.0)
    return 1.0 - p.b, 1.0 - p.a, max(p.a + p.b - 1.0, 0.0)


@lru_cache(maxsize=16)
def _state_table(E: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    states = mixed_radix(E, 3)
    pw = np.left_shift(np.int64(1), np.arange(E, dtype=np.int64))
    oc = (states == 0).astype(np.int64) @ pw
    co = (states == 1).astype(np.int64) @ pw
    third = (states == 2).astype(np.int64) @ pw
    return states, oc, co, third


@dataclass(eq=False)
class JointLaw:
    """Law of ``(omega, omega', class of sigma, class of sigma')`` in factorised form.

    ``P_sj[s, j]`` is the probability of bond state ``s`` with sigma' in class
    ``j`` (all members together); ``P_si`` likewise for sigma.
    """

    sig: SigmaLaw
    omega_bits: np.ndarray
    omegap_bits: np.ndarray
    P_s: np.ndarray
    P_sj: np.ndarray
    P_si: np.ndarray

    @property
    def g(self) -> EmbeddedGraph:
        return self.sig.g

    @property
    def p(self) -> Params:
        return self.sig.p

    def omega_marginal(self) -> np.ndarray:
        """``P(omega)`` indexed by primal bitmask."""
        return np.bincount(self.omega_bits, weights=self.P_s, minlength=1 << self.g.n_edges)

    def omegap_marginal(self) -> np.ndarray:
        """``P(omega')`` indexed by dual bitmask."""
        return np.bincount(self.omegap_bits, weights=self.P_s, minlength=1 << self.g.n_edges)

    def omega_sigmap(self) -> np.ndarray:
        """``P(omega, sigma' class)`` as a ``(2^E, classes)`` array."""
        out = np.zeros((1 << self.g.n_edges, self.P_sj.shape[1]))
        np.add.at(out, self.omega_bits, self.P_sj)
        return out


def joint_law(g: EmbeddedGraph, p: Params, cap: int = DEFAULT_CAP) -> JointLaw:
    E = g.n_edges
    _check_cap(g, p, cap)
    if 3**E > cap:
        raise CapExceeded(f"3^{E} bond states exceed the cap {cap}")
    sig = enumerate_sigma(g, p, cap)
    return _joint_from(sig)


def _joint_from(sig: SigmaLaw) -> JointLaw:
    g, p = sig.g, sig.p
    E = g.n_edges
    states, oc, co, third = _state_table(E)
    t_oc, t_co, t_3 = _tables(p)
    n_oc, n_co, n_3 = popcount(oc), popcount(co), popcount(third)
    mi, mj = sig.st.cmask, sig.stp.cmask
    si, sj = popcount(mi), popcount(mj)
    # eta(sigma) must sit in the (closed, open) quads, eta(sigma') in the (open, closed) ones
    M1 = ((mi[None, :] & ~co[:, None]) == 0) * t_co ** (n_co[:, None] - si[None, :]).clip(0)
    M2 = ((mj[None, :] & ~oc[:, None]) == 0) * t_oc ** (n_oc[:, None] - sj[None, :]).clip(0)
    pre = (t_3**n_3)[:, None] / sig.Z
    P_sj = pre * (M1 @ sig.W) * M2
    P_si = pre * M1 * (M2 @ sig.W.T)
    P_s = P_sj.sum(axis=1)
    # omega = quads in state 0, plus state 2 when both open; omega' similarly
    if p.low:
        om_bits = oc | third
        omp_bits = co | third
    else:
        om_bits = oc
        omp_bits = co
    return JointLaw(sig, om_bits, omp_bits, P_s, P_sj, P_si)


@dataclass(eq=False)
class JointDistribution:
    """Explicit law over the consistent configurations ``(omega, omega', sigma, sigma')``."""

    dist: Distribution  # configs: (sigma index, sigma' index, omega bits, omega' bits)
    sig: SigmaLaw


def enumerate_joint(g: EmbeddedGraph, p: Params, cap: int = DEFAULT_CAP) -> JointDistribution:
    """Explicit enumeration weighting each consistent configuration by its closed-form weight.

    Independent of the coupling-table route used by ``joint_law``.
    """
    E = g.n_edges
    _check_cap(g, p, cap, factor=3**E)
    sig = enumerate_sigma(g, p, cap)
    st, stp = sig.st, sig.stp
    full = (1 << E) - 1
    if p.low:
        # every quad has e open or e* open
        pairs = [(o, d) for o in range(1 << E) for d in range(1 << E) if (o | d) == full]
    else:
        pairs = [(o, d) for o in range(1 << E) for d in range(1 << E) if (o & d) == 0]
    pairs = np.array(pairs, dtype=np.int64)
    O, D = pairs[:, 0], pairs[:, 1]
    rows = []
    for r in range(len(st.labels)):
        m = st.masks[r]
        for rp in range(len(stp.labels)):
            mp = stp.masks[rp]
            if m & mp:
                continue
            ok = ((m & O) == 0) & ((m & ~D) == 0) & ((mp & D) == 0) & ((mp & ~O) == 0)
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                continue
            o, d = O[idx], D[idx]
            if p.low:
                w = (
                    p.a ** popcount(o & ~d)
                    * p.b ** popcount(d & ~o)
                    * (1.0 - p.a - p.b) ** popcount(o & d)
                )
            else:
                w = (
                    p.a ** popcount(mp)
                    * (1.0 - p.b) ** popcount(o & ~mp)
                    * p.b ** popcount(m)
                    * (1.0 - p.a) ** popcount(d & ~m)
                    * (p.a + p.b - 1.0) ** popcount(full & ~(o | d))
                )
            keep = w > 0
            for oo, dd, ww in zip(o[keep], d[keep], w[keep]):
                rows.append((r, rp, oo, dd, ww))
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    configs = arr[:, :4].astype(np.int64)
    return JointDistribution(Distribution(configs, arr[:, 4]), sig)


# ---------------------------------------------------------------------------
# Potts partition functions


@lru_cache(maxsize=4096)
def _subset_table(n: int, ends_bytes: bytes, E: int) -> np.ndarray:
    ends = np.frombuffer(ends_bytes, dtype=np.int64).reshape(E, 2)
    if E > 30:
        raise CapExceeded("subset enumeration is limited to 30 edges")
    return kernels.subset_cluster_table(n, ends)


def subset_table(n: int, ends: np.ndarray) -> np.ndarray:
    ends = np.ascontiguousarray(ends, dtype=np.int64).reshape(-1, 2)
    return _subset_table(int(n), ends.tobytes(), ends.shape[0])


def _graph_args(graph, edges=None) -> tuple[int, np.ndarray]:
    if isinstance(graph, EmbeddedGraph):
        n, ends = graph.n_vertices, graph.ev
    else:
        n, ends = graph
        ends = np.asarray(ends, dtype=np.int64).reshape(-1, 2)
    if edges is not None:
        mask = edges.to_array() if isinstance(edges, EdgeSet) else np.asarray(edges, dtype=bool)
        ends = ends[mask]
    return int(n), ends


def potts_Z(graph, q: int, x: float, edges=None, route: str = "auto") -> PartitionValue:
    """``Z_{G,q}(x)`` with ``x = e^J - 1``.

    ``graph`` is an EmbeddedGraph or ``(n_vertices, ends)``; ``edges`` restricts
    to a spanning subgraph. The subset route divides
    ``sum_xi x^|xi| q^k(xi)`` by ``(x+1)^|E|``; the spin route sums
    ``(x+1)^-(#disagreeing edges)`` over all ``q^n`` labelings. ``auto``
    takes the spin route for ``x < 0``, where the subset sum alternates
    in sign and cancels, as long as ``q^n`` stays small.
    """
    n, ends = _graph_args(graph, edges)
    E = ends.shape[0]
    if route == "auto":
        route = "spin" if x < 0.0 and x != -1.0 and q**n <= 1 << 20 else "subset"
    if route == "subset":
        if x == -1.0:
            raise ValueError("x = -1 is singular for the subset route; use route='spin'")
        T = subset_table(n, ends)
        j = np.arange(E + 1, dtype=float)[:, None]
        k = np.arange(n + 1, dtype=float)[None, :]
        terms = T * (float(x) ** j) * (float(q) ** k)
        return _summed(terms, 1.0 / (x + 1.0) ** E, "potts")
    if route == "spin":
        return _summed(_spin_terms(n, ends, q, x), 1.0, "potts")
    raise ValueError(f"unknown route {route!r}")


def _spin_terms(n: int, ends: np.ndarray, q: int, x: float) -> np.ndarray:
    """Spin-sum grouped by the number of disagreeing edges."""
    if ends.shape[0] == 0:
        return np.array([float(q**n)])
    labels = mixed_radix(n, q)
    d = (labels[:, ends[:, 0]] != labels[:, ends[:, 1]]).sum(axis=1)
    hist = np.bincount(d, minlength=ends.shape[0] + 1)
    with np.errstate(divide="ignore"):
        return hist * (x + 1.0) ** (-np.arange(len(hist), dtype=float))


def check_potts_duality(g: EmbeddedGraph, q: int, x: float) -> Report:
    """``Z_G(x) = q^(|V|-|E|-1) ((x+q)/(x+1))^|E| Z_G*(q/x)`` on a planar map."""
    if g.topology != GENUS0:
        raise TopologyError("planar duality needs a genus-0 graph")
    if x in (0.0, -1.0):
        raise ValueError("x must avoid 0 and -1")
    E = g.n_edges
    lhs = potts_Z(g, q, x).value
    zd = potts_Z((g.n_faces, g.eu), q, q / x).value
    rhs = q ** (g.n_vertices - E - 1) * ((x + q) / (x + 1)) ** E * zd
    return _report("potts_duality", g, {"q": q, "x": x}, abs(lhs - rhs) / abs(rhs), lhs=lhs, rhs=rhs)


def check_resummation(g: EmbeddedGraph, q: int, x: float, t: float) -> Report:
    """``sum_xi t^|xi| (x+1)^|xi| Z_(V,xi)(x) = (1 + t(x+1))^|E| Z_G(tx/(1+t))``."""
    if t == -1.0:
        raise ValueError("t = -1 is excluded")
    E = g.n_edges
    labels = mixed_radix(g.n_vertices, q)
    dis = labels[:, g.ev[:, 0]] != labels[:, g.ev[:, 1]]
    lhs = 0.0
    for bits in range(1 << E):
        sel = np.array([(bits >> e) & 1 for e in range(E)], dtype=bool)
        d = dis[:, sel].sum(axis=1)
        z = float(((x + 1.0) ** (-d.astype(float))).sum())
        k = int(sel.sum())
        lhs += t**k * (x + 1.0) ** k * z
    rhs = (1.0 + t * (x + 1.0)) ** E * potts_Z(g, q, t * x / (1.0 + t)).value
    err = abs(lhs - rhs) / max(abs(rhs), ABS_FLOOR)
    return _report("resummation", g, {"q": q, "x": x, "t": t}, err, lhs=lhs, rhs=rhs)


# ---------------------------------------------------------------------------
# omega marginals


def _face_graph_of(g: EmbeddedGraph, om_bits: int) -> tuple[int, np.ndarray]:
    """``(V(omega), omega)*``: faces of omega (clusters of omega-dagger), one edge per e in omega."""
    om = np.array([(om_bits >> e) & 1 for e in range(g.n_edges)], dtype=bool)
    lab, k = kernels.label_components(g.n_faces, g.eu, ~om)
    ends = lab[g.eu[om]]
    return int(k), ends.reshape(-1, 2)


def _k_of(g: EmbeddedGraph, bits: int, side: str = PRIMAL) -> int:
    mask = np.array([(bits >> e) & 1 for e in range(g.n_edges)], dtype=bool)
    return int(kernels.label_components(g.n_nodes(side), g.ends(side), mask)[1])


def omega_forms(g: EmbeddedGraph, p: Params) -> dict[str, np.ndarray]:
    """Unnormalised closed-form omega weights, indexed by bitmask."""
    E = g.n_edges
    N = 1 << E
    size = popcount(np.arange(N))
    k = np.array([_k_of(g, w) for w in range(N)])
    out = {}
    if p.b < 1.0:
        x = (1.0 - p.a - p.b) / p.a
        zd = np.array([potts_Z(_face_graph_of(g, w), p.qp, x).value for w in range(N)])
        out["dual_Z"] = p.q**k.astype(float) * ((1.0 - p.b) / p.b) ** size * zd
    if not p.on_line:
        x = p.qp * p.a / (1.0 - p.a - p.b)
        zp = np.array(
            [potts_Z((g.n_vertices, g.ev), p.qp, x, edges=_bits(w, E)).value for w in range(N)]
        )
        out["primal_Z"] = p.q**k.astype(float) * ((1.0 - (1.0 - p.qp) * p.a - p.b) / p.b) ** size * zp
    stp = spin_table(g, p.qp, DUAL)
    mj = stp.cmask
    om = np.arange(N, dtype=np.int64)
    inside = (mj[None, :] & ~om[:, None]) == 0
    sj = popcount(mj)[None, :]
    w = (
        stp.ccount[None, :]
        * p.a**sj
        * (1.0 - p.b) ** (size[:, None] - sj).clip(0)
        * p.b ** (E - size)[:, None]
        * inside
    )
    out["omega_sigmap"] = p.q**k.astype(float) * w.sum(axis=1)
    return out


def _bits(w: int, E: int) -> np.ndarray:
    return np.array([(w >> e) & 1 for e in range(E)], dtype=bool)


def _normalise(w: np.ndarray) -> np.ndarray:
    return w / w.sum()


def check_omega_marginals(g: EmbeddedGraph, p: Params, law: Optional[JointLaw] = None) -> Report:
    if g.topology != GENUS0:
        raise TopologyError("the dual-graph forms are stated for genus 0")
    law = law or joint_law(g, p)
    target = law.omega_marginal()
    forms = omega_forms(g, p)
    errs = {name: rel_error(_normalise(w), target) for name, w in forms.items()}
    return _report("omega_marginals", g, p, max(errs.values()), forms=errs)


def check_fk_reduction(g: EmbeddedGraph, p: Params, law: Optional[JointLaw] = None) -> Report:
    """On a + b = 1 the omega-marginal is FK(qq') (with ``q'^-delta`` on the torus)."""
    if not p.on_line:
        raise ValueError("the FK reduction needs a + b = 1")
    law = law or joint_law(g, p)
    E = g.n_edges
    N = 1 << E
    size = popcount(np.arange(N))
    k = np.array([_k_of(g, w) for w in range(N)], dtype=float)
    fk = (p.q * p.qp) ** k * p.p**size * (1.0 - p.p) ** (E - size)
    details = {}
    if g.topology == TORUS:
        delta = np.array([torus_delta(g, EdgeSet(PRIMAL, w, E)) for w in range(N)])
        fk = fk * float(p.qp) ** (-delta.astype(float))
    target = law.omega_marginal()
    fk = _normalise(fk)
    err = rel_error(fk, target)
    details["fk_error"] = err
    # spins rebuilt from omega: uniform per omega-cluster, uniform per omega-dagger cluster
    sig = law.sig
    full = N - 1
    kd = np.array([_k_of(g, full ^ w, DUAL) for w in range(N)], dtype=float)
    per = fk * float(p.q) ** (-k) * float(p.qp) ** (-kd)
    mi, mj = sig.st.cmask, sig.stp.cmask
    om = np.arange(N, dtype=np.int64)
    A = ((mi[None, :] & om[:, None]) == 0).astype(float)  # (N, I)
    B = ((mj[None, :] & ~om[:, None]) == 0).astype(float)  # (N, J)
    rebuilt = (A * per[:, None]).T @ B * np.outer(sig.st.ccount, sig.stp.ccount)
    err2 = rel_error(rebuilt, sig.class_prob)
    details["reconstruction_error"] = err2
    if g.topology == TORUS and p.q == p.qp and abs(p.a - p.b) < 1e-15:
        perm = torus_dual_isomorphism(g)
        comp = full ^ np.arange(N)
        moved = np.zeros(N, dtype=np.int64)
        for e in range(E):
            moved |= ((comp >> e) & 1) << perm[e]
        dag = np.bincount(moved, weights=target, minlength=N)
        details["self_dual_error"] = rel_error(dag, target)
        err = max(err, details["self_dual_error"])
    return _report("fk_reduction", g, p, max(err, err2), **details)


def check_torus_topology(g: EmbeddedGraph) -> Report:
    """Over every edge set: ``delta(omega) + delta(omega-dagger) = 2`` and
    ``k(omega-dagger) = k(omega) + |omega| - delta(omega) - |V| + 1``."""
    if g.topology != TORUS:
        raise TopologyError("needs a torus")
    E = g.n_edges
    if E > 24:
        raise CapExceeded("exhaustive torus check limited to 24 edges")
    full = (1 << E) - 1
    bad_delta = bad_euler = 0
    first = None
    hist = {0: 0, 1: 0, 2: 0}
    for w in range(1 << E):
        d = torus_delta(g, EdgeSet(PRIMAL, w, E))
        dd = torus_delta(g, EdgeSet(DUAL, full ^ w, E))
        hist[d] += 1
        k, kd = _k_of(g, w), _k_of(g, full ^ w, DUAL)
        ok_d = d + dd == 2
        ok_e = kd == k + int(popcount(w)) - d - g.n_vertices + 1
        bad_delta += not ok_d
        bad_euler += not ok_e
        if first is None and not (ok_d and ok_e):
            first = {"omega": w, "delta": d, "delta_dagger": dd, "k": k, "k_dagger": kd}
    rep = Report(
        "torus_topology", g.name, {}, float(bad_delta + bad_euler), first,
        bad_delta + bad_euler == 0,
        {"delta_failures": bad_delta, "euler_failures": bad_euler, "delta_counts": hist, "subsets": full + 1},
    )
    return rep


# ---------------------------------------------------------------------------
# unconstrained model


def unconstrained_sigma_marginal(g: EmbeddedGraph, p: Params) -> np.ndarray:
    """Marginal of s under ``exp(sum_e delta_s (alpha + beta delta_s'))`` with s' on vertices too."""
    if p.alpha is None:
        raise ValueError("alpha and beta are unavailable at a = 1")
    st = mixed_radix(g.n_vertices, p.q)
    stp = mixed_radix(g.n_vertices, p.qp)
    A = (st[:, g.ev[:, 0]] == st[:, g.ev[:, 1]]).astype(float)
    B = (stp[:, g.ev[:, 0]] == stp[:, g.ev[:, 1]]).astype(float)
    expo = p.alpha * A.sum(axis=1)[:, None] + p.beta * (A @ B.T)
    expo -= expo.max()
    w = np.exp(expo).sum(axis=1)
    return w / w.sum()


def reduced_potts_marginal(g: EmbeddedGraph, q: int, qp: int, J: float) -> np.ndarray:
    """``qq'``-state Potts with coupling J, spins reduced mod q."""
    t = mixed_radix(g.n_vertices, q * qp).astype(np.int64)
    agree = (t[:, g.ev[:, 0]] == t[:, g.ev[:, 1]]).sum(axis=1)
    w = np.exp(J * (agree - agree.max()))
    code = ((t % q) * (q ** np.arange(g.n_vertices))).sum(axis=1)
    return np.bincount(code, weights=w, minlength=q**g.n_vertices) / w.sum()


def check_unconstrained_equivalence(g: EmbeddedGraph, p: Params, sig: Optional[SigmaLaw] = None) -> Report:
    if g.topology != GENUS0:
        raise TopologyError("stated for genus 0")
    if p.a >= 1.0:
        raise ValueError("a = 1 leaves alpha, beta undefined")
    sig = sig or enumerate_sigma(g, p)
    target = sig.sigma_marginal()
    dist = tv(unconstrained_sigma_marginal(g, p), target)
    details = {"tv": dist}
    if p.on_line:
        details["reduced_potts_tv"] = tv(reduced_potts_marginal(g, p.q, p.qp, p.beta), target)
        dist = max(dist, details["reduced_potts_tv"])
    return _report("unconstrained_equivalence", g, p, dist, **details)


# ---------------------------------------------------------------------------
# correlations


def _partition_moment(g: EmbeddedGraph, p: Params, r: np.ndarray, om_bits: np.ndarray) -> np.ndarray:
    """``prod over clusters A of m(sum_{v in A} r_v)`` for each omega."""
    E = g.n_edges
    out = np.empty(len(om_bits))
    for i, w in enumerate(om_bits):
        lab, k = kernels.label_components(g.n_vertices, g.ev, _bits(int(w), E))
        tot = np.bincount(lab, weights=r, minlength=k)
        out[i] = np.prod([p.moment(int(round(s))) for s in tot])
    return out


def spin_moment(sig: SigmaLaw, r) -> float:
    """``<prod_v sigma(v)^r_v>`` from the exact spin law."""
    vals = np.asarray(sig.p.Q)[sig.st.labels]
    f = np.prod(vals ** np.asarray(r, dtype=float)[None, :], axis=1)
    return float((f * sig.sigma_marginal()).sum())


def cluster_moment(law: JointLaw, r) -> float:
    """Same expectation via the cluster partition of omega."""
    pw = law.omega_marginal()
    idx = np.flatnonzero(pw)
    return float((_partition_moment(law.g, law.p, np.asarray(r, float), idx) * pw[idx]).sum())


def default_exponents(g: EmbeddedGraph) -> list[np.ndarray]:
    n = g.n_vertices
    out = []
    for v1, v2 in itertools.combinations(range(n), 2):
        r = np.zeros(n, np.int64)
        r[[v1, v2]] = 1
        out.append(r)
    r = np.zeros(n, np.int64)
    r[:3] = (2, 1, 1)
    out.append(r)
    r = np.zeros(n, np.int64)
    r[:3] = (1, 1, 1)
    out.append(r)
    return out


def check_correlation_formula(
    g: EmbeddedGraph, p: Params, exponents: Optional[Sequence] = None, law: Optional[JointLaw] = None
) -> Report:
    law = law or joint_law(g, p)
    exponents = default_exponents(g) if exponents is None else [np.asarray(r) for r in exponents]
    err = 0.0
    rows = []
    for r in exponents:
        lhs = spin_moment(law.sig, r)
        rhs = cluster_moment(law, r)
        e = abs(lhs - rhs) / max(abs(rhs), ABS_FLOOR)
        if abs(rhs) < ABS_FLOOR:
            e = abs(lhs - rhs)
        err = max(err, e)
        rows.append((list(map(int, r)), lhs, rhs))
    return _report("correlation_formula", g, p, err, n_cases=len(rows))


def check_griffiths(
    g: EmbeddedGraph, p: Params, pairs: Optional[Sequence] = None, law: Optional[JointLaw] = None
) -> Report:
    """``<s^(r+s)> >= <s^r><s^s>`` for a + b <= 1; reports the most negative slack."""
    if not p.low:
        raise ValueError("the inequality is claimed for a + b <= 1 only")
    law = law or joint_law(g, p)
    if pairs is None:
        base = default_exponents(g)[: min(6, g.n_vertices * (g.n_vertices - 1) // 2)]
        n = g.n_vertices
        sq = []
        for v in range(min(n, 2)):
            r = np.zeros(n, np.int64)
            r[v] = 2
            sq.append(r)
        base = base + sq
        pairs = list(itertools.combinations_with_replacement(base, 2))
    cache: dict = {}

    def mom(r):
        key = tuple(int(x) for x in r)
        if key not in cache:
            cache[key] = (spin_moment(law.sig, r), cluster_moment(law, r))
        return cache[key]

    worst = math.inf
    route_err = 0.0
    for r, s in pairs:
        r, s = np.asarray(r), np.asarray(s)
        for x in (r, s, r + s):
            d, c = mom(x)
            route_err = max(route_err, abs(d - c))
        slack = mom(r + s)[0] - mom(r)[0] * mom(s)[0]
        worst = min(worst, slack)
    violation = max(0.0, -worst)
    rep = _report("griffiths", g, p, max(violation, route_err), min_slack=worst, route_error=route_err)
    return rep


# ---------------------------------------------------------------------------
# height variance and cluster counts


def _n_prime(g: EmbeddedGraph, omp_bits: int, u1: int, u2: int) -> int:
    part = clusters(g, EdgeSet(DUAL, omp_bits, g.n_edges))
    return sum(disconnects(g, c, u1, u2) for c in part.all_clusters())


def variance_quantities(g: EmbeddedGraph, p: Params, u1: int, u2: int, law: Optional[JointLaw] = None) -> dict:
    """Exact Var[dh'], E[N_d], E[N_nonzero], E[N'] for the canonical path u1 -> u2."""
    law = law or joint_law(g, p)
    sig = law.sig
    path = face_path(g, u1, u2)
    D = sig.increment_matrix(path)
    w = sig.config_weight() / sig.Z
    mean = float((w * D).sum())
    var = float((w * D**2).sum()) - mean**2
    # N_d needs the law of (omega, sigma'); sigma' is uniform inside its class
    P_oj = law.omega_sigmap() / sig.stp.ccount[None, :]
    qpv = np.asarray(p.Qp)
    pe = np.array([s[0] for s in path], dtype=np.int64)
    pf = np.array([s[1] for s in path], dtype=np.int64)
    pt = np.array([s[2] for s in path], dtype=np.int64)
    jumps = qpv[sig.stp.labels[:, pt]] - qpv[sig.stp.labels[:, pf]]  # (configs, L)
    E = g.n_edges
    nd: dict[float, float] = {}
    e_nz = 0.0
    e_d2 = 0.0
    for wbits in np.flatnonzero(P_oj.sum(axis=1) > 0):
        lab, k = kernels.label_components(g.n_vertices, g.ev, _bits(int(wbits), E))
        M = np.zeros((len(path), k))
        M[np.arange(len(path)), lab[g.ev[pe, 0]]] = 1.0
        # jumps at crossings outside omega vanish whenever P > 0 (eta(sigma') is inside omega)
        d = np.round(jumps @ M, 9)  # (configs, k)
        pr = P_oj[wbits][sig.stp.cls]
        nz = np.abs(d) > 1e-9
        e_nz += float((nz.sum(axis=1) * pr).sum())
        e_d2 += float(((d**2).sum(axis=1) * pr).sum())
        for val in np.unique(d[nz]):
            nd[float(val)] = nd.get(float(val), 0.0) + float(((d == val).sum(axis=1) * pr).sum())
    pwp = law.omegap_marginal()
    e_np = sum(pwp[x] * _n_prime(g, int(x), u1, u2) for x in np.flatnonzero(pwp > 0))
    return {
        "mean": mean,
        "var": var,
        "E_N_d": nd,
        "E_N_nonzero": e_nz,
        "sum_d2_E_N_d": e_d2,
        "E_N_prime": float(e_np),
        "m2": p.moment(2),
    }


def check_variance_identity(
    g: EmbeddedGraph, p: Params, u1: Optional[int] = None, u2: Optional[int] = None, law: Optional[JointLaw] = None
) -> Report:
    if g.topology != GENUS0:
        raise TopologyError("stated for genus 0")
    u1 = 0 if u1 is None else u1
    u2 = g.outer_face if u2 is None else u2
    vq = variance_quantities(g, p, u1, u2, law)
    m2, var, enz = vq["m2"], vq["var"], vq["E_N_nonzero"]
    scale = max(abs(var), ABS_FLOOR)
    err = abs(var - m2 * vq["sum_d2_E_N_d"]) / scale
    checks = {"identity": err}
    default = p.Qp == model.default_alphabet(p.qp)
    if p.qp == 2:
        c = max(abs(x) for x in p.Qp)
        checks["q'=2 equality"] = abs(var - 4 * c * c * m2 * enz) / scale
    violation = 0.0
    if default:
        violation = max(violation, (m2 * enz - var) / scale, (var - p.C**2 * m2 * enz) / scale)
    if p.high:
        rhs = (1 - 1 / p.qp) * (vq["E_N_prime"] - 1)
        violation = max(violation, (rhs - enz) / max(abs(enz), abs(rhs), ABS_FLOOR))
    checks["inequality_violation"] = max(violation, 0.0)
    vq["E_N_d"] = {str(k): v for k, v in vq["E_N_d"].items()}
    return _report("variance_identity", g, p, max(checks.values()), checks=checks, **vq)


# ---------------------------------------------------------------------------
# conditional laws


def _quotient_potts(n: int, ends: np.ndarray, glue: np.ndarray, q: int, w: float) -> tuple[np.ndarray, np.ndarray]:
    """Potts law on the graph with ``glue`` edges contracted; returns (configs, probs) over all q^n labelings."""
    lab, k = kernels.label_components(n, ends, glue)
    blocks = mixed_radix(k, q).astype(np.int64)
    qe = lab[ends[~glue]]
    dis = (blocks[:, qe[:, 0]] != blocks[:, qe[:, 1]]).sum(axis=1)
    pr = w ** dis.astype(float)
    full = blocks[:, lab]
    code = (full * (q ** np.arange(n, dtype=np.int64))).sum(axis=1)
    return code, pr / pr.sum()


def check_conditional_laws(g: EmbeddedGraph, p: Params, law: Optional[JointLaw] = None) -> Report:
    law = law or joint_law(g, p)
    sig = law.sig
    st, stp = sig.st, sig.stp
    E = g.n_edges
    out = {}
    # sigma | sigma': Potts with e^-J = b on G / eta(sigma')
    cw = sig.config_weight()
    worst = 0.0
    for j in range(len(stp.cmask)):
        r = stp.members(j)[0]
        col = cw[:, r]
        if col.sum() == 0:
            continue
        glue = _bits(int(stp.cmask[j]), E)
        code, pr = _quotient_potts(g.n_vertices, g.ev, glue, p.q, p.b)
        ref = np.zeros(len(col))
        np.add.at(ref, code, pr)
        worst = max(worst, tv(col / col.sum(), ref))
    out["sigma|sigma'"] = worst
    worst = 0.0
    for i in range(len(st.cmask)):
        r = st.members(i)[0]
        row = cw[r]
        if row.sum() == 0:
            continue
        glue = _bits(int(st.cmask[i]), E)
        code, pr = _quotient_potts(g.n_faces, g.eu, glue, p.qp, p.a)
        ref = np.zeros(len(row))
        np.add.at(ref, code, pr)
        worst = max(worst, tv(row / row.sum(), ref))
    out["sigma'|sigma"] = worst
    # sigma' | omega: Potts with e^-J = a/(1-b) on the faces of omega
    if p.b < 1.0:
        P_oj = law.omega_sigmap()
        worst = 0.0
        for wbits in np.flatnonzero(P_oj.sum(axis=1) > 1e-300):
            cond = (P_oj[wbits] / stp.ccount)[stp.cls]
            cond = cond / cond.sum()
            om = _bits(int(wbits), E)
            code, pr = _quotient_potts(g.n_faces, g.eu, ~om, p.qp, p.a / (1.0 - p.b))
            ref = np.zeros(len(cond))
            np.add.at(ref, code, pr)
            worst = max(worst, tv(cond, ref))
        out["sigma'|omega"] = worst
    # omega | (omega', sigma') for a + b >= 1
    if p.high:
        pr_succ = (1.0 - p.b) / p.a
        om = law.omega_bits
        dag = ((1 << E) - 1) ^ law.omegap_bits
        mj = stp.cmask
        free = dag[:, None] & ~mj[None, :]
        ok = ((mj[None, :] & ~om[:, None]) == 0) & ((om[:, None] & ~dag[:, None]) == 0)
        ref = ok * pr_succ ** popcount(om[:, None] & free) * (1.0 - pr_succ) ** popcount(free & ~om[:, None])
        worst = 0.0
        keys = law.omegap_bits
        for j in range(len(mj)):
            tot = np.bincount(keys, weights=law.P_sj[:, j], minlength=1 << E)
            denom = tot[keys]
            pos = denom > 1e-300
            if not pos.any():
                continue
            diff = np.abs(law.P_sj[pos, j] / denom[pos] - ref[pos, j])
            per_event = np.bincount(keys[pos], weights=diff, minlength=1 << E) * 0.5
            worst = max(worst, float(per_event.max()))
        out["omega|omega',sigma'"] = worst
    return _report("conditional_laws", g, p, max(out.values()), tv=out)


def check_edwards_sokal(g: EmbeddedGraph, p: Params) -> Report:
    """Given omega, sigma is uniform on cluster-constant labelings and independent of sigma'.

    Per configuration, ``P(omega, sigma, sigma')`` must not depend on sigma
    among labelings with ``eta(sigma)`` disjoint from omega, and must vanish otherwise.
    """
    sig = enumerate_sigma(g, p)
    st, stp = sig.st, sig.stp
    E = g.n_edges
    N = 1 << E
    om = np.arange(N, dtype=np.int64)
    mi, mj = st.cmask, stp.cmask
    # P(omega | sigma, sigma'): eta(sigma') forced open, eta(sigma) forced closed, rest Bernoulli(1-b)
    worst = 0.0
    w_cls = sig.W / np.outer(st.ccount, stp.ccount) / sig.Z
    for j in range(len(mj)):
        free = ((N - 1) & ~mj[j])[None] & ~mi[:, None]  # (I,)
        free = free.ravel()
        forced_ok = ((mj[j] & ~om[:, None]) == 0) & ((mi[None, :] & om[:, None]) == 0)  # (N, I)
        po = forced_ok * (1.0 - p.b) ** popcount(om[:, None] & free[None, :]) * p.b ** popcount(
            free[None, :] & ~om[:, None]
        )
        g_cfg = po * w_cls[None, :, j]  # per sigma configuration in class i, sigma' in class j
        valid = (mi[None, :] & om[:, None]) == 0
        for w in range(N):
            vals = g_cfg[w][valid[w]]
            if vals.size and vals.max() > 0:
                worst = max(worst, float((vals.max() - vals.min()) / vals.max()))
            if (g_cfg[w][~valid[w]] != 0).any():
                worst = max(worst, 1.0)
    return _report("edwards_sokal", g, p, worst)


# ---------------------------------------------------------------------------
# FKG


def check_fkg_lattice(probs: np.ndarray, n: int, tol: float = 1e-12) -> Report:
    """Lattice condition for a law on ``{0,1}^n`` indexed by bitmask.

    With full support the pair form over all ``(xi, x, y)`` is enough;
    otherwise every pair of configurations is tested.
    """
    probs = np.asarray(probs, dtype=float)
    N = 1 << n
    assert probs.shape == (N,)
    scale = probs.max()
    if (probs > 0).all():
        worst = None
        idx = np.arange(N)
        for x in range(n):
            for y in range(x + 1, n):
                base = idx[((idx >> x) & 1 == 0) & ((idx >> y) & 1 == 0)]
                bx, by = 1 << x, 1 << y
                lhs = probs[base | bx | by] * probs[base]
                rhs = probs[base | bx] * probs[base | by]
                slack = (lhs - rhs) / (rhs + 1e-300)
                k = int(np.argmin(slack))
                if slack[k] < -tol and (worst is None or slack[k] < worst[0]):
                    worst = (float(slack[k]), int(base[k]), x, y, float(lhs[k]), float(rhs[k]))
        if worst is None:
            return Report("fkg_lattice", "", {}, 0.0, None, True, {"form": "pair"})
        s, xi, x, y, lhs, rhs = worst
        ce = {"xi": xi, "x": x, "y": y, "lhs": lhs, "rhs": rhs, "relative_slack": s}
        return Report("fkg_lattice", "", {}, None, ce, False, {"form": "pair"})
    a = np.arange(N)
    lhs = probs[a[:, None] & a[None, :]] * probs[a[:, None] | a[None, :]]
    rhs = probs[a[:, None]] * probs[a[None, :]]
    gap = (rhs - lhs) / scale**2
    k = np.unravel_index(int(np.argmax(gap)), gap.shape)
    if gap[k] <= tol:
        return Report("fkg_lattice", "", {}, 0.0, None, True, {"form": "full"})
    ce = {"xi1": int(k[0]), "xi2": int(k[1]), "lhs": float(lhs[k]), "rhs": float(rhs[k])}
    return Report("fkg_lattice", "", {}, None, ce, False, {"form": "full"})


def fkg_omega(g: EmbeddedGraph, p: Params, law: Optional[JointLaw] = None) -> Report:
    law = law or joint_law(g, p)
    rep = check_fkg_lattice(law.omega_marginal(), g.n_edges)
    rep.identity = "fkg_omega"
    rep.graph = g.name
    rep.params = p.as_dict()
    return rep


def omega_weight(g: EmbeddedGraph, p: Params):
    """Unnormalised ``P(omega)`` for single bitmasks, summing the (omega, sigma') form over sigma'."""
    E = g.n_edges
    stp = spin_table(g, p.qp, DUAL)
    mj, cc = stp.cmask, stp.ccount.astype(float)
    sj = popcount(mj)

    def w(bits: int) -> float:
        size = bin(bits).count("1")
        inside = (mj & ~np.int64(bits)) == 0
        s = (cc * p.a**sj * (1.0 - p.b) ** np.clip(size - sj, 0, None) * inside).sum()
        return float(p.q ** _k_of(g, bits) * s * p.b ** (E - size))

    return w


def fkg_omega_search(g: EmbeddedGraph, p: Params, trials: int = 2000, seed: int = 0, tol: float = 1e-9) -> Report:
    """Random pair-form probes ``(xi, x, y)`` for graphs too large for the full scan."""
    E = g.n_edges
    w = omega_weight(g, p)
    rng = np.random.default_rng(seed)
    worst = None
    for _ in range(trials):
        x, y = (int(e) for e in rng.choice(E, 2, replace=False))
        bx, by = 1 << x, 1 << y
        xi = int(rng.integers(0, 1 << E)) & ~(bx | by)
        lhs = w(xi | bx | by) * w(xi)
        rhs = w(xi | bx) * w(xi | by)
        slack = (lhs - rhs) / rhs
        if slack < -tol and (worst is None or slack < worst["relative_slack"]):
            worst = {"xi": xi, "x": x, "y": y, "lhs": lhs, "rhs": rhs, "relative_slack": slack}
    det = {"form": "pair", "trials": trials}
    if worst is None:
        return Report("fkg_omega", g.name, p.as_dict(), 0.0, None, True, det)
    return Report("fkg_omega", g.name, p.as_dict(), None, worst, False, det)


def fkg_sigma(g: EmbeddedGraph, p: Params) -> Report:
    """Spins read as indicators; requires q = 2."""
    if p.q != 2:
        raise ValueError("the spin FKG check is for q = 2")
    rep = check_fkg_lattice(enumerate_sigma(g, p).sigma_marginal(), g.n_vertices)
    rep.identity = "fkg_sigma"
    rep.graph = g.name
    rep.params = p.as_dict()
    return rep


# ---------------------------------------------------------------------------
# suite


def identity_suite(g: EmbeddedGraph, p: Params, u1: Optional[int] = None, u2: Optional[int] = None) -> list[Report]:
    """Every applicable check at one grid point (genus-0 graphs)."""
    law = joint_law(g, p)
    reps = [
        check_omega_marginals(g, p, law),
        check_correlation_formula(g, p, law=law),
        check_variance_identity(g, p, u1, u2, law),
        check_conditional_laws(g, p, law),
    ]
    if p.a < 1.0:
        reps.append(check_unconstrained_equivalence(g, p, law.sig))
    if p.on_line:
        reps.append(check_fk_reduction(g, p, law))
    if p.low:
        reps.append(check_griffiths(g, p, law=law))
    return reps


def graph_suite(g: EmbeddedGraph, qs: Sequence[int] = (2, 3, 4), xs: Sequence[float] = (0.5, 1.0, 2.0)) -> list[Report]:
    """Parameter-free-of-(a,b) checks: Potts duality and resummation."""
    reps = []
    for q in qs:
        for x in xs:
            reps.append(check_potts_duality(g, q, x))
            reps.append(check_resummation(g, q, x, 0.5))
    reps.append(check_resummation(g, 3, -0.5, 2.0))
    return reps
