"""Markov chains for the admissible pair and streaming estimators.

Two move types, each reversible with respect to the pair measure:

* quotient heat-bath: the sigma side is split into blocks glued along the
  contours of sigma', and each block is redrawn from its exact conditional;
  the sigma' side follows with the roles swapped;
* cluster move: the bonds of one side are drawn given both spins and a
  uniform spin is painted on every cluster.

A sweep runs ``cluster`` cluster moves then ``heatbath`` heat-bath passes.
Every random number comes from ``PCG64(SeedSequence([seed, chain]))``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels, oracle
from .lattice import DUAL, GENUS0, PRIMAL, EmbeddedGraph, box_center_face, face_path
from .model import Params, PercolationPair, SpinPair, couple_percolation

N_BATCHES = 32
CHECK_INVARIANTS = os.environ.get("PAIRPOTTS_CHECK", "") not in ("", "0")
# rows of uniforms drawn per RNG call are capped at about this many floats
_CHUNK_FLOATS = 1 << 21

# disconnection variant used for N': a dual cluster containing an endpoint counts
DISCONNECT_VARIANT = "membership"


class InsufficientSamples(ValueError):
    pass


def make_rng(seed: int, chain: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), int(chain)])))


@dataclass(frozen=True)
class SamplerConfig:
    """Move mix (moves of each type per sweep), run length and stream identity.

    ``sweeps`` counts burn-in; measurements happen on sweeps
    ``burn_in, burn_in + thin, ...`` below ``sweeps``.
    """

    heatbath: int = 1
    cluster: int = 1
    sweeps: int = 10_000
    burn_in: int = 1_000
    thin: int = 1
    seed: int = 0
    chain: int = 0
    cluster_stats: bool = True
    record_states: bool = False

    def __post_init__(self):
        if self.heatbath < 0 or self.cluster < 0 or self.heatbath + self.cluster == 0:
            raise ValueError("move weights must be nonnegative and not both zero")
        if not 0 <= self.burn_in <= self.sweeps:
            raise ValueError("need 0 <= burn_in <= sweeps")
        if self.thin < 1:
            raise ValueError("thin must be positive")

    @property
    def n_measurements(self) -> int:
        return -(-(self.sweeps - self.burn_in) // self.thin)

    def with_chain(self, chain: int) -> "SamplerConfig":
        return SamplerConfig(**{**asdict(self), "chain": chain})


@dataclass
class ChainState:
    sp: SpinPair
    pp: Optional[PercolationPair] = None
    sweep: int = 0
    rng: np.random.Generator = field(default_factory=lambda: make_rng(0), repr=False)

    @classmethod
    def start(cls, g: EmbeddedGraph, seed: int = 0, chain: int = 0) -> "ChainState":
        return cls(SpinPair.constant(g), None, 0, make_rng(seed, chain))


def _check(state: ChainState, g: EmbeddedGraph, p: Params) -> None:
    if not state.sp.admissible():
        raise AssertionError("inadmissible state after a move")
    if state.pp is not None:
        state.pp.check(state.sp, p)


def _refresh(sp: SpinPair, g: EmbeddedGraph) -> SpinPair:
    return SpinPair.make(g, sp.sigma, sp.sigmap, check=CHECK_INVARIANTS)


def quotient_heatbath_sweep(state: ChainState, g: EmbeddedGraph, p: Params) -> ChainState:
    sig, sigp = state.sp.sigma.copy(), state.sp.sigmap.copy()
    vptr, vidx = g.incidence_csr(PRIMAL)
    uptr, uidx = g.incidence_csr(DUAL)
    kernels.heatbath_half(sig, p.q, g.ev, sigp, g.eu, p.b, vptr, vidx, state.rng.random(g.n_vertices))
    kernels.heatbath_half(sigp, p.qp, g.eu, sig, g.ev, p.a, uptr, uidx, state.rng.random(g.n_faces))
    state.sp = _refresh(SpinPair(sig, sigp, None, None), g)
    state.pp = None
    state.sweep += 1
    if CHECK_INVARIANTS:
        _check(state, g, p)
    return state


def _paint(labels: np.ndarray, k: int, nq: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, nq, size=k)[labels]


def cluster_move(state: ChainState, g: EmbeddedGraph, p: Params) -> ChainState:
    """Couple, repaint sigma per omega-cluster; couple again, repaint sigma' per omega'-cluster."""
    sp = state.sp
    pp = couple_percolation(sp, g, p, state.rng)
    if CHECK_INVARIANTS:
        pp.check(sp, p)
    part = pp.primal_clusters
    sp = _refresh(SpinPair(_paint(part.labels, part.k, p.q, state.rng), sp.sigmap, None, None), g)
    pp = couple_percolation(sp, g, p, state.rng)
    if CHECK_INVARIANTS:
        pp.check(sp, p)
    part = pp.dual_clusters
    sp = _refresh(SpinPair(sp.sigma, _paint(part.labels, part.k, p.qp, state.rng), None, None), g)
    state.sp = sp
    # repainting sigma' can cut omega-forced edges, so the last coupling is stale
    state.pp = None
    state.sweep += 1
    if CHECK_INVARIANTS:
        _check(state, g, p)
    return state


# ---------------------------------------------------------------------------
# accumulator


_SCALARS = ("dh", "dh2", "nnz", "s2", "nprime", "nsurround", "conn")


@dataclass
class EstimatorAccumulator:
    """Per-batch sums of the measured quantities.

    ``sums[name]`` holds one entry per batch; ``nd[d]`` the per-batch totals of
    clusters with increment ``d``. ``u1``/``u2`` are the path end faces.
    """

    graph: str
    params: dict
    u1: int
    u2: int
    count: np.ndarray
    sums: dict
    nd: dict
    sigma2: float
    cluster_stats: bool
    seeds: list = field(default_factory=list)
    states: Optional[np.ndarray] = None
    disconnect_variant: str = DISCONNECT_VARIANT

    @classmethod
    def empty(cls, g: EmbeddedGraph, p: Params, u1: int, u2: int, nb: int, cluster_stats: bool, sigma2: float):
        return cls(
            g.name, p.as_dict(), u1, u2, np.zeros(nb, np.int64),
            {k: np.zeros(nb) for k in _SCALARS}, {}, sigma2, cluster_stats,
        )

    @property
    def n(self) -> int:
        return int(self.count.sum())

    def add_rows(self, batch: np.ndarray, out_f: np.ndarray, out_i: np.ndarray, dvals: np.ndarray, dbatch: np.ndarray):
        nb = len(self.count)
        self.count += np.bincount(batch, minlength=nb)
        cols = {
            "dh": out_f[:, 0], "dh2": out_f[:, 0] ** 2, "nnz": out_i[:, 0], "s2": out_f[:, 1],
            "nprime": out_i[:, 1], "nsurround": out_i[:, 2], "conn": out_i[:, 3],
        }
        for k, v in cols.items():
            self.sums[k] += np.bincount(batch, weights=v, minlength=nb)
        if dvals.size:
            keys = np.round(dvals, 9)
            for d in np.unique(keys):
                sel = keys == d
                arr = self.nd.setdefault(float(d), np.zeros(nb))
                arr += np.bincount(dbatch[sel], minlength=nb)

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        """Concatenate the batches of two independent chains."""
        if (self.graph, self.params, self.u1, self.u2) != (other.graph, other.params, other.u1, other.u2):
            raise ValueError("accumulators describe different experiments")
        nd = {}
        for d in set(self.nd) | set(other.nd):
            nd[d] = np.concatenate([self.nd.get(d, np.zeros(len(self.count))), other.nd.get(d, np.zeros(len(other.count)))])
        states = None
        if self.states is not None and other.states is not None:
            states = self.states + other.states
        return EstimatorAccumulator(
            self.graph, self.params, self.u1, self.u2,
            np.concatenate([self.count, other.count]),
            {k: np.concatenate([self.sums[k], other.sums[k]]) for k in _SCALARS},
            nd, self.sigma2, self.cluster_stats and other.cluster_stats,
            self.seeds + other.seeds, states,
        )

    def to_json(self) -> str:
        d = {
            "graph": self.graph, "params": self.params, "u1": self.u1, "u2": self.u2,
            "count": self.count.tolist(), "sums": {k: v.tolist() for k, v in self.sums.items()},
            "nd": {repr(k): v.tolist() for k, v in sorted(self.nd.items())},
            "sigma2": self.sigma2, "cluster_stats": self.cluster_stats, "seeds": self.seeds,
            "disconnect_variant": self.disconnect_variant,
            "states": None if self.states is None else self.states.tolist(),
        }
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "EstimatorAccumulator":
        d = json.loads(text)
        return cls(
            d["graph"], d["params"], d["u1"], d["u2"], np.array(d["count"], dtype=np.int64),
            {k: np.array(v, dtype=float) for k, v in d["sums"].items()},
            {float(k): np.array(v, dtype=float) for k, v in d["nd"].items()},
            d["sigma2"], d["cluster_stats"], [tuple(s) for s in d["seeds"]],
            None if d["states"] is None else np.array(d["states"], dtype=np.int64),
            d.get("disconnect_variant", DISCONNECT_VARIANT),
        )

    # batch-means helpers

    def _batch_means(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        keep = self.count > 0
        return self.sums[name][keep] / self.count[keep], self.count[keep]

    def mean(self, name: str) -> tuple[float, float]:
        return _bm_mean(self.sums[name], self.count)


def _bm_mean(sums: np.ndarray, count: np.ndarray) -> tuple[float, float]:
    """Grand mean and its batch-means standard error."""
    keep = count > 0
    n = count[keep].sum()
    if n == 0:
        return math.nan, math.nan
    mean = sums[keep].sum() / n
    return float(mean), _bm_stderr(sums[keep] / count[keep])


def _bm_stderr(batch_values: np.ndarray) -> float:
    nb = len(batch_values)
    if nb < 2:
        return math.nan
    return float(np.std(batch_values, ddof=1) / math.sqrt(nb))


# ---------------------------------------------------------------------------
# running chains


def default_path(g: EmbeddedGraph) -> list[tuple[int, int, int]]:
    """Path from the outer face to the face at the centre of a box."""
    if g.topology != GENUS0:
        raise ValueError("pass an explicit path on the torus")
    u0 = box_center_face(g) if g.name.startswith("box") else 0
    return face_path(g, g.outer_face, u0)


def run_chain(
    g: EmbeddedGraph,
    p: Params,
    config: SamplerConfig,
    path: Optional[list] = None,
    state: Optional[ChainState] = None,
    use_kernel: bool = True,
) -> EstimatorAccumulator:
    """Run one chain and return its accumulator.

    ``path`` is a face path ``[(edge, from, to), ...]``; the measured increment
    is ``h'(to_last) - h'(from_first)``. It defaults to outer face -> centre.
    ``use_kernel=False`` runs the pure Python moves (slow; for testing).
    """
    if path is None:
        path = default_path(g)
    pe = np.array([s[0] for s in path], dtype=np.int64)
    pf = np.array([s[1] for s in path], dtype=np.int64)
    pt = np.array([s[2] for s in path], dtype=np.int64)
    u1 = int(pf[0]) if len(path) else g.outer_face
    u2 = int(pt[-1]) if len(path) else u1
    stats = config.cluster_stats and g.topology == GENUS0
    qv = np.asarray(p.Q, dtype=float)
    qpv = np.asarray(p.Qp, dtype=float)
    M = config.n_measurements
    nb = min(N_BATCHES, max(M, 1))
    acc = EstimatorAccumulator.empty(g, p, u1, u2, nb, stats, float(np.mean(qv**2)))
    acc.seeds.append((int(config.seed), int(config.chain)))
    if config.record_states:
        acc.states = np.zeros(p.q ** g.n_vertices * p.qp ** g.n_faces, dtype=np.int64)
    if state is None:
        state = ChainState.start(g, config.seed, config.chain)
    rng = state.rng
    sig = state.sp.sigma.astype(np.int64).copy()
    sigp = state.sp.sigmap.astype(np.int64).copy()
    vptr, vidx = g.incidence_csr(PRIMAL)
    uptr, uidx = g.incidence_csr(DUAL)
    nV, nU, E = g.n_vertices, g.n_faces, g.n_edges
    per = kernels.uniforms_per_sweep(nV, nU, E, config.heatbath, config.cluster)
    chunk = max(1, min(4096, _CHUNK_FLOATS // per))
    L = max(len(path), 1)
    meas_idx = 0
    s = 0
    while s < config.sweeps:
        m = min(chunk, config.sweeps - s)
        sweep_ids = np.arange(s, s + m)
        mask = (sweep_ids >= config.burn_in) & ((sweep_ids - config.burn_in) % config.thin == 0)
        k = int(mask.sum())
        out_f = np.zeros((k, 2))
        out_i = np.zeros((k, 4), dtype=np.int64)
        dbuf = np.zeros((k, L))
        codes = np.zeros(k, dtype=np.int64)
        if use_kernel:
            u = rng.random((m, per))
            kernels.run_sweeps(
                sig, sigp, p.q, p.qp, p.a, p.b, p.low, g.ev, g.eu, vptr, vidx, uptr, uidx,
                config.heatbath, config.cluster, qv, qpv, pe, pf, pt, stats, mask,
                config.record_states, u, out_f, out_i, dbuf, codes,
            )
        else:
            state.sp = SpinPair.make(g, sig, sigp)
            r = 0
            for flag in mask:
                for _ in range(config.cluster):
                    cluster_move(state, g, p)
                for _ in range(config.heatbath):
                    quotient_heatbath_sweep(state, g, p)
                if flag:
                    pp = couple_percolation(state.sp, g, p, rng)
                    if config.record_states:
                        codes[r] = kernels.state_code(state.sp.sigma, state.sp.sigmap, p.q, p.qp)
                    res = kernels.measure(
                        state.sp.sigma, state.sp.sigmap, qv, qpv, g.ev, g.eu,
                        pp.omega.to_array(), pp.omegap.to_array(), pe, pf, pt, stats, dbuf[r],
                    )
                    out_f[r] = res[0], res[2]
                    out_i[r] = res[1], res[3], res[4], res[5]
                    r += 1
            sig, sigp = state.sp.sigma.copy(), state.sp.sigmap.copy()
        if k:
            batch = (np.arange(meas_idx, meas_idx + k) * nb) // max(M, 1)
            nz = out_i[:, 0]
            dmask = np.arange(L)[None, :] < nz[:, None]
            dbatch = np.broadcast_to(batch[:, None], dmask.shape)[dmask]
            acc.add_rows(batch, out_f, out_i, dbuf[dmask], dbatch)
            if config.record_states:
                acc.states += np.bincount(codes, minlength=acc.states.size)
            meas_idx += k
        s += m
    state.sp = SpinPair.make(g, sig, sigp, check=CHECK_INVARIANTS)
    state.sweep += config.sweeps
    return acc


# ---------------------------------------------------------------------------
# estimators


def estimate_height_variance(acc: EstimatorAccumulator) -> dict:
    """Sample mean and variance of the increment, batch-means standard errors."""
    if acc.n < 2:
        raise InsufficientSamples("need at least two samples")
    keep = acc.count > 0
    c = acc.count[keep]
    m1 = acc.sums["dh"][keep] / c
    m2 = acc.sums["dh2"][keep] / c
    n = c.sum()
    mean = float(acc.sums["dh"].sum() / n)
    var = float(acc.sums["dh2"].sum() / n - mean**2) * n / (n - 1)
    # linearised around the grand mean
    vb = m2 - 2 * mean * m1 + mean**2
    return {
        "mean": mean,
        "mean_stderr": _bm_stderr(m1),
        "variance": max(var, 0.0),
        "stderr": _bm_stderr(vb),
        "n": int(n),
    }


def estimate_cluster_counts(acc: EstimatorAccumulator) -> dict:
    """Means of N_d, N!=0, N' and the surrounding-cluster count, with stderrs."""
    if acc.u1 == acc.u2:
        return {"N_d": {}, "N_nonzero": (0.0, 0.0), "N_prime": (0.0, 0.0), "N_surround": (0.0, 0.0), "n": acc.n}
    out = {
        "N_d": {d: _bm_mean(v, acc.count) for d, v in sorted(acc.nd.items())},
        "N_nonzero": acc.mean("nnz"),
        "n": acc.n,
        "disconnect_variant": acc.disconnect_variant,
    }
    if acc.cluster_stats:
        out["N_prime"] = acc.mean("nprime")
        out["N_surround"] = acc.mean("nsurround")
        out["connectivity"] = acc.mean("conn")
    return out


def identity_gap(acc: EstimatorAccumulator) -> dict:
    """``Var[dh'] - E[sigma^2] E[sum_C d_C^2]`` with a joint batch-means stderr.

    At ``q' = 2`` with alphabet ``{-1, 1}`` every nonzero ``d_C`` is ``+-2`` and
    the right side is ``4 E[sigma^2] E[N!=0]``.
    """
    hv = estimate_height_variance(acc)
    keep = acc.count > 0
    c = acc.count[keep]
    mean = hv["mean"]
    vb = (acc.sums["dh2"][keep] - 2 * mean * acc.sums["dh"][keep]) / c + mean**2
    rb = acc.sigma2 * acc.sums["s2"][keep] / c
    n = c.sum()
    rhs = float(acc.sigma2 * acc.sums["s2"].sum() / n)
    # plug-in variance, so both sides are the same kind of sample average
    var = float(acc.sums["dh2"].sum() / n - mean**2)
    return {
        "variance": var,
        "rhs": rhs,
        "rhs_stderr": _bm_stderr(rb),
        "gap": var - rhs,
        "stderr": _bm_stderr(vb - rb),
    }


def inequality_margin(acc: EstimatorAccumulator, qp: int) -> dict:
    """``E[N!=0] - (1 - 1/q')(E[N'] - 1)`` with a joint stderr."""
    if not acc.cluster_stats:
        raise ValueError("accumulator has no cluster statistics")
    keep = acc.count > 0
    c = acc.count[keep]
    f = 1.0 - 1.0 / qp
    zb = acc.sums["nnz"][keep] / c - f * (acc.sums["nprime"][keep] / c - 1.0)
    z = float((acc.sums["nnz"].sum() - f * acc.sums["nprime"].sum()) / c.sum() + f)
    return {"margin": z, "stderr": _bm_stderr(zb)}


def validate_against_oracle(g: EmbeddedGraph, p: Params, config: SamplerConfig) -> dict:
    """TV distance between visited-state frequencies and the exact law."""
    sig = oracle.enumerate_sigma(g, p)
    cfg = SamplerConfig(**{**asdict(config), "record_states": True, "cluster_stats": False})
    acc = run_chain(g, p, cfg)
    counts = acc.states.astype(float)
    exact = (sig.config_weight() / sig.Z).ravel(order="F")
    emp = counts / counts.sum()
    return {"tv": oracle.tv(emp, exact), "n": acc.n, "states": int((exact > 0).sum())}


# ---------------------------------------------------------------------------
# exact transition kernels on small graphs


@dataclass
class ExactKernels:
    """State space, stationary law and single-move transition matrices."""

    sigma: np.ndarray
    sigmap: np.ndarray
    pi: np.ndarray
    heatbath_sigma: list
    heatbath_sigmap: list
    cluster_sigma: np.ndarray
    cluster_sigmap: np.ndarray

    def index(self):
        return {(tuple(s), tuple(t)): i for i, (s, t) in enumerate(zip(self.sigma, self.sigmap))}


def _block_kernel(states, idx, g, p, side, x):
    n = len(states[0])
    T = np.zeros((n, n))
    for i in range(n):
        sig, sigp = states[0][i].copy(), states[1][i].copy()
        spin, other = (sig, sigp) if side == PRIMAL else (sigp, sig)
        ends, oends = (g.ev, g.eu) if side == PRIMAL else (g.eu, g.ev)
        nq, w = (p.q, p.b) if side == PRIMAL else (p.qp, p.a)
        glue = other[oends[:, 0]] != other[oends[:, 1]]
        lab, _ = kernels.label_components(len(spin), ends, glue)
        block = lab == lab[x]
        ws = np.zeros(nq)
        for s in range(nq):
            cand = spin.copy()
            cand[block] = s
            cross = block[ends[:, 0]] != block[ends[:, 1]]
            ws[s] = w ** np.count_nonzero(cross & (cand[ends[:, 0]] != cand[ends[:, 1]]))
        ws /= ws.sum()
        for s in range(nq):
            cand = spin.copy()
            cand[block] = s
            key = (tuple(cand), tuple(other)) if side == PRIMAL else (tuple(other), tuple(cand))
            T[i, idx[key]] += ws[s]
    return T


def _cluster_kernel(states, idx, g, p, side):
    n = len(states[0])
    T = np.zeros((n, n))
    for i in range(n):
        sig, sigp = states[0][i], states[1][i]
        spin, other = (sig, sigp) if side == PRIMAL else (sigp, sig)
        ends, oends = (g.ev, g.eu) if side == PRIMAL else (g.eu, g.ev)
        nq, w = (p.q, p.b) if side == PRIMAL else (p.qp, p.a)
        forced_open = other[oends[:, 0]] != other[oends[:, 1]]
        forced_closed = spin[ends[:, 0]] != spin[ends[:, 1]]
        free = np.flatnonzero(~forced_open & ~forced_closed)
        for bits in range(1 << len(free)):
            bond = forced_open.copy()
            on = np.array([(bits >> t) & 1 for t in range(len(free))], dtype=bool)
            bond[free] = on
            pw = (1 - w) ** on.sum() * w ** (len(free) - on.sum())
            lab, k = kernels.label_components(len(spin), ends, bond)
            for paint in range(nq**k):
                col = np.array([(paint // nq**c) % nq for c in range(k)], dtype=np.int64)
                cand = col[lab]
                key = (tuple(cand), tuple(other)) if side == PRIMAL else (tuple(other), tuple(cand))
                T[i, idx[key]] += pw / nq**k
    return T


def exact_kernels(g: EmbeddedGraph, p: Params) -> ExactKernels:
    """Enumerate every single-move kernel on a small graph."""
    sig = oracle.enumerate_sigma(g, p)
    dist = sig.distribution()
    r, rp = dist.configs[:, 0], dist.configs[:, 1]
    S = sig.st.labels[r].astype(np.int64)
    Sp = sig.stp.labels[rp].astype(np.int64)
    pi = dist.probs
    idx = {(tuple(s), tuple(t)): i for i, (s, t) in enumerate(zip(S, Sp))}
    states = (S, Sp)
    hb = [_block_kernel(states, idx, g, p, PRIMAL, x) for x in range(g.n_vertices)]
    hbp = [_block_kernel(states, idx, g, p, DUAL, x) for x in range(g.n_faces)]
    return ExactKernels(S, Sp, pi, hb, hbp, _cluster_kernel(states, idx, g, p, PRIMAL), _cluster_kernel(states, idx, g, p, DUAL))


def balance_residual(T: np.ndarray, pi: np.ndarray) -> float:
    F = pi[:, None] * T
    return float(np.abs(F - F.T).max())


def check_detailed_balance(g: EmbeddedGraph, p: Params) -> oracle.Report:
    K = exact_kernels(g, p)
    mats = K.heatbath_sigma + K.heatbath_sigmap + [K.cluster_sigma, K.cluster_sigmap]
    res = max(balance_residual(T, K.pi) for T in mats)
    rows = max(float(np.abs(T.sum(axis=1) - 1).max()) for T in mats)
    stat = max(float(np.abs(K.pi @ T - K.pi).max()) for T in mats)
    return oracle._report("detailed_balance", g, p, max(res, rows, stat), residual=res, states=len(K.pi))


def check_reachability(g: EmbeddedGraph, p: Params) -> oracle.Report:
    """Sweep sigma, sweep sigma', sweep sigma: every admissible state reaches every other."""
    K = exact_kernels(g, p)
    Ss = np.linalg.multi_dot(K.heatbath_sigma) if len(K.heatbath_sigma) > 1 else K.heatbath_sigma[0]
    Sp = np.linalg.multi_dot(K.heatbath_sigmap) if len(K.heatbath_sigmap) > 1 else K.heatbath_sigmap[0]
    R = Ss @ Sp @ Ss
    zero = int((R <= 0).sum())
    return oracle._report("reachability", g, p, float(zero), tol=0.0, min_entry=float(R.min()), states=len(K.pi))


# ---------------------------------------------------------------------------
# independent reference on the line a + b = 1


def fk_line_heights(g: EmbeddedGraph, p: Params, n_samples: int, sweeps_between: int = 2, burn_in: int = 200, seed: int = 0):
    """Increments ``h'(u2) - h'(u1)`` from an FK(q q') Swendsen-Wang chain.

    On genus 0 with ``a + b = 1`` the bonds follow FK(q q') with
    ``p = q' / (q' + 1/a - 1)``; spins are then uniform per cluster of omega
    and of its dual complement. Only numpy and scipy are used here, so this
    shares no code with the pair sampler.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if not p.on_line or g.topology != GENUS0:
        raise ValueError("reference needs a + b = 1 on genus 0")
    rng = np.random.default_rng([seed, 7])
    nQ = p.q * p.qp
    pbond = p.qp / (p.qp + 1.0 / p.a - 1.0)
    nV, nU = g.n_vertices, g.n_faces
    path = default_path(g)
    pe = np.array([s[0] for s in path])
    pf = np.array([s[1] for s in path])
    pt = np.array([s[2] for s in path])
    Q, Qp = np.asarray(p.Q), np.asarray(p.Qp)

    def comps(n, ends, mask):
        m = coo_matrix((np.ones(mask.sum()), (ends[mask, 0], ends[mask, 1])), shape=(n, n))
        return connected_components(m, directed=False)

    potts = rng.integers(0, nQ, nV)
    out = np.empty(n_samples)
    total = burn_in + n_samples * sweeps_between
    t = 0
    for step in range(total):
        same = potts[g.ev[:, 0]] == potts[g.ev[:, 1]]
        om = same & (rng.random(g.n_edges) < pbond)
        k, lab = comps(nV, g.ev, om)
        potts = rng.integers(0, nQ, k)[lab]
        if step >= burn_in and (step - burn_in) % sweeps_between == sweeps_between - 1:
            kd, labd = comps(nU, g.eu, ~om)
            s = Q[rng.integers(0, p.q, k)[lab]]
            sp = Qp[rng.integers(0, p.qp, kd)[labd]]
            out[t] = float(np.sum(s[g.ev[pe, 0]] * (sp[pt] - sp[pf])))
            t += 1
    return out


def batch_stats(x: np.ndarray, nb: int = N_BATCHES) -> tuple[float, float]:
    """Variance of ``x`` with a batch-means standard error (mean taken as known zero)."""
    parts = np.array_split(x, nb)
    vb = np.array([np.mean(b**2) for b in parts])
    return float(np.mean(x**2)), _bm_stderr(vb)
