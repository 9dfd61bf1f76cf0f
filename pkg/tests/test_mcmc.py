import json

import numpy as np
import pytest

from pairpotts import lattice, mcmc, model, oracle
from pairpotts.mcmc import SamplerConfig
from pairpotts.model import Params, SpinPair


def quick(**kw):
    base = dict(sweeps=2000, burn_in=100, seed=7)
    base.update(kw)
    return SamplerConfig(**base)


# ---------------------------------------------------------------------------
# configuration


@pytest.mark.parametrize(
    "kw",
    [dict(heatbath=-1), dict(heatbath=0, cluster=0), dict(burn_in=11, sweeps=10), dict(burn_in=-1), dict(thin=0)],
)
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SamplerConfig(**kw)


def test_measurement_count():
    assert SamplerConfig(sweeps=100, burn_in=10, thin=3).n_measurements == 30
    assert SamplerConfig(sweeps=10, burn_in=10).n_measurements == 0


def test_rng_streams():
    a = mcmc.make_rng(5, 0).random(4)
    assert np.array_equal(a, mcmc.make_rng(5, 0).random(4))
    assert not np.array_equal(a, mcmc.make_rng(5, 1).random(4))
    assert not np.array_equal(a, mcmc.make_rng(6, 0).random(4))


# ---------------------------------------------------------------------------
# runs


def test_zero_length_measurement(box2):
    acc = mcmc.run_chain(box2, Params(2, 2, 0.5, 0.5), SamplerConfig(sweeps=50, burn_in=50))
    assert acc.n == 0
    with pytest.raises(mcmc.InsufficientSamples):
        mcmc.estimate_height_variance(acc)


def test_equal_seeds_identical(box2):
    p = Params(2, 3, 0.4, 0.5)
    a = mcmc.run_chain(box2, p, quick())
    b = mcmc.run_chain(box2, p, quick())
    assert a.to_json() == b.to_json()
    c = mcmc.run_chain(box2, p, quick(chain=1))
    assert c.to_json() != a.to_json()


def test_single_state_model(box1):
    p = Params(1, 1, 0.4, 0.4)
    res = mcmc.validate_against_oracle(box1, p, quick(sweeps=500))
    assert res["tv"] == 0.0 and res["states"] == 1
    acc = mcmc.run_chain(box1, p, quick(sweeps=500))
    assert mcmc.estimate_height_variance(acc)["variance"] == 0.0


def test_accumulator_json_round_trip(box2):
    acc = mcmc.run_chain(box2, Params(2, 2, 0.5, 0.5), quick())
    back = mcmc.EstimatorAccumulator.from_json(acc.to_json())
    assert back.to_json() == acc.to_json()
    assert mcmc.estimate_height_variance(back) == mcmc.estimate_height_variance(acc)
    json.loads(acc.to_json())


def test_merge(box2):
    p = Params(2, 2, 0.5, 0.5)
    a = mcmc.run_chain(box2, p, quick())
    b = mcmc.run_chain(box2, p, quick(chain=3))
    m = a.merge(b)
    assert m.n == a.n + b.n
    pooled = (a.sums["dh2"].sum() + b.sums["dh2"].sum()) / m.n
    assert m.sums["dh2"].sum() / m.n == pytest.approx(pooled)
    assert len(m.seeds) == 2


def test_cluster_counts_zero_when_endpoints_coincide(box2):
    acc = mcmc.run_chain(box2, Params(2, 2, 0.5, 0.5), quick(sweeps=300), path=[])
    cc = mcmc.estimate_cluster_counts(acc)
    assert cc["N_nonzero"] == (0.0, 0.0) and cc["N_prime"] == (0.0, 0.0) and cc["N_d"] == {}


def test_counts_bounded_by_cluster_number(box2):
    acc = mcmc.run_chain(box2, Params(2, 2, 0.6, 0.6), quick())
    cc = mcmc.estimate_cluster_counts(acc)
    assert 0 <= cc["N_nonzero"][0] <= box2.n_vertices
    assert 0 <= cc["N_prime"][0] <= box2.n_faces
    hv = mcmc.estimate_height_variance(acc)
    assert hv["variance"] >= 0 and hv["stderr"] >= 0


def test_torus_runs_without_cluster_stats():
    g = lattice.build_torus(4)
    path = lattice.torus_face_path(g, 0, 10)
    acc = mcmc.run_chain(g, Params(2, 2, 0.5, 0.5), quick(sweeps=500), path=path)
    assert not acc.cluster_stats
    assert mcmc.estimate_height_variance(acc)["n"] == 400


# ---------------------------------------------------------------------------
# moves


@pytest.fixture
def checked(monkeypatch):
    monkeypatch.setattr(mcmc, "CHECK_INVARIANTS", True)


def test_python_moves_keep_invariants(box2, checked):
    p = Params(3, 2, 0.45, 0.7)
    state = mcmc.ChainState.start(box2, seed=1)
    path = lattice.face_path(box2, box2.outer_face, 4)
    Q = np.asarray(p.Q)
    for _ in range(100):
        mcmc.cluster_move(state, box2, p)
        mcmc.quotient_heatbath_sweep(state, box2, p)
        pp = model.couple_percolation(state.sp, box2, p, state.rng)
        pp.check(state.sp, p)
        total = 0.0
        for c in pp.primal_clusters.all_clusters():
            total += Q[state.sp.sigma[np.flatnonzero(c.nodes)[0]]] * model.cluster_increment(state.sp, box2, p, c, path)
        assert total == pytest.approx(model.height_increment(state.sp, box2, p, path))


def test_cluster_move_fixes_single_spin(box2):
    p = Params(1, 3, 0.5, 0.5)
    state = mcmc.ChainState.start(box2, seed=2)
    for _ in range(20):
        mcmc.cluster_move(state, box2, p)
        assert (state.sp.sigma == 0).all()


def test_python_path_matches_oracle(box1, checked):
    p = Params(2, 2, 0.4, 0.4)
    cfg = quick(sweeps=20_000, burn_in=200, record_states=True, cluster_stats=False)
    acc = mcmc.run_chain(box1, p, cfg, use_kernel=False)
    sig = oracle.enumerate_sigma(box1, p)
    exact = (sig.config_weight() / sig.Z).ravel(order="F")
    assert oracle.tv(acc.states / acc.states.sum(), exact) < 0.03


def test_flip_invariance_of_increments(box2):
    p = Params(2, 2, 0.5, 0.5)
    state = mcmc.ChainState.start(box2, seed=4)
    path = mcmc.default_path(box2)
    a, b = [], []
    for _ in range(300):
        mcmc.cluster_move(state, box2, p)
        sp = state.sp
        flip = SpinPair.make(box2, 1 - sp.sigma, 1 - sp.sigmap)
        a.append(model.height_increment(sp, box2, p, path))
        b.append(model.height_increment(flip, box2, p, path))
    assert a == b
    assert np.var(a) == np.var(b)


# ---------------------------------------------------------------------------
# exact kernels


@pytest.mark.parametrize("p", [Params(2, 2, 0.4, 0.4), Params(2, 3, 0.6, 0.6)])
def test_detailed_balance_and_reachability(box1, p):
    assert mcmc.check_detailed_balance(box1, p).max_error < 1e-10
    rep = mcmc.check_reachability(box1, p)
    assert rep.passed and rep.details["min_entry"] > 0


def test_heatbath_single_site_formula(box1):
    p = Params(3, 2, 0.5, 0.4)
    K = mcmc.exact_kernels(box1, p)
    idx = K.index()
    for s in range(3):
        i = idx[(tuple([s] * 4), (0, 0))]
        for v in range(4):
            d = 2  # every vertex of the square has two neighbours
            assert K.heatbath_sigma[v][i, i] == pytest.approx(1 / (1 + 2 * p.b**d))


# ---------------------------------------------------------------------------
# statistics against exact values


def test_variance_matches_oracle(box1):
    p = Params(2, 2, 0.4, 0.4)
    exact = oracle.variance_quantities(box1, p, box1.outer_face, 1 - box1.outer_face)["var"]
    acc = mcmc.run_chain(box1, p, SamplerConfig(sweeps=200_000, burn_in=1000, seed=11))
    hv = mcmc.estimate_height_variance(acc)
    assert abs(hv["variance"] - exact) < 3 * hv["stderr"]


def test_identity_sides_match_oracle(box1):
    p = Params(2, 2, 0.4, 0.4)
    vq = oracle.variance_quantities(box1, p, box1.outer_face, 1 - box1.outer_face)
    acc = mcmc.run_chain(box1, p, SamplerConfig(sweeps=100_000, burn_in=1000, seed=12))
    cc = mcmc.estimate_cluster_counts(acc)
    m, e = cc["N_nonzero"]
    assert abs(m - vq["E_N_nonzero"]) < 4 * e
    gap = mcmc.identity_gap(acc)
    # on the square at most one cluster separates the faces, so only the squared mean is left
    assert gap["gap"] == pytest.approx(-mcmc.estimate_height_variance(acc)["mean"] ** 2, abs=1e-6)
    assert abs(gap["gap"]) < 3 * gap["stderr"] + 1e-6


def test_fk_reference_agrees(ising):
    g = lattice.build_box(4)
    ref = mcmc.fk_line_heights(g, ising, 20_000, seed=1)
    v_ref, e_ref = mcmc.batch_stats(ref)
    acc = mcmc.run_chain(g, ising, SamplerConfig(sweeps=41_000, burn_in=1000, seed=3, cluster_stats=False))
    hv = mcmc.estimate_height_variance(acc)
    assert abs(hv["variance"] - v_ref) < 3 * np.hypot(hv["stderr"], e_ref)


def test_fk_reference_rejects_off_line(box2):
    with pytest.raises(ValueError):
        mcmc.fk_line_heights(box2, Params(2, 2, 0.3, 0.3), 10)
