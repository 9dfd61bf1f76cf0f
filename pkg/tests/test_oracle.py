import itertools
import json
import math

import numpy as np
import pytest

from pairpotts import cli, lattice, model, oracle
from pairpotts.lattice import PRIMAL, EdgeSet
from pairpotts.model import Params


def brute_law(g, p):
    """Every (sigma, sigma') by nested loops; returns {(sigma, sigma'): weight}."""
    out = {}
    for sig in itertools.product(range(p.q), repeat=g.n_vertices):
        eta = {e for e, (v1, v2) in enumerate(g.ev) if sig[v1] != sig[v2]}
        for sigp in itertools.product(range(p.qp), repeat=g.n_faces):
            etap = {e for e, (u1, u2) in enumerate(g.eu) if sigp[u1] != sigp[u2]}
            if eta & etap:
                continue
            out[sig, sigp] = p.a ** len(etap) * p.b ** len(eta)
    return out


def fk_weights(g, Q, pb):
    E = g.n_edges
    w = np.empty(1 << E)
    for bits in range(1 << E):
        k = lattice.count_clusters(g, EdgeSet(PRIMAL, bits, E))
        n = bin(bits).count("1")
        w[bits] = Q**k * pb**n * (1 - pb) ** (E - n)
    return w / w.sum()


def cycle_Z(n, q, x):
    """Closed form for the n-cycle: (x+1)^n Z = (q+x)^n + (q-1) x^n."""
    return ((q + x) ** n + (q - 1) * x**n) / (x + 1) ** n


# ---------------------------------------------------------------------------
# enumeration


def test_trivial_alphabets(box1):
    sig = oracle.enumerate_sigma(box1, Params(1, 1, 0.3, 0.4))
    assert sig.Z == 1.0
    assert len(sig.distribution()) == 1


@pytest.mark.parametrize("p", [Params(2, 2, 0.5, 0.5), Params(2, 3, 0.2, 0.3), Params(3, 2, 0.7, 0.6)])
def test_enumeration_matches_brute_force(box1, p):
    sig = oracle.enumerate_sigma(box1, p)
    law = brute_law(box1, p)
    assert sig.Z == pytest.approx(sum(law.values()), rel=1e-13)
    cw = sig.config_weight()
    for (s, sp), w in law.items():
        i = sum(x * p.q**v for v, x in enumerate(s))
        j = sum(x * p.qp**u for u, x in enumerate(sp))
        assert cw[i, j] == pytest.approx(w, rel=1e-13)
    assert cw.sum() == pytest.approx(sig.Z)


def test_prism_enumeration_matches_brute_force(prism):
    p = Params(2, 2, 0.4, 0.7)
    assert oracle.enumerate_sigma(prism, p).Z == pytest.approx(sum(brute_law(prism, p).values()), rel=1e-13)


def test_frozen_partition_functions(box1):
    # frozen after agreeing with the brute-force enumeration above
    assert oracle.enumerate_sigma(box1, Params(2, 2, 0.5, 0.5)).Z == pytest.approx(10.5, rel=1e-14)
    assert oracle.enumerate_sigma(box1, Params(2, 3, 0.2, 0.3)).Z == pytest.approx(9.3078, rel=1e-14)
    assert oracle.enumerate_sigma(box1, Params(3, 2, 0.7, 0.6)).Z == pytest.approx(48.3942, rel=1e-14)


def test_self_dual_square_exchange(box1):
    sig = oracle.enumerate_sigma(box1, Params(2, 2, 0.45, 0.45))
    eta = {}
    for k, v in sig.eta_law().items():
        eta[bin(k).count("1")] = eta.get(bin(k).count("1"), 0) + v
    etap = {}
    for k, v in sig.etap_law().items():
        etap[bin(k).count("1")] = etap.get(bin(k).count("1"), 0) + v
    # the full split costs a^4 on the faces and b^4 on the checkerboard; a = b makes them equal
    assert etap[4] == pytest.approx(eta[4], rel=1e-13)
    assert sum(eta.values()) == pytest.approx(1.0) and sum(etap.values()) == pytest.approx(1.0)


def test_constant_sigma_two_ways(box1):
    p = Params(2, 2, 0.5, 0.5)
    sig = oracle.enumerate_sigma(box1, p)
    direct = sig.sigma_marginal()[[0, 15]].sum()
    # FK(4) coupling: sigma constant iff every omega-cluster drew the same sigma-label
    E = box1.n_edges
    fk = fk_weights(box1, 4, p.p)
    via_fk = 0.0
    for bits in range(1 << E):
        k = lattice.count_clusters(box1, EdgeSet(PRIMAL, bits, E))
        via_fk += fk[bits] * 2 * 0.5**k
    assert direct == pytest.approx(via_fk, abs=1e-12)


@pytest.mark.parametrize("p", [Params(2, 3, 0.3, 0.4), Params(2, 2, 0.7, 0.6), Params(3, 2, 0.5, 0.5)])
def test_joint_marginalises_to_sigma_law(box1, p):
    joint = oracle.enumerate_joint(box1, p)
    sig = joint.sig
    cfg, pr = joint.dist.configs, joint.dist.probs
    pair = np.zeros(sig.config_weight().shape)
    np.add.at(pair, (cfg[:, 0], cfg[:, 1]), pr)
    assert oracle.tv(pair, sig.config_weight() / sig.Z) < 1e-12
    # and the explicit table agrees with the coupling-table route on omega
    om = np.bincount(cfg[:, 2], weights=pr, minlength=16)
    assert oracle.tv(om, oracle.joint_law(box1, p).omega_marginal()) < 1e-12


def test_low_weight_ignores_spins(box1):
    p = Params(2, 2, 0.3, 0.4)
    joint = oracle.enumerate_joint(box1, p)
    by_bonds = {}
    for (r, rp, o, d), w in zip(joint.dist.configs, joint.dist.weights):
        by_bonds.setdefault((o, d), set()).add(round(w, 15))
    assert all(len(v) == 1 for v in by_bonds.values())


@pytest.mark.parametrize("p", [Params(2, 2, 0.3, 0.4), Params(2, 3, 0.6, 0.7)])
def test_edwards_sokal(box1, p):
    assert oracle.check_edwards_sokal(box1, p).passed


def test_cap_exceeded(box2):
    with pytest.raises(oracle.CapExceeded):
        oracle.enumerate_sigma(box2, Params(3, 3, 0.5, 0.5), cap=1000)


# ---------------------------------------------------------------------------
# Potts partition functions


def test_single_edge():
    one = (2, np.array([[0, 1]]))
    assert oracle.potts_Z(one, 2, 1.0).value == pytest.approx(3.0)
    for q, x in [(3, 0.7), (4, 2.5), (2, -0.4)]:
        assert oracle.potts_Z(one, q, x).value == pytest.approx((q * q + q * x) / (x + 1))


@pytest.mark.parametrize("q,x", [(3, 0.7), (2, 2.0), (4, -0.3), (2, -3.0)])
def test_square_routes_agree(box1, q, x):
    spin = oracle.potts_Z(box1, q, x, route="spin").value
    subset = oracle.potts_Z(box1, q, x, route="subset").value
    assert spin == pytest.approx(subset, rel=1e-12)
    assert spin == pytest.approx(cycle_Z(4, q, x), rel=1e-12)


def test_subset_route_rejects_minus_one(box1):
    with pytest.raises(ValueError):
        oracle.potts_Z(box1, 2, -1.0, route="subset")


def test_condition_flag():
    # alternating subset sum on a long path graph cancels badly near x = -1
    n = 16
    path = (n, np.array([[i, i + 1] for i in range(n - 1)]))
    z = oracle.potts_Z(path, 2, -0.999, route="subset")
    assert z.ill_conditioned
    assert not oracle.potts_Z(path, 2, 0.5).ill_conditioned


def test_edgeless():
    assert oracle.potts_Z((3, np.zeros((0, 2), int)), 4, 1.3).value == 64.0


@pytest.mark.parametrize("g,q,x", [("box1", 2, 2.0), ("box1", 3, math.sqrt(3)), ("box2", 4, 0.5), ("prism", 3, 1.2)])
def test_potts_duality(request, g, q, x):
    rep = oracle.check_potts_duality(request.getfixturevalue(g), q, x)
    assert rep.passed, rep.max_error


def test_duality_rejects_torus(torus2):
    with pytest.raises(lattice.TopologyError):
        oracle.check_potts_duality(torus2, 2, 1.0)


@pytest.mark.parametrize("q,x,t", [(2, 1.0, 0.5), (3, -0.5, 2.0), (2, 0.7, 0.0)])
def test_resummation(box1, q, x, t):
    rep = oracle.check_resummation(box1, q, x, t)
    assert rep.passed
    if t == 0.0:
        assert rep.details["lhs"] == pytest.approx(q**4)


# ---------------------------------------------------------------------------
# omega marginals


@pytest.mark.parametrize("p", [Params(2, 3, 0.2, 0.3), Params(2, 2, 0.6, 0.7), Params(3, 2, 0.5, 0.5)])
def test_omega_marginals(box1, p):
    rep = oracle.check_omega_marginals(box1, p)
    assert rep.passed, rep.details


def test_single_dual_spin_is_fk(box1):
    p = Params(3, 1, 0.4, 0.35)
    target = oracle.joint_law(box1, p).omega_marginal()
    assert oracle.rel_error(fk_weights(box1, 3, 1 - p.b), target) < 1e-10


def test_omega_weight_matches_marginal(box1):
    p = Params(2, 3, 0.6, 0.7)
    w = oracle.omega_weight(box1, p)
    v = np.array([w(b) for b in range(16)])
    assert oracle.rel_error(v / v.sum(), oracle.joint_law(box1, p).omega_marginal()) < 1e-12


def test_fk_reduction_box(box1):
    p = Params(2, 2, 0.5, 0.5)
    assert p.p == pytest.approx(2 / 3)
    rep = oracle.check_fk_reduction(box1, p)
    assert rep.passed
    target = oracle.joint_law(box1, p).omega_marginal()
    assert oracle.rel_error(fk_weights(box1, 4, 2 / 3), target) < 1e-10


def test_fk_reduction_torus(torus2):
    rep = oracle.check_fk_reduction(torus2, Params(2, 2, 0.5, 0.5))
    assert rep.passed
    assert rep.details["self_dual_error"] < 1e-10


def test_fk_reduction_rejects_off_line(box1):
    with pytest.raises(ValueError):
        oracle.check_fk_reduction(box1, Params(2, 2, 0.3, 0.3))


def test_torus_topology(torus2):
    rep = oracle.check_torus_topology(torus2)
    assert rep.passed and rep.counterexample is None
    assert rep.details["subsets"] == 256
    assert sum(rep.details["delta_counts"].values()) == 256


# ---------------------------------------------------------------------------
# unconstrained model


def test_unconstrained(box1):
    assert oracle.check_unconstrained_equivalence(box1, Params(2, 2, 0.4, 0.4)).passed


def test_unconstrained_on_line_reduced_potts(box1):
    rep = oracle.check_unconstrained_equivalence(box1, Params(2, 2, 0.5, 0.5))
    assert rep.passed and rep.details["reduced_potts_tv"] < 1e-10


def test_unconstrained_rejects_a_one(box1):
    with pytest.raises(ValueError):
        oracle.check_unconstrained_equivalence(box1, Params(2, 2, 1.0, 0.5))


def test_mutated_weight_is_caught(box1, monkeypatch, tmp_path):
    def corrupted(n_etap, n_eta, p):
        return p.a ** np.asarray(n_etap, float) * (p.b**2) ** np.asarray(n_eta, float)

    monkeypatch.setattr(model, "contour_weight", corrupted)
    rep = oracle.check_unconstrained_equivalence(box1, Params(2, 2, 0.4, 0.4))
    assert not rep.passed and rep.max_error > 1e-3
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"graph": "box:1", "grid": {"q": [2], "qp": [2], "a": [0.4], "b": [0.4]}}))
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


# ---------------------------------------------------------------------------
# FKG


def test_fkg_holds_low(box1):
    assert oracle.fkg_omega(box1, Params(2, 2, 0.3, 0.4)).passed


def test_fkg_counterexample_high(prism, box2):
    rep = oracle.fkg_omega(prism, Params(1, 2, 0.4, 0.8))
    assert not rep.passed and rep.counterexample["relative_slack"] < 0
    assert "counterexample" in rep.to_dict()
    rep2 = oracle.fkg_omega_search(box2, Params(2, 2, 0.7, 0.7), trials=300)
    assert not rep2.passed
    assert oracle.fkg_omega_search(box2, Params(2, 2, 0.3, 0.4), trials=300).passed


@pytest.mark.parametrize("b", [0.2, 0.5, 0.9, 1.0])
def test_fkg_sigma(box1, b):
    assert oracle.fkg_sigma(box1, Params(2, 2, 0.5, b)).passed


def test_fkg_lattice_detects_anticorrelation():
    # two bits that repel each other
    probs = np.array([0.1, 0.4, 0.4, 0.1])
    rep = oracle.check_fkg_lattice(probs, 2)
    assert not rep.passed
    assert oracle.check_fkg_lattice(np.array([0.4, 0.1, 0.1, 0.4]), 2).passed
    # zero entries take the full lattice scan
    assert not oracle.check_fkg_lattice(np.array([0.0, 0.5, 0.5, 0.0]), 2).passed


# ---------------------------------------------------------------------------
# correlations


def test_two_point_equals_connectivity(box1):
    p = Params(2, 2, 0.35, 0.45)
    law = oracle.joint_law(box1, p)
    r = np.array([1, 0, 0, 1])
    conn = 0.0
    pw = law.omega_marginal()
    for bits in np.flatnonzero(pw):
        part = lattice.clusters(box1, EdgeSet(PRIMAL, int(bits), 4))
        conn += pw[bits] * part.same(0, 3)
    assert oracle.spin_moment(law.sig, r) == pytest.approx(conn, abs=1e-12)


def test_odd_moments_vanish(box1):
    law = oracle.joint_law(box1, Params(3, 2, 0.3, 0.3, Q=(-1.0, 0.0, 1.0)))
    for r in ([1, 0, 0, 0], [1, 1, 1, 0], [2, 1, 0, 0]):
        assert abs(oracle.spin_moment(law.sig, r)) < 1e-14
        assert abs(oracle.cluster_moment(law, r)) < 1e-14


def test_correlation_formula(box1):
    rep = oracle.check_correlation_formula(box1, Params(3, 2, 0.3, 0.3, Q=(-1.0, 0.0, 1.0)))
    assert rep.passed and rep.details["n_cases"] >= 7


def test_griffiths_examples(box1):
    p = Params(3, 3, 0.3, 0.3, Q=(-1.0, 0.0, 1.0))
    r, s = (1, 1, 0, 0), (0, 1, 1, 0)
    rep = oracle.check_griffiths(box1, p, pairs=[(r, s), ((2, 0, 0, 0), (0, 2, 0, 0))])
    assert rep.passed and rep.details["min_slack"] > 0
    q2 = Params(2, 2, 0.3, 0.3)
    sig = oracle.enumerate_sigma(box1, q2)
    assert oracle.spin_moment(sig, (2, 2, 0, 0)) == pytest.approx(1.0)


def test_griffiths_rejects_high(box1):
    with pytest.raises(ValueError):
        oracle.check_griffiths(box1, Params(2, 2, 0.7, 0.7))


# ---------------------------------------------------------------------------
# variance identity


def test_variance_identity_exact(box1):
    p = Params(2, 2, 0.4, 0.4)
    rep = oracle.check_variance_identity(box1, p, 0, box1.outer_face)
    assert rep.passed
    d = rep.details
    assert d["var"] == pytest.approx(4 * d["m2"] * d["E_N_nonzero"], rel=1e-10)
    # frozen
    assert d["var"] == pytest.approx(0.050914876690533024, rel=1e-12)


def test_variance_matches_brute_force(box1):
    p = Params(2, 2, 0.4, 0.4)
    law = brute_law(box1, p)
    Z = sum(law.values())
    inner = 1 - box1.outer_face
    # inner face height minus outer face height, read at vertex 0
    var = sum(w * ((2 * s[0] - 1) * ((2 * sp[inner] - 1) - (2 * sp[box1.outer_face] - 1))) ** 2 for (s, sp), w in law.items()) / Z
    assert oracle.check_variance_identity(box1, p).details["var"] == pytest.approx(var, rel=1e-12)


def test_inequality_high(box1):
    rep = oracle.check_variance_identity(box1, Params(2, 2, 0.7, 0.6))
    assert rep.passed
    d = rep.details
    assert d["E_N_nonzero"] >= 0.5 * (d["E_N_prime"] - 1) - 1e-12


# ---------------------------------------------------------------------------
# conditional laws


def test_conditional_laws(box1):
    rep = oracle.check_conditional_laws(box1, Params(2, 2, 0.8, 0.5))
    assert rep.passed and "omega|omega',sigma'" in rep.details["tv"]


def test_conditional_line_is_deterministic(box1):
    p = Params(2, 2, 0.6, 0.4)
    law = oracle.joint_law(box1, p)
    full = 15
    live = law.P_s > 0
    assert (law.omega_bits[live] == full ^ law.omegap_bits[live]).all()


# ---------------------------------------------------------------------------
# reports


def test_report_json_shape(box1):
    rep = oracle.check_potts_duality(box1, 2, 2.0)
    d = json.loads(rep.to_json())
    assert set(d) >= {"identity", "graph", "params", "max_error", "pass"}
    assert d["pass"] is True


def test_suites_pass(box1):
    for rep in oracle.graph_suite(box1) + oracle.identity_suite(box1, Params(2, 3, 0.3, 0.7)):
        assert rep.passed, rep.to_dict()
