"""Hot loops.

Everything here sticks to the numba-compatible subset of Python so the same
source runs compiled or interpreted (see ``_accel``). Randomness always comes
in as arrays of uniforms drawn by the caller, which keeps the two paths
bit-for-bit identical.
"""

import numpy as np

from ._accel import njit


@njit
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit
def _union(parent, x, y):
    rx = _find(parent, x)
    ry = _find(parent, y)
    if rx != ry:
        if rx < ry:
            parent[ry] = rx
        else:
            parent[rx] = ry


@njit
def label_components(n, ends, mask):
    """Component labels ``0..k-1`` (numbered by smallest member) and ``k``."""
    parent = np.arange(n)
    for e in range(ends.shape[0]):
        if mask[e]:
            _union(parent, ends[e, 0], ends[e, 1])
    labels = np.empty(n, dtype=np.int64)
    k = 0
    for x in range(n):
        r = _find(parent, x)
        if r == x:
            labels[x] = k
            k += 1
        else:
            labels[x] = labels[r]
    return labels, k


@njit
def cycle_windings(n, ends, wind, mask):
    """Winding vectors of the fundamental cycles of a spanning forest of ``(n, mask)``."""
    E = ends.shape[0]
    deg = np.zeros(n + 1, dtype=np.int64)
    for e in range(E):
        if mask[e]:
            deg[ends[e, 0] + 1] += 1
            deg[ends[e, 1] + 1] += 1
    ptr = np.cumsum(deg)
    fill = ptr[:-1].copy()
    adj = np.empty(ptr[-1], dtype=np.int64)
    for e in range(E):
        if mask[e]:
            adj[fill[ends[e, 0]]] = e
            fill[ends[e, 0]] += 1
            adj[fill[ends[e, 1]]] = e
            fill[ends[e, 1]] += 1
    pos = np.zeros((n, 2), dtype=np.int64)
    seen = np.zeros(n, dtype=np.bool_)
    tree = np.zeros(E, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            x = queue[head]
            head += 1
            for i in range(ptr[x], ptr[x + 1]):
                e = adj[i]
                a = ends[e, 0]
                b = ends[e, 1]
                if a == x and not seen[b]:
                    pos[b, 0] = pos[x, 0] + wind[e, 0]
                    pos[b, 1] = pos[x, 1] + wind[e, 1]
                elif b == x and not seen[a]:
                    pos[a, 0] = pos[x, 0] - wind[e, 0]
                    pos[a, 1] = pos[x, 1] - wind[e, 1]
                else:
                    continue
                y = b if a == x else a
                seen[y] = True
                tree[e] = True
                queue[tail] = y
                tail += 1
    m = 0
    for e in range(E):
        if mask[e] and not tree[e]:
            m += 1
    out = np.empty((m, 2), dtype=np.int64)
    j = 0
    for e in range(E):
        if mask[e] and not tree[e]:
            a = ends[e, 0]
            b = ends[e, 1]
            out[j, 0] = pos[a, 0] + wind[e, 0] - pos[b, 0]
            out[j, 1] = pos[a, 1] + wind[e, 1] - pos[b, 1]
            j += 1
    return out


@njit
def _region_parent(nV, nU, ev, eu, cnodes, cedges, on_dual, parent):
    # nodes: vertices 0..nV-1, faces nV..nV+nU-1
    for x in range(nV + nU):
        parent[x] = x
    for e in range(ev.shape[0]):
        if not cedges[e]:
            if on_dual:
                _union(parent, ev[e, 0], ev[e, 1])
            else:
                _union(parent, nV + eu[e, 0], nV + eu[e, 1])
        for i in range(2):
            v = ev[e, i]
            for j in range(2):
                u = eu[e, j]
                if on_dual:
                    if not cnodes[u]:
                        _union(parent, v, nV + u)
                elif not cnodes[v]:
                    _union(parent, v, nV + u)


@njit
def complement_regions(nV, nU, ev, eu, cnodes, cedges, on_dual):
    parent = np.empty(nV + nU, dtype=np.int64)
    _region_parent(nV, nU, ev, eu, cnodes, cedges, on_dual, parent)
    out = np.empty(nV + nU, dtype=np.int64)
    for x in range(nV + nU):
        out[x] = _find(parent, x)
    if on_dual:
        for u in range(nU):
            if cnodes[u]:
                out[nV + u] = -1
    else:
        for v in range(nV):
            if cnodes[v]:
                out[v] = -1
    return out


@njit
def subset_cluster_table(n, ends):
    """``T[j, k]`` = number of edge subsets with ``j`` edges and ``k`` components."""
    E = ends.shape[0]
    table = np.zeros((E + 1, n + 1), dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    for bits in range(1 << E):
        for x in range(n):
            parent[x] = x
        k = n
        j = 0
        for e in range(E):
            if (bits >> e) & 1:
                j += 1
                rx = _find(parent, ends[e, 0])
                ry = _find(parent, ends[e, 1])
                if rx != ry:
                    parent[ry] = rx
                    k -= 1
        table[j, k] += 1
    return table


# ---------------------------------------------------------------------------
# Markov chain moves
#
# "self" is the side being updated (sigma on V with edges ev, or sigma' on U
# with edges eu); "other" is the opposite side. Edge e belongs to the
# contour of the other side when the other spins differ across it.


@njit
def heatbath_half(spin, nq, ends, other, oends, w, ptr, idx, u):
    """Heat-bath update of every block of ``spin``; blocks are glued by the other side's contours.

    Consumes ``u[0:k]``, one uniform per block in label order.
    """
    n = spin.shape[0]
    E = ends.shape[0]
    glue = np.empty(E, dtype=np.bool_)
    for e in range(E):
        glue[e] = other[oends[e, 0]] != other[oends[e, 1]]
    labels, k = label_components(n, ends, glue)
    start = np.zeros(k + 1, dtype=np.int64)
    for x in range(n):
        start[labels[x] + 1] += 1
    for b in range(k):
        start[b + 1] += start[b]
    fill = start[:-1].copy()
    members = np.empty(n, dtype=np.int64)
    for x in range(n):
        members[fill[labels[x]]] = x
        fill[labels[x]] += 1
    cnt = np.zeros(nq, dtype=np.int64)
    prob = np.empty(nq)
    for b in range(k):
        cnt[:] = 0
        for i in range(start[b], start[b + 1]):
            x = members[i]
            for t in range(ptr[x], ptr[x + 1]):
                e = idx[t]
                y = ends[e, 0]
                if y == x:
                    y = ends[e, 1]
                if labels[y] != b:
                    cnt[spin[y]] += 1
        cmax = 0
        for s in range(nq):
            if cnt[s] > cmax:
                cmax = cnt[s]
        tot = 0.0
        for s in range(nq):
            prob[s] = w ** (cmax - cnt[s])
            tot += prob[s]
        r = u[b] * tot
        pick = nq - 1
        acc = 0.0
        for s in range(nq):
            acc += prob[s]
            if r < acc:
                pick = s
                break
        for i in range(start[b], start[b + 1]):
            spin[members[i]] = pick
    return k


@njit
def cluster_half(spin, nq, ends, other, oends, w, u_bond, u_spin):
    """Draw the bonds of this side given both spins, then a uniform spin per cluster.

    An edge is forced open on the other side's contour, forced closed on this
    side's contour, and otherwise open with probability ``1 - w``.
    """
    n = spin.shape[0]
    E = ends.shape[0]
    bond = np.empty(E, dtype=np.bool_)
    for e in range(E):
        if other[oends[e, 0]] != other[oends[e, 1]]:
            bond[e] = True
        elif spin[ends[e, 0]] != spin[ends[e, 1]]:
            bond[e] = False
        else:
            bond[e] = u_bond[e] < 1.0 - w
    labels, k = label_components(n, ends, bond)
    for x in range(n):
        s = int(u_spin[labels[x]] * nq)
        spin[x] = s if s < nq else nq - 1
    return k


@njit
def couple(sig, sigp, ev, eu, a, b, low, u):
    """Sample ``(omega, omega')`` from the coupling table; ``low`` selects the a+b<=1 column."""
    E = ev.shape[0]
    om = np.empty(E, dtype=np.bool_)
    omp = np.empty(E, dtype=np.bool_)
    for e in range(E):
        if sigp[eu[e, 0]] != sigp[eu[e, 1]]:
            om[e] = True
            omp[e] = False
        elif sig[ev[e, 0]] != sig[ev[e, 1]]:
            om[e] = False
            omp[e] = True
        else:
            r = u[e]
            if low:
                if r < a:
                    om[e] = True
                    omp[e] = False
                elif r < a + b:
                    om[e] = False
                    omp[e] = True
                else:
                    om[e] = True
                    omp[e] = True
            else:
                if r < 1.0 - b:
                    om[e] = True
                    omp[e] = False
                elif r < 2.0 - a - b:
                    om[e] = False
                    omp[e] = True
                else:
                    om[e] = False
                    omp[e] = False
    return om, omp


@njit
def path_increment(sig, sigp, qv, qpv, ev, pe, pfrom, pto):
    """``h'(end) - h'(start)`` along a face path given as crossed edges."""
    h = 0.0
    for t in range(pe.shape[0]):
        h += qv[sig[ev[pe[t], 0]]] * (qpv[sigp[pto[t]]] - qpv[sigp[pfrom[t]]])
    return h


@njit
def _separates(nV, nU, ev, eu, lab, c, bond, on_dual, x1, x2, cnodes, cedges, parent):
    if on_dual:
        for x in range(nU):
            cnodes[x] = lab[x] == c
        for e in range(ev.shape[0]):
            cedges[e] = bond[e] and lab[eu[e, 0]] == c
    else:
        for x in range(nV):
            cnodes[x] = lab[x] == c
        for e in range(ev.shape[0]):
            cedges[e] = bond[e] and lab[ev[e, 0]] == c
    _region_parent(nV, nU, ev, eu, cnodes, cedges, on_dual, parent)
    return _find(parent, nV + x1) != _find(parent, nV + x2)


@njit
def measure(sig, sigp, qv, qpv, ev, eu, om, omp, pe, pfrom, pto, stats, dbuf):
    """Height increment and cluster statistics for one coupled configuration.

    Returns ``(dh, n_nonzero, sum_d2, n_dual_sep, n_primal_sep, conn)``.
    ``conn`` is 1 when the path ends share an omega' cluster. The separating
    counts and ``conn`` are only computed when ``stats`` is true (else -1);
    the nonzero cluster increments are written to ``dbuf[:n_nonzero]``.
    """
    nV = sig.shape[0]
    nU = sigp.shape[0]
    L = pe.shape[0]
    dh = path_increment(sig, sigp, qv, qpv, ev, pe, pfrom, pto)
    lab, k = label_components(nV, ev, om)
    acc = np.zeros(L, dtype=np.float64)
    key = np.empty(L, dtype=np.int64)
    m = 0
    for t in range(L):
        jump = qpv[sigp[pto[t]]] - qpv[sigp[pfrom[t]]]
        if jump != 0.0:
            c = lab[ev[pe[t], 0]]
            j = 0
            while j < m and key[j] != c:
                j += 1
            if j == m:
                key[m] = c
                acc[m] = 0.0
                m += 1
            acc[j] += jump
    n_nz = 0
    s2 = 0.0
    for j in range(m):
        if abs(acc[j]) > 1e-9:
            dbuf[n_nz] = acc[j]
            n_nz += 1
            s2 += acc[j] * acc[j]
    if not stats or L == 0:
        return dh, n_nz, s2, -1, -1, -1
    u1 = pfrom[0]
    u2 = pto[L - 1]
    parent = np.empty(nV + nU, dtype=np.int64)
    cn_u = np.empty(nU, dtype=np.bool_)
    cn_v = np.empty(nV, dtype=np.bool_)
    ce = np.empty(ev.shape[0], dtype=np.bool_)
    # dual clusters: a separating cluster must contain a face of the path
    labp, kp = label_components(nU, eu, omp)
    cand = np.empty(L + 1, dtype=np.int64)
    nc = 0
    for t in range(L + 1):
        f = pfrom[t] if t < L else pto[L - 1]
        c = labp[f]
        j = 0
        while j < nc and cand[j] != c:
            j += 1
        if j == nc:
            cand[nc] = c
            nc += 1
    n_dual = 0
    for j in range(nc):
        c = cand[j]
        if labp[u1] == c or labp[u2] == c:
            n_dual += 1
        elif _separates(nV, nU, ev, eu, labp, c, omp, True, u1, u2, cn_u, ce, parent):
            n_dual += 1
    # primal clusters: a separating cluster must own a crossed edge
    nc = 0
    for t in range(L):
        e = pe[t]
        if om[e]:
            c = lab[ev[e, 0]]
            j = 0
            while j < nc and cand[j] != c:
                j += 1
            if j == nc:
                cand[nc] = c
                nc += 1
    n_primal = 0
    for j in range(nc):
        if _separates(nV, nU, ev, eu, lab, cand[j], om, False, u1, u2, cn_v, ce, parent):
            n_primal += 1
    conn = 1 if labp[u1] == labp[u2] else 0
    return dh, n_nz, s2, n_dual, n_primal, conn


@njit
def state_code(sig, sigp, q, qp):
    code = 0
    mult = 1
    for x in range(sig.shape[0]):
        code += sig[x] * mult
        mult *= q
    for x in range(sigp.shape[0]):
        code += sigp[x] * mult
        mult *= qp
    return code


@njit
def run_sweeps(
    sig, sigp, q, qp, a, b, low, ev, eu, vptr, vidx, uptr, uidx,
    n_hb, n_cl, qv, qpv, pe, pfrom, pto, stats, measure_mask, record_codes,
    uniforms, out_f, out_i, dbuf, codes,
):
    """Advance the chain by ``len(measure_mask)`` sweeps.

    One sweep is ``n_hb`` heat-bath passes and ``n_cl`` cluster moves, each
    alternating the sigma side and the sigma' side. After a sweep flagged in
    ``measure_mask`` a fresh coupled pair is drawn and measured; row ``r`` of
    ``out_f`` receives ``(dh, sum_d2)`` and ``out_i`` receives
    ``(n_nonzero, n_dual_sep, n_primal_sep, conn)``. Returns the number of rows written.
    """
    nV = sig.shape[0]
    nU = sigp.shape[0]
    E = ev.shape[0]
    r = 0
    for s in range(measure_mask.shape[0]):
        u = uniforms[s]
        off = 0
        for _ in range(n_cl):
            cluster_half(sig, q, ev, sigp, eu, b, u[off:off + E], u[off + E:off + E + nV])
            off += E + nV
            cluster_half(sigp, qp, eu, sig, ev, a, u[off:off + E], u[off + E:off + E + nU])
            off += E + nU
        for _ in range(n_hb):
            heatbath_half(sig, q, ev, sigp, eu, b, vptr, vidx, u[off:off + nV])
            off += nV
            heatbath_half(sigp, qp, eu, sig, ev, a, uptr, uidx, u[off:off + nU])
            off += nU
        if measure_mask[s]:
            if record_codes:
                codes[r] = state_code(sig, sigp, q, qp)
            om, omp = couple(sig, sigp, ev, eu, a, b, low, u[off:off + E])
            dh, n_nz, s2, nd, npr, conn = measure(
                sig, sigp, qv, qpv, ev, eu, om, omp, pe, pfrom, pto, stats, dbuf[r]
            )
            out_f[r, 0] = dh
            out_f[r, 1] = s2
            out_i[r, 0] = n_nz
            out_i[r, 1] = nd
            out_i[r, 2] = npr
            out_i[r, 3] = conn
            r += 1
    return r


def uniforms_per_sweep(nV, nU, E, n_hb, n_cl):
    return n_cl * (2 * E + nV + nU) + n_hb * (nV + nU) + E
