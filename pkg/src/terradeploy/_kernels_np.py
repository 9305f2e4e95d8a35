"""Pure-numpy kernels, behaviourally identical to ``_kernels_nb``.

Array layouts shared by both backends:

* ``terr``  (G, 5)  rows ``[h, mux, muy, sigx, sigy]``
* ``box``   (n, 4)  BVH node boxes ``[xmin, xmax, ymin, ymax]``, node 0 is the root
* ``left``, ``right`` (n,) child indices, ``comp`` (n,) component index or -1
* deployment states (M, 5) rows ``[x, y, z, eta, zeta]``

LoS bisection here runs level-synchronously over all live intervals, which
visits the same intervals in the same breadth-first order as the numba queue;
only the evaluation *count* may differ on blocked paths, since a whole level is
evaluated before the blocked flag is returned.
"""

import math

import numpy as np

TWO_PI = 2.0 * math.pi
SEP_SLACK = 1e-6

try:
    from scipy.special import erfc as _erfc
except ImportError:  # pragma: no cover
    _erfc = np.vectorize(math.erfc)


def elevation(terr, base, xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    out = np.full(xs.shape, float(base))
    for i in range(terr.shape[0]):
        dx = (xs - terr[i, 1]) / terr[i, 3]
        dy = (ys - terr[i, 2]) / terr[i, 4]
        out += terr[i, 0] * np.exp(-0.5 * (dx * dx + dy * dy))
    return out


def _point(p1, p2, t):
    t = np.asarray(t)[..., None]
    return (1.0 - t) * p1 + t * p2


def _seg_hits_boxes(x0, y0, x1, y1, bx):
    """(I,) segments against (B, 4) boxes -> (I, B) bool, slab clipping."""
    x0 = x0[:, None]
    y0 = y0[:, None]
    dx = x1[:, None] - x0
    dy = y1[:, None] - y0
    tmin = np.zeros((x0.shape[0], bx.shape[0]))
    tmax = np.ones_like(tmin)
    ok = np.ones(tmin.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for d, o, lo, hi in ((dx, x0, bx[:, 0], bx[:, 1]), (dy, y0, bx[:, 2], bx[:, 3])):
            zero = d == 0.0
            ta = (lo - o) / d
            tb = (hi - o) / d
            t_lo = np.minimum(ta, tb)
            t_hi = np.maximum(ta, tb)
            tmin = np.where(zero, tmin, np.maximum(tmin, t_lo))
            tmax = np.where(zero, tmax, np.minimum(tmax, t_hi))
            ok &= ~(zero & ((o < lo) | (o > hi)))
    return ok & (tmin <= tmax)


def _seg_qmin(x0, y0, x1, y1, terr):
    ax = (x0[:, None] - terr[:, 1]) / terr[:, 3]
    ay = (y0[:, None] - terr[:, 2]) / terr[:, 4]
    bx = (x1 - x0)[:, None] / terr[:, 3]
    by = (y1 - y0)[:, None] / terr[:, 4]
    den = bx * bx + by * by
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 0.0, -(ax * bx + ay * by) / den, 0.0)
    s = np.clip(s, 0.0, 1.0)
    qx = ax + s * bx
    qy = ay + s * by
    return qx * qx + qy * qy


def _leaf_arrays(box, comp):
    leaf = comp >= 0
    return box[leaf], comp[leaf]


def los_query(terr, base, box, left, right, comp, p1, p2, eps):
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    nev = 1
    if p1[2] <= elevation(terr, base, p1[:1], p1[1:2])[0]:
        return 0, nev
    nev += 1
    if p2[2] <= elevation(terr, base, p2[:1], p2[1:2])[0]:
        return 0, nev
    if box.shape[0] == 0:
        return 1, nev
    root = box[:1]
    if not _seg_hits_boxes(p1[:1], p1[1:2], p2[:1], p2[1:2], root)[0, 0]:
        return 1, nev
    lbox, lcomp = _leaf_arrays(box, comp)
    lterr = terr[lcomp]
    hpos = np.maximum(lterr[:, 0], 0.0)
    a = np.array([0.0])
    b = np.array([1.0])
    while a.size:
        pa = _point(p1, p2, a)
        pb = _point(p1, p2, b)
        hits = _seg_hits_boxes(pa[:, 0], pa[:, 1], pb[:, 0], pb[:, 1], lbox)
        q = _seg_qmin(pa[:, 0], pa[:, 1], pb[:, 0], pb[:, 1], lterr)
        bound = base + np.sum(np.where(hits, hpos * np.exp(-0.5 * q), 0.0), axis=1)
        keep = hits.any(axis=1) & ~(np.minimum(pa[:, 2], pb[:, 2]) > bound)
        a, b = a[keep], b[keep]
        if not a.size:
            break
        t = 0.5 * (a + b)
        pm = _point(p1, p2, t)
        inside = ((pm[:, 0:1] >= lbox[:, 0]) & (pm[:, 0:1] <= lbox[:, 1])
                  & (pm[:, 1:2] >= lbox[:, 2]) & (pm[:, 1:2] <= lbox[:, 3])).any(axis=1)
        if inside.any():
            zt = elevation(terr, base, pm[inside, 0], pm[inside, 1])
            blocked = pm[inside, 2] <= zt
            if blocked.any():
                # the scalar kernel stops at the first blocked midpoint in queue order
                return 0, nev + int(np.argmax(blocked)) + 1
            nev += int(inside.sum())
        split = 0.5 * (b - a) > eps
        a, t, b = a[split], t[split], b[split]
        a, b = np.stack([a, t], axis=1).ravel(), np.stack([t, b], axis=1).ravel()
    return 1, nev


def los_many(terr, base, box, left, right, comp, P1, P2, eps):
    n = P1.shape[0]
    vis = np.empty(n, dtype=np.int64)
    nev = np.empty(n, dtype=np.int64)
    for i in range(n):
        vis[i], nev[i] = los_query(terr, base, box, left, right, comp, P1[i], P2[i], eps)
    return vis, nev


def dense_samples(step):
    return int(math.ceil(1.0 / step - 1e-9))


def los_dense(terr, base, p1, p2, step):
    n = dense_samples(step)
    t = np.minimum(np.arange(n + 1) * step, 1.0)
    t[-1] = 1.0
    pts = _point(np.asarray(p1, float), np.asarray(p2, float), t)
    below = pts[:, 2] <= elevation(terr, base, pts[:, 0], pts[:, 1])
    if below.any():
        return 0, int(np.argmax(below)) + 1
    return 1, n + 1


# ------------------------------------------------------------------- sensing/fitness


def qfunc(x):
    return 0.5 * _erfc(np.asarray(x) / math.sqrt(2.0))


def wrap_angle(a):
    d = np.mod(a, TWO_PI)
    return np.where(d > math.pi, d - TWO_PI, d)


def _relevant(chf, cht, bands, N):
    inb = (chf[None, :] > bands[:, 0:1]) & (chf[None, :] < bands[:, 1:2])  # (M, C)
    rel = np.zeros((bands.shape[0], N), dtype=bool)
    for n in range(N):
        rel[:, n] = inb[:, cht == n].any(axis=1)
    return inb, rel


def link_matrix(state, prob):
    terr, base, box, left, right, comp, eps, tgt, pw, chf, cht, bands, sens, en, cb = prob.kernel_args()
    st = np.asarray(state, dtype=np.float64)
    M, N = st.shape[0], tgt.shape[0]
    _, rel = _relevant(chf, cht, bands, N)
    qinv, sk2, sig_e, sig_z, al_a, al_e = sens[:6]
    link = sens[6] * sens[7] / sens[8]
    d = tgt[None, :, :] - st[:, None, :3]
    hd = np.hypot(d[..., 0], d[..., 1])
    d2 = hd * hd + d[..., 2] ** 2
    de = wrap_angle(np.arctan2(d[..., 1], d[..., 0]) - st[:, 3:4])
    dzt = np.arctan2(d[..., 2], hd) - st[:, 4:5]
    inbeam = rel & (d2 > 0.0) & (np.abs(de) <= al_a) & (np.abs(dzt) <= al_e)
    g0 = np.exp(-de * de / (2.0 * sig_e * sig_e) - dzt * dzt / (2.0 * sig_z * sig_z))
    losm = np.full((M, N), -1, dtype=np.int64)
    for m, n in zip(*np.nonzero(inbeam)):
        losm[m, n] = los_query(terr, base, box, left, right, comp, st[m, :3], tgt[n], eps)[0]
    gain = np.where(inbeam, np.maximum(losm, 0) * g0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(d2 > 0.0, pw[None, :] * link * gain / d2, 0.0)
    plink = np.where(rel, qfunc((qinv - snr * sk2) / (1.0 + snr)), 0.0)
    return plink, losm, gain


def _p_sum(plink, chf, cht, bands):
    inb = (chf[None, :] > bands[:, 0:1]) & (chf[None, :] < bands[:, 1:2])
    pf = np.where(inb, plink[:, cht], 0.0)
    return float(np.sum(1.0 - np.prod(1.0 - pf, axis=0)))


def _energy(st, terr, base, en):
    P0, Hs, td, Hsafe, k = en
    h = st[:, 2] - elevation(terr, base, st[:, 0], st[:, 1])
    if np.any(h >= Hs):
        return math.inf
    e = P0 * td * (1.0 - h / Hs) ** (-k) - P0 * td * (1.0 - Hsafe / Hs) ** (-k)
    return float(np.sum(e) / st.shape[0])


def _violations(st, terr, base, tgt, cb):
    xmin, xmax, ymin, ymax, smin, rmin, hsafe, hmax = cb
    x, y, z = st[:, 0], st[:, 1], st[:, 2]
    ox = np.maximum(np.maximum(xmin - x, 0.0), x - xmax)
    oy = np.maximum(np.maximum(ymin - y, 0.0), y - ymax)
    v = np.zeros(5)
    v[0] = np.sum(np.sqrt(ox * ox + oy * oy))
    dt = np.sqrt(np.sum((st[:, None, :3] - tgt[None, :, :]) ** 2, axis=-1))
    v[1] = np.sum(np.where(dt < smin, smin - dt, 0.0))
    iu = np.triu_indices(st.shape[0], 1)
    du = np.sqrt(np.sum((st[:, None, :3] - st[None, :, :3]) ** 2, axis=-1))[iu]
    v[2] = np.sum(np.where(du < rmin, rmin - du, 0.0))
    v[3] = np.sum(np.maximum(0.0, np.abs(st[:, 3]) - math.pi) + np.maximum(0.0, np.abs(st[:, 4]) - 0.5 * math.pi))
    floor = elevation(terr, base, x, y) + hsafe
    v[4] = np.sum(np.maximum(0.0, floor - z) + np.maximum(0.0, z - hmax))
    return v


def evaluate_batch(states, prob):
    states = np.asarray(states, dtype=np.float64)
    terr, base, _, _, _, _, _, tgt, _, chf, cht, bands, _, en, cb = prob.kernel_args()
    P = states.shape[0]
    psum = np.empty(P)
    eavg = np.empty(P)
    viol = np.empty((P, 5))
    for i in range(P):
        plink, _, _ = link_matrix(states[i], prob)
        psum[i] = _p_sum(plink, chf, cht, bands)
        eavg[i] = _energy(states[i], terr, base, en)
        viol[i] = _violations(states[i], terr, base, tgt, cb)
    return psum, eavg, viol


# ------------------------------------------------------------------------- repair


def _clamp(st, mask, terr, base, cb):
    eta = st[mask, 3]
    out = (eta > math.pi) | (eta < -math.pi)
    w = np.mod(eta + math.pi, TWO_PI) - math.pi
    st[mask, 3] = np.where(out, w, eta)
    st[mask, 4] = np.clip(st[mask, 4], -0.5 * math.pi, 0.5 * math.pi)
    st[mask, 0] = np.minimum(np.maximum(st[mask, 0], cb[0]), cb[1])
    st[mask, 1] = np.minimum(np.maximum(st[mask, 1], cb[2]), cb[3])
    floor = elevation(terr, base, st[mask, 0], st[mask, 1]) + cb[6]
    st[mask, 2] = np.maximum(np.minimum(st[mask, 2], cb[7]), floor)


def _repair_one(st, movable, terr, base, tgt, cb, max_rounds):
    M = st.shape[0]
    smin, rmin = cb[4], cb[5]
    _clamp(st, movable, terr, base, cb)
    iu, ju = np.triu_indices(M, 1)
    both = movable[iu] & movable[ju]
    any_mov = movable[iu] | movable[ju]
    golden = 2.399963229728653 * (iu * M + ju)
    for _ in range(max_rounds):
        disp = np.zeros((M, 3))
        d = st[:, None, :3] - tgt[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        bad_t = (dist < smin) & movable[:, None]
        du = st[iu, :3] - st[ju, :3]
        dd = np.sqrt(np.sum(du * du, axis=-1))
        bad_u = (dd < rmin) & any_mov
        if not bad_t.any() and not bad_u.any():
            break
        zero = dist == 0.0
        d = np.where(zero[..., None], np.array([1.0, 0.0, 0.0]), d)
        dist = np.where(zero, 1.0, dist)
        s = np.where(bad_t, (smin + SEP_SLACK - dist) / dist, 0.0)
        disp += np.sum(d * s[..., None], axis=1)
        zero = dd == 0.0
        alt = np.stack([np.cos(golden), np.sin(golden), np.zeros_like(golden)], axis=1)
        du = np.where(zero[:, None], alt, du)
        dd = np.where(zero, 1.0, dd)
        s = np.where(bad_u, (rmin + SEP_SLACK - dd) / dd, 0.0)
        s = np.where(both, 0.5 * s, s)
        step = du * s[:, None]
        np.add.at(disp, iu, np.where(movable[iu][:, None], step, 0.0))
        np.add.at(disp, ju, np.where(movable[ju][:, None], -step, 0.0))
        st[movable, :3] += disp[movable]
        _clamp(st, movable, terr, base, cb)


def repair_batch(states, movable, prob, max_rounds=50):
    out = np.array(states, dtype=np.float64, copy=True)
    movable = np.asarray(movable, dtype=bool)
    for i in range(out.shape[0]):
        _repair_one(out[i], movable, prob.terr, prob.base, prob.tgt, prob.cb, int(max_rounds))
    return out
