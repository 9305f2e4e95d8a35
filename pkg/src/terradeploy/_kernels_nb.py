"""numba kernels. Scalar loops; array layouts are documented in ``_kernels_np``."""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
SEP_SLACK = 1e-6


@njit(cache=True)
def elevation_point(terr, base, x, y):
    s = base
    for i in range(terr.shape[0]):
        dx = (x - terr[i, 1]) / terr[i, 3]
        dy = (y - terr[i, 2]) / terr[i, 4]
        s += terr[i, 0] * math.exp(-0.5 * (dx * dx + dy * dy))
    return s


@njit(cache=True)
def elevation(terr, base, xs, ys):
    out = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        out[k] = elevation_point(terr, base, xs[k], ys[k])
    return out


# ----------------------------------------------------------------------------- LoS


@njit(cache=True)
def _seg_hits_box(x0, y0, x1, y1, bx0, bx1, by0, by1):
    tmin = 0.0
    tmax = 1.0
    dx = x1 - x0
    if dx == 0.0:
        if x0 < bx0 or x0 > bx1:
            return False
    else:
        ta = (bx0 - x0) / dx
        tb = (bx1 - x0) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > tmin:
            tmin = ta
        if tb < tmax:
            tmax = tb
        if tmin > tmax:
            return False
    dy = y1 - y0
    if dy == 0.0:
        if y0 < by0 or y0 > by1:
            return False
    else:
        ta = (by0 - y0) / dy
        tb = (by1 - y0) / dy
        if ta > tb:
            ta, tb = tb, ta
        if ta > tmin:
            tmin = ta
        if tb < tmax:
            tmax = tb
        if tmin > tmax:
            return False
    return True


@njit(cache=True)
def _seg_qmin(x0, y0, x1, y1, mux, muy, sx, sy):
    ax = (x0 - mux) / sx
    ay = (y0 - muy) / sy
    bx = (x1 - x0) / sx
    by = (y1 - y0) / sy
    den = bx * bx + by * by
    s = 0.0
    if den > 0.0:
        s = -(ax * bx + ay * by) / den
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    qx = ax + s * bx
    qy = ay + s * by
    return qx * qx + qy * qy


@njit(cache=True)
def _interval_bound(terr, base, box, left, right, comp, stack, x0, y0, x1, y1):
    hit = False
    bound = base
    if box.shape[0] == 0:
        return hit, bound
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        k = stack[sp]
        if not _seg_hits_box(x0, y0, x1, y1, box[k, 0], box[k, 1], box[k, 2], box[k, 3]):
            continue
        c = comp[k]
        if c >= 0:
            hit = True
            h = terr[c, 0]
            if h > 0.0:
                q = _seg_qmin(x0, y0, x1, y1, terr[c, 1], terr[c, 2], terr[c, 3], terr[c, 4])
                bound += h * math.exp(-0.5 * q)
        else:
            stack[sp] = left[k]
            stack[sp + 1] = right[k]
            sp += 2
    return hit, bound


@njit(cache=True)
def _point_in_leaf(box, left, right, comp, stack, x, y):
    if box.shape[0] == 0:
        return False
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        k = stack[sp]
        if x < box[k, 0] or x > box[k, 1] or y < box[k, 2] or y > box[k, 3]:
            continue
        if comp[k] >= 0:
            return True
        stack[sp] = left[k]
        stack[sp + 1] = right[k]
        sp += 2
    return False


@njit(cache=True)
def los_core(terr, base, box, left, right, comp, p1, p2, eps, qa, qb, stack):
    """Returns (visible, terrain_evaluations)."""
    nev = 0
    x1, y1, z1 = p1[0], p1[1], p1[2]
    x2, y2, z2 = p2[0], p2[1], p2[2]
    nev += 1
    if z1 <= elevation_point(terr, base, x1, y1):
        return 0, nev
    nev += 1
    if z2 <= elevation_point(terr, base, x2, y2):
        return 0, nev
    if box.shape[0] == 0:
        return 1, nev
    if not _seg_hits_box(x1, y1, x2, y2, box[0, 0], box[0, 1], box[0, 2], box[0, 3]):
        return 1, nev
    cap = qa.shape[0]
    head = 0
    count = 1
    qa[0] = 0.0
    qb[0] = 1.0
    while count > 0:
        a = qa[head]
        b = qb[head]
        head += 1
        if head == cap:
            head = 0
        count -= 1
        xa = (1.0 - a) * x1 + a * x2
        ya = (1.0 - a) * y1 + a * y2
        za = (1.0 - a) * z1 + a * z2
        xb = (1.0 - b) * x1 + b * x2
        yb = (1.0 - b) * y1 + b * y2
        zb = (1.0 - b) * z1 + b * z2
        hit, bound = _interval_bound(terr, base, box, left, right, comp, stack, xa, ya, xb, yb)
        if not hit:
            continue
        if min(za, zb) > bound:
            continue
        t = 0.5 * (a + b)
        xm = (1.0 - t) * x1 + t * x2
        ym = (1.0 - t) * y1 + t * y2
        if _point_in_leaf(box, left, right, comp, stack, xm, ym):
            nev += 1
            zm = (1.0 - t) * z1 + t * z2
            if zm <= elevation_point(terr, base, xm, ym):
                return 0, nev
        if 0.5 * (b - a) > eps:
            tail = head + count
            if tail >= cap:
                tail -= cap
            qa[tail] = a
            qb[tail] = t
            tail += 1
            if tail == cap:
                tail = 0
            qa[tail] = t
            qb[tail] = b
            count += 2
    return 1, nev


def queue_capacity(eps):
    # live intervals are disjoint with width > eps
    return int(1.0 / eps) + 8


@njit(cache=True)
def _los_alloc(terr, base, box, left, right, comp, p1, p2, eps, cap):
    qa = np.empty(cap)
    qb = np.empty(cap)
    stack = np.empty(2 * box.shape[0] + 8, dtype=np.int64)
    return los_core(terr, base, box, left, right, comp, p1, p2, eps, qa, qb, stack)


def los_query(terr, base, box, left, right, comp, p1, p2, eps):
    return _los_alloc(terr, base, box, left, right, comp,
                      np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64),
                      float(eps), queue_capacity(eps))


@njit(cache=True)
def _los_many(terr, base, box, left, right, comp, P1, P2, eps, cap):
    n = P1.shape[0]
    vis = np.empty(n, dtype=np.int64)
    nev = np.empty(n, dtype=np.int64)
    qa = np.empty(cap)
    qb = np.empty(cap)
    stack = np.empty(2 * box.shape[0] + 8, dtype=np.int64)
    for i in range(n):
        v, e = los_core(terr, base, box, left, right, comp, P1[i], P2[i], eps, qa, qb, stack)
        vis[i] = v
        nev[i] = e
    return vis, nev


def los_many(terr, base, box, left, right, comp, P1, P2, eps):
    return _los_many(terr, base, box, left, right, comp,
                     np.ascontiguousarray(P1, dtype=np.float64), np.ascontiguousarray(P2, dtype=np.float64),
                     float(eps), queue_capacity(eps))


@njit(cache=True)
def _dense(terr, base, p1, p2, step, n):
    for i in range(n + 1):
        t = i * step
        if t > 1.0 or i == n:
            t = 1.0
        x = (1.0 - t) * p1[0] + t * p2[0]
        y = (1.0 - t) * p1[1] + t * p2[1]
        z = (1.0 - t) * p1[2] + t * p2[2]
        if z <= elevation_point(terr, base, x, y):
            return 0, i + 1
    return 1, n + 1


def dense_samples(step):
    return int(math.ceil(1.0 / step - 1e-9))


def los_dense(terr, base, p1, p2, step):
    """Returns (visible, evaluations actually performed)."""
    return _dense(terr, base, np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64),
                  float(step), dense_samples(step))


# ------------------------------------------------------------------- sensing/fitness


@njit(cache=True)
def qfunc(x):
    return 0.5 * math.erfc(x / SQRT2)


@njit(cache=True)
def wrap_angle(a):
    d = a % TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


@njit(cache=True)
def _link_matrix(st, terr, base, box, left, right, comp, eps, tgt, pw, chf, cht, bands,
                 sens, qa, qb, stack, plink, losm, gainm):
    """Fill plink/losm/gainm (M, N). losm = -1 where LoS was not needed."""
    M = st.shape[0]
    N = tgt.shape[0]
    qinv = sens[0]
    sk2 = sens[1]
    sig_e = sens[2]
    sig_z = sens[3]
    al_a = sens[4]
    al_e = sens[5]
    link = sens[6] * sens[7] / sens[8]  # beta0 * Nt / noise
    p = np.empty(3)
    q = np.empty(3)
    for m in range(M):
        for n in range(N):
            plink[m, n] = 0.0
            losm[m, n] = -1
            gainm[m, n] = 0.0
            relevant = False
            for c in range(chf.shape[0]):
                if cht[c] == n and chf[c] > bands[m, 0] and chf[c] < bands[m, 1]:
                    relevant = True
                    break
            if not relevant:
                continue
            dx = tgt[n, 0] - st[m, 0]
            dy = tgt[n, 1] - st[m, 1]
            dz = tgt[n, 2] - st[m, 2]
            hd = math.sqrt(dx * dx + dy * dy)
            d2 = hd * hd + dz * dz
            gain = 0.0
            if d2 > 0.0:
                de = wrap_angle(math.atan2(dy, dx) - st[m, 3])
                dzt = math.atan2(dz, hd) - st[m, 4]
                if abs(de) <= al_a and abs(dzt) <= al_e:
                    g0 = math.exp(-de * de / (2.0 * sig_e * sig_e) - dzt * dzt / (2.0 * sig_z * sig_z))
                    for k in range(3):
                        p[k] = st[m, k]
                        q[k] = tgt[n, k]
                    vis, _ = los_core(terr, base, box, left, right, comp, p, q, eps, qa, qb, stack)
                    losm[m, n] = vis
                    gain = vis * g0
            gainm[m, n] = gain
            snr = 0.0
            if d2 > 0.0:
                snr = pw[n] * link * gain / d2
            plink[m, n] = qfunc((qinv - snr * sk2) / (1.0 + snr))


@njit(cache=True)
def _p_sum(plink, chf, cht, bands):
    M = plink.shape[0]
    tot = 0.0
    for c in range(chf.shape[0]):
        miss = 1.0
        for m in range(M):
            if chf[c] > bands[m, 0] and chf[c] < bands[m, 1]:
                miss *= 1.0 - plink[m, cht[c]]
        tot += 1.0 - miss
    return tot


@njit(cache=True)
def _energy(st, terr, base, en):
    P0, Hs, td, Hsafe, k = en[0], en[1], en[2], en[3], en[4]
    ref = P0 * td * (1.0 - Hsafe / Hs) ** (-k)
    M = st.shape[0]
    tot = 0.0
    for m in range(M):
        h = st[m, 2] - elevation_point(terr, base, st[m, 0], st[m, 1])
        if h >= Hs:
            return math.inf
        tot += P0 * td * (1.0 - h / Hs) ** (-k) - ref
    return tot / M


@njit(cache=True)
def _violations(st, terr, base, tgt, cb, out):
    xmin, xmax, ymin, ymax, smin, rmin, hsafe, hmax = cb[0], cb[1], cb[2], cb[3], cb[4], cb[5], cb[6], cb[7]
    M = st.shape[0]
    for j in range(5):
        out[j] = 0.0
    for m in range(M):
        x, y, z = st[m, 0], st[m, 1], st[m, 2]
        ox = max(xmin - x, 0.0, x - xmax)
        oy = max(ymin - y, 0.0, y - ymax)
        out[0] += math.sqrt(ox * ox + oy * oy)
        for n in range(tgt.shape[0]):
            dx = x - tgt[n, 0]
            dy = y - tgt[n, 1]
            dz = z - tgt[n, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < smin:
                out[1] += smin - d
        for l in range(m + 1, M):
            dx = x - st[l, 0]
            dy = y - st[l, 1]
            dz = z - st[l, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < rmin:
                out[2] += rmin - d
        out[3] += max(0.0, abs(st[m, 3]) - math.pi) + max(0.0, abs(st[m, 4]) - 0.5 * math.pi)
        floor = elevation_point(terr, base, x, y) + hsafe
        out[4] += max(0.0, floor - z) + max(0.0, z - hmax)


@njit(cache=True)
def _evaluate_batch(states, terr, base, box, left, right, comp, eps, tgt, pw, chf, cht, bands,
                    sens, en, cb, cap):
    P = states.shape[0]
    M = states.shape[1]
    N = tgt.shape[0]
    psum = np.empty(P)
    eavg = np.empty(P)
    viol = np.empty((P, 5))
    qa = np.empty(cap)
    qb = np.empty(cap)
    stack = np.empty(2 * box.shape[0] + 8, dtype=np.int64)
    plink = np.empty((M, N))
    losm = np.empty((M, N), dtype=np.int64)
    gainm = np.empty((M, N))
    v = np.empty(5)
    for i in range(P):
        st = states[i]
        _link_matrix(st, terr, base, box, left, right, comp, eps, tgt, pw, chf, cht, bands,
                     sens, qa, qb, stack, plink, losm, gainm)
        psum[i] = _p_sum(plink, chf, cht, bands)
        eavg[i] = _energy(st, terr, base, en)
        _violations(st, terr, base, tgt, cb, v)
        for j in range(5):
            viol[i, j] = v[j]
    return psum, eavg, viol


def evaluate_batch(states, prob):
    return _evaluate_batch(np.ascontiguousarray(states, dtype=np.float64), *prob.kernel_args(),
                           queue_capacity(prob.eps))


@njit(cache=True)
def _links(st, terr, base, box, left, right, comp, eps, tgt, pw, chf, cht, bands, sens, en, cb, cap):
    M = st.shape[0]
    N = tgt.shape[0]
    qa = np.empty(cap)
    qb = np.empty(cap)
    stack = np.empty(2 * box.shape[0] + 8, dtype=np.int64)
    plink = np.empty((M, N))
    losm = np.empty((M, N), dtype=np.int64)
    gainm = np.empty((M, N))
    _link_matrix(st, terr, base, box, left, right, comp, eps, tgt, pw, chf, cht, bands,
                 sens, qa, qb, stack, plink, losm, gainm)
    return plink, losm, gainm


def link_matrix(state, prob):
    return _links(np.ascontiguousarray(state, dtype=np.float64), *prob.kernel_args(),
                  queue_capacity(prob.eps))


# ------------------------------------------------------------------------- repair


@njit(cache=True)
def _clamp_uav(st, m, terr, base, cb):
    eta = st[m, 3]
    if eta > math.pi or eta < -math.pi:
        st[m, 3] = (eta + math.pi) % TWO_PI - math.pi
    st[m, 4] = min(max(st[m, 4], -0.5 * math.pi), 0.5 * math.pi)
    st[m, 0] = min(max(st[m, 0], cb[0]), cb[1])
    st[m, 1] = min(max(st[m, 1], cb[2]), cb[3])
    floor = elevation_point(terr, base, st[m, 0], st[m, 1]) + cb[6]
    st[m, 2] = max(min(st[m, 2], cb[7]), floor)


@njit(cache=True)
def _repair_one(st, movable, terr, base, tgt, cb, max_rounds):
    M = st.shape[0]
    smin = cb[4]
    rmin = cb[5]
    for m in range(M):
        if movable[m]:
            _clamp_uav(st, m, terr, base, cb)
    disp = np.zeros((M, 3))
    for _ in range(max_rounds):
        any_v = False
        for m in range(M):
            for k in range(3):
                disp[m, k] = 0.0
        for m in range(M):
            if not movable[m]:
                continue
            for n in range(tgt.shape[0]):
                dx = st[m, 0] - tgt[n, 0]
                dy = st[m, 1] - tgt[n, 1]
                dz = st[m, 2] - tgt[n, 2]
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d < smin:
                    any_v = True
                    if d == 0.0:
                        dx, dy, dz, d = 1.0, 0.0, 0.0, 1.0
                    s = (smin + SEP_SLACK - d) / d
                    disp[m, 0] += dx * s
                    disp[m, 1] += dy * s
                    disp[m, 2] += dz * s
        for m in range(M):
            for l in range(m + 1, M):
                if not movable[m] and not movable[l]:
                    continue
                dx = st[m, 0] - st[l, 0]
                dy = st[m, 1] - st[l, 1]
                dz = st[m, 2] - st[l, 2]
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d < rmin:
                    any_v = True
                    if d == 0.0:
                        ang = 2.399963229728653 * (m * M + l)
                        dx, dy, dz, d = math.cos(ang), math.sin(ang), 0.0, 1.0
                    s = (rmin + SEP_SLACK - d) / d
                    if movable[m] and movable[l]:
                        s *= 0.5
                    if movable[m]:
                        disp[m, 0] += dx * s
                        disp[m, 1] += dy * s
                        disp[m, 2] += dz * s
                    if movable[l]:
                        disp[l, 0] -= dx * s
                        disp[l, 1] -= dy * s
                        disp[l, 2] -= dz * s
        if not any_v:
            break
        for m in range(M):
            if movable[m]:
                for k in range(3):
                    st[m, k] += disp[m, k]
                _clamp_uav(st, m, terr, base, cb)


@njit(cache=True)
def _repair_batch(states, movable, terr, base, tgt, cb, max_rounds):
    out = states.copy()
    for i in range(out.shape[0]):
        _repair_one(out[i], movable, terr, base, tgt, cb, max_rounds)
    return out


def repair_batch(states, movable, prob, max_rounds=50):
    return _repair_batch(np.ascontiguousarray(states, dtype=np.float64),
                         np.ascontiguousarray(movable, dtype=np.bool_),
                         prob.terr, prob.base, prob.tgt, prob.cb, int(max_rounds))
