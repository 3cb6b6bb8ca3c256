"""Hot numeric kernels, numba-jitted unless DMIS_DISABLE_NUMBA=1.

Every kernel is written as a plain Python/numpy function; `maybe_jit`
compiles it with numba when available.  The un-jitted functions are kept
around as `*_py` references so the benchmark script can time both paths.

Geometric predicates follow the usual two-stage scheme: a fast float64
evaluation guarded by a forward error bound, falling back to double-double
(~106 bit) arithmetic when the determinant is too close to zero to trust.
"""

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("DMIS_DISABLE_NUMBA", "0") != "1"


def maybe_jit(fn):
    if USE_NUMBA:
        return njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# double-double helpers (Dekker / Knuth error-free transformations)
# ---------------------------------------------------------------------------

_SPLITTER = 134217729.0  # 2**27 + 1
# Shewchuk's stage-A forward error bounds for orient2d / incircle.
_CCW_ERRBOUND = 3.3306690738754716e-16
_ICC_ERRBOUND = 1.1102230246251565e-15


def _two_sum(a, b):
    s = a + b
    av = s - b
    bv = s - av
    return s, (a - av) + (b - bv)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _two_prod(a, b):
    p = a * b
    c = _SPLITTER * a
    ahi = c - (c - a)
    alo = a - ahi
    c = _SPLITTER * b
    bhi = c - (c - b)
    blo = b - bhi
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def _dd_add(ah, al, bh, bl):
    sh, se = _two_sum(ah, bh)
    th, te = _two_sum(al, bl)
    se += th
    sh, se = _quick_two_sum(sh, se)
    se += te
    return _quick_two_sum(sh, se)


def _dd_sub(ah, al, bh, bl):
    return _dd_add(ah, al, -bh, -bl)


def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e += ah * bl + al * bh
    return _quick_two_sum(p, e)


def _orient2d_dd(ax, ay, bx, by, cx, cy):
    l1h, l1l = _two_sum(bx, -ax)
    l2h, l2l = _two_sum(cy, -ay)
    r1h, r1l = _two_sum(by, -ay)
    r2h, r2l = _two_sum(cx, -ax)
    lh, ll = _dd_mul(l1h, l1l, l2h, l2l)
    rh, rl = _dd_mul(r1h, r1l, r2h, r2l)
    dh, dl = _dd_sub(lh, ll, rh, rl)
    if dh > 0.0 or (dh == 0.0 and dl > 0.0):
        return 1
    if dh < 0.0 or (dh == 0.0 and dl < 0.0):
        return -1
    return 0


def _incircle_dd(ax, ay, bx, by, cx, cy, dx, dy):
    adxh, adxl = _two_sum(ax, -dx)
    adyh, adyl = _two_sum(ay, -dy)
    bdxh, bdxl = _two_sum(bx, -dx)
    bdyh, bdyl = _two_sum(by, -dy)
    cdxh, cdxl = _two_sum(cx, -dx)
    cdyh, cdyl = _two_sum(cy, -dy)

    t1h, t1l = _dd_mul(bdxh, bdxl, cdyh, cdyl)
    t2h, t2l = _dd_mul(cdxh, cdxl, bdyh, bdyl)
    bc_h, bc_l = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(cdxh, cdxl, adyh, adyl)
    t2h, t2l = _dd_mul(adxh, adxl, cdyh, cdyl)
    ca_h, ca_l = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(adxh, adxl, bdyh, bdyl)
    t2h, t2l = _dd_mul(bdxh, bdxl, adyh, adyl)
    ab_h, ab_l = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(adxh, adxl, adxh, adxl)
    t2h, t2l = _dd_mul(adyh, adyl, adyh, adyl)
    al_h, al_l = _dd_add(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(bdxh, bdxl, bdxh, bdxl)
    t2h, t2l = _dd_mul(bdyh, bdyl, bdyh, bdyl)
    bl_h, bl_l = _dd_add(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(cdxh, cdxl, cdxh, cdxl)
    t2h, t2l = _dd_mul(cdyh, cdyl, cdyh, cdyl)
    cl_h, cl_l = _dd_add(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(al_h, al_l, bc_h, bc_l)
    t2h, t2l = _dd_mul(bl_h, bl_l, ca_h, ca_l)
    t3h, t3l = _dd_mul(cl_h, cl_l, ab_h, ab_l)
    sh, sl = _dd_add(t1h, t1l, t2h, t2l)
    dh, dl = _dd_add(sh, sl, t3h, t3l)
    if dh > 0.0 or (dh == 0.0 and dl > 0.0):
        return 1
    if dh < 0.0 or (dh == 0.0 and dl < 0.0):
        return -1
    return 0


def _orient2d(ax, ay, bx, by, cx, cy):
    """Sign of the (a,b,c) orientation: +1 CCW, -1 CW, 0 collinear."""
    l = (bx - ax) * (cy - ay)
    r = (by - ay) * (cx - ax)
    det = l - r
    detsum = abs(l) + abs(r)
    if det > _CCW_ERRBOUND * detsum:
        return 1
    if det < -_CCW_ERRBOUND * detsum:
        return -1
    return _orient2d_dd(ax, ay, bx, by, cx, cy)


def _incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """+1 when d is strictly inside the circumcircle of CCW (a,b,c)."""
    adx = ax - dx
    ady = ay - dy
    bdx = bx - dx
    bdy = by - dy
    cdx = cx - dx
    cdy = cy - dy

    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy

    det = (
        alift * (bdxcdy - cdxbdy)
        + blift * (cdxady - adxcdy)
        + clift * (adxbdy - bdxady)
    )
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    bound = _ICC_ERRBOUND * permanent
    if det > bound:
        return 1
    if det < -bound:
        return -1
    return _incircle_dd(ax, ay, bx, by, cx, cy, dx, dy)


# ---------------------------------------------------------------------------
# Bowyer-Watson construction
# ---------------------------------------------------------------------------

SUPER_SCALE = 1.0e8


def _build_triangulation(pts):
    """Delaunay triangulation of pts (n,2), n >= 3, coords roughly in [0,1].

    Returns (tri, adj): (m,3) CCW vertex triples indexing into pts and the
    neighbor triangle across edge (v[k], v[k+1]), -1 on the hull.  Points
    are inserted in array order, which fixes every cocircular tie.
    """
    n = pts.shape[0]
    nv = n + 3
    verts = np.empty((nv, 2), dtype=np.float64)
    verts[:n] = pts
    verts[n, 0] = -SUPER_SCALE
    verts[n, 1] = -SUPER_SCALE
    verts[n + 1, 0] = SUPER_SCALE
    verts[n + 1, 1] = -SUPER_SCALE
    verts[n + 2, 0] = 0.5
    verts[n + 2, 1] = SUPER_SCALE

    cap = 4 * n + 16
    tri_v = np.empty((cap, 3), dtype=np.int64)
    tri_adj = np.empty((cap, 3), dtype=np.int64)
    alive = np.zeros(cap, dtype=np.uint8)
    visited = np.zeros(cap, dtype=np.int64)
    badmark = np.zeros(cap, dtype=np.int64)
    start_map = np.zeros(nv, dtype=np.int64)
    start_epoch = np.zeros(nv, dtype=np.int64)
    end_map = np.zeros(nv, dtype=np.int64)
    end_epoch = np.zeros(nv, dtype=np.int64)

    tri_v[0, 0] = n
    tri_v[0, 1] = n + 1
    tri_v[0, 2] = n + 2
    tri_adj[0] = -1
    alive[0] = 1
    ntri = 1
    last = 0

    bad_list = np.empty(cap, dtype=np.int64)
    # boundary edges: (a, b, outer_neighbor)
    bnd = np.empty((cap, 3), dtype=np.int64)

    for ip in range(n):
        px = verts[ip, 0]
        py = verts[ip, 1]

        # --- walk to a triangle containing p
        t = last
        steps = 0
        while True:
            moved = False
            for k in range(3):
                a = tri_v[t, k]
                b = tri_v[t, (k + 1) % 3]
                if _orient2d(verts[a, 0], verts[a, 1], verts[b, 0], verts[b, 1], px, py) < 0:
                    t = tri_adj[t, k]
                    moved = True
                    break
            if not moved:
                break
            steps += 1
            if steps > 4 * ntri + 16:
                # degenerate walk cycle: linear scan
                for cand in range(ntri):
                    if alive[cand] == 0:
                        continue
                    ok = True
                    for k in range(3):
                        a = tri_v[cand, k]
                        b = tri_v[cand, (k + 1) % 3]
                        if _orient2d(
                            verts[a, 0], verts[a, 1], verts[b, 0], verts[b, 1], px, py
                        ) < 0:
                            ok = False
                            break
                    if ok:
                        t = cand
                        break
                break

        # --- grow the cavity of triangles whose circumcircle contains p
        epoch = ip + 1
        nbad = 0
        nbnd = 0
        visited[t] = epoch
        badmark[t] = epoch
        bad_list[nbad] = t
        nbad += 1
        head = 0
        while head < nbad:
            bt = bad_list[head]
            head += 1
            for k in range(3):
                nb = tri_adj[bt, k]
                a = tri_v[bt, k]
                b = tri_v[bt, (k + 1) % 3]
                if nb == -1:
                    bnd[nbnd, 0] = a
                    bnd[nbnd, 1] = b
                    bnd[nbnd, 2] = -1
                    nbnd += 1
                    continue
                if visited[nb] == epoch:
                    if badmark[nb] != epoch:
                        bnd[nbnd, 0] = a
                        bnd[nbnd, 1] = b
                        bnd[nbnd, 2] = nb
                        nbnd += 1
                    continue
                visited[nb] = epoch
                v0 = tri_v[nb, 0]
                v1 = tri_v[nb, 1]
                v2 = tri_v[nb, 2]
                if (
                    _incircle(
                        verts[v0, 0], verts[v0, 1],
                        verts[v1, 0], verts[v1, 1],
                        verts[v2, 0], verts[v2, 1],
                        px, py,
                    )
                    > 0
                ):
                    badmark[nb] = epoch
                    bad_list[nbad] = nb
                    nbad += 1
                else:
                    bnd[nbnd, 0] = a
                    bnd[nbnd, 1] = b
                    bnd[nbnd, 2] = nb
                    nbnd += 1

        for j in range(nbad):
            alive[bad_list[j]] = 0

        # --- grow storage if the fan may not fit
        if ntri + nbnd + 3 > cap:
            newcap = 2 * cap + nbnd + 16
            tri_v2 = np.empty((newcap, 3), dtype=np.int64)
            tri_adj2 = np.empty((newcap, 3), dtype=np.int64)
            alive2 = np.zeros(newcap, dtype=np.uint8)
            visited2 = np.zeros(newcap, dtype=np.int64)
            badmark2 = np.zeros(newcap, dtype=np.int64)
            tri_v2[:cap] = tri_v
            tri_adj2[:cap] = tri_adj
            alive2[:cap] = alive
            visited2[:cap] = visited
            badmark2[:cap] = badmark
            tri_v = tri_v2
            tri_adj = tri_adj2
            alive = alive2
            visited = visited2
            badmark = badmark2
            bad_list2 = np.empty(newcap, dtype=np.int64)
            bnd2 = np.empty((newcap, 3), dtype=np.int64)
            bnd2[: bnd.shape[0]] = bnd
            bad_list = bad_list2
            bnd = bnd2
            cap = newcap

        # --- star the cavity: one new triangle (a, b, p) per boundary edge
        base = ntri
        for j in range(nbnd):
            a = bnd[j, 0]
            b = bnd[j, 1]
            idx = base + j
            tri_v[idx, 0] = a
            tri_v[idx, 1] = b
            tri_v[idx, 2] = ip
            alive[idx] = 1
            start_map[a] = idx
            start_epoch[a] = epoch
            end_map[b] = idx
            end_epoch[b] = epoch
        for j in range(nbnd):
            a = bnd[j, 0]
            b = bnd[j, 1]
            outer = bnd[j, 2]
            idx = base + j
            tri_adj[idx, 0] = outer
            if outer != -1:
                for k in range(3):
                    if tri_v[outer, k] == b and tri_v[outer, (k + 1) % 3] == a:
                        tri_adj[outer, k] = idx
                        break
            # edge (b, p) pairs with the fan whose boundary edge starts at b
            tri_adj[idx, 1] = start_map[b] if start_epoch[b] == epoch else -1
            # edge (p, a) pairs with the fan whose boundary edge ends at a
            tri_adj[idx, 2] = end_map[a] if end_epoch[a] == epoch else -1
        ntri = base + nbnd
        last = ntri - 1

    # --- drop triangles using a super vertex, remap adjacency
    remap = np.full(ntri, -1, dtype=np.int64)
    m = 0
    for t in range(ntri):
        if alive[t] == 1 and tri_v[t, 0] < n and tri_v[t, 1] < n and tri_v[t, 2] < n:
            remap[t] = m
            m += 1
    tri = np.empty((m, 3), dtype=np.int64)
    adj = np.empty((m, 3), dtype=np.int64)
    for t in range(ntri):
        mt = remap[t]
        if mt == -1:
            continue
        for k in range(3):
            tri[mt, k] = tri_v[t, k]
            nb = tri_adj[t, k]
            adj[mt, k] = remap[nb] if nb != -1 else -1
    return tri, adj


def _walk_locate(tri, adj, pts, start, px, py):
    """Walk from triangle `start` toward (px, py).

    Returns (tid, exact): tid is -1 when the walk exits the hull; exact is
    0 when the point lies on an edge/vertex of the final triangle.
    """
    m = tri.shape[0]
    if m == 0:
        return -1, 1
    t = start
    if t < 0 or t >= m:
        t = 0
    steps = 0
    while True:
        on_edge = 0
        moved = False
        for k in range(3):
            a = tri[t, k]
            b = tri[t, (k + 1) % 3]
            s = _orient2d(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1], px, py)
            if s < 0:
                nb = adj[t, k]
                if nb == -1:
                    return -1, 1
                t = nb
                moved = True
                break
            if s == 0:
                on_edge = 1
        if not moved:
            return t, 0 if on_edge else 1
        steps += 1
        if steps > 4 * m + 16:
            # fall back to an ordered scan; returns the lowest containing id
            for cand in range(m):
                inside = True
                for k in range(3):
                    a = tri[cand, k]
                    b = tri[cand, (k + 1) % 3]
                    if _orient2d(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1], px, py) < 0:
                        inside = False
                        break
                if inside:
                    return cand, 1
            return -1, 1


def _locate_batch(tri, adj, pts, qx, qy):
    """Locate many points, warm-starting each walk from the previous hit."""
    nq = qx.shape[0]
    out = np.empty(nq, dtype=np.int64)
    exact = np.empty(nq, dtype=np.uint8)
    start = 0
    for i in range(nq):
        tid, ex = _walk_locate(tri, adj, pts, start, qx[i], qy[i])
        out[i] = tid
        exact[i] = ex
        if tid >= 0:
            start = tid
    return out, exact


def _bary_weights(tri, pts, tid, qx, qy):
    """Barycentric weights of each query in its located triangle.

    tid entries of -1 (outside hull) produce zero rows.
    """
    nq = qx.shape[0]
    w = np.zeros((nq, 3), dtype=np.float64)
    for i in range(nq):
        t = tid[i]
        if t < 0:
            continue
        ax = pts[tri[t, 0], 0]
        ay = pts[tri[t, 0], 1]
        bx = pts[tri[t, 1], 0]
        by = pts[tri[t, 1], 1]
        cx = pts[tri[t, 2], 0]
        cy = pts[tri[t, 2], 1]
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        wb = ((qx[i] - ax) * (cy - ay) - (qy[i] - ay) * (cx - ax)) / det
        wc = ((bx - ax) * (qy[i] - ay) - (by - ay) * (qx[i] - ax)) / det
        w[i, 0] = 1.0 - wb - wc
        w[i, 1] = wb
        w[i, 2] = wc
    return w


# ---------------------------------------------------------------------------
# fused tanh jet channels
# ---------------------------------------------------------------------------


def _tanh_jet_fwd(a, at, ax, axx, axxx, order):
    """Push value/derivative channels through tanh.

    Returns the post-activation channels plus tanh derivatives p1..p4
    needed by the reverse pass.  `order` is the max x-derivative order;
    the t channel is always propagated.
    """
    z = np.tanh(a)
    p1 = 1.0 - z * z
    p2 = -2.0 * z * p1
    p3 = -2.0 * p1 * p1 - 2.0 * z * p2
    p4 = -6.0 * p1 * p2 - 2.0 * z * p3
    yt = p1 * at
    if order >= 1:
        yx = p1 * ax
    else:
        yx = np.zeros_like(a)
    if order >= 2:
        yxx = p2 * ax * ax + p1 * axx
    else:
        yxx = np.zeros_like(a)
    if order >= 3:
        yxxx = p3 * ax * ax * ax + 3.0 * p2 * ax * axx + p1 * axxx
    else:
        yxxx = np.zeros_like(a)
    return z, p1, p2, p3, p4, yt, yx, yxx, yxxx


def _tanh_jet_bwd(p1, p2, p3, p4, at, ax, axx, axxx, gv, gt, gx, gxx, gxxx, order):
    """Adjoints of the pre-activation channels given output adjoints."""
    ga = gv * p1 + gt * p2 * at
    gat = gt * p1
    gax = np.zeros_like(ga)
    gaxx = np.zeros_like(ga)
    gaxxx = np.zeros_like(ga)
    if order >= 1:
        ga = ga + gx * p2 * ax
        gax = gx * p1
    if order >= 2:
        ga = ga + gxx * (p3 * ax * ax + p2 * axx)
        gax = gax + gxx * 2.0 * p2 * ax
        gaxx = gxx * p1
    if order >= 3:
        ga = ga + gxxx * (p4 * ax * ax * ax + 3.0 * p3 * ax * axx + p2 * axxx)
        gax = gax + gxxx * (3.0 * p3 * ax * ax + 3.0 * p2 * axx)
        gaxx = gaxx + gxxx * 3.0 * p2 * ax
        gaxxx = gxxx * p1
    return ga, gat, gax, gaxx, gaxxx


def _fd_rhs(u, out, t, dx, kind, coef, forced, x):
    """Central-difference semi-discrete RHS for the Dirichlet problems.

    kind 0: viscous advection u_t = -u*u_x + coef*u_xx (coef = viscosity);
    kind 1: diffusion u_t = coef*u_xx (+ 5*exp(-t)*x when forced).
    Boundary rows are pinned (homogeneous Dirichlet).
    """
    n = u.shape[0]
    out[0] = 0.0
    out[n - 1] = 0.0
    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = 1.0 / (dx * dx)
    if kind == 0:
        for i in range(1, n - 1):
            out[i] = (
                -u[i] * (u[i + 1] - u[i - 1]) * inv2dx
                + coef * (u[i + 1] - 2.0 * u[i] + u[i - 1]) * invdx2
            )
    else:
        s = 5.0 * np.exp(-t)
        for i in range(1, n - 1):
            out[i] = coef * (u[i + 1] - 2.0 * u[i] + u[i - 1]) * invdx2
            if forced:
                out[i] += s * x[i]


def _fd_rk4_span(u0, t0, h, n_sub, dx, kind, coef, forced, x):
    """Advance the FD state by n_sub classical RK4 steps of size h."""
    n = u0.shape[0]
    u = u0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    t = t0
    for s in range(n_sub):
        _fd_rhs(u, k1, t, dx, kind, coef, forced, x)
        for i in range(n):
            tmp[i] = u[i] + 0.5 * h * k1[i]
        _fd_rhs(tmp, k2, t + 0.5 * h, dx, kind, coef, forced, x)
        for i in range(n):
            tmp[i] = u[i] + 0.5 * h * k2[i]
        _fd_rhs(tmp, k3, t + 0.5 * h, dx, kind, coef, forced, x)
        for i in range(n):
            tmp[i] = u[i] + h * k3[i]
        _fd_rhs(tmp, k4, t + h, dx, kind, coef, forced, x)
        for i in range(n):
            u[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        t = t0 + (s + 1) * h
    return u


# pure-python references for the benchmark, then the jitted exports
orient2d_py = _orient2d
incircle_py = _incircle
build_triangulation_py = _build_triangulation
walk_locate_py = _walk_locate
locate_batch_py = _locate_batch
bary_weights_py = _bary_weights
tanh_jet_fwd_py = _tanh_jet_fwd
tanh_jet_bwd_py = _tanh_jet_bwd
fd_rk4_span_py = _fd_rk4_span

_two_sum = maybe_jit(_two_sum)
_quick_two_sum = maybe_jit(_quick_two_sum)
_two_prod = maybe_jit(_two_prod)
_dd_add = maybe_jit(_dd_add)
_dd_sub = maybe_jit(_dd_sub)
_dd_mul = maybe_jit(_dd_mul)
_orient2d_dd = maybe_jit(_orient2d_dd)
_incircle_dd = maybe_jit(_incircle_dd)
orient2d = maybe_jit(_orient2d)
incircle = maybe_jit(_incircle)
_orient2d = orient2d
_incircle = incircle
build_triangulation = maybe_jit(_build_triangulation)
walk_locate = maybe_jit(_walk_locate)
_walk_locate = walk_locate
locate_batch = maybe_jit(_locate_batch)
bary_weights = maybe_jit(_bary_weights)
tanh_jet_fwd = maybe_jit(_tanh_jet_fwd)
tanh_jet_bwd = maybe_jit(_tanh_jet_bwd)
_fd_rhs = maybe_jit(_fd_rhs)
fd_rk4_span = maybe_jit(_fd_rk4_span)
