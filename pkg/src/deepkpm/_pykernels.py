"""Pure-Python kernels.

Scalar reference versions of the hot loops in ``_kernels.pyx``. The two modules
perform the same floating-point operations in the same order, so for equal
inputs they return bit-identical results; ``tests/test_backends.py`` checks it.
Keep them in lockstep when editing either one.
"""
import heapq
from math import copysign, cos, pi, sin, sqrt

import numpy as np

from .rng import CAMERA, GOLDEN, INV_2_53, MASK64, PHOTON, SHADING, mix64, stream_state

SPHERE, TRIANGLE, QUAD = 0, 1, 2
LAMBERTIAN, MIRROR, DIELECTRIC, EMISSIVE = 0, 1, 2, 3

T_EPS = 1e-4
T_FAR = 1e30
RR_START = 3
RR_MIN, RR_MAX = 0.05, 0.95
KD_LEAF = 8

NAME = "python"


class _Draws:
    __slots__ = ("s",)

    def __init__(self, state):
        self.s = state

    def u(self):
        self.s = (self.s + GOLDEN) & MASK64
        return (mix64(self.s) >> 11) * INV_2_53


class _SceneLists:
    """Packed scene converted to Python lists once (numpy scalar access is slow)."""

    def __init__(self, ps):
        self.ptype = [int(x) for x in ps.prim_type]
        self.pgeom = [tuple(float(x) for x in row) for row in ps.prim_geom]
        self.pmat = [int(x) for x in ps.prim_mat]
        self.mkind = [int(x) for x in ps.mat_kind]
        self.mcolor = [tuple(float(x) for x in row) for row in ps.mat_color]
        self.mior = [float(x) for x in ps.mat_ior]
        self.lgeom = [tuple(float(x) for x in row) for row in ps.light_geom]
        self.lcdf = [float(x) for x in ps.light_cdf]
        self.bg = tuple(float(x) for x in ps.background)
        self.lnormal = []
        for g in self.lgeom:
            inv = 1.0 / sqrt(g[9] * g[9] + g[10] * g[10] + g[11] * g[11])
            self.lnormal.append((g[9] * inv, g[10] * inv, g[11] * inv))


_cache = {}


def _lists(ps):
    key = id(ps)
    hit = _cache.get(key)
    if hit is None or hit[0] is not ps:
        hit = (ps, _SceneLists(ps))
        _cache[key] = hit
    return hit[1]


# --- geometry ----------------------------------------------------------------

def _quad_t(g, ox, oy, oz, dx, dy, dz):
    denom = dx * g[9] + dy * g[10] + dz * g[11]
    if denom == 0.0:
        return -1.0
    t = ((g[0] - ox) * g[9] + (g[1] - oy) * g[10] + (g[2] - oz) * g[11]) / denom
    wx = ox + t * dx - g[0]
    wy = oy + t * dy - g[1]
    wz = oz + t * dz - g[2]
    # alpha = nn . (w x ev), beta = nn . (eu x w)
    alpha = g[9] * (wy * g[8] - wz * g[7]) + g[10] * (wz * g[6] - wx * g[8]) + g[11] * (wx * g[7] - wy * g[6])
    if alpha < 0.0 or alpha > 1.0:
        return -1.0
    beta = g[9] * (g[4] * wz - g[5] * wy) + g[10] * (g[5] * wx - g[3] * wz) + g[11] * (g[3] * wy - g[4] * wx)
    if beta < 0.0 or beta > 1.0:
        return -1.0
    return t


def _intersect(sc, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Nearest hit as (t, px, py, pz, nx, ny, nz, front, index, is_light) or None.

    The normal faces the incoming ray; ``front`` records whether the geometric
    normal already did.
    """
    best_t = tmax
    best = -1
    best_light = False
    for i in range(len(sc.ptype)):
        typ = sc.ptype[i]
        g = sc.pgeom[i]
        if typ == SPHERE:
            ocx = ox - g[0]
            ocy = oy - g[1]
            ocz = oz - g[2]
            b = ocx * dx + ocy * dy + ocz * dz
            c = ocx * ocx + ocy * ocy + ocz * ocz - g[3] * g[3]
            disc = b * b - c
            if disc < 0.0:
                continue
            sq = sqrt(disc)
            t = -b - sq
            if t <= tmin:
                t = -b + sq
        elif typ == TRIANGLE:
            px_ = dy * g[8] - dz * g[7]
            py_ = dz * g[6] - dx * g[8]
            pz_ = dx * g[7] - dy * g[6]
            det = g[3] * px_ + g[4] * py_ + g[5] * pz_
            if det == 0.0:
                continue
            inv = 1.0 / det
            sx = ox - g[0]
            sy = oy - g[1]
            sz = oz - g[2]
            u = (sx * px_ + sy * py_ + sz * pz_) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = sy * g[5] - sz * g[4]
            qy = sz * g[3] - sx * g[5]
            qz = sx * g[4] - sy * g[3]
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (g[6] * qx + g[7] * qy + g[8] * qz) * inv
        else:
            t = _quad_t(g, ox, oy, oz, dx, dy, dz)
        if tmin < t < best_t:
            best_t = t
            best = i
    for i in range(len(sc.lgeom)):
        t = _quad_t(sc.lgeom[i], ox, oy, oz, dx, dy, dz)
        if tmin < t < best_t:
            best_t = t
            best = i
            best_light = True
    if best < 0:
        return None
    t = best_t
    px = ox + t * dx
    py = oy + t * dy
    pz = oz + t * dz
    if best_light:
        nx, ny, nz = sc.lnormal[best]
    else:
        g = sc.pgeom[best]
        typ = sc.ptype[best]
        if typ == SPHERE:
            inv_r = 1.0 / g[3]
            nx = (px - g[0]) * inv_r
            ny = (py - g[1]) * inv_r
            nz = (pz - g[2]) * inv_r
        elif typ == TRIANGLE:
            nx, ny, nz = g[9], g[10], g[11]
        else:
            inv = 1.0 / sqrt(g[9] * g[9] + g[10] * g[10] + g[11] * g[11])
            nx = g[9] * inv
            ny = g[10] * inv
            nz = g[11] * inv
    front = nx * dx + ny * dy + nz * dz < 0.0
    if not front:
        nx, ny, nz = -nx, -ny, -nz
    return (t, px, py, pz, nx, ny, nz, front, best, best_light)


def intersect(ps, origin, direction, tmin, tmax):
    o, d = origin, direction
    return _intersect(_lists(ps), float(o[0]), float(o[1]), float(o[2]),
                      float(d[0]), float(d[1]), float(d[2]), float(tmin), float(tmax))


def onb(nx, ny, nz):
    """Branchless orthonormal basis (b1, b2) completing unit normal n."""
    sign = copysign(1.0, nz)
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    return (1.0 + sign * nx * nx * a, sign * b, -sign * nx), (b, sign + ny * ny * a, -ny)


def _cosine_dir(nx, ny, nz, u0, u1):
    b1, b2 = onb(nx, ny, nz)
    r = sqrt(u0)
    phi = 2.0 * pi * u1
    x = r * cos(phi)
    y = r * sin(phi)
    z = sqrt(max(0.0, 1.0 - u0))
    return (x * b1[0] + y * b2[0] + z * nx, x * b1[1] + y * b2[1] + z * ny, x * b1[2] + y * b2[2] + z * nz), z


def fresnel_dielectric(cos_i, eta):
    """Unpolarized Fresnel reflectance for relative index eta = n_incident / n_transmitted.

    Returns (F, cos_t); F = 1 under total internal reflection.
    """
    sin2_t = eta * eta * (1.0 - cos_i * cos_i)
    if sin2_t >= 1.0:
        return 1.0, 0.0
    cos_t = sqrt(1.0 - sin2_t)
    rs = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
    rp = (cos_i - eta * cos_t) / (cos_i + eta * cos_t)
    return 0.5 * (rs * rs + rp * rp), cos_t


def sample_bsdf(kind, color, ior, nx, ny, nz, wox, woy, woz, front, u0, u1):
    """Importance-sample an incident direction (pointing away from the surface).

    Returns (wi, pdf, weight, is_specular) with weight = f |cos| / pdf, or None
    for absorbing (emissive) surfaces.
    """
    if kind == LAMBERTIAN:
        wi, z = _cosine_dir(nx, ny, nz, u0, u1)
        return wi, z / pi, color, False
    cos_i = nx * wox + ny * woy + nz * woz
    if kind == MIRROR:
        k = 2.0 * cos_i
        return (k * nx - wox, k * ny - woy, k * nz - woz), 1.0, color, True
    if kind == DIELECTRIC:
        eta = 1.0 / ior if front else ior
        F, cos_t = fresnel_dielectric(cos_i, eta)
        if u0 < F:
            k = 2.0 * cos_i
            return (k * nx - wox, k * ny - woy, k * nz - woz), 1.0, (1.0, 1.0, 1.0), True
        k = eta * cos_i - cos_t
        return (-eta * wox + k * nx, -eta * woy + k * ny, -eta * woz + k * nz), 1.0, color, True
    return None


def _pick_light(cdf, u):
    n = len(cdf)
    for i in range(n):
        if u < cdf[i]:
            return i
    return n - 1


def _light_prob(cdf, i):
    return cdf[i] - cdf[i - 1] if i > 0 else cdf[0]


# --- photon tracing ------------------------------------------------------------

def emit(sc, light, u_a, u_b, u_c, u_d):
    """Origin uniform on the light quad, cosine-weighted direction about its normal."""
    g = sc.lgeom[light]
    ox = g[0] + u_a * g[3] + u_b * g[6]
    oy = g[1] + u_a * g[4] + u_b * g[7]
    oz = g[2] + u_a * g[5] + u_b * g[8]
    nl = sc.lnormal[light]
    d, _ = _cosine_dir(nl[0], nl[1], nl[2], u_c, u_d)
    k = g[12] * pi
    return (ox, oy, oz), d, (g[13] * k, g[14] * k, g[15] * k)


def trace_photon_range(ps, seed, start, end, n_emit, max_bounces):
    """Trace emission paths [start, end); keep photons at diffuse vertices of LS paths.

    Returns float64 arrays (position, incident_dir, power, normal) of shape (m, 3),
    uint32 bounce counts and uint8 first-vertex material kinds.
    """
    sc = _lists(ps)
    cdf = sc.lcdf
    inv_n = 1.0 / n_emit
    pos, inc, pw, nrm, bnc, first = [], [], [], [], [], []
    for path in range(start, end):
        r = _Draws(stream_state(seed, PHOTON, path, 0))
        light = _pick_light(cdf, r.u())
        ua = r.u()
        ub = r.u()
        uc = r.u()
        ud = r.u()
        (ox, oy, oz), (dx, dy, dz), phi = emit(sc, light, ua, ub, uc, ud)
        p_sel = _light_prob(cdf, light)
        phr = phi[0] / p_sel
        phg = phi[1] / p_sel
        phb = phi[2] / p_sel
        br = bg = bb = 1.0
        first_kind = -1
        for bounce in range(1, max_bounces + 1):
            hit = _intersect(sc, ox, oy, oz, dx, dy, dz, T_EPS, T_FAR)
            if hit is None or hit[9]:
                break
            t, px, py, pz, nx, ny, nz, front, prim, _ = hit
            mat = sc.pmat[prim]
            kind = sc.mkind[mat]
            if bounce == 1:
                if kind != MIRROR and kind != DIELECTRIC:
                    break
                first_kind = kind
            if kind == EMISSIVE:
                break
            if kind == LAMBERTIAN:
                pos.append((px, py, pz))
                inc.append((-dx, -dy, -dz))
                pw.append((br * phr * inv_n, bg * phg * inv_n, bb * phb * inv_n))
                nrm.append((nx, ny, nz))
                bnc.append(bounce)
                first.append(first_kind)
            u0 = r.u()
            u1 = r.u()
            s = sample_bsdf(kind, sc.mcolor[mat], sc.mior[mat], nx, ny, nz, -dx, -dy, -dz, front, u0, u1)
            wi, _, w, _ = s
            br *= w[0]
            bg *= w[1]
            bb *= w[2]
            if bounce >= RR_START:
                q = br
                if bg > q:
                    q = bg
                if bb > q:
                    q = bb
                q = min(max(q, RR_MIN), RR_MAX)
                if r.u() >= q:
                    break
                br /= q
                bg /= q
                bb /= q
            ox, oy, oz = px, py, pz
            dx, dy, dz = wi
    def arr(x, dtype=np.float64, shape=(-1, 3)):
        return np.array(x, dtype=dtype).reshape(shape)
    return (arr(pos), arr(inc), arr(pw), arr(nrm),
            np.array(bnc, dtype=np.uint32), np.array(first, dtype=np.uint8))


# --- path tracing ----------------------------------------------------------------

def _camera_dir(cam, x, y, jx, jy):
    W, H = cam[14], cam[15]
    sx = (2.0 * (x + jx) / W - 1.0) * cam[12] * cam[13]
    sy = (1.0 - 2.0 * (y + jy) / H) * cam[12]
    dx = cam[9] + sx * cam[3] + sy * cam[6]
    dy = cam[10] + sx * cam[4] + sy * cam[7]
    dz = cam[11] + sx * cam[5] + sy * cam[8]
    inv = 1.0 / sqrt(dx * dx + dy * dy + dz * dz)
    return dx * inv, dy * inv, dz * inv


def _radiance(sc, ox, oy, oz, dx, dy, dz, max_bounces, no_ls, r):
    cdf = sc.lcdf
    Lr = Lg = Lb = 0.0
    br = bg = bb = 1.0
    prev_spec = True
    seen_diffuse = False
    prev_pdf = 0.0
    for depth in range(max_bounces + 1):
        hit = _intersect(sc, ox, oy, oz, dx, dy, dz, T_EPS, T_FAR)
        if hit is None:
            Lr += br * sc.bg[0]
            Lg += bg * sc.bg[1]
            Lb += bb * sc.bg[2]
            break
        t, px, py, pz, nx, ny, nz, front, idx, is_light = hit
        if is_light:
            if front and not (no_ls and prev_spec and seen_diffuse):
                g = sc.lgeom[idx]
                if prev_spec:
                    w = 1.0
                else:
                    nl = sc.lnormal[idx]
                    cos_l = -(dx * nl[0] + dy * nl[1] + dz * nl[2])
                    pdf_l = _light_prob(cdf, idx) * (t * t) / (cos_l * g[12])
                    w = prev_pdf / (prev_pdf + pdf_l)
                Lr += br * g[13] * w
                Lg += bg * g[14] * w
                Lb += bb * g[15] * w
            break
        mat = sc.pmat[idx]
        kind = sc.mkind[mat]
        color = sc.mcolor[mat]
        if kind == EMISSIVE:
            Lr += br * color[0]
            Lg += bg * color[1]
            Lb += bb * color[2]
            break
        if depth == max_bounces:
            break
        if kind == LAMBERTIAN:
            seen_diffuse = True
            ul = r.u()
            ua = r.u()
            ub = r.u()
            li = _pick_light(cdf, ul)
            g = sc.lgeom[li]
            wx = g[0] + ua * g[3] + ub * g[6] - px
            wy = g[1] + ua * g[4] + ub * g[7] - py
            wz = g[2] + ua * g[5] + ub * g[8] - pz
            dist2 = wx * wx + wy * wy + wz * wz
            dist = sqrt(dist2)
            wx /= dist
            wy /= dist
            wz /= dist
            nl = sc.lnormal[li]
            cos_l = -(wx * nl[0] + wy * nl[1] + wz * nl[2])
            cos_s = wx * nx + wy * ny + wz * nz
            if cos_l > 0.0 and cos_s > 0.0:
                if _intersect(sc, px, py, pz, wx, wy, wz, T_EPS, dist - T_EPS) is None:
                    pdf_l = _light_prob(cdf, li) * dist2 / (cos_l * g[12])
                    pdf_b = cos_s / pi
                    w = pdf_l / (pdf_l + pdf_b)
                    k = cos_s * w / pdf_l
                    Lr += br * (color[0] / pi * g[13]) * k
                    Lg += bg * (color[1] / pi * g[14]) * k
                    Lb += bb * (color[2] / pi * g[15]) * k
        u0 = r.u()
        u1 = r.u()
        wi, pdf, wt, spec = sample_bsdf(kind, color, sc.mior[mat], nx, ny, nz, -dx, -dy, -dz, front, u0, u1)
        br *= wt[0]
        bg *= wt[1]
        bb *= wt[2]
        prev_spec = spec
        prev_pdf = pdf
        if depth + 1 >= RR_START:
            q = br
            if bg > q:
                q = bg
            if bb > q:
                q = bb
            q = min(max(q, RR_MIN), RR_MAX)
            if r.u() >= q:
                break
            br /= q
            bg /= q
            bb /= q
        ox, oy, oz = px, py, pz
        dx, dy, dz = wi
    return Lr, Lg, Lb


def render_range(ps, cam, seed, start, end, spp, max_bounces, no_ls, out):
    """Average ``spp`` path samples into out[pixel] for pixels [start, end)."""
    sc = _lists(ps)
    cam = [float(x) for x in cam]
    width = int(cam[14])
    g = 1
    while (g + 1) * (g + 1) <= spp:
        g += 1
    o = (cam[0], cam[1], cam[2])
    for pix in range(start, end):
        x = pix % width
        y = pix // width
        sr = sg = sb = 0.0
        for s in range(spp):
            r = _Draws(stream_state(seed, CAMERA, pix, s))
            j0 = r.u()
            j1 = r.u()
            if s < g * g:
                j0 = ((s % g) + j0) / g
                j1 = ((s // g) + j1) / g
            dx, dy, dz = _camera_dir(cam, x, y, j0, j1)
            lr, lg, lb = _radiance(sc, o[0], o[1], o[2], dx, dy, dz, max_bounces, no_ls, r)
            sr += lr
            sg += lg
            sb += lb
        out[pix, 0] = sr / spp
        out[pix, 1] = sg / spp
        out[pix, 2] = sb / spp


def path_radiance(ps, origin, direction, max_bounces, no_ls, seed, a, b=0):
    """One path sample along a given ray (stream (seed, CAMERA, a, b), no pixel jitter)."""
    r = _Draws(stream_state(seed, CAMERA, a, b))
    return _radiance(_lists(ps), float(origin[0]), float(origin[1]), float(origin[2]),
                     float(direction[0]), float(direction[1]), float(direction[2]), max_bounces, no_ls, r)


# --- shading points ------------------------------------------------------------

def trace_shading_range(ps, origins, dirs, seed, start, end, max_depth,
                        out_pos, out_n, out_wo, out_mat, out_thr, out_valid):
    """Follow camera rays through specular chains to their first diffuse hit."""
    sc = _lists(ps)
    for i in range(start, end):
        r = _Draws(stream_state(seed, SHADING, i, 0))
        ox, oy, oz = float(origins[i, 0]), float(origins[i, 1]), float(origins[i, 2])
        dx, dy, dz = float(dirs[i, 0]), float(dirs[i, 1]), float(dirs[i, 2])
        tr = tg = tb = 1.0
        out_valid[i] = 0
        for _ in range(max_depth):
            hit = _intersect(sc, ox, oy, oz, dx, dy, dz, T_EPS, T_FAR)
            if hit is None or hit[9]:
                break
            t, px, py, pz, nx, ny, nz, front, prim, _ = hit
            mat = sc.pmat[prim]
            kind = sc.mkind[mat]
            if kind == LAMBERTIAN:
                out_pos[i, 0] = px
                out_pos[i, 1] = py
                out_pos[i, 2] = pz
                out_n[i, 0] = nx
                out_n[i, 1] = ny
                out_n[i, 2] = nz
                out_wo[i, 0] = -dx
                out_wo[i, 1] = -dy
                out_wo[i, 2] = -dz
                out_mat[i] = mat
                out_thr[i, 0] = tr
                out_thr[i, 1] = tg
                out_thr[i, 2] = tb
                out_valid[i] = 1
                break
            if kind == EMISSIVE:
                break
            u0 = r.u()
            u1 = r.u()
            wi, _, w, _ = sample_bsdf(kind, sc.mcolor[mat], sc.mior[mat], nx, ny, nz, -dx, -dy, -dz, front, u0, u1)
            tr *= w[0]
            tg *= w[1]
            tb *= w[2]
            ox, oy, oz = px, py, pz
            dx, dy, dz = wi


# --- kd-tree -------------------------------------------------------------------

def kd_node_count(m):
    d = 0
    while -(-m // (1 << d)) > KD_LEAF:
        d += 1
    return (1 << (d + 1)) - 1, d


def kd_build(points):
    """Median-split kd-tree in implicit heap layout.

    Returns (perm, node_axis, node_split). Node ``i`` spans a contiguous range of
    ``perm``; children are 2i+1 / 2i+2 over [lo, mid) / [mid, hi) with
    mid = (lo + hi) // 2. Points are ordered by (coordinate, id) so the split
    sets are unique. ``node_axis`` is -1 for leaves and unused slots.
    """
    m = len(points)
    n_nodes, _ = kd_node_count(max(m, 1))
    perm = np.arange(m, dtype=np.int64)
    axis = np.full(n_nodes, -1, dtype=np.int8)
    split = np.zeros(n_nodes, dtype=np.float64)
    stack = [(0, 0, m)]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= KD_LEAF:
            perm[lo:hi] = np.sort(perm[lo:hi])  # canonical leaf order
            continue
        seg = perm[lo:hi]
        pts = points[seg]
        ext = pts.max(axis=0) - pts.min(axis=0)
        a = int(np.argmax(ext))
        order = np.lexsort((seg, pts[:, a]))
        perm[lo:hi] = seg[order]
        mid = (lo + hi) // 2
        axis[node] = a
        split[node] = points[perm[mid], a]
        stack.append((2 * node + 2, mid, hi))
        stack.append((2 * node + 1, lo, mid))
    return perm, axis, split


def _kd_query_one(points, perm, axis, split, qx, qy, qz, k):
    """Returns (sorted [(d2, id)], number of points examined)."""
    pts = points
    q3 = (qx, qy, qz)
    heap = []  # entries (-d2, -id): top is the worst kept candidate
    seen = 0

    def visit(node, lo, hi):
        nonlocal seen
        a = int(axis[node]) if node < len(axis) else -1
        if a < 0:
            seen += hi - lo
            for j in range(lo, hi):
                pid = int(perm[j])
                ex = qx - float(pts[pid, 0])
                ey = qy - float(pts[pid, 1])
                ez = qz - float(pts[pid, 2])
                d2 = ex * ex + ey * ey + ez * ez
                if len(heap) < k:
                    heapq.heappush(heap, (-d2, -pid))
                else:
                    wd2, wid = -heap[0][0], -heap[0][1]
                    if d2 < wd2 or (d2 == wd2 and pid < wid):
                        heapq.heapreplace(heap, (-d2, -pid))
            return
        diff = q3[a] - float(split[node])
        mid = (lo + hi) // 2
        if diff < 0.0:
            visit(2 * node + 1, lo, mid)
            far = (2 * node + 2, mid, hi)
        else:
            visit(2 * node + 2, mid, hi)
            far = (2 * node + 1, lo, mid)
        if len(heap) < k or diff * diff <= -heap[0][0]:
            visit(*far)

    visit(0, 0, len(perm))
    return sorted((-nd2, -nid) for nd2, nid in heap), seen


def kd_query_range(points, perm, axis, split, queries, k, start, end, out_idx, out_d2):
    """Exact k nearest by (squared distance, id) for queries [start, end)."""
    for qi in range(start, end):
        best, _ = _kd_query_one(points, perm, axis, split, float(queries[qi, 0]), float(queries[qi, 1]),
                                float(queries[qi, 2]), k)
        for j, (d2, pid) in enumerate(best):
            out_idx[qi, j] = pid
            out_d2[qi, j] = d2


def kd_visit_count(points, perm, axis, split, query, k):
    """Points examined by one exact query (search-cost diagnostic)."""
    return _kd_query_one(points, perm, axis, split, float(query[0]), float(query[1]), float(query[2]), k)[1]
