# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: ray intersection, photon tracing, path tracing, shading points, kd-tree.

Operation-for-operation transcription of ``_pykernels``; both must stay
bit-identical. Every entry point releases the GIL for its inner loop so the
Python-side thread pool runs chunks concurrently.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, copysign, M_PI
from libc.stdint cimport uint64_t, int64_t, uint32_t, uint8_t, int8_t
from libc.stdlib cimport malloc, free
from libcpp.vector cimport vector

cnp.import_array()

NAME = "cython"

DEF SPHERE = 0
DEF TRIANGLE = 1
DEF QUAD = 2
DEF LAMBERTIAN = 0
DEF MIRROR = 1
DEF DIELECTRIC = 2
DEF EMISSIVE = 3

cdef double T_EPS = 1e-4
cdef double T_FAR = 1e30
cdef int RR_START = 3
cdef double RR_MIN = 0.05
cdef double RR_MAX = 0.95
cdef int KD_LEAF = 8

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t KEY_A = 0xD1B54A32D192ED03ULL
cdef uint64_t KEY_B = 0xAEF17502108EF2D9ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0

DEF PHOTON = 1
DEF CAMERA = 2
DEF SHADING = 3


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t stream_state(uint64_t seed, uint64_t domain, uint64_t a, uint64_t b) noexcept nogil:
    cdef uint64_t s = mix64(seed ^ ((domain + 1) * GOLDEN))
    s = mix64(s ^ ((a + 1) * KEY_A))
    return mix64(s ^ ((b + 1) * KEY_B))


cdef inline double draw(uint64_t* s) noexcept nogil:
    s[0] = s[0] + GOLDEN
    return <double>(mix64(s[0]) >> 11) * INV_2_53


ctypedef struct SceneV:
    int n_prims
    const int* ptype
    const double* pgeom
    const int* pmat
    const int* mkind
    const double* mcolor
    const double* mior
    int n_lights
    const double* lgeom
    const double* lcdf
    const double* lnormal
    double bg[3]


ctypedef struct Hit:
    double t
    double px, py, pz
    double nx, ny, nz
    bint front
    int index
    bint is_light


ctypedef struct BSample:
    double wx, wy, wz
    double pdf
    double r, g, b
    bint spec


cdef class _Scene:
    """Keeps the packed arrays alive and exposes raw pointers."""
    cdef object arrays
    cdef SceneV v
    cdef double[:, ::1] lnormal_arr

    def __init__(self, ps):
        ptype = np.ascontiguousarray(ps.prim_type, dtype=np.int32)
        pgeom = np.ascontiguousarray(ps.prim_geom, dtype=np.float64)
        pmat = np.ascontiguousarray(ps.prim_mat, dtype=np.int32)
        mkind = np.ascontiguousarray(ps.mat_kind, dtype=np.int32)
        mcolor = np.ascontiguousarray(ps.mat_color, dtype=np.float64)
        mior = np.ascontiguousarray(ps.mat_ior, dtype=np.float64)
        lgeom = np.ascontiguousarray(ps.light_geom, dtype=np.float64)
        lcdf = np.ascontiguousarray(ps.light_cdf, dtype=np.float64)
        nl = np.zeros((max(len(lgeom), 1), 3), dtype=np.float64)
        cdef int i
        cdef double inv
        cdef double[:, ::1] lg = lgeom if len(lgeom) else np.zeros((1, 16))
        cdef double[:, ::1] nlv = nl
        for i in range(len(lgeom)):
            inv = 1.0 / sqrt(lg[i, 9] * lg[i, 9] + lg[i, 10] * lg[i, 10] + lg[i, 11] * lg[i, 11])
            nlv[i, 0] = lg[i, 9] * inv
            nlv[i, 1] = lg[i, 10] * inv
            nlv[i, 2] = lg[i, 11] * inv
        # keep at least one element so data pointers are valid
        def nz(a, shape, dtype):
            return a if a.size else np.zeros(shape, dtype=dtype)
        ptype = nz(ptype, 1, np.int32)
        pgeom = nz(pgeom, (1, 12), np.float64)
        pmat = nz(pmat, 1, np.int32)
        mkind = nz(mkind, 1, np.int32)
        mcolor = nz(mcolor, (1, 3), np.float64)
        mior = nz(mior, 1, np.float64)
        lgeom2 = nz(lgeom, (1, 16), np.float64)
        lcdf = nz(lcdf, 1, np.float64)
        self.arrays = (ptype, pgeom, pmat, mkind, mcolor, mior, lgeom2, lcdf, nl)
        cdef int[::1] a0 = ptype
        cdef double[:, ::1] a1 = pgeom
        cdef int[::1] a2 = pmat
        cdef int[::1] a3 = mkind
        cdef double[:, ::1] a4 = mcolor
        cdef double[::1] a5 = mior
        cdef double[:, ::1] a6 = lgeom2
        cdef double[::1] a7 = lcdf
        self.v.n_prims = len(ps.prim_type)
        self.v.ptype = &a0[0]
        self.v.pgeom = &a1[0, 0]
        self.v.pmat = &a2[0]
        self.v.mkind = &a3[0]
        self.v.mcolor = &a4[0, 0]
        self.v.mior = &a5[0]
        self.v.n_lights = len(ps.light_geom)
        self.v.lgeom = &a6[0, 0]
        self.v.lcdf = &a7[0]
        self.v.lnormal = &nlv[0, 0]
        self.v.bg[0] = ps.background[0]
        self.v.bg[1] = ps.background[1]
        self.v.bg[2] = ps.background[2]


_scene_cache = {}


cdef _Scene _get_scene(ps):
    key = id(ps)
    hit = _scene_cache.get(key)
    if hit is None or hit[0] is not ps:
        hit = (ps, _Scene(ps))
        _scene_cache[key] = hit
    return hit[1]


# --- geometry ----------------------------------------------------------------

cdef inline double quad_t(const double* g, double ox, double oy, double oz,
                          double dx, double dy, double dz) noexcept nogil:
    cdef double denom = dx * g[9] + dy * g[10] + dz * g[11]
    if denom == 0.0:
        return -1.0
    cdef double t = ((g[0] - ox) * g[9] + (g[1] - oy) * g[10] + (g[2] - oz) * g[11]) / denom
    cdef double wx = ox + t * dx - g[0]
    cdef double wy = oy + t * dy - g[1]
    cdef double wz = oz + t * dz - g[2]
    cdef double alpha = g[9] * (wy * g[8] - wz * g[7]) + g[10] * (wz * g[6] - wx * g[8]) + g[11] * (wx * g[7] - wy * g[6])
    if alpha < 0.0 or alpha > 1.0:
        return -1.0
    cdef double beta = g[9] * (g[4] * wz - g[5] * wy) + g[10] * (g[5] * wx - g[3] * wz) + g[11] * (g[3] * wy - g[4] * wx)
    if beta < 0.0 or beta > 1.0:
        return -1.0
    return t


cdef bint intersect_c(const SceneV* sc, double ox, double oy, double oz,
                      double dx, double dy, double dz, double tmin, double tmax, Hit* h) noexcept nogil:
    cdef double best_t = tmax
    cdef int best = -1
    cdef bint best_light = False
    cdef int i, typ
    cdef const double* g
    cdef double ocx, ocy, ocz, b, c, disc, sq, t
    cdef double px_, py_, pz_, det, inv, sx, sy, sz, u, v, qx, qy, qz
    for i in range(sc.n_prims):
        typ = sc.ptype[i]
        g = sc.pgeom + 12 * i
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
            t = quad_t(g, ox, oy, oz, dx, dy, dz)
        if tmin < t and t < best_t:
            best_t = t
            best = i
    for i in range(sc.n_lights):
        t = quad_t(sc.lgeom + 16 * i, ox, oy, oz, dx, dy, dz)
        if tmin < t and t < best_t:
            best_t = t
            best = i
            best_light = True
    if best < 0:
        return False
    t = best_t
    h.t = t
    h.px = ox + t * dx
    h.py = oy + t * dy
    h.pz = oz + t * dz
    cdef double nx, ny, nz, inv_r
    if best_light:
        nx = sc.lnormal[3 * best]
        ny = sc.lnormal[3 * best + 1]
        nz = sc.lnormal[3 * best + 2]
    else:
        g = sc.pgeom + 12 * best
        typ = sc.ptype[best]
        if typ == SPHERE:
            inv_r = 1.0 / g[3]
            nx = (h.px - g[0]) * inv_r
            ny = (h.py - g[1]) * inv_r
            nz = (h.pz - g[2]) * inv_r
        elif typ == TRIANGLE:
            nx = g[9]
            ny = g[10]
            nz = g[11]
        else:
            inv = 1.0 / sqrt(g[9] * g[9] + g[10] * g[10] + g[11] * g[11])
            nx = g[9] * inv
            ny = g[10] * inv
            nz = g[11] * inv
    h.front = nx * dx + ny * dy + nz * dz < 0.0
    if not h.front:
        nx = -nx
        ny = -ny
        nz = -nz
    h.nx = nx
    h.ny = ny
    h.nz = nz
    h.index = best
    h.is_light = best_light
    return True


def intersect(ps, origin, direction, double tmin, double tmax):
    cdef _Scene s = _get_scene(ps)
    cdef Hit h
    if not intersect_c(&s.v, origin[0], origin[1], origin[2], direction[0], direction[1], direction[2], tmin, tmax, &h):
        return None
    return (h.t, h.px, h.py, h.pz, h.nx, h.ny, h.nz, bool(h.front), h.index, bool(h.is_light))


cdef inline void cosine_dir(double nx, double ny, double nz, double u0, double u1,
                            double* wx, double* wy, double* wz, double* zc) noexcept nogil:
    cdef double sign = copysign(1.0, nz)
    cdef double a = -1.0 / (sign + nz)
    cdef double b = nx * ny * a
    cdef double b1x = 1.0 + sign * nx * nx * a
    cdef double b1y = sign * b
    cdef double b1z = -sign * nx
    cdef double b2x = b
    cdef double b2y = sign + ny * ny * a
    cdef double b2z = -ny
    cdef double r = sqrt(u0)
    cdef double phi = 2.0 * M_PI * u1
    cdef double x = r * cos(phi)
    cdef double y = r * sin(phi)
    cdef double one_m = 1.0 - u0
    cdef double z = sqrt(one_m if one_m > 0.0 else 0.0)
    wx[0] = x * b1x + y * b2x + z * nx
    wy[0] = x * b1y + y * b2y + z * ny
    wz[0] = x * b1z + y * b2z + z * nz
    zc[0] = z


cdef inline void sample_bsdf_c(int kind, const double* color, double ior,
                               double nx, double ny, double nz, double wox, double woy, double woz,
                               bint front, double u0, double u1, BSample* s) noexcept nogil:
    cdef double z, cos_i, k, eta, sin2_t, cos_t, rs, rp, F
    if kind == LAMBERTIAN:
        cosine_dir(nx, ny, nz, u0, u1, &s.wx, &s.wy, &s.wz, &z)
        s.pdf = z / M_PI
        s.r = color[0]
        s.g = color[1]
        s.b = color[2]
        s.spec = False
        return
    cos_i = nx * wox + ny * woy + nz * woz
    s.pdf = 1.0
    s.spec = True
    if kind == MIRROR:
        k = 2.0 * cos_i
        s.wx = k * nx - wox
        s.wy = k * ny - woy
        s.wz = k * nz - woz
        s.r = color[0]
        s.g = color[1]
        s.b = color[2]
        return
    # dielectric
    eta = 1.0 / ior if front else ior
    sin2_t = eta * eta * (1.0 - cos_i * cos_i)
    if sin2_t >= 1.0:
        F = 1.0
        cos_t = 0.0
    else:
        cos_t = sqrt(1.0 - sin2_t)
        rs = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
        rp = (cos_i - eta * cos_t) / (cos_i + eta * cos_t)
        F = 0.5 * (rs * rs + rp * rp)
    if u0 < F:
        k = 2.0 * cos_i
        s.wx = k * nx - wox
        s.wy = k * ny - woy
        s.wz = k * nz - woz
        s.r = 1.0
        s.g = 1.0
        s.b = 1.0
        return
    k = eta * cos_i - cos_t
    s.wx = -eta * wox + k * nx
    s.wy = -eta * woy + k * ny
    s.wz = -eta * woz + k * nz
    s.r = color[0]
    s.g = color[1]
    s.b = color[2]


cdef inline int pick_light(const double* cdf, int n, double u) noexcept nogil:
    cdef int i
    for i in range(n):
        if u < cdf[i]:
            return i
    return n - 1


cdef inline double light_prob(const double* cdf, int i) noexcept nogil:
    if i > 0:
        return cdf[i] - cdf[i - 1]
    return cdf[0]


cdef inline double clamp_rr(double q) noexcept nogil:
    if q < RR_MIN:
        q = RR_MIN
    if q > RR_MAX:
        q = RR_MAX
    return q


# --- photon tracing ------------------------------------------------------------

cdef void photon_paths(const SceneV* sc, uint64_t seed, int64_t start, int64_t end, double n_emit,
                       int max_bounces, vector[double]* fout, vector[uint32_t]* bout,
                       vector[uint8_t]* kout) noexcept nogil:
    cdef int64_t path
    cdef uint64_t st
    cdef int light, bounce, first_kind, mat, kind
    cdef double ua, ub, uc, ud, ox, oy, oz, dx, dy, dz, zc, k, p_sel
    cdef double phr, phg, phb, br, bg, bb, q, u0, u1
    cdef double inv_n = 1.0 / n_emit
    cdef const double* g
    cdef const double* nl
    cdef Hit h
    cdef BSample s
    for path in range(start, end):
        st = stream_state(seed, PHOTON, <uint64_t>path, 0)
        light = pick_light(sc.lcdf, sc.n_lights, draw(&st))
        ua = draw(&st)
        ub = draw(&st)
        uc = draw(&st)
        ud = draw(&st)
        g = sc.lgeom + 16 * light
        ox = g[0] + ua * g[3] + ub * g[6]
        oy = g[1] + ua * g[4] + ub * g[7]
        oz = g[2] + ua * g[5] + ub * g[8]
        nl = sc.lnormal + 3 * light
        cosine_dir(nl[0], nl[1], nl[2], uc, ud, &dx, &dy, &dz, &zc)
        k = g[12] * M_PI
        p_sel = light_prob(sc.lcdf, light)
        phr = g[13] * k / p_sel
        phg = g[14] * k / p_sel
        phb = g[15] * k / p_sel
        br = 1.0
        bg = 1.0
        bb = 1.0
        first_kind = -1
        for bounce in range(1, max_bounces + 1):
            if not intersect_c(sc, ox, oy, oz, dx, dy, dz, T_EPS, T_FAR, &h) or h.is_light:
                break
            mat = sc.pmat[h.index]
            kind = sc.mkind[mat]
            if bounce == 1:
                if kind != MIRROR and kind != DIELECTRIC:
                    break
                first_kind = kind
            if kind == EMISSIVE:
                break
            if kind == LAMBERTIAN:
                fout.push_back(h.px)
                fout.push_back(h.py)
                fout.push_back(h.pz)
                fout.push_back(-dx)
                fout.push_back(-dy)
                fout.push_back(-dz)
                fout.push_back(br * phr * inv_n)
                fout.push_back(bg * phg * inv_n)
                fout.push_back(bb * phb * inv_n)
                fout.push_back(h.nx)
                fout.push_back(h.ny)
                fout.push_back(h.nz)
                bout.push_back(<uint32_t>bounce)
                kout.push_back(<uint8_t>first_kind)
            u0 = draw(&st)
            u1 = draw(&st)
            sample_bsdf_c(kind, sc.mcolor + 3 * mat, sc.mior[mat], h.nx, h.ny, h.nz, -dx, -dy, -dz, h.front, u0, u1, &s)
            br *= s.r
            bg *= s.g
            bb *= s.b
            if bounce >= RR_START:
                q = br
                if bg > q:
                    q = bg
                if bb > q:
                    q = bb
                q = clamp_rr(q)
                if draw(&st) >= q:
                    break
                br /= q
                bg /= q
                bb /= q
            ox = h.px
            oy = h.py
            oz = h.pz
            dx = s.wx
            dy = s.wy
            dz = s.wz


def trace_photon_range(ps, uint64_t seed, int64_t start, int64_t end, int64_t n_emit, int max_bounces):
    cdef _Scene s = _get_scene(ps)
    cdef vector[double] f
    cdef vector[uint32_t] b
    cdef vector[uint8_t] kk
    with nogil:
        photon_paths(&s.v, seed, start, end, <double>n_emit, max_bounces, &f, &b, &kk)
    cdef Py_ssize_t m = b.size()
    cdef Py_ssize_t i
    cdef int j
    fa = np.empty((m, 12), dtype=np.float64)
    ba = np.empty(m, dtype=np.uint32)
    ka = np.empty(m, dtype=np.uint8)
    cdef double[:, ::1] fv = fa
    cdef uint32_t[::1] bv = ba
    cdef uint8_t[::1] kv = ka
    for i in range(m):
        for j in range(12):
            fv[i, j] = f[12 * i + j]
        bv[i] = b[i]
        kv[i] = kk[i]
    return (fa[:, 0:3].copy(), fa[:, 3:6].copy(), fa[:, 6:9].copy(), fa[:, 9:12].copy(), ba, ka)


# --- path tracing ----------------------------------------------------------------

cdef void radiance_c(const SceneV* sc, double ox, double oy, double oz, double dx, double dy, double dz,
                     int max_bounces, bint no_ls, uint64_t* st, double* out) noexcept nogil:
    cdef double Lr = 0.0, Lg = 0.0, Lb = 0.0
    cdef double br = 1.0, bg = 1.0, bb = 1.0
    cdef bint prev_spec = True
    cdef bint seen_diffuse = False
    cdef double prev_pdf = 0.0
    cdef int depth, mat, kind, li
    cdef double t, w, cos_l, pdf_l, pdf_b, cos_s, ul, ua, ub, wx, wy, wz, dist2, dist, k, q, u0, u1
    cdef const double* g
    cdef const double* nl
    cdef const double* color
    cdef Hit h
    cdef Hit h2
    cdef BSample s
    for depth in range(max_bounces + 1):
        if not intersect_c(sc, ox, oy, oz, dx, dy, dz, T_EPS, T_FAR, &h):
            Lr += br * sc.bg[0]
            Lg += bg * sc.bg[1]
            Lb += bb * sc.bg[2]
            break
        t = h.t
        if h.is_light:
            if h.front and not (no_ls and prev_spec and seen_diffuse):
                g = sc.lgeom + 16 * h.index
                if prev_spec:
                    w = 1.0
                else:
                    nl = sc.lnormal + 3 * h.index
                    cos_l = -(dx * nl[0] + dy * nl[1] + dz * nl[2])
                    pdf_l = light_prob(sc.lcdf, h.index) * (t * t) / (cos_l * g[12])
                    w = prev_pdf / (prev_pdf + pdf_l)
                Lr += br * g[13] * w
                Lg += bg * g[14] * w
                Lb += bb * g[15] * w
            break
        mat = sc.pmat[h.index]
        kind = sc.mkind[mat]
        color = sc.mcolor + 3 * mat
        if kind == EMISSIVE:
            Lr += br * color[0]
            Lg += bg * color[1]
            Lb += bb * color[2]
            break
        if depth == max_bounces:
            break
        if kind == LAMBERTIAN:
            seen_diffuse = True
            ul = draw(st)
            ua = draw(st)
            ub = draw(st)
            li = pick_light(sc.lcdf, sc.n_lights, ul)
            g = sc.lgeom + 16 * li
            wx = g[0] + ua * g[3] + ub * g[6] - h.px
            wy = g[1] + ua * g[4] + ub * g[7] - h.py
            wz = g[2] + ua * g[5] + ub * g[8] - h.pz
            dist2 = wx * wx + wy * wy + wz * wz
            dist = sqrt(dist2)
            wx /= dist
            wy /= dist
            wz /= dist
            nl = sc.lnormal + 3 * li
            cos_l = -(wx * nl[0] + wy * nl[1] + wz * nl[2])
            cos_s = wx * h.nx + wy * h.ny + wz * h.nz
            if cos_l > 0.0 and cos_s > 0.0:
                if not intersect_c(sc, h.px, h.py, h.pz, wx, wy, wz, T_EPS, dist - T_EPS, &h2):
                    pdf_l = light_prob(sc.lcdf, li) * dist2 / (cos_l * g[12])
                    pdf_b = cos_s / M_PI
                    w = pdf_l / (pdf_l + pdf_b)
                    k = cos_s * w / pdf_l
                    Lr += br * (color[0] / M_PI * g[13]) * k
                    Lg += bg * (color[1] / M_PI * g[14]) * k
                    Lb += bb * (color[2] / M_PI * g[15]) * k
        u0 = draw(st)
        u1 = draw(st)
        sample_bsdf_c(kind, color, sc.mior[mat], h.nx, h.ny, h.nz, -dx, -dy, -dz, h.front, u0, u1, &s)
        br *= s.r
        bg *= s.g
        bb *= s.b
        prev_spec = s.spec
        prev_pdf = s.pdf
        if depth + 1 >= RR_START:
            q = br
            if bg > q:
                q = bg
            if bb > q:
                q = bb
            q = clamp_rr(q)
            if draw(st) >= q:
                break
            br /= q
            bg /= q
            bb /= q
        ox = h.px
        oy = h.py
        oz = h.pz
        dx = s.wx
        dy = s.wy
        dz = s.wz
    out[0] = Lr
    out[1] = Lg
    out[2] = Lb


cdef void render_pixels(const SceneV* sc, const double* cam, uint64_t seed, int64_t start, int64_t end,
                        int spp, int max_bounces, bint no_ls, double* out) noexcept nogil:
    cdef int64_t width = <int64_t>cam[14]
    cdef double W = cam[14], H = cam[15]
    cdef int g = 1
    while (g + 1) * (g + 1) <= spp:
        g += 1
    cdef int64_t pix, x, y
    cdef int s
    cdef uint64_t st
    cdef double sr, sg, sb, j0, j1, sx, sy, dx, dy, dz, inv
    cdef double L[3]
    for pix in range(start, end):
        x = pix % width
        y = pix // width
        sr = 0.0
        sg = 0.0
        sb = 0.0
        for s in range(spp):
            st = stream_state(seed, CAMERA, <uint64_t>pix, <uint64_t>s)
            j0 = draw(&st)
            j1 = draw(&st)
            if s < g * g:
                j0 = (<double>(s % g) + j0) / g
                j1 = (<double>(s // g) + j1) / g
            sx = (2.0 * (<double>x + j0) / W - 1.0) * cam[12] * cam[13]
            sy = (1.0 - 2.0 * (<double>y + j1) / H) * cam[12]
            dx = cam[9] + sx * cam[3] + sy * cam[6]
            dy = cam[10] + sx * cam[4] + sy * cam[7]
            dz = cam[11] + sx * cam[5] + sy * cam[8]
            inv = 1.0 / sqrt(dx * dx + dy * dy + dz * dz)
            radiance_c(sc, cam[0], cam[1], cam[2], dx * inv, dy * inv, dz * inv, max_bounces, no_ls, &st, L)
            sr += L[0]
            sg += L[1]
            sb += L[2]
        out[3 * pix] = sr / spp
        out[3 * pix + 1] = sg / spp
        out[3 * pix + 2] = sb / spp


def render_range(ps, cam, uint64_t seed, int64_t start, int64_t end, int spp, int max_bounces,
                 bint no_ls, double[:, ::1] out):
    cdef _Scene s = _get_scene(ps)
    cdef double[::1] camv = np.ascontiguousarray(cam, dtype=np.float64)
    with nogil:
        render_pixels(&s.v, &camv[0], seed, start, end, spp, max_bounces, no_ls, &out[0, 0])


def path_radiance(ps, origin, direction, int max_bounces, bint no_ls, uint64_t seed, uint64_t a, uint64_t b=0):
    cdef _Scene s = _get_scene(ps)
    cdef uint64_t st = stream_state(seed, CAMERA, a, b)
    cdef double L[3]
    radiance_c(&s.v, origin[0], origin[1], origin[2], direction[0], direction[1], direction[2],
               max_bounces, no_ls, &st, L)
    return (L[0], L[1], L[2])


# --- shading points ------------------------------------------------------------

cdef void shading_points(const SceneV* sc, const double* origins, const double* dirs, uint64_t seed,
                         int64_t start, int64_t end, int max_depth, double* out_pos, double* out_n,
                         double* out_wo, int* out_mat, double* out_thr, uint8_t* out_valid) noexcept nogil:
    cdef int64_t i
    cdef int depth, mat, kind
    cdef uint64_t st
    cdef double ox, oy, oz, dx, dy, dz, tr, tg, tb, u0, u1
    cdef Hit h
    cdef BSample s
    for i in range(start, end):
        st = stream_state(seed, SHADING, <uint64_t>i, 0)
        ox = origins[3 * i]
        oy = origins[3 * i + 1]
        oz = origins[3 * i + 2]
        dx = dirs[3 * i]
        dy = dirs[3 * i + 1]
        dz = dirs[3 * i + 2]
        tr = 1.0
        tg = 1.0
        tb = 1.0
        out_valid[i] = 0
        for depth in range(max_depth):
            if not intersect_c(sc, ox, oy, oz, dx, dy, dz, T_EPS, T_FAR, &h) or h.is_light:
                break
            mat = sc.pmat[h.index]
            kind = sc.mkind[mat]
            if kind == LAMBERTIAN:
                out_pos[3 * i] = h.px
                out_pos[3 * i + 1] = h.py
                out_pos[3 * i + 2] = h.pz
                out_n[3 * i] = h.nx
                out_n[3 * i + 1] = h.ny
                out_n[3 * i + 2] = h.nz
                out_wo[3 * i] = -dx
                out_wo[3 * i + 1] = -dy
                out_wo[3 * i + 2] = -dz
                out_mat[i] = mat
                out_thr[3 * i] = tr
                out_thr[3 * i + 1] = tg
                out_thr[3 * i + 2] = tb
                out_valid[i] = 1
                break
            if kind == EMISSIVE:
                break
            u0 = draw(&st)
            u1 = draw(&st)
            sample_bsdf_c(kind, sc.mcolor + 3 * mat, sc.mior[mat], h.nx, h.ny, h.nz, -dx, -dy, -dz, h.front, u0, u1, &s)
            tr *= s.r
            tg *= s.g
            tb *= s.b
            ox = h.px
            oy = h.py
            oz = h.pz
            dx = s.wx
            dy = s.wy
            dz = s.wz


def trace_shading_range(ps, const double[:, ::1] origins, const double[:, ::1] dirs, uint64_t seed,
                        int64_t start, int64_t end, int max_depth, double[:, ::1] out_pos, double[:, ::1] out_n,
                        double[:, ::1] out_wo, int[::1] out_mat, double[:, ::1] out_thr, uint8_t[::1] out_valid):
    cdef _Scene s = _get_scene(ps)
    if end <= start:
        return
    with nogil:
        shading_points(&s.v, &origins[0, 0], &dirs[0, 0], seed, start, end, max_depth, &out_pos[0, 0],
                       &out_n[0, 0], &out_wo[0, 0], &out_mat[0], &out_thr[0, 0], &out_valid[0])


# --- kd-tree -------------------------------------------------------------------

def kd_node_count(int64_t m):
    cdef int d = 0
    while (m + (1 << d) - 1) >> d > KD_LEAF:
        d += 1
    return (1 << (d + 1)) - 1, d


cdef inline bint key_less(const double* pts, int axis, int64_t a, int64_t b) noexcept nogil:
    cdef double ca = pts[3 * a + axis]
    cdef double cb = pts[3 * b + axis]
    return ca < cb or (ca == cb and a < b)


cdef void select_kth(const double* pts, int axis, int64_t* perm, int64_t lo, int64_t hi, int64_t kth) noexcept nogil:
    """Reorder perm[lo:hi] so perm[kth] has rank kth - lo under the (coordinate, id) order."""
    cdef int64_t l = lo, r = hi - 1, i, j, mid, pivot, tmp
    while r > l:
        mid = l + (r - l) // 2
        # median of three into perm[mid]
        if key_less(pts, axis, perm[mid], perm[l]):
            tmp = perm[mid]; perm[mid] = perm[l]; perm[l] = tmp
        if key_less(pts, axis, perm[r], perm[l]):
            tmp = perm[r]; perm[r] = perm[l]; perm[l] = tmp
        if key_less(pts, axis, perm[r], perm[mid]):
            tmp = perm[r]; perm[r] = perm[mid]; perm[mid] = tmp
        pivot = perm[mid]
        i = l
        j = r
        while i <= j:
            while key_less(pts, axis, perm[i], pivot):
                i += 1
            while key_less(pts, axis, pivot, perm[j]):
                j -= 1
            if i <= j:
                tmp = perm[i]; perm[i] = perm[j]; perm[j] = tmp
                i += 1
                j -= 1
        if kth <= j:
            r = j
        elif kth >= i:
            l = i
        else:
            return


cdef void build_node(const double* pts, int64_t* perm, int8_t* axis, double* split,
                     int64_t node, int64_t lo, int64_t hi) noexcept nogil:
    cdef int64_t j, mid
    cdef int a, best
    cdef double mn[3]
    cdef double mx[3]
    cdef double c, e
    cdef int64_t i, tmp
    if hi - lo <= KD_LEAF:
        # canonical leaf order: ascending id
        for i in range(lo + 1, hi):
            tmp = perm[i]
            j = i - 1
            while j >= lo and perm[j] > tmp:
                perm[j + 1] = perm[j]
                j -= 1
            perm[j + 1] = tmp
        return
    for a in range(3):
        mn[a] = pts[3 * perm[lo] + a]
        mx[a] = mn[a]
    for j in range(lo + 1, hi):
        for a in range(3):
            c = pts[3 * perm[j] + a]
            if c < mn[a]:
                mn[a] = c
            if c > mx[a]:
                mx[a] = c
    best = 0
    e = mx[0] - mn[0]
    for a in range(1, 3):
        if mx[a] - mn[a] > e:
            e = mx[a] - mn[a]
            best = a
    mid = (lo + hi) // 2
    select_kth(pts, best, perm, lo, hi, mid)
    axis[node] = <int8_t>best
    split[node] = pts[3 * perm[mid] + best]
    build_node(pts, perm, axis, split, 2 * node + 1, lo, mid)
    build_node(pts, perm, axis, split, 2 * node + 2, mid, hi)


def kd_build(points):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef int64_t m = pts.shape[0]
    n_nodes, _ = kd_node_count(max(m, 1))
    perm = np.arange(m, dtype=np.int64)
    axis = np.full(n_nodes, -1, dtype=np.int8)
    split = np.zeros(n_nodes, dtype=np.float64)
    cdef int64_t[::1] pv = perm
    cdef int8_t[::1] av = axis
    cdef double[::1] sv = split
    if m > 0:
        with nogil:
            build_node(&pts[0, 0], &pv[0], &av[0], &sv[0], 0, 0, m)
    return perm, axis, split


ctypedef struct KHeap:
    double* d2
    int64_t* ids
    int size
    int k


cdef inline bint heap_greater(KHeap* h, int a, int b) noexcept nogil:
    return h.d2[a] > h.d2[b] or (h.d2[a] == h.d2[b] and h.ids[a] > h.ids[b])


cdef inline void heap_swap(KHeap* h, int a, int b) noexcept nogil:
    cdef double td = h.d2[a]
    cdef int64_t ti = h.ids[a]
    h.d2[a] = h.d2[b]
    h.ids[a] = h.ids[b]
    h.d2[b] = td
    h.ids[b] = ti


cdef inline void heap_offer(KHeap* h, double d2, int64_t pid) noexcept nogil:
    cdef int i, p, c, largest
    if h.size < h.k:
        i = h.size
        h.size += 1
        h.d2[i] = d2
        h.ids[i] = pid
        while i > 0:
            p = (i - 1) // 2
            if heap_greater(h, i, p):
                heap_swap(h, i, p)
                i = p
            else:
                break
        return
    if d2 < h.d2[0] or (d2 == h.d2[0] and pid < h.ids[0]):
        h.d2[0] = d2
        h.ids[0] = pid
        i = 0
        while True:
            c = 2 * i + 1
            if c >= h.size:
                break
            largest = i
            if heap_greater(h, c, largest):
                largest = c
            if c + 1 < h.size and heap_greater(h, c + 1, largest):
                largest = c + 1
            if largest == i:
                break
            heap_swap(h, i, largest)
            i = largest


cdef void kd_visit(const double* pts, const int64_t* perm, const int8_t* axis, const double* split,
                   int64_t n_nodes, const double* q, KHeap* h, int64_t node, int64_t lo, int64_t hi) noexcept nogil:
    cdef int a = -1
    cdef int64_t j, pid, mid
    cdef double ex, ey, ez, d2, diff
    if node < n_nodes:
        a = axis[node]
    if a < 0:
        for j in range(lo, hi):
            pid = perm[j]
            ex = q[0] - pts[3 * pid]
            ey = q[1] - pts[3 * pid + 1]
            ez = q[2] - pts[3 * pid + 2]
            d2 = ex * ex + ey * ey + ez * ez
            heap_offer(h, d2, pid)
        return
    diff = q[a] - split[node]
    mid = (lo + hi) // 2
    if diff < 0.0:
        kd_visit(pts, perm, axis, split, n_nodes, q, h, 2 * node + 1, lo, mid)
        if h.size < h.k or diff * diff <= h.d2[0]:
            kd_visit(pts, perm, axis, split, n_nodes, q, h, 2 * node + 2, mid, hi)
    else:
        kd_visit(pts, perm, axis, split, n_nodes, q, h, 2 * node + 2, mid, hi)
        if h.size < h.k or diff * diff <= h.d2[0]:
            kd_visit(pts, perm, axis, split, n_nodes, q, h, 2 * node + 1, lo, mid)


def kd_query_range(points, perm, axis, split, queries, int k, int64_t start, int64_t end,
                   int64_t[:, ::1] out_idx, double[:, ::1] out_d2):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef const int64_t[::1] pv = np.ascontiguousarray(perm, dtype=np.int64)
    cdef const int8_t[::1] av = np.ascontiguousarray(axis, dtype=np.int8)
    cdef const double[::1] sv = np.ascontiguousarray(split, dtype=np.float64)
    cdef const double[:, ::1] qv = np.ascontiguousarray(queries, dtype=np.float64)
    cdef int64_t m = pts.shape[0]
    cdef int64_t n_nodes = av.shape[0]
    cdef int64_t qi
    cdef int j, n, i, p, c, largest
    cdef KHeap h
    if end <= start or m == 0:
        return
    h.k = k
    h.d2 = <double*>malloc(k * sizeof(double))
    h.ids = <int64_t*>malloc(k * sizeof(int64_t))
    try:
        with nogil:
            for qi in range(start, end):
                h.size = 0
                kd_visit(&pts[0, 0], &pv[0], &av[0], &sv[0], n_nodes, &qv[qi, 0], &h, 0, 0, m)
                # heap-sort in place: repeatedly move the max to the end
                n = h.size
                while n > 1:
                    heap_swap(&h, 0, n - 1)
                    n -= 1
                    i = 0
                    while True:
                        c = 2 * i + 1
                        if c >= n:
                            break
                        largest = i
                        if heap_greater(&h, c, largest):
                            largest = c
                        if c + 1 < n and heap_greater(&h, c + 1, largest):
                            largest = c + 1
                        if largest == i:
                            break
                        heap_swap(&h, i, largest)
                        i = largest
                for j in range(h.size):
                    out_idx[qi, j] = h.ids[j]
                    out_d2[qi, j] = h.d2[j]
    finally:
        free(h.d2)
        free(h.ids)
