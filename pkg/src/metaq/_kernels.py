"""Per-replication homogeneity test kernels used by the simulation harness.

Two interchangeable paths evaluate a block of simulated meta-analyses:

* ``replicate_block_numba``: one replication at a time inside a numba loop.
* ``replicate_block_numpy``: the whole block at once, studies on axis 0
  and replications on axis 1.

The numpy path calls the shared array formulas (``qmoments._eq_total`` and
friends) on (I, B) arrays. The numba loop uses scalar single-pass versions
of the same sums so that a replication allocates nothing; the test suite
pins the two to each other.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, jit
from .qmoments import _csum, _eq2_total, _eq_total
from .smd import _central_moments_core, weight_derivatives
from .specfun import chi_square_sf, chi_square_sf_array, gamma_sf, gamma_sf_array

FIELDS = ("q", "g0", "eq", "eq2", "p_chisq", "p_gamma", "p_fdf", "p_gamma_known")
N_FIELDS = len(FIELDS)


# -- allocation-free scalar versions for the numba loop ---------------------------
#
# Same algebra as qmoments._eq_terms / _eq2_terms and smd._central_moments_core,
# written as single passes with scalar compensated accumulators so one
# replication allocates nothing. tests/test_kernels.py pins them to the shared
# array code.

@jit
def _two_sum(s, c, x):
    t = s + x
    bp = t - s
    return t, c + ((s - (t - bp)) + (x - bp))


@jit
def _sum1(a):
    s = 0.0
    c = 0.0
    for i in range(a.shape[0]):
        s, c = _two_sum(s, c, a[i])
    return s + c


@jit
def _pair1(a, b):
    sa = ca = sb = cb = sab = cab = 0.0
    for i in range(a.shape[0]):
        sa, ca = _two_sum(sa, ca, a[i])
        sb, cb = _two_sum(sb, cb, b[i])
        sab, cab = _two_sum(sab, cab, a[i] * b[i])
    return (sa + ca) * (sb + cb) - (sab + cab)


@jit
def _trip1(a, b, c):
    sa = ca = sb = cb = sc = cc = 0.0
    sab = cab = sac = cac = sbc = cbc = sabc = cabc = 0.0
    for i in range(a.shape[0]):
        sa, ca = _two_sum(sa, ca, a[i])
        sb, cb = _two_sum(sb, cb, b[i])
        sc, cc = _two_sum(sc, cc, c[i])
        sab, cab = _two_sum(sab, cab, a[i] * b[i])
        sac, cac = _two_sum(sac, cac, a[i] * c[i])
        sbc, cbc = _two_sum(sbc, cbc, b[i] * c[i])
        sabc, cabc = _two_sum(sabc, cabc, a[i] * b[i] * c[i])
    sa += ca
    sb += cb
    sc += cc
    return (sa * sb * sc - (sab + cab) * sc - (sac + cac) * sb - (sbc + cbc) * sa
            + 2.0 * (sabc + cabc))


@jit
def _study_moments(c, s, jf, delta, out):
    # central moments r = 2..6 of one study's g at delta, written to out[0:5]
    gam = s * delta
    g2 = gam * gam
    raw1 = c[1] * gam
    raw2 = c[2] * (g2 + 1.0)
    raw3 = c[3] * gam * (g2 + 3.0)
    raw4 = c[4] * (g2 * g2 + 6.0 * g2 + 3.0)
    raw5 = c[5] * gam * (g2 * g2 + 10.0 * g2 + 15.0)
    raw6 = c[6] * (g2 * g2 * g2 + 15.0 * g2 * g2 + 45.0 * g2 + 15.0)
    mu = raw1
    ratio = jf / s
    raws = (1.0, raw1, raw2, raw3, raw4, raw5, raw6)
    binom = ((1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0),
             (1.0, 3.0, 3.0, 1.0, 0.0, 0.0, 0.0),
             (1.0, 4.0, 6.0, 4.0, 1.0, 0.0, 0.0),
             (1.0, 5.0, 10.0, 10.0, 5.0, 1.0, 0.0),
             (1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0))
    scale = ratio
    for r in range(2, 7):
        scale *= ratio
        acc = 0.0
        comp = 0.0
        mk = 1.0
        sign = 1.0
        for k in range(r + 1):
            acc, comp = _two_sum(acc, comp, sign * binom[r - 2][k] * mk * raws[r - k])
            mk *= mu
            sign = -sign
        out[r - 2] = (acc + comp) * scale


@jit
def _null_moments_loop(g0, a, b, raw_c, s, jf, legacy, wk):
    """E[Q] and E[Q^2] at a common null effect g0; ``wk`` is a (24, I) buffer."""
    n = a.shape[0]
    w = wk[0]
    d = wk[1]
    e = wk[2]
    m2 = wk[3]
    m3 = wk[4]
    m4 = wk[5]
    m5 = wk[6]
    m6 = wk[7]
    for i in range(n):
        wi = 1.0 / (a[i] + b[i] * g0 * g0)
        w[i] = wi
        d[i] = -2.0 * b[i] * g0 * wi * wi
        e[i] = -2.0 * b[i] * wi * wi + 8.0 * b[i] * b[i] * g0 * g0 * wi * wi * wi
        _study_moments(raw_c[:, i], s[i], jf[i], g0, wk[3:8, i])
    W = _sum1(w)
    W2 = W * W
    U = wk[8]
    t0 = wk[9]
    t1 = wk[10]
    t2 = wk[11]
    t3 = wk[12]
    wm2 = wk[13]
    w2m2 = wk[14]
    for i in range(n):
        U[i] = 1.0 - w[i] / W
        wm2[i] = w[i] * m2[i]
        w2m2[i] = w[i] * w[i] * m2[i]

    # E[Q]
    eq = 0.0
    ceq = 0.0
    for i in range(n):
        ui = U[i]
        t0[i] = w[i] * ui * m2[i]
        t1[i] = ui * ui * d[i] * m3[i]
        t2[i] = (-ui * ui * d[i] * d[i] / W + 0.5 * ui * ui * e[i]) * m4[i]
        t3[i] = (1.0 - 2.0 * w[i] / W + 3.0 * w[i] * w[i] / W2) * d[i] * d[i] * m2[i] * m2[i] / W
    for v in (_sum1(t0), _sum1(t1), _sum1(t2), _sum1(t3)):
        eq, ceq = _two_sum(eq, ceq, v)
    for i in range(n):
        t0[i] = U[i] * d[i] * m2[i]
        t1[i] = w[i] * d[i] * m2[i]
        t3[i] = w[i] * w[i] * e[i] * m2[i] * m2[i]
        if legacy:
            t2[i] = (d[i] * d[i] - e[i] / (2.0 * W)) * m2[i]
        else:
            t2[i] = (d[i] * d[i] - 0.5 * W * e[i]) * m2[i]
    su = _sum1(t0)
    sw = _sum1(t1)
    eq, ceq = _two_sum(eq, ceq, -su * su / W)
    eq, ceq = _two_sum(eq, ceq, -sw * sw / (W2 * W))
    if legacy:
        eq, ceq = _two_sum(eq, ceq, -_sum1(wm2) * _sum1(t2) / (W2 * W))
        eq, ceq = _two_sum(eq, ceq, -_sum1(t3) / (2.0 * W2 * W))
    else:
        eq, ceq = _two_sum(eq, ceq, -_sum1(w2m2) * _sum1(t2) / (W2 * W))
        eq, ceq = _two_sum(eq, ceq, -_sum1(t3) / (2.0 * W2))
    eq += ceq

    # E[Q^2]
    acc = 0.0
    cacc = 0.0
    for i in range(n):
        ui = U[i]
        t0[i] = w[i] * w[i] * ui * ui * m4[i]
        t1[i] = 2.0 * w[i] * ui * ui * ui * d[i] * m5[i]
        t2[i] = ui * ui * ui * ((ui - 2.0 * w[i] / W) * d[i] * d[i] + w[i] * e[i]) * m6[i]
        t3[i] = w[i] * ui * m2[i]
    for v in (_sum1(t0), _sum1(t1), _sum1(t2)):
        acc, cacc = _two_sum(acc, cacc, v)
    acc, cacc = _two_sum(acc, cacc, _pair1(t3, t3) + 2.0 / W2 * _pair1(w2m2, w2m2))

    a1 = wk[15]
    b1 = wk[16]
    a2 = wk[17]
    b2 = wk[18]
    for i in range(n):
        ui = U[i]
        a1[i] = ui * ui * d[i] * m3[i]
        b1[i] = ui * wm2[i]
        a2[i] = ui * w[i] * d[i] * m3[i]
    d5 = 2.0 * _pair1(a1, b1) + 10.0 / W2 * _pair1(a2, w2m2)
    for i in range(n):
        ui = U[i]
        a1[i] = w[i] * w[i] * ui * m3[i]
        b1[i] = ui * d[i] * m2[i]
        a2[i] = w[i] * w[i] * w[i] * m3[i]
        b2[i] = w[i] * d[i] * m2[i]
    d5 += -4.0 / W * _pair1(a1, b1) - 4.0 / (W2 * W) * _pair1(a2, b2)
    acc, cacc = _two_sum(acc, cacc, d5)

    c1 = wk[19]
    c2 = wk[20]
    c3 = wk[21]
    dm2 = wk[22]
    for i in range(n):
        ui = U[i]
        dd4 = d[i] * d[i] * m4[i]
        a1[i] = ui * ui * dd4
        b1[i] = ui * dd4
        a2[i] = ui * w[i] * dd4
        c1[i] = ui * ui * e[i] * m4[i]
        c2[i] = (6.0 * w[i] - W) * ui * e[i] * m4[i]
        c3[i] = ui * ui * w[i] * d[i] * m4[i]
        dm2[i] = d[i] * m2[i]
    ij = -2.0 * W * (W2 * _pair1(a1, wm2) - 4.0 * W * _pair1(b1, w2m2) + 9.0 * _pair1(a2, w2m2))
    ij += W2 * (W2 * _pair1(c1, wm2) + _pair1(c2, w2m2))
    ij_cross = W2 * _pair1(c3, dm2)
    for i in range(n):
        w3 = w[i] * w[i] * w[i]
        a1[i] = (3.0 * w[i] - W) * U[i] * w[i] * d[i] * m4[i]
        b1[i] = w[i] * d[i] * m2[i]
        a2[i] = w3 * (3.0 * w[i] - 2.0 * W) * m4[i]
        b2[i] = d[i] * d[i] * m2[i]
        c1[i] = U[i] * w3 * m4[i]
        c2[i] = e[i] * m2[i]
    ij_cross += _pair1(a1, b1)
    ij += -8.0 * W * ij_cross + _pair1(a2, b2) + W2 * _pair1(c1, c2)
    acc, cacc = _two_sum(acc, cacc, ij / (W2 * W2))

    # triple sums: x = d^2 m2 (b2), y = e m2 (c2), u = U d m2, v = w d m2 (b1), z = d m2
    uu = wk[23]
    for i in range(n):
        uu[i] = U[i] * d[i] * m2[i]
    own_d = -16.0 / (W2 * W2) * (2.0 * W * _trip1(b2, w2m2, wm2) - 9.0 * _trip1(b2, w2m2, w2m2))
    own_e = 8.0 / (W2 * W) * (2.0 * W * _trip1(c2, w2m2, wm2) - 6.0 * _trip1(c2, w2m2, w2m2))
    paired = -32.0 / W2 * (W * _trip1(uu, uu, wm2) - 6.0 * _trip1(uu, uu, w2m2)
                           + _trip1(b1, b1, wm2) / W - 12.0 / W2 * _trip1(b1, b1, w2m2)
                           + 3.0 * _trip1(dm2, dm2, w2m2))
    acc, cacc = _two_sum(acc, cacc, (own_d + own_e + paired) / 16.0)
    return eq, acc + cacc


@jit
def _replicate_block_loop(G, a, b, raw_c, s, jf, use_w, legacy, q_only,
                          known_shape, known_scale):
    n_studies, n_reps = G.shape
    out = np.full((N_FIELDS, n_reps), np.nan)
    wk = np.empty((24, n_studies))
    df_classic = n_studies - 1.0
    for r in range(n_reps):
        sw = cw = swg = cwg = 0.0
        for i in range(n_studies):
            g = G[i, r]
            wi = 1.0 / (a[i] + b[i] * g * g)
            wk[0, i] = wi
            sw, cw = _two_sum(sw, cw, wi)
            swg, cwg = _two_sum(swg, cwg, wi * g)
        g_w = (swg + cwg) / (sw + cw)
        q = 0.0
        cq = 0.0
        for i in range(n_studies):
            dev = G[i, r] - g_w
            q, cq = _two_sum(q, cq, wk[0, i] * dev * dev)
        q += cq
        out[0, r] = q
        if q_only:
            continue
        if use_w:
            g0 = g_w
        else:
            sa = ca = sag = cag = 0.0
            for i in range(n_studies):
                sa, ca = _two_sum(sa, ca, 1.0 / a[i])
                sag, cag = _two_sum(sag, cag, G[i, r] / a[i])
            g0 = (sag + cag) / (sa + ca)
        out[1, r] = g0
        out[4, r] = chi_square_sf(q, df_classic)
        eq, eq2 = _null_moments_loop(g0, a, b, raw_c, s, jf, legacy, wk)
        out[2, r] = eq
        out[3, r] = eq2
        if eq > 0.0:
            out[6, r] = chi_square_sf(q, eq)
            var = eq2 - eq * eq
            if var > 0.0:
                out[5, r] = gamma_sf(q, eq * eq / var, var / eq)
        if known_shape > 0.0:
            out[7, r] = gamma_sf(q, known_shape, known_scale)
    return out


def replicate_block_numba(G, design, use_w, legacy, q_only, known_shape, known_scale):
    if not NUMBA_ENABLED:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    return _replicate_block_loop(
        np.ascontiguousarray(G, dtype=np.float64), design.a, design.b, design.raw_c,
        design.s, design.j, use_w, legacy, q_only, known_shape, known_scale)


def replicate_block_numpy(G, design, use_w, legacy, q_only, known_shape, known_scale):
    n_studies, n_reps = G.shape
    out = np.full((N_FIELDS, n_reps), np.nan)
    a = design.a[:, None]
    b = design.b[:, None]
    w_hat = 1.0 / (a + b * G * G)
    big_w = _csum(w_hat)
    g_w = _csum(w_hat * G) / big_w
    q = _csum(w_hat * (G - g_w) ** 2)
    out[0] = q
    if q_only:
        return out
    if use_w:
        g0 = g_w
    else:
        inv_a = 1.0 / a
        g0 = _csum(inv_a * G) / _csum(inv_a)
    out[1] = g0
    out[4] = chi_square_sf_array(q, n_studies - 1.0)
    w, d, e = weight_derivatives(g0, a, b)
    m = _central_moments_core(design.raw_c[:, :, None], design.s[:, None],
                              design.j[:, None], g0)
    eq = _eq_total(w, d, e, m[0], m[1], m[2], legacy)
    eq2 = _eq2_total(w, d, e, m[0], m[1], m[2], m[3], m[4])
    out[2] = eq
    out[3] = eq2
    pos = eq > 0.0
    out[6] = np.where(pos, chi_square_sf_array(q, np.where(pos, eq, 1.0)), np.nan)
    var = eq2 - eq * eq
    ok = pos & (var > 0.0)
    safe_eq = np.where(ok, eq, 1.0)
    safe_var = np.where(ok, var, 1.0)
    out[5] = np.where(ok, gamma_sf_array(q, safe_eq ** 2 / safe_var, safe_var / safe_eq), np.nan)
    if known_shape > 0.0:
        out[7] = gamma_sf_array(q, known_shape, known_scale)
    return out


BACKENDS = {"numba": replicate_block_numba, "numpy": replicate_block_numpy}
