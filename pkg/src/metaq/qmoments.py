"""Null moments of Cochran's Q to order 1/n for one-parameter weights.

Each study enters through its null weight ``w = f(theta)``, the first two
derivatives of the weight function at the null, and the central moments
E[Theta^r], r = 2..6, of its effect estimator.

The array cores (``_eq_terms``, ``_eq2_terms``) take per-study arrays whose
*first* axis indexes studies. Trailing axes are batch axes, which is how
the numpy simulation path evaluates a whole block of replications at once;
the same functions compile under numba for 1-D inputs.
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from ._accel import shared


@dataclass(frozen=True)
class MomentProfile:
    """Central moments E[Theta^r], r = 2..6, of one effect estimator."""

    m2: float
    m3: float
    m4: float
    m5: float
    m6: float

    def __post_init__(self):
        if not (self.m2 > 0 and self.m4 > 0 and self.m6 > 0):
            raise ValueError("even central moments must be positive")
        if self.m4 < self.m2 ** 2 * (1.0 - 1e-12):
            raise ValueError("m4 < m2**2 violates Cauchy-Schwarz")

    @property
    def kurtosis(self):
        return self.m4 / self.m2 ** 2 - 3.0


@dataclass(frozen=True)
class StudyNullInputs:
    w: float
    dw: float
    d2w: float
    moments: MomentProfile

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("null weight must be positive")


@dataclass(frozen=True)
class AggregateWeights:
    W: float
    U: tuple

    @classmethod
    def from_weights(cls, w):
        w = np.asarray(w, dtype=float)
        W = float(_csum(w))
        return cls(W, tuple(1.0 - w / W))


# -- compensated sums over the study axis ------------------------------------

@shared
def _csum(x):
    # Neumaier-style running sum with branch-free TwoSum, over axis 0
    s = x[0] * 0.0
    comp = x[0] * 0.0
    for k in range(x.shape[0]):
        t = s + x[k]
        bp = t - s
        comp = comp + ((s - (t - bp)) + (x[k] - bp))
        s = t
    return s + comp


@shared
def _pair(a, b):
    # sum over i != j of a_i b_j
    return _csum(a) * _csum(b) - _csum(a * b)


@shared
def _trip(a, b, c):
    # sum over pairwise-distinct (i, j, k) of a_i b_j c_k
    sa = _csum(a)
    sb = _csum(b)
    sc = _csum(c)
    return (sa * sb * sc - _csum(a * b) * sc - _csum(a * c) * sb
            - _csum(b * c) * sa + 2.0 * _csum(a * b * c))


@shared
def _eq_terms(w, d, e, m2, m3, m4, legacy):
    W = _csum(w)
    U = 1.0 - w / W
    quadratic = _csum(w * U * m2)
    third = _csum(U * U * d * m3)
    fourth = _csum((-U * U * d * d / W + 0.5 * U * U * e) * m4)
    cross_u = -_csum(U * d * m2) ** 2 / W
    cross_w = -_csum(w * d * m2) ** 2 / W ** 3
    if legacy:
        mixed = -_csum(w * m2) * _csum((d * d - e / (2.0 * W)) * m2) / W ** 3
        sq_e = -_csum(w * w * e * m2 * m2) / (2.0 * W ** 3)
    else:
        mixed = -_csum(w * w * m2) * _csum((d * d - 0.5 * W * e) * m2) / W ** 3
        sq_e = -_csum(w * w * e * m2 * m2) / (2.0 * W ** 2)
    sq_d = _csum((1.0 - 2.0 * w / W + 3.0 * w * w / (W * W)) * d * d * m2 * m2) / W
    return quadratic, third, fourth, cross_u, cross_w, mixed, sq_d, sq_e


@shared
def _eq2_terms(w, d, e, m2, m3, m4, m5, m6):
    W = _csum(w)
    U = 1.0 - w / W
    W2 = W * W
    wm2 = w * m2
    w2m2 = w * w * m2

    d4_i = _csum(w * w * U * U * m4)
    d4_ij = _pair(w * U * m2, w * U * m2) + 2.0 / W2 * _pair(w2m2, w2m2)

    d5_i = 2.0 * _csum(w * U ** 3 * d * m5)
    d5_ij = (2.0 * _pair(U * U * d * m3, U * wm2)
             + 10.0 / W2 * _pair(U * w * d * m3, w2m2)
             - 4.0 / W * _pair(w * w * U * m3, U * d * m2)
             - 4.0 / W ** 3 * _pair(w ** 3 * m3, w * d * m2))

    d6_i = _csum(U ** 3 * ((U - 2.0 * w / W) * d * d + w * e) * m6)

    dd4 = d * d * m4
    ij_dd = -2.0 * W * (W2 * _pair(U * U * dd4, wm2)
                        - 4.0 * W * _pair(U * dd4, w2m2)
                        + 9.0 * _pair(U * w * dd4, w2m2))
    ij_e = W2 * (W2 * _pair(U * U * e * m4, wm2)
                 + _pair((6.0 * w - W) * U * e * m4, w2m2))
    ij_cross = -8.0 * W * (W2 * _pair(U * U * w * d * m4, d * m2)
                           + _pair((3.0 * w - W) * U * w * d * m4, w * d * m2))
    ij_dj = _pair(w ** 3 * (3.0 * w - 2.0 * W) * m4, d * d * m2)
    ij_ej = W2 * _pair(U * w ** 3 * m4, e * m2)
    d6_ij = (ij_dd + ij_e + ij_cross + ij_dj + ij_ej) / W ** 4

    x = d * d * m2
    y = e * m2
    u = U * d * m2
    v = w * d * m2
    z = d * m2
    own_d = -16.0 / W ** 4 * (2.0 * W * _trip(x, w2m2, wm2) - 9.0 * _trip(x, w2m2, w2m2))
    own_e = 8.0 / W ** 3 * (2.0 * W * _trip(y, w2m2, wm2) - 6.0 * _trip(y, w2m2, w2m2))
    paired = -32.0 / W2 * (W * _trip(u, u, wm2) - 6.0 * _trip(u, u, w2m2)
                           + _trip(v, v, wm2) / W - 12.0 / W2 * _trip(v, v, w2m2)
                           + 3.0 * _trip(z, z, w2m2))
    d6_ijk = (own_d + own_e + paired) / 16.0

    return d4_i, d4_ij, d5_i, d5_ij, d6_i, d6_ij, d6_ijk


@shared
def _eq_total(w, d, e, m2, m3, m4, legacy):
    t = _eq_terms(w, d, e, m2, m3, m4, legacy)
    return _csum(np.array([t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7]]))


@shared
def _eq2_total(w, d, e, m2, m3, m4, m5, m6):
    t = _eq2_terms(w, d, e, m2, m3, m4, m5, m6)
    return _csum(np.array([t[0], t[1], t[2], t[3], t[4], t[5], t[6]]))


# -- public API ---------------------------------------------------------------

EQ_TERM_NAMES = ("quadratic", "third", "fourth", "cross_u", "cross_w", "mixed", "sq_d", "sq_e")
EQ2_TERM_NAMES = ("d4_i", "d4_ij", "d5_i", "d5_ij", "d6_i", "d6_ij", "d6_ijk")
EQ_FORMS = ("legacy", "taylor")


def _arrays(inputs):
    if len(inputs) < 2:
        raise ValueError("need at least 2 studies")
    w = np.array([s.w for s in inputs], dtype=float)
    d = np.array([s.dw for s in inputs], dtype=float)
    e = np.array([s.d2w for s in inputs], dtype=float)
    m = np.array([[s.moments.m2, s.moments.m3, s.moments.m4, s.moments.m5, s.moments.m6]
                  for s in inputs], dtype=float).T
    return w, d, e, m


def _check_form(form):
    if form not in EQ_FORMS:
        raise ValueError(f"form must be one of {EQ_FORMS}, got {form!r}")
    return form == "legacy"


def expected_q_terms(inputs, form="legacy"):
    """Named terms of the 1/n expansion of E[Q].

    ``form="legacy"`` is the standard closed form, the one the reference
    worked examples and simulation tables use. ``form="taylor"`` is the closed
    form that agrees term by term with the second-, third- and fourth-order
    Taylor expansion of Q; it differs from the legacy form only in the
    ``mixed`` and ``sq_e`` terms.
    """
    legacy = _check_form(form)
    w, d, e, m = _arrays(inputs)
    vals = _eq_terms(w, d, e, m[0], m[1], m[2], legacy)
    return dict(zip(EQ_TERM_NAMES, (float(v) for v in vals)))


def expected_q(inputs, form="legacy"):
    legacy = _check_form(form)
    w, d, e, m = _arrays(inputs)
    return float(_eq_total(w, d, e, m[0], m[1], m[2], legacy))


def expected_q2_terms(inputs):
    w, d, e, m = _arrays(inputs)
    vals = _eq2_terms(w, d, e, *m)
    return dict(zip(EQ2_TERM_NAMES, (float(v) for v in vals)))


def expected_q2(inputs):
    w, d, e, m = _arrays(inputs)
    return float(_eq2_total(w, d, e, *m))


Q2_KINDS = {
    "d4_iiii": 1, "d4_iijj": 2, "d5_iiiii": 1, "d5_iiijj": 2,
    "d6_iiiiii": 1, "d6_iiiijj": 2, "d6_iijjkk": 3,
}


def q2_partial_derivative(kind, indices, inputs):
    """Closed-form partial derivative of Q^2 at the null.

    For ``d5_iiijj`` and ``d6_iiiijj`` the first index carries the higher
    order. ``d4_iijj`` and ``d6_iijjkk`` are symmetric in their indices.
    """
    if kind not in Q2_KINDS:
        raise ValueError(f"unknown derivative kind {kind!r}")
    indices = tuple(int(i) for i in indices)
    if len(indices) != Q2_KINDS[kind]:
        raise ValueError(f"{kind} takes {Q2_KINDS[kind]} indices")
    if len(set(indices)) != len(indices):
        raise ValueError(f"{kind} requires distinct indices, got {indices}")
    w = [s.w for s in inputs]
    f1 = [s.dw for s in inputs]
    f2 = [s.d2w for s in inputs]
    W = sum(w)
    U = [1.0 - x / W for x in w]

    if kind == "d4_iiii":
        (i,) = indices
        return 24.0 * w[i] ** 2 * U[i] ** 2
    if kind == "d4_iijj":
        i, j = indices
        return 8.0 * w[i] * w[j] * (U[i] * U[j] + 2.0 * w[i] * w[j] / W ** 2)
    if kind == "d5_iiiii":
        (i,) = indices
        return 240.0 * w[i] * U[i] ** 3 * f1[i]
    if kind == "d5_iiijj":
        i, j = indices
        return (24.0 * U[i] * w[j] * (U[i] * U[j] + 5.0 * w[i] * w[j] / W ** 2) * f1[i]
                - 48.0 * w[i] ** 2 / W * (U[i] * U[j] + w[i] * w[j] / W ** 2) * f1[j])
    if kind == "d6_iiiiii":
        (i,) = indices
        return 720.0 * U[i] ** 3 * ((U[i] - 2.0 * w[i] / W) * f1[i] ** 2 + w[i] * f2[i])
    if kind == "d6_iiiijj":
        i, j = indices
        wi, wj, Ui = w[i], w[j], U[i]
        return 48.0 / W ** 4 * (
            -2.0 * W * Ui * wj * (W ** 2 * Ui - 4.0 * W * wj + 9.0 * wi * wj) * f1[i] ** 2
            + W ** 2 * Ui * wj * (W ** 2 - W * wj - W * wi + 6.0 * wi * wj) * f2[i]
            - 8.0 * W * Ui * wi * (W ** 2 * Ui - W * wj + 3.0 * wi * wj) * f1[i] * f1[j]
            + wi ** 3 * (-2.0 * W + 3.0 * wi) * f1[j] ** 2
            + W ** 2 * Ui * wi ** 3 * f2[j])
    i, j, k = indices
    total = 0.0
    for a, b, c in ((i, j, k), (j, i, k), (k, i, j)):
        # ``a`` carries the squared first derivative / second derivative
        total += -16.0 * w[b] * w[c] / W ** 4 * (W * w[b] + W * w[c] - 9.0 * w[b] * w[c]) * f1[a] ** 2
        total += 8.0 * w[b] * w[c] / W ** 3 * (W * w[b] + W * w[c] - 6.0 * w[b] * w[c]) * f2[a]
    for a, b, c in ((i, j, k), (i, k, j), (j, k, i)):
        # ``c`` is the study without a derivative factor
        total += -32.0 * w[c] / W ** 2 * (
            U[a] * U[b] * (W - 6.0 * w[c]) + w[a] * w[b] / W ** 2 * (W - 12.0 * w[c]) + 3.0 * w[c]
        ) * f1[a] * f1[b]
    return total


def expected_q2_direct(inputs):
    """E[Q^2] by explicit double and triple sums; O(I^3) reference."""
    n = len(inputs)
    if n < 2:
        raise ValueError("need at least 2 studies")
    m = [s.moments for s in inputs]
    total = 0.0
    for i in range(n):
        total += q2_partial_derivative("d4_iiii", (i,), inputs) * m[i].m4 / 24.0
        total += q2_partial_derivative("d5_iiiii", (i,), inputs) * m[i].m5 / 120.0
        total += q2_partial_derivative("d6_iiiiii", (i,), inputs) * m[i].m6 / 720.0
    for i, j in permutations(range(n), 2):
        total += q2_partial_derivative("d4_iijj", (i, j), inputs) * m[i].m2 * m[j].m2 / 8.0
        total += q2_partial_derivative("d5_iiijj", (i, j), inputs) * m[i].m3 * m[j].m2 / 12.0
        total += q2_partial_derivative("d6_iiiijj", (i, j), inputs) * m[i].m4 * m[j].m2 / 48.0
    for i, j, k in permutations(range(n), 3):
        total += (q2_partial_derivative("d6_iijjkk", (i, j, k), inputs)
                  * m[i].m2 * m[j].m2 * m[k].m2 / 48.0)
    return total
