"""Standardized mean difference: Hedges' g, its variance model and moments.

Scaled by sqrt(N q (1-q)) / J, the bias-corrected estimator g follows a
noncentral t law with N - 2 degrees of freedom and noncentrality
sqrt(N q (1-q)) * delta, where q = n_c / N. Everything below is derived
from that fact.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._accel import shared
from .errors import DataError, MomentExistenceError
from .qmoments import MomentProfile
from .specfun import ln_gamma

MAX_MOMENT = 6

# (2j)! / (2^j j!) * C(r, 2j): coefficient of ncp^(r-2j) in E[t^r]
_NCT_POLY = np.zeros((MAX_MOMENT + 1, MAX_MOMENT // 2 + 1))
for _r in range(MAX_MOMENT + 1):
    for _j in range(_r // 2 + 1):
        _NCT_POLY[_r, _j] = math.comb(_r, 2 * _j) * (
            math.factorial(2 * _j) // (2 ** _j * math.factorial(_j)))
_BINOM = np.array([[math.comb(r, k) for k in range(MAX_MOMENT + 1)]
                   for r in range(MAX_MOMENT + 1)], dtype=float)


@dataclass(frozen=True)
class StudySummary:
    id: str
    n_t: int
    mean_t: float
    sd_t: float
    n_c: int
    mean_c: float
    sd_c: float

    def __post_init__(self):
        if self.n_t < 2 or self.n_c < 2:
            raise DataError(f"study {self.id!r}: each arm needs at least 2 subjects")
        if not (self.sd_t >= 0 and self.sd_c >= 0):
            raise DataError(f"study {self.id!r}: standard deviations must be non-negative")

    @property
    def n_total(self):
        return self.n_t + self.n_c

    @property
    def q(self):
        return self.n_c / self.n_total


@dataclass(frozen=True)
class EffectRecord:
    study_id: str
    n_total: int
    q: float
    g: float
    j: float
    a: float
    b: float
    weight: float
    pooled_sd: float


@dataclass(frozen=True)
class NoncentralTParams:
    df: float
    ncp: float
    scale: float

    @classmethod
    def for_study(cls, n_total, q, delta):
        s = math.sqrt(n_total * q * (1.0 - q))
        return cls(n_total - 2.0, s * delta, bias_correction_j(n_total) / s)


# ln Gamma(x + 1/2) - ln Gamma(x) - ln(x)/2 = sum c_k / x^k, odd k
_RATIO_SERIES = ((1, -1 / 8), (3, 1 / 192), (5, -1 / 640), (7, 17 / 14336),
                 (9, -31 / 18432), (11, 691 / 180224))
_RATIO_SERIES_MIN_X = 12.0


def _ln_j(n_total):
    half = (n_total - 2) / 2.0
    x = half - 0.5
    if x < _RATIO_SERIES_MIN_X:
        return ln_gamma(half) - ln_gamma(x) - 0.5 * math.log(half)
    # the ln-gamma difference cancels badly for large N; the asymptotic
    # series keeps ln J to full relative precision
    return math.fsum(c / x ** k for k, c in _RATIO_SERIES) - 0.5 * math.log1p(0.5 / x)


def bias_correction_j(n_total):
    """Exact small-sample bias factor J for a study of total size N."""
    if n_total < 5:
        raise DataError(f"bias correction needs N >= 5, got {n_total}")
    return math.exp(_ln_j(n_total))


def variance_constants(n_total, q):
    """(A, B) in Var[g] = A + B * delta**2."""
    if n_total <= 4:
        raise DataError(f"variance of g needs N > 4, got {n_total}")
    ln_j = _ln_j(n_total)
    # k = (N-2) J^2 / (N-4) is 1 + O(1/N); expm1 avoids cancelling in B = k - 1
    ln_k = 2.0 * ln_j + math.log1p(2.0 / (n_total - 4))
    return math.exp(ln_k) / (n_total * q * (1.0 - q)), math.expm1(ln_k)


def effect_record(study):
    n = study.n_total
    if n <= 4:
        raise DataError(f"study {study.id!r}: variance of g needs N > 4, got {n}")
    pooled_var = ((study.n_t - 1) * study.sd_t ** 2
                  + (study.n_c - 1) * study.sd_c ** 2) / (n - 2)
    if not pooled_var > 0:
        raise DataError(f"study {study.id!r}: pooled standard deviation is zero")
    sp = math.sqrt(pooled_var)
    j = bias_correction_j(n)
    g = j * (study.mean_t - study.mean_c) / sp
    a, b = variance_constants(n, study.q)
    return EffectRecord(study.id, n, study.q, g, j, a, b, 1.0 / (a + b * g * g), sp)


@shared
def weight_derivatives(g, a, b):
    """Inverse-variance weight 1/(a + b g^2) and its first two derivatives in g."""
    w = 1.0 / (a + b * g * g)
    w2 = w * w
    return w, -2.0 * b * g * w2, -2.0 * b * w2 + 8.0 * b * b * g * g * w2 * w


def raw_moment_constants(n_total):
    """Gamma-ratio factors of E[t^r], r = 1..6, for df = N - 2 (r = 0 slot is 1).

    c_r = (df/2)^(r/2) Gamma((df-r)/2) / Gamma(df/2); c_1 = 1/J and
    c_r = c_(r-2) df / (df - r), which avoids differencing large ln-gammas.
    """
    df = n_total - 2.0
    out = np.full(MAX_MOMENT + 1, np.nan)
    out[0] = 1.0
    out[1] = 1.0 / bias_correction_j(n_total) if df > 1 else np.nan
    for r in range(2, MAX_MOMENT + 1):
        if r < df:
            out[r] = out[r - 2] * df / (df - r)
    return out


def noncentral_t_raw_moment(df, ncp, r):
    """E[t^r] for a noncentral t with ``df`` degrees of freedom, r = 1..6."""
    if not 1 <= r <= MAX_MOMENT:
        raise ValueError("r must be between 1 and 6")
    if not r < df:
        raise MomentExistenceError(f"E[t^{r}] does not exist for df = {df}")
    c = (df / 2.0) ** (r / 2.0) * math.exp(ln_gamma((df - r) / 2.0) - ln_gamma(df / 2.0))
    return c * sum(_NCT_POLY[r, j] * ncp ** (r - 2 * j) for j in range(r // 2 + 1))


@shared
def _central_moments_core(c, s, jf, delta):
    # c: (7, ...) raw-moment constants; s = sqrt(N q (1-q)); jf = J
    gam = s * delta
    raw = np.empty((MAX_MOMENT + 1,) + gam.shape)
    raw[0] = 1.0
    for r in range(1, MAX_MOMENT + 1):
        poly = gam * 0.0
        for j in range(r // 2 + 1):
            poly = poly + _NCT_POLY[r, j] * gam ** (r - 2 * j)
        raw[r] = c[r] * poly
    mu = raw[1]
    ratio = jf / s
    out = np.empty((MAX_MOMENT - 1,) + gam.shape)
    for r in range(2, MAX_MOMENT + 1):
        acc = gam * 0.0
        comp = gam * 0.0
        for k in range(r + 1):
            term = (-1.0) ** k * _BINOM[r, k] * mu ** k * raw[r - k]
            t = acc + term
            bp = t - acc
            comp = comp + ((acc - (t - bp)) + (term - bp))
            acc = t
        out[r - 2] = (acc + comp) * ratio ** r
    return out


def smd_central_moments(n_total, q, delta):
    """Central moments E[(g - delta)^r], r = 2..6, as a MomentProfile."""
    if n_total <= 8:
        raise MomentExistenceError(f"sixth moment of g needs N > 8, got {n_total}")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly between 0 and 1")
    c = raw_moment_constants(n_total)[:, None]
    s = np.array([math.sqrt(n_total * q * (1.0 - q))])
    jf = np.array([bias_correction_j(n_total)])
    m = _central_moments_core(c, s, jf, float(delta))[:, 0]
    return MomentProfile(*(float(x) for x in m))


@dataclass(frozen=True)
class DesignConstants:
    """Per-study constants that depend only on arm sizes (arrays over studies)."""

    n_total: np.ndarray
    q: np.ndarray
    j: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray
    raw_c: np.ndarray  # (7, I)

    @classmethod
    def from_sizes(cls, n_t, n_c):
        n_t = np.asarray(n_t, dtype=int)
        n_c = np.asarray(n_c, dtype=int)
        n = n_t + n_c
        q = n_c / n
        j = np.array([bias_correction_j(int(x)) for x in n])
        ab = np.array([variance_constants(int(x), qq) for x, qq in zip(n, q)])
        raw_c = np.stack([raw_moment_constants(int(x)) for x in n], axis=1)
        return cls(n, q, j, ab[:, 0], ab[:, 1], np.sqrt(n * q * (1.0 - q)), raw_c)

    @property
    def moments_available(self):
        return bool(np.all(self.n_total > 8))

    def central_moments(self, delta):
        """(5, I) array of m2..m6 at a common delta."""
        if not self.moments_available:
            raise MomentExistenceError("sixth moment of g needs N > 8 in every study")
        return _central_moments_core(self.raw_c, self.s, self.j, float(delta))
