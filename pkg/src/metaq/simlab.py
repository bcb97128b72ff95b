"""Monte Carlo harness: achieved levels, power and moments of Q.

Replications are grouped in fixed-size blocks. Block ``k`` draws from its
own Philox stream keyed by ``(seed, k)``, so results do not depend on how
many worker threads process the blocks; block partial sums are combined in
block order.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accel, _kernels, pipeline, qmoments
from .errors import DataError
from .smd import DesignConstants, bias_correction_j, weight_derivatives

BLOCK_SIZE = 2000
METHODS = ("chisq", "gamma", "gamma_known", "fdf")
SAMPLERS = ("auto", "direct", "noncentral_t")
_P_FIELD = {"chisq": 4, "gamma": 5, "fdf": 6, "gamma_known": 7}
THREADS_ENV = "METAQ_THREADS"


def default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class SimConfig:
    study_sizes: list
    delta: float = 0.0
    tau2: float = 0.0
    reps: int = 100_000
    seed: int = 0
    alpha_levels: tuple = (0.05, 0.10)
    estimator: str = "w"
    delta_known: bool = False
    sampler: str = "auto"
    eq_form: str = "legacy"

    def __post_init__(self):
        self.study_sizes = [(int(nt), int(nc)) for nt, nc in self.study_sizes]
        self.alpha_levels = tuple(float(x) for x in self.alpha_levels)
        if len(self.study_sizes) < 2:
            raise DataError("a simulated meta-analysis needs at least 2 studies")
        if any(nt < 2 or nc < 2 for nt, nc in self.study_sizes):
            raise DataError("each arm needs at least 2 subjects")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.tau2 < 0:
            raise ValueError("tau2 must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.estimator not in pipeline.ESTIMATORS:
            raise ValueError(f"estimator must be one of {pipeline.ESTIMATORS}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if any(not 0 < a < 1 for a in self.alpha_levels):
            raise ValueError("alpha levels must lie in (0, 1)")

    @property
    def resolved_sampler(self):
        if self.sampler != "auto":
            return self.sampler
        return "noncentral_t" if self.tau2 > 0 else "direct"

    @classmethod
    def equal_sizes(cls, n_studies, n_total, q=0.5, **kw):
        return cls([split_size(n_total, q)] * n_studies, **kw)


def split_size(n_total, q=0.5):
    """(n_t, n_c) with a fraction ``q`` of the study in the control arm."""
    n_c = int(round(q * n_total))
    return n_total - n_c, n_c


@dataclass
class SimResult:
    reps: int
    achieved_levels: dict
    mc_se_level: dict
    q_mean: float
    q2_mean: float
    q_var: float
    formula_eq: float
    formula_eq2: float
    n_degenerate: dict = field(default_factory=dict)
    backend: str = ""

    @property
    def formula_var(self):
        return self.formula_eq2 - self.formula_eq ** 2

    def level(self, method, alpha):
        return self.achieved_levels[(method, float(alpha))]


# -- samplers -------------------------------------------------------------------

def _j_of(n):
    return np.array([bias_correction_j(int(x)) for x in n])


def sample_study_g(n_t, n_c, delta, rng, size=None, j=None):
    """Hedges' g from simulated arm means and variances with unit sigma."""
    n_t = np.asarray(n_t)
    n_c = np.asarray(n_c)
    n = n_t + n_c
    if j is None:
        j = np.reshape(_j_of(n.ravel()), n.shape)
    xc = rng.standard_normal(size) / np.sqrt(n_c)
    xt = delta + rng.standard_normal(size) / np.sqrt(n_t)
    vc = rng.gamma((n_c - 1) / 2.0, 2.0, size)
    vt = rng.gamma((n_t - 1) / 2.0, 2.0, size)
    sp = np.sqrt((vc + vt) / (n - 2))
    return j * (xt - xc) / sp


def sample_study_g_noncentral_t(n_t, n_c, delta_i, rng, size=None, j=None):
    """Hedges' g drawn as a scaled noncentral t variate."""
    n_t = np.asarray(n_t)
    n_c = np.asarray(n_c)
    n = n_t + n_c
    if j is None:
        j = np.reshape(_j_of(n.ravel()), n.shape)
    s = np.sqrt(n_t * n_c / n)
    z = rng.standard_normal(size)
    v = rng.gamma((n - 2) / 2.0, 2.0, size)
    t = (z + s * delta_i) / np.sqrt(v / (n - 2))
    return j * t / s


# -- block machinery -------------------------------------------------------------

def block_rng(seed, block):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _draw_block(rng, sizes, design, delta, tau2, n_reps, sampler):
    n_studies = len(sizes)
    shape = (n_studies, n_reps)
    n_t = np.array([x[0] for x in sizes])[:, None]
    n_c = np.array([x[1] for x in sizes])[:, None]
    j = design.j[:, None]
    if tau2 > 0:
        deltas = delta + math.sqrt(tau2) * rng.standard_normal(shape)
    else:
        deltas = delta
    if sampler == "direct":
        return sample_study_g(n_t, n_c, deltas, rng, shape, j)
    return sample_study_g_noncentral_t(n_t, n_c, deltas, rng, shape, j)


def _run_blocks(task, reps, threads):
    n_blocks = -(-reps // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, reps - k * BLOCK_SIZE) for k in range(n_blocks)]
    threads = threads or default_threads()
    if threads == 1 or n_blocks == 1:
        return [task(k, n) for k, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(n_blocks), sizes))


def _resolve_backend(backend):
    backend = backend or _accel.default_backend()
    if backend not in _kernels.BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    return backend


def formula_moments(design, delta, eq_form="legacy"):
    """Corrected E[Q], E[Q^2] for a design with every study at ``delta``."""
    w, d, e = weight_derivatives(float(delta), design.a, design.b)
    m = design.central_moments(delta)
    inputs = [qmoments.StudyNullInputs(w[i], d[i], e[i], qmoments.MomentProfile(*m[:, i]))
              for i in range(len(w))]
    return qmoments.expected_q(inputs, form=eq_form), qmoments.expected_q2(inputs)


def simulate(config, threads=None, backend=None):
    backend = _resolve_backend(backend)
    kernel = _kernels.BACKENDS[backend]
    sizes = config.study_sizes
    design = DesignConstants.from_sizes([x[0] for x in sizes], [x[1] for x in sizes])
    if not design.moments_available:
        raise DataError("corrected moments need N > 8 in every simulated study")
    legacy = config.eq_form == "legacy"
    f_eq, f_eq2 = formula_moments(design, config.delta, config.eq_form)
    known_shape = known_scale = math.nan
    if config.delta_known:
        known_shape, known_scale = pipeline.gamma_fit(f_eq, f_eq2)
    methods = [m for m in METHODS if m != "gamma_known" or config.delta_known]
    alphas = np.array(config.alpha_levels)
    sampler = config.resolved_sampler

    def task(k, n):
        rng = block_rng(config.seed, k)
        G = _draw_block(rng, sizes, design, config.delta, config.tau2, n, sampler)
        out = kernel(G, design, config.estimator == "w", legacy, False,
                     known_shape, known_scale)
        q = out[0]
        counts = {}
        for m in methods:
            p = out[_P_FIELD[m]]
            counts[m] = ((p[:, None] <= alphas[None, :]).sum(axis=0),
                         int(np.isnan(p).sum()))
        return math.fsum(q), math.fsum(q * q), counts

    parts = _run_blocks(task, config.reps, threads)
    reps = config.reps
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    levels, se, degenerate = {}, {}, {}
    for m in methods:
        hits = sum(p[2][m][0] for p in parts)
        degenerate[m] = sum(p[2][m][1] for p in parts)
        for a, h in zip(config.alpha_levels, hits):
            rate = int(h) / reps
            levels[(m, a)] = rate
            se[(m, a)] = math.sqrt(rate * (1.0 - rate) / reps)
    q_var = (s2 - s1 * s1 / reps) / (reps - 1) if reps > 1 else 0.0
    return SimResult(reps, levels, se, s1 / reps, s2 / reps, q_var, f_eq, f_eq2,
                     degenerate, backend)


def simulate_q(study_sizes, delta, reps, seed, threads=None, backend=None, sampler="direct"):
    """Raw simulated Q values under the null, in replication order."""
    backend = _resolve_backend(backend)
    kernel = _kernels.BACKENDS[backend]
    design = DesignConstants.from_sizes([x[0] for x in study_sizes],
                                        [x[1] for x in study_sizes])

    def task(k, n):
        G = _draw_block(block_rng(seed, k), study_sizes, design, delta, 0.0, n, sampler)
        return kernel(G, design, True, True, True, math.nan, math.nan)[0]

    return np.concatenate(_run_blocks(task, reps, threads))


def bootstrap_p_value(studies, reps=100_000, seed=0, threads=None, backend=None):
    """Share of Q values simulated at the fitted common effect that reach the observed Q."""
    if len(studies) < 2:
        raise DataError("need at least 2 studies")
    records = [pipeline.smd.effect_record(s) for s in studies]
    q_obs, g_w, _ = pipeline.cochran_q(records)
    sizes = [(s.n_t, s.n_c) for s in studies]
    q_sim = simulate_q(sizes, g_w, reps, seed, threads, backend)
    return float(np.count_nonzero(q_sim >= q_obs)) / reps
