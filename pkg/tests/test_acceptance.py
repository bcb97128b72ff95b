"""Acceptance criteria, one check per criterion.

Each check prints a single ``[PASS]``/``[FAIL]`` line with the failing items
spelled out; under pytest the lines are repeated in the terminal summary.
Run directly for the same report without pytest:

    python3 tests/test_acceptance.py
"""
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))
import oracles  # noqa: E402

from metaq import datasets, pipeline, qmoments, simlab, smd  # noqa: E402

RESULTS = {}


def within(label, got, want, tol):
    ok = got is not None and abs(got - want) <= tol
    return label, ok, f"got {got:.6g}, want {want} +/- {tol:g}" if got is not None else "missing"


def within_rel(label, got, want, rel):
    ok = abs(got - want) <= rel * abs(want)
    return label, ok, f"got {got:.6g}, want {want} +/- {100 * rel:g}%"


def report(num, title, checks):
    ok = all(c[1] for c in checks)
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} ({len(checks)} checks)"
    bad = [f"{label}: {detail}" for label, good, detail in checks if not good]
    if bad:
        line += " | " + "; ".join(bad)
    RESULTS[num] = line
    print(line)
    return ok, "\n".join(bad)


# -- 1, 2: worked examples -----------------------------------------------------------

def check_1():
    t0 = time.perf_counter()
    rep = pipeline.run_homogeneity_test(datasets.load_example("placebo").studies)
    elapsed = time.perf_counter() - t0
    checks = [
        within("Q", rep.q_stat, 22.07, 0.01),
        within("W", rep.big_w, 212.91, 0.05),
        within("g_w", rep.g_combined, -0.338, 0.001),
        within("E_f[Q]", rep.eq_corrected, 15.19, 0.02),
        within("E_f[Q^2]", rep.eq2_corrected, 257.57, 0.5),
        within("p_classic", rep.p_chisq_classic, 0.141, 0.001),
        within("p_fdf", rep.p_chisq_fdf, 0.112, 0.002),
        within("p_gamma", rep.p_gamma, 0.098, 0.003),
        ("runtime", elapsed < 1.0, f"{elapsed:.3f}s"),
    ]
    return report(1, "placebo-pain worked example", checks)


def check_2():
    t0 = time.perf_counter()
    rep = pipeline.run_homogeneity_test(datasets.load_example("light").studies)
    elapsed = time.perf_counter() - t0
    checks = [
        within("Q", rep.q_stat, 8.86, 0.01),
        within("g_w", rep.g_combined, 0.0437, 0.0005),
        within("E_f[Q]", rep.eq_corrected, 3.70, 0.01),
        within("E_f[Q^2]", rep.eq2_corrected, 19.37, 0.05),
        within("alpha", rep.gamma_shape, 2.41, 0.01),
        within("beta", rep.gamma_scale, 1.54, 0.01),
        within("p_classic", rep.p_chisq_classic, 0.065, 0.001),
        within("p_fdf", rep.p_chisq_fdf, 0.053, 0.002),
        within("p_gamma", rep.p_gamma, 0.037, 0.002),
        ("runtime", elapsed < 1.0, f"{elapsed:.3f}s"),
    ]
    return report(2, "light-therapy worked example", checks)


# -- 3: bootstrap ----------------------------------------------------------------------

def check_3():
    checks = []
    for name, want in (("placebo", 0.108), ("light", 0.050)):
        p = simlab.bootstrap_p_value(datasets.load_example(name).studies, reps=100_000, seed=1)
        checks.append(within(f"{name} p_bootstrap", p, want, 0.004))
    return report(3, "bootstrap p-values, 100000 reps", checks)


# -- 4: unequal-size null table --------------------------------------------------------

TABLE_SIZES = {60: (24, 32, 36, 40, 168), 100: (64, 72, 76, 80, 208),
               160: (124, 132, 136, 140, 268)}
# chi2 .05, gamma .05, fdf .05, chi2 .10, gamma .10, fdf .10, E_f(Q), Qbar, E_f(Q^2), Q2bar, s2
TABLE = {
    (5, 60): (0.041, 0.056, 0.048, 0.086, 0.107, 0.097, 3.8, 3.8, 21.1, 21.8, 7.2),
    (5, 100): (0.046, 0.051, 0.048, 0.095, 0.102, 0.099, 3.9, 3.9, 23.0, 23.2, 7.7),
    (5, 160): (0.050, 0.052, 0.051, 0.098, 0.101, 0.100, 4.0, 4.0, 23.5, 23.7, 7.9),
    (10, 60): (0.038, 0.057, 0.047, 0.081, 0.110, 0.098, 8.6, 8.6, 88.0, 90.4, 16.3),
    (10, 100): (0.045, 0.051, 0.049, 0.093, 0.102, 0.099, 8.8, 8.9, 95.0, 95.7, 17.3),
    (10, 160): (0.048, 0.051, 0.049, 0.095, 0.100, 0.098, 8.9, 8.9, 96.9, 96.7, 17.6),
    (20, 60): (0.034, 0.060, 0.048, 0.074, 0.113, 0.098, 18.0, 18.1, 356.3, 363.5, 34.5),
    (20, 100): (0.043, 0.051, 0.048, 0.088, 0.101, 0.097, 18.6, 18.6, 382.8, 383.0, 36.3),
    (20, 160): (0.046, 0.050, 0.049, 0.093, 0.100, 0.098, 18.8, 18.8, 390.3, 389.6, 37.1),
}
LEVEL_COLUMNS = [("chisq", 0.05), ("gamma", 0.05), ("fdf", 0.05),
                 ("chisq", 0.10), ("gamma", 0.10), ("fdf", 0.10)]


def table_config(n_studies, mean_n, reps, seed=1):
    sizes = [simlab.split_size(n) for n in TABLE_SIZES[mean_n]] * (n_studies // 5)
    return simlab.SimConfig(sizes, delta=0.5, reps=reps, seed=seed)


def check_4(reps=100_000, level_tol=0.004):
    checks = []
    for (n_studies, mean_n), row in TABLE.items():
        r = simlab.simulate(table_config(n_studies, mean_n, reps))
        tag = f"I={n_studies},N={mean_n}"
        for (m, a), want in zip(LEVEL_COLUMNS, row[:6]):
            checks.append(within(f"{tag} {m}@{a}", r.level(m, a), want, level_tol))
        checks.append(within_rel(f"{tag} Qbar", r.q_mean, row[7], 0.02))
        checks.append(within_rel(f"{tag} Q2bar", r.q2_mean, row[9], 0.04))
        checks.append(within_rel(f"{tag} s2", r.q_var, row[10], 0.06))
        checks.append(within(f"{tag} E_f(Q)", r.formula_eq, row[6], 0.05))
        checks.append(within(f"{tag} E_f(Q^2)", r.formula_eq2, row[8], 0.5))
    mode = "full" if reps >= 100_000 else "fast"
    return report("4" if mode == "full" else "4-fast",
                  f"unequal-size null table, {reps} reps ({mode} mode)", checks)


# -- 5, 6, 7: formula checks -----------------------------------------------------------

def check_5(per_size=40):
    rng = np.random.default_rng(5)
    checks, worst, n_configs = [], 0.0, 0
    for n_studies in (2, 3, 5):
        for _ in range(per_size):
            n_configs += 1
            a = rng.uniform(0.03, 0.6, n_studies)
            b = rng.uniform(0.005, 0.3, n_studies)
            theta = rng.uniform(-1.5, 1.5)
            prof = qmoments.MomentProfile(1.0, 0.0, 3.0, 0.0, 15.0)  # unused by derivatives
            inputs = [qmoments.StudyNullInputs(*smd.weight_derivatives(theta, ai, bi), prof)
                      for ai, bi in zip(a, b)]
            for kind, n_idx in qmoments.Q2_KINDS.items():
                if n_idx > n_studies:
                    continue
                idx = tuple(int(i) for i in rng.choice(n_studies, n_idx, replace=False))
                cf = qmoments.q2_partial_derivative(kind, idx, inputs)
                fd = float(oracles.q2_partial_fd(kind, idx, theta, a, b))
                rel = abs(fd - cf) / abs(cf)
                worst = max(worst, rel)
                if rel >= 1e-5:
                    checks.append((f"{kind}{idx} I={n_studies}", False, f"rel err {rel:.2e}"))
    checks.append(("configurations", n_configs >= 100, f"{n_configs}"))
    checks.append(("worst relative error", worst < 1e-5, f"{worst:.2e}"))
    return report(5, f"Q^2 derivative oracle, {n_configs} configs, worst rel err {worst:.1e}",
                  checks)


def check_6(trials=300):
    rng = np.random.default_rng(6)
    worst1 = worst2 = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        inputs, gam2 = [], []
        for _ in range(n):
            m2 = rng.uniform(0.01, 1.0)
            k = rng.uniform(0.0, 4.0)
            p = qmoments.MomentProfile(m2, rng.normal() * m2 ** 1.5, (3 + k) * m2 ** 2,
                                       rng.normal() * m2 ** 2.5, rng.uniform(20, 60) * m2 ** 3)
            inputs.append(qmoments.StudyNullInputs(1.0 / m2, 0.0, 0.0, p))
            gam2.append(p.kurtosis)
        w = np.array([s.w for s in inputs])
        u = 1.0 - w / w.sum()
        worst1 = max(worst1, abs(qmoments.expected_q(inputs) - (n - 1)))
        target = n * n - 1 + float(np.dot(gam2, u * u))
        worst2 = max(worst2, abs(qmoments.expected_q2(inputs) - target))
    checks = [("E[Q] = I - 1", worst1 < 1e-12, f"max abs err {worst1:.1e}"),
              ("E[Q^2] = I^2 - 1 + sum gamma2 U^2", worst2 < 1e-12, f"max abs err {worst2:.1e}")]
    return report(6, f"inverse-variance case, {trials} random sets", checks)


def check_7():
    worst = 0.0
    for n, q, d in itertools.product((10, 20, 30, 100), (0.25, 0.5, 0.75),
                                     (0.0, 0.2, 0.5, 1.0, 2.0)):
        a, b = smd.variance_constants(n, q)
        m2 = smd.smd_central_moments(n, q, d).m2
        worst = max(worst, abs(m2 - (a + b * d * d)) / (a + b * d * d))
    a, b = smd.variance_constants(28, 0.5)
    m2 = smd.smd_central_moments(28, 0.5, 0.8).m2
    worst = max(worst, abs(m2 - (a + b * 0.64)) / (a + b * 0.64))
    return report(7, "m2 equals A + B delta^2", [("grid", worst < 1e-10, f"max rel err {worst:.1e}")])


# -- 8, 9, 10: simulation properties ---------------------------------------------------

def check_8():
    r1, r2 = (np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(8).spawn(2))
    a = simlab.sample_study_g(20, 20, 0.5, r1, 100_000)
    b = simlab.sample_study_g_noncentral_t(20, 20, 0.5, r2, 100_000)
    ks = stats.ks_2samp(a, b).statistic
    return report(8, "sampler equivalence", [("K-S statistic", ks < 0.01, f"{ks:.4f}")])


def power_grid(reps=10_000, seed=9):
    out = {}
    for n_studies, n, tau2 in itertools.product((5, 20), (20, 40, 80), (0.0, 0.1, 0.25)):
        cfg = simlab.SimConfig.equal_sizes(n_studies, n, delta=0.5, tau2=tau2, reps=reps,
                                           seed=seed, sampler="noncentral_t")
        out[(n_studies, n, tau2)] = simlab.simulate(cfg)
    return out


def check_9():
    grid = power_grid()
    checks = []
    for (n_studies, n, tau2), r in grid.items():
        for a in (0.05, 0.10):
            f, c = r.level("fdf", a), r.level("chisq", a)
            se = math.hypot(r.mc_se_level[("fdf", a)], r.mc_se_level[("chisq", a)])
            checks.append((f"fdf>=classic I={n_studies},N={n},tau2={tau2},a={a}",
                           f >= c - 2 * se, f"fdf {f:.4f} classic {c:.4f}"))
    for n_studies, n in itertools.product((5, 20), (20, 40, 80)):
        for m, a in itertools.product(("chisq", "gamma", "fdf"), (0.05, 0.10)):
            p = [grid[(n_studies, n, t)].level(m, a) for t in (0.0, 0.1, 0.25)]
            checks.append((f"monotone {m} I={n_studies},N={n},a={a}",
                           p[0] <= p[1] <= p[2], " <= ".join(f"{x:.4f}" for x in p)))
    for tau2, a in itertools.product((0.1, 0.25), (0.05, 0.10)):
        gain = {n: grid[(20, n, tau2)].level("fdf", a) - grid[(20, n, tau2)].level("chisq", a)
                for n in (20, 80)}
        checks.append((f"gain N=20 > N=80 (I=20,tau2={tau2},a={a})", gain[20] > gain[80],
                       f"{gain[20]:.4f} vs {gain[80]:.4f}"))
    return report(9, "power properties", checks)


def check_10():
    cfg = simlab.SimConfig([simlab.split_size(n) for n in (24, 32, 36, 40, 168)], delta=0.5,
                           tau2=0.05, reps=9_000, seed=10, delta_known=True)
    checks = []
    backends = ["numpy"] + (["numba"] if simlab._accel.NUMBA_ENABLED else [])
    for backend in backends:
        runs = [simlab.simulate(cfg, threads=t, backend=backend) for t in (1, 2, 5)]
        checks.append((f"simulate {backend}", runs[0] == runs[1] == runs[2], "results differ"))
        qs = [simlab.simulate_q(cfg.study_sizes, 0.3, 7_000, 10, threads=t, backend=backend)
              for t in (1, 4)]
        checks.append((f"simulate_q {backend}", np.array_equal(qs[0], qs[1]), "Q draws differ"))
    boots = [simlab.bootstrap_p_value(datasets.load_example("light").studies, 6_000, 3, threads=t)
             for t in (1, 3)]
    checks.append(("bootstrap", boots[0] == boots[1], f"{boots}"))
    return report(10, "determinism across worker counts", checks)


CHECKS = [check_1, check_2, check_3, check_4, lambda: check_4(20_000, 0.01), check_5, check_6,
          check_7, check_8, check_9, check_10]


# -- pytest entry points ---------------------------------------------------------------

def _run(fn, *args):
    ok, detail = fn(*args)
    assert ok, detail


def test_criterion_1_placebo_example():
    _run(check_1)


def test_criterion_2_light_therapy_example():
    _run(check_2)


def test_criterion_3_bootstrap():
    _run(check_3)


def test_criterion_4_unequal_size_table():
    _run(check_4)


def test_criterion_4_fast_mode():
    _run(check_4, 20_000, 0.01)


def test_criterion_5_derivative_oracle():
    _run(check_5)


def test_criterion_6_inverse_variance_case():
    _run(check_6)


def test_criterion_7_second_moment_identity():
    _run(check_7)


def test_criterion_8_sampler_equivalence():
    _run(check_8)


def test_criterion_9_power_properties():
    _run(check_9)


def test_criterion_10_determinism():
    _run(check_10)


if __name__ == "__main__":
    failures = sum(not fn()[0] for fn in CHECKS)
    print(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    sys.exit(1 if failures else 0)
