import numpy as np
import pytest

from metaq import _accel, _kernels, pipeline, qmoments, simlab
from metaq.smd import DesignConstants, StudySummary

needs_numba = pytest.mark.skipif(not _accel.NUMBA_ENABLED, reason="numba disabled")


def block(sizes, delta, n, seed):
    design = DesignConstants.from_sizes([s[0] for s in sizes], [s[1] for s in sizes])
    rng = simlab.block_rng(seed, 0)
    return design, simlab._draw_block(rng, sizes, design, delta, 0.0, n, "direct")


@needs_numba
@pytest.mark.parametrize("use_w", [True, False])
@pytest.mark.parametrize("legacy", [True, False])
def test_numba_and_numpy_agree(use_w, legacy):
    sizes = [(12, 12), (10, 15), (30, 30), (50, 45)]
    design, G = block(sizes, 0.4, 500, 3)
    a = _kernels.replicate_block_numba(G, design, use_w, legacy, False, 5.0, 0.8)
    b = _kernels.replicate_block_numpy(G, design, use_w, legacy, False, 5.0, 0.8)
    assert a.shape == b.shape == (_kernels.N_FIELDS, 500)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


@needs_numba
def test_q_only_mode():
    design, G = block([(10, 10)] * 3, 0.0, 50, 1)
    a = _kernels.replicate_block_numba(G, design, True, True, True, np.nan, np.nan)
    b = _kernels.replicate_block_numpy(G, design, True, True, True, np.nan, np.nan)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)
    assert np.all(np.isnan(a[1:])) and np.all(np.isnan(b[1:]))


@pytest.mark.parametrize("backend", sorted(_kernels.BACKENDS))
def test_kernel_matches_pipeline(backend):
    if backend == "numba" and not _accel.NUMBA_ENABLED:
        pytest.skip("numba disabled")
    sizes = [(14, 14), (10, 10), (11, 9), (18, 12)]
    design, G = block(sizes, 0.3, 5, 9)
    out = _kernels.BACKENDS[backend](G, design, True, True, False, np.nan, np.nan)
    for r in range(5):
        # studies whose g equals the simulated value: unit SDs, mean difference g/J
        studies = [StudySummary(str(i), nt, G[i, r] / design.j[i], 1.0, nc, 0.0, 1.0)
                   for i, (nt, nc) in enumerate(sizes)]
        rep = pipeline.run_homogeneity_test(studies)
        assert out[0, r] == pytest.approx(rep.q_stat, rel=1e-11)
        assert out[1, r] == pytest.approx(rep.g_combined, rel=1e-11, abs=1e-14)
        assert out[2, r] == pytest.approx(rep.eq_corrected, rel=1e-11)
        assert out[3, r] == pytest.approx(rep.eq2_corrected, rel=1e-11)
        assert out[4, r] == pytest.approx(rep.p_chisq_classic, rel=1e-10)
        assert out[5, r] == pytest.approx(rep.p_gamma, rel=1e-10)
        assert out[6, r] == pytest.approx(rep.p_chisq_fdf, rel=1e-10)


def test_kernel_uses_shared_formulas():
    # the batched core applied to one column equals the scalar API
    sizes = [(20, 20), (25, 15), (40, 40)]
    design, G = block(sizes, 0.2, 3, 4)
    out = _kernels.replicate_block_numpy(G, design, True, False, False, np.nan, np.nan)
    g0 = out[1, 0]
    w, d, e = pipeline.smd.weight_derivatives(g0, design.a, design.b)
    m = design.central_moments(g0)
    inputs = [qmoments.StudyNullInputs(w[i], d[i], e[i], qmoments.MomentProfile(*m[:, i]))
              for i in range(3)]
    assert out[2, 0] == pytest.approx(qmoments.expected_q(inputs, "taylor"), rel=1e-13)


def test_numba_backend_refuses_when_disabled(monkeypatch):
    monkeypatch.setattr(_kernels, "NUMBA_ENABLED", False)
    design, G = block([(10, 10)] * 2, 0.0, 4, 0)
    with pytest.raises(RuntimeError):
        _kernels.replicate_block_numba(G, design, True, True, False, np.nan, np.nan)


@pytest.mark.parametrize("legacy", [True, False])
def test_scalar_moment_loop_matches_shared_formulas(legacy):
    rng = np.random.default_rng(21)
    for n_studies in (2, 3, 7):
        sizes = [(int(x), int(y)) for x, y in rng.integers(5, 60, size=(n_studies, 2))]
        design = DesignConstants.from_sizes([s[0] for s in sizes], [s[1] for s in sizes])
        for g0 in (0.0, 0.37, -1.2):
            wk = np.empty((24, n_studies))
            eq, eq2 = _kernels._null_moments_loop(g0, design.a, design.b, design.raw_c,
                                                  design.s, design.j, legacy, wk)
            w, d, e = pipeline.smd.weight_derivatives(g0, design.a, design.b)
            m = design.central_moments(g0)
            inputs = [qmoments.StudyNullInputs(w[i], d[i], e[i], qmoments.MomentProfile(*m[:, i]))
                      for i in range(n_studies)]
            form = "legacy" if legacy else "taylor"
            assert eq == pytest.approx(qmoments.expected_q(inputs, form), rel=1e-12)
            assert eq2 == pytest.approx(qmoments.expected_q2_direct(inputs), rel=1e-11)


def test_scalar_study_moments():
    design = DesignConstants.from_sizes([9, 30, 100], [12, 30, 50])
    out = np.empty(5)
    for delta in (0.0, 0.5, -2.0):
        m = design.central_moments(delta)
        for i in range(3):
            _kernels._study_moments(design.raw_c[:, i], design.s[i], design.j[i], delta, out)
            # the binomial expansion about the mean cancels more as s*delta
            # grows; both versions are ~1e-10 from exact (mpmath) at delta = -2
            np.testing.assert_allclose(out, m[:, i], rtol=1e-9, atol=0)


def test_compensated_helpers():
    x = np.array([1e16, 1.0, -1e16, 1.0])
    assert _kernels._sum1(x) == 2.0
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([4.0, 5.0, 6.0])
    c = np.array([7.0, 8.0, 9.0])
    brute2 = sum(a[i] * b[j] for i in range(3) for j in range(3) if i != j)
    brute3 = sum(a[i] * b[j] * c[k] for i in range(3) for j in range(3) for k in range(3)
                 if len({i, j, k}) == 3)
    assert _kernels._pair1(a, b) == brute2
    assert _kernels._trip1(a, b, c) == brute3
