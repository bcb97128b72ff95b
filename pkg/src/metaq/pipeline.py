"""End-to-end homogeneity test for a set of two-arm studies."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import qmoments, smd
from .errors import DegenerateFitError
from .qmoments import StudyNullInputs
from .specfun import chi_square_sf, gamma_sf

log = logging.getLogger(__name__)

ESTIMATORS = ("w", "A")


@dataclass
class QTestReport:
    q_stat: float
    big_w: float
    g_combined: float
    estimator: str
    n_studies: int
    eq_corrected: float = None
    eq2_corrected: float = None
    gamma_shape: float = None
    gamma_scale: float = None
    p_chisq_classic: float = None
    p_chisq_fdf: float = None
    p_gamma: float = None
    p_bootstrap: float = None
    bootstrap_reps: int = None
    bootstrap_seed: int = None
    eq_form: str = "legacy"
    moments_unavailable: bool = False
    gamma_degenerate: bool = False
    warnings: list = field(default_factory=list)
    per_study: list = field(default_factory=list)

    @property
    def degraded(self):
        return self.moments_unavailable or self.gamma_degenerate


def cochran_q(records):
    """Return (Q, weighted mean effect, total weight)."""
    if len(records) < 2:
        raise ValueError("Cochran's Q needs at least 2 studies")
    w = np.array([r.weight for r in records])
    g = np.array([r.g for r in records])
    big_w = math.fsum(w)
    g_w = math.fsum(w * g) / big_w
    return math.fsum(w * (g - g_w) ** 2), g_w, big_w


def combined_effect_unbiased(records):
    """Mean of g with the fixed (non-random) weights 1/A."""
    inv_a = np.array([1.0 / r.a for r in records])
    g = np.array([r.g for r in records])
    return math.fsum(inv_a * g) / math.fsum(inv_a)


def combined_effect(records, estimator="w"):
    if estimator == "w":
        return cochran_q(records)[1]
    if estimator == "A":
        return combined_effect_unbiased(records)
    raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")


def null_inputs_at(records, g0):
    """Weights, weight derivatives and moments with every study set to ``g0``."""
    out = []
    for r in records:
        w, dw, d2w = smd.weight_derivatives(g0, r.a, r.b)
        out.append(StudyNullInputs(w, dw, d2w, smd.smd_central_moments(r.n_total, r.q, g0)))
    return out


def gamma_fit(m1, m2):
    """Shape and scale of the gamma law with mean ``m1`` and second moment ``m2``."""
    var = m2 - m1 * m1
    if not (m1 > 0 and var > 0):
        raise DegenerateFitError(
            f"gamma fit needs E[Q] > 0 and E[Q^2] > E[Q]^2 (got {m1!r}, {m2!r})")
    return m1 * m1 / var, var / m1


def run_homogeneity_test(studies, estimator="w", eq_form="legacy"):
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if len(studies) < 2:
        raise ValueError("the homogeneity test needs at least 2 studies")
    records = [smd.effect_record(s) for s in studies]
    q_stat, g_w, big_w = cochran_q(records)
    g0 = g_w if estimator == "w" else combined_effect_unbiased(records)
    k = len(records)
    report = QTestReport(q_stat, big_w, g0, estimator, k, eq_form=eq_form, per_study=records)
    report.p_chisq_classic = chi_square_sf(q_stat, k - 1.0)

    small = [r.study_id for r in records if r.n_total <= 8]
    if small:
        report.moments_unavailable = True
        msg = f"corrected moments need N > 8; studies {small} are too small"
        report.warnings.append(msg)
        log.warning(msg)
        return report

    inputs = null_inputs_at(records, g0)
    report.eq_corrected = qmoments.expected_q(inputs, form=eq_form)
    report.eq2_corrected = qmoments.expected_q2(inputs)
    if report.eq_corrected > 0:
        report.p_chisq_fdf = chi_square_sf(q_stat, report.eq_corrected)
    try:
        report.gamma_shape, report.gamma_scale = gamma_fit(report.eq_corrected,
                                                           report.eq2_corrected)
        report.p_gamma = gamma_sf(q_stat, report.gamma_shape, report.gamma_scale)
    except DegenerateFitError as exc:
        report.gamma_degenerate = True
        report.warnings.append(str(exc))
        log.warning("%s", exc)
    if report.eq_corrected > k - 1 or report.eq2_corrected > k * k - 1.0:
        msg = "corrected moments exceed the chi-square moments"
        report.warnings.append(msg)
        log.info(msg)
    return report
