"""The three competing outcome regressions and their reporting transforms.

All three regress the end-of-study count on the cumulative injected volume
(per bbl) with a log link:

  naive     Y ~ 1 + cumA                      (unweighted, model-based SE)
  adjusted  Y ~ 1 + cumA + cumL               (unweighted, model-based SE)
  msm       Y ~ 1 + cumA, weights SW_i        (sandwich SE, always)

Reports carry the per-bbl coefficient together with the relative risk per
1 MMbbl, exp(beta1 * 1e6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .glm import FitResult, fit_glm, sandwich_cov, wald_test
from .iptw import WeightSet, stabilized_weights
from .panel import PanelDataset

CI_MULTIPLIER = 1.959964  # two-sided 95% normal quantile, fixed (no t correction)
MMBBL = 1_000_000.0

ESTIMATOR_NAMES = ("naive", "adjusted", "msm")

REPORT_CSV_HEADER = [
    "estimator",
    "beta1_hat",
    "se",
    "ci_lo",
    "ci_hi",
    "relative_risk_per_MMbbl",
    "z",
    "p",
]


@dataclass(frozen=True)
class EstimatorReport:
    estimator: str
    beta1_hat: float
    se: float
    ci95: tuple[float, float]
    relative_risk_per_MMbbl: float
    z: float
    p: float
    intercept: float
    converged: bool

    def to_csv_row(self) -> list[str]:
        fmt = "{:.17g}".format
        return [
            self.estimator,
            fmt(self.beta1_hat),
            fmt(self.se),
            fmt(self.ci95[0]),
            fmt(self.ci95[1]),
            fmt(self.relative_risk_per_MMbbl),
            fmt(self.z),
            fmt(self.p),
        ]

    def to_text(self) -> str:
        lines = [
            f"estimator: {self.estimator}",
            f"beta1_hat: {self.beta1_hat:.17g}",
            f"se: {self.se:.17g}",
            f"ci95: [{self.ci95[0]:.17g}, {self.ci95[1]:.17g}]",
            f"relative_risk_per_MMbbl: {self.relative_risk_per_MMbbl:.17g}",
            f"z: {self.z:.17g}",
            f"p: {self.p:.17g}",
        ]
        return "\n".join(lines)


def relative_risk(beta1: float, scale: float = MMBBL) -> float:
    """exp(beta1 * scale); the per-MMbbl relative risk uses scale 1e6.

    Arguments beyond the float64 exp range saturate to inf instead of raising,
    so coefficient scales far from the per-bbl field scale stay reportable.
    """
    if not (scale > 0):
        raise DomainError(f"scale must be positive, got {scale!r}")
    arg = beta1 * scale
    if arg > 709.0:
        return math.inf
    return math.exp(arg)


def _report(name: str, fit: FitResult, se: float) -> EstimatorReport:
    beta1 = float(fit.coefficients[1])
    z, p = wald_test(beta1, se)
    half = CI_MULTIPLIER * se
    return EstimatorReport(
        estimator=name,
        beta1_hat=beta1,
        se=float(se),
        ci95=(beta1 - half, beta1 + half),
        relative_risk_per_MMbbl=relative_risk(beta1),
        z=z,
        p=p,
        intercept=float(fit.coefficients[0]),
        converged=fit.converged,
    )


def _check_units(data: PanelDataset) -> None:
    if data.n_units < 2:
        raise DomainError("outcome regressions require at least 2 units")


def naive_poisson(data: PanelDataset, *, robust: bool = False, hc1: bool = False) -> EstimatorReport:
    """Unadjusted Poisson regression of Y on cumulative volume."""
    _check_units(data)
    x = data.cum_treatment_vector()
    design = np.column_stack([np.ones(data.n_units), x])
    fit = fit_glm(design, data.outcome_vector(), "poisson", compute_robust=robust, hc1=hc1)
    se = fit.robust_se[1] if robust else fit.se[1]
    return _report("naive", fit, se)


def adjusted_poisson(data: PanelDataset, *, robust: bool = False, hc1: bool = False) -> EstimatorReport:
    """Poisson regression of Y on cumulative volume plus cumulative confounder.

    A confounder column that is constant across units is absorbed by the
    intercept and dropped, which reduces the fit to the naive design.
    """
    _check_units(data)
    x = data.cum_treatment_vector()
    cum_l = data.cum_confounder_vector()
    cols = [np.ones(data.n_units), x]
    if np.ptp(cum_l) > 0.0:
        cols.append(cum_l)
    design = np.column_stack(cols)
    fit = fit_glm(design, data.outcome_vector(), "poisson", compute_robust=robust, hc1=hc1)
    se = fit.robust_se[1] if robust else fit.se[1]
    return _report("adjusted", fit, se)


def msm_iptw(
    data: PanelDataset,
    *,
    weights: WeightSet | None = None,
    hc1: bool = False,
    truncate_percentile: float | None = None,
) -> EstimatorReport:
    """Marginal structural model: SW-weighted Poisson of Y on cumulative volume.

    The standard error is always the robust sandwich SE; the weighted-likelihood
    model SE is never reported.
    """
    _check_units(data)
    if weights is None:
        weights = stabilized_weights(data, truncate_percentile=truncate_percentile)
    sw = weights.per_unit_weights
    x = data.cum_treatment_vector()
    y = data.outcome_vector()
    design = np.column_stack([np.ones(data.n_units), x])
    fit = fit_glm(design, y, "poisson", weights=sw)
    fit.robust_cov = sandwich_cov(fit, design, y, sw, hc1=hc1)
    se = fit.robust_se[1]
    return _report("msm", fit, se)
