"""Closed-form and quadrature evaluation of the ruin asymptotics.

Every prediction is the large-capital limit of a simulable quantity:

* ``predict_ruin_constant``: lim e^{alpha u} P(ruin with tax), equal to
  Upsilon * kappa_hat(0, alpha) * integral of e^{-alpha hhat(t)} dt.  For a
  constant rate gamma this collapses to
  Upsilon * kappa_hat(0, alpha) / kappa_hat(0, alpha (1 - gamma)).
* ``predict_ruin_ratio``: the same quantity divided by the no-tax limit;
  the normalization and Upsilon cancel, so it works for any supported model.
* ``predict_edpf``: limit of the discounted penalty
  E[e^{-lam depth + eta overshoot - delta duration} | ruin], equal to
  alpha (kappa(delta, lam - alpha) - kappa(delta, -eta)) / (q (eta + lam - alpha)).
* ``predict_tax_value``: limit of the expected discounted tax conditional on
  ruin; gamma / (alpha (1 - gamma) + phi_hat(delta)) for constant rates on
  spectrally positive models, exact piecewise integrals for step policies,
  and the harmonic-ramp closed forms with their finiteness thresholds.
* ``predict_joint_density``: the limiting joint density of (depth, overshoot,
  undershoot) for the exponential-claims model, supported on
  undershoot >= depth.

Values are +inf exactly when the relevant finiteness condition fails; the
condition is echoed on the Prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import exp1

from .errors import NeedsEmpiricalUpsilon, ParameterError, UnsupportedModel
from .model import (
    EMPIRICAL,
    BrownianDrift,
    CramerLundberg,
    ModelSpec,
    TwoSided,
    cramer_upsilon,
    ladder_exponents,
    lundberg_root,
    phi_hat,
)
from .tax import Constant, HarmonicRamp, Table, TaxPolicy

__all__ = [
    "Prediction",
    "predict_ruin_constant",
    "predict_ruin_ratio",
    "predict_edpf",
    "predict_tax_value",
    "predict_joint_density",
    "joint_total_mass",
    "joint_law_references",
    "q_consistency",
    "hhat_exponential_integral",
]


@dataclass(frozen=True)
class Prediction:
    """An analytic limit value with provenance."""

    value: float
    formula: str
    finite: bool
    condition: str = ""
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.finite and not self.value >= 0:
            raise ParameterError(f"prediction must be nonnegative, got {self.value}")


def _is_spectrally_positive(model: ModelSpec) -> bool:
    return getattr(model, "spectrally_positive", False)


def hhat_exponential_integral(policy: TaxPolicy, alpha: float) -> float:
    """integral_0^inf e^{-alpha hhat(t)} dt, exactly; +inf when divergent.

    This is the policy-dependent factor of the taxed ruin constant under the
    spectrally positive normalization.  Constant and step policies integrate
    piecewise-exponentially; the harmonic ramp has the closed form with the
    alpha*beta > 1 threshold.
    """
    if isinstance(policy, Constant):
        if policy.gamma >= 1.0:
            return math.inf
        return 1.0 / (alpha * (1.0 - policy.gamma))
    if isinstance(policy, HarmonicRamp):
        ab = alpha * policy.beta
        if ab <= 1.0:
            return math.inf
        return (ab - 1.0 + math.exp(-ab)) / (alpha * (ab - 1.0))
    if isinstance(policy, Table):
        edges = (0.0,) + policy.breakpoints
        total = 0.0
        h = 0.0
        for i, gamma in enumerate(policy.rates):
            slope = 1.0 - gamma
            last = i == len(policy.rates) - 1
            if last:
                if slope <= 0.0:
                    return math.inf
                total += math.exp(-alpha * h) / (alpha * slope)
            else:
                w = edges[i + 1] - edges[i]
                if slope > 0.0:
                    total += math.exp(-alpha * h) * -math.expm1(-alpha * slope * w) / (alpha * slope)
                else:
                    total += w * math.exp(-alpha * h)
                h += slope * w
        return total
    raise UnsupportedModel(f"unknown policy {policy!r}")


def predict_ruin_constant(
    model: ModelSpec, policy: TaxPolicy, upsilon: float | None = None
) -> Prediction:
    """Limit of e^{alpha u} P(ruin with tax) as u grows.

    Constant policies work on any supported model; depth-dependent policies
    require a spectrally positive model (deterministic taxed ladder height).
    ``upsilon`` overrides the Cramer constant for models where it must be
    calibrated empirically.
    """
    alpha = lundberg_root(model)
    ups = upsilon if upsilon is not None else cramer_upsilon(model)
    if ups is EMPIRICAL:
        raise NeedsEmpiricalUpsilon(
            "supply upsilon= from estimate_upsilon() for the two-sided model"
        )
    le = ladder_exponents(model)
    kh_alpha = le.kappa_hat(0.0, alpha)
    inputs = {"model": model, "policy": policy, "alpha": alpha, "upsilon": ups}

    if isinstance(policy, Constant):
        gamma = policy.gamma
        if gamma >= 1.0:
            return Prediction(
                value=math.inf,
                formula="taxed Cramer constant (constant rate)",
                finite=False,
                condition="gamma < 1",
                inputs=inputs,
            )
        value = ups * kh_alpha / le.kappa_hat(0.0, alpha * (1.0 - gamma))
        return Prediction(
            value=value,
            formula="taxed Cramer constant (constant rate)",
            finite=True,
            condition="gamma < 1",
            inputs=inputs,
        )

    if not _is_spectrally_positive(model):
        raise UnsupportedModel(
            "depth-dependent policies need a spectrally positive model"
        )
    integral = hhat_exponential_integral(policy, alpha)
    if isinstance(policy, HarmonicRamp):
        condition = "alpha * beta > 1"
    else:
        condition = "tail rate < 1"
    if math.isinf(integral):
        return Prediction(
            value=math.inf,
            formula="taxed Cramer constant (ladder integral)",
            finite=False,
            condition=condition,
            inputs=inputs,
        )
    return Prediction(
        value=ups * kh_alpha * integral,
        formula="taxed Cramer constant (ladder integral)",
        finite=True,
        condition=condition,
        inputs=inputs,
    )


def predict_ruin_ratio(model: ModelSpec, gamma: float) -> Prediction:
    """Limit of P(ruin with constant tax gamma) / P(ruin without tax).

    Normalization-free: equals kappa_hat(0, alpha)/kappa_hat(0, alpha(1-gamma)),
    which is 1/(1-gamma) for spectrally positive models.
    """
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    alpha = lundberg_root(model)
    le = ladder_exponents(model)
    value = le.kappa_hat(0.0, alpha) / le.kappa_hat(0.0, alpha * (1.0 - gamma))
    return Prediction(
        value=value,
        formula="taxed/untaxed ruin probability ratio",
        finite=True,
        condition="gamma < 1",
        inputs={"model": model, "gamma": gamma, "alpha": alpha},
    )


def predict_edpf(
    model: ModelSpec, lam_pen: float, eta: float, delta_pen: float
) -> Prediction:
    """Limiting discounted penalty conditional on ruin.

    Requires eta <= alpha and eta + lam - alpha != 0.  The alpha/q prefactor
    cancels the local-time normalization; at (0, 0, 0) the value is exactly 1.
    """
    alpha = lundberg_root(model)
    if lam_pen < 0 or delta_pen < 0:
        raise ParameterError("penalty rates must be nonnegative")
    if eta > alpha:
        raise ParameterError(f"eta={eta} must not exceed alpha={alpha}")
    if abs(eta + lam_pen - alpha) < 1e-12:
        raise ParameterError("eta + lambda - alpha must be nonzero")
    le = ladder_exponents(model)
    value = (
        alpha
        * (le.kappa(delta_pen, lam_pen - alpha) - le.kappa(delta_pen, -eta))
        / (le.q * (eta + lam_pen - alpha))
    )
    return Prediction(
        value=value,
        formula="discounted penalty limit",
        finite=True,
        inputs={
            "model": model,
            "lam_pen": lam_pen,
            "eta": eta,
            "delta_pen": delta_pen,
            "alpha": alpha,
        },
    )


def _table_tax_numerator(policy: Table, alpha: float, phi: float) -> float:
    """integral_0^inf e^{-alpha hhat(t)} (integral_0^t rate(r) e^{-phi r} dr) dt.

    Piecewise closed form: on each step the outer factor is exponential in t
    and the inner integral is constant-plus-exponential (phi > 0) or
    constant-plus-linear (phi == 0).
    """

    def g0(r: float, w: float) -> float:
        if r > 0:
            return -math.expm1(-r * w) / r if math.isfinite(w) else 1.0 / r
        return w

    def g1(r: float, w: float) -> float:
        if r > 0:
            if math.isfinite(w):
                return (1.0 - (1.0 + r * w) * math.exp(-r * w)) / r**2
            return 1.0 / r**2
        return 0.5 * w * w

    edges = (0.0,) + policy.breakpoints
    h = 0.0
    inner = 0.0
    total = 0.0
    for i, gamma in enumerate(policy.rates):
        slope = 1.0 - gamma
        last = i == len(policy.rates) - 1
        lo = edges[i]
        w = math.inf if last else edges[i + 1] - lo
        r = alpha * slope
        outer = math.exp(-alpha * h)
        if phi == 0.0:
            # inner(t) = inner + gamma (t - lo)
            piece = outer * (inner * g0(r, w) + gamma * g1(r, w))
        else:
            # inner(t) = [inner + gamma e^{-phi lo}/phi] - (gamma/phi) e^{-phi t}
            a_const = inner + gamma * math.exp(-phi * lo) / phi
            piece = outer * (
                a_const * g0(r, w) - (gamma / phi) * math.exp(-phi * lo) * g0(r + phi, w)
            )
        if math.isinf(piece) or math.isnan(piece):
            return math.inf
        total += piece
        if not last:
            h += slope * w
            if phi == 0.0:
                inner += gamma * w
            else:
                inner += gamma * (math.exp(-phi * lo) - math.exp(-phi * edges[i + 1])) / phi
    return total


def _harmonic_tax_numerator(policy: HarmonicRamp, alpha: float, phi: float) -> float:
    """Discounted-tax numerator for the harmonic ramp, phi > 0.

    Splits the inner integral at its limit so the remaining quadrature has an
    exponentially decaying integrand.
    """
    beta = policy.beta
    ab = alpha * beta
    inner_limit = math.exp(-phi * beta) / phi - beta * exp1(phi * beta)
    # tail part of integral e^{-alpha hhat}: exact from the closed form
    d_total = (ab - 1.0 + math.exp(-ab)) / (alpha * (ab - 1.0))
    d_below = -math.expm1(-ab) / alpha
    d_tail = d_total - d_below

    def remainder(t: float) -> float:
        # inner_limit - inner(t) collapses to the exponentially decaying tail
        rem = math.exp(-phi * t) / phi - beta * exp1(phi * t)
        hh = beta + beta * math.log(t / beta)
        return math.exp(-alpha * hh) * rem

    hi = beta + 60.0 / phi
    corr, _ = quad(remainder, beta, hi, epsabs=1e-12, limit=200)
    return inner_limit * d_tail - corr


def predict_tax_value(model: ModelSpec, policy: TaxPolicy, delta: float) -> Prediction:
    """Limit of the expected discounted tax paid up to ruin, given ruin.

    Spectrally positive models only.  Constant rates give
    gamma / (alpha (1 - gamma) + phi_hat(delta)); depth-dependent policies
    divide the exact (or quadrature) numerator by the ladder integral.
    """
    if delta < 0:
        raise ParameterError(f"discount must be nonnegative, got {delta}")
    if not _is_spectrally_positive(model):
        raise UnsupportedModel("discounted tax limit needs a spectrally positive model")
    alpha = lundberg_root(model)
    phi = phi_hat(model, delta)
    inputs = {"model": model, "policy": policy, "delta": delta, "alpha": alpha, "phi": phi}

    if isinstance(policy, Constant):
        gamma = policy.gamma
        if gamma >= 1.0:
            return Prediction(
                value=math.inf,
                formula="discounted tax limit (constant rate)",
                finite=False,
                condition="gamma < 1",
                inputs=inputs,
            )
        value = gamma / (alpha * (1.0 - gamma) + phi)
        return Prediction(
            value=value,
            formula="discounted tax limit (constant rate)",
            finite=True,
            condition="gamma < 1",
            inputs=inputs,
        )

    if isinstance(policy, HarmonicRamp):
        ab = alpha * policy.beta
        if delta == 0.0:
            if ab <= 2.0:
                return Prediction(
                    value=math.inf,
                    formula="total tax limit (harmonic ramp)",
                    finite=False,
                    condition="alpha * beta > 2",
                    inputs=inputs,
                )
            value = (
                alpha
                * policy.beta**2
                * math.exp(-ab)
                / ((ab - 1.0) * (ab - 2.0) * (ab - 1.0 + math.exp(-ab)))
            )
            return Prediction(
                value=value,
                formula="total tax limit (harmonic ramp)",
                finite=True,
                condition="alpha * beta > 2",
                inputs=inputs,
            )
        if ab <= 1.0:
            return Prediction(
                value=math.inf,
                formula="discounted tax limit (harmonic ramp)",
                finite=False,
                condition="alpha * beta > 1",
                inputs=inputs,
            )
        numer = _harmonic_tax_numerator(policy, alpha, phi)
        denom = hhat_exponential_integral(policy, alpha)
        return Prediction(
            value=numer / denom,
            formula="discounted tax limit (harmonic ramp)",
            finite=True,
            condition="alpha * beta > 1",
            inputs=inputs,
        )

    if isinstance(policy, Table):
        denom = hhat_exponential_integral(policy, alpha)
        numer = _table_tax_numerator(policy, alpha, phi)
        if math.isinf(denom) or math.isinf(numer):
            return Prediction(
                value=math.inf,
                formula="discounted tax limit (step rates)",
                finite=False,
                condition="tail rate < 1",
                inputs=inputs,
            )
        return Prediction(
            value=numer / denom,
            formula="discounted tax limit (step rates)",
            finite=True,
            condition="tail rate < 1",
            inputs=inputs,
        )
    raise UnsupportedModel(f"unknown policy {policy!r}")


def _require_cl(model: ModelSpec) -> CramerLundberg:
    if isinstance(model, TwoSided) and model.lam_minus == 0:
        model = model.as_cramer_lundberg()
    if not isinstance(model, CramerLundberg):
        raise UnsupportedModel("joint limit density implemented for exponential claims only")
    return model


def predict_joint_density(model: ModelSpec, y, x, v):
    """Limiting joint density of (depth y, overshoot x, undershoot v) at ruin.

    (alpha/q) e^{alpha y} 1{v >= y} lam mu e^{-mu (v + x)}; integrates to one
    exactly when q is the ascending killing rate (see q_consistency).
    """
    m = _require_cl(model)
    alpha = lundberg_root(m)
    q = ladder_exponents(m).q
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    dens = (
        (alpha / q)
        * np.exp(alpha * y)
        * (v >= y)
        * m.lam
        * m.mu
        * np.exp(-m.mu * (v + x))
    )
    return np.where((y >= 0) & (x >= 0) & (v >= 0), dens, 0.0)


def joint_total_mass(model: ModelSpec) -> float:
    """Exact integral of the limiting joint density (should be 1)."""
    m = _require_cl(model)
    alpha = lundberg_root(m)
    q = ladder_exponents(m).q
    return alpha * m.lam / (q * m.mu * (m.mu - alpha))


def joint_law_references(model: ModelSpec) -> dict:
    """Marginal cdfs of the limiting joint law, for KS diagnostics.

    Overshoot is Exp(mu) (memoryless claims); depth is Exp(mu - alpha);
    undershoot has the mixture cdf obtained by integrating the joint density.
    """
    m = _require_cl(model)
    alpha = lundberg_root(m)
    q = ladder_exponents(m).q
    mu = m.mu
    lam = m.lam

    def overshoot_cdf(x):
        return -np.expm1(-mu * np.asarray(x, dtype=float))

    def depth_cdf(y):
        return -np.expm1(-(mu - alpha) * np.asarray(y, dtype=float))

    def undershoot_cdf(v):
        v = np.asarray(v, dtype=float)
        return (lam / q) * (
            -np.expm1(-(mu - alpha) * v) / (mu - alpha) + np.expm1(-mu * v) / mu
        )

    return {"overshoot": overshoot_cdf, "depth": depth_cdf, "undershoot": undershoot_cdf}


def q_consistency(model: ModelSpec) -> float:
    """|kappa(0,0) - alpha lam / (mu (mu - alpha))|: killing rate versus the
    normalizing constant that makes the joint limit density integrate to 1."""
    m = _require_cl(model)
    alpha = lundberg_root(m)
    q = ladder_exponents(m).q
    return abs(q - alpha * m.lam / (m.mu * (m.mu - alpha)))
