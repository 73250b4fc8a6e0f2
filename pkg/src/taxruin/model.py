"""Claims-surplus models and their analytic quantities.

The surplus process X is the excess of claims over premium, so ruin at
capital u means X (or its taxed variant) exceeding u.  Three variants are
supported:

* ``CramerLundberg``: compound Poisson claims with exponential sizes minus
  a premium drift, X_t = sum_{i<=N_t} J_i - c t.  Spectrally positive.
* ``TwoSided``: adds an independent stream of downward exponential jumps.
* ``BrownianDrift``: X_t = sigma B_t - p t (diffusion approximation).

All quantities derive from the Laplace exponent psi(theta) = log E e^{theta X_1}.
The adjustment coefficient alpha is the positive root of psi, and the
bivariate ladder exponents kappa / kappa_hat factor a - psi(-theta) on the
strip where both sides are analytic.  For spectrally positive variants the
descending local time is taken to be the depth of the running minimum, which
makes the descending ladder height linear in local time and pins

    kappa_hat(a, b) = phi_hat(a) + b,

with phi_hat the right inverse of theta -> psi(-theta).  For the two-sided
variant both factors come from splitting the roots and poles of the rational
function a - psi(-theta); kappa_hat is normalized monic in b.  Ratios such as
alpha/q or kappa_hat(0, alpha)/kappa_hat(0, alpha(1-gamma)) do not depend on
this normalization choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, FactorizationError, NoPositiveRoot, UnsupportedModel

__all__ = [
    "CramerLundberg",
    "TwoSided",
    "BrownianDrift",
    "ModelSpec",
    "Empirical",
    "EMPIRICAL",
    "LadderExponents",
    "laplace_exponent",
    "lundberg_root",
    "esscher_tilt",
    "phi_hat",
    "ladder_exponents",
    "cramer_upsilon",
]

_ROOT_RTOL = 1e-12


@dataclass(frozen=True)
class CramerLundberg:
    """Premium drift c with Poisson(lam) claims of Exp(mu) size."""

    c: float
    lam: float
    mu: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"premium rate c must be positive, got {self.c}")
        if self.lam < 0:
            raise DomainError(f"claim intensity lam must be >= 0, got {self.lam}")
        if not self.mu > 0:
            raise DomainError(f"claim-size rate mu must be positive, got {self.mu}")

    @property
    def mean_drift(self) -> float:
        return self.lam / self.mu - self.c

    @property
    def spectrally_positive(self) -> bool:
        return True

    @property
    def jump_rate(self) -> float:
        return self.lam

    @property
    def up_probability(self) -> float:
        return 1.0


@dataclass(frozen=True)
class TwoSided:
    """Premium drift with exponential jumps in both directions."""

    c: float
    lam: float
    mu: float
    lam_minus: float
    mu_minus: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"premium rate c must be positive, got {self.c}")
        if self.lam < 0:
            raise DomainError(f"claim intensity lam must be >= 0, got {self.lam}")
        if not self.mu > 0:
            raise DomainError(f"claim-size rate mu must be positive, got {self.mu}")
        if self.lam_minus < 0:
            raise DomainError(f"downward intensity must be >= 0, got {self.lam_minus}")
        if not self.mu_minus > 0:
            raise DomainError(f"downward jump rate must be positive, got {self.mu_minus}")

    @property
    def mean_drift(self) -> float:
        return self.lam / self.mu - self.lam_minus / self.mu_minus - self.c

    @property
    def spectrally_positive(self) -> bool:
        return self.lam_minus == 0.0

    @property
    def jump_rate(self) -> float:
        return self.lam + self.lam_minus

    @property
    def up_probability(self) -> float:
        total = self.jump_rate
        return 1.0 if total == 0 else self.lam / total

    def as_cramer_lundberg(self) -> CramerLundberg:
        """Collapse to the one-sided model; valid only when lam_minus == 0."""
        if self.lam_minus != 0.0:
            raise UnsupportedModel("two-sided model with active downward jumps")
        return CramerLundberg(self.c, self.lam, self.mu)


@dataclass(frozen=True)
class BrownianDrift:
    """Diffusion surplus X_t = sigma B_t - p t (sigma = 0 degenerates to pure drift)."""

    p: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"volatility sigma must be nonnegative, got {self.sigma}")

    @property
    def mean_drift(self) -> float:
        return -self.p

    @property
    def spectrally_positive(self) -> bool:
        return True


ModelSpec = Union[CramerLundberg, TwoSided, BrownianDrift]


class Empirical:
    """Marker: the requested constant has no closed form for this model."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Empirical"


EMPIRICAL = Empirical()


def laplace_exponent(model: ModelSpec, theta: float) -> float:
    """Evaluate psi(theta) = log E e^{theta X_1}.

    Raises DomainError if theta hits or passes a pole of the rational form
    (theta >= mu for upward jumps, theta <= -mu_minus for downward jumps).
    """
    theta = float(theta)
    if isinstance(model, CramerLundberg):
        if theta >= model.mu:
            raise DomainError(f"theta={theta} outside domain (-inf, {model.mu})")
        return -model.c * theta + model.lam * theta / (model.mu - theta)
    if isinstance(model, TwoSided):
        if theta >= model.mu or theta <= -model.mu_minus:
            raise DomainError(
                f"theta={theta} outside domain (-{model.mu_minus}, {model.mu})"
            )
        return (
            -model.c * theta
            + model.lam * theta / (model.mu - theta)
            - model.lam_minus * theta / (model.mu_minus + theta)
        )
    if isinstance(model, BrownianDrift):
        return 0.5 * model.sigma**2 * theta**2 - model.p * theta
    raise UnsupportedModel(f"unknown model {model!r}")


def _psi_dual(model: ModelSpec, theta: float) -> float:
    """psi(-theta), the Laplace exponent of the dual process -X."""
    return laplace_exponent(model, -theta)


def _psi_rational(model: ModelSpec, z: float) -> float:
    """The rational continuation of psi, defined everywhere off the poles."""
    if isinstance(model, CramerLundberg):
        return -model.c * z + model.lam * z / (model.mu - z)
    if isinstance(model, TwoSided):
        return (
            -model.c * z
            + model.lam * z / (model.mu - z)
            - model.lam_minus * z / (model.mu_minus + z)
        )
    return 0.5 * model.sigma**2 * z**2 - model.p * z


def _psi_rational_prime(model: ModelSpec, z: float) -> float:
    if isinstance(model, CramerLundberg):
        return -model.c + model.lam * model.mu / (model.mu - z) ** 2
    if isinstance(model, TwoSided):
        return (
            -model.c
            + model.lam * model.mu / (model.mu - z) ** 2
            - model.lam_minus * model.mu_minus / (model.mu_minus + z) ** 2
        )
    return model.sigma**2 * z - model.p


def lundberg_root(model: ModelSpec) -> float:
    """Adjustment coefficient: the unique alpha > 0 with psi(alpha) = 0.

    Raises NoPositiveRoot when the net-profit condition fails (mean drift
    >= 0) or when the model has no upward jumps at all.
    """
    if model.mean_drift >= 0:
        raise NoPositiveRoot(f"mean drift {model.mean_drift} is not negative")
    if isinstance(model, CramerLundberg):
        if model.lam == 0:
            raise NoPositiveRoot("no claims: psi < 0 on (0, mu)")
        return model.mu - model.lam / model.c
    if isinstance(model, BrownianDrift):
        if model.sigma == 0:
            raise NoPositiveRoot("pure downward drift: psi < 0 for theta > 0")
        return 2.0 * model.p / model.sigma**2
    if isinstance(model, TwoSided):
        if model.lam == 0:
            raise NoPositiveRoot("no upward jumps: psi < 0 for theta > 0")
        if model.lam_minus == 0:
            return lundberg_root(model.as_cramer_lundberg())
        # psi(theta)/theta is increasing from mean_drift < 0 to +inf on (0, mu)
        def slope(theta: float) -> float:
            return (
                -model.c
                + model.lam / (model.mu - theta)
                - model.lam_minus / (model.mu_minus + theta)
            )

        hi = model.mu * (1 - 1e-13)
        root = brentq(slope, 1e-300, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        return _newton_polish(model, root)
    raise UnsupportedModel(f"unknown model {model!r}")


def _newton_polish(model: ModelSpec, z: float, a: float = 0.0, steps: int = 3) -> float:
    """Newton steps on the rational continuation of psi(z) - a."""
    for _ in range(steps):
        d = _psi_rational_prime(model, z)
        if d == 0:
            break
        z_new = z - (_psi_rational(model, z) - a) / d
        if z_new == z:
            break
        z = z_new
    return z


def esscher_tilt(model: ModelSpec, a: float) -> ModelSpec:
    """Dynamics of X under the exponentially tilted measure dQ = e^{a X_t} dP.

    The tilted process stays in the same parametric family: premium rate is
    unchanged, each exponential jump rate shifts by a (toward the tilt), and
    jump intensities rescale by the corresponding moment factor.  Valid for
    any a in the analytic domain; at the adjustment coefficient the output
    has strictly positive mean drift.
    """
    a = float(a)
    if isinstance(model, CramerLundberg):
        if a >= model.mu:
            raise DomainError(f"tilt a={a} outside domain (-inf, {model.mu})")
        return CramerLundberg(model.c, model.lam * model.mu / (model.mu - a), model.mu - a)
    if isinstance(model, TwoSided):
        if a >= model.mu or a <= -model.mu_minus:
            raise DomainError(
                f"tilt a={a} outside domain (-{model.mu_minus}, {model.mu})"
            )
        return TwoSided(
            model.c,
            model.lam * model.mu / (model.mu - a),
            model.mu - a,
            model.lam_minus * model.mu_minus / (model.mu_minus + a),
            model.mu_minus + a,
        )
    if isinstance(model, BrownianDrift):
        return BrownianDrift(model.p - a * model.sigma**2, model.sigma)
    raise UnsupportedModel(f"unknown model {model!r}")


def phi_hat(model: ModelSpec, a: float) -> float:
    """Right inverse of the dual exponent: the largest theta >= 0 with psi(-theta) = a.

    This is the Laplace exponent of the first-passage subordinator of the
    running minimum, hence kappa_hat(a, 0) under the spectrally positive
    normalization.  Increasing in a, with phi_hat(0) = 0 under net profit.
    """
    if a < 0:
        raise DomainError(f"a must be nonnegative, got {a}")
    a = float(a)
    if isinstance(model, CramerLundberg):
        # c t^2 + (c mu - lam - a) t - a mu = 0, stable positive root
        b = model.c * model.mu - model.lam - a
        disc = math.sqrt(b * b + 4.0 * model.c * a * model.mu)
        if b >= 0:
            return 2.0 * a * model.mu / (b + disc)
        return (disc - b) / (2.0 * model.c)
    if isinstance(model, BrownianDrift):
        # sigma^2 t^2 / 2 + p t - a = 0
        disc = math.sqrt(model.p**2 + 2.0 * model.sigma**2 * a)
        if model.p >= 0:
            return 2.0 * a / (model.p + disc)
        return (disc - model.p) / model.sigma**2
    if isinstance(model, TwoSided):
        if model.lam_minus == 0:
            return phi_hat(model.as_cramer_lundberg(), a)
        raise UnsupportedModel(
            "phi_hat is the spectrally positive reduction; use ladder_exponents"
        )
    raise UnsupportedModel(f"unknown model {model!r}")


def _positive_psi_root(model: CramerLundberg, a: float) -> float:
    """Largest root of psi(z) = a; equals alpha at a = 0.

    Solves c z^2 + (lam + a - c mu) z - a mu = 0 in a cancellation-safe form.
    """
    b = model.lam + a - model.c * model.mu
    disc = math.sqrt(b * b + 4.0 * model.c * a * model.mu)
    if b <= 0:
        return (disc - b) / (2.0 * model.c)
    return 2.0 * a * model.mu / (disc + b)


@lru_cache(maxsize=512)
def _two_sided_roots(model: TwoSided, a: float) -> tuple[float, float, float]:
    """Real roots (r1 < -mu_minus < r2 <= 0 < r3 < mu) of psi(z) = a, a >= 0.

    The rational equation clears to a cubic with known pole positions; the
    companion-matrix roots are polished by Newton on psi itself and checked
    against the pole intervals.
    """
    c, lam, mu = model.c, model.lam, model.mu
    lam_m, mu_m = model.lam_minus, model.mu_minus
    # numerator of a - psi(z) over (mu - z)(mu_minus + z), descending powers
    p_az = np.array([c, a])
    p_poles = np.convolve([-1.0, mu], [1.0, mu_m])
    coeffs = np.convolve(p_az, p_poles)
    # jump terms -lam z (mu_m + z) + lam_m z (mu - z) are quadratics in z
    coeffs[1:] += np.array([-lam - lam_m, -lam * mu_m + lam_m * mu, 0.0])
    roots = np.roots(coeffs)
    if np.max(np.abs(roots.imag)) > 1e-8 * max(1.0, np.max(np.abs(roots.real))):
        raise FactorizationError(f"complex roots from {coeffs}: {roots}")
    real = np.sort(roots.real)
    r1, r2, r3 = (float(real[0]), float(real[1]), float(real[2]))
    r1 = _newton_polish(model, r1, a)
    r2 = 0.0 if a == 0.0 else _newton_polish(model, r2, a)
    r3 = lundberg_root(model) if a == 0.0 else _newton_polish(model, r3, a)
    if not (r1 < -mu_m < r2 <= 0.0 < r3 < mu):
        raise FactorizationError(
            f"roots {r1}, {r2}, {r3} not separated by poles (-{mu_m}, {mu})"
        )
    return r1, r2, r3


@dataclass(frozen=True)
class LadderExponents:
    """Evaluators for the bivariate ladder Laplace exponents of one model.

    ``kappa(a, b)`` is the ascending exponent (killing rate q = kappa(0, 0)),
    ``kappa_hat(a, b)`` the descending one.  They satisfy

        kappa(a, theta) * kappa_hat(a, -theta) = a - psi(-theta)

    on the common analytic strip.  ``d_h`` is the drift of the ascending
    ladder height (positive only for the Brownian variant, where X can creep
    over a level).
    """

    model: ModelSpec
    q: float
    d_h: float
    normalization: str

    def kappa(self, a: float, b: float) -> float:
        if a < 0:
            raise DomainError(f"a must be nonnegative, got {a}")
        m = self.model
        if isinstance(m, CramerLundberg):
            if b <= -m.mu:
                raise DomainError(f"kappa pole at b=-{m.mu}, got {b}")
            return m.c * (b + _positive_psi_root(m, a)) / (b + m.mu)
        if isinstance(m, TwoSided):
            if b <= -m.mu:
                raise DomainError(f"kappa pole at b=-{m.mu}, got {b}")
            _, _, r3 = _two_sided_roots(m, a)
            return m.c * (b + r3) / (b + m.mu)
        # Brownian: sigma^2 b / 2 + (p + sqrt(p^2 + 2 a sigma^2)) / 2
        disc = math.sqrt(m.p**2 + 2.0 * a * m.sigma**2)
        return 0.5 * m.sigma**2 * b + 0.5 * (m.p + disc)

    def kappa_hat(self, a: float, b: float) -> float:
        if a < 0:
            raise DomainError(f"a must be nonnegative, got {a}")
        m = self.model
        if isinstance(m, (CramerLundberg, BrownianDrift)):
            return phi_hat(m, a) + b
        if isinstance(m, TwoSided):
            if b <= -m.mu_minus:
                raise DomainError(f"kappa_hat pole at b=-{m.mu_minus}, got {b}")
            r1, r2, _ = _two_sided_roots(m, a)
            return (b - r1) * (b - r2) / (b + m.mu_minus)
        raise UnsupportedModel(f"unknown model {m!r}")


def ladder_exponents(model: ModelSpec) -> LadderExponents:
    """Build the ladder-exponent evaluators for a net-profit model."""
    if isinstance(model, TwoSided) and model.lam_minus == 0:
        model = model.as_cramer_lundberg()
    if model.mean_drift >= 0:
        raise DomainError("ladder exponents require negative mean drift")
    if isinstance(model, CramerLundberg):
        alpha = lundberg_root(model)
        return LadderExponents(
            model=model,
            q=model.c * alpha / model.mu,
            d_h=0.0,
            normalization="descending local time = depth of running minimum",
        )
    if isinstance(model, BrownianDrift):
        return LadderExponents(
            model=model,
            q=model.p,
            d_h=0.5 * model.sigma**2,
            normalization="descending local time = depth of running minimum",
        )
    if isinstance(model, TwoSided):
        alpha = lundberg_root(model)
        return LadderExponents(
            model=model,
            q=model.c * alpha / model.mu,
            d_h=0.0,
            normalization="descending factor monic in b",
        )
    raise UnsupportedModel(f"unknown model {model!r}")


def cramer_upsilon(model: ModelSpec) -> float | Empirical:
    """Classical no-tax constant: lim e^{alpha u} P(ruin from capital u).

    Exact for exponential claims (lam / (c mu)) and for the Brownian model
    (1, since ruin probability is exactly e^{-alpha u}).  The genuinely
    two-sided case has no restated closed form here; callers get the
    Empirical marker and should calibrate by importance sampling or use
    ratio quantities, which never need the constant.
    """
    if isinstance(model, CramerLundberg):
        return model.lam / (model.c * model.mu)
    if isinstance(model, BrownianDrift):
        return 1.0
    if isinstance(model, TwoSided):
        if model.lam_minus == 0:
            return cramer_upsilon(model.as_cramer_lundberg())
        return EMPIRICAL
    raise UnsupportedModel(f"unknown model {model!r}")
