"""Statistical estimators over record batches.

Crude estimates are plain frequencies/averages over plain-measure paths.
Tilted estimates weight each path by its likelihood ratio e^{-alpha X_tau};
the weighted frequency is unbiased for the ruin probability, and conditional
quantities use the self-normalized ratio sum(w g)/sum(w) with a delta-method
standard error.  Crude conditional means are the same ratio with indicator
weights, so one code path serves both.

Estimates carry their raw accumulators (counts, sums, sums of squares and
cross products), so merging partial batches is associative bookkeeping:
merged sums reproduce whole-batch sums up to the last floating-point digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import RecordBatch, run_batch
from .errors import MixedBatchError, NoRuinsError, ParameterError
from .model import ModelSpec, lundberg_root

__all__ = [
    "Estimate",
    "JointLawSummary",
    "ruin_prob",
    "conditional_mean",
    "edpf",
    "edpf_values",
    "joint_law",
    "first_excursion_ratio",
    "weighted_ks",
    "estimate_upsilon",
]


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its accumulators.

    ``kind`` is "mean" (weighted frequency) or "ratio" (self-normalized
    conditional).  For ratios the numerator/denominator sums are retained:
    s_num = sum(w g), s_den = sum(w).
    """

    kind: str
    tag: str
    n: int
    s_den: float
    s_den2: float
    s_num: float = 0.0
    s_num2: float = 0.0
    s_cross: float = 0.0
    flags: tuple[str, ...] = ()

    @property
    def mean(self) -> float:
        if self.kind == "mean":
            return self.s_den / self.n
        if self.s_den == 0.0:
            return math.nan
        return self.s_num / self.s_den

    @property
    def stderr(self) -> float:
        n = self.n
        if n < 2:
            return math.nan
        if self.kind == "mean":
            var = (self.s_den2 - self.s_den**2 / n) / (n - 1)
            return math.sqrt(max(var, 0.0) / n)
        den_bar = self.s_den / n
        if den_bar == 0.0:
            return math.nan
        num_bar = self.s_num / n
        ratio = self.s_num / self.s_den
        var_num = (self.s_num2 - n * num_bar**2) / (n - 1)
        var_den = (self.s_den2 - n * den_bar**2) / (n - 1)
        cov = (self.s_cross - n * num_bar * den_bar) / (n - 1)
        var = (var_num - 2.0 * ratio * cov + ratio**2 * var_den) / n
        return math.sqrt(max(var, 0.0)) / abs(den_bar)

    @property
    def ci95(self) -> tuple[float, float]:
        m, s = self.mean, self.stderr
        return (m - 1.96 * s, m + 1.96 * s)

    def merge(self, other: "Estimate") -> "Estimate":
        if (self.kind, self.tag) != (other.kind, other.tag):
            raise MixedBatchError(
                f"cannot merge {self.kind}/{self.tag} with {other.kind}/{other.tag}"
            )
        return replace(
            self,
            n=self.n + other.n,
            s_den=self.s_den + other.s_den,
            s_den2=self.s_den2 + other.s_den2,
            s_num=self.s_num + other.s_num,
            s_num2=self.s_num2 + other.s_num2,
            s_cross=self.s_cross + other.s_cross,
            flags=tuple(dict.fromkeys(self.flags + other.flags)),
        )


def _tag(records: RecordBatch) -> str:
    return "tilted" if records.meta.mode == "q" else "crude"


def _base_flags(records: RecordBatch) -> tuple[str, ...]:
    flags = []
    if records.step_limited.any():
        flags.append("step_limited_paths")
    if records.meta.mode == "q" and records.truncated.any():
        flags.append(
            "depth_capped" if records.meta.hhat_cap is not None else "tilted_truncations"
        )
    return tuple(flags)


def ruin_prob(records: RecordBatch) -> Estimate:
    """Unbiased estimate of P(ruin before the truncation horizon).

    Crude: frequency of ruined paths (truncation bias bounded by the batch
    residual scale).  Tilted: mean likelihood weight; requires zero
    truncations unless the batch was run with an explicit depth cap, in
    which case the estimand is the ruin-before-cap probability (within the
    batch residual scale of the full one) and the weights stay bounded even
    for policies whose rate approaches one.
    """
    flags = _base_flags(records)
    if records.meta.mode == "q" and records.truncated.any() and records.meta.hhat_cap is None:
        raise MixedBatchError("tilted batches must have zero truncations")
    w = records.weight
    if records.n_ruined == 0:
        flags = flags + ("no_ruins",)
    return Estimate(
        kind="mean",
        tag=_tag(records),
        n=len(records),
        s_den=float(np.sum(w)),
        s_den2=float(np.sum(w * w)),
        flags=flags,
    )


def conditional_mean(records: RecordBatch, values: np.ndarray) -> Estimate:
    """E[values | ruin] as a self-normalized ratio with delta-method stderr.

    ``values`` must be finite on ruined records; entries on non-ruined
    records are ignored (their weight is zero).
    """
    if records.n_ruined == 0:
        raise NoRuinsError("no ruined paths in batch")
    w = records.weight
    v = np.where(records.ruined, np.asarray(values, dtype=float), 0.0)
    if not np.isfinite(v[records.ruined]).all():
        raise ParameterError("functional is not finite on all ruined records")
    y = w * v
    return Estimate(
        kind="ratio",
        tag=_tag(records),
        n=len(records),
        s_den=float(np.sum(w)),
        s_den2=float(np.sum(w * w)),
        s_num=float(np.sum(y)),
        s_num2=float(np.sum(y * y)),
        s_cross=float(np.sum(y * w)),
        flags=_base_flags(records),
    )


def _check_edpf_params(alpha: float, lam_pen: float, eta: float, delta_pen: float) -> None:
    if lam_pen < 0 or delta_pen < 0:
        raise ParameterError("penalty rates must be nonnegative")
    if eta > alpha:
        raise ParameterError(f"eta={eta} must not exceed alpha={alpha}")
    if abs(eta + lam_pen - alpha) < 1e-12:
        raise ParameterError("eta + lambda - alpha must be nonzero")


def edpf_values(records: RecordBatch, lam_pen: float, eta: float, delta_pen: float) -> np.ndarray:
    """Penalty functional e^{-lam depth + eta overshoot - delta duration} per record."""
    with np.errstate(invalid="ignore"):
        return np.exp(
            -lam_pen * records.depth + eta * records.overshoot - delta_pen * records.duration
        )


def edpf(records: RecordBatch, lam_pen: float, eta: float, delta_pen: float) -> Estimate:
    """Discounted penalty estimate conditional on ruin.

    Penalizes the depth below u from which the final excursion started, the
    overshoot at ruin, and the time from the last maximum to ruin.
    """
    alpha = records.meta.alpha
    if alpha is None:
        alpha = lundberg_root(records.meta.model)
    _check_edpf_params(alpha, lam_pen, eta, delta_pen)
    return conditional_mean(records, edpf_values(records, lam_pen, eta, delta_pen))


def first_excursion_ratio(records: RecordBatch) -> Estimate:
    """Fraction of ruin that does not happen on the first excursion over u."""
    return conditional_mean(records, (~records.first_excursion).astype(float))


def weighted_ks(values: np.ndarray, weights: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance of a weighted sample to a reference cdf."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    total = w.sum()
    if total <= 0:
        raise NoRuinsError("no weight in sample")
    ecdf_hi = np.cumsum(w) / total
    ecdf_lo = ecdf_hi - w / total
    ref = cdf(v)
    return float(np.max(np.maximum(np.abs(ecdf_hi - ref), np.abs(ecdf_lo - ref))))


@dataclass(frozen=True)
class JointLawSummary:
    """Weighted histograms of the ruin-time variables plus KS diagnostics."""

    n_conditioned: int
    n_effective: float
    edges: dict
    masses: dict
    ks: dict
    mass_undershoot_below_depth: float


_JOINT_VARS = ("depth", "overshoot", "undershoot", "duration")


def joint_law(records: RecordBatch, bins: int = 64, references: dict | None = None) -> JointLawSummary:
    """Normalized weighted histograms for (depth, overshoot, undershoot, duration).

    Histograms span [0, 8 scales] where the scale is the weighted mean of
    each variable.  ``references`` maps variable names to cdf callables; a
    weighted KS distance is reported for each.
    """
    if records.n_ruined == 0:
        raise NoRuinsError("no ruined paths in batch")
    sel = records.ruined
    w = records.weight[sel]
    edges = {}
    masses = {}
    ks = {}
    for name in _JOINT_VARS:
        x = getattr(records, name)[sel]
        scale = float(np.sum(w * x) / np.sum(w))
        hi = 8.0 * scale if scale > 0 else 1.0
        e = np.linspace(0.0, hi, bins + 1)
        h, _ = np.histogram(x, bins=e, weights=w)
        total = np.sum(w)
        edges[name] = e
        masses[name] = h / total
        if references and name in references:
            ks[name] = weighted_ks(x, w, references[name])
    below = records.undershoot[sel] < records.depth[sel]
    mass_below = float(np.sum(w[below]) / np.sum(w))
    n_eff = float(np.sum(w) ** 2 / np.sum(w * w))
    return JointLawSummary(
        n_conditioned=int(sel.sum()),
        n_effective=n_eff,
        edges=edges,
        masses=masses,
        ks=ks,
        mass_undershoot_below_depth=mass_below,
    )


def estimate_upsilon(
    model: ModelSpec, u: float = 12.0, n: int = 100_000, seed: int = 0, batch_tag: int = 0
) -> Estimate:
    """Self-calibration of the Cramer constant: e^{alpha u} * tilted P(ruin).

    Used for models whose constant has no closed form here; u should be large
    enough that the Cramer regime has set in.
    """
    from .tax import Constant

    alpha = lundberg_root(model)
    batch = run_batch(model, Constant(0.0), u, "q", n, seed, batch_tag=batch_tag)
    est = ruin_prob(batch)
    scale = math.exp(alpha * u)
    return replace(
        est,
        s_den=est.s_den * scale,
        s_den2=est.s_den2 * scale**2,
        flags=est.flags + ("empirical_upsilon",),
    )
