"""Tax policies driven by the depth of the running minimum.

Tax is paid only while the surplus process sets new running minima (the
loss-carried-forward rule), at a rate in [0, 1] that may depend on the
current depth d = |running minimum|.  Because the depth advances linearly
(at the premium rate) whenever the process sits at its minimum, every tax
integral over a descending segment reduces to an integral of the rate over
an interval of depths, which all three policy families admit in closed form.

For spectrally positive models the descending ladder height after taxation
is the deterministic function ``hhat(t) = t - primitive(t)``: depth t of
untaxed minimum maps to depth hhat(t) of the taxed one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy.special import exp1

from .errors import ConfigError, DomainError

__all__ = [
    "Constant",
    "HarmonicRamp",
    "Table",
    "TaxPolicy",
    "rate_at",
    "hhat_gamma",
    "segment_tax",
    "policy_from_config",
]


@dataclass(frozen=True)
class Constant:
    """Fixed tax rate gamma on all new minima."""

    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in [0, 1], got {self.gamma}")

    @property
    def sup_rate(self) -> float:
        return self.gamma

    @property
    def bounded_away_from_one(self) -> bool:
        return self.gamma < 1.0

    @property
    def tail_rate(self) -> float:
        return self.gamma

    def rate(self, depth):
        return np.full_like(np.asarray(depth, dtype=float), self.gamma)

    def primitive(self, depth):
        return self.gamma * np.asarray(depth, dtype=float)

    def hhat(self, t):
        return (1.0 - self.gamma) * np.asarray(t, dtype=float)

    def discounted_segment(self, delta, s0, d0, c, dt):
        s0, d0, dt = np.broadcast_arrays(
            np.asarray(s0, float), np.asarray(d0, float), np.asarray(dt, float)
        )
        tax = self.gamma * c * dt
        if delta == 0.0:
            return tax, tax.copy()
        disc = self.gamma * c * np.exp(-delta * s0) * -np.expm1(-delta * dt) / delta
        return tax, disc


@dataclass(frozen=True)
class HarmonicRamp:
    """No tax down to depth beta, then rate 1 - beta/depth.

    The rate climbs toward full taxation on deep drawdowns; it is not
    bounded away from one.  Wire name: ``example41``.
    """

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")

    @property
    def sup_rate(self) -> float:
        return 1.0

    @property
    def bounded_away_from_one(self) -> bool:
        return False

    @property
    def tail_rate(self) -> float:
        return 1.0

    def rate(self, depth):
        d = np.asarray(depth, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(d <= self.beta, 0.0, 1.0 - self.beta / np.maximum(d, self.beta))
        return r

    def primitive(self, depth):
        d = np.asarray(depth, dtype=float)
        dd = np.maximum(d, self.beta)
        return np.where(d <= self.beta, 0.0, dd - self.beta - self.beta * np.log(dd / self.beta))

    def hhat(self, t):
        tt = np.asarray(t, dtype=float)
        cl = np.maximum(tt, self.beta)
        return np.where(tt <= self.beta, tt, self.beta + self.beta * np.log(cl / self.beta))

    def discounted_segment(self, delta, s0, d0, c, dt):
        s0, d0, dt = np.broadcast_arrays(
            np.asarray(s0, float), np.asarray(d0, float), np.asarray(dt, float)
        )
        d1 = d0 + c * dt
        tax = self.primitive(d1) - self.primitive(d0)
        if delta == 0.0:
            return tax, tax.copy()
        # integrate (1 - beta/w) e^{-delta s(w)} dw / c over depths w in [a, b],
        # where s(w) = s0 + (w - d0)/c; the 1/w part is an exponential integral
        a = np.maximum(d0, self.beta)
        b = np.maximum(d1, self.beta)
        k = delta / c
        s_at_a = s0 + (a - d0) / c
        lead = np.exp(-delta * s_at_a)
        lin = lead * -np.expm1(-k * (b - a)) / k
        with np.errstate(invalid="ignore"):
            tail = np.exp(-delta * s0 + k * d0)
            e1 = tail * (exp1(np.maximum(k * a, 1e-300)) - exp1(np.maximum(k * b, 1e-300)))
        disc = np.where(b > a, lin - self.beta * e1, 0.0)
        return tax, disc


@dataclass(frozen=True)
class Table:
    """Step rates: rates[i] applies on [breakpoints[i-1], breakpoints[i])."""

    breakpoints: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        rt = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "rates", rt)
        if len(rt) != len(bp) + 1:
            raise DomainError(
                f"need len(rates) == len(breakpoints) + 1, got {len(rt)} and {len(bp)}"
            )
        if any(b <= 0 for b in bp) or any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise DomainError(f"breakpoints must be positive and ascending: {bp}")
        if any(not 0.0 <= r <= 1.0 for r in rt):
            raise DomainError(f"rates must lie in [0, 1]: {rt}")

    @cached_property
    def _edges(self) -> np.ndarray:
        return np.asarray((0.0,) + self.breakpoints, dtype=float)

    @cached_property
    def _rates_arr(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)

    @cached_property
    def _prim_at_edges(self) -> np.ndarray:
        widths = np.diff(self._edges)
        return np.concatenate([[0.0], np.cumsum(self._rates_arr[:-1] * widths)])

    @property
    def sup_rate(self) -> float:
        return max(self.rates)

    @property
    def bounded_away_from_one(self) -> bool:
        return self.sup_rate < 1.0

    @property
    def tail_rate(self) -> float:
        return self.rates[-1]

    def rate(self, depth):
        d = np.asarray(depth, dtype=float)
        idx = np.searchsorted(self._edges, d, side="right") - 1
        return self._rates_arr[np.clip(idx, 0, len(self.rates) - 1)]

    def primitive(self, depth):
        d = np.asarray(depth, dtype=float)
        idx = np.clip(np.searchsorted(self._edges, d, side="right") - 1, 0, len(self.rates) - 1)
        return self._prim_at_edges[idx] + self._rates_arr[idx] * (d - self._edges[idx])

    def hhat(self, t):
        return np.asarray(t, dtype=float) - self.primitive(t)

    def discounted_segment(self, delta, s0, d0, c, dt):
        s0, d0, dt = np.broadcast_arrays(
            np.asarray(s0, float), np.asarray(d0, float), np.asarray(dt, float)
        )
        d1 = d0 + c * dt
        tax = self.primitive(d1) - self.primitive(d0)
        if delta == 0.0:
            return tax, tax.copy()
        disc = np.zeros_like(tax)
        k = delta / c
        edges = list(self._edges) + [np.inf]
        for i, g in enumerate(self.rates):
            if g == 0.0:
                continue
            lo = np.clip(edges[i], d0, d1)
            hi = np.clip(edges[i + 1], d0, d1)
            s_lo = s0 + (lo - d0) / c
            piece = g * np.exp(-delta * s_lo) * -np.expm1(-k * (hi - lo)) / k
            disc += np.where(hi > lo, piece, 0.0)
        return tax, disc


TaxPolicy = Union[Constant, HarmonicRamp, Table]


def rate_at(policy: TaxPolicy, depth: float) -> float:
    """Tax rate applied while the running minimum sits at the given depth."""
    if depth < 0:
        raise DomainError(f"depth must be nonnegative, got {depth}")
    return float(policy.rate(depth))


def hhat_gamma(policy: TaxPolicy, t: float) -> float:
    """Taxed descending ladder height at untaxed depth t (spectrally positive).

    Equals the integral of 1 - rate over [0, t]; nondecreasing and
    1-Lipschitz, with hhat_gamma == t for the no-tax policy.
    """
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    return float(policy.hhat(t))


def segment_tax(
    policy: TaxPolicy,
    delta: float,
    s0: float,
    d0: float,
    c: float,
    dt: float,
) -> tuple[float, float]:
    """Tax paid and its present value over one minimum-descending segment.

    The process descends at rate c along its running minimum during
    [s0, s0 + dt], sweeping depths [d0, d0 + c dt]; discounting is
    e^{-delta s} in absolute time s.
    """
    if dt < 0 or d0 < 0 or s0 < 0 or c <= 0 or delta < 0:
        raise DomainError("segment requires s0, d0, dt >= 0, c > 0, delta >= 0")
    tax, disc = policy.discounted_segment(delta, s0, d0, c, dt)
    return float(tax), float(disc)


def policy_from_config(block: dict) -> TaxPolicy:
    """Build a policy from its wire format.

    Accepted forms: {"type": "constant", "gamma": g},
    {"type": "example41", "beta": b}, and
    {"type": "table", "breakpoints": [...], "rates": [...]}.
    """
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError("policy", f"expected a mapping with a 'type' key, got {block!r}")
    kind = block["type"]
    try:
        if kind == "constant":
            return Constant(float(block["gamma"]))
        if kind == "example41":
            return HarmonicRamp(float(block["beta"]))
        if kind == "table":
            return Table(tuple(block["breakpoints"]), tuple(block["rates"]))
    except KeyError as exc:
        raise ConfigError("policy", f"missing field {exc} for type {kind!r}") from exc
    except DomainError as exc:
        raise ConfigError("policy", str(exc)) from exc
    raise ConfigError("policy", f"unknown policy type {kind!r}")
