"""Event-driven simulation of the taxed surplus process.

For the jump models the path between jumps is a deterministic descent at the
premium rate, so each inter-jump interval is advanced exactly: the segment is
split at the instant the process rejoins its running minimum, tax accrues in
closed form along the minimum-descending part, and the jump is applied at the
end.  The taxed level satisfies R = X + tax throughout, its running infimum
is Xmin + tax, and new maxima of R can appear only at upward jumps.

Ruin means R > u strictly.  In tilted mode the dynamics are simulated under
the exponential change of measure at the adjustment coefficient alpha of the
base model; ruin is then certain and each path carries the likelihood weight
e^{-alpha X_tau}, which makes the weighted ruin frequency unbiased for the
untilted ruin probability.  In plain mode a path stops once the taxed
infimum is so deep that the climb required for ruin exceeds u plus a
configurable margin; the neglected probability is exponentially small in the
margin and its scale is recorded with the batch.

The Brownian variant has no exact event construction; ``bm_run_batch`` is a
fixed-step Euler scheme with the same tax accounting, tagged approximate
(first-passage bias of order sqrt(step)).

Paths are embarrassingly parallel: replica i of a batch draws from a stream
keyed by (seed, batch_tag, i), so results are identical however the batch is
split across workers.  ``run_batch`` simulates fixed slabs of replicas with
vectorized state updates; ``run_path`` is the scalar reference used for
traces and property tests and realizes the same draws, so the two agree
path for path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DomainError,
    MixedBatchError,
    NoPositiveRoot,
    StepLimitExceeded,
    UnsupportedModel,
)
from .model import (
    BrownianDrift,
    CramerLundberg,
    ModelSpec,
    TwoSided,
    esscher_tilt,
    lundberg_root,
)
from .rng import (
    BM_CHUNK,
    JUMP_CHUNK,
    JumpDraws,
    draw_jump_chunks,
    jump_chunk_size,
    stream_generator,
)
from .tax import TaxPolicy

__all__ = [
    "TruncationRule",
    "RuinRecord",
    "BatchMeta",
    "RecordBatch",
    "run_path",
    "run_batch",
    "bm_run_batch",
    "bm_step_path",
    "simulate_slab_arrays",
    "assemble_batch",
    "batch_meta",
    "slab_bounds",
]

_SLAB = 16384


@dataclass(frozen=True)
class TruncationRule:
    """Stopping rule for plain-measure paths that will not ruin.

    ``hhat_cap``: stop once the taxed running infimum is deeper than this
    (None picks log(1e4)/alpha, making the neglected ruin probability about
    1e-4 of the Cramer scale e^{-alpha u}).  ``max_events`` is a safety
    valve on the jump count per path.
    """

    hhat_cap: Optional[float] = None
    max_events: int = 200_000

    def resolve_cap(self, model: ModelSpec, u: float) -> float:
        if self.hhat_cap is not None:
            if self.hhat_cap <= 0:
                raise DomainError("hhat_cap must be positive")
            return self.hhat_cap
        try:
            alpha = lundberg_root(model)
            return math.log(1e4) / alpha
        except NoPositiveRoot:
            # no Cramer scale to protect; anything comfortably past u will do
            return 2.0 * u + 50.0


@dataclass
class RuinRecord:
    """Outcome of one simulated path."""

    ruined: bool
    truncated: bool
    step_limited: bool
    tau: float
    g: float
    undershoot: float
    overshoot: float
    depth: float
    duration: float
    tax: float
    disc_tax: float
    weight: float
    x_final: float
    first_excursion: bool
    events: int
    log: Optional[list] = None


@dataclass(frozen=True)
class BatchMeta:
    model: ModelSpec
    policy: TaxPolicy
    u: float
    mode: str
    discount: float
    seed: int
    batch_tag: int
    n: int
    alpha: Optional[float]
    hhat_cap: Optional[float]
    residual_scale: Optional[float]
    approximate: bool = False

    def physical_key(self):
        return (self.model, self.policy, self.u, self.mode, self.discount, self.approximate)


_RECORD_FIELDS = (
    "tau",
    "g",
    "undershoot",
    "overshoot",
    "depth",
    "duration",
    "tax",
    "disc_tax",
    "weight",
    "x_final",
)


class RecordBatch:
    """Struct-of-arrays collection of RuinRecords with shared metadata."""

    def __init__(self, meta: BatchMeta, arrays: dict):
        self.meta = meta
        self.ruined = arrays["ruined"]
        self.truncated = arrays["truncated"]
        self.step_limited = arrays["step_limited"]
        self.first_excursion = arrays["first_excursion"]
        self.events = arrays["events"]
        for name in _RECORD_FIELDS:
            setattr(self, name, arrays[name])

    def __len__(self) -> int:
        return self.ruined.size

    @property
    def n_ruined(self) -> int:
        return int(self.ruined.sum())

    @property
    def n_truncated(self) -> int:
        return int(self.truncated.sum())

    def row(self, i: int) -> RuinRecord:
        return RuinRecord(
            ruined=bool(self.ruined[i]),
            truncated=bool(self.truncated[i]),
            step_limited=bool(self.step_limited[i]),
            tau=float(self.tau[i]),
            g=float(self.g[i]),
            undershoot=float(self.undershoot[i]),
            overshoot=float(self.overshoot[i]),
            depth=float(self.depth[i]),
            duration=float(self.duration[i]),
            tax=float(self.tax[i]),
            disc_tax=float(self.disc_tax[i]),
            weight=float(self.weight[i]),
            x_final=float(self.x_final[i]),
            first_excursion=bool(self.first_excursion[i]),
            events=int(self.events[i]),
        )

    @staticmethod
    def concat(batches: list["RecordBatch"]) -> "RecordBatch":
        if not batches:
            raise MixedBatchError("nothing to concatenate")
        key = batches[0].meta.physical_key()
        for b in batches[1:]:
            if b.meta.physical_key() != key:
                raise MixedBatchError(
                    f"incompatible batches: {b.meta.physical_key()} vs {key}"
                )
        m0 = batches[0].meta
        meta = BatchMeta(
            model=m0.model,
            policy=m0.policy,
            u=m0.u,
            mode=m0.mode,
            discount=m0.discount,
            seed=m0.seed,
            batch_tag=m0.batch_tag,
            n=sum(len(b) for b in batches),
            alpha=m0.alpha,
            hhat_cap=m0.hhat_cap,
            residual_scale=m0.residual_scale,
            approximate=m0.approximate,
        )
        arrays = {
            name: np.concatenate([getattr(b, name) for b in batches])
            for name in ("ruined", "truncated", "step_limited", "first_excursion", "events")
            + _RECORD_FIELDS
        }
        return RecordBatch(meta, arrays)


def _hhat_inverse(policy: TaxPolicy, cap: float) -> float:
    """Smallest untaxed depth whose taxed ladder height exceeds cap (inf if none)."""
    if float(policy.hhat(cap)) >= cap:  # no tax along the way
        return cap
    lo, hi = cap, 2.0 * cap + 1.0
    for _ in range(200):
        if float(policy.hhat(hi)) >= cap:
            break
        lo, hi = hi, hi * 4.0
        if hi > 1e300:
            return math.inf
    else:
        return math.inf
    from scipy.optimize import brentq

    return float(brentq(lambda d: float(policy.hhat(d)) - cap, lo, hi, xtol=1e-12))


def _prepare(model, policy, u, mode, trunc):
    """Shared setup for scalar and vectorized jump engines."""
    if not u > 0:
        raise DomainError(f"u must be positive, got {u}")
    if mode not in ("p", "q"):
        raise DomainError(f"mode must be 'p' or 'q', got {mode!r}")
    if isinstance(model, BrownianDrift):
        raise UnsupportedModel("use bm_run_batch / bm_step_path for the Brownian model")
    if not isinstance(model, (CramerLundberg, TwoSided)):
        raise UnsupportedModel(f"unknown model {model!r}")
    trunc = trunc or TruncationRule()
    alpha = None
    if mode == "q":
        alpha = lundberg_root(model)
        sim = esscher_tilt(model, alpha)
        # ruin is certain under the tilt, so no default stopping rule; an
        # explicit cap turns the estimand into the ruin-before-depth-cap
        # probability, keeping weights bounded for policies with rate -> 1
        cap = trunc.hhat_cap
        depth_cap = _hhat_inverse(policy, cap) if cap is not None else math.inf
        residual = math.exp(-alpha * (u + cap)) if cap is not None else None
    else:
        try:
            alpha = lundberg_root(model)
        except NoPositiveRoot:
            alpha = None
        sim = model
        cap = trunc.resolve_cap(model, u)
        depth_cap = _hhat_inverse(policy, cap)
        residual = math.exp(-alpha * (u + cap)) if alpha is not None else None
    return sim, alpha, cap, depth_cap, residual, trunc


def run_path(
    model: ModelSpec,
    policy: TaxPolicy,
    u: float,
    mode: str = "p",
    *,
    seed: int = 0,
    replica: int = 0,
    batch_tag: int = 0,
    discount: float = 0.0,
    trunc: Optional[TruncationRule] = None,
    draws: Optional[JumpDraws] = None,
    collect_log: bool = False,
) -> RuinRecord:
    """Simulate one path to ruin, truncation, or the event limit.

    ``draws`` may inject a rigged stream (used by trace tests); by default
    the replica's own stream is used.  With ``collect_log`` the record keeps
    an event log of (t, kind, X, Xmin, R, tax) rows.
    """
    sim, alpha, cap, depth_cap, _, trunc = _prepare(model, policy, u, mode, trunc)
    with_signs = isinstance(sim, TwoSided)
    if draws is None:
        draws = JumpDraws(stream_generator(seed, batch_tag, replica), with_signs)

    c = sim.c
    rate = sim.jump_rate
    p_up = sim.up_probability
    mu_up = sim.mu
    mu_dn = sim.mu_minus if with_signs else None

    t = 0.0
    x = 0.0
    xmin = 0.0
    tax = 0.0
    disc = 0.0
    r = 0.0
    rmax = 0.0
    g = 0.0
    cur_exc = 0.0
    completed_exceeded = False
    log: Optional[list] = [] if collect_log else None

    def emit(kind: str) -> None:
        if log is not None:
            log.append((t, kind, x, xmin, r, tax))

    emit("start")

    def final(ruined, truncated, limited, **kw) -> RuinRecord:
        return RuinRecord(
            ruined=ruined,
            truncated=truncated,
            step_limited=limited,
            tau=kw.get("tau", math.nan),
            g=kw.get("g", math.nan),
            undershoot=kw.get("undershoot", math.nan),
            overshoot=kw.get("overshoot", math.nan),
            depth=kw.get("depth", math.nan),
            duration=kw.get("duration", math.nan),
            tax=tax,
            disc_tax=disc,
            weight=kw.get("weight", 0.0),
            x_final=x,
            first_excursion=kw.get("first", False),
            events=k,
            log=log,
        )

    if rate == 0.0:
        # no jumps at all: pure descent until the truncation depth
        k = 0
        if math.isinf(depth_cap):
            raise StepLimitExceeded("no jumps and no finite truncation depth")
        dt2 = depth_cap / c
        seg_tax, seg_disc = policy.discounted_segment(discount, 0.0, 0.0, c, dt2)
        t = dt2
        x = -c * dt2
        xmin = x
        tax = float(seg_tax)
        disc = float(seg_disc)
        r = x + tax
        emit("trunc")
        return final(False, True, False)

    k = 0
    while True:
        if k >= trunc.max_events:
            emit("limit")
            return final(False, False, True)
        dt = draws.interarrival(k) / rate
        gap = x - xmin
        cdt = c * dt
        reach = gap <= cdt
        if reach:
            if cur_exc > u:
                completed_exceeded = True
            cur_exc = 0.0
            t_hit = gap / c
            dt2 = dt - t_hit
            seg_tax, seg_disc = policy.discounted_segment(discount, t + t_hit, -xmin, c, dt2)
            tax = tax + float(seg_tax)
            disc = disc + float(seg_disc)
            x = x - cdt
            xmin = x
        else:
            x = x - cdt
        t = t + dt
        r = x + tax
        if r == rmax:
            g = t
        emit("move")
        if -xmin > depth_cap:
            k += 1
            emit("trunc")
            return final(False, True, False)
        # jump
        mk = draws.mark(k)
        up = (draws.sign(k) < p_up) if with_signs else True
        if up:
            j = mk / mu_up
            r_pre = r
            x = x + j
            r = x + tax
            refl = x - xmin
            if refl > cur_exc:
                cur_exc = refl
            if r > u:
                k += 1
                tau = t
                weight = float(np.exp(-alpha * x)) if mode == "q" else 1.0
                emit("ruin")
                return final(
                    True,
                    False,
                    False,
                    tau=tau,
                    g=g,
                    undershoot=u - r_pre,
                    overshoot=r - u,
                    depth=u - rmax,
                    duration=tau - g,
                    weight=weight,
                    first=not completed_exceeded,
                )
            if r >= rmax:
                rmax = r
                g = t
            emit("up")
        else:
            j = mk / mu_dn
            x = x - j
            below = xmin - x
            if below > 0.0:
                if cur_exc > u:
                    completed_exceeded = True
                cur_exc = 0.0
                d0 = -xmin
                jt = float(policy.primitive(d0 + below) - policy.primitive(d0))
                jd = jt if discount == 0.0 else float(jt * np.exp(-discount * t))
                tax = tax + jt
                disc = disc + jd
                xmin = x
            r = x + tax
            emit("down")
        k += 1


def _finish_weights(mode, alpha, ruined, x_final):
    if mode == "q":
        w = np.zeros_like(x_final)
        w[ruined] = np.exp(-alpha * x_final[ruined])
        return w
    return ruined.astype(float)


def slab_bounds(n: int) -> list[tuple[int, int]]:
    """Fixed slab partition of a batch; independent of worker count."""
    return [(lo, min(lo + _SLAB, n)) for lo in range(0, n, _SLAB)]


def simulate_slab_arrays(
    model: ModelSpec,
    policy: TaxPolicy,
    u: float,
    mode: str,
    seed: int,
    lo: int,
    hi: int,
    *,
    batch_tag: int = 0,
    discount: float = 0.0,
    trunc: Optional[TruncationRule] = None,
) -> dict:
    """Simulate replicas [lo, hi) and return their compact record arrays.

    Worker entry point for parallel drivers; concatenating slab results in
    slab order and assembling reproduces ``run_batch`` byte for byte.
    """
    sim, alpha, cap, depth_cap, residual, trunc = _prepare(model, policy, u, mode, trunc)
    return _simulate_slab(
        sim, policy, u, mode, discount, depth_cap, trunc.max_events, seed, batch_tag, lo, hi
    )


def assemble_batch(meta: BatchMeta, slab_arrays: list[dict]) -> RecordBatch:
    """Concatenate per-slab arrays (in slab order) and finalize weights."""
    arrays = {
        name: np.concatenate([s[name] for s in slab_arrays])
        for name in ("ruined", "truncated", "step_limited", "first_excursion", "events")
        + _RECORD_FIELDS
        if name != "weight"
    }
    arrays["weight"] = _finish_weights(
        meta.mode, meta.alpha, arrays["ruined"], arrays["x_final"]
    )
    return RecordBatch(meta, arrays)


def batch_meta(
    model: ModelSpec,
    policy: TaxPolicy,
    u: float,
    mode: str,
    n: int,
    seed: int,
    *,
    batch_tag: int = 0,
    discount: float = 0.0,
    trunc: Optional[TruncationRule] = None,
) -> BatchMeta:
    _, alpha, cap, _, residual, _ = _prepare(model, policy, u, mode, trunc)
    return BatchMeta(
        model=model,
        policy=policy,
        u=u,
        mode=mode,
        discount=discount,
        seed=seed,
        batch_tag=batch_tag,
        n=n,
        alpha=alpha,
        hhat_cap=cap,
        residual_scale=residual,
    )


def run_batch(
    model: ModelSpec,
    policy: TaxPolicy,
    u: float,
    mode: str,
    n: int,
    seed: int,
    *,
    batch_tag: int = 0,
    discount: float = 0.0,
    trunc: Optional[TruncationRule] = None,
) -> RecordBatch:
    """Simulate n replicas; replica i draws from the (seed, batch_tag, i) stream.

    The batch is processed in fixed slabs of 16384 replicas so results do not
    depend on how work is distributed or interleaved.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    meta = batch_meta(
        model, policy, u, mode, n, seed, batch_tag=batch_tag, discount=discount, trunc=trunc
    )
    slabs = [
        simulate_slab_arrays(
            model, policy, u, mode, seed, lo, hi,
            batch_tag=batch_tag, discount=discount, trunc=trunc,
        )
        for lo, hi in slab_bounds(n)
    ]
    return assemble_batch(meta, slabs)


def _simulate_slab(
    sim,
    policy,
    u,
    mode,
    discount,
    depth_cap,
    max_events,
    seed,
    batch_tag,
    r_lo,
    r_hi,
):
    m = r_hi - r_lo
    with_signs = isinstance(sim, TwoSided)
    gens = [stream_generator(seed, batch_tag, r_lo + i) for i in range(m)]

    c = sim.c
    rate = sim.jump_rate
    p_up = sim.up_probability
    mu_up = sim.mu
    mu_dn = sim.mu_minus if with_signs else 1.0

    t = np.zeros(m)
    x = np.zeros(m)
    xmin = np.zeros(m)
    tax = np.zeros(m)
    disc = np.zeros(m)
    r = np.zeros(m)
    rmax = np.zeros(m)
    g = np.zeros(m)
    cur_exc = np.zeros(m)
    completed = np.zeros(m, dtype=bool)
    # 0 alive, 1 ruined, 2 truncated, 3 step-limited
    status = np.zeros(m, dtype=np.int8)
    events = np.zeros(m, dtype=np.int64)
    tau = np.full(m, np.nan)
    g_out = np.full(m, np.nan)
    undershoot = np.full(m, np.nan)
    overshoot = np.full(m, np.nan)
    depth_y = np.full(m, np.nan)
    duration = np.full(m, np.nan)
    first_exc = np.zeros(m, dtype=bool)

    if rate == 0.0:
        if math.isinf(depth_cap):
            raise StepLimitExceeded("no jumps and no finite truncation depth")
        dt2 = depth_cap / c
        seg_tax, seg_disc = policy.discounted_segment(
            discount, np.zeros(m), np.zeros(m), c, np.full(m, dt2)
        )
        t[:] = dt2
        x[:] = -c * dt2
        xmin[:] = x
        tax[:] = seg_tax
        disc[:] = seg_disc
        status[:] = 2
    else:
        live = np.arange(m)
        rows = np.arange(m)
        rnd = 0
        col0 = 0
        width = jump_chunk_size(rnd)
        a_mat = np.empty((m, width))
        m_mat = np.empty((m, width))
        s_mat = np.empty((m, width)) if with_signs else None
        for i, gen in enumerate(gens):
            a, mk, s = draw_jump_chunks(gen, with_signs, width)
            a_mat[i] = a
            m_mat[i] = mk
            if with_signs:
                s_mat[i] = s

        k = 0
        while live.size:
            if k >= max_events:
                status[live] = 3
                events[live] = k
                break
            if k - col0 == width:
                rnd += 1
                col0 = k
                width = jump_chunk_size(rnd)
                a_mat = np.empty((live.size, width))
                m_mat = np.empty((live.size, width))
                s_mat = np.empty((live.size, width)) if with_signs else None
                for j, i in enumerate(live):
                    a, mk, s = draw_jump_chunks(gens[i], with_signs, width)
                    a_mat[j] = a
                    m_mat[j] = mk
                    if with_signs:
                        s_mat[j] = s
                rows = np.arange(live.size)
            kk = k - col0

            li = live
            dt = a_mat[rows, kk] / rate
            gap = x[li] - xmin[li]
            cdt = c * dt
            reach = gap <= cdt
            completed[li] |= reach & (cur_exc[li] > u)
            cur_exc[li] = np.where(reach, 0.0, cur_exc[li])
            t_hit = gap / c
            dt2 = np.where(reach, dt - t_hit, 0.0)
            seg_tax, seg_disc = policy.discounted_segment(
                discount, t[li] + t_hit, -xmin[li], c, dt2
            )
            x_new = x[li] - cdt
            t_new = t[li] + dt
            tax_new = tax[li] + seg_tax
            disc_new = disc[li] + seg_disc
            xmin_new = np.where(reach, x_new, xmin[li])
            r_new = x_new + tax_new
            x[li] = x_new
            t[li] = t_new
            tax[li] = tax_new
            disc[li] = disc_new
            xmin[li] = xmin_new
            r[li] = r_new
            g[li] = np.where(r_new == rmax[li], t_new, g[li])

            if depth_cap != math.inf:
                trunc_hit = -xmin_new > depth_cap
                if trunc_hit.any():
                    dead = li[trunc_hit]
                    status[dead] = 2
                    events[dead] = k + 1
                    keep = ~trunc_hit
                    live = li[keep]
                    rows = rows[keep]
                    if live.size == 0:
                        break
                    li = live

            mk = m_mat[rows, kk]
            if with_signs:
                up = s_mat[rows, kk] < p_up
                j_sz = np.where(up, mk / mu_up, mk / mu_dn)
                x_j = np.where(up, x[li] + j_sz, x[li] - j_sz)
            else:
                up = np.ones(li.size, dtype=bool)
                x_j = x[li] + mk / mu_up

            r_pre = r[li]
            if with_signs:
                below = xmin[li] - x_j
                sweep = below > 0.0
                if sweep.any():
                    d0 = -xmin[li]
                    jt = np.where(
                        sweep,
                        policy.primitive(d0 + np.maximum(below, 0.0)) - policy.primitive(d0),
                        0.0,
                    )
                    jd = jt if discount == 0.0 else jt * np.exp(-discount * t[li])
                    tax[li] += jt
                    disc[li] += jd
                    completed[li] |= sweep & (cur_exc[li] > u)
                    cur_exc[li] = np.where(sweep, 0.0, cur_exc[li])
                    xmin[li] = np.where(sweep, x_j, xmin[li])
            x[li] = x_j
            r_j = x_j + tax[li]
            r[li] = r_j
            refl = x_j - xmin[li]
            cur_exc[li] = np.maximum(cur_exc[li], np.where(up, refl, 0.0))

            ruin = up & (r_j > u)
            if ruin.any():
                ridx = li[ruin]
                status[ridx] = 1
                events[ridx] = k + 1
                tau[ridx] = t[ridx]
                g_out[ridx] = g[ridx]
                undershoot[ridx] = u - r_pre[ruin]
                overshoot[ridx] = r_j[ruin] - u
                depth_y[ridx] = u - rmax[ridx]
                duration[ridx] = tau[ridx] - g[ridx]
                first_exc[ridx] = ~completed[ridx]

            newmax = up & ~ruin & (r_j >= rmax[li])
            rmax[li] = np.where(newmax, r_j, rmax[li])
            g[li] = np.where(newmax, t[li], g[li])

            if ruin.any():
                keep = ~ruin
                live = li[keep]
                rows = rows[keep]
            k += 1

    return {
        "ruined": status == 1,
        "truncated": status == 2,
        "step_limited": status == 3,
        "first_excursion": first_exc,
        "events": events,
        "tau": tau,
        "g": g_out,
        "undershoot": undershoot,
        "overshoot": overshoot,
        "depth": depth_y,
        "duration": duration,
        "tax": tax,
        "disc_tax": disc,
        "x_final": x,
    }


def bm_run_batch(
    model: BrownianDrift,
    policy: TaxPolicy,
    u: float,
    mode: str,
    n: int,
    seed: int,
    *,
    dt: float,
    batch_tag: int = 0,
    discount: float = 0.0,
    trunc: Optional[TruncationRule] = None,
    max_steps: int = 10_000_000,
) -> RecordBatch:
    """Euler grid simulation for the Brownian model (approximate records).

    First touch of the barrier counts as passage, consistent with the
    creeping behavior of the continuous model.  First-passage bias is
    O(sqrt(dt)); halving dt should move estimates monotonically toward the
    continuous-model value.
    """
    if not isinstance(model, BrownianDrift):
        raise UnsupportedModel("bm_run_batch requires the Brownian model")
    if not u > 0 or not dt > 0:
        raise DomainError("u and dt must be positive")
    if mode not in ("p", "q"):
        raise DomainError(f"mode must be 'p' or 'q', got {mode!r}")
    trunc = trunc or TruncationRule()
    alpha = None
    cap = None
    depth_cap = math.inf
    residual = None
    if mode == "q":
        alpha = lundberg_root(model)
        sim = esscher_tilt(model, alpha)
        cap = trunc.hhat_cap
        if cap is not None:
            depth_cap = _hhat_inverse(policy, cap)
            residual = math.exp(-alpha * (u + cap))
    else:
        try:
            alpha = lundberg_root(model)
        except NoPositiveRoot:
            alpha = None
        sim = model
        cap = trunc.resolve_cap(model, u)
        depth_cap = _hhat_inverse(policy, cap)
        residual = math.exp(-alpha * (u + cap)) if alpha is not None else None

    drift = -sim.p * dt
    scale = sim.sigma * math.sqrt(dt)

    meta = BatchMeta(
        model=model,
        policy=policy,
        u=u,
        mode=mode,
        discount=discount,
        seed=seed,
        batch_tag=batch_tag,
        n=n,
        alpha=alpha,
        hhat_cap=cap,
        residual_scale=residual,
        approximate=True,
    )
    slabs = [
        _bm_slab(
            policy, u, mode, discount, depth_cap, max_steps,
            seed, batch_tag, lo, hi, drift, scale, dt,
        )
        for lo, hi in slab_bounds(n)
    ]
    return assemble_batch(meta, slabs)


def _bm_slab(
    policy,
    u,
    mode,
    discount,
    depth_cap,
    max_steps,
    seed,
    batch_tag,
    r_lo,
    r_hi,
    drift,
    scale,
    dt,
):
    m = r_hi - r_lo
    gens = [stream_generator(seed, batch_tag, r_lo + i) for i in range(m)]

    t = np.zeros(m)
    x = np.zeros(m)
    xmin = np.zeros(m)
    tax = np.zeros(m)
    disc = np.zeros(m)
    r = np.zeros(m)
    rmax = np.zeros(m)
    g = np.zeros(m)
    cur_exc = np.zeros(m)
    completed = np.zeros(m, dtype=bool)
    status = np.zeros(m, dtype=np.int8)
    events = np.zeros(m, dtype=np.int64)
    tau = np.full(m, np.nan)
    g_out = np.full(m, np.nan)
    undershoot = np.full(m, np.nan)
    overshoot = np.full(m, np.nan)
    depth_y = np.full(m, np.nan)
    duration = np.full(m, np.nan)
    first_exc = np.zeros(m, dtype=bool)

    live = np.arange(m)
    rows = np.arange(m)
    z_mat = np.empty((m, BM_CHUNK))
    for i, gen in enumerate(gens):
        z_mat[i] = gen.standard_normal(BM_CHUNK)

    k = 0
    while live.size:
        if k >= max_steps:
            status[live] = 3
            events[live] = k
            break
        kk = k % BM_CHUNK
        if k > 0 and kk == 0:
            z_mat = np.empty((live.size, BM_CHUNK))
            for j, i in enumerate(live):
                z_mat[j] = gens[i].standard_normal(BM_CHUNK)
            rows = np.arange(live.size)

        li = live
        x_new = x[li] + drift + scale * z_mat[rows, kk]
        t_new = t[li] + dt
        below = xmin[li] - x_new
        sweep = below > 0.0
        d0 = -xmin[li]
        jt = np.where(sweep, policy.primitive(d0 + np.maximum(below, 0.0)) - policy.primitive(d0), 0.0)
        jd = jt if discount == 0.0 else jt * np.exp(-discount * t_new)
        completed[li] |= sweep & (cur_exc[li] > u)
        cur_exc[li] = np.where(sweep, 0.0, cur_exc[li])
        tax_new = tax[li] + jt
        xmin_new = np.where(sweep, x_new, xmin[li])
        r_pre = r[li]
        r_new = x_new + tax_new
        refl = x_new - xmin_new
        cur = np.maximum(cur_exc[li], refl)

        x[li] = x_new
        t[li] = t_new
        tax[li] = tax_new
        disc[li] += jd
        xmin[li] = xmin_new
        r[li] = r_new
        cur_exc[li] = cur

        ruin = r_new >= u
        if ruin.any():
            ridx = li[ruin]
            status[ridx] = 1
            events[ridx] = k + 1
            tau[ridx] = t_new[ruin]
            g_out[ridx] = g[ridx]
            undershoot[ridx] = u - r_pre[ruin]
            overshoot[ridx] = np.maximum(r_new[ruin] - u, 0.0)
            depth_y[ridx] = u - rmax[ridx]
            duration[ridx] = tau[ridx] - g[ridx]
            first_exc[ridx] = ~completed[ridx]

        newmax = ~ruin & (r_new >= rmax[li])
        rmax[li] = np.where(newmax, r_new, rmax[li])
        g[li] = np.where(newmax, t_new, g[li])

        dead = ruin
        if depth_cap != math.inf:
            trunc_hit = ~ruin & (-xmin_new > depth_cap)
            if trunc_hit.any():
                tidx = li[trunc_hit]
                status[tidx] = 2
                events[tidx] = k + 1
            dead = dead | trunc_hit
        if dead.any():
            keep = ~dead
            live = li[keep]
            rows = rows[keep]
        k += 1

    return {
        "ruined": status == 1,
        "truncated": status == 2,
        "step_limited": status == 3,
        "first_excursion": first_exc,
        "events": events,
        "tau": tau,
        "g": g_out,
        "undershoot": undershoot,
        "overshoot": overshoot,
        "depth": depth_y,
        "duration": duration,
        "tax": tax,
        "disc_tax": disc,
        "x_final": x,
    }


def bm_step_path(
    model: BrownianDrift,
    policy: TaxPolicy,
    u: float,
    mode: str = "p",
    *,
    dt: float,
    seed: int = 0,
    replica: int = 0,
    batch_tag: int = 0,
    discount: float = 0.0,
    trunc: Optional[TruncationRule] = None,
) -> RuinRecord:
    """Single Euler path for the Brownian model (replica slice of a batch)."""
    batch = bm_run_batch(
        model,
        policy,
        u,
        mode,
        replica + 1,
        seed,
        dt=dt,
        batch_tag=batch_tag,
        discount=discount,
        trunc=trunc,
    )
    return batch.row(replica)
