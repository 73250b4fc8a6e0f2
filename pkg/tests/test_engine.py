from __future__ import annotations

import math

import numpy as np
import pytest

from taxruin import (
    BrownianDrift,
    Constant,
    CramerLundberg,
    HarmonicRamp,
    Table,
    TruncationRule,
    bm_run_batch,
    bm_step_path,
    run_batch,
    run_path,
)
from taxruin.errors import DomainError, MixedBatchError, UnsupportedModel
from taxruin.engine import RecordBatch

FIELDS = (
    "ruined", "truncated", "step_limited", "tau", "g", "undershoot", "overshoot",
    "depth", "duration", "tax", "disc_tax", "weight", "x_final", "first_excursion",
    "events",
)


def records_equal(a, b):
    for f in FIELDS:
        va, vb = getattr(a, f), getattr(b, f)
        if isinstance(va, float) and math.isnan(va) and math.isnan(vb):
            continue
        if va != vb:
            return False, f
    return True, None


class TestHandTrace:
    def test_single_jump_ruin(self, cl_base, rigged):
        # descend at 1.5 for one time unit paying half the new minimum depth,
        # then a claim of 2.0 lands: ruin over u = 0.4
        draws = rigged([1.0, 9.9], [2.0, 1.0])
        rec = run_path(cl_base, Constant(0.5), 0.4, "p", draws=draws, collect_log=True)
        assert rec.ruined
        assert rec.tau == 1.0
        assert rec.g == 0.0
        assert rec.undershoot == pytest.approx(1.15, abs=1e-12)
        assert rec.overshoot == pytest.approx(0.85, abs=1e-12)
        assert rec.depth == pytest.approx(0.4, abs=1e-12)
        assert rec.duration == 1.0
        assert rec.tax == pytest.approx(0.75, abs=1e-12)
        assert rec.first_excursion
        t, kind, x, xmin, r, tax = rec.log[1]
        assert (kind, x, xmin) == ("move", -1.5, -1.5)
        assert r == pytest.approx(-0.75, abs=1e-12)

    def test_two_sided_down_jump_sweep(self, rigged):
        # rate 2 total; first jump down (sign 0.9), size 2 through the minimum,
        # then a big up jump ruins; tax sweeps the jump depths at rate 0.5
        ts_model = __import__("taxruin").TwoSided(1.0, 1.0, 1.0, 1.0, 1.0)
        draws = rigged([2.0, 2.0], [2.0, 10.0], [0.9, 0.1])
        rec = run_path(ts_model, Constant(0.5), 1.0, "p", draws=draws, collect_log=True)
        assert rec.ruined
        assert rec.tau == 2.0
        assert rec.tax == pytest.approx(2.0, abs=1e-12)
        assert rec.undershoot == pytest.approx(3.0, abs=1e-12)
        assert rec.overshoot == pytest.approx(7.0, abs=1e-12)
        assert rec.depth == pytest.approx(1.0, abs=1e-12)
        # after the down jump the taxed infimum matches the sweep accounting
        t, kind, x, xmin, r, tax = rec.log[2]
        assert kind == "down"
        assert x == -3.0 and xmin == -3.0
        assert tax == pytest.approx(1.5, abs=1e-12)
        assert r == pytest.approx(-1.5, abs=1e-12)


class TestOutcomes:
    def test_no_claims_truncates(self):
        rec = run_path(CramerLundberg(1.5, 0.0, 1.0), Constant(0.3), 5.0, "p", seed=1)
        assert not rec.ruined and rec.truncated

    def test_full_tax_tilted_always_ruins(self, cl_base):
        b = run_batch(cl_base, Constant(1.0), 1.0, "q", 2000, 3)
        assert b.ruined.all()
        est = b.weight.mean()
        se = b.weight.std(ddof=1) / math.sqrt(len(b))
        assert abs(est - 1.0) <= 3 * se

    def test_step_limit_flag(self, cl_base):
        b = run_batch(
            cl_base, Constant(0.5), 50.0, "p", 50, 5, trunc=TruncationRule(max_events=5)
        )
        assert b.step_limited.all()

    def test_crude_matches_no_tax_closed_form(self, cl_base):
        b = run_batch(cl_base, Constant(0.0), 2.0, "p", 10_000, 123)
        p = b.ruined.mean()
        se = math.sqrt(p * (1 - p) / len(b))
        want = (2 / 3) * math.exp(-2 / 3)
        assert abs(p - want) <= 3 * se + 1e-3

    def test_crude_matches_proportional_tax_identity(self, cl_base):
        # survival with proportional tax is untaxed survival to the power
        # 1/(1-gamma) for exponential claims
        gamma = 0.5
        b = run_batch(cl_base, Constant(gamma), 2.0, "p", 40_000, 77)
        p = b.ruined.mean()
        se = math.sqrt(p * (1 - p) / len(b))
        want = 1 - (1 - (2 / 3) * math.exp(-2 / 3)) ** (1 / (1 - gamma))
        assert abs(p - want) <= 3 * se + 1e-3

    def test_validation(self, cl_base):
        with pytest.raises(DomainError):
            run_path(cl_base, Constant(0.5), -1.0)
        with pytest.raises(DomainError):
            run_path(cl_base, Constant(0.5), 1.0, "z")
        with pytest.raises(UnsupportedModel):
            run_path(BrownianDrift(1, 1), Constant(0.5), 1.0)
        with pytest.raises(DomainError):
            run_batch(cl_base, Constant(0.5), 1.0, "p", 0, 1)


class TestDeterminism:
    def test_same_seed_bitwise(self, cl_base):
        a = run_batch(cl_base, Constant(0.5), 2.0, "p", 3000, 99)
        b = run_batch(cl_base, Constant(0.5), 2.0, "p", 3000, 99)
        for f in FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f), equal_nan=True), f

    def test_prefix_stability(self, cl_base):
        # replica streams depend only on (seed, tag, index), not batch size
        small = run_batch(cl_base, Constant(0.5), 2.0, "q", 200, 4)
        big = run_batch(cl_base, Constant(0.5), 2.0, "q", 350, 4)
        for f in FIELDS:
            assert np.array_equal(
                getattr(small, f), getattr(big, f)[:200], equal_nan=True
            ), f

    def test_disjoint_seeds_differ(self, cl_base):
        a = run_batch(cl_base, Constant(0.5), 2.0, "q", 500, 1)
        b = run_batch(cl_base, Constant(0.5), 2.0, "q", 500, 2)
        assert not np.allclose(a.tau, b.tau, equal_nan=True)
        # and batch tags separate streams under one seed
        c = run_batch(cl_base, Constant(0.5), 2.0, "q", 500, 1, batch_tag=1)
        assert not np.allclose(a.tau, c.tau, equal_nan=True)

    @pytest.mark.parametrize("mode", ["p", "q"])
    @pytest.mark.parametrize("disc", [0.0, 0.1])
    def test_scalar_matches_vectorized(self, cl_base, two_sided, mode, disc):
        for model in (cl_base, two_sided):
            for pol in (Constant(0.5), HarmonicRamp(3.0), Table((1.0,), (0.2, 0.6))):
                trunc = TruncationRule(hhat_cap=12.0)
                batch = run_batch(
                    model, pol, 2.5, mode, 150, 31, discount=disc, trunc=trunc
                )
                for i in range(len(batch)):
                    ref = run_path(
                        model, pol, 2.5, mode,
                        seed=31, replica=i, discount=disc, trunc=trunc,
                    )
                    same, field = records_equal(ref, batch.row(i))
                    assert same, f"{model}, {pol}, replica {i}: {field}"


class TestTruncation:
    def test_residual_scale_recorded(self, cl_base):
        b = run_batch(cl_base, Constant(0.5), 8.0, "p", 500, 9)
        assert b.meta.hhat_cap == pytest.approx(math.log(1e4) / (1 / 3))
        assert b.meta.residual_scale == pytest.approx(
            math.exp(-(8.0 + b.meta.hhat_cap) / 3)
        )
        assert b.n_truncated > 0

    def test_capped_tilted_matches_capped_crude(self, cl_base):
        # with an explicit cap the tilted batch estimates the same
        # ruin-before-cap probability that crude truncation measures
        trunc = TruncationRule(hhat_cap=4.0)
        bq = run_batch(cl_base, Constant(0.5), 2.0, "q", 40_000, 21, trunc=trunc)
        bp = run_batch(cl_base, Constant(0.5), 2.0, "p", 40_000, 22, trunc=trunc)
        est_q = bq.weight.mean()
        se_q = bq.weight.std(ddof=1) / math.sqrt(len(bq))
        est_p = bp.ruined.mean()
        se_p = math.sqrt(est_p * (1 - est_p) / len(bp))
        assert bq.n_truncated > 0
        assert abs(est_q - est_p) <= 3 * math.hypot(se_q, se_p)

    def test_tilted_untruncated_by_default(self, cl_base):
        b = run_batch(cl_base, Constant(0.5), 3.0, "q", 2000, 33)
        assert b.n_truncated == 0 and b.ruined.all()


class TestBrownian:
    def test_degenerate_sigma_never_ruins(self):
        rec = bm_step_path(BrownianDrift(1.0, 0.0), Constant(0.3), 1.0, dt=0.01, seed=2)
        assert not rec.ruined and rec.truncated

    def test_approximate_flag_and_weights(self):
        b = bm_run_batch(BrownianDrift(1, 1), Constant(0.0), 1.0, "q", 400, 8, dt=0.01)
        assert b.meta.approximate
        assert b.ruined.all()
        sel = b.ruined
        want = np.exp(-2.0 * b.x_final[sel])
        assert np.allclose(b.weight[sel], want, rtol=1e-12)

    def test_refinement_approaches_exact(self):
        # Euler monitoring misses crossings, so estimates rise toward
        # e^{-2 p u / sigma^2} as the step shrinks
        ests = []
        for dt in (4e-2, 4e-3):
            b = bm_run_batch(BrownianDrift(1, 1), Constant(0.0), 1.0, "q", 4000, 55, dt=dt)
            ests.append(b.weight.mean())
        exact = math.exp(-2.0)
        assert ests[0] < ests[1] < exact * 1.02
        assert abs(ests[1] - exact) < 0.08 * exact

    @pytest.mark.slow
    def test_fine_grid_within_five_percent(self):
        b = bm_run_batch(BrownianDrift(1, 1), Constant(0.0), 1.0, "q", 4000, 56, dt=1e-4)
        est = b.weight.mean()
        assert abs(est - math.exp(-2.0)) < 0.05 * math.exp(-2.0)


class TestRecordBatch:
    def test_concat_and_mixed_batch(self, cl_base):
        a = run_batch(cl_base, Constant(0.5), 2.0, "q", 300, 1)
        b = run_batch(cl_base, Constant(0.5), 2.0, "q", 300, 2)
        both = RecordBatch.concat([a, b])
        assert len(both) == 600
        assert np.array_equal(both.weight[:300], a.weight)
        c = run_batch(cl_base, Constant(0.4), 2.0, "q", 300, 1)
        with pytest.raises(MixedBatchError):
            RecordBatch.concat([a, c])
