"""Simulation and asymptotics for taxed Levy insurance risk processes."""

from .engine import (
    RecordBatch,
    RuinRecord,
    TruncationRule,
    bm_run_batch,
    bm_step_path,
    run_batch,
    run_path,
)
from .model import (
    EMPIRICAL,
    BrownianDrift,
    CramerLundberg,
    LadderExponents,
    TwoSided,
    cramer_upsilon,
    esscher_tilt,
    ladder_exponents,
    laplace_exponent,
    lundberg_root,
    phi_hat,
)
from .tax import Constant, HarmonicRamp, Table, hhat_gamma, rate_at, segment_tax

__version__ = "0.1.0"
