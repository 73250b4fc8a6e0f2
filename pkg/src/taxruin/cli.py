"""Configuration-driven experiment runner and command line interface.

Subcommands:

* ``predict``   analytic limits only, no simulation
* ``simulate``  run batches and dump raw per-path records
* ``estimate``  turn a dumped record file back into estimates
* ``validate``  full pipeline: simulate, estimate, compare to predictions
* ``trace``     event log of a single path for a given seed/replica

Reports are deterministic given (config, seed): the report JSON and CSV
contain no wall-clock data (timings go to a sidecar log), batches are cut
into fixed slabs whose per-path streams depend only on (seed, batch tag,
replica), and worker processes only redistribute whole slabs.  Exit codes:
1 for configuration errors, 2 for runtime failures, 3 when validation ran
but some comparison failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics, estimators
from .engine import (
    BatchMeta,
    RecordBatch,
    TruncationRule,
    assemble_batch,
    batch_meta,
    bm_run_batch,
    run_path,
    simulate_slab_arrays,
    slab_bounds,
)
from .errors import ConfigError, NeedsEmpiricalUpsilon, TaxruinError, UnsupportedModel
from .model import (
    EMPIRICAL,
    BrownianDrift,
    CramerLundberg,
    ModelSpec,
    TwoSided,
    cramer_upsilon,
    lundberg_root,
)
from .tax import Constant, TaxPolicy, policy_from_config

__all__ = ["ExperimentConfig", "run_experiment", "main"]

_OUTPUTS = ("ruin", "ratio", "edpf", "tax", "joint", "diagnostic")

_DEFAULT_SLACK_REL = {"ruin": 0.05, "ratio": 0.05, "edpf": 0.05, "tax": 0.05}
_DEFAULT_SLACK_ABS = {
    "joint_ks_overshoot": 0.02,
    "joint_ks_depth": 0.03,
    "joint_ks_undershoot": 0.03,
    "joint_mass_undershoot_below_depth": 0.005,
    "diagnostic": 0.05,
}


def model_from_config(block: dict) -> ModelSpec:
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError("model", f"expected a mapping with a 'type' key, got {block!r}")
    kind = block["type"]
    try:
        if kind == "cl":
            return CramerLundberg(float(block["c"]), float(block["lam"]), float(block["mu"]))
        if kind == "two_sided":
            return TwoSided(
                float(block["c"]),
                float(block["lam"]),
                float(block["mu"]),
                float(block["lam_minus"]),
                float(block["mu_minus"]),
            )
        if kind == "bm":
            return BrownianDrift(float(block["p"]), float(block["sigma"]))
    except KeyError as exc:
        raise ConfigError("model", f"missing field {exc} for type {kind!r}") from exc
    except TaxruinError as exc:
        raise ConfigError("model", str(exc)) from exc
    raise ConfigError("model", f"unknown model type {kind!r}")


def _parse_seed(raw) -> int:
    if isinstance(raw, bool):
        raise ConfigError("seed", "seed must be an integer")
    if isinstance(raw, int):
        seed = raw
    elif isinstance(raw, str):
        try:
            seed = int(raw, 0)
        except ValueError as exc:
            raise ConfigError("seed", f"cannot parse seed {raw!r}") from exc
    else:
        raise ConfigError("seed", f"seed must be an integer or string, got {type(raw).__name__}")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "seed must fit in 64 bits")
    return seed


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    policy: TaxPolicy
    u_grid: tuple[float, ...]
    estimator: str
    n: int
    seed: int
    discount: float
    penalty: tuple[float, float, float]
    truncation: TruncationRule
    outputs: tuple[str, ...]
    z_threshold: float
    slack_rel: dict
    slack_abs: dict
    bm_dt: float
    raw: dict = field(default_factory=dict, compare=False)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a mapping")
        model = model_from_config(raw.get("model"))
        policy = policy_from_config(raw.get("policy", {"type": "constant", "gamma": 0.0}))
        grid = raw.get("u_grid")
        if not isinstance(grid, (list, tuple)) or not grid:
            raise ConfigError("u_grid", "must be a nonempty list of levels")
        u_grid = tuple(float(u) for u in grid)
        if any(u <= 0 for u in u_grid) or any(b <= a for a, b in zip(u_grid, u_grid[1:])):
            raise ConfigError("u_grid", f"levels must be positive and ascending: {u_grid}")
        estimator = raw.get("estimator", "tilted")
        if estimator not in ("crude", "tilted"):
            raise ConfigError("estimator", f"must be 'crude' or 'tilted', got {estimator!r}")
        n = raw.get("n", 10_000)
        if not isinstance(n, int) or n < 100:
            raise ConfigError("n", f"need an integer >= 100, got {n!r}")
        seed = _parse_seed(raw.get("seed", 0))
        discount = float(raw.get("discount", 0.0))
        if discount < 0:
            raise ConfigError("discount", "must be nonnegative")
        pen = raw.get("penalty", {})
        penalty = (
            float(pen.get("lam", 0.0)),
            float(pen.get("eta", 0.0)),
            float(pen.get("delta", 0.0)),
        )
        tr = raw.get("truncation", {})
        cap = tr.get("hhat_cap")
        trunc = TruncationRule(
            hhat_cap=None if cap is None else float(cap),
            max_events=int(tr.get("max_events", 200_000)),
        )
        outputs = tuple(raw.get("outputs", ["ruin"]))
        for q in outputs:
            if q not in _OUTPUTS:
                raise ConfigError("outputs", f"unknown output {q!r}; choose from {_OUTPUTS}")
        z_threshold = float(raw.get("z_threshold", 3.0))
        slack_rel = dict(_DEFAULT_SLACK_REL)
        slack_rel.update(raw.get("slack_rel", {}))
        slack_abs = dict(_DEFAULT_SLACK_ABS)
        slack_abs.update(raw.get("slack_abs", {}))
        bm_dt = float(raw.get("bm_dt", 1e-3))
        if bm_dt <= 0:
            raise ConfigError("bm_dt", "must be positive")
        cfg = ExperimentConfig(
            model=model,
            policy=policy,
            u_grid=u_grid,
            estimator=estimator,
            n=n,
            seed=seed,
            discount=discount,
            penalty=penalty,
            truncation=trunc,
            outputs=outputs,
            z_threshold=z_threshold,
            slack_rel=slack_rel,
            slack_abs=slack_abs,
            bm_dt=bm_dt,
            raw=raw,
        )
        cfg.validate_penalty()
        return cfg

    def validate_penalty(self) -> None:
        if "edpf" not in self.outputs:
            return
        lam, eta, dp = self.penalty
        try:
            asymptotics.predict_edpf(self.model, lam, eta, dp)
        except TaxruinError as exc:
            raise ConfigError("penalty", str(exc)) from exc

    @property
    def mode(self) -> str:
        return "q" if self.estimator == "tilted" else "p"


def _slab_job(args):
    model, policy, u, mode, seed, lo, hi, tag, discount, trunc = args
    return simulate_slab_arrays(
        model, policy, u, mode, seed, lo, hi, batch_tag=tag, discount=discount, trunc=trunc
    )


def _run_batch_parallel(
    model, policy, u, mode, n, seed, tag, discount, trunc, workers
) -> RecordBatch:
    if isinstance(model, BrownianDrift):
        raise UnsupportedModel("experiment runner drives jump models; see bm_run_batch")
    meta = batch_meta(
        model, policy, u, mode, n, seed, batch_tag=tag, discount=discount, trunc=trunc
    )
    jobs = [
        (model, policy, u, mode, seed, lo, hi, tag, discount, trunc)
        for lo, hi in slab_bounds(n)
    ]
    if workers <= 1 or len(jobs) == 1:
        slabs = [_slab_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            slabs = list(pool.map(_slab_job, jobs))
    return assemble_batch(meta, slabs)


def _experiment_batch(cfg: ExperimentConfig, u, tag, policy, workers) -> RecordBatch:
    if isinstance(cfg.model, BrownianDrift):
        return bm_run_batch(
            cfg.model,
            policy,
            u,
            cfg.mode,
            cfg.n,
            cfg.seed,
            dt=cfg.bm_dt,
            batch_tag=tag,
            discount=cfg.discount,
            trunc=cfg.truncation,
        )
    return _run_batch_parallel(
        cfg.model, policy, u, cfg.mode, cfg.n, cfg.seed, tag, cfg.discount, cfg.truncation, workers
    )


def _fmt(x) -> str:
    """Shortest-roundtrip decimal text for report fields."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


@dataclass
class ReportRow:
    u: float
    quantity: str
    predicted: Optional[float]
    estimate: Optional[float]
    stderr: Optional[float]
    n: int
    z: Optional[float]
    passed: Optional[bool]
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "u": self.u,
            "quantity": self.quantity,
            "predicted": _fmt(self.predicted),
            "estimate": _fmt(self.estimate),
            "stderr": _fmt(self.stderr),
            "n": self.n,
            "z": _fmt(self.z),
            "pass": "" if self.passed is None else self.passed,
            "note": self.note,
        }


def _judge(cfg: ExperimentConfig, quantity: str, predicted, estimate, stderr, n, note=""):
    """Compare an estimate to its prediction with the configured tolerances."""
    if predicted is None or estimate is None or not math.isfinite(predicted):
        return ReportRow(math.nan, quantity, predicted, estimate, stderr, n, None, None, note)
    tol_abs = cfg.slack_abs.get(quantity, 0.0)
    tol_rel = cfg.slack_rel.get(quantity, 0.0) * abs(predicted)
    z = (estimate - predicted) / stderr if stderr and stderr > 0 else math.inf
    tol = max(tol_abs, tol_rel, cfg.z_threshold * (stderr or 0.0))
    passed = abs(estimate - predicted) <= tol
    return ReportRow(math.nan, quantity, predicted, estimate, stderr, n, z, passed, note)


def _rows_for_u(cfg: ExperimentConfig, u: float, u_index: int, workers: int) -> tuple[list, dict]:
    """All requested quantity rows at one capital level."""
    rows: list[ReportRow] = []
    hists: dict = {}
    main = _experiment_batch(cfg, u, 2 * u_index, cfg.policy, workers)
    alpha = main.meta.alpha
    scale = math.exp(alpha * u) if alpha is not None else None

    reflected = isinstance(cfg.policy, Constant) and cfg.policy.gamma == 1.0

    if "ruin" in cfg.outputs:
        est = estimators.ruin_prob(main)
        note = ""
        if reflected:
            predicted = 1.0
            note = "reflected case: P(ruin)=1, no Cramer comparison"
        else:
            try:
                pred = asymptotics.predict_ruin_constant(cfg.model, cfg.policy)
                predicted = pred.value * math.exp(-alpha * u) if pred.finite else math.inf
                if not pred.finite:
                    note = f"divergent limit ({pred.condition} fails)"
            except NeedsEmpiricalUpsilon:
                predicted = None
                note = "no closed-form Cramer constant; use ratio output"
        if main.meta.residual_scale is not None:
            note = (note + "; " if note else "") + (
                f"truncation residual scale {main.meta.residual_scale:.3g}"
            )
        rows.append(_judge(cfg, "ruin", predicted, est.mean, est.stderr, est.n, note))

    if "ratio" in cfg.outputs:
        if not isinstance(cfg.policy, Constant) or cfg.policy.gamma >= 1.0:
            rows.append(
                ReportRow(u, "ratio", None, None, None, cfg.n, None, None,
                          "ratio output needs a constant policy with gamma < 1")
            )
        else:
            notax = _experiment_batch(cfg, u, 2 * u_index + 1, Constant(0.0), workers)
            est_g = estimators.ruin_prob(main)
            est_0 = estimators.ruin_prob(notax)
            pred = asymptotics.predict_ruin_ratio(cfg.model, cfg.policy.gamma)
            if est_0.mean > 0:
                ratio = est_g.mean / est_0.mean
                rse = math.hypot(
                    est_g.stderr / est_g.mean if est_g.mean else math.inf,
                    est_0.stderr / est_0.mean,
                )
                rows.append(_judge(cfg, "ratio", pred.value, ratio, abs(ratio) * rse, est_g.n))
            else:
                rows.append(ReportRow(u, "ratio", pred.value, None, None, est_g.n,
                                      None, None, "no ruins in no-tax batch"))

    if "edpf" in cfg.outputs:
        lam, eta, dp = cfg.penalty
        pred = asymptotics.predict_edpf(cfg.model, lam, eta, dp)
        est = estimators.edpf(main, lam, eta, dp)
        rows.append(_judge(cfg, "edpf", pred.value, est.mean, est.stderr, est.n))

    if "tax" in cfg.outputs:
        try:
            pred = asymptotics.predict_tax_value(cfg.model, cfg.policy, cfg.discount)
            predicted = pred.value if pred.finite else math.inf
            note = "" if pred.finite else f"divergent limit ({pred.condition} fails)"
        except UnsupportedModel as exc:
            predicted, note = None, str(exc)
        est = estimators.conditional_mean(main, main.disc_tax)
        rows.append(_judge(cfg, "tax", predicted, est.mean, est.stderr, est.n, note))

    if "joint" in cfg.outputs:
        try:
            refs = asymptotics.joint_law_references(cfg.model)
        except UnsupportedModel:
            refs = None
        summary = estimators.joint_law(main, references=refs)
        if refs:
            for name in ("overshoot", "depth", "undershoot"):
                q = f"joint_ks_{name}"
                rows.append(_judge(cfg, q, 0.0, summary.ks[name], 0.0, summary.n_conditioned))
        rows.append(
            _judge(cfg, "joint_mass_undershoot_below_depth", 0.0,
                   summary.mass_undershoot_below_depth, 0.0, summary.n_conditioned)
        )
        hists[u] = summary

    if "diagnostic" in cfg.outputs:
        est = estimators.first_excursion_ratio(main)
        rows.append(_judge(cfg, "diagnostic", 0.0, est.mean, est.stderr, est.n,
                           "fraction of ruin not on the first excursion over u"))

    for row in rows:
        row.u = u
    return rows, hists


def run_experiment(
    cfg: ExperimentConfig, workers: int = 1, out_dir: Optional[str] = None
) -> dict:
    """Run the configured experiment and return (optionally write) the report."""
    rows: list[ReportRow] = []
    hists: dict = {}
    timings: list[str] = []
    for i, u in enumerate(cfg.u_grid):
        t0 = time.perf_counter()
        try:
            u_rows, u_hists = _rows_for_u(cfg, u, i, workers)
        except TaxruinError as exc:
            u_rows = [ReportRow(u, q, None, None, None, cfg.n, None, None,
                                f"failed: {exc}") for q in cfg.outputs]
            u_hists = {}
        rows.extend(u_rows)
        hists.update(u_hists)
        timings.append(f"u={u}: {time.perf_counter() - t0:.2f}s")

    report = {
        "format": "taxruin-report-v1",
        "package_version": _package_version(),
        "seed": cfg.seed,
        "estimator": cfg.estimator,
        "n": cfg.n,
        "config": _normalized_config(cfg),
        "rows": [r.as_dict() for r in rows],
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_bytes(render_report_json(report))
        (out / "table.csv").write_bytes(render_table_csv(report["rows"]))
        for u, summary in hists.items():
            for name in summary.masses:
                path = out / f"hist_{name}_u{_fmt(float(u))}.csv"
                path.write_bytes(_render_hist_csv(summary.edges[name], summary.masses[name]))
        (out / "run.log").write_text("\n".join(timings) + "\n")
    return report


def _package_version() -> str:
    from . import __version__

    return __version__


def _normalized_config(cfg: ExperimentConfig) -> dict:
    raw = dict(cfg.raw)
    raw.setdefault("estimator", cfg.estimator)
    raw.setdefault("n", cfg.n)
    raw["seed"] = cfg.seed
    return raw


def render_report_json(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n").encode()


def render_table_csv(rows: list[dict]) -> bytes:
    lines = ["u,quantity,predicted,estimate,stderr,n,z"]
    for r in rows:
        lines.append(
            ",".join(
                [_fmt(r["u"]), r["quantity"], r["predicted"], r["estimate"],
                 r["stderr"], str(r["n"]), r["z"]]
            )
        )
    return ("\n".join(lines) + "\n").encode()


def _render_hist_csv(edges: np.ndarray, masses: np.ndarray) -> bytes:
    lines = ["lo,hi,mass"]
    for lo, hi, m in zip(edges[:-1], edges[1:], masses):
        lines.append(f"{_fmt(float(lo))},{_fmt(float(hi))},{_fmt(float(m))}")
    return ("\n".join(lines) + "\n").encode()


def _load_config(path: str, seed_override: Optional[str]) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("config", f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if seed_override is not None:
        raw["seed"] = seed_override
    return ExperimentConfig.from_dict(raw)


def _records_csv(batch: RecordBatch) -> str:
    cols = [
        "replica", "ruined", "truncated", "step_limited", "first_excursion",
        "tau", "g", "undershoot", "overshoot", "depth", "duration",
        "tax", "disc_tax", "weight", "x_final", "events",
    ]
    lines = [",".join(cols)]
    for i in range(len(batch)):
        r = batch.row(i)
        lines.append(",".join(_fmt(v) for v in (
            i, r.ruined, r.truncated, r.step_limited, r.first_excursion,
            r.tau, r.g, r.undershoot, r.overshoot, r.depth, r.duration,
            r.tax, r.disc_tax, r.weight, r.x_final, r.events,
        )))
    return "\n".join(lines) + "\n"


def _records_from_csv(path: Path, meta: BatchMeta) -> RecordBatch:
    text = path.read_text().strip().splitlines()
    header = text[0].split(",")
    data = {name: [] for name in header}
    for line in text[1:]:
        for name, val in zip(header, line.split(",")):
            data[name].append(val)

    def fa(name, dtype=float):
        if dtype is bool:
            return np.array([v == "true" for v in data[name]])
        return np.array([float(v) if v != "nan" else np.nan for v in data[name]], dtype=dtype)

    arrays = {
        "ruined": fa("ruined", bool),
        "truncated": fa("truncated", bool),
        "step_limited": fa("step_limited", bool),
        "first_excursion": fa("first_excursion", bool),
        "events": fa("events").astype(np.int64),
    }
    for name in ("tau", "g", "undershoot", "overshoot", "depth", "duration",
                 "tax", "disc_tax", "weight", "x_final"):
        arrays[name] = fa(name)
    return RecordBatch(meta, arrays)


def _meta_to_dict(meta: BatchMeta, cfg: ExperimentConfig) -> dict:
    return {
        "model": cfg.raw["model"],
        "policy": cfg.raw.get("policy", {"type": "constant", "gamma": 0.0}),
        "u": meta.u,
        "mode": meta.mode,
        "discount": meta.discount,
        "seed": meta.seed,
        "batch_tag": meta.batch_tag,
        "n": meta.n,
        "alpha": meta.alpha,
        "hhat_cap": meta.hhat_cap,
        "residual_scale": meta.residual_scale,
        "approximate": meta.approximate,
    }


def _meta_from_dict(d: dict) -> BatchMeta:
    return BatchMeta(
        model=model_from_config(d["model"]),
        policy=policy_from_config(d["policy"]),
        u=float(d["u"]),
        mode=d["mode"],
        discount=float(d["discount"]),
        seed=int(d["seed"]),
        batch_tag=int(d["batch_tag"]),
        n=int(d["n"]),
        alpha=d["alpha"],
        hhat_cap=d["hhat_cap"],
        residual_scale=d["residual_scale"],
        approximate=bool(d.get("approximate", False)),
    )


def _cmd_predict(cfg: ExperimentConfig) -> int:
    for u in cfg.u_grid:
        alpha = lundberg_root(cfg.model)
        print(f"u={_fmt(u)}  alpha={_fmt(alpha)}")
        if "ruin" in cfg.outputs:
            try:
                pred = asymptotics.predict_ruin_constant(cfg.model, cfg.policy)
                lim = pred.value * math.exp(-alpha * u) if pred.finite else math.inf
                print(f"  ruin constant: {_fmt(pred.value)}  (finite: {pred.finite}, "
                      f"condition: {pred.condition or 'none'});  at u: {_fmt(lim)}")
            except NeedsEmpiricalUpsilon as exc:
                print(f"  ruin constant: empirical ({exc})")
        if "ratio" in cfg.outputs and isinstance(cfg.policy, Constant):
            pred = asymptotics.predict_ruin_ratio(cfg.model, cfg.policy.gamma)
            print(f"  ruin ratio: {_fmt(pred.value)}")
        if "edpf" in cfg.outputs:
            lam, eta, dp = cfg.penalty
            pred = asymptotics.predict_edpf(cfg.model, lam, eta, dp)
            print(f"  edpf: {_fmt(pred.value)}")
        if "tax" in cfg.outputs:
            pred = asymptotics.predict_tax_value(cfg.model, cfg.policy, cfg.discount)
            print(f"  tax value: {_fmt(pred.value)}  (finite: {pred.finite}, "
                  f"condition: {pred.condition or 'none'})")
    return 0


def _cmd_simulate(cfg: ExperimentConfig, out_dir: str, workers: int) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, u in enumerate(cfg.u_grid):
        batch = _experiment_batch(cfg, u, 2 * i, cfg.policy, workers)
        stem = f"records_u{_fmt(u)}"
        (out / f"{stem}.csv").write_text(_records_csv(batch))
        (out / f"{stem}.meta.json").write_text(
            json.dumps(_meta_to_dict(batch.meta, cfg), sort_keys=True, indent=2) + "\n"
        )
        print(f"wrote {out / stem}.csv ({len(batch)} records)")
    return 0


def _cmd_estimate(records_path: str) -> int:
    path = Path(records_path)
    meta_path = Path(str(path)[: -len(".csv")] + ".meta.json") if str(path).endswith(
        ".csv"
    ) else Path(str(path) + ".meta.json")
    meta = _meta_from_dict(json.loads(meta_path.read_text()))
    batch = _records_from_csv(path, meta)
    est = estimators.ruin_prob(batch)
    print(f"ruin probability: {_fmt(est.mean)}  stderr {_fmt(est.stderr)}  n {est.n}")
    if batch.n_ruined:
        tax_est = estimators.conditional_mean(batch, batch.disc_tax)
        print(f"conditional discounted tax: {_fmt(tax_est.mean)}  stderr {_fmt(tax_est.stderr)}")
        fe = estimators.first_excursion_ratio(batch)
        print(f"late-excursion ruin fraction: {_fmt(fe.mean)}  stderr {_fmt(fe.stderr)}")
    return 0


def _cmd_validate(
    cfg: ExperimentConfig, out_dir: Optional[str], workers: int, fmt: str = "csv"
) -> int:
    report = run_experiment(cfg, workers=workers, out_dir=out_dir)
    failed = [r for r in report["rows"] if r["pass"] is False]
    for r in report["rows"]:
        if fmt == "json":
            print(json.dumps(r, sort_keys=True))
        else:
            status = {True: "PASS", False: "FAIL", "": "  --"}[r["pass"]]
            print(f"[{status}] u={r['u']} {r['quantity']}: predicted={r['predicted']} "
                  f"estimate={r['estimate']} stderr={r['stderr']} z={r['z']} {r['note']}")
    return 3 if failed else 0


def _cmd_trace(cfg: ExperimentConfig, replica: int) -> int:
    u = cfg.u_grid[0]
    if isinstance(cfg.model, BrownianDrift):
        raise ConfigError("model", "trace supports jump models only")
    rec = run_path(
        cfg.model,
        cfg.policy,
        u,
        cfg.mode,
        seed=cfg.seed,
        replica=replica,
        discount=cfg.discount,
        trunc=cfg.truncation,
        collect_log=True,
    )
    print("t,kind,X,Xmin,R,tax")
    for t, kind, x, xmin, r, tax in rec.log:
        print(f"{_fmt(t)},{kind},{_fmt(x)},{_fmt(xmin)},{_fmt(r)},{_fmt(tax)}")
    print(f"# ruined={rec.ruined} truncated={rec.truncated} tau={_fmt(rec.tau)} "
          f"g={_fmt(rec.g)} undershoot={_fmt(rec.undershoot)} overshoot={_fmt(rec.overshoot)} "
          f"depth={_fmt(rec.depth)} tax={_fmt(rec.tax)} weight={_fmt(rec.weight)}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="taxruin",
        description="Simulation and asymptotics for taxed Levy insurance risk processes",
    )
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--seed", default=None, help="override the config seed (decimal or hex)")
    parser.add_argument(
        "--workers",
        type=int,
        default=int(os.environ.get("TAXRUIN_WORKERS", "1")),
        help="worker processes for batch simulation",
    )
    parser.add_argument("--out", default=None, help="output directory for reports and tables")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="stdout row format for validate (files always include both)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", help="print analytic limits, no simulation")
    sub.add_parser("simulate", help="dump raw per-path records")
    p_est = sub.add_parser("estimate", help="estimates from a dumped record file")
    p_est.add_argument("records", help="records CSV written by `simulate`")
    sub.add_parser("validate", help="full pipeline with pass/fail comparisons")
    p_tr = sub.add_parser("trace", help="event log of a single path")
    p_tr.add_argument("--replica", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "predict":
            return _cmd_predict(cfg)
        if args.command == "simulate":
            return _cmd_simulate(cfg, args.out or ".", args.workers)
        if args.command == "estimate":
            return _cmd_estimate(args.records)
        if args.command == "validate":
            return _cmd_validate(cfg, args.out, args.workers, args.format)
        if args.command == "trace":
            return _cmd_trace(cfg, args.replica)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except TaxruinError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
