"""Theorem-level experiment harnesses.

Each experiment audits its hypotheses, Monte Carlos over the family parameter
(projections or rotations) and over offsets (sampled two ways: through the
measure itself for the almost-everywhere statements, and on a uniform grid
for the positively-many-offsets statements), fits a box dimension per sample,
and aggregates quantile verdicts against the predicted dimension.

Determinism contract: every sample is keyed by (master seed, stream, index),
samples are reduced in index order, and reports contain no timestamps, so a
rerun with the same config and seed is byte-identical regardless of the
worker count.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Any, Callable

import numpy as np

from . import boxdim, harmonic
from .boxdim import DyadicCover, cover_from_ifs, product_cover, scale_ladder
from .fractal_measures import (
    DEFAULT_ATOM_BUDGET,
    DiscreteMeasure,
    IfsSpec,
    build_cantor_ifs,
    frostman_constant,
    lower_density_estimate,
    natural_measure,
    product_measure,
)
from .geometry import ProjectionFamily, l2_density_functional, random_rotation
from .seeding import STREAM_OFFSET, STREAM_Z, rng_for

SCENARIOS = ("slice", "product_slice", "intersection", "identity_check", "audit")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class SetConfig:
    """One self-similar factor."""

    ambient_dim: int
    target_dim: float
    generation: int
    layout: str = "corner"
    branches_per_axis: int | None = None

    def build_ifs(self) -> IfsSpec:
        return build_cantor_ifs(
            self.ambient_dim, self.target_dim, self.layout, self.branches_per_axis
        )


@dataclass
class FamilyConfig:
    kind: str = "grassmannian"
    m: int = 1
    t_range: tuple[float, float] = (0.5, 2.0)

    def build(self, n: int, seed: int) -> ProjectionFamily:
        if self.kind == "grassmannian":
            return ProjectionFamily("grassmannian", n=n, m=self.m, sampler_seed=seed)
        return ProjectionFamily(
            self.kind, n=n, t_range=tuple(self.t_range), sampler_seed=seed
        )


@dataclass
class SampleConfig:
    lambda_samples: int = 50
    pushforward_offsets: int = 25
    uniform_offsets: int = 25


@dataclass
class ToleranceConfig:
    band: float = 0.12
    good_fraction_min: float = 0.05
    upper_slack: float = 0.15
    upper_violation_max: float = 0.10
    require_q25: bool = True
    control_median_max: float | None = None
    identity_error_max: float = 0.05
    tail_growth_max: float = 1.1


@dataclass
class IdentityConfig:
    rotations: int = 200
    cutoff: float = 64.0
    spacing: float = 0.125
    t_prime: float = 1.1
    tail_cutoffs: tuple[float, ...] = (16.0, 32.0, 64.0, 128.0)


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int = 0
    sets: list[SetConfig] = field(default_factory=list)
    family: FamilyConfig = field(default_factory=FamilyConfig)
    samples: SampleConfig = field(default_factory=SampleConfig)
    tolerance: ToleranceConfig = field(default_factory=ToleranceConfig)
    identity: IdentityConfig = field(default_factory=IdentityConfig)
    delta_factor: float = 1.0
    scale_max_fraction: float = 0.25
    budget_atoms: int = DEFAULT_ATOM_BUDGET
    predicted_dim: float | None = None
    audit_enabled: bool = True

    # -- dict round trip ----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"]["t_range"] = list(self.family.t_range)
        d["identity"]["tail_cutoffs"] = list(self.identity.tail_cutoffs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        sets = [SetConfig(**s) for s in d.pop("sets", [])]
        family = FamilyConfig(**_subdict(d.pop("family", {}), FamilyConfig))
        if isinstance(family.t_range, list):
            family.t_range = tuple(family.t_range)
        samples = SampleConfig(**_subdict(d.pop("samples", {}), SampleConfig))
        tolerance = ToleranceConfig(**_subdict(d.pop("tolerance", {}), ToleranceConfig))
        identity = IdentityConfig(**_subdict(d.pop("identity", {}), IdentityConfig))
        if isinstance(identity.tail_cutoffs, list):
            identity.tail_cutoffs = tuple(identity.tail_cutoffs)
        known = {f for f in cls.__dataclass_fields__}
        rest = {k: v for k, v in d.items() if k in known}
        return cls(sets=sets, family=family, samples=samples, tolerance=tolerance,
                   identity=identity, **rest)

    # -- hashing --------------------------------------------------------------

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # -- derived quantities ---------------------------------------------------

    def total_set_dim(self) -> float:
        return sum(s.target_dim for s in self.sets)

    def predicted(self) -> float | None:
        if self.predicted_dim is not None:
            return self.predicted_dim
        if self.scenario in ("slice", "product_slice"):
            return self.total_set_dim() - self.family.m if self.sets else None
        if self.scenario == "intersection":
            if len(self.sets) == 2:
                n = self.sets[0].ambient_dim
                return self.sets[0].target_dim + self.sets[1].target_dim - n
        return None


def _subdict(d: dict, cls) -> dict:
    fields = set(cls.__dataclass_fields__)
    return {k: v for k, v in d.items() if k in fields}


def validate_config(config: ExperimentConfig) -> list[dict]:
    """Schema and hypothesis diagnostics; errors stop a run, warnings do not."""
    diags: list[dict] = []

    def err(fieldname: str, msg: str) -> None:
        diags.append({"level": "error", "field": fieldname, "message": msg})

    def warn(fieldname: str, msg: str) -> None:
        diags.append({"level": "warning", "field": fieldname, "message": msg})

    if config.scenario not in SCENARIOS:
        err("scenario", f"unknown scenario {config.scenario!r}; expected one of {SCENARIOS}")
        return diags
    if config.seed is None:
        warn("seed", "no seed given; default-seed policy uses master seed 0")
    for name in ("band", "good_fraction_min", "upper_slack", "upper_violation_max"):
        if getattr(config.tolerance, name) <= 0:
            err(f"tolerance.{name}", "tolerances must be positive")
    if config.scenario in ("slice", "product_slice", "intersection", "audit"):
        if not config.sets:
            err("sets", "at least one set is required")
        for i, s in enumerate(config.sets):
            if not (0 < s.target_dim <= s.ambient_dim):
                err(f"sets[{i}].target_dim", "must lie in (0, ambient_dim]")
            if s.generation < 1:
                err(f"sets[{i}].generation", "generation must be >= 1")
            try:
                s.build_ifs()
            except ValueError as e:
                err(f"sets[{i}]", str(e))
    if config.scenario in ("slice", "product_slice"):
        n_total = sum(s.ambient_dim for s in config.sets)
        kind = config.family.kind
        if kind == "grassmannian":
            if not (1 <= config.family.m < max(n_total, 2)):
                err("family.m", "need 1 <= m < total ambient dimension")
        else:
            if len(config.sets) != 2 or config.sets[0].ambient_dim != config.sets[1].ambient_dim:
                err("family.kind", f"{kind} family needs two factors of equal ambient dimension")
        s_total = config.total_set_dim()
        m = config.family.m if kind == "grassmannian" else config.sets[0].ambient_dim
        if s_total <= m:
            warn(
                "sets",
                f"hypothesis violated: total dimension {s_total:.4g} <= m = {m} "
                "(the slicing theorem needs s > m); run treated as a negative control",
            )
    if config.scenario == "intersection":
        if len(config.sets) != 2:
            err("sets", "intersection scenario needs exactly two sets")
        elif config.sets[0].ambient_dim != config.sets[1].ambient_dim:
            err("sets", "intersection sets must share the ambient dimension")
        else:
            n = config.sets[0].ambient_dim
            s, t = config.sets[0].target_dim, config.sets[1].target_dim
            if s + (n - 1) * t / n <= n:
                warn(
                    "sets",
                    f"hypothesis violated: s + (n-1)t/n = {s + (n - 1) * t / n:.4g} <= n = {n}; "
                    "run treated as a negative control",
                )
    if config.scenario == "identity_check":
        if len(config.sets) != 2:
            err("sets", "identity check needs two sets (the measure pair)")
        if config.identity.rotations < 1:
            err("identity.rotations", "need at least one rotation")
    for name, value in (
        ("samples.lambda_samples", config.samples.lambda_samples),
        ("samples.pushforward_offsets", config.samples.pushforward_offsets),
        ("samples.uniform_offsets", config.samples.uniform_offsets),
    ):
        if value < 0 or (name.endswith("lambda_samples") and value < 1):
            err(name, "sample counts must be positive")
    return diags


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    scenario: str
    config: dict
    config_hash: str
    predicted_dim: float | None
    audit: dict | None
    samples: list[dict]
    summary: dict
    verdicts: list[dict]
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "config_hash": self.config_hash,
            "predicted_dim": self.predicted_dim,
            "audit": self.audit,
            "summary": self.summary,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "samples": self.samples,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)

    def write_csvs(self, samples_path, scaling_path) -> None:
        import csv

        with open(samples_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample_index", "stream", "param_index", "offset", "size",
                 "dim", "r_squared", "reliable", "skipped"]
            )
            for rec in self.samples:
                writer.writerow([
                    rec["sample_index"], rec["stream"], rec["param_index"],
                    json.dumps(rec.get("offset")), rec.get("size", 0),
                    _fmt(rec.get("dim")), _fmt(rec.get("r_squared")),
                    rec.get("reliable", ""), rec.get("skipped") or "",
                ])
        with open(scaling_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_index", "side", "count"])
            for rec in self.samples:
                for side, count in rec.get("scales", []):
                    writer.writerow([rec["sample_index"], repr(float(side)), repr(float(count))])


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _quantiles(values: list[float]) -> dict:
    if not values:
        return {"median": None, "q25": None, "q75": None, "iqr": None}
    arr = np.asarray(values)
    q25, med, q75 = (float(np.percentile(arr, q)) for q in (25, 50, 75))
    return {"median": med, "q25": q25, "q75": q75, "iqr": q75 - q25}


# ---------------------------------------------------------------------------
# Shared construction
# ---------------------------------------------------------------------------

def build_measure_and_cover(
    sets: list[SetConfig], budget: int
) -> tuple[DiscreteMeasure, DyadicCover]:
    """Product measure and matching cover; atoms and cell centers coincide."""
    measures, covers = [], []
    for s in sets:
        ifs = s.build_ifs()
        measures.append(natural_measure(ifs, s.generation, budget))
        covers.append(cover_from_ifs(ifs, s.generation, budget))
    mu, cover = measures[0], covers[0]
    for m, c in zip(measures[1:], covers[1:]):
        mu = product_measure(mu, m, budget)
        cover = product_cover(cover, c, budget)
    return mu, cover


def _ladder_for(cover: DyadicCover, delta: float, max_fraction: float) -> list[float]:
    top = cover.diameter * max_fraction
    sides = scale_ladder(delta, top)
    if len(sides) < 4:
        raise ValueError(
            f"only {len(sides)} usable scales between delta={delta:.3g} and "
            f"{top:.3g}; increase the generation"
        )
    return sides


# ---------------------------------------------------------------------------
# Assumption audit
# ---------------------------------------------------------------------------

def _audit_one(mu: DiscreteMeasure, s: float) -> dict:
    cell = max(mu.cell_size, 1e-12)
    # the upper end never collapses below unit scale, so degenerate supports
    # (point masses) still get audited across a real range of radii
    r_lo, r_hi = 4 * cell, max(mu.diameter / 2, 0.5, 8 * cell)
    radii = list(np.geomspace(r_lo, r_hi, 6))
    sample = min(len(mu), 512)
    per_radius = [
        frostman_constant(mu, s, sample, [r]) for r in radii
    ]
    frostman = max(per_radius)
    frostman_stable = max(per_radius) / min(per_radius) <= 4.0
    lower = lower_density_estimate(mu, s, radii, sample_centers=min(len(mu), 2048))
    return {
        "s": s,
        "radii": [float(r) for r in radii],
        "frostman_constant": float(frostman),
        "frostman_by_radius": [float(v) for v in per_radius],
        "frostman_stable": bool(frostman_stable),
        "lower_density": float(lower),
        "lower_density_positive": bool(lower > 0),
    }


def assumption_audit(config: ExperimentConfig) -> dict:
    """Frostman, lower-density and (for slicing scenarios) L2 audits.

    Failed audits do not abort: they mark downstream verdicts as running on
    uncertified hypotheses.
    """
    out: dict[str, Any] = {"sets": []}
    if config.scenario in ("slice", "product_slice", "audit"):
        mu, _ = build_measure_and_cover(config.sets, config.budget_atoms)
        s_total = config.total_set_dim()
        section = _audit_one(mu, s_total)
        out["sets"].append(section)
        n_total = mu.ambient_dim
        family = config.family.build(
            n_total if config.family.kind == "grassmannian" else config.sets[0].ambient_dim,
            config.seed,
        )
        delta0 = max(0.04, 8 * mu.cell_size)
        values = []
        for h in range(3):
            d = delta0 / 2 ** h
            if d < 2 * mu.cell_size:
                break
            values.append(
                l2_density_functional(family, mu, lambda_samples=8, delta=d, u_spacing=d / 2)
            )
        stable = bool(values) and max(values) / max(min(values), 1e-300) <= 1.15
        out["l2_functional"] = {
            "deltas": [delta0 / 2 ** h for h in range(len(values))],
            "values": [float(v) for v in values],
            "stable_within_15pct": stable,
        }
        out["certified"] = bool(
            section["frostman_stable"] and section["lower_density_positive"] and stable
        )
    else:
        for s_cfg in config.sets:
            mu_i = natural_measure(s_cfg.build_ifs(), s_cfg.generation, config.budget_atoms)
            out["sets"].append(_audit_one(mu_i, s_cfg.target_dim))
        out["certified"] = bool(
            all(sec["frostman_stable"] and sec["lower_density_positive"] for sec in out["sets"])
        )
    return out


# ---------------------------------------------------------------------------
# Slice experiments (plain and product: same machinery)
# ---------------------------------------------------------------------------

_CTX: dict[str, Any] = {}


def _slice_context(config: ExperimentConfig) -> dict:
    mu, cover = build_measure_and_cover(config.sets, config.budget_atoms)
    n_total = mu.ambient_dim
    if config.family.kind == "grassmannian":
        family = config.family.build(n_total, config.seed)
    else:
        family = config.family.build(config.sets[0].ambient_dim, config.seed)
    delta = config.delta_factor * cover.cube_side
    sides = _ladder_for(cover, delta, config.scale_max_fraction)
    return {
        "centers": cover.centers,
        "family": family,
        "delta": delta,
        "sides": sides,
        "seed": config.seed,
        "n_pf": config.samples.pushforward_offsets,
        "n_uni": config.samples.uniform_offsets,
    }


def _slice_lambda_task(i: int) -> list[dict]:
    ctx = _CTX
    centers = ctx["centers"]
    P = ctx["family"].sample(i)
    m = P.target_dim
    proj = centers @ P.rows.T
    fiber_basis = P.complement_basis()
    rng = rng_for(ctx["seed"], STREAM_OFFSET, i)
    n_pf, n_uni = ctx["n_pf"], ctx["n_uni"]
    offsets: list[tuple[str, np.ndarray]] = []
    if n_pf:
        for j in rng.integers(0, len(centers), n_pf):
            offsets.append(("pushforward", proj[j]))
    if n_uni:
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        if m == 1:
            us = lo + (np.arange(n_uni) + 0.5)[:, None] * (hi - lo) / n_uni
        else:
            k = max(1, int(round(n_uni ** (1.0 / m))))
            axes = [lo[d] + (np.arange(k) + 0.5) * (hi[d] - lo[d]) / k for d in range(m)]
            grids = np.meshgrid(*axes, indexing="ij")
            us = np.column_stack([g.ravel() for g in grids])
        for u in us:
            offsets.append(("uniform", u))
    records = []
    base = i * (n_pf + n_uni + 4)
    param = [float(v) for v in P.rows.ravel()] + [P.scale]
    for j, (stream, u) in enumerate(offsets):
        rec: dict[str, Any] = {
            "sample_index": base + j,
            "param_index": i,
            "stream": stream,
            "offset": [float(v) for v in np.atleast_1d(u)],
            "param": param,
        }
        try:
            dist = np.linalg.norm(proj - np.atleast_1d(u)[None, :], axis=1)
            pts = centers[dist <= ctx["delta"]]
            rec["size"] = int(len(pts))
            if len(pts) == 0:
                rec["dim"] = None
            else:
                counts = boxdim.point_counts(pts @ fiber_basis, ctx["sides"])
                fit = boxdim.dim_fit(counts)
                rec["dim"] = fit.slope
                rec["r_squared"] = fit.r_squared
                rec["reliable"] = fit.reliable
                rec["scales"] = [[float(s), float(c)] for s, c in counts]
        except ValueError as e:
            rec["skipped"] = str(e)
        records.append(rec)
    return records


def _init_worker(config_dict: dict, kind: str) -> None:
    config = ExperimentConfig.from_dict(config_dict)
    global _CTX
    _CTX = _slice_context(config) if kind == "slice" else _intersection_context(config)


def _run_tasks(
    config: ExperimentConfig,
    kind: str,
    task: Callable[[int], list[dict]],
    count: int,
    workers: int,
    progress: Callable[[str], None] | None,
) -> list[dict]:
    records: list[dict] = []
    if workers <= 1:
        _init_worker(config.to_dict(), kind)
        for i in range(count):
            records.extend(task(i))
            if progress and (i + 1) % max(1, count // 10) == 0:
                progress(f"{config.scenario}: {i + 1}/{count} parameter samples")
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(config.to_dict(), kind)
        ) as pool:
            for i, recs in enumerate(pool.map(task, range(count), chunksize=1)):
                records.extend(recs)
                if progress and (i + 1) % max(1, count // 10) == 0:
                    progress(f"{config.scenario}: {i + 1}/{count} parameter samples")
    return records


def _dim_summary(config: ExperimentConfig, records: list[dict], span: float) -> tuple[dict, list[dict], bool]:
    predicted = config.predicted()
    tol = config.tolerance
    pf = [r["dim"] for r in records if r["stream"] == "pushforward" and r.get("dim") is not None]
    uni = [r["dim"] for r in records if r["stream"] == "uniform" and r.get("dim") is not None]
    n_uni_total = sum(1 for r in records if r["stream"] == "uniform" and not r.get("skipped"))
    all_dims = pf + uni
    q_pf = _quantiles(pf)
    q_uni = _quantiles(uni)
    good_uni = (
        sum(1 for d in uni if abs(d - predicted) <= tol.band) / len(uni) if uni else 0.0
    )
    good_pf = (
        sum(1 for d in pf if abs(d - predicted) <= tol.band) / len(pf) if pf else 0.0
    )
    violation = (
        sum(1 for d in all_dims if d > predicted + tol.upper_slack) / len(all_dims)
        if all_dims
        else 0.0
    )
    summary = {
        "n_samples": len(records),
        "n_nonempty": len(all_dims),
        "n_skipped": sum(1 for r in records if r.get("skipped")),
        "pushforward": q_pf,
        "uniform": q_uni,
        "good_fraction_pushforward": good_pf,
        "good_fraction_uniform": good_uni,
        "good_offset_measure_estimate": good_uni * span,
        "empty_fraction_uniform": 1.0 - (len(uni) / n_uni_total if n_uni_total else 0.0),
        "upper_violation_rate": violation,
    }
    verdicts = []
    if tol.control_median_max is not None:
        ok = q_pf["median"] is None or q_pf["median"] <= tol.control_median_max
        verdicts.append({
            "name": "control_median_low", "value": q_pf["median"],
            "threshold": tol.control_median_max, "comparator": "<=", "pass": bool(ok),
        })
        passed = all(v["pass"] for v in verdicts)
        return summary, verdicts, passed
    verdicts.append({
        "name": "median_pushforward_in_band",
        "value": q_pf["median"], "threshold": tol.band, "comparator": "|x - predicted| <=",
        "pass": bool(q_pf["median"] is not None and abs(q_pf["median"] - predicted) <= tol.band),
    })
    if tol.require_q25:
        verdicts.append({
            "name": "q25_pushforward_in_band",
            "value": q_pf["q25"], "threshold": tol.band, "comparator": "|x - predicted| <=",
            "pass": bool(q_pf["q25"] is not None and abs(q_pf["q25"] - predicted) <= tol.band),
        })
    verdicts.append({
        "name": "good_fraction_uniform_positive",
        "value": good_uni, "threshold": tol.good_fraction_min, "comparator": ">",
        "pass": bool(good_uni > tol.good_fraction_min),
    })
    verdicts.append({
        "name": "upper_violation_rate_low",
        "value": violation, "threshold": tol.upper_violation_max, "comparator": "<",
        "pass": bool(violation < tol.upper_violation_max),
    })
    return summary, verdicts, all(v["pass"] for v in verdicts)


def slice_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Slice-dimension experiment for a single set or a product of factors.

    Per sampled projection: offsets drawn through the measure (matching the
    almost-everywhere claim) and on a uniform grid over the projected support
    (matching the positively-many claim); slice dimensions are fitted on the
    fiber-plane coordinates of the slab survivors.
    """
    diags = validate_config(config)
    errors = [d for d in diags if d["level"] == "error"]
    if errors:
        raise ValueError("invalid config: " + "; ".join(d["message"] for d in errors))
    audit = assumption_audit(config) if config.audit_enabled else None
    records = _run_tasks(
        config, "slice", _slice_lambda_task, config.samples.lambda_samples, workers, progress
    )
    # span of the uniform offset grids, for the Lebesgue-measure estimate
    ctx = _slice_context(config)
    spans = []
    for i in range(min(config.samples.lambda_samples, 8)):
        P = ctx["family"].sample(i)
        proj = ctx["centers"] @ P.rows.T
        spans.append(float(np.prod(proj.max(axis=0) - proj.min(axis=0))))
    summary, verdicts, passed = _dim_summary(config, records, float(np.mean(spans)))
    if audit is not None and not audit.get("certified", False):
        for v in verdicts:
            v["note"] = "hypothesis not certified"
    return ExperimentReport(
        scenario=config.scenario,
        config=config.to_dict(),
        config_hash=config.config_hash(),
        predicted_dim=config.predicted(),
        audit=audit,
        samples=records,
        summary=summary,
        verdicts=verdicts,
        passed=passed,
    )


def product_slice_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Product-set slice experiment; requires exactly two factors."""
    if len(config.sets) != 2:
        raise ValueError("product_slice needs exactly two factor sets")
    return slice_experiment(config, workers=workers, progress=progress)


# ---------------------------------------------------------------------------
# Intersection experiment
# ---------------------------------------------------------------------------

def _intersection_context(config: ExperimentConfig) -> dict:
    a_cfg, b_cfg = config.sets
    cover_a = cover_from_ifs(a_cfg.build_ifs(), a_cfg.generation, config.budget_atoms)
    cover_b = cover_from_ifs(b_cfg.build_ifs(), b_cfg.generation, config.budget_atoms)
    delta = config.delta_factor * max(cover_a.cube_side, cover_b.cube_side)
    sides = _ladder_for(cover_a, delta, config.scale_max_fraction)
    return {
        "cover_a": cover_a,
        "cover_b": cover_b,
        "delta": delta,
        "sides": sides,
        "seed": config.seed,
        "n": a_cfg.ambient_dim,
        "n_pf": config.samples.pushforward_offsets,
        "n_uni": config.samples.uniform_offsets,
    }


def _intersection_g_task(i: int) -> list[dict]:
    ctx = _CTX
    cover_a: DyadicCover = ctx["cover_a"]
    cover_b: DyadicCover = ctx["cover_b"]
    n = ctx["n"]
    g = random_rotation(n, ctx["seed"], i)
    tree = boxdim.transformed_tree(cover_b, g)
    gb = cover_b.centers @ g.matrix.T
    rng = rng_for(ctx["seed"], STREAM_Z, i)
    offsets: list[tuple[str, np.ndarray]] = []
    if ctx["n_pf"]:
        xi = cover_a.centers[rng.integers(0, len(cover_a), ctx["n_pf"])]
        yi = gb[rng.integers(0, len(gb), ctx["n_pf"])]
        for x, y in zip(xi, yi):
            offsets.append(("pushforward", x - y))
    if ctx["n_uni"]:
        lo = cover_a.centers.min(axis=0) - gb.max(axis=0)
        hi = cover_a.centers.max(axis=0) - gb.min(axis=0)
        k = max(1, int(round(ctx["n_uni"] ** (1.0 / n))))
        axes = [lo[d] + (np.arange(k) + 0.5) * (hi[d] - lo[d]) / k for d in range(n)]
        grids = np.meshgrid(*axes, indexing="ij")
        for z in np.column_stack([gg.ravel() for gg in grids]):
            offsets.append(("uniform", z))
    records = []
    base = i * (ctx["n_pf"] + ctx["n_uni"] + 4)
    param = [float(v) for v in g.matrix.ravel()]
    for j, (stream, z) in enumerate(offsets):
        rec: dict[str, Any] = {
            "sample_index": base + j,
            "param_index": i,
            "stream": stream,
            "offset": [float(v) for v in z],
            "param": param,
        }
        try:
            dist, _ = tree.query(cover_a.centers - z[None, :], k=1)
            pts = cover_a.centers[dist <= ctx["delta"]]
            rec["size"] = int(len(pts))
            if len(pts) == 0:
                rec["dim"] = None
            else:
                counts = boxdim.point_counts(pts, ctx["sides"])
                fit = boxdim.dim_fit(counts)
                rec["dim"] = fit.slope
                rec["r_squared"] = fit.r_squared
                rec["reliable"] = fit.reliable
                rec["scales"] = [[float(s), float(c)] for s, c in counts]
        except ValueError as e:
            rec["skipped"] = str(e)
        records.append(rec)
    return records


def intersection_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Intersection-dimension experiment over Haar rotations and offsets."""
    diags = validate_config(config)
    errors = [d for d in diags if d["level"] == "error"]
    if errors:
        raise ValueError("invalid config: " + "; ".join(d["message"] for d in errors))
    audit = assumption_audit(config) if config.audit_enabled else None
    records = _run_tasks(
        config, "intersection", _intersection_g_task, config.samples.lambda_samples,
        workers, progress,
    )
    ctx = _intersection_context(config)
    span_lo = ctx["cover_a"].centers.min(axis=0) - ctx["cover_b"].centers.max(axis=0)
    span_hi = ctx["cover_a"].centers.max(axis=0) - ctx["cover_b"].centers.min(axis=0)
    span = float(np.prod(span_hi - span_lo))
    summary, verdicts, passed = _dim_summary(config, records, span)
    if audit is not None and not audit.get("certified", False):
        for v in verdicts:
            v["note"] = "hypothesis not certified"
    return ExperimentReport(
        scenario=config.scenario,
        config=config.to_dict(),
        config_hash=config.config_hash(),
        predicted_dim=config.predicted(),
        audit=audit,
        samples=records,
        summary=summary,
        verdicts=verdicts,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# Identity-check experiment
# ---------------------------------------------------------------------------

def identity_check_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Rotation-average identity error plus the tail-finiteness sweep.

    The tail sweep tracks the truncated integral of |muhat|^2 |xi|^(-beta)
    with beta = (n-1) t' / n under cutoff doubling; growth factors near 1
    signal the finite energy the intersection bound needs, growth staying
    >= 1.3 signals divergence (the negative control).
    """
    diags = validate_config(config)
    errors = [d for d in diags if d["level"] == "error"]
    if errors:
        raise ValueError("invalid config: " + "; ".join(d["message"] for d in errors))
    a_cfg, b_cfg = config.sets
    mu = natural_measure(a_cfg.build_ifs(), a_cfg.generation, config.budget_atoms)
    nu = natural_measure(b_cfg.build_ifs(), b_cfg.generation, config.budget_atoms)
    audit = assumption_audit(config) if config.audit_enabled else None
    ident = config.identity
    grid = harmonic.FrequencyGrid(mu.ambient_dim, ident.cutoff, ident.spacing)
    rel_error = harmonic.rotation_average_identity_check(
        mu, nu, ident.rotations, grid, seed=config.seed
    )
    if progress:
        progress(f"identity_check: relative error {rel_error:.4g}")
    n = mu.ambient_dim
    beta = (n - 1) * ident.t_prime / n
    tail_values = [
        harmonic.frequency_tail_integral(mu, beta, c, radial_step=min(0.25, ident.spacing * 2))
        for c in ident.tail_cutoffs
    ]
    growth = [
        tail_values[i + 1] / tail_values[i] if tail_values[i] > 0 else math.inf
        for i in range(len(tail_values) - 1)
    ]
    tol = config.tolerance
    summary = {
        "identity_relative_error": float(rel_error),
        "rotations": ident.rotations,
        "cutoff": ident.cutoff,
        "tail_exponent": beta,
        "tail_cutoffs": list(ident.tail_cutoffs),
        "tail_values": [float(v) for v in tail_values],
        "tail_growth_factors": [float(gf) for gf in growth],
        "condition_satisfied": bool(n - beta < a_cfg.target_dim),
    }
    verdicts = [{
        "name": "identity_error_small",
        "value": float(rel_error), "threshold": tol.identity_error_max,
        "comparator": "<", "pass": bool(rel_error < tol.identity_error_max),
    }]
    if growth:
        last = growth[-1]
        if summary["condition_satisfied"]:
            verdicts.append({
                "name": "tail_growth_converging",
                "value": float(last), "threshold": tol.tail_growth_max,
                "comparator": "<=", "pass": bool(last <= tol.tail_growth_max),
            })
        else:
            verdicts.append({
                "name": "tail_growth_diverging",
                "value": float(last), "threshold": 1.3,
                "comparator": ">=", "pass": bool(last >= 1.3),
            })
    passed = all(v["pass"] for v in verdicts)
    return ExperimentReport(
        scenario=config.scenario,
        config=config.to_dict(),
        config_hash=config.config_hash(),
        predicted_dim=None,
        audit=audit,
        samples=[],
        summary=summary,
        verdicts=verdicts,
        passed=passed,
    )


def audit_experiment(config: ExperimentConfig, workers: int = 1, progress=None) -> ExperimentReport:
    """Hypothesis audit as a standalone run."""
    diags = validate_config(config)
    errors = [d for d in diags if d["level"] == "error"]
    if errors:
        raise ValueError("invalid config: " + "; ".join(d["message"] for d in errors))
    audit = assumption_audit(config)
    verdicts = [{
        "name": "hypotheses_certified",
        "value": bool(audit.get("certified", False)),
        "threshold": True, "comparator": "==",
        "pass": bool(audit.get("certified", False)),
    }]
    return ExperimentReport(
        scenario="audit",
        config=config.to_dict(),
        config_hash=config.config_hash(),
        predicted_dim=None,
        audit=audit,
        samples=[],
        summary={"certified": bool(audit.get("certified", False))},
        verdicts=verdicts,
        passed=bool(audit.get("certified", False)),
    )


RUNNERS = {
    "slice": slice_experiment,
    "product_slice": product_slice_experiment,
    "intersection": intersection_experiment,
    "identity_check": identity_check_experiment,
    "audit": audit_experiment,
}
