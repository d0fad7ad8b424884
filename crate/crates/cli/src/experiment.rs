//! Executes one experiment config.

use std::path::Path;

use anyhow::{bail, Context, Result};
use polycap::capacities::{
    condenser_capacity, gamma_capacity, sharp_capacity, theta_capacity_with, BoundKind, CapacityResult,
    FunctionClassSpec, ThetaOptions,
};
use polycap::grid::{build_mask, CompactMask, GridCube, GridFunction};
use polycap::poincare::{equivalence_report, poincare_constant, EquivalenceConfig, PoincareMode, PoincareQuery};
use polycap::polynomials::{poly_deviation, CoeffNorm};
use polycap::suites::{check_fixture, random_family, rasterize, FixtureStatus};
use polycap::synthesis::{
    admissible_function, check_synthesis_condition, cost_decreasing, run_synthesis, ConditionOptions,
    SynthesisOptions,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CapacityKind, ClassKind, ExperimentConfig, Kind, ModeKind, NormKind};
use crate::record::{ItemRecord, RunRecord, Verdict};

/// A float as JSON, with non-finite values spelled out.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn item(label: &str, quantity: &str, value: f64, bound: BoundKind, details: Value) -> ItemRecord {
    ItemRecord {
        label: label.to_string(),
        quantity: quantity.to_string(),
        value,
        bound,
        details,
    }
}

fn capacity_item(label: &str, quantity: &str, k: &CompactMask, r: &CapacityResult) -> ItemRecord {
    item(
        label,
        quantity,
        r.value,
        r.bound,
        json!({
            "nodes": k.count(),
            "feasible": r.feasible,
            "residual": num(r.diagnostics.residual),
            "reevaluation_error": num(r.diagnostics.reevaluation_error),
            "starts": r.diagnostics.starts,
            "iterations": r.diagnostics.iterations,
            "notes": r.diagnostics.notes,
        }),
    )
}

pub fn grid(cfg: &ExperimentConfig) -> Result<GridCube> {
    Ok(GridCube::new(cfg.grid.dim, cfg.grid.n, &cfg.center(), cfg.grid.side)?)
}

/// Labelled masks of the explicit sets followed by the seeded family.
pub fn sets(cfg: &ExperimentConfig, q: &GridCube) -> Result<Vec<(String, CompactMask)>> {
    let mut out = Vec::new();
    for s in &cfg.sets {
        let mask = build_mask(q, &s.geometry).with_context(|| format!("set `{}`", s.label))?;
        out.push((s.label.clone(), mask));
    }
    if let Some(f) = &cfg.family {
        if q.dim() != 2 {
            bail!("seeded families live in the unit square; grid.dim = {}", q.dim());
        }
        out.extend(rasterize(q, &random_family(f.seed, f.members))?);
    }
    Ok(out)
}

fn class(cfg: &ExperimentConfig, q: &GridCube, k: &CompactMask) -> Result<FunctionClassSpec> {
    let p = &cfg.params;
    let c = match p.class {
        ClassKind::Partial => FunctionClassSpec::partial(trace_order(cfg), p.m, k.clone())?,
        ClassKind::Full => FunctionClassSpec::full(p.rho, p.m, k.clone())?,
        ClassKind::Unconstrained => FunctionClassSpec::unconstrained(p.m, q),
    };
    Ok(c.with_nonnegative(p.nonnegative))
}

/// The nonnegative class defaults to vanishing values only.
fn trace_order(cfg: &ExperimentConfig) -> usize {
    match cfg.params.s {
        Some(s) => s,
        None if cfg.params.nonnegative => 0,
        None => cfg.trace_order(),
    }
}

fn sharp_rho(cfg: &ExperimentConfig) -> usize {
    cfg.params.sharp_rho.unwrap_or(((cfg.grid.n - 1) / 8).max(1))
}

/// Runs `cfg`; `base` is the directory relative paths are resolved against.
pub fn run(cfg: &ExperimentConfig, base: &Path) -> Result<RunRecord> {
    let q = grid(cfg)?;
    let mut record = RunRecord {
        config_digest: cfg.digest(),
        kind: serde_json::to_value(cfg.kind)?.as_str().unwrap_or_default().to_string(),
        seed: cfg.seed,
        items: Vec::new(),
        verdicts: Vec::new(),
        notes: Vec::new(),
    };
    match cfg.kind {
        Kind::Capacity => capacity(cfg, &q, &mut record)?,
        Kind::Poincare => poincare(cfg, &q, &mut record)?,
        Kind::Equivalence => equivalence(cfg, &q, base, &mut record)?,
        Kind::Synthesis => synthesis(cfg, &q, &mut record)?,
        Kind::SynthesisCondition => condition(cfg, &q, &mut record)?,
        Kind::Deviation => deviation(cfg, &mut record)?,
    }
    Ok(record)
}

fn capacity(cfg: &ExperimentConfig, q: &GridCube, record: &mut RunRecord) -> Result<()> {
    let p = &cfg.params;
    let name = serde_json::to_value(p.capacity)?.as_str().unwrap_or_default().to_string();
    let items = sets(cfg, q)?
        .par_iter()
        .map(|(label, k)| {
            let r = match p.capacity {
                CapacityKind::Gamma => gamma_capacity(q, &class(cfg, q, k)?, p.m, p.k, p.p)?,
                CapacityKind::Theta => {
                    let opts = ThetaOptions {
                        alpha: p.alpha,
                        starts: p.starts,
                        seed: cfg.seed,
                        hint: None,
                    };
                    theta_capacity_with(q, &class(cfg, q, k)?, p.m, p.k, p.p, &opts)?
                }
                CapacityKind::Condenser => condenser_capacity(q, k, p.m, p.p)?,
                CapacityKind::Sharp => sharp_capacity(q, k, p.m, p.p, sharp_rho(cfg))?,
            };
            Ok(capacity_item(label, &name, k, &r))
        })
        .collect::<Result<Vec<_>>>()?;
    record.items = items;
    Ok(())
}

fn poincare(cfg: &ExperimentConfig, q: &GridCube, record: &mut RunRecord) -> Result<()> {
    let p = &cfg.params;
    let mode = match p.mode {
        ModeKind::TwoTerm => PoincareMode::TwoTerm,
        ModeKind::Hedberg => PoincareMode::Hedberg { c0: p.c0 },
    };
    let quantity = match p.mode {
        ModeKind::TwoTerm => "poincare",
        ModeKind::Hedberg => "hedberg",
    };
    record.items = sets(cfg, q)?
        .par_iter()
        .map(|(label, k)| {
            let mut query = PoincareQuery::new(class(cfg, q, k)?, p.k)
                .with_exponents(p.p, p.p0, p.q)
                .with_mode(mode);
            query.samples = p.samples;
            query.seed = cfg.seed;
            let r = poincare_constant(&query).with_context(|| format!("set `{label}`"))?;
            Ok(item(
                label,
                quantity,
                r.value,
                r.bound,
                json!({
                    "nodes": k.count(),
                    "distortion": num(r.distortion),
                    "reevaluation_error": num(r.diagnostics.reevaluation_error),
                    "notes": r.diagnostics.notes,
                }),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(())
}

fn equivalence(cfg: &ExperimentConfig, q: &GridCube, base: &Path, record: &mut RunRecord) -> Result<()> {
    let p = &cfg.params;
    let eq = EquivalenceConfig {
        m: p.m,
        k: p.k,
        p: p.p,
        alpha: p.alpha,
        rho: p.rho,
        sharp_rho: sharp_rho(cfg),
        c0: p.c0,
        theta_starts: p.starts,
        seed: cfg.seed,
    };
    let family = sets(cfg, q)?;
    let report = equivalence_report("config", &family, &eq)?;
    let exact = p.p == 2.0;
    let (eigen, qp) = if exact {
        (BoundKind::ExactEigen, BoundKind::ExactQp)
    } else {
        (BoundKind::UpperBoundMultistart, BoundKind::UpperBound)
    };
    let poincare_bound = if exact { BoundKind::ExactEigen } else { BoundKind::LowerBound };
    for r in &report.members {
        let quantities = [
            ("gamma", r.gamma, eigen),
            ("gamma^-1/p", r.gamma.powf(-1.0 / p.p), eigen),
            ("theta", r.theta, BoundKind::UpperBoundMultistart),
            ("condenser", r.condenser, qp),
            ("sharp", r.sharp, qp),
            ("poincare", r.poincare, poincare_bound),
            ("hedberg", r.hedberg, poincare_bound),
        ];
        for (name, v, bound) in quantities {
            record.items.push(item(
                &r.label,
                name,
                v,
                bound,
                json!({"nodes": r.nodes, "degenerate": r.degenerate, "theta_feasible": r.theta_feasible}),
            ));
        }
    }
    for i in &report.intervals {
        record.items.push(item(
            "interval",
            &i.name,
            i.width,
            BoundKind::Sampled,
            json!({"lower": num(i.lower), "upper": num(i.upper), "members": i.members}),
        ));
        record.verdicts.push(Verdict::new(
            format!("width {}", i.name),
            i.width <= p.max_width,
            format!("{:.4} (limit {})", i.width, p.max_width),
        ));
    }
    if let Some(fixture) = cfg.output.as_ref().and_then(|o| o.fixture.as_ref()) {
        let path = base.join(fixture);
        let accepted = record.verdicts.iter().all(|v| v.passed);
        let value = serde_json::to_value(&report.intervals)?;
        let status = check_fixture(&path, &value, accepted)?;
        eprintln!("fixture {}: {status:?}", path.display());
        // Identical wording whether the fixture was just written or re-read.
        let (passed, detail) = match status {
            FixtureStatus::Written | FixtureStatus::Reproduced => (true, "intervals match the frozen fixture"),
            FixtureStatus::Mismatch => (false, "intervals differ from the frozen fixture"),
            FixtureStatus::Skipped => (false, "run not accepted, nothing frozen"),
        };
        record.verdicts.push(Verdict::new(format!("fixture {fixture}"), passed, detail));
    }
    Ok(())
}

fn synthesis(cfg: &ExperimentConfig, q: &GridCube, record: &mut RunRecord) -> Result<()> {
    let p = &cfg.params;
    let (label, k) = sets(cfg, q)?.into_iter().next().expect("one set");
    let u: GridFunction = admissible_function(&k, p.m, trace_order(cfg), p.sigma)?;
    let opts = SynthesisOptions {
        rho: p.rho,
        width: p.width,
        nonnegative: p.nonnegative,
    };
    let reports = run_synthesis(&u, &k, p.m, p.p, &p.deltas, &opts)?;
    for r in &reports {
        let count = |f: &dyn Fn(&polycap::synthesis::CubeRecord) -> bool| r.cubes.iter().filter(|c| f(c)).count();
        record.items.push(item(
            &label,
            "total_cost",
            r.total_cost,
            BoundKind::ExactQp,
            json!({
                "delta": r.delta,
                "passes": r.passes,
                "multiplicity": r.multiplicity,
                "cubes": r.cubes.len(),
                "idle": count(&|c| c.idle),
                "skipped": count(&|c| c.skipped),
                "degenerate": count(&|c| c.degenerate),
                "covered": r.covered,
                "target": r.target,
                "complete": r.complete,
                "partial": r.partial,
                "max_a_q": num(r.max_a_q),
                "chain_lhs": num(r.chain_lhs),
                "chain_rhs": num(r.chain_rhs),
                "max_membership_residual": num(r.max_membership_residual),
            }),
        ));
        record.verdicts.push(Verdict::new(
            format!("chain at delta {}", r.delta),
            r.chain_holds,
            format!("{:.4e} <= {:.4e}", r.chain_lhs, r.chain_rhs),
        ));
        record.verdicts.push(Verdict::new(
            format!("coverage at delta {}", r.delta),
            r.complete && !r.partial,
            format!("{} of {} target nodes", r.covered.last().copied().unwrap_or(0), r.target),
        ));
    }
    let costs: Vec<String> = reports.iter().map(|r| format!("{:.4e}", r.total_cost)).collect();
    record.verdicts.push(Verdict::new(
        "cost decreasing",
        cost_decreasing(&reports),
        costs.join(" > "),
    ));
    Ok(())
}

fn condition(cfg: &ExperimentConfig, q: &GridCube, record: &mut RunRecord) -> Result<()> {
    let p = &cfg.params;
    let opts = ConditionOptions {
        pins: p.pins,
        rho: p.rho,
        alpha: p.alpha,
        starts: p.starts,
        seed: cfg.seed,
        cap: p.max_width,
    };
    let family = sets(cfg, q)?;
    let rep = check_synthesis_condition(q, &family, p.m, p.k, p.p, &opts)?;
    for (i, it) in rep.items.iter().enumerate() {
        record.items.push(item(
            &it.label,
            "theta_ratio",
            it.ratio,
            BoundKind::Sampled,
            json!({
                "pin_index": i % p.pins,
                "pin": it.pin,
                "theta_full": num(it.theta_full),
                "theta_partial": num(it.theta_partial),
                "feasible_full": it.feasible_full,
                "feasible_partial": it.feasible_partial,
            }),
        ));
    }
    record.verdicts.push(Verdict::new(
        "ratios bounded",
        rep.violations.is_empty() && rep.fitted_a.is_finite(),
        format!("fitted A = {:.4}, cap {}", rep.fitted_a, rep.cap),
    ));
    Ok(())
}

fn deviation(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let p = &cfg.params;
    let norm = match p.norm {
        NormKind::L2 => CoeffNorm::L2,
        NormKind::Linf => CoeffNorm::Linf,
    };
    let d = poly_deviation(&p.points, p.k, norm)?;
    let details = json!({"points": p.points.len(), "starts": d.starts, "witness": d.witness});
    record.items.push(item("points", "deviation", d.value, BoundKind::UpperBoundMultistart, details));
    record.items.push(item(
        "points",
        "deviation_lower",
        d.lower_bound,
        BoundKind::LowerBound,
        json!({}),
    ));
    Ok(())
}
