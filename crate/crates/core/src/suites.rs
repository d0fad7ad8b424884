//! Seeded set families and the acceptance bundles built on them.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::capacities::{
    condenser_capacity, gamma_capacity, sharp_capacity, theta_capacity_with, FunctionClassSpec,
    ThetaOptions,
};
use crate::error::{Error, Result};
use crate::grid::{build_mask, cantor_intervals, CompactMask, Geometry, GridCube, GridFunction};
use crate::poincare::{
    equivalence_report, nonnegative_bound_samples, poincare_constant, weak_poincare_constant,
    EquivalenceConfig, EquivalenceReport, PoincareQuery,
};
use crate::polynomials::Projector;
use crate::synthesis::{
    admissible_function, check_synthesis_condition, cost_decreasing, run_synthesis, ConditionOptions,
    SynthesisOptions, DEFAULT_DELTAS,
};

/// Seed of the shared 2D acceptance family.
pub const FAMILY_SEED: u64 = 20_240_601;

/// A coordinate of the unit cube on the 1/8 lattice, away from the faces.
fn snapped(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(1..=7) as f64 / 8.0
}

/// Seeded unions of one to three axis-parallel segments and boxes in the unit square, with corners on the 1/8 lattice so that every
/// grid with `n = 8j + 1` nodes per side rasterizes them exactly.
pub fn random_family(seed: u64, members: usize) -> Vec<(String, Geometry)> {
    (0..members)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
            let parts = rng.gen_range(1..=3);
            let mut kinds = Vec::new();
            let geoms = (0..parts)
                .map(|_| {
                    let a = [snapped(&mut rng), snapped(&mut rng)];
                    let b = [snapped(&mut rng), snapped(&mut rng)];
                    if rng.gen_bool(0.5) {
                        kinds.push("segment");
                        let axis = rng.gen_range(0..2);
                        let mut to = a;
                        to[axis] = b[axis];
                        if to[axis] == a[axis] {
                            to[axis] = if a[axis] < 0.5 { a[axis] + 0.25 } else { a[axis] - 0.25 };
                        }
                        let (from, to) = if a[axis] <= to[axis] { (a, to) } else { (to, a) };
                        Geometry::Segment { from: from.to_vec(), to: to.to_vec() }
                    } else {
                        kinds.push("box");
                        let lo: Vec<f64> = (0..2).map(|j| a[j].min(b[j])).collect();
                        let hi: Vec<f64> = (0..2)
                            .map(|j| a[j].max(b[j]).min(lo[j] + 0.25))
                            .collect();
                        Geometry::Box { lo, hi }
                    }
                })
                .collect();
            (format!("member-{i}:{}", kinds.join("+")), Geometry::Union { parts: geoms })
        })
        .collect()
}

/// Rasterizes a family on a grid.
pub fn rasterize(grid: &GridCube, family: &[(String, Geometry)]) -> Result<Vec<(String, CompactMask)>> {
    family
        .iter()
        .map(|(label, g)| Ok((label.clone(), build_mask(grid, g)?)))
        .collect()
}

/// Seeded nested pairs `K1 ⊂ K2` on a grid, with corners on the 1/8 lattice.
pub fn nested_pairs(grid: &GridCube, seed: u64, count: usize) -> Result<Vec<(CompactMask, CompactMask)>> {
    let dim = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let piece = |rng: &mut ChaCha8Rng| {
        let a: Vec<f64> = (0..dim).map(|_| snapped(rng)).collect();
        if rng.gen_bool(0.5) {
            Geometry::Point { at: a }
        } else {
            let axis = rng.gen_range(0..dim);
            let mut b = a.clone();
            b[axis] = if a[axis] < 0.5 { a[axis] + 0.25 } else { a[axis] - 0.25 };
            let (from, to) = if a[axis] <= b[axis] { (a, b) } else { (b, a) };
            Geometry::Segment { from, to }
        }
    };
    (0..count)
        .map(|_| {
            let inner = piece(&mut rng);
            let extra = piece(&mut rng);
            let small = build_mask(grid, &inner)?;
            let large = small.union(&build_mask(grid, &extra)?)?;
            Ok((small, large))
        })
        .collect()
}

/// Named acceptance bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    AnalyticOracles,
    Monotonicity,
    Equivalences,
    Cone,
    Synthesis,
    Hygiene,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::AnalyticOracles,
        Suite::Monotonicity,
        Suite::Equivalences,
        Suite::Cone,
        Suite::Synthesis,
        Suite::Hygiene,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::AnalyticOracles => "analytic-oracles",
            Suite::Monotonicity => "monotonicity",
            Suite::Equivalences => "equivalences",
            Suite::Cone => "cone",
            Suite::Synthesis => "synthesis",
            Suite::Hygiene => "hygiene",
        }
    }

    /// Position in the acceptance list (1-based).
    pub fn criterion(self) -> usize {
        Suite::ALL.iter().position(|&s| s == self).unwrap() + 1
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite `{s}`")))
    }
}

/// One pass/fail line of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Names of the failed checks.
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Where the bundles keep frozen regression data, and the family seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSettings {
    pub fixture_dir: PathBuf,
    pub seed: u64,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self {
            fixture_dir: default_fixture_dir(),
            seed: FAMILY_SEED,
        }
    }
}

/// The fixture directory shipped with this crate.
pub fn default_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn run_suite(suite: Suite, settings: &SuiteSettings) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::AnalyticOracles => analytic_oracles()?,
        Suite::Monotonicity => monotonicity(settings.seed)?,
        Suite::Equivalences => equivalences(settings)?,
        Suite::Cone => cone(settings.seed)?,
        Suite::Synthesis => synthesis()?,
        Suite::Hygiene => hygiene(settings.seed)?,
    };
    Ok(SuiteReport {
        suite,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `a <= b` up to the eigen-route tolerance.
fn le(a: f64, b: f64) -> bool {
    a <= b + 1e-8 * (1.0 + a.abs().max(b.abs()))
}

/// A computed constant with its exact continuum value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

/// Capacities on grids with `n` nodes per side and Poincaré constants on
/// grids with `n_poincare`.
pub fn oracle_values(n: usize, n_poincare: usize) -> Result<Vec<Oracle>> {
    let pi = std::f64::consts::FRAC_1_PI;
    let q = GridCube::new(1, n, &[0.0], 1.0)?;
    let point = build_mask(&q, &Geometry::Point { at: vec![0.0] })?;
    let whole = build_mask(&q, &Geometry::Box { lo: vec![-0.5], hi: vec![0.5] })?;
    let qp = GridCube::unit(1, n_poincare)?;
    let ends = CompactMask::from_nodes(&qp, &[0, n_poincare - 1])?;
    let timed = |name: &str, target: f64, tolerance: f64, f: &dyn Fn() -> Result<f64>| {
        let t = Instant::now();
        let value = f()?;
        Ok(Oracle {
            name: name.to_string(),
            value,
            target,
            tolerance,
            seconds: t.elapsed().as_secs_f64(),
        })
    };
    Ok(vec![
        timed("condenser(point)", 2.0, 0.05, &|| {
            Ok(condenser_capacity(&q, &point, 1, 2.0)?.value)
        })?,
        timed("condenser(cube)", 4.0, 0.05, &|| {
            Ok(condenser_capacity(&q, &whole, 1, 2.0)?.value)
        })?,
        timed("gamma(full trace, cube)", 4.0, 0.05, &|| {
            let class = FunctionClassSpec::full(1, 1, whole.clone())?;
            Ok(gamma_capacity(&q, &class, 1, 0, 2.0)?.value)
        })?,
        timed("dirichlet poincare", pi, 0.02, &|| {
            let class = FunctionClassSpec::partial(0, 1, ends.clone())?;
            Ok(poincare_constant(&PoincareQuery::new(class, 0))?.value)
        })?,
        timed("neumann weak poincare", pi, 0.02, &|| Ok(weak_poincare_constant(&qp, 0, 2.0)?.value))?,
    ])
}

fn analytic_oracles() -> Result<Vec<Check>> {
    let mut checks: Vec<Check> = oracle_values(129, 257)?
        .into_iter()
        .map(|o| {
            let err = rel(o.value, o.target);
            Check::new(
                o.name,
                err <= o.tolerance,
                format!("{:.6} vs {:.6}, rel err {:.2e} (tol {})", o.value, o.target, err, o.tolerance),
            )
        })
        .collect();
    let q = GridCube::new(1, 129, &[0.0], 1.0)?;
    let point = build_mask(&q, &Geometry::Point { at: vec![0.0] })?;
    let t = Instant::now();
    condenser_capacity(&q, &point, 1, 2.0)?;
    let secs = t.elapsed().as_secs_f64();
    checks.push(Check::new("condenser(point) runtime", secs < 1.0, format!("{secs:.3} s")));
    Ok(checks)
}

/// Capacities of one set that the monotonicity checks compare.
struct Profile {
    condenser: f64,
    sharp: f64,
    gamma: Vec<f64>,
    /// `Gamma_{m,0}` over `partial(0..m)` then the full class.
    trace_ladder: Vec<f64>,
    theta: f64,
}

fn profile(k: &CompactMask, m: usize, seed: u64) -> Result<Profile> {
    let q = k.grid();
    let class = FunctionClassSpec::partial(m - 1, m, k.clone())?;
    let gamma = (0..m)
        .map(|kk| Ok(gamma_capacity(q, &class, m, kk, 2.0)?.value))
        .collect::<Result<Vec<_>>>()?;
    let mut trace_ladder = (0..m)
        .map(|s| Ok(gamma_capacity(q, &FunctionClassSpec::partial(s, m, k.clone())?, m, 0, 2.0)?.value))
        .collect::<Result<Vec<_>>>()?;
    match gamma_capacity(q, &FunctionClassSpec::full(1, m, k.clone())?, m, 0, 2.0) {
        Ok(r) => trace_ladder.push(r.value),
        Err(Error::Infeasible(_)) => {}
        Err(e) => return Err(e),
    }
    let opts = ThetaOptions {
        starts: 8,
        seed,
        ..Default::default()
    };
    Ok(Profile {
        condenser: condenser_capacity(q, k, m, 2.0)?.value,
        sharp: sharp_capacity(q, k, m, 2.0, 1)?.value,
        gamma,
        trace_ladder,
        theta: theta_capacity_with(q, &class, m, 0, 2.0, &opts)?.value,
    })
}

fn monotonicity(seed: u64) -> Result<Vec<Check>> {
    let mut pairs = Vec::new();
    for (dim, n) in [(1, 17), (2, 9)] {
        let q = GridCube::unit(dim, n)?;
        for (i, pair) in nested_pairs(&q, seed ^ dim as u64, 10)?.into_iter().enumerate() {
            for m in 1..=2 {
                pairs.push((format!("{dim}D pair {i} m={m}"), m, pair.clone()));
            }
        }
    }
    let profiles = pairs
        .par_iter()
        .map(|(_, m, (a, b))| Ok((profile(a, *m, seed)?, profile(b, *m, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut bad: [Vec<String>; 5] = Default::default();
    for ((label, _, _), (a, b)) in pairs.iter().zip(&profiles) {
        if !le(a.condenser, b.condenser)
            || !le(a.sharp, b.sharp)
            || !le(a.theta, b.theta)
            || a.gamma.iter().zip(&b.gamma).any(|(x, y)| !le(*x, *y))
        {
            bad[0].push(label.clone());
        }
        for p in [a, b] {
            if p.gamma.windows(2).any(|w| !le(w[1], w[0])) {
                bad[1].push(label.clone());
            }
            if p.trace_ladder.windows(2).any(|w| !le(w[0], w[1])) {
                bad[2].push(label.clone());
            }
            if !(p.theta <= 1.0) {
                bad[3].push(label.clone());
            }
            if !le(p.condenser, p.sharp) {
                bad[4].push(label.clone());
            }
        }
    }
    let names = [
        "capacity monotone in K",
        "gamma nonincreasing in k",
        "gamma nondecreasing in trace order",
        "theta <= 1",
        "sharp >= condenser",
    ];
    Ok(names
        .iter()
        .zip(bad)
        .map(|(name, b)| {
            let detail = if b.is_empty() {
                format!("{} nested pairs at m = 1, 2", pairs.len() / 2)
            } else {
                format!("violated by {}", b.join(", "))
            };
            Check::new(*name, b.is_empty(), detail)
        })
        .collect())
}

/// Equivalence report of the seeded 2D family; results are cached per
/// `(n, m, seed)` for the lifetime of the process.
pub fn family_report(n: usize, m: usize, seed: u64) -> Result<EquivalenceReport> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64), EquivalenceReport>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&(n, m, seed)) {
        return Ok(r.clone());
    }
    let q = GridCube::unit(2, n)?;
    let family = rasterize(&q, &random_family(seed, 10))?;
    let cfg = EquivalenceConfig {
        m,
        sharp_rho: (n - 1) / 8,
        ..Default::default()
    };
    let report = equivalence_report(&format!("seeded-{seed}"), &family, &cfg)?;
    cache.lock().unwrap().insert((n, m, seed), report.clone());
    Ok(report)
}

/// Nodes per side of the equivalence family grid.
pub const FAMILY_N: usize = 9;

/// Largest accepted width of a fitted interval.
pub const MAX_WIDTH: f64 = 10.0;

/// Numbers equal within `tol` (relative above 1), everything else identical.
pub fn json_close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
        }
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(x, y)| json_close(x, y, tol))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w, tol)))
        }
        _ => a == b,
    }
}

/// Outcome of comparing a result with its frozen fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureStatus {
    Written,
    Reproduced,
    Mismatch,
    /// Not accepted, so nothing was frozen.
    Skipped,
}

/// Compares `value` with the fixture at `path` within 1e-9, writing it when
/// absent and `accepted`.
pub fn check_fixture(path: &Path, value: &Value, accepted: bool) -> Result<FixtureStatus> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("fixture {}: {e}", path.display()));
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(io)?;
        let frozen: Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("fixture {}: {e}", path.display())))?;
        return Ok(if json_close(&frozen, value, 1e-9) {
            FixtureStatus::Reproduced
        } else {
            FixtureStatus::Mismatch
        });
    }
    if !accepted {
        return Ok(FixtureStatus::Skipped);
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let text = serde_json::to_string_pretty(value).expect("json value");
    std::fs::write(path, text + "\n").map_err(io)?;
    Ok(FixtureStatus::Written)
}

fn equivalences(settings: &SuiteSettings) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for m in 1..=2 {
        let report = family_report(FAMILY_N, m, settings.seed)?;
        let widest = report
            .intervals
            .iter()
            .max_by(|a, b| a.width.total_cmp(&b.width))
            .expect("nonempty intervals");
        let accepted = report.intervals.iter().all(|i| i.width <= MAX_WIDTH);
        checks.push(Check::new(
            format!("m={m} interval widths <= {MAX_WIDTH}"),
            accepted,
            format!("{} ratios, widest {} = {:.3}", report.intervals.len(), widest.name, widest.width),
        ));
        let path = settings
            .fixture_dir
            .join(format!("equivalence-m{m}-seed{}.json", settings.seed));
        let value = serde_json::to_value(&report).expect("serializable report");
        let status = check_fixture(&path, &value, accepted)?;
        checks.push(Check::new(
            format!("m={m} fixture"),
            matches!(status, FixtureStatus::Written | FixtureStatus::Reproduced),
            format!("{status:?} {}", path.display()),
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    checks.push(Check::new("runtime < 300 s", secs < 300.0, format!("{secs:.1} s")));
    Ok(checks)
}

fn cone(seed: u64) -> Result<Vec<Check>> {
    let q = GridCube::unit(2, FAMILY_N)?;
    let family = rasterize(&q, &random_family(seed, 10))?;
    let rows = family
        .par_iter()
        .map(|(label, k)| {
            let class = FunctionClassSpec::partial(0, 2, k.clone())?.with_nonnegative(true);
            let opts = ThetaOptions {
                starts: 8,
                seed,
                ..Default::default()
            };
            let high = theta_capacity_with(&q, &class, 2, 1, 2.0, &opts)?.value;
            let low = theta_capacity_with(&q, &class, 2, 0, 2.0, &opts)?.value;
            let c = condenser_capacity(&q, k, 2, 2.0)?.value;
            let samples = nonnegative_bound_samples(k, c, 2.0, 64, seed)?;
            Ok((label.clone(), high, low, samples))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.2 > 0.0)
        .map(|r| r.1 / r.2)
        .collect();
    let c = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let a = rows
        .iter()
        .flat_map(|r| r.3.iter().copied())
        .fold(0.0f64, f64::max);
    let broken: Vec<&str> = rows
        .iter()
        .filter(|r| r.3.iter().any(|v| !v.is_finite()))
        .map(|r| r.0.as_str())
        .collect();
    Ok(vec![
        Check::new(
            "theta(k=1) >= c theta(k=0), one c > 0",
            c > 0.0 && c.is_finite() && ratios.len() == rows.len(),
            format!(
                "c = {c:.4} over {} members, {} with both values at the cap 1",
                ratios.len(),
                rows.iter().filter(|r| r.1 >= 1.0 && r.2 >= 1.0).count()
            ),
        ),
        Check::new(
            "nonnegative bound with one A",
            broken.is_empty() && a.is_finite() && a > 0.0,
            if broken.is_empty() {
                format!("A = {a:.4} over {} samples", 64 * rows.len())
            } else {
                format!("unbounded samples in {}", broken.join(", "))
            },
        ),
    ])
}

/// The synthesis sets on the midline of a cube.
pub fn synthesis_sets(q: &GridCube) -> Result<Vec<(String, CompactMask)>> {
    let dim = q.dim();
    let at = |x: f64| {
        let mut v = vec![0.5; dim];
        v[0] = x;
        v
    };
    let cantor = cantor_intervals(0.125, 0.875, 1)
        .into_iter()
        .map(|(a, b)| Geometry::Segment { from: at(a), to: at(b) })
        .collect();
    [
        ("point", Geometry::Point { at: at(0.5) }),
        ("segment", Geometry::Segment { from: at(0.375), to: at(0.625) }),
        ("cantor", Geometry::Union { parts: cantor }),
    ]
    .into_iter()
    .map(|(name, g)| Ok((name.to_string(), build_mask(q, &g)?)))
    .collect()
}

/// Ambient nodes per side of the synthesis runs in dimension `dim`.
pub fn synthesis_grid(dim: usize) -> Result<GridCube> {
    GridCube::unit(dim, if dim == 1 { 1025 } else { 129 })
}

fn synthesis() -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for dim in [1, 2] {
        let q = synthesis_grid(dim)?;
        for (name, k) in synthesis_sets(&q)? {
            for (m, nonnegative) in [(1, false), (2, false), (2, true)] {
                let s = if nonnegative { 0 } else { m - 1 };
                let label = format!(
                    "{dim}D {name} m={m}{}",
                    if nonnegative { " nonnegative" } else { "" }
                );
                let u = admissible_function(&k, m, s, 1.0)?;
                let opts = SynthesisOptions {
                    nonnegative,
                    ..Default::default()
                };
                checks.push(match run_synthesis(&u, &k, m, 2.0, &DEFAULT_DELTAS, &opts) {
                    Ok(reps) => {
                        let costs: Vec<String> = reps.iter().map(|r| format!("{:.4e}", r.total_cost)).collect();
                        let clean = reps.iter().all(|r| r.complete && !r.partial && r.chain_holds);
                        Check::new(
                            label,
                            clean && cost_decreasing(&reps),
                            format!("costs [{}]{}", costs.join(", "), if clean { "" } else { ", incomplete run" }),
                        )
                    }
                    Err(e @ Error::ConstraintViolation(_)) => Check::new(label, false, e.to_string()),
                    Err(e) => return Err(e),
                });
            }
        }
    }
    let q = GridCube::unit(1, 17)?;
    let family = [vec![0.5], vec![0.25, 0.75], vec![0.25, 0.5, 0.75], vec![0.125, 0.625]]
        .iter()
        .map(|xs| {
            let g = Geometry::Union {
                parts: xs.iter().map(|&x| Geometry::Point { at: vec![x] }).collect(),
            };
            Ok((format!("points{xs:?}"), build_mask(&q, &g)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let cond = check_synthesis_condition(&q, &family, 1, 0, 2.0, &ConditionOptions::default())?;
    checks.push(Check::new(
        "condition ratios bounded (m=1)",
        cond.violations.is_empty() && cond.fitted_a.is_finite(),
        format!("A = {:.4} over {} items, cap {}", cond.fitted_a, cond.items.len(), cond.cap),
    ));
    let secs = start.elapsed().as_secs_f64();
    checks.push(Check::new("runtime < 600 s", secs < 600.0, format!("{secs:.1} s")));
    Ok(checks)
}

/// Largest identity error of the projections on seeded random functions.
pub fn projection_identity_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (dim, n) in [(1, 17), (2, 9)] {
        let q = GridCube::unit(dim, n)?;
        for r in 0..=2 {
            let proj = Projector::for_grid(&q, r, None)?;
            let u: Vec<f64> = (0..q.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..q.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let cu = proj.coefficients(&u);
            let cv = proj.coefficients(&v);
            let scale = cu.iter().chain(&cv).fold(1.0f64, |m, c| m.max(c.abs()));
            let mut err = |x: &[f64], y: &[f64]| {
                for (x, y) in x.iter().zip(y) {
                    worst = worst.max((x - y).abs() / scale);
                }
            };
            err(&proj.coefficients(&proj.values(&cu)), &cu);
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lin: Vec<f64> = cu.iter().zip(&cv).map(|(x, y)| a * x + b * y).collect();
            err(&proj.coefficients(&mix), &lin);
            let poly = proj.polynomial(cu.clone());
            for j in 0..=r {
                let split = poly.degree_part(j).add(&poly.complement_part(j))?;
                err(split.coeffs(), poly.coeffs());
                let prime = poly.degree_part(j).add(&poly.degree_part(0).scale(-1.0))?;
                err(poly.prime_part(j).coeffs(), prime.coeffs());
            }
            let values = GridFunction::new(&q, proj.values(&cu))?;
            err(&proj.coefficients(values.values()), &cu);
        }
    }
    Ok(worst)
}

/// Relative change of every constant of the first and third bundles when
/// `n -> 2n - 1`, as `(name, coarse, fine)`.
pub fn refinement_pairs(seed: u64) -> Result<Vec<(String, f64, f64)>> {
    let mut out: Vec<(String, f64, f64)> = oracle_values(129, 257)?
        .into_iter()
        .zip(oracle_values(257, 513)?)
        .map(|(a, b)| (a.name, a.value, b.value))
        .collect();
    for m in 1..=2 {
        let coarse = family_report(FAMILY_N, m, seed)?;
        let fine = family_report(2 * FAMILY_N - 1, m, seed)?;
        for a in &coarse.intervals {
            if let Some(b) = fine.interval(&a.name) {
                out.push((format!("m={m} {} lower", a.name), a.lower, b.lower));
                out.push((format!("m={m} {} upper", a.name), a.upper, b.upper));
            }
        }
    }
    Ok(out)
}

/// Largest accepted relative drift under refinement.
pub const MAX_DRIFT: f64 = 0.1;

fn hygiene(seed: u64) -> Result<Vec<Check>> {
    let err = projection_identity_error(seed)?;
    let mut checks = vec![Check::new(
        "projection identities",
        err <= 1e-10,
        format!("max error {err:.2e}"),
    )];
    let pairs = refinement_pairs(seed)?;
    for group in ["oracle", "m=1", "m=2"] {
        let members: Vec<&(String, f64, f64)> = pairs
            .iter()
            .filter(|(name, _, _)| match group {
                "oracle" => !name.starts_with("m="),
                g => name.starts_with(g),
            })
            .collect();
        let drifts: Vec<(f64, &str)> = members.iter().map(|(n, a, b)| (rel(*b, *a), n.as_str())).collect();
        let (worst, at) = drifts
            .iter()
            .copied()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((0.0, "-"));
        let over = drifts.iter().filter(|d| d.0 > MAX_DRIFT).count();
        checks.push(Check::new(
            format!("refinement drift {group}"),
            over == 0,
            format!("max {:.1}% at {at}; {over} of {} above {:.0}%", 100.0 * worst, drifts.len(), 100.0 * MAX_DRIFT),
        ));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!(Suite::Synthesis.criterion(), 5);
        assert!("plotting".parse::<Suite>().is_err());
    }

    #[test]
    fn pairs_are_nested() {
        for dim in 1..=2 {
            let q = GridCube::unit(dim, 17).unwrap();
            for (a, b) in nested_pairs(&q, 7, 10).unwrap() {
                assert!(!a.is_empty() && a.is_subset_of(&b));
            }
        }
    }

    #[test]
    fn family_is_seeded() {
        assert_eq!(random_family(3, 5), random_family(3, 5));
        assert_ne!(random_family(3, 5), random_family(4, 5));
    }

    #[test]
    fn closeness_of_records() {
        let a = json!({"x": [1.0, "inf"], "y": 2.0});
        assert!(json_close(&a, &json!({"x": [1.0 + 1e-12, "inf"], "y": 2.0}), 1e-9));
        assert!(!json_close(&a, &json!({"x": [1.001, "inf"], "y": 2.0}), 1e-9));
        assert!(!json_close(&a, &json!({"x": [1.0, "inf"]}), 1e-9));
    }

    #[test]
    fn fixtures_freeze_then_compare() {
        let dir = std::env::temp_dir().join(format!("polycap-fixture-{}", std::process::id()));
        let path = dir.join("f.json");
        let _ = std::fs::remove_file(&path);
        let v = json!({"width": 2.5});
        assert_eq!(check_fixture(&path, &v, false).unwrap(), FixtureStatus::Skipped);
        assert_eq!(check_fixture(&path, &v, true).unwrap(), FixtureStatus::Written);
        assert_eq!(check_fixture(&path, &v, true).unwrap(), FixtureStatus::Reproduced);
        let w = json!({"width": 2.6});
        assert_eq!(check_fixture(&path, &w, true).unwrap(), FixtureStatus::Mismatch);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn synthesis_sets_lie_on_the_midline() {
        let q = GridCube::unit(2, 17).unwrap();
        let sets = synthesis_sets(&q).unwrap();
        assert_eq!(sets.len(), 3);
        for (_, k) in &sets {
            assert!(k.nodes().iter().all(|&i| (q.coords(i)[1] - 0.5).abs() < 1e-12));
        }
        // Two Cantor intervals of length 1/4 at h = 1/16.
        assert_eq!(sets[2].1.count(), 10);
    }
}
