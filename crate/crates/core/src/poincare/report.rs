use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{poincare_constant, PoincareMode, PoincareQuery};
use crate::calculus::{gradient_seminorm, Region};
use crate::capacities::{
    condenser_capacity, gamma_capacity, sharp_capacity, theta_capacity_with, FunctionClassSpec,
    ThetaOptions,
};
use crate::error::{Error, Result};
use crate::grid::{CompactMask, GridFunction};

/// Parameters shared by every member of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub m: usize,
    pub k: usize,
    pub p: f64,
    pub alpha: f64,
    /// Dilation of the full-trace class (cells of Q).
    pub rho: usize,
    /// Neighbourhood radius of the sharp condenser capacity (cells of 2Q).
    pub sharp_rho: usize,
    /// Fixed first-term constant of the split inequality.
    pub c0: f64,
    pub theta_starts: usize,
    pub seed: u64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            m: 1,
            k: 0,
            p: 2.0,
            alpha: 4.0,
            rho: 1,
            sharp_rho: 1,
            c0: 0.1,
            theta_starts: 32,
            seed: 0x5eed,
        }
    }
}

/// All capacities and constants of one compact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub label: String,
    pub nodes: usize,
    /// Empty set: zero capacities and infinite constants.
    pub degenerate: bool,
    pub gamma: f64,
    #[serde(with = "crate::extended::option")]
    pub gamma_full: Option<f64>,
    pub theta: f64,
    pub theta_feasible: bool,
    pub condenser: f64,
    pub sharp: f64,
    /// Condenser capacity of order `m - k`.
    pub split_capacity: f64,
    #[serde(with = "crate::extended")]
    pub poincare: f64,
    #[serde(with = "crate::extended")]
    pub hedberg: f64,
}

impl MemberRecord {
    /// Paired quantities whose spread across a family is reported.
    pub fn ratios(&self, p: f64) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if self.degenerate {
            return out;
        }
        let mut put = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                out.insert(name.to_string(), v);
            }
        };
        put("poincare_gamma", self.poincare * self.gamma.powf(1.0 / p));
        put("theta_gamma", self.theta / self.gamma);
        put("sharp_condenser", self.sharp / self.condenser);
        put("condenser_theta", self.condenser / self.theta);
        put("hedberg_theta", self.hedberg * self.theta.powf(1.0 / p));
        put("hedberg_split", self.hedberg * self.split_capacity.powf(1.0 / p));
        if let Some(g) = self.gamma_full {
            put("gamma_full_condenser", g / self.condenser);
        }
        out
    }
}

/// Spread of one ratio over the non-degenerate members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedInterval {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// `upper / lower`.
    pub width: f64,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub family: String,
    pub config: EquivalenceConfig,
    pub members: Vec<MemberRecord>,
    pub intervals: Vec<FittedInterval>,
}

impl EquivalenceReport {
    pub fn interval(&self, name: &str) -> Option<&FittedInterval> {
        self.intervals.iter().find(|i| i.name == name)
    }
}

/// Computes every quantity of the report for one set `K`. The trace class
/// is `partial_zero_trace(m - 1)`.
pub fn member_record(label: &str, k_set: &CompactMask, cfg: &EquivalenceConfig) -> Result<MemberRecord> {
    let q = k_set.grid();
    let (m, k, p) = (cfg.m, cfg.k, cfg.p);
    let class = FunctionClassSpec::partial(m - 1, m, k_set.clone())?;
    let query = PoincareQuery::new(class.clone(), k).with_exponents(p, p, p);
    let poincare = poincare_constant(&query)?.value;
    let gamma = gamma_capacity(q, &class, m, k, p)?.value;
    if k_set.is_empty() {
        return Ok(MemberRecord {
            label: label.to_string(),
            nodes: 0,
            degenerate: true,
            gamma,
            gamma_full: None,
            theta: 1.0,
            theta_feasible: false,
            condenser: 0.0,
            sharp: 0.0,
            split_capacity: 0.0,
            poincare,
            hedberg: f64::INFINITY,
        });
    }
    let hedberg = poincare_constant(&query.clone().with_mode(PoincareMode::Hedberg { c0: cfg.c0 }))?.value;
    let hint = gamma_capacity(q, &class, m, m - 1, p)
        .ok()
        .and_then(|r| r.polynomial)
        .map(|poly| poly.coeffs().to_vec());
    let theta = theta_capacity_with(
        q,
        &class,
        m,
        k,
        p,
        &ThetaOptions {
            alpha: cfg.alpha,
            starts: cfg.theta_starts,
            seed: cfg.seed,
            hint,
        },
    )?;
    let full = FunctionClassSpec::full(cfg.rho, m, k_set.clone())?;
    let gamma_full = gamma_capacity(q, &full, m, k, p).ok().map(|r| r.value);
    let condenser = condenser_capacity(q, k_set, m, p)?.value;
    let sharp = sharp_capacity(q, k_set, m, p, cfg.sharp_rho)?.value;
    let split_capacity = if m - k == m {
        condenser
    } else {
        condenser_capacity(q, k_set, m - k, p)?.value
    };
    Ok(MemberRecord {
        label: label.to_string(),
        nodes: k_set.count(),
        degenerate: false,
        gamma,
        gamma_full,
        theta: theta.value,
        theta_feasible: theta.feasible,
        condenser,
        sharp,
        split_capacity,
        poincare,
        hedberg,
    })
}

/// Evaluates a family in parallel (results kept in family order) and fits
/// the interval of every paired ratio.
pub fn equivalence_report(
    family_name: &str,
    family: &[(String, CompactMask)],
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    if family.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "a family needs at least 3 members, got {}",
            family.len()
        )));
    }
    let members = family
        .par_iter()
        .map(|(label, k)| member_record(label, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    if members.iter().all(|r| r.degenerate) {
        return Err(Error::DegenerateFamily("every member has an infinite constant".into()));
    }
    Ok(EquivalenceReport {
        family: family_name.to_string(),
        config: cfg.clone(),
        intervals: fit_intervals(&members, cfg.p),
        members,
    })
}

fn fit_intervals(members: &[MemberRecord], p: f64) -> Vec<FittedInterval> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in members {
        for (name, v) in r.ratios(p) {
            acc.entry(name).or_default().push(v);
        }
    }
    acc.into_iter()
        .map(|(name, vals)| {
            let lower = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let upper = vals.iter().copied().fold(0.0, f64::max);
            FittedInterval {
                name,
                lower,
                upper,
                width: upper / lower,
                members: vals.len(),
            }
        })
        .collect()
}

/// Ratios `||u|| C_{2,p}(K)^{1/p} / ||grad^2 u||` for seeded nonnegative
/// functions vanishing on `K`, i.e. the best constant each sample allows in
/// the nonnegative Poincaré bound.
pub fn nonnegative_bound_samples(
    k_set: &CompactMask,
    condenser: f64,
    p: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let q = k_set.grid();
    let knodes = k_set.nodes();
    let kpts: Vec<Vec<f64>> = knodes.iter().map(|&i| q.coords(i)).collect();
    let side = q.side_length();
    let lo = q.lower_corner();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sigma = side * rng.gen_range(0.05..0.5);
        let amp = rng.gen_range(0.0..0.9);
        let c: Vec<f64> = (0..q.dim()).map(|a| lo[a] + side * rng.gen_range(0.0..1.0)).collect();
        let width = side * rng.gen_range(0.2..1.0);
        let u = GridFunction::from_fn(q, |x| {
            let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = 1.0 + amp * (-d2 / (width * width)).exp();
            let vanish: f64 = kpts
                .iter()
                .map(|y| {
                    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    1.0 - (-r2 / (sigma * sigma)).exp()
                })
                .product();
            g * vanish
        })?;
        let num = gradient_seminorm(&u, 0, p, Region::Whole)?.value;
        let den = gradient_seminorm(&u, 2, p, Region::Whole)?.value;
        out.push(if den > 0.0 {
            num * condenser.powf(1.0 / p) / den
        } else {
            f64::INFINITY
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridCube;

    #[test]
    fn empty_member_is_degenerate() {
        let q = GridCube::unit(1, 17).unwrap();
        let r = member_record("empty", &CompactMask::empty(&q), &EquivalenceConfig::default()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.gamma, 0.0);
        assert!(r.poincare.is_infinite());
        assert!(r.ratios(2.0).is_empty());
    }

    #[test]
    fn growing_point_sets_are_monotone() {
        let q = GridCube::unit(1, 17).unwrap();
        let fam: Vec<(String, CompactMask)> = [vec![8], vec![4, 8], vec![4, 8, 12], vec![0, 4, 8, 12, 16]]
            .iter()
            .map(|nodes| (format!("{nodes:?}"), CompactMask::from_nodes(&q, nodes).unwrap()))
            .collect();
        let cfg = EquivalenceConfig {
            theta_starts: 8,
            ..Default::default()
        };
        let rep = equivalence_report("points", &fam, &cfg).unwrap();
        for w in rep.members.windows(2) {
            assert!(w[1].poincare <= w[0].poincare + 1e-12);
            assert!(w[1].gamma >= w[0].gamma - 1e-9);
        }
        let pg = rep.interval("poincare_gamma").unwrap();
        assert!(pg.lower <= pg.upper && pg.members == 4);
    }

    #[test]
    fn too_small_family() {
        let q = GridCube::unit(1, 9).unwrap();
        let fam = vec![("e".to_string(), CompactMask::empty(&q))];
        assert!(equivalence_report("x", &fam, &EquivalenceConfig::default()).is_err());
        let fam = vec![("e".to_string(), CompactMask::empty(&q)); 3];
        assert!(matches!(
            equivalence_report("x", &fam, &EquivalenceConfig::default()),
            Err(Error::DegenerateFamily(_))
        ));
    }

    #[test]
    fn nonnegative_samples_are_finite() {
        let q = GridCube::unit(1, 33).unwrap();
        let k = CompactMask::from_nodes(&q, &[16]).unwrap();
        let c = condenser_capacity(&q, &k, 2, 2.0).unwrap().value;
        let s = nonnegative_bound_samples(&k, c, 2.0, 16, 1).unwrap();
        assert_eq!(s.len(), 16);
        assert!(s.iter().all(|v| v.is_finite() && *v > 0.0));
    }
}
