//! Derivative-free local search used by the nonconvex outer problems.

/// Nelder-Mead settings.
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            ftol: 1e-12,
            xtol: 1e-10,
            step: 0.25,
        }
    }
}

/// Result of one local search.
#[derive(Debug, Clone)]
pub struct LocalMin {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite values are treated as `+inf`.
    pub fn minimize(&self, f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64]) -> LocalMin {
        let n = x0.len();
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        if n == 0 {
            let v = eval(x0, &mut evals);
            return LocalMin {
                x: Vec::new(),
                f: v,
                evals,
                converged: true,
            };
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            let s = if x[i].abs() > 1e-8 { self.step * x[i].abs().max(0.05) } else { self.step };
            x[i] += s;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }
        let mut converged = false;
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = (worst - best).abs();
            let size = simplex
                .iter()
                .skip(1)
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                })
                .fold(0.0f64, f64::max);
            if (spread.is_finite() && spread <= self.ftol * (1.0 + best.abs())) && size <= self.xtol.max(1e-6)
                || size <= self.xtol
            {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let x = along(-0.5);
                    let v = eval(&x, &mut evals);
                    (x, v)
                } else {
                    let x = along(0.5);
                    let v = eval(&x, &mut evals);
                    (x, v)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> =
                            x0.iter().zip(&item.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                        let v = eval(&x, &mut evals);
                        *item = (x, v);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        LocalMin {
            x,
            f,
            evals,
            converged,
        }
    }

    /// Runs [`Self::minimize`] with a restart from the first result, which
    /// helps when the initial simplex collapsed early.
    pub fn minimize_restarted(&self, f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64]) -> LocalMin {
        let first = self.minimize(f, x0);
        let second = self.minimize(f, &first.x);
        let evals = first.evals + second.evals;
        let mut best = if second.f <= first.f { second } else { first };
        best.evals = evals;
        best
    }
}

/// Result of a first-order descent.
#[derive(Debug, Clone)]
pub struct Descent {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient descent with Barzilai-Borwein steps and Armijo
/// backtracking. `project` maps a point onto the feasible set in place.
pub fn projected_descent(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    project: &dyn Fn(&mut [f64]),
    x0: &[f64],
    max_iter: usize,
    rel_tol: f64,
) -> Descent {
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    let mut g = grad(&x);
    let gnorm0 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut step = if gnorm0 > 0.0 { 1.0 / gnorm0 } else { 1.0 };
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for it in 0..max_iter {
        if let Some((px, pg)) = &prev {
            let sy: f64 = x.iter().zip(px).zip(g.iter().zip(pg)).map(|((a, b), (c, d))| (a - b) * (c - d)).sum();
            let ss: f64 = x.iter().zip(px).map(|(a, b)| (a - b) * (a - b)).sum();
            if sy > 0.0 && ss > 0.0 {
                step = ss / sy;
            }
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            project(&mut y);
            let fy = f(&y);
            let dec: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (xi - yi)).sum();
            if fy.is_finite() && fy <= fx - 1e-4 * dec {
                accepted = Some((y, fy));
                break;
            }
            t *= 0.5;
        }
        let Some((y, fy)) = accepted else {
            return Descent { x, f: fx, iterations: it, converged: true };
        };
        let change = (fx - fy).abs();
        let old_x = std::mem::replace(&mut x, y);
        let old_g = std::mem::replace(&mut g, grad(&x));
        prev = Some((old_x, old_g));
        let done = change <= rel_tol * fx.abs().max(1e-300);
        fx = fy;
        if done {
            return Descent { x, f: fx, iterations: it + 1, converged: true };
        }
    }
    Descent { x, f: fx, iterations: max_iter, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_evals: 20000,
            ..Default::default()
        };
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nm.minimize_restarted(&mut f, &[-1.2, 1.0]);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn projected_descent_hits_the_bound() {
        // min (x - 1)^2 + (y + 2)^2 over y >= 0.
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] + 2.0)];
        let p = |x: &mut [f64]| x[1] = x[1].max(0.0);
        let r = projected_descent(&f, &g, &p, &[5.0, 5.0], 500, 1e-14);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && r.x[1].abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn infinite_values_are_avoided() {
        let nm = NelderMead::default();
        let mut f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let r = nm.minimize(&mut f, &[2.0]);
        assert!((r.x[0] - 0.5).abs() < 1e-4);
    }
}
