//! Frequentist shape-constrained comparators: the Grenander estimator and
//! the convex nonincreasing NPMLE.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernel::psi;
use crate::metrics::DensityFn;
use crate::nnls::nnls;

/// Piecewise-constant, left-continuous density on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDensity {
    /// `0 = b_0 < b_1 < ... < b_m = 1`.
    pub breakpoints: Vec<f64>,
    /// Height on `(b_{j}, b_{j+1}]`.
    pub heights: Vec<f64>,
}

impl StepDensity {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.heights[0];
        }
        if x > 1.0 {
            return 0.0;
        }
        // first breakpoint >= x closes the segment containing x
        let j = self.breakpoints.partition_point(|&b| b < x);
        self.heights[j.saturating_sub(1).min(self.heights.len() - 1)]
    }

    pub fn integral(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.heights)
            .map(|(b, h)| h * (b[1] - b[0]))
            .sum()
    }
}

impl DensityFn for StepDensity {
    fn density(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn kinks(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

fn slope(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1) / (b.0 - a.0)
}

/// Relative slack under which two slopes count as equal, so that points that
/// are collinear up to rounding are merged into one hull segment.
const COLLINEAR_TOL: f64 = 1e-12;

fn at_least(s: f64, reference: f64) -> bool {
    s >= reference - COLLINEAR_TOL * reference.abs()
}

/// Empirical CDF knots on [0, 1]: `(0, 0)`, one point per distinct value,
/// and `(1, 1)`.
pub fn ecdf_points(data: &[f64]) -> Result<Vec<(f64, f64)>> {
    if data.is_empty() {
        return param("Grenander estimator needs at least one observation");
    }
    if let Some(&bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return param(format!("observation {bad} lies outside [0, 1]"));
    }
    let mut xs = data.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut pts = vec![(0.0, 0.0)];
    for (i, &x) in xs.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match pts.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => pts.push((x, f)),
        }
    }
    if pts.last().unwrap().0 < 1.0 {
        pts.push((1.0, 1.0));
    }
    Ok(pts)
}

/// Grenander estimator on [0, 1]: left derivative of the least concave
/// majorant of the empirical CDF.
pub fn grenander(data: &[f64]) -> Result<StepDensity> {
    let pts = ecdf_points(data)?;
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if at_least(slope(b, p), slope(a, b)) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(StepDensity {
        breakpoints: hull.iter().map(|p| p.0).collect(),
        heights: hull.windows(2).map(|w| slope(w[0], w[1])).collect(),
    })
}

/// Mean log-density at the data points.
pub fn mean_log_likelihood(f: &dyn DensityFn, data: &[f64]) -> f64 {
    data.iter().map(|&x| f.density(x).ln()).sum::<f64>() / data.len() as f64
}

/// Convex nonincreasing NPMLE: constant weight plus `psi_2` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexFit {
    /// `[theta, weight]`, ascending in theta.
    pub atoms: Vec<[f64; 2]>,
    pub w_unif: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ConvexFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.w_unif + self.atoms.iter().map(|a| a[1] * psi(2, a[0], x.max(0.0))).sum::<f64>()
    }

    /// Directional derivative `(1/n) sum psi_2(x_i, theta) / g(x_i)`.
    pub fn gradient(&self, data: &[f64], theta: f64) -> f64 {
        data.iter().map(|&x| psi(2, theta, x) / self.eval(x)).sum::<f64>() / data.len() as f64
    }

    /// Directional derivative towards the constant density.
    pub fn gradient_uniform(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| 1.0 / self.eval(x)).sum::<f64>() / data.len() as f64
    }
}

impl DensityFn for ConvexFit {
    fn density(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn kinks(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a[0]).collect()
    }
}

/// Null-proportion read-out: the fitted density at 1.
pub fn pi0_from_convex(fit: &ConvexFit) -> f64 {
    fit.w_unif
}

/// Base candidate scales: `grid_size` equispaced points in `(min x, 1]` and
/// every data point above the minimum.
pub fn convex_candidates(data: &[f64], grid_size: usize) -> Vec<f64> {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let mut c: Vec<f64> = (1..=grid_size)
        .map(|j| lo + (1.0 - lo) * j as f64 / grid_size as f64)
        .collect();
    c.extend(data.iter().copied().filter(|&x| x > lo && x <= 1.0));
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Gradient over a sorted candidate list in O(n + C) using prefix sums over
/// the sorted data.
struct GradientTable {
    xs: Vec<f64>,
    inv_g: Vec<f64>,
    // prefix sums of 1/g and x/g over sorted data
    s0: Vec<f64>,
    s1: Vec<f64>,
}

impl GradientTable {
    fn new(sorted: &[f64], g: impl Fn(f64) -> f64) -> Self {
        let inv_g: Vec<f64> = sorted.iter().map(|&x| 1.0 / g(x)).collect();
        let mut s0 = vec![0.0; sorted.len() + 1];
        let mut s1 = vec![0.0; sorted.len() + 1];
        for i in 0..sorted.len() {
            s0[i + 1] = s0[i] + inv_g[i];
            s1[i + 1] = s1[i] + sorted[i] * inv_g[i];
        }
        Self { xs: sorted.to_vec(), inv_g, s0, s1 }
    }

    fn at(&self, theta: f64) -> f64 {
        let m = self.xs.partition_point(|&x| x < theta);
        let n = self.xs.len() as f64;
        2.0 / (n * theta) * (self.s0[m] - self.s1[m] / theta)
    }

    fn uniform(&self) -> f64 {
        self.inv_g.iter().sum::<f64>() / self.xs.len() as f64
    }
}

struct Active {
    thetas: Vec<f64>,
    // weights[0] is the constant component
    weights: Vec<f64>,
}

impl Active {
    fn eval(&self, x: f64) -> f64 {
        self.weights[0]
            + self
                .thetas
                .iter()
                .zip(&self.weights[1..])
                .map(|(&t, &w)| w * psi(2, t, x))
                .sum::<f64>()
    }

    fn column(&self, j: usize, x: f64) -> f64 {
        if j == 0 {
            1.0
        } else {
            psi(2, self.thetas[j - 1], x)
        }
    }

    fn mean_loglik(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.eval(x).ln()).sum::<f64>() / data.len() as f64
    }

    fn prune(&mut self) {
        let mut keep_t = Vec::new();
        let mut keep_w = vec![self.weights[0]];
        for (&t, &w) in self.thetas.iter().zip(&self.weights[1..]) {
            if w > 0.0 {
                keep_t.push(t);
                keep_w.push(w);
            }
        }
        self.thetas = keep_t;
        self.weights = keep_w;
    }

    fn normalize(&mut self) {
        let s: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= s;
        }
    }

    /// One damped constrained-Newton step on the weights: NNLS of `S w ~ 2`
    /// where `S_ij = f_j(x_i) / g(x_i)`, with a heavily weighted extra row
    /// holding the weights on the simplex. Backtracks until the likelihood
    /// does not drop. Returns the new mean log-likelihood, or `None` if no
    /// improving step was found.
    fn newton_step(&mut self, data: &[f64], current: f64) -> Result<Option<f64>> {
        let n = data.len();
        let p = self.weights.len();
        let g: Vec<f64> = data.iter().map(|&x| self.eval(x)).collect();
        let penalty = 1e3 * (n as f64).sqrt();
        let s = DMatrix::from_fn(n + 1, p, |i, j| {
            if i == n {
                penalty
            } else {
                self.column(j, data[i]) / g[i]
            }
        });
        let mut target = DVector::from_element(n + 1, 2.0);
        target[n] = penalty;
        let sol = nnls(&s, &target, 50 * p + 100)?;
        let old = self.weights.clone();
        let mut lambda = 1.0;
        for _ in 0..40 {
            self.weights = old
                .iter()
                .zip(&sol.x)
                .map(|(&a, &b)| ((1.0 - lambda) * a + lambda * b).max(0.0))
                .collect();
            if self.weights.iter().sum::<f64>() > 0.0 {
                self.normalize();
                let ll = self.mean_loglik(data);
                if ll.is_finite() && ll >= current {
                    return Ok(Some(ll));
                }
            }
            lambda *= 0.5;
        }
        self.weights = old;
        Ok(None)
    }

    fn to_fit(&self, converged: bool, iterations: usize) -> ConvexFit {
        let mut atoms: Vec<[f64; 2]> = self
            .thetas
            .iter()
            .zip(&self.weights[1..])
            .filter(|(_, &w)| w > 0.0)
            .map(|(&t, &w)| [t, w])
            .collect();
        atoms.sort_by(|a, b| a[0].total_cmp(&b[0]));
        ConvexFit { atoms, w_unif: self.weights[0], converged, iterations }
    }
}

/// Convex nonincreasing NPMLE by vertex direction with support reduction.
///
/// Each outer iteration adds the candidate scale with the largest gradient
/// (or the constant direction), then re-fits the active weights with damped
/// Newton steps and drops atoms whose weight reaches zero. After the first
/// convergence the candidate set is refined once around the active atoms.
pub fn convex_npmle(data: &[f64], grid_size: usize, max_iter: usize, tol: f64) -> Result<ConvexFit> {
    if data.len() < 2 {
        return param("convex NPMLE needs at least two observations");
    }
    if grid_size == 0 || max_iter == 0 || !(tol > 0.0) {
        return param("convex NPMLE needs positive grid size, iteration cap and tolerance");
    }
    if let Some(&bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return param(format!("observation {bad} lies outside [0, 1]"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut candidates = convex_candidates(&sorted, grid_size);
    let mut refined = false;

    let mut act = Active { thetas: Vec::new(), weights: vec![1.0] };
    let mut ll = act.mean_loglik(&sorted);
    for iter in 1..=max_iter {
        let table = GradientTable::new(&sorted, |x| act.eval(x));
        let (best_theta, best_d) = candidates
            .iter()
            .map(|&t| (t, table.at(t)))
            .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let d_unif = table.uniform();
        if best_d.max(d_unif) <= 1.0 + tol {
            if refined {
                return Ok(act.to_fit(true, iter));
            }
            candidates = refine(&candidates, &act.thetas);
            refined = true;
            continue;
        }
        if best_d > d_unif && !act.thetas.contains(&best_theta) {
            act.thetas.push(best_theta);
            act.weights.push(0.0);
        }
        for _ in 0..50 {
            match act.newton_step(&sorted, ll)? {
                Some(next) => {
                    if next < ll {
                        return Err(Error::Numeric(format!(
                            "convex NPMLE log-likelihood decreased from {ll} to {next}"
                        )));
                    }
                    let gain = next - ll;
                    ll = next;
                    if gain <= 1e-15 * (1.0 + ll.abs()) {
                        break;
                    }
                }
                None => break,
            }
        }
        act.prune();
    }
    Ok(act.to_fit(false, max_iter))
}

/// Add a fine local grid between the neighbours of each active atom.
fn refine(candidates: &[f64], active: &[f64]) -> Vec<f64> {
    let mut out = candidates.to_vec();
    for &t in active {
        let i = candidates.partition_point(|&c| c < t);
        let lo = if i > 0 { candidates[i - 1] } else { t };
        let hi = candidates.get(i + 1).copied().unwrap_or(t);
        for j in 1..32 {
            let c = lo + (hi - lo) * j as f64 / 32.0;
            if c > 0.0 && c <= 1.0 {
                out.push(c);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}
