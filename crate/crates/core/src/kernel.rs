//! Scaled Beta(1, k) kernels and the k-monotone mixtures built from them.
//!
//! The kernel with order `k` and scale `theta` is
//!
//! ```text
//! psi_k(x, theta) = (k / theta) * (1 - x / theta)_+^(k - 1)
//! ```
//!
//! A k-monotone density on (0, 1) is modelled as a uniform component with
//! weight `beta0` plus a discrete scale mixture of `psi_k` kernels.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Atoms whose scales differ by no more than this are merged.
pub const ATOM_MERGE_TOL: f64 = 1e-14;
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Order and scale of a single kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    k: u32,
    theta: f64,
}

impl KernelParams {
    pub fn new(k: u32, theta: f64) -> Result<Self> {
        if k == 0 {
            return param("kernel order k must be at least 1");
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return param(format!("kernel scale theta must lie in (0, 1], got {theta}"));
        }
        Ok(Self { k, theta })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn pdf(&self, x: f64) -> f64 {
        psi(self.k, self.theta, x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= self.theta {
            1.0
        } else {
            1.0 - (1.0 - x / self.theta).powi(self.k as i32)
        }
    }

    /// Inverse-CDF transform of a uniform variate.
    pub fn quantile(&self, u: f64) -> f64 {
        self.theta * (1.0 - (1.0 - u).powf(1.0 / f64::from(self.k)))
    }
}

/// Unchecked kernel evaluation. Zero at and beyond `theta`.
#[inline]
pub fn psi(k: u32, theta: f64, x: f64) -> f64 {
    if x < theta {
        let r = 1.0 - x / theta;
        f64::from(k) / theta * r.powi(k as i32 - 1)
    } else {
        0.0
    }
}

/// Kernel density at `x` in (0, 1).
pub fn psi_pdf(p: &KernelParams, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return param(format!("psi_pdf expects x in (0, 1), got {x}"));
    }
    Ok(p.pdf(x))
}

/// Kernel distribution function; clamps outside (0, theta).
pub fn psi_cdf(p: &KernelParams, x: f64) -> f64 {
    p.cdf(x)
}

/// Draw from the kernel by inverting its CDF at `u`.
pub fn psi_sample(p: &KernelParams, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return param(format!("psi_sample expects u in (0, 1), got {u}"));
    }
    Ok(p.quantile(u))
}

/// Exact L1 distance between `psi_k(., theta)` and `psi_k(., theta_prime)`.
///
/// For `k >= 2` the two kernels cross once inside (0, min(theta, theta')).
/// The crossing solves `((t' - x) / (t - x))^(k-1) = (t' / t)^k` and is found
/// by bisection; the distance is then `2 (1 - x0 / t')^(k-1) (1 - t / t')`.
pub fn psi_l1_distance(k: u32, theta: f64, theta_prime: f64) -> Result<f64> {
    KernelParams::new(k, theta)?;
    KernelParams::new(k, theta_prime)?;
    let (lo, hi) = if theta <= theta_prime {
        (theta, theta_prime)
    } else {
        (theta_prime, theta)
    };
    if lo == hi {
        return Ok(0.0);
    }
    let ratio = lo / hi;
    if k == 1 {
        return Ok(2.0 * (1.0 - ratio));
    }
    let x0 = crossing_point(k, lo, hi);
    let d = 2.0 * (1.0 - x0 / hi).powi(k as i32 - 1) * (1.0 - ratio);
    Ok(d.min(2.0 * (1.0 - ratio)))
}

/// Root of `(k-1) ln((hi - x)/(lo - x)) - k ln(hi/lo)` on (0, lo). The left
/// side is strictly increasing in x, negative at 0 and unbounded near `lo`.
fn crossing_point(k: u32, lo: f64, hi: f64) -> f64 {
    let target = f64::from(k) * (hi / lo).ln();
    let km1 = f64::from(k - 1);
    let g = |x: f64| km1 * ((hi - x) / (lo - x)).ln() - target;
    let (mut a, mut b) = (0.0, lo);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-12 * lo.max(1e-300) {
            break;
        }
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// A k-monotone density: uniform weight `beta0` and a discrete mixing
/// measure over kernel scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KMixtureRepr", into = "KMixtureRepr")]
pub struct KMixture {
    k: u32,
    beta0: f64,
    thetas: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KMixtureRepr {
    k: u32,
    beta0: f64,
    atoms: Vec<[f64; 2]>,
}

impl TryFrom<KMixtureRepr> for KMixture {
    type Error = Error;

    fn try_from(r: KMixtureRepr) -> Result<Self> {
        KMixture::new(r.k, r.beta0, r.atoms.into_iter().map(|[t, w]| (t, w)).collect())
    }
}

impl From<KMixture> for KMixtureRepr {
    fn from(m: KMixture) -> Self {
        KMixtureRepr {
            k: m.k,
            beta0: m.beta0,
            atoms: m.thetas.iter().zip(&m.weights).map(|(&t, &w)| [t, w]).collect(),
        }
    }
}

impl KMixture {
    /// Build a mixture from `(theta, weight)` atoms. Atoms are sorted by scale
    /// and coincident scales merged; weights must sum to one.
    pub fn new(k: u32, beta0: f64, mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if k == 0 {
            return param("mixture order k must be at least 1");
        }
        if !(0.0..=1.0).contains(&beta0) {
            return param(format!("beta0 must lie in [0, 1], got {beta0}"));
        }
        if atoms.is_empty() {
            return param("mixture needs at least one atom");
        }
        for &(t, w) in &atoms {
            if !(t > 0.0 && t <= 1.0) {
                return param(format!("atom scale must lie in (0, 1], got {t}"));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return param(format!("atom weight must be finite and nonnegative, got {w}"));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return param(format!("atom weights sum to {total}, expected 1"));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut thetas: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (t, w) in atoms {
            match thetas.last() {
                Some(&last) if t - last <= ATOM_MERGE_TOL => *weights.last_mut().unwrap() += w,
                _ => {
                    thetas.push(t);
                    weights.push(w);
                }
            }
        }
        Ok(Self { k, beta0, thetas, weights })
    }

    /// Build a mixture from unnormalised nonnegative weights.
    pub fn normalized(k: u32, beta0: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return param(format!("cannot normalise atom weights with total {total}"));
        }
        Self::new(k, beta0, atoms.into_iter().map(|(t, w)| (t, w / total)).collect())
    }

    pub fn uniform() -> Self {
        Self { k: 1, beta0: 1.0, thetas: vec![1.0], weights: vec![1.0] }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thetas.iter().copied().zip(self.weights.iter().copied())
    }

    /// Density of the kernel-mixture part alone (without the uniform share).
    pub fn mixing_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self
                .atoms()
                .map(|(t, w)| w * f64::from(self.k) / t)
                .sum();
        }
        // atoms are sorted, so only the tail with theta > x contributes
        let start = self.thetas.partition_point(|&t| t <= x);
        self.thetas[start..]
            .iter()
            .zip(&self.weights[start..])
            .map(|(&t, &w)| w * psi(self.k, t, x))
            .sum()
    }

    /// Density at `x`; `x = 0` and `x = 1` take the one-sided limits.
    pub fn pdf(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return self.beta0;
        }
        self.beta0 + (1.0 - self.beta0) * self.mixing_pdf(x.max(0.0))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let mix: f64 = self
            .atoms()
            .map(|(t, w)| w * KernelParams { k: self.k, theta: t }.cdf(x))
            .sum();
        self.beta0 * x + (1.0 - self.beta0) * mix
    }

    /// Ancestral draw: pick the uniform component with probability `beta0`,
    /// otherwise an atom by weight, then invert that component's CDF.
    pub fn sample(&self, u_component: f64, u_value: f64) -> f64 {
        if u_component < self.beta0 || self.beta0 >= 1.0 {
            return u_value;
        }
        let target = (u_component - self.beta0) / (1.0 - self.beta0);
        let mut acc = 0.0;
        let mut chosen = self.thetas.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if target < acc {
                chosen = i;
                break;
            }
        }
        KernelParams { k: self.k, theta: self.thetas[chosen] }.quantile(u_value)
    }
}

/// Density of the mixture at `x` in (0, 1); endpoints take one-sided limits.
pub fn mixture_pdf(m: &KMixture, x: f64) -> f64 {
    m.pdf(x)
}

/// Ancestral sample from the mixture given two uniforms in (0, 1).
pub fn mixture_sample(m: &KMixture, u_component: f64, u_value: f64) -> Result<f64> {
    for u in [u_component, u_value] {
        if !(u > 0.0 && u < 1.0) {
            return param(format!("mixture_sample expects uniforms in (0, 1), got {u}"));
        }
    }
    Ok(m.sample(u_component, u_value))
}
