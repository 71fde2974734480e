//! Slice Gibbs sampler for a Dirichlet-process mixture of `psi_k` kernels
//! with an extra uniform component.
//!
//! The model is
//!
//! ```text
//! g(x) = beta0 + (1 - beta0) * sum_l w_l psi_k(x, theta_l)
//! w    ~ stick-breaking(a),  theta_l ~ U(base_low, base_high)
//! beta0 ~ U(0, 1),           k fixed or uniform over a finite set
//! ```
//!
//! The infinite mixture is handled with the independent slice scheme using
//! the deterministic envelope `xi_l = 0.9^l`; the uniform weight is updated
//! through a per-observation "uniform vs. kernel" label.

mod state;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use state::{AtomTarget, SamplerState, SLICE_DECAY, TAIL_MASS};

use crate::error::{param, Error, Result};
use crate::kernel::KMixture;
use crate::metrics::GridDensity;
use crate::rng;

/// How the monotonicity order is treated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    Fixed(u32),
    /// Uniform prior over the listed orders.
    Adaptive(Vec<u32>),
}

impl KMode {
    /// Uniform prior over `{1, ..., 10}`.
    pub fn adaptive_default() -> Self {
        KMode::Adaptive((1..=10).collect())
    }
}

/// Dirichlet-process prior on the mixing measure plus the priors on
/// `beta0` (always uniform) and `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub precision_a: f64,
    pub base_low: f64,
    pub base_high: f64,
    pub k_mode: KMode,
}

impl PriorConfig {
    /// Precision 1 and uniform base measure on `[1/n, 1]`.
    pub fn for_sample_size(n: usize, k_mode: KMode) -> Self {
        Self { precision_a: 1.0, base_low: 1.0 / n as f64, base_high: 1.0, k_mode }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.precision_a > 0.0 && self.precision_a.is_finite()) {
            return param(format!("DP precision must be positive, got {}", self.precision_a));
        }
        if !(self.base_low > 0.0 && self.base_low < self.base_high && self.base_high <= 1.0) {
            return param(format!(
                "base measure needs 0 < low < high <= 1, got [{}, {}]",
                self.base_low, self.base_high
            ));
        }
        match &self.k_mode {
            KMode::Fixed(0) => param("fixed order k must be at least 1"),
            KMode::Adaptive(set) if set.is_empty() || set.contains(&0) => {
                param("adaptive order set must be nonempty with every k >= 1")
            }
            _ => Ok(()),
        }
    }
}

/// Finite-mixture prior alternative: a number of components `J` with
/// `P(J) = (n^c - 1) n^(-c J)` and symmetric Dirichlet weights. Only the
/// specification is provided; the sampler uses the Dirichlet process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteMixturePrior {
    pub c: f64,
    pub dirichlet_concentration: f64,
}

impl FiniteMixturePrior {
    /// Prior probability of `j` components for sample size `n`.
    pub fn component_count_pmf(&self, j: u32, n: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let nc = (n as f64).powf(self.c);
        (nc - 1.0) * nc.powi(-(j as i32))
    }
}

/// Run-length settings of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: u64,
    /// Cap on instantiated sticks; `None` means ten times the sample size.
    pub max_sticks: Option<usize>,
    /// Standard deviation of the logit-scale atom proposals.
    pub atom_step: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { burn_in: 2000, draws: 1000, thin: 1, seed: 0, max_sticks: None, atom_step: 0.5 }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return param("at least one posterior draw is required");
        }
        if self.thin == 0 {
            return param("thinning interval must be positive");
        }
        if !(self.atom_step > 0.0 && self.atom_step.is_finite()) {
            return param("atom proposal step must be positive");
        }
        Ok(())
    }
}

/// One retained posterior sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub k: u32,
    pub beta0: f64,
    /// `[theta, weight]` pairs sorted by ascending scale.
    pub atoms: Vec<[f64; 2]>,
}

impl PosteriorDraw {
    pub fn from_mixture(m: &KMixture) -> Self {
        Self { k: m.k(), beta0: m.beta0(), atoms: m.atoms().map(|(t, w)| [t, w]).collect() }
    }

    pub fn to_mixture(&self) -> Result<KMixture> {
        KMixture::new(self.k, self.beta0, self.atoms.iter().map(|a| (a[0], a[1])).collect())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("draws always serialise")
    }
}

/// Move boundary values inside (0, 1); reject anything outside [0, 1].
pub fn sanitize_data(data: &[f64]) -> Result<Vec<f64>> {
    let mut nudged = 0usize;
    let out = data
        .iter()
        .map(|&x| {
            if !(0.0..=1.0).contains(&x) {
                return param(format!("observation {x} lies outside [0, 1]"));
            }
            if x <= 0.0 {
                nudged += 1;
                Ok(1e-12)
            } else if x >= 1.0 {
                nudged += 1;
                Ok(1.0 - 1e-12)
            } else {
                Ok(x)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if nudged > 0 {
        warn!("{nudged} boundary observations moved 1e-12 inside (0, 1)");
    }
    Ok(out)
}

/// Run one chain and return the retained draws.
pub fn run_chain(data: &[f64], prior: &PriorConfig, cfg: &SamplerConfig) -> Result<Vec<PosteriorDraw>> {
    run_chain_stream(data, prior, cfg, rng::stream(cfg.seed, &[]))
}

fn run_chain_stream(
    data: &[f64],
    prior: &PriorConfig,
    cfg: &SamplerConfig,
    stream: rng::StreamRng,
) -> Result<Vec<PosteriorDraw>> {
    cfg.validate()?;
    let data = sanitize_data(data)?;
    let max_sticks = cfg.max_sticks.unwrap_or(10 * data.len());
    let mut state = SamplerState::new(&data, prior, max_sticks, cfg.atom_step, stream)?;
    for _ in 0..cfg.burn_in {
        state.sweep()?;
    }
    let mut draws = Vec::with_capacity(cfg.draws);
    for _ in 0..cfg.draws {
        for _ in 0..cfg.thin {
            state.sweep()?;
        }
        draws.push(state.current_draw()?);
    }
    Ok(draws)
}

/// Run `chains` independent chains; chain `c` uses the stream keyed by
/// `(seed, c)`, so output does not depend on the thread count.
pub fn run_chains(
    data: &[f64],
    prior: &PriorConfig,
    cfg: &SamplerConfig,
    chains: usize,
) -> Result<Vec<Vec<PosteriorDraw>>> {
    (0..chains)
        .into_par_iter()
        .map(|c| run_chain_stream(data, prior, cfg, rng::stream(cfg.seed, &[c as u64])))
        .collect()
}

/// Pointwise posterior mean of the density on `grid`.
pub fn posterior_mean_density(draws: &[PosteriorDraw], grid: &[f64]) -> Result<GridDensity> {
    if draws.is_empty() {
        return Err(Error::Parameter("no posterior draws to average".into()));
    }
    let mut acc = vec![0.0; grid.len()];
    for d in draws {
        let m = d.to_mixture()?;
        for (a, &x) in acc.iter_mut().zip(grid) {
            *a += m.pdf(x);
        }
    }
    let n = draws.len() as f64;
    GridDensity::new(grid.to_vec(), acc.into_iter().map(|v| v / n).collect())
}

/// Posterior mean of the uniform weight.
pub fn posterior_mean_beta0(draws: &[PosteriorDraw]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Parameter("no posterior draws to average".into()));
    }
    Ok(draws.iter().map(|d| d.beta0).sum::<f64>() / draws.len() as f64)
}

/// Posterior mean density as a function: draws sharing an order are pooled
/// into one mixture, and the orders are averaged by posterior frequency.
#[derive(Debug, Clone)]
pub struct PosteriorMean {
    parts: Vec<(f64, KMixture)>,
}

impl PosteriorMean {
    pub fn from_draws(draws: &[PosteriorDraw]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Parameter("no posterior draws to average".into()));
        }
        let mut by_k: std::collections::BTreeMap<u32, Vec<&PosteriorDraw>> = Default::default();
        for d in draws {
            by_k.entry(d.k).or_default().push(d);
        }
        let total = draws.len() as f64;
        let mut parts = Vec::with_capacity(by_k.len());
        for (k, group) in by_k {
            let m = group.len() as f64;
            let beta0 = group.iter().map(|d| d.beta0).sum::<f64>() / m;
            let atoms: Vec<(f64, f64)> = group
                .iter()
                .flat_map(|d| d.atoms.iter().map(move |a| (a[0], a[1] * (1.0 - d.beta0))))
                .collect();
            let mixture = if beta0 >= 1.0 || atoms.iter().all(|a| a.1 <= 0.0) {
                KMixture::new(k, beta0.min(1.0), vec![(1.0, 1.0)])?
            } else {
                KMixture::normalized(k, beta0, atoms)?
            };
            parts.push((m / total, mixture));
        }
        Ok(Self { parts })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.parts.iter().map(|(w, m)| w * m.pdf(x)).sum()
    }
}

impl crate::metrics::DensityFn for PosteriorMean {
    fn density(&self, x: f64) -> f64 {
        self.pdf(x)
    }
}

/// Posterior frequency of each order, as `(k, fraction)` sorted by k.
pub fn order_frequencies(draws: &[PosteriorDraw]) -> Vec<(u32, f64)> {
    let mut counts = std::collections::BTreeMap::new();
    for d in draws {
        *counts.entry(d.k).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / draws.len() as f64))
        .collect()
}
