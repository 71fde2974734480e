//! Synthetic k-monotone densities, the MSE replication harness and the
//! empirical contraction probe.

use std::fmt::Write as _;

use log::info;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{convex_npmle, grenander};
use crate::error::{param, Error, Result};
use crate::kernel::{KMixture, KernelParams};
use crate::metrics::{canonical_grid, hellinger, mse_grid, DensityFn, GridDensity, DEFAULT_GRID_SIZE, DEFAULT_QUAD_POINTS};
use crate::rng::{self, label_code, StreamRng};
use crate::sampler::{self, KMode, PosteriorMean, PriorConfig, SamplerConfig};
use crate::stats;

/// Test densities on (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySpec {
    /// `2(1 - x)`
    G1,
    /// `1.5 - x`
    G2,
    /// equal mixture of `psi_2(., j/3)`, j = 1..3
    G3,
    /// `0.5 g3 + 0.5`
    G4,
    /// equal mixture of `psi_4(., j/3)`, j = 1..3
    G5,
    /// `psi_4` mixed over a Beta(2, 1) scale
    G6,
    Mixture(KMixture),
}

fn thirds(k: u32, beta0: f64) -> KMixture {
    let w = 1.0 / 3.0;
    KMixture::normalized(k, beta0, vec![(1.0 / 3.0, w), (2.0 / 3.0, w), (1.0, w)]).expect("valid")
}

impl DensitySpec {
    pub const NAMED: [DensitySpec; 6] = [
        DensitySpec::G1,
        DensitySpec::G2,
        DensitySpec::G3,
        DensitySpec::G4,
        DensitySpec::G5,
        DensitySpec::G6,
    ];

    pub fn parse(id: &str) -> Result<Self> {
        match id.to_ascii_lowercase().as_str() {
            "g1" => Ok(Self::G1),
            "g2" => Ok(Self::G2),
            "g3" => Ok(Self::G3),
            "g4" => Ok(Self::G4),
            "g5" => Ok(Self::G5),
            "g6" => Ok(Self::G6),
            other => param(format!("unknown density id `{other}` (expected g1..g6)")),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Self::G1 => "g1".into(),
            Self::G2 => "g2".into(),
            Self::G3 => "g3".into(),
            Self::G4 => "g4".into(),
            Self::G5 => "g5".into(),
            Self::G6 => "g6".into(),
            Self::Mixture(m) => format!("mixture-k{}-{}atoms", m.k(), m.thetas().len()),
        }
    }

    /// Kernel order the density was generated with.
    pub fn generating_k(&self) -> u32 {
        match self {
            Self::G1 | Self::G2 | Self::G3 | Self::G4 => 2,
            Self::G5 | Self::G6 => 4,
            Self::Mixture(m) => m.k(),
        }
    }

    /// Mixture representation, where one exists.
    pub fn as_mixture(&self) -> Option<KMixture> {
        match self {
            Self::G1 => Some(KMixture::new(2, 0.0, vec![(1.0, 1.0)]).unwrap()),
            Self::G2 => Some(KMixture::new(2, 0.5, vec![(1.0, 1.0)]).unwrap()),
            Self::G3 => Some(thirds(2, 0.0)),
            Self::G4 => Some(thirds(2, 0.5)),
            Self::G5 => Some(thirds(4, 0.0)),
            Self::G6 => None,
            Self::Mixture(m) => Some(m.clone()),
        }
    }

    /// Closed-form density.
    pub fn pdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let tri = |t: f64| if x < t { 2.0 / t * (1.0 - x / t) } else { 0.0 };
        let quartic = |t: f64| if x < t { 4.0 / t * (1.0 - x / t).powi(3) } else { 0.0 };
        match self {
            Self::G1 => 2.0 * (1.0 - x),
            Self::G2 => 1.5 - x,
            Self::G3 => (tri(1.0 / 3.0) + tri(2.0 / 3.0) + tri(1.0)) / 3.0,
            Self::G4 => 0.5 + (tri(1.0 / 3.0) + tri(2.0 / 3.0) + tri(1.0)) / 6.0,
            Self::G5 => (quartic(1.0 / 3.0) + quartic(2.0 / 3.0) + quartic(1.0)) / 3.0,
            Self::G6 => {
                if x <= 0.0 {
                    return 8.0;
                }
                8.0 * (1.0 + 1.5 * x + 3.0 * x * x.ln() - 3.0 * x * x + 0.5 * x.powi(3))
            }
            Self::Mixture(m) => m.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Self::G6 => {
                if x <= 0.0 {
                    return 0.0;
                }
                8.0 * x + 12.0 * x * x * x.ln() - 8.0 * x.powi(3) + x.powi(4)
            }
            other => other.as_mixture().unwrap().cdf(x),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::G6 => {
                let theta: f64 = Beta::new(2.0, 1.0).unwrap().sample(rng);
                let u: f64 = rng.random();
                KernelParams::new(4, theta.max(f64::MIN_POSITIVE)).unwrap().quantile(u)
            }
            other => {
                let m = other.as_mixture().unwrap();
                m.sample(rng.random(), rng.random())
            }
        }
    }

    fn kink_points(&self) -> Vec<f64> {
        match self {
            Self::G6 => Vec::new(),
            other => other.as_mixture().unwrap().thetas().to_vec(),
        }
    }
}

impl DensityFn for DensitySpec {
    fn density(&self, x: f64) -> f64 {
        self.pdf(x)
    }

    fn kinks(&self) -> Vec<f64> {
        self.kink_points()
    }
}

/// `n` i.i.d. draws, clamped into the open interval.
pub fn sample_density(spec: &DensitySpec, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[label_code("data")]);
    sample_with(spec, n, &mut r)
}

fn sample_with(spec: &DensitySpec, n: usize, r: &mut StreamRng) -> Vec<f64> {
    (0..n)
        .map(|_| spec.draw(r).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
        .collect()
}

/// Estimation methods compared in the MSE table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Bay,
    Ada,
    Con,
    Gre,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bay, Method::Ada, Method::Con, Method::Gre];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Bay => "Bay",
            Method::Ada => "Ada",
            Method::Con => "Con",
            Method::Gre => "Gre",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown method `{s}` (expected Bay, Ada, Con, Gre)")))
    }
}

/// A density estimator evaluated on the MSE grid.
pub trait Estimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, data: &[f64], truth: &DensitySpec, seed: u64, grid: &[f64]) -> Result<GridDensity>;
}

/// The standard methods with their tuning.
#[derive(Debug, Clone)]
pub struct StandardEstimator {
    pub method: Method,
    pub sampler: SamplerConfig,
}

impl Estimator for StandardEstimator {
    fn name(&self) -> String {
        self.method.name().into()
    }

    fn estimate(&self, data: &[f64], truth: &DensitySpec, seed: u64, grid: &[f64]) -> Result<GridDensity> {
        let bayes = |mode: KMode| -> Result<GridDensity> {
            let prior = PriorConfig::for_sample_size(data.len(), mode);
            let cfg = SamplerConfig { seed, ..self.sampler.clone() };
            let draws = sampler::run_chain(data, &prior, &cfg)?;
            sampler::posterior_mean_density(&draws, grid)
        };
        match self.method {
            Method::Bay => bayes(KMode::Fixed(truth.generating_k())),
            Method::Ada => bayes(KMode::adaptive_default()),
            Method::Con => GridDensity::evaluate(&convex_npmle(data, 512, 1000, 1e-7)?, grid),
            Method::Gre => GridDensity::evaluate(&grenander(data)?, grid),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub densities: Vec<DensitySpec>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            densities: DensitySpec::NAMED.to_vec(),
            sizes: vec![100, 200, 500],
            reps: 100,
            methods: Method::ALL.to_vec(),
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return param("replication count must be at least 1");
        }
        if self.densities.is_empty() || self.sizes.is_empty() || self.methods.is_empty() {
            return param("experiment needs at least one density, sample size and method");
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return param("sample sizes must be at least 2");
        }
        self.sampler.validate()
    }

    pub fn estimators(&self) -> Vec<StandardEstimator> {
        self.methods
            .iter()
            .map(|&method| StandardEstimator { method, sampler: self.sampler.clone() })
            .collect()
    }
}

/// One cell of the MSE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCell {
    pub method: String,
    pub n: usize,
    pub density: String,
    pub mean_mse: f64,
    pub se_mse: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Seed of replication `rep` in cell `(density, n)`.
pub fn replication_seed(master: u64, density: &DensitySpec, n: usize, rep: usize) -> u64 {
    rng::derive_seed(master, &[label_code(&density.id()), n as u64, rep as u64])
}

/// Average grid MSE per (method, n, density) over the plan's replications.
pub fn run_mse_experiment(plan: &ExperimentPlan) -> Result<Vec<MseCell>> {
    let est = plan.estimators();
    let refs: Vec<&dyn Estimator> = est.iter().map(|e| e as &dyn Estimator).collect();
    run_mse_experiment_with(plan, &refs)
}

/// As [`run_mse_experiment`] with caller-supplied estimators; `plan.methods`
/// is ignored.
pub fn run_mse_experiment_with(plan: &ExperimentPlan, estimators: &[&dyn Estimator]) -> Result<Vec<MseCell>> {
    plan.validate()?;
    let grid = canonical_grid(DEFAULT_GRID_SIZE);
    let tasks: Vec<(usize, usize, usize)> = (0..plan.densities.len())
        .flat_map(|d| (0..plan.sizes.len()).flat_map(move |s| (0..plan.reps).map(move |r| (d, s, r))))
        .collect();
    let results: Vec<Vec<Result<f64>>> = tasks
        .par_iter()
        .map(|&(d, s, r)| {
            let spec = &plan.densities[d];
            let n = plan.sizes[s];
            let seed = replication_seed(plan.seed, spec, n, r);
            let data = sample_density(spec, n, seed);
            estimators
                .iter()
                .map(|e| {
                    let method_seed = rng::derive_seed(seed, &[label_code(&e.name())]);
                    let fit = e.estimate(&data, spec, method_seed, &grid)?;
                    mse_grid(&fit, spec)
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    for (d, spec) in plan.densities.iter().enumerate() {
        for (s, &n) in plan.sizes.iter().enumerate() {
            for (m, e) in estimators.iter().enumerate() {
                let mut values = Vec::with_capacity(plan.reps);
                let mut failures = 0;
                for (t, &(td, ts, _)) in tasks.iter().enumerate() {
                    if td != d || ts != s {
                        continue;
                    }
                    match &results[t][m] {
                        Ok(v) => values.push(*v),
                        Err(err) => {
                            failures += 1;
                            log::warn!("{} n={n} {}: replication failed: {err}", e.name(), spec.id());
                        }
                    }
                }
                if failures as f64 > 0.05 * plan.reps as f64 {
                    return Err(Error::Experiment(format!(
                        "{} n={n} {}: {failures} of {} replications failed",
                        e.name(),
                        spec.id(),
                        plan.reps
                    )));
                }
                let se = if values.len() > 1 {
                    stats::std_dev(&values) / (values.len() as f64).sqrt()
                } else {
                    0.0
                };
                let cell = MseCell {
                    method: e.name(),
                    n,
                    density: spec.id(),
                    mean_mse: stats::mean(&values),
                    se_mse: se,
                    reps: plan.reps,
                    failures,
                };
                info!("{} n={} {}: mean MSE {:.4}", cell.method, n, cell.density, cell.mean_mse);
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

/// Tidy CSV rendering of the table.
pub fn cells_to_csv(cells: &[MseCell]) -> String {
    let mut out = String::from("method,n,density,mean_mse,se_mse,R,failures\n");
    for c in cells {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", c.method, c.n, c.density, c.mean_mse, c.se_mse, c.reps, c.failures);
    }
    out
}

/// Markdown table with one row per (n, method) and one column per density.
pub fn cells_to_markdown(cells: &[MseCell]) -> String {
    let mut densities: Vec<&str> = Vec::new();
    let mut rows: Vec<(usize, &str)> = Vec::new();
    for c in cells {
        if !densities.contains(&c.density.as_str()) {
            densities.push(&c.density);
        }
        if !rows.contains(&(c.n, c.method.as_str())) {
            rows.push((c.n, &c.method));
        }
    }
    let mut out = String::from("| n | method |");
    for d in &densities {
        let _ = write!(out, " {d} |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---:|".repeat(densities.len()));
    out.push('\n');
    for (n, method) in rows {
        let _ = write!(out, "| {n} | {method} |");
        for d in &densities {
            match cells.iter().find(|c| c.n == n && c.method == method && c.density == *d) {
                Some(c) => {
                    let _ = write!(out, " {:.3} |", c.mean_mse);
                }
                None => out.push_str(" |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Result of the contraction probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionResult {
    pub sizes: Vec<usize>,
    /// Hellinger error per size and replication.
    pub errors: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    /// Least-squares slope of log median error on log n.
    pub slope: f64,
    /// Percentile bootstrap 95% interval of the slope.
    pub slope_ci: (f64, f64),
}

/// Hellinger error of the posterior mean density for growing sample sizes.
pub fn contraction_probe(
    density: &DensitySpec,
    k: u32,
    sizes: &[usize],
    reps: usize,
    seed: u64,
    sampler_cfg: &SamplerConfig,
) -> Result<ContractionResult> {
    if reps == 0 || sizes.len() < 2 || sizes.iter().any(|&n| n < 2) {
        return param("contraction probe needs reps >= 1 and at least two sizes >= 2");
    }
    let tasks: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|s| (0..reps).map(move |r| (s, r))).collect();
    let flat: Vec<f64> = tasks
        .par_iter()
        .map(|&(s, r)| {
            let n = sizes[s];
            let rep_seed = replication_seed(seed, density, n, r);
            let data = sample_density(density, n, rep_seed);
            let prior = PriorConfig::for_sample_size(n, KMode::Fixed(k));
            let cfg = SamplerConfig { seed: rng::derive_seed(rep_seed, &[label_code("chain")]), ..sampler_cfg.clone() };
            let draws = sampler::run_chain(&data, &prior, &cfg)?;
            let mean = PosteriorMean::from_draws(&draws)?;
            hellinger(&mean, density, DEFAULT_QUAD_POINTS)
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<Vec<f64>> = flat.chunks(reps).map(|c| c.to_vec()).collect();
    let medians: Vec<f64> = errors.iter().map(|e| stats::median(e)).collect();
    let log_n: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let slope_of = |meds: &[f64]| stats::ols_slope(&log_n, &meds.iter().map(|m| m.ln()).collect::<Vec<_>>());
    let slope = slope_of(&medians);

    let mut r = rng::stream(seed, &[label_code("bootstrap")]);
    let mut boot: Vec<f64> = (0..2000)
        .map(|_| {
            let meds: Vec<f64> = errors
                .iter()
                .map(|e| {
                    let resample: Vec<f64> = (0..e.len()).map(|_| e[r.random_range(0..e.len())]).collect();
                    stats::median(&resample)
                })
                .collect();
            slope_of(&meds)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let ci = (stats::quantile(&boot, 0.025), stats::quantile(&boot, 0.975));
    Ok(ContractionResult { sizes: sizes.to_vec(), errors, medians, slope, slope_ci: ci })
}
