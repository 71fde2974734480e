//! Multiple-testing simulation and null-proportion estimation from p-values.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::baselines::{convex_npmle, pi0_from_convex};
use crate::error::{param, Error, Result};
use crate::rng::{self, label_code};
use crate::sampler::{self, KMode, PriorConfig, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

impl Sidedness {
    pub fn name(&self) -> &'static str {
        match self {
            Sidedness::OneSided => "one-sided",
            Sidedness::TwoSided => "two-sided",
        }
    }
}

fn default_a() -> f64 {
    1.2f64.log2()
}

fn default_b() -> f64 {
    2.0
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtpScenario {
    pub n_tests: usize,
    pub m: usize,
    pub alpha0: f64,
    pub block_size: usize,
    pub rho: f64,
    pub sidedness: Sidedness,
    #[serde(default = "default_a")]
    pub effect_a: f64,
    #[serde(default = "default_b")]
    pub effect_b: f64,
}

impl MtpScenario {
    pub fn new(alpha0: f64, rho: f64, block_size: usize, sidedness: Sidedness) -> Self {
        Self {
            n_tests: 2000,
            m: 10,
            alpha0,
            block_size,
            rho,
            sidedness,
            effect_a: default_a(),
            effect_b: default_b(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return param(format!("need at least 2 replicates per test for a t statistic, got {}", self.m));
        }
        if self.n_tests == 0 || self.block_size == 0 || self.n_tests % self.block_size != 0 {
            return param(format!("block size {} must divide the number of tests {}", self.block_size, self.n_tests));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return param(format!("within-block correlation must lie in [0, 1), got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.alpha0) {
            return param(format!("null proportion must lie in [0, 1], got {}", self.alpha0));
        }
        if !(self.effect_a >= 0.0 && self.effect_a < self.effect_b) {
            return param("effect support needs 0 <= a < b");
        }
        Ok(())
    }

    /// Stable text key used for seeding and file names.
    pub fn key(&self) -> String {
        format!(
            "a0={}_rho={}_G={}_{}_n={}_m={}",
            self.alpha0,
            self.rho,
            self.block_size,
            self.sidedness.name(),
            self.n_tests,
            self.m
        )
    }

    /// Draw one alternative mean: a triangle on `[a, b]` peaking at the
    /// midpoint, mirrored to the negative side with probability 1/2 when
    /// two-sided.
    pub fn draw_effect<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        let (a, b) = (self.effect_a, self.effect_b);
        let mag = a + (b - a) * 0.5 * (r.random::<f64>() + r.random::<f64>());
        match self.sidedness {
            Sidedness::OneSided => mag,
            Sidedness::TwoSided => {
                if r.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }

    /// CDF of the effect magnitude distribution on `[a, b]`.
    pub fn effect_magnitude_cdf(&self, x: f64) -> f64 {
        let (a, b) = (self.effect_a, self.effect_b);
        let t = ((x - a) / (b - a)).clamp(0.0, 1.0);
        if t <= 0.5 {
            2.0 * t * t
        } else {
            1.0 - 2.0 * (1.0 - t) * (1.0 - t)
        }
    }
}

/// Grid of scenarios as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtpGrid {
    pub alpha0: Vec<f64>,
    pub rho: Vec<f64>,
    pub block_size: Vec<usize>,
    pub sidedness: Vec<Sidedness>,
    #[serde(default = "default_tests")]
    pub n_tests: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

fn default_tests() -> usize {
    2000
}

fn default_m() -> usize {
    10
}

impl MtpGrid {
    pub fn expand(&self) -> Vec<MtpScenario> {
        let mut out = Vec::new();
        for &s in &self.sidedness {
            for &g in &self.block_size {
                for &rho in &self.rho {
                    for &a0 in &self.alpha0 {
                        let mut sc = MtpScenario::new(a0, rho, g, s);
                        sc.n_tests = self.n_tests;
                        sc.m = self.m;
                        out.push(sc);
                    }
                }
            }
        }
        out
    }
}

/// Simulated p-values with the null indicator per test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvalueSet {
    pub values: Vec<f64>,
    /// `true` where the null hypothesis holds.
    pub truth_mask: Vec<bool>,
}

impl PvalueSet {
    pub fn null_fraction(&self) -> f64 {
        self.truth_mask.iter().filter(|&&t| t).count() as f64 / self.truth_mask.len() as f64
    }
}

/// Simulate one microarray-style dataset and its per-test t-test p-values.
pub fn simulate_pvalues(sc: &MtpScenario, seed: u64) -> Result<PvalueSet> {
    sc.validate()?;
    let mut r = rng::stream(seed, &[label_code("pvalues")]);
    let n = sc.n_tests;
    let n0 = Binomial::new(n as u64, sc.alpha0)
        .map_err(|e| Error::Parameter(e.to_string()))?
        .sample(&mut r) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut truth_mask = vec![false; n];
    for &i in &order[..n0] {
        truth_mask[i] = true;
    }
    let mu: Vec<f64> = truth_mask
        .iter()
        .map(|&null| if null { 0.0 } else { sc.draw_effect(&mut r) })
        .collect();

    let (shared, own) = (sc.rho.sqrt(), (1.0 - sc.rho).sqrt());
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..sc.m {
        for block in 0..n / sc.block_size {
            let zb: f64 = r.sample(StandardNormal);
            for i in block * sc.block_size..(block + 1) * sc.block_size {
                let z: f64 = r.sample(StandardNormal);
                let x = mu[i] + shared * zb + own * z;
                sum[i] += x;
                sum_sq[i] += x * x;
            }
        }
    }
    let m = sc.m as f64;
    let t_dist = StudentsT::new(0.0, 1.0, m - 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
    let values = (0..n)
        .map(|i| {
            let mean = sum[i] / m;
            let var = ((sum_sq[i] - m * mean * mean) / (m - 1.0)).max(0.0);
            let t = mean * m.sqrt() / var.sqrt();
            let p = match sc.sidedness {
                Sidedness::TwoSided => 2.0 * t_dist.sf(t.abs()),
                Sidedness::OneSided => t_dist.sf(t),
            };
            p.clamp(f64::MIN_POSITIVE, 1.0)
        })
        .collect();
    Ok(PvalueSet { values, truth_mask })
}

/// Posterior mean of the uniform weight from an adaptive-order chain.
pub fn estimate_pi0_bayes(p: &[f64], prior: &PriorConfig, cfg: &SamplerConfig) -> Result<f64> {
    let mut values = Vec::with_capacity(p.len());
    for &v in p {
        if !(v > 0.0 && v <= 1.0) {
            return param(format!("p-value {v} lies outside (0, 1]"));
        }
        values.push(if v >= 1.0 { 1.0 - 1e-12 } else { v });
    }
    let draws = sampler::run_chain(&values, prior, cfg)?;
    sampler::posterior_mean_beta0(&draws)
}

/// Convex nonincreasing NPMLE read-out at 1.
pub fn estimate_pi0_convex(p: &[f64]) -> Result<f64> {
    Ok(pi0_from_convex(&convex_npmle(p, 512, 1000, 1e-7)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pi0Method {
    Bayes,
    Convex,
}

impl Pi0Method {
    pub fn name(&self) -> &'static str {
        match self {
            Pi0Method::Bayes => "bayes",
            Pi0Method::Convex => "convex",
        }
    }
}

/// One row of the long-format results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtpRow {
    pub scenario: MtpScenario,
    pub rep: usize,
    pub method: Pi0Method,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtpExperiment {
    pub scenarios: Vec<MtpScenario>,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Pi0Method>,
    pub sampler: SamplerConfig,
}

/// Seed of replication `rep` of a scenario.
pub fn mtp_seed(master: u64, sc: &MtpScenario, rep: usize) -> u64 {
    rng::derive_seed(master, &[label_code(&sc.key()), rep as u64])
}

/// Every method on every replication of every scenario.
pub fn run_mtp_experiment(exp: &MtpExperiment) -> Result<Vec<MtpRow>> {
    if exp.reps == 0 || exp.methods.is_empty() || exp.scenarios.is_empty() {
        return param("MTP experiment needs scenarios, methods and at least one replication");
    }
    for sc in &exp.scenarios {
        sc.validate()?;
    }
    exp.sampler.validate()?;
    let tasks: Vec<(usize, usize)> = (0..exp.scenarios.len())
        .flat_map(|s| (0..exp.reps).map(move |r| (s, r)))
        .collect();
    let results: Vec<Vec<Result<f64>>> = tasks
        .par_iter()
        .map(|&(s, rep)| {
            let sc = &exp.scenarios[s];
            let seed = mtp_seed(exp.seed, sc, rep);
            let p = match simulate_pvalues(sc, seed) {
                Ok(p) => p,
                Err(e) => return vec![Err(e)],
            };
            exp.methods
                .iter()
                .map(|m| match m {
                    Pi0Method::Bayes => {
                        let prior = PriorConfig::for_sample_size(p.values.len(), KMode::adaptive_default());
                        let cfg = SamplerConfig {
                            seed: rng::derive_seed(seed, &[label_code("chain")]),
                            ..exp.sampler.clone()
                        };
                        estimate_pi0_bayes(&p.values, &prior, &cfg)
                    }
                    Pi0Method::Convex => estimate_pi0_convex(&p.values),
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for (s, sc) in exp.scenarios.iter().enumerate() {
        let mut failures = 0usize;
        for (t, &(ts, rep)) in tasks.iter().enumerate() {
            if ts != s {
                continue;
            }
            for (mi, &method) in exp.methods.iter().enumerate() {
                match results[t].get(mi).unwrap_or(&results[t][0]) {
                    Ok(v) => rows.push(MtpRow { scenario: sc.clone(), rep, method, estimate: *v }),
                    Err(e) => {
                        failures += 1;
                        log::warn!("{} rep {rep} {}: {e}", sc.key(), method.name());
                    }
                }
            }
        }
        let attempted = exp.reps * exp.methods.len();
        if failures as f64 > 0.05 * attempted as f64 {
            return Err(Error::Experiment(format!("{}: {failures} of {attempted} estimates failed", sc.key())));
        }
        log::info!("finished {}", sc.key());
    }
    Ok(rows)
}

/// Long-format CSV: `alpha0,rho,G,sidedness,rep,method,estimate`.
pub fn rows_to_csv(rows: &[MtpRow]) -> String {
    let mut out = String::from("alpha0,rho,G,sidedness,rep,method,estimate\n");
    for r in rows {
        let sc = &r.scenario;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sc.alpha0,
            sc.rho,
            sc.block_size,
            sc.sidedness.name(),
            r.rep,
            r.method.name(),
            r.estimate
        );
    }
    out
}

/// Histogram of the estimates of one scenario on `[0, 1]`, as CSV with
/// columns `method,bin_low,bin_high,count,density`.
pub fn histogram_csv(rows: &[MtpRow], sc: &MtpScenario, bins: usize) -> String {
    let mut out = String::from("method,bin_low,bin_high,count,density\n");
    for method in [Pi0Method::Bayes, Pi0Method::Convex] {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.scenario == *sc)
            .map(|r| r.estimate)
            .collect();
        if values.is_empty() {
            continue;
        }
        let mut counts = vec![0usize; bins];
        for v in &values {
            let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let width = 1.0 / bins as f64;
        for (b, &c) in counts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                method.name(),
                b as f64 / bins as f64,
                (b + 1) as f64 / bins as f64,
                c,
                c as f64 / (values.len() as f64 * width)
            );
        }
    }
    out
}
