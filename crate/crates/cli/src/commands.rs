//! Subcommand implementations.
//!
//! Every argument struct doubles as the schema of the configuration file:
//! keys are the long flag names, and a flag given on the command line
//! replaces the file value.

use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use kmono::metrics::{canonical_grid, hellinger, mse_grid, DEFAULT_GRID_SIZE, DEFAULT_QUAD_POINTS};
use kmono::mtp::{self, MtpExperiment, MtpGrid, Pi0Method, Sidedness};
use kmono::persistence::RunWriter;
use kmono::sampler::{self, KMode, PosteriorDraw, PosteriorMean, PriorConfig, SamplerConfig};
use kmono::selftest;
use kmono::simgen::{self, DensitySpec, ExperimentPlan, Method};

use crate::input::{self, command_params};
use crate::{CliError, Globals};

/// Fill every `None` field of `$a` from `$b`.
macro_rules! merge {
    ($a:ident, $b:ident; $($f:ident),+ $(,)?) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.take(); } )+
    };
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Input(format!("missing required parameter `{what}`")))
}

fn sampler_config(
    seed: u64,
    burn_in: Option<usize>,
    draws: Option<usize>,
    thin: Option<usize>,
) -> Result<SamplerConfig, CliError> {
    let d = SamplerConfig::default();
    let cfg = SamplerConfig {
        burn_in: burn_in.unwrap_or(d.burn_in),
        draws: draws.unwrap_or(d.draws),
        thin: thin.unwrap_or(d.thin),
        seed,
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct StoredConfig<'a, P: Serialize> {
    command: &'a str,
    seed: u64,
    params: &'a P,
}

fn start_run<P: Serialize>(g: &Globals, command: &str, params: &P) -> Result<RunWriter, CliError> {
    let cfg = StoredConfig { command, seed: g.seed, params };
    let mut bytes = serde_json::to_vec_pretty(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::create_dir_all(&g.out)
        .map_err(|e| CliError::Input(format!("cannot create output root {}: {e}", g.out.display())))?;
    Ok(RunWriter::create(&g.out, command, &bytes, g.seed)?)
}

fn finish(w: RunWriter) -> Result<(), CliError> {
    let dir = w.finish()?;
    println!("{}", dir.display());
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("summaries always serialise");
    b.push(b'\n');
    b
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// Data file: one column of values in (0, 1), optional header.
    pub data: Option<PathBuf>,
    /// Fixed monotonicity order.
    #[arg(long, conflicts_with = "k_set")]
    pub k: Option<u32>,
    /// Orders for the adaptive prior, comma separated [default: 1..10].
    #[arg(long, value_delimiter = ',')]
    pub k_set: Option<Vec<u32>>,
    /// Sweeps discarded before recording [default: 2000].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Recorded draws per chain [default: 1000].
    #[arg(long)]
    pub draws: Option<usize>,
    /// Thinning interval [default: 1].
    #[arg(long)]
    pub thin: Option<usize>,
    /// Independent chains [default: 1].
    #[arg(long)]
    pub chains: Option<usize>,
    /// Dirichlet-process precision [default: 1].
    #[arg(long)]
    pub precision: Option<f64>,
    /// Lower end of the base measure on the scale [default: 1/n].
    #[arg(long)]
    pub base_low: Option<f64>,
    /// Upper end of the base measure on the scale [default: 1].
    #[arg(long)]
    pub base_high: Option<f64>,
    /// Points of the output density grid [default: 100].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Named true density (g1..g6) for error diagnostics.
    #[arg(long)]
    pub truth: Option<String>,
}

#[derive(Serialize)]
struct FitParams {
    data: String,
    prior: PriorConfig,
    sampler: SamplerConfig,
    chains: usize,
    grid: usize,
    truth: Option<String>,
}

#[derive(Serialize)]
struct ChainDraw<'a> {
    chain: usize,
    #[serde(flatten)]
    draw: &'a PosteriorDraw,
}

#[derive(Serialize)]
struct OrderFrequency {
    k: u32,
    frequency: f64,
}

#[derive(Serialize)]
struct TruthDiagnostics {
    density: String,
    mse: f64,
    hellinger: f64,
}

#[derive(Serialize)]
struct FitSummary {
    n: usize,
    chains: usize,
    draws: usize,
    beta0_mean: f64,
    k_frequencies: Vec<OrderFrequency>,
    truth: Option<TruthDiagnostics>,
}

pub fn fit(mut a: FitArgs, file: &Map<String, Value>, g: &Globals) -> Result<(), CliError> {
    let mut f: FitArgs = command_params(file)?;
    if a.k.is_some() || a.k_set.is_some() {
        f.k = None;
        f.k_set = None;
    }
    merge!(a, f; data, k, k_set, burn_in, draws, thin, chains, precision, base_low, base_high, grid, truth);
    if a.k.is_some() && a.k_set.is_some() {
        return Err(CliError::Input("give either `k` or `k-set`, not both".into()));
    }

    let path = need(a.data, "data")?;
    let truth = a.truth.as_deref().map(DensitySpec::parse).transpose()?;
    let data = input::read_data(&path)?;
    let n = data.len();
    let k_mode = match (a.k, a.k_set) {
        (Some(k), _) => KMode::Fixed(k),
        (None, Some(set)) => KMode::Adaptive(set),
        (None, None) => KMode::adaptive_default(),
    };
    let mut prior = PriorConfig::for_sample_size(n, k_mode);
    prior.precision_a = a.precision.unwrap_or(prior.precision_a);
    prior.base_low = a.base_low.unwrap_or(prior.base_low);
    prior.base_high = a.base_high.unwrap_or(prior.base_high);
    prior.validate()?;
    let cfg = sampler_config(g.seed, a.burn_in, a.draws, a.thin)?;
    let chains = a.chains.unwrap_or(1);
    let grid_size = a.grid.unwrap_or(DEFAULT_GRID_SIZE);
    if chains == 0 || grid_size < 2 {
        return Err(CliError::Input("`chains` must be at least 1 and `grid` at least 2".into()));
    }
    let params = FitParams {
        data: path.display().to_string(),
        prior,
        sampler: cfg,
        chains,
        grid: grid_size,
        truth: truth.as_ref().map(|t| t.id()),
    };

    let mut w = start_run(g, "fit", &params)?;
    w.add_data("data.csv", input::data_csv(&data).as_bytes())?;
    info!("fitting n={n} with {chains} chain(s)");
    let runs = sampler::run_chains(&data, &params.prior, &params.sampler, chains)?;

    let mut lines = String::new();
    for (c, draws) in runs.iter().enumerate() {
        for d in draws {
            lines.push_str(&serde_json::to_string(&ChainDraw { chain: c, draw: d }).expect("draws serialise"));
            lines.push('\n');
        }
    }
    w.add("draws.jsonl", lines.as_bytes())?;

    let pooled: Vec<PosteriorDraw> = runs.into_iter().flatten().collect();
    let grid = canonical_grid(grid_size);
    let density = sampler::posterior_mean_density(&pooled, &grid)?;
    w.add("density_grid.csv", density.to_csv_string().as_bytes())?;

    let truth_diag = match &truth {
        Some(t) => {
            let mean = PosteriorMean::from_draws(&pooled)?;
            let on_grid = if grid_size == DEFAULT_GRID_SIZE {
                density.clone()
            } else {
                sampler::posterior_mean_density(&pooled, &canonical_grid(DEFAULT_GRID_SIZE))?
            };
            Some(TruthDiagnostics {
                density: t.id(),
                mse: mse_grid(&on_grid, t)?,
                hellinger: hellinger(&mean, t, DEFAULT_QUAD_POINTS)?,
            })
        }
        None => None,
    };
    let summary = FitSummary {
        n,
        chains,
        draws: pooled.len(),
        beta0_mean: sampler::posterior_mean_beta0(&pooled)?,
        k_frequencies: sampler::order_frequencies(&pooled)
            .into_iter()
            .map(|(k, frequency)| OrderFrequency { k, frequency })
            .collect(),
        truth: truth_diag,
    };
    info!("posterior mean beta0 {:.4}", summary.beta0_mean);
    w.add("summary.json", &json_bytes(&summary))?;
    finish(w)
}

// ---------------------------------------------------------------- table1

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Table1Args {
    /// Replications per cell [default: 100].
    #[arg(long, alias = "R")]
    pub reps: Option<usize>,
    /// Sample sizes, comma separated [default: 100,200,500].
    #[arg(long, alias = "n", value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Densities g1..g6, comma separated [default: all].
    #[arg(long, value_delimiter = ',')]
    pub densities: Option<Vec<String>>,
    /// Methods among Bay, Ada, Con, Gre [default: all].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Sampler burn-in for Bay and Ada [default: 2000].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Sampler draws for Bay and Ada [default: 1000].
    #[arg(long)]
    pub draws: Option<usize>,
}

pub fn table1(mut a: Table1Args, file: &Map<String, Value>, g: &Globals) -> Result<(), CliError> {
    let mut f: Table1Args = command_params(file)?;
    merge!(a, f; reps, sizes, densities, methods, burn_in, draws);
    let d = ExperimentPlan::default();
    let plan = ExperimentPlan {
        densities: match a.densities {
            Some(v) => v.iter().map(|s| DensitySpec::parse(s)).collect::<Result<_, _>>()?,
            None => d.densities,
        },
        sizes: a.sizes.unwrap_or(d.sizes),
        reps: a.reps.unwrap_or(d.reps),
        methods: match a.methods {
            Some(v) => v.iter().map(|s| Method::parse(s)).collect::<Result<_, _>>()?,
            None => d.methods,
        },
        seed: g.seed,
        sampler: sampler_config(g.seed, a.burn_in, a.draws, None)?,
    };
    plan.validate()?;
    let mut w = start_run(g, "table1", &plan)?;
    info!(
        "{} densities x {} sizes x {} replications",
        plan.densities.len(),
        plan.sizes.len(),
        plan.reps
    );
    let cells = simgen::run_mse_experiment(&plan)?;
    w.add("results.csv", simgen::cells_to_csv(&cells).as_bytes())?;
    w.add("table.md", simgen::cells_to_markdown(&cells).as_bytes())?;
    finish(w)
}

// ---------------------------------------------------------------- mtp

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MtpArgs {
    /// Null proportions [default: 0.5,0.8,0.9,0.95].
    #[arg(long, value_delimiter = ',')]
    pub alpha0: Option<Vec<f64>>,
    /// Within-block correlations [default: 0,0.25,0.5,0.75].
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    /// Block sizes [default: 50,100].
    #[arg(long, alias = "G", value_delimiter = ',')]
    pub block_size: Option<Vec<usize>>,
    /// one-sided and/or two-sided [default: both].
    #[arg(long, value_delimiter = ',')]
    pub sidedness: Option<Vec<String>>,
    /// Tests per data set [default: 2000].
    #[arg(long)]
    pub n_tests: Option<usize>,
    /// Replicate observations per test [default: 10].
    #[arg(long)]
    pub m: Option<usize>,
    /// Replications per scenario [default: 50].
    #[arg(long, alias = "R")]
    pub reps: Option<usize>,
    /// bayes and/or convex [default: both].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Sampler burn-in [default: 2000].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Sampler draws [default: 1000].
    #[arg(long)]
    pub draws: Option<usize>,
    /// Histogram bins of the per-scenario density files [default: 20].
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Serialize)]
struct MtpParams {
    grid: MtpGrid,
    experiment: MtpExperiment,
    bins: usize,
}

fn parse_sidedness(s: &str) -> Result<Sidedness, CliError> {
    match s {
        "one-sided" | "one" => Ok(Sidedness::OneSided),
        "two-sided" | "two" => Ok(Sidedness::TwoSided),
        _ => Err(CliError::Input(format!("unknown sidedness `{s}` (expected one-sided or two-sided)"))),
    }
}

fn parse_pi0_method(s: &str) -> Result<Pi0Method, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "bayes" => Ok(Pi0Method::Bayes),
        "convex" => Ok(Pi0Method::Convex),
        _ => Err(CliError::Input(format!("unknown method `{s}` (expected bayes or convex)"))),
    }
}

pub fn mtp(mut a: MtpArgs, file: &Map<String, Value>, g: &Globals) -> Result<(), CliError> {
    let mut f: MtpArgs = command_params(file)?;
    merge!(a, f; alpha0, rho, block_size, sidedness, n_tests, m, reps, methods, burn_in, draws, bins);
    let grid = MtpGrid {
        alpha0: a.alpha0.unwrap_or_else(|| vec![0.5, 0.8, 0.9, 0.95]),
        rho: a.rho.unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75]),
        block_size: a.block_size.unwrap_or_else(|| vec![50, 100]),
        sidedness: match a.sidedness {
            Some(v) => v.iter().map(|s| parse_sidedness(s)).collect::<Result<_, _>>()?,
            None => vec![Sidedness::OneSided, Sidedness::TwoSided],
        },
        n_tests: a.n_tests.unwrap_or(2000),
        m: a.m.unwrap_or(10),
    };
    let scenarios = grid.expand();
    if scenarios.is_empty() {
        return Err(CliError::Input("the scenario grid is empty".into()));
    }
    for sc in &scenarios {
        sc.validate()?;
    }
    let experiment = MtpExperiment {
        scenarios,
        reps: a.reps.unwrap_or(50),
        seed: g.seed,
        methods: match a.methods {
            Some(v) => v.iter().map(|s| parse_pi0_method(s)).collect::<Result<_, _>>()?,
            None => vec![Pi0Method::Bayes, Pi0Method::Convex],
        },
        sampler: sampler_config(g.seed, a.burn_in, a.draws, None)?,
    };
    if experiment.reps == 0 || experiment.methods.is_empty() {
        return Err(CliError::Input("need at least one replication and one method".into()));
    }
    let bins = a.bins.unwrap_or(20);
    if bins == 0 {
        return Err(CliError::Input("`bins` must be at least 1".into()));
    }
    let params = MtpParams { grid, experiment, bins };
    let mut w = start_run(g, "mtp", &params)?;
    info!("{} scenario(s) x {} replications", params.experiment.scenarios.len(), params.experiment.reps);
    let rows = mtp::run_mtp_experiment(&params.experiment)?;
    w.add("results.csv", mtp::rows_to_csv(&rows).as_bytes())?;
    for sc in &params.experiment.scenarios {
        w.add(&format!("density_{}.csv", sc.key()), mtp::histogram_csv(&rows, sc, bins).as_bytes())?;
    }
    finish(w)
}

// ---------------------------------------------------------------- contraction

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ContractionArgs {
    /// True density [default: g1].
    #[arg(long)]
    pub density: Option<String>,
    /// Fixed order used by the prior [default: 2].
    #[arg(long)]
    pub k: Option<u32>,
    /// Sample sizes [default: 100,200,400,800].
    #[arg(long, alias = "n", value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Replications per size [default: 20].
    #[arg(long, alias = "R")]
    pub reps: Option<usize>,
    /// Sampler burn-in [default: 2000].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Sampler draws [default: 1000].
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Serialize)]
struct ContractionParams {
    density: String,
    k: u32,
    sizes: Vec<usize>,
    reps: usize,
    sampler: SamplerConfig,
}

pub fn contraction(mut a: ContractionArgs, file: &Map<String, Value>, g: &Globals) -> Result<(), CliError> {
    let mut f: ContractionArgs = command_params(file)?;
    merge!(a, f; density, k, sizes, reps, burn_in, draws);
    let spec = DensitySpec::parse(a.density.as_deref().unwrap_or("g1"))?;
    let params = ContractionParams {
        density: spec.id(),
        k: a.k.unwrap_or(2),
        sizes: a.sizes.unwrap_or_else(|| vec![100, 200, 400, 800]),
        reps: a.reps.unwrap_or(20),
        sampler: sampler_config(g.seed, a.burn_in, a.draws, None)?,
    };
    if params.k == 0 {
        return Err(CliError::Input("`k` must be at least 1".into()));
    }
    let mut w = start_run(g, "contraction", &params)?;
    let res = simgen::contraction_probe(&spec, params.k, &params.sizes, params.reps, g.seed, &params.sampler)?;
    let mut csv = String::from("n,rep,hellinger\n");
    for (n, errs) in res.sizes.iter().zip(&res.errors) {
        for (r, e) in errs.iter().enumerate() {
            csv.push_str(&format!("{n},{r},{e}\n"));
        }
    }
    w.add("contraction.csv", csv.as_bytes())?;
    info!("slope {:.3}, 95% interval ({:.3}, {:.3})", res.slope, res.slope_ci.0, res.slope_ci.1);
    w.add("summary.json", &json_bytes(&res))?;
    finish(w)
}

// ---------------------------------------------------------------- selftest

#[derive(Debug, Default, Args)]
pub struct SelftestArgs {
    /// Print the invariant names and exit.
    #[arg(long)]
    pub list: bool,
    /// Replace a library routine by a broken variant.
    #[arg(long, hide = true, value_parser = ["psi-sign"])]
    pub inject_fault: Option<String>,
}

pub fn selftest(a: SelftestArgs, g: &Globals) -> Result<(), CliError> {
    if a.list {
        for inv in selftest::invariants() {
            println!("{}", inv.name);
        }
        return Ok(());
    }
    let kernel: selftest::KernelFn = match a.inject_fault.as_deref() {
        Some(_) => selftest::faulty_psi,
        None => kmono::kernel::psi,
    };
    let mut failed = Vec::new();
    for o in selftest::run_selftest(kernel, g.seed) {
        match &o.result {
            Ok(()) => println!("PASS {}", o.name),
            Err(msg) => {
                println!("FAIL {}: {msg}", o.name);
                failed.push(o.name.to_string());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Selftest(failed))
    }
}
