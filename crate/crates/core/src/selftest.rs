//! Fast invariant suite run by the `selftest` command.
//!
//! Kernel-dependent checks take the kernel as a function pointer so a
//! deliberately broken kernel can be substituted to prove the suite bites.

use rand::Rng;

use crate::baselines::{convex_candidates, convex_npmle, ecdf_points, grenander, mean_log_likelihood};
use crate::kernel::{psi_l1_distance, KMixture, KernelParams};
use crate::metrics::hellinger;
use crate::quadrature;
use crate::rng::{self, StreamRng};
use crate::sampler::{run_chain, KMode, PriorConfig, SamplerConfig};

/// `psi(k, theta, x)`.
pub type KernelFn = fn(u32, f64, f64) -> f64;

/// Kernel without the positive part, so it goes negative past `theta`.
pub fn faulty_psi(k: u32, theta: f64, x: f64) -> f64 {
    let kf = f64::from(k);
    kf / theta * (1.0 - x / theta).powi(k as i32 - 1)
}

pub struct Invariant {
    pub name: &'static str,
    check: fn(KernelFn, &mut StreamRng) -> Result<(), String>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub result: Result<(), String>,
}

pub fn invariants() -> Vec<Invariant> {
    vec![
        Invariant { name: "psi support", check: psi_support },
        Invariant { name: "psi normalisation", check: psi_normalisation },
        Invariant { name: "cdf quantile round trip", check: cdf_round_trip },
        Invariant { name: "l1 closed form", check: l1_closed_form },
        Invariant { name: "mixture endpoint limits", check: endpoint_limits },
        Invariant { name: "grenander lcm oracle", check: grenander_oracle },
        Invariant { name: "convex npmle kkt", check: convex_kkt },
        Invariant { name: "null proportion bound", check: null_bound },
        Invariant { name: "sampler determinism", check: sampler_determinism },
    ]
}

pub fn run_selftest(kernel: KernelFn, seed: u64) -> Vec<Outcome> {
    invariants()
        .into_iter()
        .enumerate()
        .map(|(i, inv)| {
            let mut r = rng::stream(seed, &[i as u64]);
            Outcome { name: inv.name, result: (inv.check)(kernel, &mut r) }
        })
        .collect()
}

fn random_kernel(r: &mut StreamRng) -> (u32, f64) {
    (r.random_range(1..=10), r.random_range(0.05..=1.0))
}

fn psi_support(kernel: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..2000 {
        let (k, t) = random_kernel(r);
        let x: f64 = r.random();
        let v = kernel(k, t, x);
        if x >= t && v != 0.0 {
            return Err(format!("psi_{k}({x}, {t}) = {v}, expected 0 beyond the scale"));
        }
        if x < t && !(v > 0.0) {
            return Err(format!("psi_{k}({x}, {t}) = {v}, expected positive inside the support"));
        }
    }
    Ok(())
}

fn psi_normalisation(kernel: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..100 {
        let (k, t) = random_kernel(r);
        let total = quadrature::adaptive(|x| kernel(k, t, x), 0.0, 1.0, 1e-12, &[t]);
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("integral of psi_{k}(., {t}) is {total}"));
        }
    }
    Ok(())
}

fn cdf_round_trip(_: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..1000 {
        let (k, t) = random_kernel(r);
        let p = KernelParams::new(k, t).map_err(|e| e.to_string())?;
        let u: f64 = r.random_range(0.0..1.0);
        let back = p.cdf(p.quantile(u));
        if (back - u).abs() > 1e-12 {
            return Err(format!("cdf(quantile({u})) = {back} for k={k}, theta={t}"));
        }
    }
    Ok(())
}

fn l1_closed_form(kernel: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..50 {
        let (k, t1) = random_kernel(r);
        let t2: f64 = r.random_range(0.05..=1.0);
        let closed = psi_l1_distance(k, t1, t2).map_err(|e| e.to_string())?;
        let quad = quadrature::adaptive(|x| (kernel(k, t1, x) - kernel(k, t2, x)).abs(), 0.0, 1.0, 1e-11, &[t1, t2]);
        if (closed - quad).abs() > 1e-6 {
            return Err(format!("k={k}, theta={t1}, theta'={t2}: closed form {closed}, quadrature {quad}"));
        }
    }
    Ok(())
}

fn endpoint_limits(_: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..200 {
        let m = random_mixture(r, 1);
        let at0 = m.beta0() + (1.0 - m.beta0()) * m.atoms().map(|(t, w)| w * f64::from(m.k()) / t).sum::<f64>();
        if (m.pdf(0.0) - at0).abs() > 1e-9 * at0 || m.pdf(1.0) != m.beta0() {
            return Err(format!("endpoint limits wrong for {m:?}"));
        }
    }
    Ok(())
}

fn grenander_oracle(_: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..50 {
        let n = r.random_range(1..=30);
        let data: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let g = grenander(&data).map_err(|e| e.to_string())?;
        let pts = ecdf_points(&data).map_err(|e| e.to_string())?;
        // every ECDF point lies on or under the majorant, every hull vertex on it
        for &(x, f) in &pts {
            let cum: f64 = g
                .breakpoints
                .windows(2)
                .zip(&g.heights)
                .map(|(b, h)| h * (x.min(b[1]) - b[0]).max(0.0))
                .sum();
            if cum + 1e-12 < f {
                return Err(format!("majorant below the ECDF at {x}"));
            }
        }
        if g.heights.windows(2).any(|w| w[0] < w[1]) || (g.integral() - 1.0).abs() > 1e-12 {
            return Err("Grenander heights not a nonincreasing density".into());
        }
    }
    Ok(())
}

fn convex_kkt(_: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    let data: Vec<f64> = (0..300).map(|_| 1.0 - r.random::<f64>().sqrt()).collect();
    let fit = convex_npmle(&data, 512, 1000, 1e-7).map_err(|e| e.to_string())?;
    if !fit.converged {
        return Err("convex NPMLE did not converge".into());
    }
    for t in convex_candidates(&data, 512) {
        let d = fit.gradient(&data, t);
        if d > 1.0 + 1e-5 {
            return Err(format!("gradient {d} at candidate {t}"));
        }
    }
    let gre = grenander(&data).map_err(|e| e.to_string())?;
    if mean_log_likelihood(&fit, &data) > mean_log_likelihood(&gre, &data) + 1e-8 {
        return Err("convex fit beats the Grenander likelihood".into());
    }
    Ok(())
}

/// Random mixture of order at least `min_k`.
pub fn random_mixture(r: &mut StreamRng, min_k: u32) -> KMixture {
    let k = r.random_range(min_k.max(1)..=10);
    let atoms: Vec<(f64, f64)> = (0..r.random_range(1..=5))
        .map(|_| (r.random_range(0.05..=1.0), r.random_range(0.1..1.0)))
        .collect();
    KMixture::normalized(k, r.random(), atoms).expect("valid random mixture")
}

fn null_bound(_: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    for _ in 0..200 {
        let (a, b) = (random_mixture(r, 2), random_mixture(r, 2));
        let h = hellinger(&a, &b, 4096).map_err(|e| e.to_string())?;
        let gap = (a.beta0() - b.beta0()).abs();
        if gap > (6.0 * h).sqrt() + 1e-9 {
            return Err(format!("|beta0 gap| {gap} exceeds sqrt(6 h) with h = {h}"));
        }
    }
    Ok(())
}

fn sampler_determinism(_: KernelFn, r: &mut StreamRng) -> Result<(), String> {
    let data: Vec<f64> = (0..60).map(|_| r.random::<f64>().powi(2)).collect();
    let prior = PriorConfig::for_sample_size(data.len(), KMode::adaptive_default());
    let cfg = SamplerConfig { burn_in: 50, draws: 20, ..SamplerConfig::with_seed(r.random()) };
    let a = run_chain(&data, &prior, &cfg).map_err(|e| e.to_string())?;
    let b = run_chain(&data, &prior, &cfg).map_err(|e| e.to_string())?;
    if a != b {
        return Err("identical seeds gave different chains".into());
    }
    Ok(())
}
