//! Gibbs state of the slice sampler and its individual updates.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::{KMode, PosteriorDraw, PriorConfig};
use crate::error::{Error, Result};
use crate::kernel::{psi, KMixture, KernelParams};
use crate::rng::StreamRng;

/// Decay of the deterministic slice envelope `xi_l = SLICE_DECAY^l`.
pub const SLICE_DECAY: f64 = 0.9;
/// Instantiated sticks are extended until the uninstantiated mass is below this.
pub const TAIL_MASS: f64 = 1e-8;

#[inline]
fn xi(label: usize) -> f64 {
    SLICE_DECAY.powi(label as i32)
}

fn beta_draw(rng: &mut StreamRng, a: f64, b: f64) -> f64 {
    let v: f64 = Beta::new(a, b).expect("beta shape parameters are positive").sample(rng);
    // keep stick fractions strictly inside (0, 1)
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Unnormalised log full conditional of one atom's scale given the points
/// allocated to it, on the base-measure support `(low, high)`.
#[derive(Debug, Clone)]
pub struct AtomTarget<'a> {
    pub k: u32,
    pub members: &'a [f64],
    pub low: f64,
    pub high: f64,
}

impl AtomTarget<'_> {
    fn max_member(&self) -> f64 {
        self.members.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Log density of the scale, `-inf` outside the feasible region.
    pub fn log_density(&self, theta: f64) -> f64 {
        if !(theta > self.low && theta < self.high) || theta <= self.max_member() {
            return f64::NEG_INFINITY;
        }
        let m = self.members.len() as f64;
        let km1 = f64::from(self.k - 1);
        let mut s = m * (f64::from(self.k).ln() - theta.ln());
        if self.k > 1 {
            s += km1 * self.members.iter().map(|&x| (1.0 - x / theta).ln()).sum::<f64>();
        }
        s
    }

    fn to_unit(&self, theta: f64) -> f64 {
        (theta - self.low) / (self.high - self.low)
    }

    /// Log of the Jacobian `d theta / d eta` for `eta = logit((theta - low) / (high - low))`.
    fn log_jacobian(&self, theta: f64) -> f64 {
        let s = self.to_unit(theta);
        (s * (1.0 - s) * (self.high - self.low)).ln()
    }

    /// Log Metropolis–Hastings acceptance ratio for the random walk on the
    /// logit scale, moving from `from` to `to`.
    pub fn log_accept(&self, from: f64, to: f64) -> f64 {
        let target_to = self.log_density(to);
        if target_to == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        target_to + self.log_jacobian(to) - self.log_density(from) - self.log_jacobian(from)
    }

    /// One random-walk move on the logit scale with standard deviation `step`.
    pub fn mh_step(&self, theta: f64, step: f64, rng: &mut StreamRng) -> f64 {
        let s = self.to_unit(theta);
        let eta = (s / (1.0 - s)).ln();
        let z: f64 = rng.sample(StandardNormal);
        let eta_new = eta + step * z;
        let s_new = 1.0 / (1.0 + (-eta_new).exp());
        let proposal = self.low + (self.high - self.low) * s_new;
        let log_u: f64 = rng.random::<f64>().ln();
        if log_u < self.log_accept(theta, proposal) {
            proposal
        } else {
            theta
        }
    }
}

/// Full state of one slice-Gibbs chain.
///
/// Labels: `0` is the uniform component, `l >= 1` is mixture atom `l`
/// (stored at index `l - 1` of `sticks`/`atoms`).
#[derive(Debug, Clone)]
pub struct SamplerState {
    data: Vec<f64>,
    z: Vec<usize>,
    u: Vec<f64>,
    sticks: Vec<f64>,
    weights: Vec<f64>,
    atoms: Vec<f64>,
    beta0: f64,
    k: u32,
    prior: PriorConfig,
    max_sticks: usize,
    atom_step: f64,
    rng: StreamRng,
    // per-sweep scratch
    counts: Vec<usize>,
    accepted: u64,
    proposed: u64,
}

impl SamplerState {
    /// Initialise a chain: one atom at the top of the base support, each
    /// observation assigned by a fair coin to it or to the uniform component.
    pub fn new(
        data: &[f64],
        prior: &PriorConfig,
        max_sticks: usize,
        atom_step: f64,
        mut rng: StreamRng,
    ) -> Result<Self> {
        prior.validate()?;
        if data.len() < 2 {
            return Err(Error::Parameter("the sampler needs at least two observations".into()));
        }
        let mut data = data.to_vec();
        data.sort_by(f64::total_cmp);
        let k = match &prior.k_mode {
            KMode::Fixed(k) => *k,
            KMode::Adaptive(set) => set[set.len() / 2],
        };
        let v1 = beta_draw(&mut rng, 1.0, prior.precision_a);
        let z: Vec<usize> = data.iter().map(|_| usize::from(rng.random::<bool>())).collect();
        let n = data.len();
        let mut state = Self {
            data,
            z,
            u: vec![0.5; n],
            sticks: vec![v1],
            weights: vec![v1],
            atoms: vec![prior.base_high],
            beta0: 0.5,
            k,
            prior: prior.clone(),
            max_sticks,
            atom_step,
            rng,
            counts: Vec::new(),
            accepted: 0,
            proposed: 0,
        };
        if state.data.iter().any(|&x| x >= state.atoms[0]) {
            // nothing above the top of the base support: start all-uniform
            state.z.iter_mut().for_each(|z| *z = 0);
        }
        state.update_slices();
        Ok(state)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn allocations(&self) -> &[usize] {
        &self.z
    }

    pub fn slices(&self) -> &[f64] {
        &self.u
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sticks(&self) -> &[f64] {
        &self.sticks
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// Fraction of accepted atom moves so far.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn set_beta0(&mut self, beta0: f64) {
        self.beta0 = beta0;
    }

    pub fn set_k(&mut self, k: u32) {
        self.k = k;
    }

    /// Assign every observation to the uniform component.
    pub fn allocate_all_uniform(&mut self) {
        self.z.iter_mut().for_each(|z| *z = 0);
        self.update_slices();
    }

    /// One full sweep in the fixed order: slices, allocations, sticks,
    /// atoms, uniform weight, and (when adaptive) the order k.
    pub fn sweep(&mut self) -> Result<()> {
        self.update_slices();
        self.update_allocations()?;
        self.update_sticks();
        self.update_atoms();
        self.update_beta0();
        if matches!(self.prior.k_mode, KMode::Adaptive(_)) {
            self.update_k()?;
        }
        Ok(())
    }

    fn recompute_weights(&mut self) {
        self.weights.clear();
        let mut remaining = 1.0;
        for &v in &self.sticks {
            self.weights.push(v * remaining);
            remaining *= 1.0 - v;
        }
    }

    fn remaining_mass(&self) -> f64 {
        self.sticks.iter().map(|v| 1.0 - v).product()
    }

    fn push_stick(&mut self) -> Result<()> {
        if self.sticks.len() >= self.max_sticks {
            return Err(Error::Resource(format!(
                "stick truncation would exceed max_sticks = {}",
                self.max_sticks
            )));
        }
        let remaining = self.remaining_mass();
        let v = beta_draw(&mut self.rng, 1.0, self.prior.precision_a);
        let theta = self.draw_base();
        self.sticks.push(v);
        self.weights.push(v * remaining);
        self.atoms.push(theta);
        Ok(())
    }

    fn draw_base(&mut self) -> f64 {
        let (lo, hi) = (self.prior.base_low, self.prior.base_high);
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Instantiate sticks until the uninstantiated tail carries less than
    /// `tail` of the mixing mass.
    pub fn extend_to_mass(&mut self, tail: f64) -> Result<()> {
        let mut remaining = self.remaining_mass();
        while remaining >= tail {
            self.push_stick()?;
            remaining *= 1.0 - self.sticks[self.sticks.len() - 1];
        }
        Ok(())
    }

    /// Slice variables given allocations: `u_i ~ U(0, xi_{z_i})`, with
    /// `xi_0 = 1` for the uniform component.
    pub fn update_slices(&mut self) {
        for (u, &z) in self.u.iter_mut().zip(&self.z) {
            let r: f64 = self.rng.random();
            // (0, 1] so the slice never sits exactly at zero
            *u = xi(z) * (1.0 - r);
        }
    }

    /// Allocations given slices, weights, atoms and the uniform weight.
    pub fn update_allocations(&mut self) -> Result<()> {
        let u_min = self.u.iter().copied().fold(1.0, f64::min);
        while xi(self.sticks.len() + 1) > u_min {
            self.push_stick()?;
        }
        let mut probs: Vec<f64> = Vec::with_capacity(self.sticks.len() + 1);
        for i in 0..self.data.len() {
            let x = self.data[i];
            let u = self.u[i];
            probs.clear();
            probs.push(self.beta0);
            let mut total = self.beta0;
            let mix = 1.0 - self.beta0;
            for l in 1..=self.sticks.len() {
                let xl = xi(l);
                if xl <= u {
                    break;
                }
                let p = mix * self.weights[l - 1] / xl * psi(self.k, self.atoms[l - 1], x);
                probs.push(p);
                total += p;
            }
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Numeric(format!(
                    "allocation weights for x = {x} sum to {total}; state: {}",
                    self.dump()
                )));
            }
            let mut target = self.rng.random::<f64>() * total;
            let mut chosen = 0;
            for (l, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    chosen = l;
                }
                if target < p {
                    break;
                }
                target -= p;
            }
            self.z[i] = chosen;
        }
        self.trim_unoccupied();
        Ok(())
    }

    /// Drop sticks beyond the largest occupied label; they are regenerated
    /// from the prior whenever a later step needs them.
    fn trim_unoccupied(&mut self) {
        let top = self.z.iter().copied().max().unwrap_or(0);
        self.sticks.truncate(top);
        self.atoms.truncate(top);
        self.weights.truncate(top);
        self.counts.clear();
        self.counts.resize(top + 1, 0);
        for &z in &self.z {
            self.counts[z] += 1;
        }
    }

    fn recount(&mut self) {
        self.counts.clear();
        self.counts.resize(self.sticks.len() + 1, 0);
        for &z in &self.z {
            self.counts[z] += 1;
        }
    }

    /// Stick fractions from `Beta(1 + n_l, a + sum_{j > l} n_j)`.
    pub fn update_sticks(&mut self) {
        self.recount();
        let mut tail: usize = self.counts[1..].iter().sum();
        for l in 1..=self.sticks.len() {
            let nl = self.counts[l];
            tail -= nl;
            self.sticks[l - 1] =
                beta_draw(&mut self.rng, 1.0 + nl as f64, self.prior.precision_a + tail as f64);
        }
        self.recompute_weights();
    }

    /// Occupied atoms move by one logit-scale random-walk MH step; empty ones
    /// are redrawn from the base measure.
    pub fn update_atoms(&mut self) {
        self.recount();
        let labels = self.sticks.len();
        // bucket observations by label
        let mut offsets = vec![0usize; labels + 2];
        for &z in &self.z {
            offsets[z + 1] += 1;
        }
        for l in 1..offsets.len() {
            offsets[l] += offsets[l - 1];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0.0; self.data.len()];
        for (&x, &z) in self.data.iter().zip(&self.z) {
            members[fill[z]] = x;
            fill[z] += 1;
        }
        for l in 1..=labels {
            if self.counts[l] == 0 {
                self.atoms[l - 1] = self.draw_base();
                continue;
            }
            let target = AtomTarget {
                k: self.k,
                members: &members[offsets[l]..offsets[l + 1]],
                low: self.prior.base_low,
                high: self.prior.base_high,
            };
            let current = self.atoms[l - 1];
            let next = target.mh_step(current, self.atom_step, &mut self.rng);
            self.proposed += 1;
            if next != current {
                self.accepted += 1;
            }
            self.atoms[l - 1] = next;
        }
    }

    /// Uniform weight from `Beta(1 + #uniform, 1 + #mixture)`.
    pub fn update_beta0(&mut self) {
        let n0 = self.z.iter().filter(|&&z| z == 0).count();
        let n1 = self.z.len() - n0;
        self.beta0 = beta_draw(&mut self.rng, 1.0 + n0 as f64, 1.0 + n1 as f64);
    }

    /// Log-likelihood of the data under each candidate order, using the
    /// instantiated sticks and atoms.
    pub fn order_log_likelihoods(&self, orders: &[u32]) -> Vec<f64> {
        let k_max = orders.iter().copied().max().unwrap_or(1) as usize;
        let mut loglik = vec![0.0; k_max + 1];
        let mut sums = vec![0.0; k_max + 1];
        let mix = 1.0 - self.beta0;
        for &x in &self.data {
            sums.iter_mut().for_each(|s| *s = 0.0);
            for (&theta, &w) in self.atoms.iter().zip(&self.weights) {
                if x >= theta || w == 0.0 {
                    continue;
                }
                let r = 1.0 - x / theta;
                let mut term = w / theta;
                for s in sums.iter_mut().skip(1) {
                    *s += term;
                    term *= r;
                }
            }
            for k in 1..=k_max {
                loglik[k] += (self.beta0 + mix * k as f64 * sums[k]).ln();
            }
        }
        orders.iter().map(|&k| loglik[k as usize]).collect()
    }

    /// Resample k from its discrete full conditional (uniform prior on the
    /// candidate set), then refresh allocations and slices under the new k.
    pub fn update_k(&mut self) -> Result<()> {
        let KMode::Adaptive(set) = &self.prior.k_mode else {
            return Ok(());
        };
        let set = set.clone();
        self.extend_to_mass(TAIL_MASS)?;
        let ll = self.order_log_likelihoods(&set);
        let top = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Numeric(format!(
                "every candidate order has log-likelihood {top}; state: {}",
                self.dump()
            )));
        }
        let probs: Vec<f64> = ll.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = probs.iter().sum();
        let mut target = self.rng.random::<f64>() * total;
        let mut chosen = set[set.len() - 1];
        for (&k, &p) in set.iter().zip(&probs) {
            if target < p {
                chosen = k;
                break;
            }
            target -= p;
        }
        self.k = chosen;
        self.refresh_allocations()?;
        self.update_slices();
        Ok(())
    }

    /// Allocations from their conditional with slices integrated out, over
    /// the instantiated atoms.
    fn refresh_allocations(&mut self) -> Result<()> {
        let mix = 1.0 - self.beta0;
        let mut probs = vec![0.0; self.sticks.len() + 1];
        for i in 0..self.data.len() {
            let x = self.data[i];
            probs[0] = self.beta0;
            let mut total = self.beta0;
            for l in 1..=self.sticks.len() {
                let p = mix * self.weights[l - 1] * psi(self.k, self.atoms[l - 1], x);
                probs[l] = p;
                total += p;
            }
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Numeric(format!(
                    "allocation weights for x = {x} sum to {total}; state: {}",
                    self.dump()
                )));
            }
            let mut target = self.rng.random::<f64>() * total;
            let mut chosen = 0;
            for (l, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    chosen = l;
                }
                if target < p {
                    break;
                }
                target -= p;
            }
            self.z[i] = chosen;
        }
        Ok(())
    }

    /// Current mixture: all instantiated atoms, weights renormalised over the
    /// instantiated sticks, sorted by scale.
    pub fn current_draw(&mut self) -> Result<PosteriorDraw> {
        self.extend_to_mass(TAIL_MASS)?;
        let atoms: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let mixture = KMixture::normalized(self.k, self.beta0, atoms)?;
        Ok(PosteriorDraw::from_mixture(&mixture))
    }

    /// Replace the data by a draw from the model at the current parameters,
    /// allocating each new point to the component that generated it.
    pub fn regenerate_data(&mut self) -> Result<()> {
        let n = self.data.len();
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for _ in 0..n {
            if self.rng.random::<f64>() < self.beta0 {
                let x: f64 = 1.0 - self.rng.random::<f64>();
                pairs.push((x.min(1.0 - 1e-12), 0));
                continue;
            }
            let target: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut l = 0;
            loop {
                if l == self.sticks.len() {
                    self.push_stick()?;
                }
                acc += self.weights[l];
                if target < acc {
                    break;
                }
                l += 1;
            }
            let params = KernelParams::new(self.k, self.atoms[l])?;
            let u: f64 = self.rng.random();
            let x = params.quantile(u.max(1e-300)).max(1e-300);
            pairs.push((x, l + 1));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.data = pairs.iter().map(|p| p.0).collect();
        self.z = pairs.iter().map(|p| p.1).collect();
        self.update_slices();
        Ok(())
    }

    /// Every allocated observation lies inside its atom's support.
    pub fn support_consistent(&self) -> bool {
        self.data.iter().zip(&self.z).all(|(&x, &z)| {
            z == 0 || (z <= self.atoms.len() && psi(self.k, self.atoms[z - 1], x) > 0.0)
        })
    }

    fn dump(&self) -> String {
        format!(
            "k={}, beta0={}, sticks={}, atoms={:?}, weights={:?}",
            self.k,
            self.beta0,
            self.sticks.len(),
            self.atoms,
            self.weights
        )
    }
}
