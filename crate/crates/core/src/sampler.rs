//! Metropolis–Hastings chains over the diagonal `p(s) ∝ ρ_ss` and over pairs
//! `q(s, s′) ∝ |ρ_ss′|²`, plus an enumerating i.i.d. sampler for tests.
//!
//! All proposals are uniform spin flips, hence symmetric, and the acceptance
//! probability is `min(1, target(new)/target(old))` evaluated in log domain.
//! A proposal with zero target weight is never accepted; a chain sitting on a
//! zero-weight state (possible only at start) accepts any non-zero move.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::DensityModel;
use crate::lattice::configuration_from_index;
use crate::{par, Error, Result, SpinConfiguration};

/// Largest system the exact sampler and kernel assembly will enumerate.
pub const EXACT_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Diagonal,
    OffDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    pub samples_per_chain: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    100
}

fn default_thinning() -> usize {
    1
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { chains: 16, burn_in: 100, thinning: 1, samples_per_chain: 256, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.chains == 0 {
            errs.push("sampler.chains must be positive".to_string());
        }
        if self.thinning == 0 {
            errs.push("sampler.thinning must be positive".to_string());
        }
        if self.samples_per_chain == 0 {
            errs.push("sampler.samples_per_chain must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn total_samples(&self) -> usize {
        self.chains * self.samples_per_chain
    }
}

/// Move kinds, used to index acceptance counters.
pub const SINGLE_FLIP: usize = 0;
pub const JOINT_FLIP: usize = 1;

#[derive(Clone, Debug)]
pub struct ChainState {
    pub target: Target,
    pub s: SpinConfiguration,
    /// Equal to `s` for diagonal chains.
    pub sp: SpinConfiguration,
    pub log_density: f64,
    pub rng: ChaCha8Rng,
    pub accepted: [u64; 2],
    pub proposed: [u64; 2],
    pub burned_in: bool,
}

/// `log ρ_ss` or `log |ρ_ss′|²` for the given target.
pub fn log_target<M: DensityModel + ?Sized>(model: &M, params: &[f64], target: Target, s: &[i8], sp: &[i8]) -> f64 {
    match target {
        Target::Diagonal => model.log_element(params, s, s).log_modulus,
        Target::OffDiagonal => 2.0 * model.log_element(params, s, sp).log_modulus,
    }
}

/// Metropolis acceptance probability for symmetric proposals.
pub fn acceptance_probability(old: f64, new: f64) -> f64 {
    if new == f64::NEG_INFINITY {
        0.0
    } else if new >= old {
        1.0
    } else {
        (new - old).exp()
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

impl ChainState {
    /// A fresh chain at a uniformly random configuration; off-diagonal chains
    /// start on the diagonal.
    pub fn new<M: DensityModel + ?Sized>(model: &M, params: &[f64], target: Target, seed: u64, chain: usize) -> Self {
        let mut rng = chain_rng(seed, chain);
        let n = model.n_sites();
        let s: SpinConfiguration = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        let sp = s.clone();
        let log_density = log_target(model, params, target, &s, &sp);
        Self { target, s, sp, log_density, rng, accepted: [0; 2], proposed: [0; 2], burned_in: false }
    }

    /// Re-evaluates the cached log-density, e.g. after a parameter update.
    pub fn refresh<M: DensityModel + ?Sized>(&mut self, model: &M, params: &[f64]) {
        self.log_density = log_target(model, params, self.target, &self.s, &self.sp);
    }

    /// Absolute difference between the cached and a fresh log-density.
    pub fn cache_error<M: DensityModel + ?Sized>(&self, model: &M, params: &[f64]) -> f64 {
        let fresh = log_target(model, params, self.target, &self.s, &self.sp);
        if fresh == self.log_density {
            0.0
        } else {
            (fresh - self.log_density).abs()
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            self.accepted.iter().sum::<u64>() as f64 / p as f64
        }
    }

    fn count(&mut self, kind: usize, accepted: bool) {
        if self.burned_in {
            self.proposed[kind] += 1;
            self.accepted[kind] += accepted as u64;
        }
    }

    fn try_move<M: DensityModel + ?Sized>(&mut self, model: &M, params: &[f64], kind: usize, flip: impl Fn(&mut Self)) {
        flip(self);
        let new = log_target(model, params, self.target, &self.s, &self.sp);
        let a = acceptance_probability(self.log_density, new);
        let accept = a >= 1.0 || (a > 0.0 && self.rng.gen::<f64>() < a);
        if accept {
            self.log_density = new;
        } else {
            flip(self);
        }
        self.count(kind, accept);
    }
}

/// One single-site flip proposal for a diagonal chain.
pub fn step_diagonal<M: DensityModel + ?Sized>(chain: &mut ChainState, model: &M, params: &[f64]) {
    let i = chain.rng.gen_range(0..chain.s.len());
    chain.try_move(model, params, SINGLE_FLIP, |c| {
        c.s[i] = -c.s[i];
        c.sp[i] = c.s[i];
    });
}

/// One proposal for a pair chain: half the time a single flip in `s` or in
/// `s′`, otherwise the same site flipped in both.
pub fn step_offdiagonal<M: DensityModel + ?Sized>(chain: &mut ChainState, model: &M, params: &[f64]) {
    let n = chain.s.len();
    let joint = chain.rng.gen::<bool>();
    let i = chain.rng.gen_range(0..n);
    if joint {
        chain.try_move(model, params, JOINT_FLIP, |c| {
            c.s[i] = -c.s[i];
            c.sp[i] = -c.sp[i];
        });
    } else if chain.rng.gen::<bool>() {
        chain.try_move(model, params, SINGLE_FLIP, |c| c.s[i] = -c.s[i]);
    } else {
        chain.try_move(model, params, SINGLE_FLIP, |c| c.sp[i] = -c.sp[i]);
    }
}

fn step<M: DensityModel + ?Sized>(chain: &mut ChainState, model: &M, params: &[f64]) {
    match chain.target {
        Target::Diagonal => step_diagonal(chain, model, params),
        Target::OffDiagonal => step_offdiagonal(chain, model, params),
    }
}

fn sweep<M: DensityModel + ?Sized>(chain: &mut ChainState, model: &M, params: &[f64], sweeps: usize) {
    for _ in 0..sweeps * chain.s.len() {
        step(chain, model, params);
    }
}

/// A batch of configurations (or pairs) with optional exact weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub target: Target,
    pub configs: Vec<SpinConfiguration>,
    /// Partners `s′`; empty for diagonal samples.
    pub partners: Vec<SpinConfiguration>,
    /// Normalized weights when the set is an exact enumeration.
    pub weights: Option<Vec<f64>>,
    /// Contiguous index ranges used for batch-means error bars.
    pub batches: Vec<Range<usize>>,
    pub acceptance: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn pair(&self, k: usize) -> (&[i8], &[i8]) {
        match self.target {
            Target::Diagonal => (&self.configs[k], &self.configs[k]),
            Target::OffDiagonal => (&self.configs[k], &self.partners[k]),
        }
    }

    pub fn weight(&self, k: usize) -> f64 {
        match &self.weights {
            Some(w) => w[k],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn mean_acceptance(&self) -> Option<f64> {
        if self.acceptance.is_empty() {
            None
        } else {
            Some(self.acceptance.iter().sum::<f64>() / self.acceptance.len() as f64)
        }
    }
}

/// Splits `n` draws into contiguous ranges: each chain into enough blocks that
/// there are at least 16 batches overall.
fn batch_ranges(chains: usize, per_chain: usize) -> Vec<Range<usize>> {
    let per = 16usize.div_ceil(chains).clamp(1, per_chain.max(1));
    let mut out = Vec::new();
    for c in 0..chains {
        let start = c * per_chain;
        for b in 0..per {
            let lo = start + b * per_chain / per;
            let hi = start + (b + 1) * per_chain / per;
            if hi > lo {
                out.push(lo..hi);
            }
        }
    }
    out
}

/// Independent chains that persist between calls, so that an optimizer can
/// continue sampling from where the previous iteration stopped.
#[derive(Clone, Debug)]
pub struct ChainSet {
    pub target: Target,
    pub chains: Vec<ChainState>,
}

impl ChainSet {
    pub fn new<M: DensityModel + ?Sized>(model: &M, params: &[f64], target: Target, n_chains: usize, seed: u64) -> Self {
        let chains = (0..n_chains).map(|c| ChainState::new(model, params, target, seed, c)).collect();
        Self { target, chains }
    }

    /// Refreshes cached densities, runs `burn_in` sweeps, then records
    /// `per_chain` samples spaced `thinning` sweeps apart.
    pub fn sample<M: DensityModel + Sync + ?Sized>(
        &mut self,
        model: &M,
        params: &[f64],
        burn_in: usize,
        thinning: usize,
        per_chain: usize,
    ) -> Samples {
        let chains = std::mem::take(&mut self.chains);
        let results = par::map_owned(chains, |mut chain| {
            chain.refresh(model, params);
            chain.burned_in = false;
            sweep(&mut chain, model, params, burn_in);
            chain.burned_in = true;
            let before = (chain.accepted, chain.proposed);
            let mut out = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                sweep(&mut chain, model, params, thinning);
                out.push((chain.s.clone(), chain.sp.clone()));
            }
            let acc: u64 = chain.accepted.iter().sum::<u64>() - before.0.iter().sum::<u64>();
            let prop: u64 = chain.proposed.iter().sum::<u64>() - before.1.iter().sum::<u64>();
            let rate = if prop == 0 { 0.0 } else { acc as f64 / prop as f64 };
            (chain, out, rate)
        });
        let mut configs = Vec::with_capacity(results.len() * per_chain);
        let mut partners = Vec::new();
        let mut acceptance = Vec::with_capacity(results.len());
        for (chain, out, rate) in results {
            for (s, sp) in out {
                configs.push(s);
                if self.target == Target::OffDiagonal {
                    partners.push(sp);
                }
            }
            acceptance.push(rate);
            self.chains.push(chain);
        }
        Samples { target: self.target, configs, partners, weights: None, batches: batch_ranges(self.chains.len(), per_chain), acceptance }
    }
}

/// Runs fresh chains from the configured seed.
pub fn run_chains<M: DensityModel + Sync + ?Sized>(config: &SamplerConfig, target: Target, model: &M, params: &[f64]) -> Result<Samples> {
    config.validate()?;
    let mut set = ChainSet::new(model, params, target, config.chains, config.seed);
    Ok(set.sample(model, params, config.burn_in, config.thinning, config.samples_per_chain))
}

/// The normalized target distribution, enumerated.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    pub target: Target,
    pub n_sites: usize,
    /// `(s, s′, probability)` for every state of non-zero weight.
    pub support: Vec<(SpinConfiguration, SpinConfiguration, f64)>,
    cdf: Vec<f64>,
}

pub fn exact_sampler<M: DensityModel + Sync + ?Sized>(model: &M, params: &[f64], target: Target) -> Result<ExactSampler> {
    let n = model.n_sites();
    if n > EXACT_CAP {
        return Err(Error::SizeCap { what: "exact sampler", n, cap: EXACT_CAP });
    }
    let dim = 1usize << n;
    let states = match target {
        Target::Diagonal => dim,
        Target::OffDiagonal => dim * dim,
    };
    let logs = par::map_indexed(states, |k| {
        let (i, j) = match target {
            Target::Diagonal => (k, k),
            Target::OffDiagonal => (k / dim, k % dim),
        };
        let (s, sp) = (configuration_from_index(i, n), configuration_from_index(j, n));
        let l = log_target(model, params, target, &s, &sp);
        (s, sp, l)
    });
    let max = logs.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return Err(Error::ZeroWeight);
    }
    let mut support: Vec<_> = logs.into_iter().filter(|x| x.2 > f64::NEG_INFINITY).map(|(s, sp, l)| (s, sp, (l - max).exp())).collect();
    let total: f64 = support.iter().map(|x| x.2).sum();
    let mut cdf = Vec::with_capacity(support.len());
    let mut acc = 0.0;
    for x in support.iter_mut() {
        x.2 /= total;
        acc += x.2;
        cdf.push(acc);
    }
    Ok(ExactSampler { target, n_sites: n, support, cdf })
}

impl ExactSampler {
    /// `count` i.i.d. draws by inverse CDF, split into 32 batches.
    pub fn draw(&self, count: usize, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = *self.cdf.last().expect("non-empty support");
        let mut configs = Vec::with_capacity(count);
        let mut partners = Vec::new();
        for _ in 0..count {
            let u = rng.gen::<f64>() * last;
            let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
            configs.push(self.support[k].0.clone());
            if self.target == Target::OffDiagonal {
                partners.push(self.support[k].1.clone());
            }
        }
        let blocks = count.clamp(1, 32);
        let batches = (0..blocks).map(|b| b * count / blocks..(b + 1) * count / blocks).collect();
        Samples { target: self.target, configs, partners, weights: None, batches, acceptance: Vec::new() }
    }

    /// The whole support with exact probabilities as weights, so that sample
    /// means become exact expectations.
    pub fn enumerate(&self) -> Samples {
        let configs = self.support.iter().map(|x| x.0.clone()).collect();
        let partners = match self.target {
            Target::Diagonal => Vec::new(),
            Target::OffDiagonal => self.support.iter().map(|x| x.1.clone()).collect(),
        };
        Samples {
            target: self.target,
            configs,
            partners,
            weights: Some(self.support.iter().map(|x| x.2).collect()),
            batches: vec![0..self.support.len()],
            acceptance: Vec::new(),
        }
    }

    pub fn probability_vector(&self) -> Vec<f64> {
        let dim = 1usize << self.n_sites;
        let size = match self.target {
            Target::Diagonal => dim,
            Target::OffDiagonal => dim * dim,
        };
        let mut p = vec![0.0; size];
        for (s, sp, w) in &self.support {
            p[state_index(self.target, s, sp)] = *w;
        }
        p
    }
}

/// Flat index of a chain state: `basis_index(s)` for diagonal targets and
/// `basis_index(s)·2^N + basis_index(s′)` for pairs.
pub fn state_index(target: Target, s: &[i8], sp: &[i8]) -> usize {
    use crate::lattice::basis_index;
    match target {
        Target::Diagonal => basis_index(s),
        Target::OffDiagonal => (basis_index(s) << s.len()) | basis_index(sp),
    }
}

/// Every proposal reachable from `(s, s′)` with its proposal probability.
fn proposals(target: Target, s: &[i8], sp: &[i8]) -> Vec<(f64, SpinConfiguration, SpinConfiguration)> {
    let n = s.len() as f64;
    let mut out = Vec::new();
    for i in 0..s.len() {
        let mut a = s.to_vec();
        a[i] = -a[i];
        match target {
            Target::Diagonal => out.push((1.0 / n, a.clone(), a)),
            Target::OffDiagonal => {
                let mut b = sp.to_vec();
                b[i] = -b[i];
                out.push((0.25 / n, a.clone(), sp.to_vec()));
                out.push((0.25 / n, s.to_vec(), b.clone()));
                out.push((0.5 / n, a, b));
            }
        }
    }
    out
}

/// The full Metropolis transition matrix `P[from, to]` over all chain states.
pub fn metropolis_kernel<M: DensityModel + Sync + ?Sized>(model: &M, params: &[f64], target: Target) -> Result<DMatrix<f64>> {
    let n = model.n_sites();
    let cap = match target {
        Target::Diagonal => EXACT_CAP,
        Target::OffDiagonal => EXACT_CAP / 2,
    };
    if n > cap {
        return Err(Error::SizeCap { what: "Metropolis kernel", n, cap });
    }
    let dim = 1usize << n;
    let size = match target {
        Target::Diagonal => dim,
        Target::OffDiagonal => dim * dim,
    };
    let split = |k: usize| match target {
        Target::Diagonal => (configuration_from_index(k, n), configuration_from_index(k, n)),
        Target::OffDiagonal => (configuration_from_index(k >> n, n), configuration_from_index(k & (dim - 1), n)),
    };
    let logs: Vec<f64> = (0..size)
        .map(|k| {
            let (s, sp) = split(k);
            log_target(model, params, target, &s, &sp)
        })
        .collect();
    let mut kernel = DMatrix::zeros(size, size);
    for from in 0..size {
        let (s, sp) = split(from);
        let mut leave = 0.0;
        for (prob, a, b) in proposals(target, &s, &sp) {
            let to = state_index(target, &a, &b);
            let p = prob * acceptance_probability(logs[from], logs[to]);
            kernel[(from, to)] += p;
            leave += p;
        }
        kernel[(from, from)] += 1.0 - leave;
    }
    Ok(kernel)
}
