//! Minimization of the Rényi free energy `F_R = β_R E − S₂`.
//!
//! Each iteration samples the diagonal and the pair distribution, estimates
//! `∂F_R`, and takes one SGD, Adam or SR step. `S₂` is expensive (its
//! estimator needs an extra independent stream and is noisy at low
//! temperature), so it is only estimated every `entropy_every` iterations and
//! once more at the end with a large sample budget.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ansatz::{init, Ansatz, AnsatzSpec, DensityModel};
use crate::estimator::{estimate_observable, estimate_purity, grad_free_energy, real_gram_matrix, Estimate};
use crate::lattice::{IsingHamiltonian, Observable};
use crate::oracle::{exact_ansatz_free_energy, AnsatzFreeEnergy};
use crate::sampler::{exact_sampler, ChainSet, SamplerConfig, Samples, Target, EXACT_CAP};
use crate::{Error, Result};

/// Largest parameter count for which SR builds and solves the dense Gram
/// matrix.
pub const SR_MAX_PARAMS: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Adam,
    Sr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    /// Diagonal shift `ε` of the SR solve.
    pub sr_shift: f64,
    pub max_iterations: usize,
    /// Stop when the windowed mean energy per site changes by less than this.
    pub convergence_threshold: f64,
    pub convergence_window: usize,
    /// Linear ramp of the learning rate over this many iterations.
    pub warmup: usize,
    /// After warm-up, `η_t = η / (1 + (t − warmup)/decay_time)`; `0` disables
    /// decay.
    pub decay_time: f64,
    pub entropy_every: usize,
    /// Total diagonal samples for the final report.
    pub final_samples: usize,
    /// Width of the random perturbation of the initial parameters.
    pub init_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Adam,
            learning_rate: 0.01,
            sr_shift: 0.01,
            max_iterations: 1000,
            convergence_threshold: 1e-4,
            convergence_window: 50,
            warmup: 50,
            decay_time: 500.0,
            entropy_every: 50,
            final_samples: 1 << 16,
            init_scale: 0.05,
        }
    }
}

impl OptimizerConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("optimizer.learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(1e-4..=1.0).contains(&self.sr_shift) {
            errs.push(format!("optimizer.sr_shift must lie in [1e-4, 1], got {}", self.sr_shift));
        }
        if self.max_iterations == 0 {
            errs.push("optimizer.max_iterations must be at least 1".into());
        }
        if !(self.convergence_threshold >= 0.0) {
            errs.push("optimizer.convergence_threshold must be non-negative".into());
        }
        if self.convergence_window == 0 {
            errs.push("optimizer.convergence_window must be positive".into());
        }
        if !(self.decay_time >= 0.0 && self.decay_time.is_finite()) {
            errs.push("optimizer.decay_time must be finite and non-negative".into());
        }
        if self.entropy_every == 0 {
            errs.push("optimizer.entropy_every must be positive".into());
        }
        if self.final_samples < 2 {
            errs.push("optimizer.final_samples must be at least 2".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            errs.push("optimizer.init_scale must be finite and non-negative".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn learning_rate_at(&self, t: usize) -> f64 {
        if t < self.warmup {
            return self.learning_rate * (t + 1) as f64 / self.warmup as f64;
        }
        if self.decay_time == 0.0 {
            return self.learning_rate;
        }
        self.learning_rate / (1.0 + (t - self.warmup) as f64 / self.decay_time)
    }
}

fn check_step(params: &[f64], gradient: &[f64]) -> Result<()> {
    if params.len() != gradient.len() {
        return Err(Error::LengthMismatch { expected: params.len(), got: gradient.len() });
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i} is {}", gradient[i])));
    }
    Ok(())
}

/// `θ ← θ − η g`.
pub fn step_sgd(params: &[f64], gradient: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_step(params, gradient)?;
    Ok(params.iter().zip(gradient).map(|(p, g)| p - eta * g).collect())
}

/// Solves `(G + εI) x = g`, by Cholesky when possible and by SVD least
/// squares otherwise. Returns `x` and the residual norm.
pub fn solve_sr(gram: &DMatrix<f64>, gradient: &[f64], shift: f64) -> Result<(Vec<f64>, f64)> {
    let p = gradient.len();
    if gram.shape() != (p, p) {
        return Err(Error::LengthMismatch { expected: p, got: gram.nrows() });
    }
    if p > SR_MAX_PARAMS {
        return Err(Error::SizeCap { what: "SR parameter count", n: p, cap: SR_MAX_PARAMS });
    }
    let a = gram + DMatrix::identity(p, p) * shift;
    let g = DVector::from_column_slice(gradient);
    let gnorm = g.norm();
    let residual = |x: &DVector<f64>| (&a * x - &g).norm();
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(&g);
        let r = residual(&x);
        if x.iter().all(|v| v.is_finite()) && r <= 1e-8 * gnorm.max(f64::MIN_POSITIVE) {
            return Ok((x.iter().cloned().collect(), r));
        }
    }
    let x = a.clone().svd(true, true).solve(&g, 1e-14).map_err(|e| Error::Solver(format!("least-squares fallback failed: {e}")))?;
    let r = residual(&x);
    if !x.iter().all(|v| v.is_finite()) || r > 1e-8 * gnorm.max(f64::MIN_POSITIVE) {
        return Err(Error::Solver(format!("SR residual {r:.3e} exceeds 1e-8·|g| = {:.3e}", 1e-8 * gnorm)));
    }
    Ok((x.iter().cloned().collect(), r))
}

/// `θ ← θ − η (G + εI)⁻¹ g`.
pub fn step_sr(params: &[f64], gradient: &[f64], gram: &DMatrix<f64>, shift: f64, eta: f64) -> Result<Vec<f64>> {
    check_step(params, gradient)?;
    let (x, _) = solve_sr(gram, gradient, shift)?;
    Ok(params.iter().zip(&x).map(|(p, x)| p - eta * x).collect())
}

/// Adam with moment decays 0.9 / 0.999 and stability constant 1e-8.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &[f64], gradient: &[f64], eta: f64) -> Result<Vec<f64>> {
        check_step(params, gradient)?;
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        Ok(params
            .iter()
            .zip(gradient)
            .enumerate()
            .map(|(i, (p, g))| {
                self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                p - eta * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS)
            })
            .collect())
    }
}

/// How expectations are formed during optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Sampling {
    /// Persistent Metropolis chains.
    Markov(SamplerConfig),
    /// Full enumeration: exact expectations, for small systems.
    Exact,
}

/// Hamiltonian plus the observables reported at the end.
#[derive(Clone, Debug)]
pub struct Problem {
    pub hamiltonian: IsingHamiltonian,
    pub observables: Vec<Observable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub energy_err: f64,
    /// Present on iterations where `S₂` was estimated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renyi_entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renyi_entropy_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_energy: Option<f64>,
    pub grad_norm: f64,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_diagonal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_offdiagonal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEstimates {
    pub beta_r: f64,
    pub energy: Estimate,
    pub renyi_entropy: Estimate,
    pub purity: Estimate,
    pub free_energy: Estimate,
    pub observables: Vec<(String, Estimate)>,
    pub samples: usize,
    /// Brute-force values of the final state, for small systems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<AnsatzFreeEnergy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Status {
    Converged,
    MaxIterations,
    Aborted(String),
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub params: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub final_estimates: Option<FinalEstimates>,
    pub status: Status,
}

/// Options that do not affect the numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Record wall-clock time in iteration records (breaks byte-for-byte
    /// reproducibility of the record stream).
    pub wall_time: bool,
    /// Compute brute-force `F_R` of the final state when `N ≤ 10`.
    pub exact_final: bool,
}

/// SplitMix64 finalizer: decorrelated seeds for the different streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_DIAGONAL: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_PURITY: u64 = 3;
const STREAM_FINAL_A: u64 = 4;
const STREAM_FINAL_B: u64 = 5;
const STREAM_INIT: u64 = 6;

/// Sample sources for one run.
enum Sources {
    Markov { config: SamplerConfig, diagonal: ChainSet, pairs: ChainSet, purity: ChainSet, first: bool },
    Exact { diagonal: Samples, pairs: Samples },
}

impl Sources {
    fn new(model: &Ansatz, params: &[f64], sampling: &Sampling, seed: u64) -> Result<Self> {
        match sampling {
            Sampling::Markov(config) => {
                config.validate()?;
                let chains = config.chains;
                Ok(Sources::Markov {
                    config: config.clone(),
                    diagonal: ChainSet::new(model, params, Target::Diagonal, chains, derive_seed(seed, STREAM_DIAGONAL)),
                    pairs: ChainSet::new(model, params, Target::OffDiagonal, chains, derive_seed(seed, STREAM_PAIRS)),
                    purity: ChainSet::new(model, params, Target::Diagonal, chains, derive_seed(seed, STREAM_PURITY)),
                    first: true,
                })
            }
            Sampling::Exact => {
                if model.n_sites() > EXACT_CAP / 2 + 1 {
                    return Err(Error::SizeCap { what: "exact-expectation optimization", n: model.n_sites(), cap: EXACT_CAP / 2 + 1 });
                }
                let empty =
                    |t| Samples { target: t, configs: vec![], partners: vec![], weights: None, batches: vec![], acceptance: vec![] };
                Ok(Sources::Exact { diagonal: empty(Target::Diagonal), pairs: empty(Target::OffDiagonal) })
            }
        }
    }

    /// Diagonal and pair samples at the current parameters.
    fn draw(&mut self, model: &Ansatz, params: &[f64]) -> Result<(Samples, Samples)> {
        match self {
            Sources::Markov { config, diagonal, pairs, first, .. } => {
                // Chains persist across iterations; after the initial burn-in
                // a short re-equilibration follows each parameter update.
                let burn = if *first { config.burn_in } else { (config.burn_in / 10).max(1) };
                *first = false;
                let d = diagonal.sample(model, params, burn, config.thinning, config.samples_per_chain);
                let q = pairs.sample(model, params, burn, config.thinning, config.samples_per_chain);
                Ok((d, q))
            }
            Sources::Exact { diagonal, pairs } => {
                *diagonal = exact_sampler(model, params, Target::Diagonal)?.enumerate();
                *pairs = exact_sampler(model, params, Target::OffDiagonal)?.enumerate();
                Ok((diagonal.clone(), pairs.clone()))
            }
        }
    }

    /// A diagonal stream independent of `diagonal`, for the swap trick.
    fn purity_stream(&mut self, model: &Ansatz, params: &[f64], diagonal: &Samples) -> Result<Samples> {
        match self {
            Sources::Markov { config, purity, .. } => {
                Ok(purity.sample(model, params, config.burn_in, config.thinning, diagonal.len().div_ceil(config.chains)))
            }
            Sources::Exact { .. } => Ok(diagonal.clone()),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Final large-budget estimates of `E`, `S₂`, `F_R` and the observables.
pub fn final_estimates(
    model: &Ansatz,
    params: &[f64],
    problem: &Problem,
    beta_r: f64,
    sampling: &Sampling,
    budget: usize,
    seed: u64,
    exact_final: bool,
) -> Result<FinalEstimates> {
    let (a, b) = match sampling {
        Sampling::Markov(config) => {
            let per_chain = budget.div_ceil(config.chains);
            let mut sa = ChainSet::new(model, params, Target::Diagonal, config.chains, derive_seed(seed, STREAM_FINAL_A));
            let mut sb = ChainSet::new(model, params, Target::Diagonal, config.chains, derive_seed(seed, STREAM_FINAL_B));
            (
                sa.sample(model, params, config.burn_in, config.thinning, per_chain),
                sb.sample(model, params, config.burn_in, config.thinning, per_chain),
            )
        }
        Sampling::Exact => {
            let all = exact_sampler(model, params, Target::Diagonal)?.enumerate();
            (all.clone(), all)
        }
    };
    let energy = estimate_observable(model, params, &problem.hamiltonian, &a)?;
    let purity = estimate_purity(model, params, &a, &b)?;
    let s2 = purity.renyi_entropy;
    let free_energy = Estimate {
        mean: beta_r * energy.mean - s2.mean,
        std_err: (beta_r * beta_r * energy.std_err * energy.std_err + s2.std_err * s2.std_err).sqrt(),
        count: energy.count,
        acceptance: energy.acceptance,
    };
    let observables =
        problem.observables.iter().map(|o| Ok((o.name.clone(), estimate_observable(model, params, o, &a)?))).collect::<Result<Vec<_>>>()?;
    let exact = if exact_final && model.n_sites() <= crate::ansatz::BRUTE_FORCE_CAP {
        Some(exact_ansatz_free_energy(model, params, &problem.hamiltonian, beta_r)?)
    } else {
        None
    };
    Ok(FinalEstimates { beta_r, energy, renyi_entropy: s2, purity: purity.purity, free_energy, observables, samples: a.len(), exact })
}

/// Runs the optimization loop. `observer` sees every record with the
/// parameters after that iteration's update; an error from it aborts the run.
#[allow(clippy::too_many_arguments)]
pub fn run_optimization(
    spec: &AnsatzSpec,
    problem: &Problem,
    beta_r: f64,
    sampling: &Sampling,
    config: &OptimizerConfig,
    seed: u64,
    warm_start: Option<&[f64]>,
    options: RunOptions,
    observer: &mut dyn FnMut(&IterationRecord, &[f64]) -> Result<()>,
) -> Result<Outcome> {
    config.validate()?;
    if !(beta_r >= 0.0 && beta_r.is_finite()) {
        return Err(Error::Config(format!("beta_r must be finite and non-negative, got {beta_r}")));
    }
    let model = Ansatz::from_spec(spec)?;
    if model.n_sites() != problem.hamiltonian.geometry.n_sites() {
        return Err(Error::Incompatible("ansatz and Hamiltonian have different site counts".into()));
    }
    let mut params = match warm_start {
        Some(p) if p.len() == model.n_params() => p.to_vec(),
        Some(p) => return Err(Error::LengthMismatch { expected: model.n_params(), got: p.len() }),
        None => init(spec, derive_seed(seed, STREAM_INIT), config.init_scale)?,
    };
    if config.method == Method::Sr && model.n_params() > SR_MAX_PARAMS {
        return Err(Error::SizeCap { what: "SR parameter count", n: model.n_params(), cap: SR_MAX_PARAMS });
    }
    let n = model.n_sites() as f64;
    // only read the clock when asked: wasm32-unknown-unknown has none
    let start = options.wall_time.then(Instant::now);
    let mut sources = Sources::new(&model, &params, sampling, seed)?;
    let mut adam = Adam::new(model.n_params());
    let mut records = Vec::new();
    let mut energies: Vec<f64> = Vec::new();
    let mut status = Status::MaxIterations;

    for t in 0..config.max_iterations {
        let step = (|| -> Result<(IterationRecord, Vec<f64>)> {
            let (diag, pairs) = sources.draw(&model, &params)?;
            let grad = grad_free_energy(&model, &params, &problem.hamiltonian, beta_r, &diag, &pairs)?;
            let mut record = IterationRecord {
                iteration: t,
                energy: grad.energy.mean,
                energy_err: grad.energy.std_err,
                renyi_entropy: None,
                renyi_entropy_err: None,
                free_energy: None,
                grad_norm: norm(&grad.gradient),
                learning_rate: config.learning_rate_at(t),
                acceptance_diagonal: diag.mean_acceptance(),
                acceptance_offdiagonal: pairs.mean_acceptance(),
                wall_time: None,
            };
            if t % config.entropy_every == 0 || t + 1 == config.max_iterations {
                let other = sources.purity_stream(&model, &params, &diag)?;
                let s2 = estimate_purity(&model, &params, &diag, &other)?.renyi_entropy;
                record.renyi_entropy = Some(s2.mean);
                record.renyi_entropy_err = Some(s2.std_err);
                record.free_energy = Some(beta_r * grad.energy.mean - s2.mean);
            }
            let eta = record.learning_rate;
            let next = match config.method {
                Method::Sgd => step_sgd(&params, &grad.gradient, eta)?,
                Method::Adam => adam.step(&params, &grad.gradient, eta)?,
                Method::Sr => {
                    let gram = real_gram_matrix(&model, &params, &pairs)?;
                    step_sr(&params, &grad.gradient, &gram, config.sr_shift, eta)?
                }
            };
            Ok((record, next))
        })();
        let (mut record, next) = match step {
            Ok(x) => x,
            Err(e @ (Error::NonFinite(_) | Error::Solver(_) | Error::ZeroWeight)) => {
                status = Status::Aborted(format!("iteration {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        record.wall_time = start.map(|t| t.elapsed().as_secs_f64());
        params = next;
        energies.push(record.energy);
        observer(&record, &params)?;
        records.push(record);
        let w = config.convergence_window;
        if t + 1 >= config.warmup && energies.len() >= 2 * w {
            let k = energies.len();
            let recent = energies[k - w..].iter().sum::<f64>() / w as f64;
            let before = energies[k - 2 * w..k - w].iter().sum::<f64>() / w as f64;
            if (recent - before).abs() / n < config.convergence_threshold {
                status = Status::Converged;
                break;
            }
        }
    }

    let final_estimates = if matches!(status, Status::Aborted(_)) {
        None
    } else {
        match final_estimates(&model, &params, problem, beta_r, sampling, config.final_samples, seed, options.exact_final) {
            Ok(f) => Some(f),
            Err(e @ (Error::NonFinite(_) | Error::ZeroWeight)) => {
                status = Status::Aborted(format!("final estimates: {e}"));
                None
            }
            Err(e) => return Err(e),
        }
    };
    Ok(Outcome { params, records, final_estimates, status })
}

/// One point of a `β_R` sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub beta_r: f64,
    pub outcome: Outcome,
}

/// Optimizes at each `β_R` in ascending order, warm-starting every point from
/// the previous solution.
#[allow(clippy::too_many_arguments)]
pub fn sweep_beta(
    spec: &AnsatzSpec,
    problem: &Problem,
    betas: &[f64],
    sampling: &Sampling,
    config: &OptimizerConfig,
    seed: u64,
    options: RunOptions,
    observer: &mut dyn FnMut(f64, &IterationRecord, &[f64]) -> Result<()>,
) -> Result<Vec<SweepPoint>> {
    if betas.is_empty() {
        return Err(Error::Config("beta_r list is empty".into()));
    }
    if betas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("beta_r list must be strictly ascending".into()));
    }
    let mut points: Vec<SweepPoint> = Vec::with_capacity(betas.len());
    for &beta in betas {
        let warm = points.last().map(|p| p.outcome.params.clone());
        let outcome =
            run_optimization(spec, problem, beta, sampling, config, seed, warm.as_deref(), options, &mut |r, p| observer(beta, r, p))?;
        points.push(SweepPoint { beta_r: beta, outcome });
    }
    Ok(points)
}
