//! Monte Carlo estimators built from log-domain ratios of density-matrix
//! elements.
//!
//! Every estimator first collapses its sample set onto unique configurations,
//! evaluates each once (in parallel), then reduces over the original sample
//! order. Exact enumerations (weighted sample sets) turn the same code into
//! exact expectations with zero error bars.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ansatz::{DensityModel, LogAmplitude};
use crate::lattice::{check_configuration, Operator};
use crate::sampler::{Samples, Target};
use crate::{par, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
    pub acceptance: Option<f64>,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `value`.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_err
        }
    }
}

/// Reduces per-sample values to a mean with batch-means error bars.
pub fn reduce(samples: &Samples, values: &[f64]) -> Result<Estimate> {
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let acceptance = samples.mean_acceptance();
    if let Some(w) = &samples.weights {
        let mean = w.iter().zip(values).map(|(w, v)| w * v).sum();
        return Ok(Estimate { mean, std_err: 0.0, count: values.len(), acceptance });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let b = samples.batches.len();
    let std_err = if b >= 2 {
        let var: f64 = samples
            .batches
            .iter()
            .map(|r| {
                let m = values[r.clone()].iter().sum::<f64>() / r.len() as f64;
                (m - mean).powi(2)
            })
            .sum::<f64>()
            / (b as f64 - 1.0);
        (var / b as f64).sqrt()
    } else if values.len() >= 2 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(Estimate { mean, std_err, count: values.len(), acceptance })
}

/// Unique configurations of a sample set and, per sample, the index of its
/// unique representative.
struct Unique<'a> {
    keys: Vec<(&'a [i8], &'a [i8])>,
    index: Vec<usize>,
}

fn unique(samples: &Samples) -> Unique<'_> {
    let mut map: HashMap<(&[i8], &[i8]), usize> = HashMap::new();
    let mut keys = Vec::new();
    let mut index = Vec::with_capacity(samples.len());
    for k in 0..samples.len() {
        let key = samples.pair(k);
        let next = keys.len();
        let id = *map.entry(key).or_insert_with(|| {
            keys.push(key);
            next
        });
        index.push(id);
    }
    Unique { keys, index }
}

fn check_samples<M: DensityModel + ?Sized>(model: &M, samples: &Samples, target: Target) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.target != target {
        return Err(Error::Incompatible(format!("expected {target:?} samples, got {:?}", samples.target)));
    }
    check_configuration(model.n_sites(), &samples.configs[0])
}

/// `Σ_s′ O_s′s ρ_ss′/ρ_ss` given `log ρ_ss`, as a complex number. Its mean
/// over the diagonal distribution is the (real) expectation value.
fn local_value<M: DensityModel + ?Sized, O: Operator + ?Sized>(model: &M, params: &[f64], op: &O, s: &[i8], diag: LogAmplitude) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    let mut sp = s.to_vec();
    op.for_each_connected(s, &mut |flips, h| {
        if flips.is_empty() {
            total += h;
            return;
        }
        for &i in flips {
            sp[i] = -sp[i];
        }
        total += h * model.log_element(params, s, &sp).ratio(&diag);
        for &i in flips {
            sp[i] = -sp[i];
        }
    });
    total
}

/// The local estimator `E_loc(s) = Σ_s′ H_s′s ρ_ss′/ρ_ss` (real part).
pub fn local_energy<M: DensityModel + ?Sized, O: Operator + ?Sized>(model: &M, params: &[f64], h: &O, s: &[i8]) -> Result<f64> {
    check_configuration(model.n_sites(), s)?;
    let diag = model.log_element(params, s, s);
    if diag.is_zero() {
        return Err(Error::ZeroWeight);
    }
    Ok(local_value(model, params, h, s, diag).re)
}

/// Mean of the local estimator of `op` over diagonal samples.
pub fn estimate_observable<M: DensityModel + ?Sized, O: Operator + ?Sized>(
    model: &M,
    params: &[f64],
    op: &O,
    samples: &Samples,
) -> Result<Estimate> {
    check_samples(model, samples, Target::Diagonal)?;
    let u = unique(samples);
    let values = par::map_indexed(u.keys.len(), |k| {
        let s = u.keys[k].0;
        let diag = model.log_element(params, s, s);
        if diag.is_zero() {
            return Err(Error::ZeroWeight);
        }
        Ok(local_value(model, params, op, s, diag).re)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let per_sample: Vec<f64> = u.index.iter().map(|&i| values[i]).collect();
    let est = reduce(samples, &per_sample)?;
    if !est.mean.is_finite() {
        return Err(Error::NonFinite("observable estimate".into()));
    }
    Ok(est)
}

pub fn estimate_energy<M: DensityModel + ?Sized, O: Operator + ?Sized>(
    model: &M,
    params: &[f64],
    h: &O,
    samples: &Samples,
) -> Result<Estimate> {
    estimate_observable(model, params, h, samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityEstimate {
    /// `Γ = tr ρ² / (tr ρ)²`.
    pub purity: Estimate,
    /// `S₂ = −log Γ` with first-order error propagation.
    pub renyi_entropy: Estimate,
}

/// Swap-trick purity from two independent diagonal streams, paired by
/// position. Two exact enumerations give the exact double sum.
pub fn estimate_purity<M: DensityModel + ?Sized>(model: &M, params: &[f64], a: &Samples, b: &Samples) -> Result<PurityEstimate> {
    check_samples(model, a, Target::Diagonal)?;
    check_samples(model, b, Target::Diagonal)?;
    let diag_logs = |samples: &Samples| {
        let u = unique(samples);
        let logs = par::map_indexed(u.keys.len(), |k| model.log_element(params, u.keys[k].0, u.keys[k].0).log_modulus);
        u.index.iter().map(|&i| logs[i]).collect::<Vec<f64>>()
    };
    let (la, lb) = (diag_logs(a), diag_logs(b));
    let summand = |i: usize, j: usize| -> f64 {
        let (s, sp) = (&a.configs[i], &b.configs[j]);
        if s == sp {
            return 1.0;
        }
        let off = model.log_element(params, s, sp).log_modulus;
        if off == f64::NEG_INFINITY {
            0.0
        } else {
            (2.0 * off - la[i] - lb[j]).exp()
        }
    };
    let purity = match (&a.weights, &b.weights) {
        (Some(wa), Some(wb)) => {
            let rows = par::map_indexed(a.len(), |i| wa[i] * (0..b.len()).map(|j| wb[j] * summand(i, j)).sum::<f64>());
            let mean = rows.iter().sum();
            Estimate { mean, std_err: 0.0, count: a.len() * b.len(), acceptance: None }
        }
        _ => {
            let n = a.len().min(b.len());
            if n == 0 {
                return Err(Error::EmptySamples);
            }
            let values = par::map_indexed(n, |k| summand(k, k));
            let mut paired = a.clone();
            paired.configs.truncate(n);
            paired.batches.retain(|r| r.end <= n);
            reduce(&paired, &values)?
        }
    };
    if !(purity.mean > 0.0) || !purity.mean.is_finite() {
        return Err(Error::NonFinite(format!("purity estimate {}", purity.mean)));
    }
    let renyi_entropy = Estimate { mean: -purity.mean.ln(), std_err: purity.std_err / purity.mean, ..purity };
    Ok(PurityEstimate { purity, renyi_entropy })
}

/// `Δ(s, s′) = ∂ρ_ss′/ρ_ss′` for every unique sample, or `None` where the
/// element vanishes (such pairs carry zero weight under `|ρ_ss′|²`).
fn deltas<M: DensityModel + ?Sized>(model: &M, params: &[f64], u: &Unique<'_>) -> Result<Vec<Vec<C64>>> {
    par::map_indexed(u.keys.len(), |k| {
        let (s, sp) = u.keys[k];
        let mut grad = vec![C64::new(0.0, 0.0); model.n_params()];
        let (amp, scale) = model.element_gradient(params, s, sp, &mut grad);
        if amp.is_zero() {
            return Err(Error::ZeroWeight);
        }
        let factor = (scale - amp.log_modulus).exp();
        let phase = C64::from_polar(1.0, -amp.phase);
        grad.iter_mut().for_each(|g| *g *= phase * factor);
        Ok(grad)
    })
    .into_iter()
    .collect()
}

/// Per unique diagonal sample: the local energy, `Δ(s, s)` and
/// `Σ_s′ H_s′s ∂ρ_ss′/ρ_ss`.
struct EnergyTerms {
    local: C64,
    delta: Vec<C64>,
    weighted: Vec<C64>,
}

fn energy_terms<M: DensityModel + ?Sized, O: Operator + ?Sized>(model: &M, params: &[f64], h: &O, s: &[i8]) -> Result<EnergyTerms> {
    let p = model.n_params();
    let mut delta = vec![C64::new(0.0, 0.0); p];
    let (diag, scale) = model.element_gradient(params, s, s, &mut delta);
    if diag.is_zero() {
        return Err(Error::ZeroWeight);
    }
    let f = (scale - diag.log_modulus).exp();
    delta.iter_mut().for_each(|g| *g *= f);
    let mut local = C64::new(0.0, 0.0);
    let mut weighted = vec![C64::new(0.0, 0.0); p];
    let mut grad = vec![C64::new(0.0, 0.0); p];
    let mut sp = s.to_vec();
    h.for_each_connected(s, &mut |flips, hv| {
        if flips.is_empty() {
            local += hv;
            for (w, d) in weighted.iter_mut().zip(&delta) {
                *w += hv * d;
            }
            return;
        }
        for &i in flips {
            sp[i] = -sp[i];
        }
        let (amp, scale) = model.element_gradient(params, s, &sp, &mut grad);
        local += hv * amp.ratio(&diag);
        let f = hv * (scale - diag.log_modulus).exp();
        for (w, g) in weighted.iter_mut().zip(&grad) {
            *w += f * g;
        }
        for &i in flips {
            sp[i] = -sp[i];
        }
    });
    Ok(EnergyTerms { local, delta, weighted })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeEnergyGradient {
    /// `∂F_R = β_R ∂E + ∂ log Γ`, one entry per real parameter.
    pub gradient: Vec<f64>,
    pub energy_gradient: Vec<f64>,
    pub log_purity_gradient: Vec<f64>,
    pub energy: Estimate,
}

fn weighted_mean(samples: &Samples, index: &[usize], values: &[Vec<C64>], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (k, &i) in index.iter().enumerate() {
        let w = samples.weight(k);
        for (o, v) in out.iter_mut().zip(&values[i]) {
            *o += w * v.re;
        }
    }
    out
}

/// Gradient of `F_R` from diagonal samples (energy part) and pair samples
/// (purity part).
pub fn grad_free_energy<M: DensityModel + ?Sized, O: Operator + ?Sized>(
    model: &M,
    params: &[f64],
    h: &O,
    beta_r: f64,
    diagonal: &Samples,
    offdiagonal: &Samples,
) -> Result<FreeEnergyGradient> {
    check_samples(model, diagonal, Target::Diagonal)?;
    check_samples(model, offdiagonal, Target::OffDiagonal)?;
    if params.len() != model.n_params() {
        return Err(Error::LengthMismatch { expected: model.n_params(), got: params.len() });
    }
    let p = model.n_params();

    let ud = unique(diagonal);
    let terms =
        par::map_indexed(ud.keys.len(), |k| energy_terms(model, params, h, ud.keys[k].0)).into_iter().collect::<Result<Vec<_>>>()?;
    let locals: Vec<f64> = ud.index.iter().map(|&i| terms[i].local.re).collect();
    let energy = reduce(diagonal, &locals)?;
    let (deltas_d, weighted): (Vec<_>, Vec<_>) = terms.into_iter().map(|t| (t.delta, t.weighted)).unzip();
    let mean_delta_d = weighted_mean(diagonal, &ud.index, &deltas_d, p);
    let mean_weighted = weighted_mean(diagonal, &ud.index, &weighted, p);
    let energy_gradient: Vec<f64> = mean_weighted.iter().zip(&mean_delta_d).map(|(w, d)| w - energy.mean * d).collect();

    let uq = unique(offdiagonal);
    let deltas_q = deltas(model, params, &uq)?;
    let mean_delta_q = weighted_mean(offdiagonal, &uq.index, &deltas_q, p);
    let log_purity_gradient: Vec<f64> = mean_delta_q.iter().zip(&mean_delta_d).map(|(q, d)| 2.0 * q - 2.0 * d).collect();

    let gradient: Vec<f64> = energy_gradient.iter().zip(&log_purity_gradient).map(|(e, g)| beta_r * e + g).collect();
    if gradient.iter().any(|g| !g.is_finite()) || !energy.mean.is_finite() {
        return Err(Error::NonFinite("free-energy gradient".into()));
    }
    Ok(FreeEnergyGradient { gradient, energy_gradient, log_purity_gradient, energy })
}

/// Log-derivative rows `Δ(s, s′)` of the pair samples and their weights,
/// the raw material for the Gram matrix.
fn gram_rows<M: DensityModel + ?Sized>(model: &M, params: &[f64], offdiagonal: &Samples) -> Result<(Vec<Vec<C64>>, Vec<f64>)> {
    check_samples(model, offdiagonal, Target::OffDiagonal)?;
    if params.len() != model.n_params() {
        return Err(Error::LengthMismatch { expected: model.n_params(), got: params.len() });
    }
    let u = unique(offdiagonal);
    let rows = deltas(model, params, &u)?;
    let mut weights = vec![0.0; rows.len()];
    for (k, &i) in u.index.iter().enumerate() {
        weights[i] += offdiagonal.weight(k);
    }
    Ok((rows, weights))
}

/// `G_ij = E_q[Δ_i* Δ_j] − E_q[Δ_i*] E_q[Δ_j]`.
pub fn gram_matrix<M: DensityModel + ?Sized>(model: &M, params: &[f64], offdiagonal: &Samples) -> Result<DMatrix<C64>> {
    let (rows, weights) = gram_rows(model, params, offdiagonal)?;
    let p = model.n_params();
    let mut mean = vec![C64::new(0.0, 0.0); p];
    for (r, w) in rows.iter().zip(&weights) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += *w * x;
        }
    }
    let centered = DMatrix::from_fn(rows.len(), p, |k, i| (rows[k][i] - mean[i]) * weights[k].sqrt());
    Ok(centered.adjoint() * centered)
}

/// `Re G`, assembled with real arithmetic only; this is the metric seen by
/// real parameters (the RBM's real and imaginary parts included).
pub fn real_gram_matrix<M: DensityModel + ?Sized>(model: &M, params: &[f64], offdiagonal: &Samples) -> Result<DMatrix<f64>> {
    let (rows, weights) = gram_rows(model, params, offdiagonal)?;
    let p = model.n_params();
    let mut mean = vec![C64::new(0.0, 0.0); p];
    for (r, w) in rows.iter().zip(&weights) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += *w * x;
        }
    }
    let complex = rows.iter().flatten().any(|x| x.im != 0.0) || mean.iter().any(|x| x.im != 0.0);
    let n = rows.len();
    let height = if complex { 2 * n } else { n };
    let stacked = DMatrix::from_fn(height, p, |k, i| {
        let (row, part) = (k % n, k / n);
        let d = rows[row][i] - mean[i];
        weights[row].sqrt() * if part == 0 { d.re } else { d.im }
    });
    Ok(stacked.transpose() * stacked)
}
