//! Exact references from dense diagonalization: Gibbs and second-Rényi
//! ensembles over the spectrum of `H`, and the exact free energy of a
//! materialized ansatz.
//!
//! The Rényi ensemble minimizes `β_R Σ p_i E_i + log Σ p_i²` over the simplex.
//! Stationarity makes the weights truncated-linear in the energy,
//! `p_i ∝ max(0, μ − β_R E_i)`, supported on the lowest levels. For a
//! support of size `k` with `S1 = Σ E_i`, `S2 = Σ E_i²` the two consistency
//! conditions (normalization and the self-referential `Σ p²`) reduce to
//!
//! ```text
//! k μ² − 2μ(β S1 + k) + β² S2 + 2β S1 = 0,     p_i = (μ − β E_i)/(k μ − β S1)
//! ```
//!
//! Both roots are tried for every support boundary that does not split a
//! degenerate multiplet; the feasible candidate with the lowest objective
//! wins.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ansatz::{brute_force_rho, DensityModel, BRUTE_FORCE_CAP};
use crate::lattice::{basis_index, configuration_from_index, dense_matrix, Operator, DEFAULT_DENSE_CAP};
use crate::{par, Error, Result};

/// Relative tolerance for treating two eigenvalues as degenerate.
const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub n_sites: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, when retained.
    pub vectors: Option<DMatrix<f64>>,
}

impl Spectrum {
    pub fn new<O: Operator + ?Sized>(h: &O, cap: usize, keep_vectors: bool) -> Result<Self> {
        let m = dense_matrix(h, cap)?;
        let dim = m.nrows();
        if !keep_vectors {
            let mut eigenvalues: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
            eigenvalues.sort_by(f64::total_cmp);
            return Ok(Self { n_sites: h.n_sites(), eigenvalues, vectors: None });
        }
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = Some(DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]));
        Ok(Self { n_sites: h.n_sites(), eigenvalues, vectors })
    }

    pub fn of<O: Operator + ?Sized>(h: &O) -> Result<Self> {
        Self::new(h, DEFAULT_DENSE_CAP, true)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `⟨v_i|O|v_i⟩` for every eigenvector with `weights[i] > 0`, weighted.
    pub fn expectation<O: Operator + ?Sized>(&self, op: &O, weights: &[f64]) -> Result<f64> {
        let v = self.vectors.as_ref().ok_or_else(|| Error::Config("eigenvectors were not retained".into()))?;
        let n = self.n_sites;
        let terms = par::map_indexed(self.dim(), |i| {
            if weights[i] == 0.0 {
                return 0.0;
            }
            let col = v.column(i);
            let ov = apply(op, n, col.as_slice());
            weights[i] * col.iter().zip(&ov).map(|(a, b)| a * b).sum::<f64>()
        });
        Ok(terms.iter().sum())
    }
}

/// Sparse `O·v` in the computational basis.
fn apply<O: Operator + ?Sized>(op: &O, n: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (c, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let s = configuration_from_index(c, n);
        let mut sp = s.clone();
        op.for_each_connected(&s, &mut |flips, h| {
            for &i in flips {
                sp[i] = -sp[i];
            }
            out[basis_index(&sp)] += h * x;
            for &i in flips {
                sp[i] = -sp[i];
            }
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Gibbs,
    Renyi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub kind: EnsembleKind,
    pub beta: f64,
    pub weights: Vec<f64>,
    pub energy: f64,
    /// von Neumann entropy for Gibbs, `S₂` for Rényi.
    pub entropy: f64,
    /// `β E − S` (Gibbs) or `β_R E − S₂` (Rényi).
    pub free_energy: f64,
    pub observables: Vec<(String, f64)>,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("inverse temperature {beta} must be finite and non-negative")))
    }
}

pub fn gibbs_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

pub fn exact_gibbs(spectrum: &Spectrum, beta: f64) -> Result<EnsembleResult> {
    check_beta(beta)?;
    let weights = gibbs_weights(&spectrum.eigenvalues, beta);
    let energy = mean_energy(&spectrum.eigenvalues, &weights);
    let entropy = -weights.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    Ok(EnsembleResult {
        kind: EnsembleKind::Gibbs,
        beta,
        weights,
        energy,
        entropy,
        free_energy: beta * energy - entropy,
        observables: vec![],
    })
}

fn mean_energy(e: &[f64], p: &[f64]) -> f64 {
    e.iter().zip(p).map(|(e, p)| e * p).sum()
}

/// `β_R Σ p E + log Σ p²`.
pub fn renyi_objective(energies: &[f64], beta_r: f64, p: &[f64]) -> f64 {
    beta_r * mean_energy(energies, p) + p.iter().map(|x| x * x).sum::<f64>().ln()
}

/// Water-filling weights of the Rényi ensemble for ascending `energies`.
pub fn renyi_weights(energies: &[f64], beta_r: f64) -> Vec<f64> {
    let n = energies.len();
    let scale = energies.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(1.0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 1..=n {
        let e = energies[k - 1];
        s1 += e;
        s2 += e * e;
        if k < n && (energies[k] - e).abs() <= DEGENERACY_TOL * scale {
            continue;
        }
        let kf = k as f64;
        let b = beta_r * s1 + kf;
        let disc = kf * kf - beta_r * beta_r * (kf * s2 - s1 * s1);
        if disc < 0.0 {
            continue;
        }
        for mu in [(b + disc.sqrt()) / kf, (b - disc.sqrt()) / kf] {
            let denom = kf * mu - beta_r * s1;
            if !(denom > 0.0) {
                continue;
            }
            let mut p = vec![0.0; n];
            let mut feasible = true;
            for i in 0..k {
                p[i] = (mu - beta_r * energies[i]) / denom;
                feasible &= p[i] > -1e-14;
                p[i] = p[i].max(0.0);
            }
            if k < n {
                feasible &= mu - beta_r * energies[k] <= 1e-12 * mu.abs().max(1.0);
            }
            if !feasible {
                continue;
            }
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            let f = renyi_objective(energies, beta_r, &p);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, p));
            }
        }
    }
    best.map(|(_, p)| p).unwrap_or_else(|| {
        // Unreachable for finite input: the full-support or ground-state
        // candidate is always feasible in the appropriate limit.
        let mut p = vec![0.0; n];
        p[0] = 1.0;
        p
    })
}

pub fn exact_renyi(spectrum: &Spectrum, beta_r: f64) -> Result<EnsembleResult> {
    check_beta(beta_r)?;
    let weights = renyi_weights(&spectrum.eigenvalues, beta_r);
    let energy = mean_energy(&spectrum.eigenvalues, &weights);
    let entropy = -weights.iter().map(|x| x * x).sum::<f64>().ln();
    Ok(EnsembleResult {
        kind: EnsembleKind::Renyi,
        beta: beta_r,
        weights,
        energy,
        entropy,
        free_energy: beta_r * energy - entropy,
        observables: vec![],
    })
}

pub fn ensemble(spectrum: &Spectrum, kind: EnsembleKind, beta: f64) -> Result<EnsembleResult> {
    match kind {
        EnsembleKind::Gibbs => exact_gibbs(spectrum, beta),
        EnsembleKind::Renyi => exact_renyi(spectrum, beta),
    }
}

/// Adds `tr(Oρ)` for each named operator to the result.
pub fn with_observables<O: Operator>(mut result: EnsembleResult, spectrum: &Spectrum, ops: &[(String, O)]) -> Result<EnsembleResult> {
    for (name, op) in ops {
        let v = spectrum.expectation(op, &result.weights)?;
        result.observables.push((name.clone(), v));
    }
    Ok(result)
}

/// Largest violation of the Rényi KKT conditions: `β E_i + 2 p_i/Σp²` equal
/// to a common `μ` on the support and `≥ μ` off it.
pub fn renyi_kkt_violation(energies: &[f64], beta_r: f64, p: &[f64]) -> f64 {
    let q: f64 = p.iter().map(|x| x * x).sum();
    let g: Vec<f64> = energies.iter().zip(p).map(|(e, x)| beta_r * e + 2.0 * x / q).collect();
    let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let mu = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let v = if p[i] > 0.0 { (g[i] - mu).abs() } else { (mu - g[i]).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected-gradient minimization of the Rényi objective, started from the
/// uniform distribution. A slow but independent cross-check of
/// [`renyi_weights`].
pub fn renyi_projected_gradient(energies: &[f64], beta_r: f64, max_iter: usize) -> Vec<f64> {
    let n = energies.len();
    let mut p = vec![1.0 / n as f64; n];
    let mut f = renyi_objective(energies, beta_r, &p);
    let mut step = 0.5 / n as f64;
    for _ in 0..max_iter {
        let q: f64 = p.iter().map(|x| x * x).sum();
        let grad: Vec<f64> = energies.iter().zip(&p).map(|(e, x)| beta_r * e + 2.0 * x / q).collect();
        loop {
            let trial = project_simplex(&p.iter().zip(&grad).map(|(x, g)| x - step * g).collect::<Vec<_>>());
            let ft = renyi_objective(energies, beta_r, &trial);
            if ft <= f {
                let done = f - ft < 1e-15;
                p = trial;
                f = ft;
                step *= 1.2;
                if done {
                    return p;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return p;
            }
        }
    }
    p
}

/// `tr(H²ρ) − (tr Hρ)²` for an ensemble over the spectrum.
pub fn energy_variance(spectrum: &Spectrum, ensemble: &EnsembleResult) -> f64 {
    let e = &spectrum.eigenvalues;
    let m = mean_energy(e, &ensemble.weights);
    let m2: f64 = e.iter().zip(&ensemble.weights).map(|(e, p)| e * e * p).sum();
    (m2 - m * m).max(0.0)
}

/// Inverse temperature whose ensemble energy density equals `target`, by
/// bisection to `1e-8` in density.
pub fn match_energy_density(spectrum: &Spectrum, target: f64, kind: EnsembleKind) -> Result<f64> {
    let n = spectrum.n_sites as f64;
    let density = |beta: f64| -> Result<f64> { Ok(ensemble(spectrum, kind, beta)?.energy / n) };
    let e0 = spectrum.eigenvalues[0] / n;
    let top = density(0.0)?;
    if !(target > e0) || target > top + 1e-12 {
        return Err(Error::OutOfRange(format!("energy density {target} outside ({e0}, {top}]")));
    }
    if (target - top).abs() <= 1e-8 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while density(hi)? > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::OutOfRange(format!("energy density {target} not reached")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let d = density(mid)?;
        if (d - target).abs() <= 1e-10 {
            return Ok(mid);
        }
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzFreeEnergy {
    pub free_energy: f64,
    pub energy: f64,
    pub renyi_entropy: f64,
}

/// `β_R tr(Hρ)/tr ρ + log(tr ρ²/(tr ρ)²)` of a materialized ansatz.
pub fn exact_ansatz_free_energy<M: DensityModel + ?Sized, O: Operator + ?Sized>(
    model: &M,
    params: &[f64],
    h: &O,
    beta_r: f64,
) -> Result<AnsatzFreeEnergy> {
    let rho = brute_force_rho(model, params, BRUTE_FORCE_CAP)?.normalized();
    let hm = dense_matrix(h, BRUTE_FORCE_CAP)?;
    let mut energy = 0.0;
    let mut purity = 0.0;
    for r in 0..rho.nrows() {
        for c in 0..rho.ncols() {
            energy += hm[(c, r)] * rho[(r, c)].re;
            purity += rho[(r, c)].norm_sqr();
        }
    }
    let renyi_entropy = -purity.ln();
    Ok(AnsatzFreeEnergy { free_energy: beta_r * energy - renyi_entropy, energy, renyi_entropy })
}

/// Exact free energy of a materialized ansatz together with exact
/// expectations of `ops`.
pub fn exact_ansatz_observables<M: DensityModel + ?Sized, O: Operator + ?Sized>(model: &M, params: &[f64], ops: &[&O]) -> Result<Vec<f64>> {
    let rho = brute_force_rho(model, params, BRUTE_FORCE_CAP)?.normalized();
    ops.iter()
        .map(|op| {
            let m = dense_matrix(*op, BRUTE_FORCE_CAP)?;
            Ok((0..rho.nrows()).map(|r| (0..rho.ncols()).map(|c| m[(c, r)] * rho[(r, c)].re).sum::<f64>()).sum())
        })
        .collect()
}
