//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the ansatz contraction code: density-matrix
//! elements are rebuilt from the purified amplitudes `Ψ(s, a)` by explicit
//! enumeration over ancilla, bond and hidden indices.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renyi_vmc::ansatz::{Ansatz, AnsatzSpec, DensityModel, EpdoSpec, MpdoSpec, RbmSpec, SbdoSpec};
use renyi_vmc::lattice::{configuration_from_index, Geometry};
use renyi_vmc::C64;

pub fn random_params(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| scale * (2.0 * rng.gen::<f64>() - 1.0)).collect()
}

pub fn random_config(n: usize, rng: &mut impl Rng) -> Vec<i8> {
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

fn odometer(digits: &mut [usize], base: &[usize]) -> bool {
    for (d, b) in digits.iter_mut().zip(base) {
        *d += 1;
        if *d < *b {
            return true;
        }
        *d = 0;
    }
    false
}

/// Amplitude of one purified MPS string, enumerating every bond index.
/// `tensors[j]` is `[σ][a][l][r]` with the given `(kraus, dl, dr)`.
fn string_amplitude(tensors: &[(&[f64], usize, usize, usize)], spins: &[i8], ancilla: &[usize]) -> f64 {
    let n = tensors.len();
    let bond_dims: Vec<usize> = (1..n).map(|j| tensors[j].2).collect();
    let mut bonds = vec![0usize; bond_dims.len()];
    let mut total = 0.0;
    loop {
        let mut prod = 1.0;
        for j in 0..n {
            let (t, kraus, dl, dr) = tensors[j];
            let l = if j == 0 { 0 } else { bonds[j - 1] };
            let r = if j == n - 1 { 0 } else { bonds[j] };
            let sigma = (spins[j] < 0) as usize;
            prod *= t[((sigma * kraus + ancilla[j]) * dl + l) * dr + r];
        }
        total += prod;
        if bond_dims.is_empty() || !odometer(&mut bonds, &bond_dims) {
            break;
        }
    }
    total
}

/// `ρ_ss′ = Σ_a Ψ(s,a) Ψ(s′,a)` for products of purified strings.
fn strings_rho(strings: &[Vec<usize>], model: &Ansatz, params: &[f64], s: &[i8], sp: &[i8]) -> f64 {
    let layout = model.layout();
    let mut per_string: Vec<Vec<(&[f64], usize, usize, usize)>> = Vec::new();
    let mut k = 0;
    for st in strings {
        let mut v = Vec::new();
        for _ in st {
            let b = &layout.blocks[k];
            let len: usize = b.shape.iter().product();
            v.push((&params[b.offset..b.offset + len], b.shape[1], b.shape[2], b.shape[3]));
            k += 1;
        }
        per_string.push(v);
    }
    let kraus = per_string[0][0].1;
    let total_anc: usize = strings.iter().map(|s| s.len()).sum();
    let base = vec![kraus; total_anc];
    let mut anc = vec![0usize; total_anc];
    let mut rho = 0.0;
    loop {
        let mut ket = 1.0;
        let mut bra = 1.0;
        let mut at = 0;
        for (st, tensors) in strings.iter().zip(&per_string) {
            let a = &anc[at..at + st.len()];
            let ss: Vec<i8> = st.iter().map(|&i| s[i]).collect();
            let ssp: Vec<i8> = st.iter().map(|&i| sp[i]).collect();
            ket *= string_amplitude(tensors, &ss, a);
            bra *= string_amplitude(tensors, &ssp, a);
            at += st.len();
        }
        rho += ket * bra;
        if !odometer(&mut anc, &base) {
            break;
        }
    }
    rho
}

fn epdo_rho(spec: &EpdoSpec, params: &[f64], s: &[i8], sp: &[i8]) -> f64 {
    let chi = spec.kraus_dim;
    let mut offsets = Vec::new();
    let mut at = 0;
    for p in &spec.plaquettes {
        offsets.push(at);
        at += (1 << p.len()) * chi;
    }
    let idx = |p: &[usize], x: &[i8]| p.iter().enumerate().map(|(k, &i)| ((x[i] < 0) as usize) << k).sum::<usize>();
    let base = vec![chi; spec.plaquettes.len()];
    let mut anc = vec![0usize; spec.plaquettes.len()];
    let mut rho = 0.0;
    loop {
        let mut ket = 1.0;
        let mut bra = 1.0;
        for (p, sites) in spec.plaquettes.iter().enumerate() {
            ket *= params[offsets[p] + idx(sites, s) * chi + anc[p]];
            bra *= params[offsets[p] + idx(sites, sp) * chi + anc[p]];
        }
        rho += ket * bra;
        if !odometer(&mut anc, &base) {
            break;
        }
    }
    rho
}

/// `Ψ(s, a)` of the RBM with the hidden layer summed explicitly.
fn rbm_psi(spec: &RbmSpec, params: &[f64], s: &[i8], a: &[i8]) -> C64 {
    let n = spec.n_sites;
    let c = |at: usize| C64::new(params[at], params[at + 1]);
    let bh = 2 * n;
    let wh = bh + 2 * spec.n_hidden;
    let ba = wh + 2 * spec.n_hidden * n;
    let wa = ba + 2 * spec.n_ancilla;
    let mut log = C64::new(0.0, 0.0);
    for j in 0..n {
        log += c(2 * j) * s[j] as f64;
    }
    for k in 0..spec.n_ancilla {
        let mut field = c(ba + 2 * k);
        for j in 0..n {
            field += c(wa + 2 * (k * n + j)) * s[j] as f64;
        }
        log += field * a[k] as f64;
    }
    let mut value = log.exp();
    for i in 0..spec.n_hidden {
        let mut theta = c(bh + 2 * i);
        for j in 0..n {
            theta += c(wh + 2 * (i * n + j)) * s[j] as f64;
        }
        // Σ_{h=±1} e^{hθ} = 2cosh θ
        value *= theta.exp() + (-theta).exp();
    }
    value
}

fn rbm_rho(spec: &RbmSpec, params: &[f64], s: &[i8], sp: &[i8]) -> C64 {
    let mut rho = C64::new(0.0, 0.0);
    for idx in 0..1usize << spec.n_ancilla {
        let a = configuration_from_index(idx, spec.n_ancilla);
        rho += rbm_psi(spec, params, s, &a) * rbm_psi(spec, params, sp, &a).conj();
    }
    rho
}

/// Reference `ρ_ss′` from the purification, for any ansatz specification.
pub fn purified_element(spec: &AnsatzSpec, params: &[f64], s: &[i8], sp: &[i8]) -> C64 {
    let model = Ansatz::from_spec(spec).unwrap();
    match spec {
        AnsatzSpec::Mpdo(m) => C64::new(strings_rho(&[m.order.clone()], &model, params, s, sp), 0.0),
        AnsatzSpec::Sbdo(m) => C64::new(strings_rho(&m.strings, &model, params, s, sp), 0.0),
        AnsatzSpec::Epdo(e) => C64::new(epdo_rho(e, params, s, sp), 0.0),
        AnsatzSpec::Rbm(r) => rbm_rho(r, params, s, sp),
    }
}

pub fn purified_matrix(spec: &AnsatzSpec, params: &[f64]) -> DMatrix<C64> {
    let n = spec.n_sites();
    let dim = 1 << n;
    let configs: Vec<Vec<i8>> = (0..dim).map(|i| configuration_from_index(i, n)).collect();
    DMatrix::from_fn(dim, dim, |r, c| purified_element(spec, params, &configs[r], &configs[c]))
}

/// One small specification of every ansatz kind on an `n`-site chain (or a
/// 2×2 square for `n = 4` string bonds).
pub fn small_specs(n: usize) -> Vec<AnsatzSpec> {
    let chain = Geometry::chain(n).unwrap();
    vec![
        AnsatzSpec::Mpdo(MpdoSpec::for_geometry(&chain, 2, 2)),
        AnsatzSpec::Epdo(EpdoSpec::for_geometry(&chain, 2, 2).unwrap()),
        AnsatzSpec::Sbdo(SbdoSpec { n_sites: n, strings: vec![(0..n).collect(), (0..n).rev().collect()], bond_dim: 2, kraus_dim: 2 }),
        AnsatzSpec::Rbm(RbmSpec { n_sites: n, n_hidden: n, n_ancilla: n }),
    ]
}

/// Random parameters with a scale suited to the ansatz kind.
pub fn random_for(spec: &AnsatzSpec, seed: u64) -> Vec<f64> {
    let n = Ansatz::from_spec(spec).unwrap().n_params();
    match spec {
        AnsatzSpec::Rbm(_) => random_params(n, seed, 0.5),
        _ => random_params(n, seed, 1.0),
    }
}

/// Hermitian eigenvalues of a complex matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}
