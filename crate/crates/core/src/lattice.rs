//! Lattice geometries, the transverse-field Ising Hamiltonian and local
//! observables.
//!
//! Operators are exposed through their *connected elements*: for a basis state
//! `|s⟩` the list of `(s′, O_{s′s})` with non-zero matrix element. Spins are
//! `±1` with `+1` the σ^z eigenvalue `+1`. Sites of a square lattice are
//! numbered row-major, `site = x + Lx·y`.
//!
//! Dense matrices use the basis ordering where `+1 → 0`, `-1 → 1` and site `i`
//! is bit `i` of the basis index.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SpinConfiguration};

/// Largest system materialized by [`dense_matrix`] unless a larger cap is
/// requested explicitly.
pub const DEFAULT_DENSE_CAP: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Chain,
    Square,
}

/// A finite lattice with open boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    kind: GeometryKind,
    lx: usize,
    ly: usize,
    bonds: Vec<(usize, usize)>,
}

impl Geometry {
    /// Open chain of `n` sites with bonds `(i, i+1)`.
    pub fn chain(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Geometry("chain needs at least one site".into()));
        }
        let bonds = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Ok(Self { kind: GeometryKind::Chain, lx: n, ly: 1, bonds })
    }

    /// Open `lx × ly` square lattice. Horizontal bonds are listed first, then
    /// vertical ones.
    pub fn square(lx: usize, ly: usize) -> Result<Self> {
        if lx == 0 || ly == 0 || lx * ly < 2 {
            return Err(Error::Geometry(format!("square lattice {lx}x{ly} needs at least two sites")));
        }
        let mut bonds = Vec::with_capacity(lx * (ly - 1) + ly * (lx - 1));
        for y in 0..ly {
            for x in 0..lx - 1 {
                bonds.push((x + lx * y, x + 1 + lx * y));
            }
        }
        for y in 0..ly - 1 {
            for x in 0..lx {
                bonds.push((x + lx * y, x + lx * (y + 1)));
            }
        }
        Ok(Self { kind: GeometryKind::Square, lx, ly, bonds })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    /// `(Lx, Ly)`; a chain reports `(N, 1)`.
    pub fn extents(&self) -> (usize, usize) {
        (self.lx, self.ly)
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        x + self.lx * y
    }
}

/// Anything with sparse matrix elements in the z basis.
pub trait Operator: Send + Sync {
    fn n_sites(&self) -> usize;

    /// Calls `f(flips, value)` for every non-zero `O_{s′s}`, where `s′` is `s`
    /// with the listed sites flipped. The diagonal entry (empty flip list)
    /// comes first; flips follow in ascending site order.
    fn for_each_connected(&self, s: &[i8], f: &mut dyn FnMut(&[usize], f64));

    /// The diagonal element `O_{ss}`.
    fn diagonal(&self, s: &[i8]) -> f64 {
        let mut d = 0.0;
        self.for_each_connected(s, &mut |flips, v| {
            if flips.is_empty() {
                d += v;
            }
        });
        d
    }
}

/// `H = J Σ_⟨ij⟩ σ^z_i σ^z_j + h_z Σ σ^z_i − h_x Σ σ^x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingHamiltonian {
    pub geometry: Geometry,
    pub j: f64,
    pub h_z: f64,
    pub h_x: f64,
}

pub fn build_hamiltonian(geometry: Geometry, j: f64, h_z: f64, h_x: f64) -> Result<IsingHamiltonian> {
    if !(j.is_finite() && h_z.is_finite() && h_x.is_finite()) {
        return Err(Error::Config("Hamiltonian couplings must be finite".into()));
    }
    Ok(IsingHamiltonian { geometry, j, h_z, h_x })
}

impl IsingHamiltonian {
    pub fn classical_energy(&self, s: &[i8]) -> f64 {
        let zz: i32 = self.geometry.bonds.iter().map(|&(a, b)| (s[a] * s[b]) as i32).sum();
        let z: i32 = s.iter().map(|&x| x as i32).sum();
        self.j * zz as f64 + self.h_z * z as f64
    }
}

impl Operator for IsingHamiltonian {
    fn n_sites(&self) -> usize {
        self.geometry.n_sites()
    }

    fn for_each_connected(&self, s: &[i8], f: &mut dyn FnMut(&[usize], f64)) {
        f(&[], self.classical_energy(s));
        if self.h_x != 0.0 {
            for i in 0..s.len() {
                f(&[i], -self.h_x);
            }
        }
    }

    fn diagonal(&self, s: &[i8]) -> f64 {
        self.classical_energy(s)
    }
}

/// One product of Pauli X and Z operators with a real coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    /// Sites carrying σ^x, ascending.
    pub x_sites: Vec<usize>,
    /// Sites carrying σ^z.
    pub z_sites: Vec<usize>,
}

/// A named Hermitian observable built from X/Z Pauli products.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub name: String,
    n_sites: usize,
    diagonal_terms: Vec<PauliTerm>,
    offdiagonal_terms: Vec<PauliTerm>,
}

impl Observable {
    pub fn new(name: impl Into<String>, n_sites: usize, terms: Vec<PauliTerm>) -> Self {
        let (diagonal_terms, mut offdiagonal_terms): (Vec<_>, Vec<_>) = terms
            .into_iter()
            .map(|mut t| {
                t.x_sites.sort_unstable();
                t
            })
            .partition(|t| t.x_sites.is_empty());
        offdiagonal_terms.sort_by(|a, b| a.x_sites.cmp(&b.x_sites));
        Self { name: name.into(), n_sites, diagonal_terms, offdiagonal_terms }
    }
}

impl Operator for Observable {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn for_each_connected(&self, s: &[i8], f: &mut dyn FnMut(&[usize], f64)) {
        let zprod = |t: &PauliTerm| t.z_sites.iter().map(|&i| s[i] as f64).product::<f64>();
        if !self.diagonal_terms.is_empty() {
            f(&[], self.diagonal_terms.iter().map(|t| t.coeff * zprod(t)).sum());
        }
        let mut k = 0;
        while k < self.offdiagonal_terms.len() {
            let flips = &self.offdiagonal_terms[k].x_sites;
            let mut v = 0.0;
            while k < self.offdiagonal_terms.len() && &self.offdiagonal_terms[k].x_sites == flips {
                let t = &self.offdiagonal_terms[k];
                v += t.coeff * zprod(t);
                k += 1;
            }
            if v != 0.0 {
                f(flips, v);
            }
        }
    }
}

/// `M_x = Σ σ^x_i / N`.
pub fn transverse_magnetization(geometry: &Geometry) -> Observable {
    let n = geometry.n_sites();
    let terms = (0..n).map(|i| PauliTerm { coeff: 1.0 / n as f64, x_sites: vec![i], z_sites: vec![] }).collect();
    Observable::new("m_x", n, terms)
}

/// `C_xx = Σ_⟨ij⟩ σ^x_i σ^x_j / N`; on a chain this is `Σ σ^x_i σ^x_{i+1} / N`.
pub fn xx_correlation(geometry: &Geometry) -> Observable {
    let n = geometry.n_sites();
    let terms = geometry.bonds().iter().map(|&(a, b)| PauliTerm { coeff: 1.0 / n as f64, x_sites: vec![a, b], z_sites: vec![] }).collect();
    Observable::new("c_xx", n, terms)
}

/// `C_zz = Σ_⟨ij⟩ σ^z_i σ^z_j / N`.
pub fn zz_correlation(geometry: &Geometry) -> Observable {
    let n = geometry.n_sites();
    let terms = geometry.bonds().iter().map(|&(a, b)| PauliTerm { coeff: 1.0 / n as f64, x_sites: vec![], z_sites: vec![a, b] }).collect();
    Observable::new("c_zz", n, terms)
}

/// `[M_x, C_xx, C_zz]` for the geometry.
pub fn standard_observables(geometry: &Geometry) -> Vec<Observable> {
    vec![transverse_magnetization(geometry), xx_correlation(geometry), zz_correlation(geometry)]
}

pub fn check_configuration(n: usize, s: &[i8]) -> Result<()> {
    if s.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: s.len() });
    }
    if s.iter().any(|&x| x != 1 && x != -1) {
        return Err(Error::Config("spin entries must be +1 or -1".into()));
    }
    Ok(())
}

/// All `(s′, O_{s′s})` with non-zero value, diagonal first.
pub fn connected_elements<O: Operator + ?Sized>(op: &O, s: &[i8]) -> Result<Vec<(SpinConfiguration, f64)>> {
    check_configuration(op.n_sites(), s)?;
    let mut out = Vec::new();
    op.for_each_connected(s, &mut |flips, v| {
        let mut sp = s.to_vec();
        for &i in flips {
            sp[i] = -sp[i];
        }
        out.push((sp, v));
    });
    Ok(out)
}

/// Basis index of a configuration (`+1 → 0`, `-1 → 1`, little-endian).
pub fn basis_index(s: &[i8]) -> usize {
    s.iter().enumerate().fold(0, |acc, (i, &x)| if x < 0 { acc | (1 << i) } else { acc })
}

pub fn configuration_from_index(index: usize, n: usize) -> SpinConfiguration {
    (0..n).map(|i| if index >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// Dense `2^N × 2^N` matrix assembled from connected elements.
pub fn dense_matrix<O: Operator + ?Sized>(op: &O, cap: usize) -> Result<DMatrix<f64>> {
    let n = op.n_sites();
    if n > cap {
        return Err(Error::SizeCap { what: "dense operator", n, cap });
    }
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let s = configuration_from_index(col, n);
        op.for_each_connected(&s, &mut |flips, v| {
            let row = flips.iter().fold(col, |acc, &i| acc ^ (1 << i));
            m[(row, col)] += v;
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bond_counts() {
        assert_eq!(Geometry::chain(16).unwrap().bonds().len(), 15);
        let sq = Geometry::square(4, 3).unwrap();
        assert_eq!(sq.bonds().len(), 4 * 2 + 3 * 3);
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in sq.bonds() {
            assert!(a != b && a < 12 && b < 12);
            assert!(seen.insert((a.min(b), a.max(b))));
        }
        assert!(Geometry::chain(0).is_err());
        assert!(Geometry::square(1, 1).is_err());
    }

    #[test]
    fn single_bond_matrix() {
        let h = build_hamiltonian(Geometry::chain(2).unwrap(), 1.0, 0.0, 0.0).unwrap();
        let m = dense_matrix(&h, DEFAULT_DENSE_CAP).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]));
        assert_eq!(m, expected);
    }

    #[test]
    fn single_site_transverse_field() {
        let h = build_hamiltonian(Geometry::chain(1).unwrap(), 1.0, 0.0, 1.0).unwrap();
        let m = dense_matrix(&h, DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
    }

    #[test]
    fn two_site_connected_elements() {
        let h = build_hamiltonian(Geometry::chain(2).unwrap(), 1.0, 0.5, 1.05).unwrap();
        let c = connected_elements(&h, &[1, 1]).unwrap();
        assert_eq!(c, vec![(vec![1, 1], 2.0), (vec![-1, 1], -1.05), (vec![1, -1], -1.05)]);
        let m = dense_matrix(&h, DEFAULT_DENSE_CAP).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| m[(i, i)]).collect();
        // (+,+): 1+1, (-,+): -1+0, (+,-): -1+0, (-,-): 1-1
        assert_eq!(diag, vec![2.0, -1.0, -1.0, 0.0]);
        assert!(connected_elements(&h, &[1, 1, 1]).is_err());
    }

    #[test]
    fn classical_limit_has_one_entry() {
        let h = build_hamiltonian(Geometry::square(2, 3).unwrap(), -1.0, 0.3, 0.0).unwrap();
        let c = connected_elements(&h, &[1, -1, 1, 1, -1, -1]).unwrap();
        assert_eq!(c.len(), 1);
        let all_up = vec![1i8; 6];
        assert_eq!(h.diagonal(&all_up), -1.0 * 7.0 + 0.3 * 6.0);
    }

    #[test]
    fn rows_match_dense_matrix() {
        let h = build_hamiltonian(Geometry::chain(6).unwrap(), 1.0, 0.5, 1.05).unwrap();
        let m = dense_matrix(&h, DEFAULT_DENSE_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s: Vec<i8> = (0..6).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let col = basis_index(&s);
            let c = connected_elements(&h, &s).unwrap();
            assert_eq!(c.len(), 7);
            let mut column = vec![0.0; 64];
            for (sp, v) in c {
                column[basis_index(&sp)] += v;
            }
            for (row, v) in column.iter().enumerate() {
                assert_eq!(*v, m[(row, col)]);
            }
        }
    }

    #[test]
    fn dense_is_symmetric_and_capped() {
        let h = build_hamiltonian(Geometry::square(2, 3).unwrap(), -0.7, 0.2, 1.3).unwrap();
        let m = dense_matrix(&h, DEFAULT_DENSE_CAP).unwrap();
        assert_eq!((&m - m.transpose()).amax(), 0.0);
        let big = build_hamiltonian(Geometry::chain(15).unwrap(), 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(dense_matrix(&big, DEFAULT_DENSE_CAP), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn observables_on_simple_states() {
        let sq = Geometry::square(2, 2).unwrap();
        let czz = zz_correlation(&sq);
        assert_eq!(czz.diagonal(&[1, 1, 1, 1]), 1.0);

        // |+…+⟩ has amplitude 2^{-N/2} everywhere, so ⟨M_x⟩ is the mean row sum.
        let chain = Geometry::chain(3).unwrap();
        let mx = dense_matrix(&transverse_magnetization(&chain), 10).unwrap();
        let plus = nalgebra::DVector::from_element(8, 1.0 / 8f64.sqrt());
        assert!(((plus.transpose() * &mx * &plus)[0] - 1.0).abs() < 1e-14);
        assert_eq!(mx.trace(), 0.0);

        let cxx = dense_matrix(&xx_correlation(&chain), 10).unwrap();
        assert!(((plus.transpose() * &cxx * &plus)[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn basis_roundtrip() {
        for i in 0..32 {
            assert_eq!(basis_index(&configuration_from_index(i, 5)), i);
        }
        assert_eq!(configuration_from_index(1, 3), vec![-1, 1, 1]);
    }
}
