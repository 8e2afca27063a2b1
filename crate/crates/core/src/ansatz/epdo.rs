//! Entangled plaquette density operator.
//!
//! Each plaquette `p` owns a dense real tensor `φ[p][s_p][a]` of shape
//! `2^{n_p} × χ_a`; the traced element is a product of plaquette overlaps
//! `ρ_ss′ = Π_p Σ_a φ[p][s_p][a] φ[p][s′_p][a]`. The local configuration
//! index `s_p` is little-endian over the plaquette's ordered sites with
//! `+1 → 0`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::chain::LogReal;
use super::{product_rule, DensityModel, LogAmplitude, ParamBlock, ParamLayout};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Epdo {
    n_sites: usize,
    plaquettes: Vec<Vec<usize>>,
    kraus: usize,
    offsets: Vec<usize>,
    n_params: usize,
}

impl Epdo {
    pub fn new(n_sites: usize, plaquettes: Vec<Vec<usize>>, kraus: usize) -> Self {
        let mut offsets = Vec::with_capacity(plaquettes.len());
        let mut at = 0;
        for p in &plaquettes {
            offsets.push(at);
            at += (1usize << p.len()) * kraus;
        }
        Self { n_sites, plaquettes, kraus, offsets, n_params: at }
    }

    pub fn plaquettes(&self) -> &[Vec<usize>] {
        &self.plaquettes
    }

    fn local_index(p: &[usize], s: &[i8]) -> usize {
        p.iter().enumerate().fold(0, |acc, (k, &site)| if s[site] < 0 { acc | (1 << k) } else { acc })
    }

    fn row<'a>(&self, params: &'a [f64], p: usize, idx: usize) -> &'a [f64] {
        &params[self.offsets[p] + idx * self.kraus..][..self.kraus]
    }

    fn factors(&self, params: &[f64], s: &[i8], sp: &[i8]) -> Vec<LogReal> {
        (0..self.plaquettes.len())
            .map(|p| {
                let a = self.row(params, p, Self::local_index(&self.plaquettes[p], s));
                let b = self.row(params, p, Self::local_index(&self.plaquettes[p], sp));
                LogReal::from_value(a.iter().zip(b).map(|(x, y)| x * y).sum())
            })
            .collect()
    }

    pub fn init_random<R: Rng>(&self, params: &mut [f64], scale: f64, rng: &mut R) {
        let dist = Normal::new(0.0, scale).expect("finite width");
        params.iter_mut().for_each(|x| *x = dist.sample(rng));
    }

    pub fn embed<R: Rng>(&self, params: &mut [f64], small: &Epdo, small_params: &[f64], noise: f64, rng: &mut R) {
        let dist = Normal::new(0.0, noise.max(0.0)).expect("finite width");
        for p in 0..self.plaquettes.len() {
            for idx in 0..1usize << self.plaquettes[p].len() {
                for a in 0..self.kraus {
                    params[self.offsets[p] + idx * self.kraus + a] = if a < small.kraus {
                        small_params[small.offsets[p] + idx * small.kraus + a]
                    } else if noise > 0.0 {
                        dist.sample(rng)
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}

fn combine(values: &[LogReal]) -> LogAmplitude {
    if values.iter().any(|v| v.is_zero()) {
        return LogAmplitude::ZERO;
    }
    LogAmplitude::from_log_real(LogReal {
        log: values.iter().map(|v| v.log).sum(),
        negative: values.iter().filter(|v| v.negative).count() % 2 == 1,
    })
}

impl DensityModel for Epdo {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn n_params(&self) -> usize {
        self.n_params
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new(
            self.plaquettes
                .iter()
                .enumerate()
                .map(|(p, sites)| ParamBlock {
                    name: format!("plaquette{p}"),
                    offset: self.offsets[p],
                    shape: vec![1 << sites.len(), self.kraus],
                })
                .collect(),
        )
    }

    fn log_element(&self, params: &[f64], s: &[i8], sp: &[i8]) -> LogAmplitude {
        combine(&self.factors(params, s, sp))
    }

    fn element_gradient(&self, params: &[f64], s: &[i8], sp: &[i8], grad: &mut [C64]) -> (LogAmplitude, f64) {
        let values = self.factors(params, s, sp);
        // Each factor's derivative is O(1) relative to the raw parameters.
        let scales = vec![0.0; values.len()];
        let (scale, mult) = product_rule(&values, &scales);
        grad.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        for (p, sites) in self.plaquettes.iter().enumerate() {
            if mult[p] == 0.0 {
                continue;
            }
            let (ik, ib) = (Self::local_index(sites, s), Self::local_index(sites, sp));
            for a in 0..self.kraus {
                let (vk, vb) = (self.row(params, p, ik)[a], self.row(params, p, ib)[a]);
                grad[self.offsets[p] + ik * self.kraus + a].re += mult[p] * vb;
                grad[self.offsets[p] + ib * self.kraus + a].re += mult[p] * vk;
            }
        }
        (combine(&values), scale)
    }
}

/// Overlapping width-`w` plaquettes: runs `(i, …, i+w-1)` on a chain,
/// `w × w` blocks at every offset on a square lattice.
pub fn default_plaquettes(geometry: &crate::lattice::Geometry, width: usize) -> crate::Result<Vec<Vec<usize>>> {
    use crate::lattice::GeometryKind;
    let (lx, ly) = geometry.extents();
    if width == 0 {
        return Err(crate::Error::Config("plaquette width must be positive".into()));
    }
    match geometry.kind() {
        GeometryKind::Chain => {
            if width > lx {
                return Err(crate::Error::Config(format!("plaquette width {width} exceeds chain length {lx}")));
            }
            Ok((0..=lx - width).map(|i| (i..i + width).collect()).collect())
        }
        GeometryKind::Square => {
            if width > lx || width > ly {
                return Err(crate::Error::Config(format!("plaquette width {width} exceeds lattice {lx}x{ly}")));
            }
            let mut out = Vec::new();
            for y0 in 0..=ly - width {
                for x0 in 0..=lx - width {
                    let mut p = Vec::with_capacity(width * width);
                    for dy in 0..width {
                        for dx in 0..width {
                            p.push(x0 + dx + lx * (y0 + dy));
                        }
                    }
                    out.push(p);
                }
            }
            Ok(out)
        }
    }
}
