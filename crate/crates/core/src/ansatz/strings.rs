//! Matrix product and string-bond density operators.

use rand::Rng;

use super::chain::{LogReal, MatrixString};
use super::{product_rule, DensityModel, LogAmplitude, ParamBlock, ParamLayout};
use crate::C64;

/// Product of traced matrix-product strings. With a single string covering
/// every site this is an MPDO.
#[derive(Clone, Debug, PartialEq)]
pub struct StringProduct {
    n_sites: usize,
    strings: Vec<MatrixString>,
    n_params: usize,
}

impl StringProduct {
    pub fn new(n_sites: usize, strings: &[Vec<usize>], bond: usize, kraus: usize) -> Self {
        let mut offset = 0;
        let strings: Vec<MatrixString> = strings
            .iter()
            .map(|sites| {
                let m = MatrixString::new(sites.clone(), bond, kraus, offset);
                offset += m.len;
                m
            })
            .collect();
        Self { n_sites, strings, n_params: offset }
    }

    pub fn strings(&self) -> &[MatrixString] {
        &self.strings
    }

    pub fn init_identity<R: Rng>(&self, params: &mut [f64], scale: f64, rng: &mut R) {
        for s in &self.strings {
            s.init_identity(params, scale, rng);
        }
    }

    pub fn embed<R: Rng>(&self, params: &mut [f64], small: &StringProduct, small_params: &[f64], noise: f64, rng: &mut R) {
        for (big, sm) in self.strings.iter().zip(&small.strings) {
            big.embed(params, sm, small_params, noise, rng);
        }
    }

    pub fn string_values(&self, params: &[f64], s: &[i8], sp: &[i8]) -> Vec<LogReal> {
        self.strings.iter().map(|m| m.value(params, s, sp)).collect()
    }
}

fn combine(values: &[LogReal]) -> LogAmplitude {
    if values.iter().any(|v| v.is_zero()) {
        return LogAmplitude::ZERO;
    }
    let log = values.iter().map(|v| v.log).sum();
    let negative = values.iter().filter(|v| v.negative).count() % 2 == 1;
    LogAmplitude::from_log_real(LogReal { log, negative })
}

impl DensityModel for StringProduct {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn n_params(&self) -> usize {
        self.n_params
    }

    fn layout(&self) -> ParamLayout {
        let mut blocks = Vec::new();
        for (i, m) in self.strings.iter().enumerate() {
            for j in 0..m.sites.len() {
                blocks.push(ParamBlock {
                    name: format!("string{i}.site{}", m.sites[j]),
                    offset: m.offsets[j],
                    shape: vec![2, m.kraus, m.dims[j], m.dims[j + 1]],
                });
            }
        }
        ParamLayout::new(blocks)
    }

    fn log_element(&self, params: &[f64], s: &[i8], sp: &[i8]) -> LogAmplitude {
        let mut values = Vec::with_capacity(self.strings.len());
        for m in &self.strings {
            let v = m.value(params, s, sp);
            if v.is_zero() {
                return LogAmplitude::ZERO;
            }
            values.push(v);
        }
        combine(&values)
    }

    fn element_gradient(&self, params: &[f64], s: &[i8], sp: &[i8], grad: &mut [C64]) -> (LogAmplitude, f64) {
        let mut real = vec![0.0; self.n_params];
        let mut values = Vec::with_capacity(self.strings.len());
        let mut scales = Vec::with_capacity(self.strings.len());
        for m in &self.strings {
            let (v, sc) = m.value_and_gradient(params, s, sp, &mut real);
            values.push(v);
            scales.push(sc);
        }
        let (scale, mult) = product_rule(&values, &scales);
        for (m, &k) in self.strings.iter().zip(&mult) {
            let range = m.offsets[0]..m.offsets[0] + m.len;
            for (g, r) in grad[range.clone()].iter_mut().zip(&real[range]) {
                *g = C64::new(k * r, 0.0);
            }
        }
        (combine(&values), scale)
    }
}

/// Boustrophedon strings through an `lx × ly` lattice (site `x + lx·y`).
///
/// - `n_s = 1`: horizontal snake starting at the top-left corner.
/// - `n_s = 2`: horizontal and vertical snakes.
/// - `n_s = 4`: additionally the horizontal snake traversing rows bottom-up and
///   the vertical snake traversing columns right-to-left.
pub fn snake_strings(lx: usize, ly: usize, n_s: usize) -> crate::Result<Vec<Vec<usize>>> {
    let horizontal = |rows: Vec<usize>| -> Vec<usize> {
        let mut out = Vec::with_capacity(lx * ly);
        for (k, &y) in rows.iter().enumerate() {
            if k % 2 == 0 {
                out.extend((0..lx).map(|x| x + lx * y));
            } else {
                out.extend((0..lx).rev().map(|x| x + lx * y));
            }
        }
        out
    };
    let vertical = |cols: Vec<usize>| -> Vec<usize> {
        let mut out = Vec::with_capacity(lx * ly);
        for (k, &x) in cols.iter().enumerate() {
            if k % 2 == 0 {
                out.extend((0..ly).map(|y| x + lx * y));
            } else {
                out.extend((0..ly).rev().map(|y| x + lx * y));
            }
        }
        out
    };
    let rows: Vec<usize> = (0..ly).collect();
    let cols: Vec<usize> = (0..lx).collect();
    match n_s {
        1 => Ok(vec![horizontal(rows)]),
        2 => Ok(vec![horizontal(rows), vertical(cols)]),
        4 => Ok(vec![
            horizontal(rows.clone()),
            vertical(cols.clone()),
            horizontal(rows.into_iter().rev().collect()),
            vertical(cols.into_iter().rev().collect()),
        ]),
        _ => Err(crate::Error::Config(format!("unsupported number of snake strings {n_s} (expected 1, 2 or 4)"))),
    }
}
