//! Log-domain contraction of one locally purified matrix-product string.
//!
//! A string visits `sites[0], sites[1], …` and carries real tensors
//! `A[σ][a]` of shape `dl × dr` at every position, where `σ ∈ {0,1}` encodes
//! the spin (`+1 → 0`), `a < χ` is the Kraus index and the outer bond
//! dimensions are 1. Its traced density-matrix element is
//!
//! ```text
//! ρ_ss′ = Σ_{a} tr Π_j A_j[s_j][a_j] ⊗ A_j[s′_j][a_j]
//! ```
//!
//! evaluated by sweeping a `D × D` environment (ket bond × bra bond) along the
//! string. The environment is rescaled to unit max-norm after every site and
//! the scale is accumulated in `log`, so `O(N χ D³)` work per element.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Layout of one string inside the flat parameter vector. Per position the
/// block is ordered `[σ][a][l][r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixString {
    pub sites: Vec<usize>,
    pub kraus: usize,
    /// `dims[j]` is the bond dimension left of position `j`; `dims[0] =
    /// dims[n] = 1`.
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub len: usize,
}

/// A real scalar in log form. `log = -inf` encodes an exact zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogReal {
    pub log: f64,
    pub negative: bool,
}

impl LogReal {
    pub const ZERO: LogReal = LogReal { log: f64::NEG_INFINITY, negative: false };

    pub fn from_value(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            LogReal { log: x.abs().ln(), negative: x < 0.0 }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log == f64::NEG_INFINITY
    }
}

#[inline]
fn spin_index(x: i8) -> usize {
    (x < 0) as usize
}

/// Rescales `m` to unit max-norm. Returns the log of the removed factor or
/// `-inf` if `m` vanishes identically.
fn normalize(m: &mut [f64]) -> f64 {
    let max = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 || !max.is_finite() {
        if max == 0.0 {
            return f64::NEG_INFINITY;
        }
        return f64::NAN;
    }
    let inv = 1.0 / max;
    m.iter_mut().for_each(|x| *x *= inv);
    max.ln()
}

impl MatrixString {
    pub fn new(sites: Vec<usize>, bond: usize, kraus: usize, offset: usize) -> Self {
        let n = sites.len();
        let dims: Vec<usize> = (0..=n).map(|j| if j == 0 || j == n { 1 } else { bond }).collect();
        let mut offsets = Vec::with_capacity(n);
        let mut at = offset;
        for j in 0..n {
            offsets.push(at);
            at += 2 * kraus * dims[j] * dims[j + 1];
        }
        Self { sites, kraus, dims, offsets, len: at - offset }
    }

    #[inline]
    fn block(&self, j: usize, sigma: usize, a: usize) -> usize {
        let (dl, dr) = (self.dims[j], self.dims[j + 1]);
        self.offsets[j] + (sigma * self.kraus + a) * dl * dr
    }

    /// `L′ = Σ_a A_aᵀ L B_a` with `A_a = A[σ][a]`, `B_a = A[σ′][a]`.
    fn push_left(&self, params: &[f64], j: usize, sk: usize, sb: usize, left: &[f64], out: &mut Vec<f64>, tmp: &mut Vec<f64>) {
        let (dl, dr) = (self.dims[j], self.dims[j + 1]);
        out.clear();
        out.resize(dr * dr, 0.0);
        tmp.resize(dl * dr, 0.0);
        for a in 0..self.kraus {
            let ka = &params[self.block(j, sk, a)..][..dl * dr];
            let kb = &params[self.block(j, sb, a)..][..dl * dr];
            // tmp = L · B
            tmp.iter_mut().for_each(|x| *x = 0.0);
            for l in 0..dl {
                let trow = &mut tmp[l * dr..(l + 1) * dr];
                for lp in 0..dl {
                    let c = left[l * dl + lp];
                    if c == 0.0 {
                        continue;
                    }
                    let brow = &kb[lp * dr..(lp + 1) * dr];
                    for (t, b) in trow.iter_mut().zip(brow) {
                        *t += c * b;
                    }
                }
            }
            // out += Aᵀ · tmp
            for l in 0..dl {
                let arow = &ka[l * dr..(l + 1) * dr];
                let trow = &tmp[l * dr..(l + 1) * dr];
                for (r, &av) in arow.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let orow = &mut out[r * dr..(r + 1) * dr];
                    for (o, t) in orow.iter_mut().zip(trow) {
                        *o += av * t;
                    }
                }
            }
        }
    }

    /// `R′ = Σ_a A_a R B_aᵀ`.
    fn push_right(&self, params: &[f64], j: usize, sk: usize, sb: usize, right: &[f64], out: &mut Vec<f64>, tmp: &mut Vec<f64>) {
        let (dl, dr) = (self.dims[j], self.dims[j + 1]);
        out.clear();
        out.resize(dl * dl, 0.0);
        tmp.resize(dl * dr, 0.0);
        for a in 0..self.kraus {
            let ka = &params[self.block(j, sk, a)..][..dl * dr];
            let kb = &params[self.block(j, sb, a)..][..dl * dr];
            // tmp = A · R
            tmp.iter_mut().for_each(|x| *x = 0.0);
            for l in 0..dl {
                let trow = &mut tmp[l * dr..(l + 1) * dr];
                for r in 0..dr {
                    let c = ka[l * dr + r];
                    if c == 0.0 {
                        continue;
                    }
                    let rrow = &right[r * dr..(r + 1) * dr];
                    for (t, x) in trow.iter_mut().zip(rrow) {
                        *t += c * x;
                    }
                }
            }
            // out[l, l′] += Σ_r′ tmp[l, r′] B[l′, r′]
            for l in 0..dl {
                let trow = &tmp[l * dr..(l + 1) * dr];
                for lp in 0..dl {
                    let brow = &kb[lp * dr..(lp + 1) * dr];
                    out[l * dl + lp] += trow.iter().zip(brow).map(|(t, b)| t * b).sum::<f64>();
                }
            }
        }
    }

    /// The traced element of this string.
    pub fn value(&self, params: &[f64], s: &[i8], sp: &[i8]) -> LogReal {
        let mut env = vec![1.0];
        let mut next = Vec::new();
        let mut tmp = Vec::new();
        let mut log = 0.0;
        for (j, &site) in self.sites.iter().enumerate() {
            self.push_left(params, j, spin_index(s[site]), spin_index(sp[site]), &env, &mut next, &mut tmp);
            std::mem::swap(&mut env, &mut next);
            let l = normalize(&mut env);
            if l == f64::NEG_INFINITY {
                return LogReal::ZERO;
            }
            log += l;
        }
        LogReal { log, negative: env[0] < 0.0 }
    }

    /// Element value plus `∂ρ/∂A` written into `grad[self.offsets[0]..]`,
    /// scaled so that the true derivative is `e^{scale}·grad`. Entries of the
    /// string's block are overwritten; the rest of `grad` is untouched.
    pub fn value_and_gradient(&self, params: &[f64], s: &[i8], sp: &[i8], grad: &mut [f64]) -> (LogReal, f64) {
        let n = self.sites.len();
        let mut tmp = Vec::new();
        let sig: Vec<(usize, usize)> = self.sites.iter().map(|&site| (spin_index(s[site]), spin_index(sp[site]))).collect();

        // lefts[j] is the environment after positions 0..j (lefts[0] = [1]).
        let mut lefts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut left_logs = Vec::with_capacity(n + 1);
        lefts.push(vec![1.0]);
        left_logs.push(0.0);
        for j in 0..n {
            let mut out = Vec::new();
            if left_logs[j] == f64::NEG_INFINITY {
                out.resize(self.dims[j + 1] * self.dims[j + 1], 0.0);
                lefts.push(out);
                left_logs.push(f64::NEG_INFINITY);
                continue;
            }
            self.push_left(params, j, sig[j].0, sig[j].1, &lefts[j], &mut out, &mut tmp);
            let l = normalize(&mut out);
            left_logs.push(left_logs[j] + l);
            lefts.push(out);
        }
        // rights[j] is the environment of positions j..n (rights[n] = [1]).
        let mut rights: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        let mut right_logs = vec![0.0; n + 1];
        rights[n] = vec![1.0];
        for j in (0..n).rev() {
            let mut out = Vec::new();
            if right_logs[j + 1] == f64::NEG_INFINITY {
                out.resize(self.dims[j] * self.dims[j], 0.0);
                rights[j] = out;
                right_logs[j] = f64::NEG_INFINITY;
                continue;
            }
            self.push_right(params, j, sig[j].0, sig[j].1, &rights[j + 1], &mut out, &mut tmp);
            let l = normalize(&mut out);
            right_logs[j] = right_logs[j + 1] + l;
            rights[j] = out;
        }

        let value =
            if left_logs[n] == f64::NEG_INFINITY { LogReal::ZERO } else { LogReal { log: left_logs[n], negative: lefts[n][0] < 0.0 } };

        let block = &mut grad[self.offsets[0]..self.offsets[0] + self.len];
        block.iter_mut().for_each(|g| *g = 0.0);
        let scales: Vec<f64> = (0..n).map(|j| left_logs[j] + right_logs[j + 1]).collect();
        let scale = scales.iter().cloned().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if scale == f64::NEG_INFINITY {
            return (value, 0.0);
        }
        let base = self.offsets[0];
        let mut lb = Vec::new();
        for j in 0..n {
            if !scales[j].is_finite() {
                continue;
            }
            let factor = (scales[j] - scale).exp();
            let (dl, dr) = (self.dims[j], self.dims[j + 1]);
            let (left, right) = (&lefts[j], &rights[j + 1]);
            let (sk, sb) = sig[j];
            for a in 0..self.kraus {
                // ket side: ∂/∂A[σ][a] = L · B · Rᵀ
                let kb = &params[self.block(j, sb, a)..][..dl * dr];
                lb.clear();
                lb.resize(dl * dr, 0.0);
                for l in 0..dl {
                    for lp in 0..dl {
                        let c = left[l * dl + lp];
                        if c == 0.0 {
                            continue;
                        }
                        for r in 0..dr {
                            lb[l * dr + r] += c * kb[lp * dr + r];
                        }
                    }
                }
                let gk = self.block(j, sk, a) - base;
                for l in 0..dl {
                    for r in 0..dr {
                        let rrow = &right[r * dr..(r + 1) * dr];
                        let v: f64 = lb[l * dr..(l + 1) * dr].iter().zip(rrow).map(|(x, y)| x * y).sum();
                        block[gk + l * dr + r] += factor * v;
                    }
                }
                // bra side: ∂/∂A[σ′][a] = Lᵀ · A · R
                let ka = &params[self.block(j, sk, a)..][..dl * dr];
                lb.iter_mut().for_each(|x| *x = 0.0);
                for l in 0..dl {
                    for r in 0..dr {
                        let c = ka[l * dr + r];
                        if c == 0.0 {
                            continue;
                        }
                        for rp in 0..dr {
                            lb[l * dr + rp] += c * right[r * dr + rp];
                        }
                    }
                }
                let gb = self.block(j, sb, a) - base;
                for lp in 0..dl {
                    for rp in 0..dr {
                        let mut v = 0.0;
                        for l in 0..dl {
                            v += left[l * dl + lp] * lb[l * dr + rp];
                        }
                        block[gb + lp * dr + rp] += factor * v;
                    }
                }
            }
        }
        (value, scale)
    }

    /// Copy-to-ancilla identity tensors (`A[σ][a] = δ_{aσ}·𝟙` when `χ ≥ 2`,
    /// `A[σ][0] = 𝟙` otherwise) plus Gaussian noise of width `scale`.
    pub fn init_identity<R: Rng>(&self, params: &mut [f64], scale: f64, rng: &mut R) {
        let noise = Normal::new(0.0, scale.max(0.0)).expect("finite width");
        for j in 0..self.sites.len() {
            let (dl, dr) = (self.dims[j], self.dims[j + 1]);
            for sigma in 0..2 {
                for a in 0..self.kraus {
                    let b = self.block(j, sigma, a);
                    let on = if self.kraus >= 2 { a == sigma } else { a == 0 };
                    for l in 0..dl {
                        for r in 0..dr {
                            let id = if on && l == r { 1.0 } else { 0.0 };
                            params[b + l * dr + r] = id + if scale > 0.0 { noise.sample(rng) } else { 0.0 };
                        }
                    }
                }
            }
        }
    }

    /// Embeds `small`'s tensors into the leading blocks of `self`; all other
    /// entries get noise of width `noise`.
    pub fn embed<R: Rng>(&self, params: &mut [f64], small: &MatrixString, small_params: &[f64], noise: f64, rng: &mut R) {
        let dist = Normal::new(0.0, noise.max(0.0)).expect("finite width");
        for j in 0..self.sites.len() {
            let (dl, dr) = (self.dims[j], self.dims[j + 1]);
            let (sdl, sdr) = (small.dims[j], small.dims[j + 1]);
            for sigma in 0..2 {
                for a in 0..self.kraus {
                    let b = self.block(j, sigma, a);
                    for l in 0..dl {
                        for r in 0..dr {
                            params[b + l * dr + r] = if a < small.kraus && l < sdl && r < sdr {
                                small_params[small.block(j, sigma, a) + l * sdr + r]
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
    }
}
