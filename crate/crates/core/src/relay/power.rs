//! Relay power as a function of the effective noise level.
//!
//! With `A = diag(a)`, `a_j = m_j e^{i theta_j}` and `b_j = beta * z_j`, the
//! relay power
//!
//! ```text
//! ||H_d^-1 A (P+B)||_F^2 + sigma_r^2 ||H_d^-1 A (P+B) H_u^-1||_F^2
//! ```
//!
//! is the real quadratic form `m^T K(beta) m` with
//! `K(beta) = K0 + beta K1 + beta^2 K2`, and the relay noise reaching
//! station `j` is `c_j(beta) = c0_j + beta c1_j + beta^2 c2_j`. The gain
//! magnitudes follow from the fairness condition
//! `m_j = sigma / sqrt(sigma_e^2 - c_j)`. Everything that depends only on the
//! channel is folded into two Gram matrices, so one evaluation costs O(n^2).

use crate::combinatorics::Permutation;
use crate::error::{Error, Result};
use crate::relay::{ChannelRealization, SystemParams};
use crate::C64;

/// Points in the coarse log-spaced scan that brackets the root.
pub const SCAN_POINTS: usize = 64;
/// Relative width at which bisection stops.
pub const BISECTION_RTOL: f64 = 1e-12;
const MAX_EXPANSIONS: usize = 2000;
const MAX_BISECTIONS: usize = 400;

/// Channel- and permutation-dependent terms shared by all phase trials.
#[derive(Debug, Clone)]
pub struct PowerModel {
    n: usize,
    src: Vec<usize>,
    /// `gd[j*n + l] = d_j^H d_l`, `d_j` the j-th column of `H_d^-1`.
    gd: Vec<C64>,
    /// `gu[a*n + b] = <u_a, u_b>`, `u_a` the a-th row of `H_u^-1`.
    gu: Vec<C64>,
    params: SystemParams,
}

impl PowerModel {
    pub fn new(ch: &ChannelRealization, perm: &Permutation, params: &SystemParams) -> Result<Self> {
        let n = ch.n();
        if perm.n() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: perm.n(),
            });
        }
        let d = ch.h_d_inv();
        let u = ch.h_u_inv();
        let mut gd = vec![C64::new(0.0, 0.0); n * n];
        let mut gu = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for l in 0..n {
                let mut sd = C64::new(0.0, 0.0);
                let mut su = C64::new(0.0, 0.0);
                for r in 0..n {
                    sd += d[(r, j)].conj() * d[(r, l)];
                    su += u[(j, r)].conj() * u[(l, r)];
                }
                gd[j * n + l] = sd;
                gu[j * n + l] = su;
            }
        }
        Ok(Self {
            n,
            src: perm.source_of().to_vec(),
            gd,
            gu,
            params: *params,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Squared row norm `||u_a||^2` of `H_u^-1`.
    pub fn row_energy(&self, a: usize) -> f64 {
        self.gu[a * self.n + a].re
    }

    /// Fixes the phases of `A` and the complex directions `z` of `B`, leaving
    /// the common magnitude `beta` free.
    pub fn trial(&self, phases_a: &[f64], b_dir: &[C64]) -> Result<TrialForm> {
        let n = self.n;
        if phases_a.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: phases_a.len(),
            });
        }
        if b_dir.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: b_dir.len(),
            });
        }
        let sr = self.params.sigma_r_sq;
        let y: Vec<C64> = phases_a.iter().map(|&t| C64::from_polar(1.0, t)).collect();
        let src = &self.src;
        let gu = |a: usize, b: usize| self.gu[a * n + b];
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };

        let mut k0 = vec![0.0; n * n];
        let mut k1 = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                let g = self.gd[j * n + l];
                let (ij, il) = (src[j], src[l]);
                let (zj, zl) = (b_dir[j], b_dir[l]);
                let t0 = g * (delta(j, l) + gu(ij, il) * sr);
                let t1 = g
                    * (zl * delta(ij, l)
                        + zj.conj() * delta(j, il)
                        + (zl * gu(ij, l) + zj.conj() * gu(j, il)) * sr);
                let t2 = g * zj.conj() * zl * (delta(j, l) + gu(j, l) * sr);
                let rot = y[j].conj() * y[l];
                k0[j * n + l] = (rot * t0).re;
                k1[j * n + l] = (rot * t1).re;
                k2[j * n + l] = (rot * t2).re;
            }
        }
        let mut c0 = vec![0.0; n];
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for j in 0..n {
            let ij = src[j];
            c0[j] = sr * gu(ij, ij).re;
            c1[j] = sr * 2.0 * (b_dir[j] * gu(ij, j)).re;
            c2[j] = sr * b_dir[j].norm_sqr() * gu(j, j).re;
        }
        Ok(TrialForm {
            n,
            k0,
            k1,
            k2,
            c0,
            c1,
            c2,
            sigma_sq: self.params.sigma_sq,
            p: self.params.p,
        })
    }
}

/// Power and noise coefficients for one phase assignment, polynomial in `beta`.
#[derive(Debug, Clone)]
pub struct TrialForm {
    n: usize,
    k0: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    c0: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    sigma_sq: f64,
    p: f64,
}

impl TrialForm {
    pub fn at(&self, beta: f64) -> QuadForm {
        let b2 = beta * beta;
        let k = (0..self.n * self.n)
            .map(|x| self.k0[x] + beta * self.k1[x] + b2 * self.k2[x])
            .collect();
        let c = (0..self.n)
            .map(|j| self.c0[j] + beta * self.c1[j] + b2 * self.c2[j])
            .collect();
        QuadForm {
            n: self.n,
            k,
            c,
            sigma_sq: self.sigma_sq,
            p: self.p,
        }
    }

    /// Whether the root for `beta` could lie below `sigma_e_sq`: the noise floor
    /// is below it and the power there does not exceed the budget. Evaluated
    /// without materializing `K(beta)`.
    pub fn may_improve(&self, beta: f64, sigma_e_sq: f64) -> bool {
        let n = self.n;
        let b2 = beta * beta;
        let mut m = [0.0f64; 16];
        let mut heap;
        let m: &mut [f64] = if n <= 16 {
            &mut m[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for j in 0..n {
            let gap = sigma_e_sq - (self.c0[j] + beta * self.c1[j] + b2 * self.c2[j]);
            if gap <= 0.0 {
                return false;
            }
            m[j] = 1.0 / gap.sqrt();
        }
        let mut total = 0.0;
        for j in 0..n {
            let row = j * n;
            let mut s = 0.0;
            for l in 0..n {
                let x = row + l;
                s += (self.k0[x] + beta * self.k1[x] + b2 * self.k2[x]) * m[l];
            }
            total += m[j] * s;
        }
        self.sigma_sq * total < self.p
    }
}

/// Relay power `m^T K m` at one fixed `beta`, with station noise floors `c`.
#[derive(Debug, Clone)]
pub struct QuadForm {
    n: usize,
    k: Vec<f64>,
    c: Vec<f64>,
    sigma_sq: f64,
    p: f64,
}

impl QuadForm {
    /// Relay-noise contribution `c_j` per station.
    pub fn noise_floor(&self) -> &[f64] {
        &self.c
    }

    /// `max_j c_j`; the effective noise must exceed it.
    pub fn lower(&self) -> f64 {
        self.c.iter().cloned().fold(0.0, f64::max)
    }

    /// Gain magnitudes `|a_j| = sigma / sqrt(sigma_e^2 - c_j)`.
    pub fn magnitudes(&self, sigma_e_sq: f64) -> Vec<f64> {
        self.c
            .iter()
            .map(|&c| (self.sigma_sq / (sigma_e_sq - c)).sqrt())
            .collect()
    }

    /// Relay transmit power implied by `sigma_e_sq`; `+inf` at or below the floor.
    pub fn power(&self, sigma_e_sq: f64) -> f64 {
        let n = self.n;
        let mut inv = Vec::with_capacity(n);
        for &c in &self.c {
            let gap = sigma_e_sq - c;
            if gap <= 0.0 {
                return f64::INFINITY;
            }
            inv.push(1.0 / gap.sqrt());
        }
        let mut total = 0.0;
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += self.k[j * n + l] * inv[l];
            }
            total += inv[j] * s;
        }
        self.sigma_sq * total
    }

    /// Smallest `sigma_e^2` above the noise floor at which the relay power equals `p`.
    ///
    /// A 64-point log-spaced scan from just above the floor to an upper end
    /// (doubled until the power drops below `p`) picks the first sign change;
    /// bisection then narrows it to relative width [`BISECTION_RTOL`].
    pub fn solve(&self) -> Result<f64> {
        let p = self.p;
        let lower = self.lower();
        let f = |x: f64| -> Result<f64> {
            let v = self.power(x);
            if v.is_nan() {
                Err(Error::SingularChannel(format!(
                    "relay power is not finite at sigma_e^2 = {x:e}"
                )))
            } else {
                Ok(v - p)
            }
        };

        let mut upper = if lower > 0.0 { 2.0 * lower } else { self.sigma_sq };
        let mut expansions = 0;
        while f(upper)? >= 0.0 {
            upper *= 2.0;
            expansions += 1;
            if expansions > MAX_EXPANSIONS || !upper.is_finite() {
                return Err(Error::InfeasiblePower(format!(
                    "relay power stays above p = {p} up to sigma_e^2 = {upper:e}"
                )));
            }
        }
        let start = if lower > 0.0 {
            lower * (1.0 + 1e-9)
        } else {
            upper * 1e-15
        };
        let (mut lo, mut hi) = if start >= upper {
            (lower, upper)
        } else {
            let ratio = (upper / start).ln() / (SCAN_POINTS - 1) as f64;
            let mut prev = lower;
            let mut bracket = (lower, upper);
            for k in 0..SCAN_POINTS {
                let x = if k == SCAN_POINTS - 1 {
                    upper
                } else {
                    start * (ratio * k as f64).exp()
                };
                if f(x)? < 0.0 {
                    bracket = (prev, x);
                    break;
                }
                prev = x;
            }
            bracket
        };
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= BISECTION_RTOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
