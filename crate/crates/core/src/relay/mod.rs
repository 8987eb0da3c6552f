//! Relay beamforming design for one switch matrix.
//!
//! The relay applies `G = H_d^-1 A (P + B) H_u^-1`, so that the end-to-end
//! matrix is `A (P + B)`: station `j` hears its source `P` assigns it, scaled by
//! `a_j`, plus (with network coding) an echo `a_j b_j x_j` of its own symbol,
//! which it removes. Gain magnitudes are chosen so that every station sees the
//! same effective noise power `sigma_e^2`, and `sigma_e^2` is the smallest value
//! meeting the relay power budget.

mod channel;
pub mod power;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

pub use channel::{condition_number, ChannelRealization, DEFAULT_CONDITION_BOUND};
use power::PowerModel;

use crate::combinatorics::{is_pairwise, Permutation};
use crate::error::{Error, Result};
use crate::streams;
use crate::C64;

/// Relay power budget and receiver noise powers, normalized to unit station power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub p: f64,
    pub sigma_sq: f64,
    pub sigma_r_sq: f64,
}

impl SystemParams {
    /// `p` and `sigma_sq` must be positive; `sigma_r_sq` may be zero (noiseless relay).
    pub fn new(p: f64, sigma_sq: f64, sigma_r_sq: f64) -> Result<Self> {
        let params = Self {
            p,
            sigma_sq,
            sigma_r_sq,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.p) {
            return Err(Error::InvalidParams(format!("p must be positive, got {}", self.p)));
        }
        if !ok(self.sigma_sq) {
            return Err(Error::InvalidParams(format!(
                "sigma^2 must be positive, got {}",
                self.sigma_sq
            )));
        }
        if !(self.sigma_r_sq.is_finite() && self.sigma_r_sq >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma_r^2 must be non-negative, got {}",
                self.sigma_r_sq
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    BasicReal,
    CounterPhase,
    RandomPhase,
    NcReal,
    NcRandomPhase,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::BasicReal => "basic-real",
            SchemeKind::CounterPhase => "counter-phase",
            SchemeKind::RandomPhase => "random-phase",
            SchemeKind::NcReal => "nc-real",
            SchemeKind::NcRandomPhase => "nc-random-phase",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, SchemeKind::RandomPhase | SchemeKind::NcRandomPhase)
    }

    pub fn is_network_coded(self) -> bool {
        matches!(self, SchemeKind::NcReal | SchemeKind::NcRandomPhase)
    }
}

pub const DEFAULT_PHASE_BINS: usize = 8;
pub const DEFAULT_B_MAX: f64 = 2.0;
pub const DEFAULT_B_STEP: f64 = 0.01;

/// `0, step, 2 step, ..., max`.
pub fn b_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && max >= 0.0 && max.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "b grid needs step > 0 and max >= 0, got step={step} max={max}"
        )));
    }
    let count = (max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Number of phase bins `M` on `[0, 2 pi)`.
    pub phase_bins: usize,
    /// Number of phase trials `L`.
    pub trials: usize,
    /// Candidate magnitudes for the network-coding diagonal; sorted, contains 0.
    pub b_grid: Vec<f64>,
    pub rng_seed: u64,
    /// Counter-phase on a non-pairwise pattern alternates 0/pi along each cycle.
    pub counter_fallback: bool,
    /// Trial 0 of the random-phase kinds uses all-zero phases.
    pub zero_phase_trial: bool,
    /// Skip candidates whose power at the incumbent noise level is already over budget.
    pub prune: bool,
}

impl SchemeConfig {
    fn with_kind(kind: SchemeKind) -> Self {
        let grid = if kind.is_network_coded() {
            b_grid(DEFAULT_B_MAX, DEFAULT_B_STEP).expect("default grid")
        } else {
            vec![0.0]
        };
        Self {
            kind,
            phase_bins: DEFAULT_PHASE_BINS,
            trials: 1,
            b_grid: grid,
            rng_seed: 0,
            counter_fallback: false,
            zero_phase_trial: true,
            prune: true,
        }
    }

    pub fn basic() -> Self {
        Self::with_kind(SchemeKind::BasicReal)
    }

    pub fn counter_phase() -> Self {
        Self::with_kind(SchemeKind::CounterPhase)
    }

    pub fn random_phase(trials: usize, phase_bins: usize) -> Self {
        Self {
            trials,
            phase_bins,
            ..Self::with_kind(SchemeKind::RandomPhase)
        }
    }

    pub fn nc_real() -> Self {
        Self::with_kind(SchemeKind::NcReal)
    }

    pub fn nc_random_phase(trials: usize, phase_bins: usize) -> Self {
        Self {
            trials,
            phase_bins,
            ..Self::with_kind(SchemeKind::NcRandomPhase)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_fallback(mut self, on: bool) -> Self {
        self.counter_fallback = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_random() {
            if self.phase_bins < 1 {
                return Err(Error::InvalidParams("phase bins M must be at least 1".into()));
            }
            if self.trials < 1 {
                return Err(Error::InvalidParams("trials L must be at least 1".into()));
            }
        }
        if self.kind.is_network_coded() {
            let g = &self.b_grid;
            if !g.contains(&0.0) {
                return Err(Error::InvalidParams("b grid must contain 0".into()));
            }
            if g.iter().any(|b| !(b.is_finite() && *b >= 0.0)) || g.windows(2).any(|w| w[0] > w[1])
            {
                return Err(Error::InvalidParams(
                    "b grid must be sorted and non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Canonical text form, e.g. `random-phase:L=10:M=8`. Parsed back by `FromStr`.
    pub fn label(&self) -> String {
        let mut s = self.kind.name().to_string();
        if self.kind.is_random() {
            s.push_str(&format!(":L={}:M={}", self.trials, self.phase_bins));
        }
        if self.kind.is_network_coded() {
            let default = b_grid(DEFAULT_B_MAX, DEFAULT_B_STEP).expect("default grid");
            if self.b_grid != default {
                let max = self.b_grid.last().copied().unwrap_or(0.0);
                let step = if self.b_grid.len() > 1 {
                    self.b_grid[1] - self.b_grid[0]
                } else {
                    DEFAULT_B_STEP
                };
                s.push_str(&format!(":bmax={max}:bstep={step}"));
            }
        }
        if self.kind == SchemeKind::CounterPhase && self.counter_fallback {
            s.push_str(":fallback");
        }
        if self.kind.is_random() && !self.zero_phase_trial {
            s.push_str(":nozero");
        }
        if !self.prune {
            s.push_str(":exhaustive");
        }
        s
    }
}

impl fmt::Display for SchemeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SchemeConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let kind = match parts.next().unwrap_or("") {
            "basic-real" | "basic" => SchemeKind::BasicReal,
            "counter-phase" => SchemeKind::CounterPhase,
            "random-phase" => SchemeKind::RandomPhase,
            "nc-real" => SchemeKind::NcReal,
            "nc-random-phase" => SchemeKind::NcRandomPhase,
            other => return Err(Error::Config(format!("unknown scheme '{other}'"))),
        };
        let mut cfg = Self::with_kind(kind);
        if kind.is_random() {
            cfg.trials = 10;
        }
        let (mut bmax, mut bstep) = (DEFAULT_B_MAX, DEFAULT_B_STEP);
        let bad = |opt: &str| Error::Config(format!("bad option '{opt}' in scheme '{s}'"));
        for opt in parts {
            let (key, val) = match opt.split_once('=') {
                Some((k, v)) => (k, Some(v)),
                None => (opt, None),
            };
            match (key, val) {
                ("L", Some(v)) if kind.is_random() => cfg.trials = v.parse().map_err(|_| bad(opt))?,
                ("M", Some(v)) if kind.is_random() => {
                    cfg.phase_bins = v.parse().map_err(|_| bad(opt))?
                }
                ("bmax", Some(v)) if kind.is_network_coded() => {
                    bmax = v.parse().map_err(|_| bad(opt))?
                }
                ("bstep", Some(v)) if kind.is_network_coded() => {
                    bstep = v.parse().map_err(|_| bad(opt))?
                }
                ("fallback", None) if kind == SchemeKind::CounterPhase => cfg.counter_fallback = true,
                ("nozero", None) if kind.is_random() => cfg.zero_phase_trial = false,
                ("exhaustive", None) => cfg.prune = false,
                _ => return Err(bad(opt)),
            }
        }
        if kind.is_network_coded() {
            cfg.b_grid = b_grid(bmax, bstep)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Solved relay configuration for one switch matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayDesign {
    pub permutation: Permutation,
    /// Diagonal of `A`.
    pub a: Vec<C64>,
    /// Diagonal of `B`; all zero without network coding.
    pub b: Vec<C64>,
    pub sigma_e_sq: f64,
    pub g: DMatrix<C64>,
    pub achieved_power: f64,
}

impl RelayDesign {
    /// Per-station SNR `1 / sigma_e^2`.
    pub fn snr(&self) -> f64 {
        1.0 / self.sigma_e_sq
    }

    pub fn rate(&self) -> f64 {
        effective_rate(self.sigma_e_sq)
    }

    /// `A (P + B)`.
    pub fn target_matrix(&self) -> DMatrix<C64> {
        target_matrix(&self.permutation, &self.a, &self.b)
    }

    /// `||H_d G H_u - A(P+B)||_F / ||A(P+B)||_F`.
    pub fn reconstruction_error(&self, ch: &ChannelRealization) -> f64 {
        let target = self.target_matrix();
        let e2e = ch.h_d() * &self.g * ch.h_u();
        (e2e - &target).norm() / target.norm()
    }

    /// Relay power `Tr[H_u^H G^H G H_u] + sigma_r^2 Tr[G^H G]` evaluated on `G`.
    pub fn relay_power(&self, ch: &ChannelRealization, params: &SystemParams) -> f64 {
        relay_power(&self.g, ch, params)
    }

    /// Effective noise at each station after dividing by `a_j` and removing
    /// its own echo, computed from `G` itself.
    pub fn station_noise(&self, ch: &ChannelRealization, params: &SystemParams) -> Vec<f64> {
        let hg = ch.h_d() * &self.g;
        (0..self.a.len())
            .map(|j| {
                let relay: f64 = hg.row(j).iter().map(|z| z.norm_sqr()).sum();
                (params.sigma_r_sq * relay + params.sigma_sq) / self.a[j].norm_sqr()
            })
            .collect()
    }
}

fn target_matrix(perm: &Permutation, a: &[C64], b: &[C64]) -> DMatrix<C64> {
    let n = perm.n();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        m[(j, perm.source(j))] += a[j];
        m[(j, j)] += a[j] * b[j];
    }
    m
}

pub fn relay_power(g: &DMatrix<C64>, ch: &ChannelRealization, params: &SystemParams) -> f64 {
    (g * ch.h_u()).norm_squared() + params.sigma_r_sq * g.norm_squared()
}

fn check_sizes(ch: &ChannelRealization, perm: &Permutation, vecs: &[usize]) -> Result<()> {
    let n = ch.n();
    if perm.n() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: perm.n(),
        });
    }
    if let Some(&bad) = vecs.iter().find(|&&len| len != n) {
        return Err(Error::SizeMismatch {
            expected: n,
            found: bad,
        });
    }
    Ok(())
}

/// Relay-noise contribution per station under plain zero forcing,
/// `c_j = sigma_r^2 * sum_k |(H_u^-1)[i_j, k]|^2`.
pub fn zf_noise_terms(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
) -> Result<Vec<f64>> {
    nc_noise_terms(ch, perm, params, &vec![C64::new(0.0, 0.0); ch.n()])
}

/// Relay-noise contribution with an echo diagonal `b`:
/// `c_j = sigma_r^2 * ||u_{i_j} + b_j u_j||^2`, `u_k` the rows of `H_u^-1`.
pub fn nc_noise_terms(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    b: &[C64],
) -> Result<Vec<f64>> {
    check_sizes(ch, perm, &[b.len()])?;
    let u = ch.h_u_inv();
    let n = ch.n();
    Ok((0..n)
        .map(|j| {
            let i = perm.source(j);
            let s: f64 = (0..n).map(|k| (u[(i, k)] + b[j] * u[(j, k)]).norm_sqr()).sum();
            params.sigma_r_sq * s
        })
        .collect())
}

fn uniform_b(n: usize, b_scalar: f64) -> Vec<C64> {
    vec![C64::new(b_scalar, 0.0); n]
}

/// Effective noise power for the given `A` phases and real scalar `B = b I`.
pub fn solve_sigma_e(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    phases_a: &[f64],
    b_scalar: f64,
) -> Result<f64> {
    solve_sigma_e_with(ch, perm, params, phases_a, &uniform_b(ch.n(), b_scalar))
}

/// Effective noise power for the given `A` phases and complex diagonal `B`.
pub fn solve_sigma_e_with(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    phases_a: &[f64],
    b: &[C64],
) -> Result<f64> {
    params.validate()?;
    check_sizes(ch, perm, &[phases_a.len(), b.len()])?;
    let model = PowerModel::new(ch, perm, params)?;
    model.trial(phases_a, b)?.at(1.0).solve()
}

/// Gains for a known `sigma_e^2`: `|a_j|` from the fairness condition,
/// `arg a_j` from `phases_a`, and `b_j = b_scalar`.
pub fn compute_gains(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    sigma_e_sq: f64,
    phases_a: &[f64],
    b_scalar: f64,
) -> Result<(Vec<C64>, Vec<C64>)> {
    compute_gains_with(ch, perm, params, sigma_e_sq, phases_a, &uniform_b(ch.n(), b_scalar))
}

pub fn compute_gains_with(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    sigma_e_sq: f64,
    phases_a: &[f64],
    b: &[C64],
) -> Result<(Vec<C64>, Vec<C64>)> {
    check_sizes(ch, perm, &[phases_a.len(), b.len()])?;
    let floor = nc_noise_terms(ch, perm, params, b)?;
    let lower = floor.iter().cloned().fold(0.0, f64::max);
    if !(sigma_e_sq > lower) {
        return Err(Error::Domain(format!(
            "sigma_e^2 = {sigma_e_sq:e} must exceed the relay noise floor {lower:e}"
        )));
    }
    let a = floor
        .iter()
        .zip(phases_a)
        .map(|(&c, &theta)| C64::from_polar((params.sigma_sq / (sigma_e_sq - c)).sqrt(), theta))
        .collect();
    Ok((a, b.to_vec()))
}

/// `G = H_d^-1 A (P + B) H_u^-1`, with one step of iterative refinement.
pub fn build_beamformer(
    ch: &ChannelRealization,
    perm: &Permutation,
    a: &[C64],
    b: &[C64],
) -> Result<DMatrix<C64>> {
    check_sizes(ch, perm, &[a.len(), b.len()])?;
    let target = target_matrix(perm, a, b);
    let g0 = ch.h_d_inv() * &target * ch.h_u_inv();
    let residual = &target - ch.h_d() * &g0 * ch.h_u();
    let g = g0 + ch.h_d_inv() * residual * ch.h_u_inv();
    if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularChannel("beamformer has non-finite entries".into()));
    }
    Ok(g)
}

/// Shannon rate `log2(1 + 1/sigma_e^2)` in bits per channel use.
pub fn effective_rate(sigma_e_sq: f64) -> f64 {
    (1.0 / sigma_e_sq).ln_1p() / std::f64::consts::LN_2
}

/// Phases 0 and pi on the two members of each exchanging pair. With
/// `fallback`, non-pairwise patterns alternate 0/pi along each cycle.
pub fn counter_phases(perm: &Permutation, fallback: bool) -> Result<Vec<f64>> {
    if !is_pairwise(perm) && !fallback {
        return Err(Error::SchemeMismatch(format!(
            "counter-phase needs a pairwise pattern, {perm} is not"
        )));
    }
    let mut phases = vec![0.0; perm.n()];
    for cycle in perm.cycles() {
        for (k, &j) in cycle.iter().enumerate() {
            phases[j] = if k % 2 == 1 { PI } else { 0.0 };
        }
    }
    Ok(phases)
}

/// One phase vector with entries drawn uniformly from `{0, 2pi/M, ..., 2(M-1)pi/M}`.
pub fn binned_phases<R: Rng + ?Sized>(n: usize, bins: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| 2.0 * PI * rng.random_range(0..bins) as f64 / bins as f64)
        .collect()
}

struct Candidate {
    sigma_e_sq: f64,
    phases_a: Vec<f64>,
    b: Vec<C64>,
}

/// Grid search over `beta` for one phase assignment, updating `best`.
fn search_grid(
    model: &PowerModel,
    phases_a: &[f64],
    b_dir: &[C64],
    grid: &[f64],
    prune: bool,
    best: &mut Option<Candidate>,
) -> Result<()> {
    let form = model.trial(phases_a, b_dir)?;
    for &beta in grid {
        if prune {
            if let Some(cur) = best.as_ref() {
                if !form.may_improve(beta, cur.sigma_e_sq) {
                    continue;
                }
            }
        }
        let s = form.at(beta).solve()?;
        if best.as_ref().map_or(true, |cur| s < cur.sigma_e_sq) {
            *best = Some(Candidate {
                sigma_e_sq: s,
                phases_a: phases_a.to_vec(),
                b: b_dir.iter().map(|z| z * beta).collect(),
            });
        }
    }
    Ok(())
}

/// Solves the relay design for `perm` under `scheme`.
pub fn design(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    scheme: &SchemeConfig,
) -> Result<RelayDesign> {
    params.validate()?;
    scheme.validate()?;
    let n = ch.n();
    let model = PowerModel::new(ch, perm, params)?;
    let zero_phase = vec![0.0; n];
    let real_dir = vec![C64::new(1.0, 0.0); n];
    let no_b = [0.0];
    let mut best = None;

    match scheme.kind {
        SchemeKind::BasicReal => {
            search_grid(&model, &zero_phase, &real_dir, &no_b, false, &mut best)?;
        }
        SchemeKind::CounterPhase => {
            let phases = counter_phases(perm, scheme.counter_fallback)?;
            search_grid(&model, &phases, &real_dir, &no_b, false, &mut best)?;
        }
        SchemeKind::NcReal => {
            search_grid(&model, &zero_phase, &real_dir, &scheme.b_grid, scheme.prune, &mut best)?;
        }
        SchemeKind::RandomPhase | SchemeKind::NcRandomPhase => {
            let nc = scheme.kind == SchemeKind::NcRandomPhase;
            let grid: &[f64] = if nc { &scheme.b_grid } else { &no_b };
            for t in 0..scheme.trials {
                let (phases_a, b_dir) = if t == 0 && scheme.zero_phase_trial {
                    (zero_phase.clone(), real_dir.clone())
                } else {
                    let mut rng =
                        streams::substream(scheme.rng_seed, &[streams::TAG_TRIAL, t as u64]);
                    let pa = binned_phases(n, scheme.phase_bins, &mut rng);
                    let dir = if nc {
                        binned_phases(n, scheme.phase_bins, &mut rng)
                            .into_iter()
                            .map(|phi| C64::from_polar(1.0, phi))
                            .collect()
                    } else {
                        real_dir.clone()
                    };
                    (pa, dir)
                };
                search_grid(&model, &phases_a, &b_dir, grid, scheme.prune, &mut best)?;
            }
        }
    }

    let best = best.ok_or_else(|| Error::InfeasiblePower("no candidate evaluated".into()))?;
    finalize(ch, perm, params, best)
}

fn finalize(
    ch: &ChannelRealization,
    perm: &Permutation,
    params: &SystemParams,
    best: Candidate,
) -> Result<RelayDesign> {
    let (a, b) = compute_gains_with(ch, perm, params, best.sigma_e_sq, &best.phases_a, &best.b)?;
    let g = build_beamformer(ch, perm, &a, &b)?;
    let achieved_power = relay_power(&g, ch, params);
    Ok(RelayDesign {
        permutation: perm.clone(),
        a,
        b,
        sigma_e_sq: best.sigma_e_sq,
        g,
        achieved_power,
    })
}
