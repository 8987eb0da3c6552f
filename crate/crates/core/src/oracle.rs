//! Symbol-level check of a relay design.
//!
//! Sends i.i.d. unit-power complex Gaussian symbols through
//! `y = H_u x + u`, the relay output `G y` and `r = H_d G y + w`, lets every
//! station divide by its gain `a_j` and (optionally) subtract its own echo
//! `b_j x_j`, then measures the error against the wanted symbol at unit gain.
//! A least squares regression of each output on all transmitted symbols splits
//! out leakage from other stations and the self echo. Nothing here uses the
//! analytic formulas that built the design.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;

use crate::montecarlo::complex_gaussian;
use crate::relay::{ChannelRealization, RelayDesign, SystemParams};
use crate::C64;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Stations subtract their own known symbol scaled by `b_j`.
    pub cancel_self: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { cancel_self: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub num_symbols: usize,
    /// Empirical power of the wanted symbol.
    pub signal_power: Vec<f64>,
    /// Mean `|output - wanted symbol|^2`: noise, leakage, uncancelled echo and gain error.
    pub noise_interference_power: Vec<f64>,
    /// Regression coefficient of the wanted symbol; 1 for an exact design.
    pub wanted_gain: Vec<C64>,
    pub sinr: Vec<f64>,
    /// Power from stations other than the source and the receiver itself.
    pub residual_interference: Vec<f64>,
    /// Power of the receiver's own symbol left in its output.
    pub self_interference: Vec<f64>,
    /// Empirical `E ||G y||^2`.
    pub relay_power: f64,
}

/// Runs `num_symbols` symbols through the design. Noise powers come from `params`
/// and may be zero.
pub fn simulate_slot<R: Rng + ?Sized>(
    design: &RelayDesign,
    ch: &ChannelRealization,
    params: &SystemParams,
    num_symbols: usize,
    rng: &mut R,
    opts: SimOptions,
) -> SlotTrace {
    let n = ch.n();
    assert_eq!(design.a.len(), n, "design size does not match channel");
    assert!(num_symbols > 0, "need at least one symbol");
    let src = design.permutation.source_of().to_vec();

    // Accumulators: X^H X, X^H r_j, sum |r_j|^2, sum ||G y||^2.
    let mut gram = DMatrix::<C64>::zeros(n, n);
    let mut cross = DMatrix::<C64>::zeros(n, n); // column j = X^H r_j
    let mut out_energy = vec![0.0; n];
    let mut relay_energy = 0.0;

    let mut done = 0;
    while done < num_symbols {
        let s = CHUNK.min(num_symbols - done);
        let x = DMatrix::from_fn(n, s, |_, _| complex_gaussian(rng, 1.0));
        let u = DMatrix::from_fn(n, s, |_, _| complex_gaussian(rng, params.sigma_r_sq));
        let w = DMatrix::from_fn(n, s, |_, _| complex_gaussian(rng, params.sigma_sq));
        let relay_out = &design.g * (ch.h_u() * &x + u);
        relay_energy += relay_out.norm_squared();
        let mut r = ch.h_d() * &relay_out + w;
        for j in 0..n {
            let inv_a = design.a[j].inv();
            let echo = design.b[j];
            for t in 0..s {
                let mut v = r[(j, t)] * inv_a;
                if opts.cancel_self {
                    v -= echo * x[(j, t)];
                }
                r[(j, t)] = v;
            }
        }
        gram += &x * x.adjoint();
        cross += x.conjugate() * r.transpose();
        for j in 0..n {
            out_energy[j] += r.row(j).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        done += s;
    }
    // gram holds sum x x^H; the normal equations need X^H X = conj(gram).
    let xhx = gram.conjugate();
    let lu = xhx.clone().lu();
    let count = num_symbols as f64;

    let mut trace = SlotTrace {
        num_symbols,
        signal_power: Vec::with_capacity(n),
        noise_interference_power: Vec::with_capacity(n),
        wanted_gain: Vec::with_capacity(n),
        sinr: Vec::with_capacity(n),
        residual_interference: Vec::with_capacity(n),
        self_interference: Vec::with_capacity(n),
        relay_power: relay_energy / count,
    };
    for j in 0..n {
        let c = cross.column(j).into_owned();
        let beta = lu.solve(&c).expect("symbol Gram matrix is singular");
        let i = src[j];
        let px = |k: usize| xhx[(k, k)].re / count;
        let signal = px(i);
        // sum |r - x_i|^2 = sum|r|^2 - 2 Re(c_i) + sum|x_i|^2
        let rest = (out_energy[j] - 2.0 * c[i].re + xhx[(i, i)].re) / count;
        let leak: f64 = (0..n)
            .filter(|&k| k != i && k != j)
            .map(|k| beta[k].norm_sqr() * px(k))
            .sum();
        trace.signal_power.push(signal);
        trace.noise_interference_power.push(rest.max(0.0));
        trace.wanted_gain.push(beta[i]);
        trace.sinr.push(signal / rest.max(f64::MIN_POSITIVE));
        trace.residual_interference.push(leak);
        trace.self_interference.push(beta[j].norm_sqr() * px(j));
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Sinr,
    RelayPower,
    Fairness,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Sinr => "sinr",
            Check::RelayPower => "relay-power",
            Check::Fairness => "fairness",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckFailure {
    pub check: Check,
    /// 0-based station, when the check is per station.
    pub station: Option<usize>,
    pub expected: f64,
    pub observed: f64,
}

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check={}", self.check)?;
        if let Some(s) = self.station {
            write!(f, " station={}", s + 1)?;
        }
        write!(f, " expected={:e} observed={:e}", self.expected, self.observed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub trace: SlotTrace,
    pub failures: Vec<CheckFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Simulates the design and checks, at relative `tolerance`: SINR against
/// `1 / sigma_e^2` per station, relay power against `p`, and the spread of
/// SINR across stations.
pub fn verify_design<R: Rng + ?Sized>(
    design: &RelayDesign,
    ch: &ChannelRealization,
    params: &SystemParams,
    num_symbols: usize,
    tolerance: f64,
    rng: &mut R,
) -> VerifyReport {
    let trace = simulate_slot(design, ch, params, num_symbols, rng, SimOptions::default());
    let mut failures = Vec::new();
    let want = 1.0 / design.sigma_e_sq;
    for (j, &s) in trace.sinr.iter().enumerate() {
        if (s / want - 1.0).abs() > tolerance {
            failures.push(CheckFailure {
                check: Check::Sinr,
                station: Some(j),
                expected: want,
                observed: s,
            });
        }
    }
    if (trace.relay_power / params.p - 1.0).abs() > tolerance {
        failures.push(CheckFailure {
            check: Check::RelayPower,
            station: None,
            expected: params.p,
            observed: trace.relay_power,
        });
    }
    let (lo_j, lo) = trace
        .sinr
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, s)| if s < acc.1 { (j, s) } else { acc });
    let (hi_j, hi) = trace
        .sinr
        .iter()
        .cloned()
        .enumerate()
        .fold((0, 0.0), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc });
    if hi / lo - 1.0 > tolerance {
        let worst = if (hi / want - 1.0).abs() >= (lo / want - 1.0).abs() {
            (hi_j, hi)
        } else {
            (lo_j, lo)
        };
        failures.push(CheckFailure {
            check: Check::Fairness,
            station: Some(worst.0),
            expected: want,
            observed: worst.1,
        });
    }
    VerifyReport { trace, failures }
}
