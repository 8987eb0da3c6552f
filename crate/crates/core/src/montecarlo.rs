//! Rayleigh channel draws and Monte Carlo throughput sweeps.
//!
//! Every realization draws its channel from a substream keyed by the
//! realization index, and every design draws its phase trials from a
//! substream keyed by (realization, scheme label, permutation). Results are
//! therefore independent of thread count and of which other schemes are in
//! the sweep. The same channel is reused across all SNR points.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::combinatorics::{CondensedSet, Permutation};
use crate::error::{Error, Result};
use crate::relay::{self, ChannelRealization, SchemeConfig, SystemParams};
use crate::scheduling::fair_throughput;
use crate::streams::{self, StreamRng};
use crate::C64;

/// Redraws allowed per realization before the channel stream is declared degenerate.
pub const REDRAW_BUDGET: usize = 1000;

#[derive(Debug, Clone)]
pub struct ChannelDraw {
    pub channel: ChannelRealization,
    /// Draws rejected for exceeding the condition bound.
    pub redraws: usize,
}

/// Circularly-symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    // Row-major draw order, so the stream layout does not depend on storage order.
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = complex_gaussian(rng, 1.0);
        }
    }
    m
}

/// I.i.d. `CN(0, 1)` uplink; the downlink is its transpose when `reciprocal`,
/// otherwise an independent draw.
pub fn draw_channel<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    reciprocal: bool,
    condition_bound: f64,
) -> Result<ChannelDraw> {
    if n < 2 {
        return Err(Error::InvalidSize {
            n,
            reason: "at least 2 stations are needed".into(),
        });
    }
    for redraws in 0..=REDRAW_BUDGET {
        let h_u = gaussian_matrix(n, rng);
        let built = if reciprocal {
            ChannelRealization::reciprocal(h_u, condition_bound)
        } else {
            let h_d = gaussian_matrix(n, rng);
            ChannelRealization::new(h_u, h_d, condition_bound)
        };
        match built {
            Ok(channel) => return Ok(ChannelDraw { channel, redraws }),
            Err(Error::SingularChannel(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateChannelStream {
        redraws: REDRAW_BUDGET,
    })
}

/// `sigma^2 = sigma_r^2 = 10^(-snr_db / 10)` for unit station power.
pub fn snr_to_noise(snr_db: f64) -> (f64, f64) {
    let s = 10f64.powf(-snr_db / 10.0);
    (s, s)
}

/// What each realization evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// One switch matrix; the recorded throughput is its rate.
    Single(Permutation),
    /// Named condensed sets; the recorded throughput is the fair-switching throughput.
    Condensed(Vec<(String, CondensedSet)>),
}

impl Selection {
    fn n(&self) -> Option<usize> {
        match self {
            Selection::Single(p) => Some(p.n()),
            Selection::Condensed(sets) => sets.first().map(|(_, s)| s.n()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n: usize,
    pub snr_points_db: Vec<f64>,
    pub num_realizations: usize,
    pub schemes: Vec<SchemeConfig>,
    pub selection: Selection,
    pub reciprocal: bool,
    pub condition_bound: f64,
    pub relay_power: f64,
    pub rng_seed: u64,
    /// Fixed channel used for every realization instead of random draws.
    pub channel_override: Option<ChannelRealization>,
}

impl SweepConfig {
    pub fn new(n: usize, selection: Selection, schemes: Vec<SchemeConfig>) -> Self {
        Self {
            n,
            snr_points_db: vec![0.0, 10.0, 20.0],
            num_realizations: 1000,
            schemes,
            selection,
            reciprocal: true,
            condition_bound: relay::DEFAULT_CONDITION_BOUND,
            relay_power: 1.0,
            rng_seed: 1,
            channel_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_realizations == 0 {
            return Err(Error::Config("num_realizations must be at least 1".into()));
        }
        if self.snr_points_db.is_empty() || self.snr_points_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr points must be finite and non-empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        for s in &self.schemes {
            s.validate()?;
        }
        match self.selection.n() {
            Some(m) if m == self.n => {}
            Some(m) => {
                return Err(Error::SizeMismatch {
                    expected: self.n,
                    found: m,
                })
            }
            None => return Err(Error::Config("no condensed sets selected".into())),
        }
        if let Some(ch) = &self.channel_override {
            if ch.n() != self.n {
                return Err(Error::SizeMismatch {
                    expected: self.n,
                    found: ch.n(),
                });
            }
        }
        if !(self.relay_power > 0.0) {
            return Err(Error::Config("relay power must be positive".into()));
        }
        Ok(())
    }

    /// `(scheme index, set name)` for every output column, scheme-major.
    fn columns(&self) -> Vec<(usize, Option<String>)> {
        let mut cols = Vec::new();
        for (s, _) in self.schemes.iter().enumerate() {
            match &self.selection {
                Selection::Single(_) => cols.push((s, None)),
                Selection::Condensed(sets) => {
                    cols.extend(sets.iter().map(|(name, _)| (s, Some(name.clone()))))
                }
            }
        }
        cols
    }

    /// Distinct switch matrices the sweep must design.
    fn permutations(&self) -> Vec<Permutation> {
        match &self.selection {
            Selection::Single(p) => vec![p.clone()],
            Selection::Condensed(sets) => {
                let mut all: Vec<Permutation> = sets
                    .iter()
                    .flat_map(|(_, s)| s.members().iter().cloned())
                    .collect();
                all.sort();
                all.dedup();
                all
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub snr_db: f64,
    pub scheme: String,
    pub set: Option<String>,
    pub mean: f64,
    pub std_err: f64,
    /// Realizations that contributed (excludes failures).
    pub realizations: usize,
    pub redraws: usize,
    pub failures: usize,
}

impl SweepCell {
    /// `scheme`, or `scheme@set` in condensed-set mode.
    pub fn label(&self) -> String {
        match &self.set {
            Some(set) => format!("{}@{}", self.scheme, set),
            None => self.scheme.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// `(snr_db, mean)` points of one labelled curve, in SNR order.
    pub fn curve(&self, label: &str) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.label() == label)
            .map(|c| (c.snr_db, c.mean))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn labels(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for c in &self.cells {
            let l = c.label();
            if !seen.contains(&l) {
                seen.push(l);
            }
        }
        seen
    }

    pub fn cell(&self, snr_db: f64, label: &str) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.snr_db == snr_db && c.label() == label)
    }
}

struct RealizationOutcome {
    redraws: usize,
    /// Indexed `[snr][column]`.
    values: Vec<Vec<Option<f64>>>,
}

fn perm_key(p: &Permutation) -> u64 {
    streams::label_hash(&p.to_string())
}

fn run_realization(
    cfg: &SweepConfig,
    r: usize,
    perms: &[Permutation],
    columns: &[(usize, Option<String>)],
) -> Result<RealizationOutcome> {
    let (channel, redraws) = match &cfg.channel_override {
        Some(ch) => (ch.clone(), 0),
        None => {
            let mut rng: StreamRng =
                streams::substream(cfg.rng_seed, &[streams::TAG_CHANNEL, r as u64]);
            let d = draw_channel(cfg.n, &mut rng, cfg.reciprocal, cfg.condition_bound)?;
            (d.channel, d.redraws)
        }
    };

    let seeded: Vec<Vec<SchemeConfig>> = cfg
        .schemes
        .iter()
        .map(|s| {
            let key = streams::label_hash(&s.label());
            perms
                .iter()
                .map(|p| {
                    let seed = streams::derive_seed(
                        cfg.rng_seed,
                        &[streams::TAG_SCHEME, r as u64, key, perm_key(p)],
                    );
                    s.clone().with_seed(seed)
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(cfg.snr_points_db.len());
    for &snr in &cfg.snr_points_db {
        let (sigma_sq, sigma_r_sq) = snr_to_noise(snr);
        let params = SystemParams::new(cfg.relay_power, sigma_sq, sigma_r_sq)?;
        // rates[scheme][perm]
        let rates: Vec<Vec<Option<f64>>> = seeded
            .iter()
            .map(|per_perm| {
                perms
                    .iter()
                    .zip(per_perm)
                    .map(|(p, s)| relay::design(&channel, p, &params, s).ok().map(|d| d.rate()))
                    .collect()
            })
            .collect();
        let row = columns
            .iter()
            .map(|(s, set)| match (&cfg.selection, set) {
                (Selection::Single(_), _) => rates[*s][0],
                (Selection::Condensed(sets), Some(name)) => {
                    let set = &sets.iter().find(|(n, _)| n == name).expect("column set").1;
                    let member_rates: Option<Vec<f64>> = set
                        .members()
                        .iter()
                        .map(|m| {
                            let k = perms.binary_search(m).expect("member designed");
                            rates[*s][k]
                        })
                        .collect();
                    member_rates.and_then(|r| fair_throughput(&r).ok())
                }
                (Selection::Condensed(_), None) => None,
            })
            .collect();
        values.push(row);
    }
    Ok(RealizationOutcome { redraws, values })
}

/// Runs the sweep. Deterministic for a given config, whatever the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let perms = cfg.permutations();
    let columns = cfg.columns();
    let outcomes: Vec<RealizationOutcome> = (0..cfg.num_realizations)
        .into_par_iter()
        .map(|r| run_realization(cfg, r, &perms, &columns))
        .collect::<Result<_>>()?;

    let redraws: usize = outcomes.iter().map(|o| o.redraws).sum();
    let mut cells = Vec::new();
    for (si, &snr) in cfg.snr_points_db.iter().enumerate() {
        for (ci, (s, set)) in columns.iter().enumerate() {
            let xs: Vec<f64> = outcomes.iter().filter_map(|o| o.values[si][ci]).collect();
            let (mean, std_err) = mean_and_stderr(&xs);
            cells.push(SweepCell {
                snr_db: snr,
                scheme: cfg.schemes[*s].label(),
                set: set.clone(),
                mean,
                std_err,
                realizations: xs.len(),
                redraws,
                failures: cfg.num_realizations - xs.len(),
            });
        }
    }
    Ok(SweepResult { cells })
}

/// Sample mean and standard error of the mean (two-pass, in input order).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `k` distinct condensed sets chosen reproducibly from `sets`, in their original order.
pub fn sample_sets(sets: &[CondensedSet], k: usize, seed: u64) -> Result<Vec<(String, CondensedSet)>> {
    if k > sets.len() {
        return Err(Error::Config(format!(
            "cannot sample {k} of {} condensed sets",
            sets.len()
        )));
    }
    let mut rng = streams::substream(seed, &[streams::TAG_SAMPLE]);
    let mut idx = index::sample(&mut rng, sets.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx
        .into_iter()
        .map(|i| (format!("Q{}", i + 1), sets[i].clone()))
        .collect())
}

/// SNR (dB) at which a non-decreasing curve first reaches `level`, by linear interpolation.
fn snr_at(curve: &[(f64, f64)], level: f64) -> Result<f64> {
    check_monotone(curve)?;
    let first = curve.first().ok_or_else(|| Error::Range("empty curve".into()))?;
    if level < first.1 {
        return Err(Error::Range(format!(
            "reference {level} below curve minimum {}",
            first.1
        )));
    }
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if level >= y0 && level <= y1 {
            if y1 == y0 {
                return Ok(x0);
            }
            return Ok(x0 + (level - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    if curve.len() == 1 && level == first.1 {
        return Ok(first.0);
    }
    Err(Error::Range(format!(
        "reference {level} above curve maximum {}",
        curve.last().map_or(f64::NAN, |p| p.1)
    )))
}

fn check_monotone(curve: &[(f64, f64)]) -> Result<()> {
    if curve.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Range("curve has non-finite points".into()));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Range("curve SNR points must be strictly increasing".into()));
    }
    if let Some(w) = curve.windows(2).find(|w| w[1].1 < w[0].1) {
        return Err(Error::Range(format!(
            "curve is not monotone between {} dB and {} dB",
            w[0].0, w[1].0
        )));
    }
    Ok(())
}

/// Horizontal gain (dB) of `curve_b` over `curve_a` at throughput `reference`:
/// positive when `curve_b` reaches the reference at lower SNR.
pub fn db_gain(curve_a: &[(f64, f64)], curve_b: &[(f64, f64)], reference: f64) -> Result<f64> {
    Ok(snr_at(curve_a, reference)? - snr_at(curve_b, reference)?)
}

/// Value of a curve at `snr_db` by linear interpolation.
pub fn interpolate(curve: &[(f64, f64)], snr_db: f64) -> Result<f64> {
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if snr_db >= x0 && snr_db <= x1 {
            return Ok(y0 + (snr_db - x0) * (y1 - y0) / (x1 - x0));
        }
    }
    match curve {
        [(x, y)] if *x == snr_db => Ok(*y),
        _ => Err(Error::Range(format!("{snr_db} dB outside the curve's SNR range"))),
    }
}

/// Formats like C's `%.{digits}g`.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const CSV_COLUMNS: &str = "snr_db,scheme_or_set,mean_throughput_bits,std_err,realizations,redraws";

/// Writes the sweep as CSV. `header` lines are emitted first, each prefixed with `# `.
pub fn write_csv<W: Write>(result: &SweepResult, header: &[String], out: &mut W) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CSV_COLUMNS}")?;
    for c in &result.cells {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(c.snr_db, 12),
            c.label(),
            fmt_sig(c.mean, 12),
            fmt_sig(c.std_err, 12),
            c.realizations,
            c.redraws
        )?;
    }
    let failed: Vec<&SweepCell> = result.cells.iter().filter(|c| c.failures > 0).collect();
    for c in failed {
        writeln!(
            out,
            "# failures snr_db={} label={} count={}",
            fmt_sig(c.snr_db, 12),
            c.label(),
            c.failures
        )?;
    }
    Ok(())
}

/// Curves read back from a sweep CSV, keyed by label.
pub fn read_csv_curves(text: &str) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let mut curves: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut saw_header = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != CSV_COLUMNS {
                return Err(Error::Parse {
                    line: ln + 1,
                    column: 1,
                    msg: format!("expected header '{CSV_COLUMNS}'"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: ln + 1,
                column: 1,
                msg: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<f64> {
            fields[k].parse().map_err(|_| Error::Parse {
                line: ln + 1,
                column: k + 1,
                msg: format!("'{}' is not a number", fields[k]),
            })
        };
        curves
            .entry(fields[1].to_string())
            .or_default()
            .push((num(0)?, num(2)?));
    }
    for pts in curves.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(curves)
}
