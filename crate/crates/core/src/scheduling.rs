//! Fair-switching weights and throughput, and compilation of general traffic
//! demands onto the slots of a condensed derangement set.

use std::fmt;

use crate::combinatorics::{CondensedSet, Permutation};
use crate::error::{Error, Result};

/// Slot counts `k_n = c / r_n`, so that every derangement carries `c` units per pair.
pub fn fair_weights(rates: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParams(format!("traffic amount must be positive, got {c}")));
    }
    check_rates(rates)?;
    Ok(rates.iter().map(|r| c / r).collect())
}

/// Per-station throughput of a round over `n - 1` derangements with the given
/// rates: `(n - 1) / sum(1 / r_n)`.
pub fn fair_throughput(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::InvalidParams("no rates given".into()));
    }
    check_rates(rates)?;
    let inv: f64 = rates.iter().map(|r| 1.0 / r).sum();
    Ok(rates.len() as f64 / inv)
}

fn check_rates(rates: &[f64]) -> Result<()> {
    match rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        Some(r) => Err(Error::InvalidParams(format!("rates must be positive, got {r}"))),
        None => Ok(()),
    }
}

/// One message from `source` to every station in `destinations` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub source: usize,
    pub destinations: Vec<usize>,
    pub label: String,
    pub amount: f64,
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dests: Vec<String> = self.destinations.iter().map(|d| (d + 1).to_string()).collect();
        write!(f, "{}:{}->{{{}}}", self.label, self.source + 1, dests.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficDemand {
    pub n: usize,
    pub flows: Vec<Flow>,
}

impl TrafficDemand {
    pub fn new(n: usize, flows: Vec<Flow>) -> Result<Self> {
        for f in &flows {
            let bad = |reason: String| Error::DemandInfeasible {
                flow: f.to_string(),
                reason,
            };
            if f.source >= n {
                return Err(bad(format!("source outside 1..={n}")));
            }
            if f.destinations.is_empty() {
                return Err(bad("empty destination set".into()));
            }
            if f.destinations.contains(&f.source) {
                return Err(bad("destination set contains the source".into()));
            }
            if f.destinations.iter().any(|&d| d >= n) {
                return Err(bad(format!("destination outside 1..={n}")));
            }
            if !(f.amount > 0.0 && f.amount.is_finite()) {
                return Err(bad("amount must be positive".into()));
            }
        }
        Ok(Self { n, flows })
    }

    /// Distinct unit messages for every ordered pair, labelled `s{i}t{j}`.
    pub fn full_unicast(n: usize) -> Self {
        let flows = (0..n)
            .flat_map(|i| {
                (0..n).filter(move |&j| j != i).map(move |j| Flow {
                    source: i,
                    destinations: vec![j],
                    label: format!("s{}t{}", i + 1, j + 1),
                    amount: 1.0,
                })
            })
            .collect();
        Self { n, flows }
    }

    /// One message per station to all others, labelled `m{i}`.
    pub fn broadcast(n: usize) -> Self {
        let flows = (0..n)
            .map(|i| Flow {
                source: i,
                destinations: (0..n).filter(|&j| j != i).collect(),
                label: format!("m{}", i + 1),
                amount: 1.0,
            })
            .collect();
        Self { n, flows }
    }

    /// Parses one flow per line: `source destinations label [amount]`.
    ///
    /// Fields are whitespace-separated, stations are 1-based, destinations are
    /// comma-separated or `*` for every other station. `#` starts a comment.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut flows = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<(usize, &str)> = line
                .split_whitespace()
                .map(|f| (f.as_ptr() as usize - line.as_ptr() as usize + 1, f))
                .collect();
            let err = |col: usize, msg: String| Error::Parse {
                line: ln + 1,
                column: col,
                msg,
            };
            if fields.len() < 3 || fields.len() > 4 {
                return Err(err(1, "expected: source destinations label [amount]".into()));
            }
            let station = |(col, s): (usize, &str)| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(err(col, format!("'{s}' is not a 1-based station number"))),
                }
            };
            let source = station(fields[0])?;
            let (dcol, dtext) = fields[1];
            let destinations = if dtext == "*" {
                (0..n).filter(|&j| j != source).collect()
            } else {
                let mut v = Vec::new();
                let mut off = 0;
                for part in dtext.split(',') {
                    v.push(station((dcol + off, part))?);
                    off += part.len() + 1;
                }
                v
            };
            let amount = match fields.get(3) {
                Some(&(col, s)) => s
                    .parse::<f64>()
                    .map_err(|_| err(col, format!("'{s}' is not a number")))?,
                None => 1.0,
            };
            flows.push(Flow {
                source,
                destinations,
                label: fields[2].1.to_string(),
                amount,
            });
        }
        Self::new(n, flows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub derangement: Permutation,
    /// Message sent by each station (0-based index) in this slot; `None` when idle.
    pub payloads: Vec<Option<String>>,
    /// Slots given to this derangement per round (continuous).
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub slots: Vec<Slot>,
}

impl Schedule {
    /// Every `(source, destination, label)` delivered in one round.
    pub fn deliveries(&self) -> Vec<(usize, usize, String)> {
        let mut out = Vec::new();
        for slot in &self.slots {
            let targets = slot.derangement.target_of();
            for (i, p) in slot.payloads.iter().enumerate() {
                if let Some(label) = p {
                    out.push((i, targets[i], label.clone()));
                }
            }
        }
        out
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, slot) in self.slots.iter().enumerate() {
            let targets = slot.derangement.target_of();
            write!(f, "slot {} {} weight={}:", k + 1, slot.derangement, slot.weight)?;
            for (i, p) in slot.payloads.iter().enumerate() {
                match p {
                    Some(label) => write!(f, " {}->{}:{}", i + 1, targets[i] + 1, label)?,
                    None => write!(f, " {}->{}:-", i + 1, targets[i] + 1)?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Assigns, in each derangement of `set`, the message every station sends to
/// its target in that slot. Slot weights are `k_n = c_n / r_n`, with `c_n` the
/// largest amount carried in the slot.
pub fn compile_schedule(demand: &TrafficDemand, set: &CondensedSet, rates: &[f64]) -> Result<Schedule> {
    let n = set.n();
    if demand.n != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: demand.n,
        });
    }
    if rates.len() != set.members().len() {
        return Err(Error::SizeMismatch {
            expected: set.members().len(),
            found: rates.len(),
        });
    }
    check_rates(rates)?;

    let mut slots = Vec::with_capacity(n - 1);
    for (d, &rate) in set.members().iter().zip(rates) {
        let targets = d.target_of();
        let mut payloads = Vec::with_capacity(n);
        let mut amount = 0.0f64;
        for (i, &t) in targets.iter().enumerate() {
            let mut chosen: Option<&Flow> = None;
            for f in demand.flows.iter().filter(|f| f.source == i && f.destinations.contains(&t)) {
                if let Some(prev) = chosen {
                    if prev.label != f.label {
                        return Err(Error::DemandInfeasible {
                            flow: f.to_string(),
                            reason: format!(
                                "station {} already sends '{}' to station {} this round",
                                i + 1,
                                prev.label,
                                t + 1
                            ),
                        });
                    }
                }
                chosen = Some(f);
            }
            if let Some(f) = chosen {
                amount = amount.max(f.amount);
            }
            payloads.push(chosen.map(|f| f.label.clone()));
        }
        let weight = if amount > 0.0 { amount / rate } else { 0.0 };
        slots.push(Slot {
            derangement: d.clone(),
            payloads,
            weight,
        });
    }
    Ok(Schedule { slots })
}
