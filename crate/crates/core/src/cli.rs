//! `mimo-switch` command line: enumerate, design, schedule, sweep, gain, verify.
//!
//! Every output starts with a `#!` title line followed by `# key = value`
//! lines holding the full resolved configuration, seed included. Errors are
//! reported as one line on stderr:
//! `error kind=<kind> exit=<code> message="<text>"`, with exit code 1 for
//! usage and input problems and 2 for domain failures (infeasible power,
//! singular channel, infeasible demand).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::combinatorics::{
    enumerate_condensed_sets, enumerate_derangements, is_pairwise, CondensedSet, Permutation,
};
use crate::error::{Error, Result};
use crate::montecarlo::{
    self, db_gain, draw_channel, fmt_sig, interpolate, read_csv_curves, run_sweep, sample_sets,
    snr_to_noise, Selection, SweepConfig,
};
use crate::oracle::verify_design;
use crate::relay::{self, ChannelRealization, SchemeConfig, SystemParams, DEFAULT_CONDITION_BOUND};
use crate::scheduling::{compile_schedule, TrafficDemand};
use crate::streams;
use crate::C64;

pub const SEED_ENV: &str = "MIMO_SWITCH_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "mimo-switch",
    version,
    about = "Wireless MIMO switching simulator",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List derangements or condensed derangement sets.
    Enumerate(EnumerateArgs),
    /// Solve the relay beamformer for one channel and switch matrix.
    Design(DesignArgs),
    /// Compile a traffic demand onto a condensed set.
    Schedule(ScheduleArgs),
    /// Monte Carlo throughput sweep, written as CSV.
    Sweep(SweepArgs),
    /// dB gain between two curves of a sweep CSV.
    Gain(GainArgs),
    /// Check a design against a symbol-level simulation.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("what").required(true).args(["derangements", "condensed"]))]
struct EnumerateArgs {
    #[arg(long)]
    derangements: bool,
    #[arg(long)]
    condensed: bool,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    count_only: bool,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    /// Channel file (H_u block, optional blank-line-separated H_d block).
    #[arg(long, conflicts_with = "channel_inline")]
    channel: Option<PathBuf>,
    /// Inline channel, `[[1+0i, 0], [0, 1]]` or `[[H_u rows], [H_d rows]]`.
    #[arg(long)]
    channel_inline: Option<String>,
    /// Draw H_d independently instead of H_d = H_u^T.
    #[arg(long)]
    non_reciprocal: bool,
    #[arg(long, default_value_t = DEFAULT_CONDITION_BOUND)]
    condition_bound: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct LinkArgs {
    #[arg(short = 'n', long)]
    n: usize,
    /// Switch matrix as a 1-based source map, e.g. 4,3,2,1.
    #[arg(long)]
    perm: String,
    #[arg(long, default_value = "basic-real")]
    scheme: String,
    /// SNR in dB; sets sigma^2 = sigma_r^2 = 10^(-snr/10).
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
    #[arg(long)]
    sigma_sq: Option<f64>,
    #[arg(long)]
    sigma_r_sq: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long, default_value_t = 1_000_000)]
    symbols: usize,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long)]
    demand: PathBuf,
    #[arg(short = 'n', long)]
    n: usize,
    /// 1-based index into the enumerated condensed sets.
    #[arg(long, default_value_t = 1)]
    set: usize,
    /// Comma-separated rate per derangement (default: all 1).
    #[arg(long)]
    rates: Option<String>,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'n', long)]
    n: Option<usize>,
    /// SNR points: comma list or start:stop:step.
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Comma-separated scheme labels.
    #[arg(long)]
    schemes: Option<String>,
    /// Single switch matrix (1-based source map).
    #[arg(long, conflicts_with = "sets")]
    perm: Option<String>,
    /// Condensed sets: all, comma list of 1-based indices, or sample:K.
    #[arg(long)]
    sets: Option<String>,
    #[arg(long)]
    reciprocal: Option<bool>,
    #[arg(long)]
    condition_bound: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GainArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Label of the reference curve.
    #[arg(long)]
    base: String,
    /// Label of the compared curve.
    #[arg(long)]
    curve: String,
    /// Read the compared curve from this file instead of --csv.
    #[arg(long)]
    other_csv: Option<PathBuf>,
    /// Reference throughput is the base curve's value at this SNR.
    #[arg(long, default_value_t = 10.0)]
    ref_snr: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<S: AsRef<str>>(argv: &[S], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error kind=usage exit=1 message={:?}", first);
            return 1;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = if e.is_domain() { 2 } else { 1 };
            let _ = writeln!(
                err,
                "error kind={} exit={code} message={:?}",
                e.kind(),
                e.to_string()
            );
            code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Enumerate(a) => cmd_enumerate(a, out),
        Command::Design(a) => cmd_design(a, out),
        Command::Schedule(a) => cmd_schedule(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Gain(a) => cmd_gain(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    }
}

fn header(out: &mut dyn Write, command: &str, entries: &[(&str, String)]) -> Result<()> {
    writeln!(out, "#! mimo-switch {command}")?;
    for (k, v) in entries {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

fn matrix_text(p: &Permutation) -> String {
    p.matrix()
        .iter()
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}

fn cmd_enumerate(a: EnumerateArgs, out: &mut dyn Write) -> Result<()> {
    let kind = if a.condensed { "condensed" } else { "derangements" };
    let format = if a.format == Format::Csv { "csv" } else { "text" };
    header(
        out,
        "enumerate",
        &[
            ("kind", kind.into()),
            ("n", a.n.to_string()),
            ("format", format.into()),
            ("count_only", a.count_only.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    if a.derangements {
        let ders = enumerate_derangements(a.n)?;
        if a.count_only {
            writeln!(out, "{}", ders.len())?;
            return Ok(());
        }
        if a.format == Format::Csv {
            writeln!(out, "index,source_of,pairwise,matrix")?;
        }
        for (k, d) in ders.iter().enumerate() {
            let src = d.to_string();
            match a.format {
                Format::Csv => writeln!(
                    out,
                    "{},\"{}\",{},{}",
                    k + 1,
                    &src[1..src.len() - 1],
                    is_pairwise(d),
                    matrix_text(d)
                )?,
                Format::Text => {
                    let tag = if is_pairwise(d) { "pairwise" } else { "non-pairwise" };
                    writeln!(out, "D{} {} {} {}", k + 1, src, tag, matrix_text(d))?;
                }
            }
        }
    } else {
        let sets = enumerate_condensed_sets(a.n)?;
        if a.count_only {
            writeln!(out, "{}", sets.len())?;
            return Ok(());
        }
        if a.format == Format::Csv {
            writeln!(out, "set,member,source_of,pairwise,matrix")?;
        }
        for (k, s) in sets.iter().enumerate() {
            if a.format == Format::Text {
                writeln!(out, "Q{} {}", k + 1, s)?;
            }
            for (m, d) in s.members().iter().enumerate() {
                let src = d.to_string();
                match a.format {
                    Format::Csv => writeln!(
                        out,
                        "{},{},\"{}\",{},{}",
                        k + 1,
                        m + 1,
                        &src[1..src.len() - 1],
                        is_pairwise(d),
                        matrix_text(d)
                    )?,
                    Format::Text => writeln!(out, "  {} {}", src, matrix_text(d))?,
                }
            }
        }
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim())
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse()
                .map_err(|_| Error::Config(format!("'{x}' is not a valid {what}")))
        })
        .collect()
}

fn parse_perm(s: &str, n: usize) -> Result<Permutation> {
    let v: Vec<usize> = parse_list(s, "station number")?;
    let p = Permutation::derangement_from_one_based(&v)?;
    if p.n() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: p.n(),
        });
    }
    Ok(p)
}

/// `0,5,10` or `0:20:2` (inclusive).
pub fn parse_snr_points(s: &str) -> Result<Vec<f64>> {
    if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad SNR range '{s}'")))
            })
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(Error::Config(format!("SNR range '{s}' must be start:stop:step")));
        };
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("bad SNR range '{s}'")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=count).map(|k| start + k as f64 * step).collect())
    } else {
        parse_list(s, "SNR value")
    }
}

// ---- channel files ----

fn fmt_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

fn fmt_complex_sig(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", fmt_sig(z.re, 12), sign, fmt_sig(z.im.abs(), 12))
}

/// Parses `a+bi`, `a-bi`, `a`, or `bi`.
pub fn parse_complex(s: &str) -> Option<C64> {
    let s = s.trim();
    let Some(body) = s.strip_suffix('i') else {
        return s.parse().ok().map(|re| C64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re: f64 = body[..k].parse().ok()?;
            let im: f64 = match &body[k..] {
                "+" => 1.0,
                "-" => -1.0,
                t => t.parse().ok()?,
            };
            Some(C64::new(re, im))
        }
        None => {
            let im: f64 = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                t => t.parse().ok()?,
            };
            Some(C64::new(0.0, im))
        }
    }
}

/// Text form of a channel: one row per line, H_u block, blank line, H_d block.
/// Numbers use the shortest round-trip representation.
pub fn channel_to_text(ch: &ChannelRealization) -> String {
    let mut s = String::new();
    for (k, m) in [ch.h_u(), ch.h_d()].into_iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| fmt_complex(m[(i, j)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn parse_channel_text(text: &str, condition_bound: f64) -> Result<ChannelRealization> {
    let mut blocks: Vec<Vec<(usize, Vec<C64>)>> = vec![Vec::new()];
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if !blocks.last().expect("block").is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        let mut row = Vec::new();
        for (col, tok) in line.split_whitespace().enumerate() {
            row.push(parse_complex(tok).ok_or_else(|| Error::Parse {
                line: ln + 1,
                column: col + 1,
                msg: format!("'{tok}' is not a complex number (expected a+bi)"),
            })?);
        }
        blocks.last_mut().expect("block").push((ln + 1, row));
    }
    blocks.retain(|b| !b.is_empty());
    if blocks.is_empty() || blocks.len() > 2 {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            msg: format!("expected 1 or 2 matrix blocks, found {}", blocks.len()),
        });
    }
    let n = blocks[0].len();
    let to_matrix = |rows: &[(usize, Vec<C64>)], name: &str| -> Result<DMatrix<C64>> {
        if rows.len() != n {
            return Err(Error::Parse {
                line: rows[0].0,
                column: 1,
                msg: format!("{name} block has {} rows, expected {n}", rows.len()),
            });
        }
        for (ln, r) in rows {
            if r.len() != n {
                return Err(Error::Parse {
                    line: *ln,
                    column: r.len().min(n) + 1,
                    msg: format!("{name} row has {} entries, expected {n}", r.len()),
                });
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i].1[j]))
    };
    let h_u = to_matrix(&blocks[0], "uplink")?;
    match blocks.get(1) {
        Some(b) => ChannelRealization::new(h_u, to_matrix(b, "downlink")?, condition_bound),
        None => ChannelRealization::reciprocal(h_u, condition_bound),
    }
}

#[derive(Debug)]
enum Nested {
    Leaf(String, usize),
    List(Vec<Nested>, usize),
}

fn nested_depth(v: &Nested) -> usize {
    match v {
        Nested::Leaf(..) => 0,
        Nested::List(items, _) => 1 + items.iter().map(nested_depth).max().unwrap_or(0),
    }
}

fn parse_nested(text: &str) -> Result<Nested> {
    let err = |column: usize, msg: &str| Error::Parse {
        line: 1,
        column,
        msg: msg.to_string(),
    };
    let mut stack: Vec<(Vec<Nested>, usize)> = Vec::new();
    let mut root = None;
    let mut atom = String::new();
    let mut atom_col = 0;
    let flush = |atom: &mut String, col: usize, stack: &mut Vec<(Vec<Nested>, usize)>| -> Result<()> {
        let t = atom.trim();
        if !t.is_empty() {
            match stack.last_mut() {
                Some(top) => top.0.push(Nested::Leaf(t.to_string(), col)),
                None => return Err(err(col, "entry outside brackets")),
            }
        }
        atom.clear();
        Ok(())
    };
    for (k, ch) in text.char_indices() {
        let col = k + 1;
        match ch {
            '[' => {
                if root.is_some() {
                    return Err(err(col, "trailing input after matrix"));
                }
                flush(&mut atom, atom_col, &mut stack)?;
                stack.push((Vec::new(), col));
            }
            ']' => {
                flush(&mut atom, atom_col, &mut stack)?;
                let (items, open) = stack.pop().ok_or_else(|| err(col, "unbalanced ']'"))?;
                let node = Nested::List(items, open);
                match stack.last_mut() {
                    Some(top) => top.0.push(node),
                    None => root = Some(node),
                }
            }
            ',' => flush(&mut atom, atom_col, &mut stack)?,
            c if c.is_whitespace() && atom.trim().is_empty() => {}
            c => {
                if root.is_some() {
                    return Err(err(col, "trailing input after matrix"));
                }
                if atom.is_empty() {
                    atom_col = col;
                }
                atom.push(c);
            }
        }
    }
    if let Some((_, open)) = stack.last() {
        return Err(err(*open, "unbalanced '['"));
    }
    root.ok_or_else(|| err(1, "empty channel"))
}

/// Parses a bracketed channel: `[[row], ...]` for H_u alone (H_d = H_u^T) or
/// `[[[H_u rows]], [[H_d rows]]]` for both blocks.
pub fn parse_channel_inline(text: &str, condition_bound: f64) -> Result<ChannelRealization> {
    let root = parse_nested(text)?;
    let blocks: Vec<&Nested> = match (&root, nested_depth(&root)) {
        (Nested::List(..), 2) => vec![&root],
        (Nested::List(items, _), 3) => items.iter().collect(),
        (_, _) => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                msg: "expected a list of rows or a pair of matrices".into(),
            })
        }
    };
    let mut lines = String::new();
    let mut positions = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        if b > 0 {
            lines.push('\n');
            positions.push(Vec::new());
        }
        let Nested::List(rows, _) = block else {
            unreachable!("depth checked above")
        };
        for row in rows {
            let (entries, open) = match row {
                Nested::List(e, open) => (e, *open),
                Nested::Leaf(_, col) => {
                    return Err(Error::Parse {
                        line: 1,
                        column: *col,
                        msg: "expected a bracketed row".into(),
                    })
                }
            };
            let mut cols = Vec::new();
            let mut toks = Vec::new();
            for e in entries {
                match e {
                    Nested::Leaf(t, col) => {
                        toks.push(t.replace(' ', ""));
                        cols.push(*col);
                    }
                    Nested::List(_, col) => {
                        return Err(Error::Parse {
                            line: 1,
                            column: *col,
                            msg: "unexpected nested list".into(),
                        })
                    }
                }
            }
            if toks.is_empty() {
                cols.push(open);
            }
            lines.push_str(&toks.join(" "));
            lines.push('\n');
            positions.push(cols);
        }
    }
    parse_channel_text(&lines, condition_bound).map_err(|e| match e {
        Error::Parse { line, column, msg } => {
            let col = positions
                .get(line - 1)
                .and_then(|c| c.get(column - 1).or(c.last()))
                .copied()
                .unwrap_or(1);
            Error::Parse {
                line: 1,
                column: col,
                msg,
            }
        }
        other => other,
    })
}

/// Reads a channel file; a missing H_d block means `H_d = H_u^T`.
pub fn load_channel_file(path: &Path, condition_bound: f64) -> Result<ChannelRealization> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_channel_text(&text, condition_bound)
}

// ---- design / verify ----

struct Link {
    perm: Permutation,
    scheme: SchemeConfig,
    params: SystemParams,
    channel: ChannelRealization,
    entries: Vec<(&'static str, String)>,
}

fn resolve_link(a: &LinkArgs) -> Result<Link> {
    let perm = parse_perm(&a.perm, a.n)?;
    let scheme: SchemeConfig = a.scheme.parse()?;
    let (s, sr) = snr_to_noise(a.snr);
    let params = SystemParams::new(a.p, a.sigma_sq.unwrap_or(s), a.sigma_r_sq.unwrap_or(sr))?;
    let c = &a.channel;
    let channel = match (&c.channel, &c.channel_inline) {
        (Some(path), _) => load_channel_file(path, c.condition_bound)?,
        (None, Some(text)) => parse_channel_inline(text, c.condition_bound)?,
        (None, None) => {
            let mut rng = streams::substream(c.seed, &[streams::TAG_CHANNEL, 0]);
            draw_channel(a.n, &mut rng, !c.non_reciprocal, c.condition_bound)?.channel
        }
    };
    if channel.n() != a.n {
        return Err(Error::SizeMismatch {
            expected: a.n,
            found: channel.n(),
        });
    }
    let scheme = scheme.with_seed(streams::derive_seed(c.seed, &[streams::TAG_SCHEME]));
    let entries = vec![
        ("n", a.n.to_string()),
        ("perm", perm.to_string()),
        ("scheme", scheme.label()),
        ("p", params.p.to_string()),
        ("sigma_sq", params.sigma_sq.to_string()),
        ("sigma_r_sq", params.sigma_r_sq.to_string()),
        (
            "channel",
            match (&c.channel, &c.channel_inline) {
                (Some(p), _) => p.display().to_string(),
                (None, Some(t)) => t.clone(),
                (None, None) => "drawn".to_string(),
            },
        ),
        ("reciprocal", (!c.non_reciprocal).to_string()),
        ("condition_bound", c.condition_bound.to_string()),
        ("seed", c.seed.to_string()),
    ];
    Ok(Link {
        perm,
        scheme,
        params,
        channel,
        entries,
    })
}

fn write_matrix(out: &mut dyn Write, name: &str, m: &DMatrix<C64>) -> Result<()> {
    writeln!(out, "{name} =")?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_complex_sig(m[(i, j)])).collect();
        writeln!(out, "  {}", row.join(" "))?;
    }
    Ok(())
}

fn cmd_design(a: DesignArgs, out: &mut dyn Write) -> Result<()> {
    let link = resolve_link(&a.link)?;
    header(out, "design", &link.entries)?;
    let d = relay::design(&link.channel, &link.perm, &link.params, &link.scheme)?;
    writeln!(out, "sigma_e_sq = {}", fmt_sig(d.sigma_e_sq, 12))?;
    for j in 0..d.a.len() {
        writeln!(out, "rate station={} bits={}", j + 1, fmt_sig(d.rate(), 12))?;
    }
    writeln!(out, "achieved_power = {}", fmt_sig(d.achieved_power, 12))?;
    let diag = |v: &[C64]| v.iter().map(|z| fmt_complex_sig(*z)).collect::<Vec<_>>().join(" ");
    writeln!(out, "A = {}", diag(&d.a))?;
    writeln!(out, "B = {}", diag(&d.b))?;
    write_matrix(out, "G", &d.g)?;
    write_channel_comment(out, &link.channel)
}

fn write_channel_comment(out: &mut dyn Write, ch: &ChannelRealization) -> Result<()> {
    writeln!(out, "# channel")?;
    for line in channel_to_text(ch).lines() {
        if line.is_empty() {
            writeln!(out, "#")?;
        } else {
            writeln!(out, "#   {line}")?;
        }
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> Result<()> {
    let link = resolve_link(&a.link)?;
    let mut entries = link.entries.clone();
    entries.push(("symbols", a.symbols.to_string()));
    entries.push(("tolerance", a.tolerance.to_string()));
    header(out, "verify", &entries)?;
    if a.symbols == 0 {
        return Err(Error::Config("need at least one symbol".into()));
    }
    let d = relay::design(&link.channel, &link.perm, &link.params, &link.scheme)?;
    let mut rng = streams::substream(a.link.channel.seed, &[streams::TAG_SYMBOLS]);
    let report = verify_design(&d, &link.channel, &link.params, a.symbols, a.tolerance, &mut rng);
    writeln!(out, "expected_sinr = {}", fmt_sig(d.snr(), 12))?;
    for (j, s) in report.trace.sinr.iter().enumerate() {
        writeln!(
            out,
            "station={} sinr={} residual_interference={}",
            j + 1,
            fmt_sig(*s, 12),
            fmt_sig(report.trace.residual_interference[j], 12)
        )?;
    }
    writeln!(out, "relay_power = {}", fmt_sig(report.trace.relay_power, 12))?;
    for f in &report.failures {
        writeln!(out, "FAIL {f}")?;
    }
    writeln!(out, "result = {}", if report.passed() { "pass" } else { "fail" })?;
    write_channel_comment(out, &link.channel)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{} verification check(s) failed",
            report.failures.len()
        )))
    }
}

// ---- schedule ----

fn cmd_schedule(a: ScheduleArgs, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&a.demand)
        .map_err(|e| Error::Io(format!("{}: {e}", a.demand.display())))?;
    let demand = TrafficDemand::parse(&text, a.n)?;
    let sets = enumerate_condensed_sets(a.n)?;
    let set = sets.get(a.set.wrapping_sub(1)).ok_or_else(|| {
        Error::Config(format!("set {} out of range 1..={}", a.set, sets.len()))
    })?;
    let rates = match &a.rates {
        Some(r) => parse_list(r, "rate")?,
        None => vec![1.0; a.n - 1],
    };
    header(
        out,
        "schedule",
        &[
            ("demand", a.demand.display().to_string()),
            ("n", a.n.to_string()),
            ("set", format!("Q{} {}", a.set, set)),
            (
                "rates",
                rates.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("seed", a.seed.to_string()),
        ],
    )?;
    let schedule = compile_schedule(&demand, set, &rates)?;
    write!(out, "{schedule}")?;
    Ok(())
}

// ---- sweep ----

const SWEEP_KEYS: &[&str] = &[
    "n",
    "snr_db",
    "realizations",
    "schemes",
    "perm",
    "sets",
    "reciprocal",
    "condition_bound",
    "p",
    "seed",
];

/// Flat `key = value` lines; `#` comments; unknown or repeated keys are errors.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: ln + 1,
            column: 1,
            msg: "expected key = value".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !SWEEP_KEYS.contains(&k) {
            return Err(Error::Config(format!("unknown config key '{k}' on line {}", ln + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("duplicate config key '{k}' on line {}", ln + 1)));
        }
    }
    Ok(map)
}

/// Resolved sweep configuration plus its canonical `key = value` description.
pub struct ResolvedSweep {
    pub config: SweepConfig,
    pub entries: Vec<(String, String)>,
}

/// Builds a sweep from config-file entries (flags already merged in).
pub fn resolve_sweep(map: &BTreeMap<String, String>) -> Result<ResolvedSweep> {
    let get = |k: &str| map.get(k).map(String::as_str);
    let num = |k: &str, default: &str| -> Result<String> { Ok(get(k).unwrap_or(default).to_string()) };
    let parse_err = |k: &str, v: &str| Error::Config(format!("bad value '{v}' for {k}"));

    let n_text = get("n").ok_or_else(|| Error::Config("missing n".into()))?;
    let n: usize = n_text.parse().map_err(|_| parse_err("n", n_text))?;
    let snr_text = num("snr_db", "0:20:2")?;
    let snr_points_db = parse_snr_points(&snr_text)?;
    let real_text = num("realizations", "1000")?;
    let num_realizations: usize = real_text.parse().map_err(|_| parse_err("realizations", &real_text))?;
    let schemes_text = num("schemes", "basic-real")?;
    let schemes: Vec<SchemeConfig> = schemes_text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    let recip_text = num("reciprocal", "true")?;
    let reciprocal: bool = recip_text.parse().map_err(|_| parse_err("reciprocal", &recip_text))?;
    let cb_text = num("condition_bound", &DEFAULT_CONDITION_BOUND.to_string())?;
    let condition_bound: f64 = cb_text.parse().map_err(|_| parse_err("condition_bound", &cb_text))?;
    let p_text = num("p", "1")?;
    let relay_power: f64 = p_text.parse().map_err(|_| parse_err("p", &p_text))?;
    let seed_text = match get("seed") {
        Some(s) => s.to_string(),
        None => std::env::var(SEED_ENV).unwrap_or_else(|_| "1".into()),
    };
    let rng_seed: u64 = seed_text.parse().map_err(|_| parse_err("seed", &seed_text))?;

    let (selection, sel_key, sel_val) = match (get("perm"), get("sets")) {
        (Some(_), Some(_)) => return Err(Error::Config("perm and sets are exclusive".into())),
        (Some(p), None) => (Selection::Single(parse_perm(p, n)?), "perm", p.to_string()),
        (None, sets) => {
            let spec = sets.unwrap_or("all");
            let all = enumerate_condensed_sets(n)?;
            let chosen: Vec<(String, CondensedSet)> = if spec == "all" {
                all.iter()
                    .enumerate()
                    .map(|(k, s)| (format!("Q{}", k + 1), s.clone()))
                    .collect()
            } else if let Some(k) = spec.strip_prefix("sample:") {
                let k: usize = k.parse().map_err(|_| parse_err("sets", spec))?;
                sample_sets(&all, k, rng_seed)?
            } else {
                let idx: Vec<usize> = parse_list(spec, "set index")?;
                idx.iter()
                    .map(|&i| {
                        all.get(i.wrapping_sub(1))
                            .map(|s| (format!("Q{i}"), s.clone()))
                            .ok_or_else(|| {
                                Error::Config(format!("set {i} out of range 1..={}", all.len()))
                            })
                    })
                    .collect::<Result<_>>()?
            };
            (Selection::Condensed(chosen), "sets", spec.to_string())
        }
    };

    let mut config = SweepConfig::new(n, selection, schemes.clone());
    config.snr_points_db = snr_points_db;
    config.num_realizations = num_realizations;
    config.reciprocal = reciprocal;
    config.condition_bound = condition_bound;
    config.relay_power = relay_power;
    config.rng_seed = rng_seed;
    config.validate()?;

    let entries = vec![
        ("n".to_string(), n.to_string()),
        ("snr_db".to_string(), snr_text),
        ("realizations".to_string(), num_realizations.to_string()),
        (
            "schemes".to_string(),
            schemes.iter().map(SchemeConfig::label).collect::<Vec<_>>().join(","),
        ),
        (sel_key.to_string(), sel_val),
        ("reciprocal".to_string(), reciprocal.to_string()),
        ("condition_bound".to_string(), cb_text),
        ("p".to_string(), p_text),
        ("seed".to_string(), rng_seed.to_string()),
    ];
    Ok(ResolvedSweep { config, entries })
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut map = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("n", a.n.map(|v| v.to_string()));
    set("snr_db", a.snr_db.clone());
    set("realizations", a.realizations.map(|v| v.to_string()));
    set("schemes", a.schemes.clone());
    set("reciprocal", a.reciprocal.map(|v| v.to_string()));
    set("condition_bound", a.condition_bound.map(|v| v.to_string()));
    set("p", a.p.map(|v| v.to_string()));
    set("seed", a.seed.map(|v| v.to_string()));
    if a.perm.is_some() {
        map.remove("sets");
        map.insert("perm".into(), a.perm.clone().unwrap_or_default());
    }
    if a.sets.is_some() {
        map.remove("perm");
        map.insert("sets".into(), a.sets.clone().unwrap_or_default());
    }
    let resolved = resolve_sweep(&map)?;
    let result = run_sweep(&resolved.config)?;

    let mut lines = vec![];
    for (k, v) in &resolved.entries {
        lines.push(format!("{k} = {v}"));
    }
    let mut buf = Vec::new();
    writeln!(buf, "#! mimo-switch sweep")?;
    montecarlo::write_csv(&result, &lines, &mut buf)?;
    match &a.output {
        Some(path) => fs::write(path, &buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => out.write_all(&buf)?,
    }
    Ok(())
}

// ---- gain ----

fn cmd_gain(a: GainArgs, out: &mut dyn Write) -> Result<()> {
    let read = |p: &Path| -> Result<String> {
        fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    };
    let base_curves = read_csv_curves(&read(&a.csv)?)?;
    let other_curves = match &a.other_csv {
        Some(p) => read_csv_curves(&read(p)?)?,
        None => base_curves.clone(),
    };
    let base = base_curves
        .get(&a.base)
        .ok_or_else(|| Error::Config(format!("curve '{}' not found", a.base)))?;
    let other = other_curves
        .get(&a.curve)
        .ok_or_else(|| Error::Config(format!("curve '{}' not found", a.curve)))?;
    header(
        out,
        "gain",
        &[
            ("csv", a.csv.display().to_string()),
            (
                "other_csv",
                a.other_csv
                    .as_ref()
                    .map_or_else(|| a.csv.display().to_string(), |p| p.display().to_string()),
            ),
            ("base", a.base.clone()),
            ("curve", a.curve.clone()),
            ("ref_snr", a.ref_snr.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    let reference = interpolate(base, a.ref_snr)?;
    let gain = db_gain(base, other, reference)?;
    writeln!(out, "reference_throughput_bits = {}", fmt_sig(reference, 12))?;
    writeln!(out, "gain_db = {}", fmt_sig(gain, 12))?;
    Ok(())
}
