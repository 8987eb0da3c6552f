use std::fs;
use std::process::Command;

use mimo_switch::cli::{self, channel_to_text, load_channel_file, parse_channel_text};
use mimo_switch::montecarlo::draw_channel;
use mimo_switch::{streams, ChannelRealization, Error};

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut argv = vec!["mimo-switch"];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(&argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn assert_error(r: &Run, code: i32, kind: &str) {
    assert_eq!(r.code, code, "stdout: {} stderr: {}", r.out, r.err);
    assert_eq!(r.err.lines().count(), 1, "{}", r.err);
    assert!(
        r.err.starts_with(&format!("error kind={kind} exit={code} message=")),
        "{}",
        r.err
    );
}

#[test]
fn enumerate_lists_derangements_and_counts_sets() {
    let r = run(&["enumerate", "--derangements", "-n", "4"]);
    assert_eq!(r.code, 0);
    assert_eq!(body(&r.out).len(), 9);
    assert!(r.out.starts_with("#! mimo-switch enumerate\n"));
    assert!(r.out.contains("# seed = "));

    let r = run(&["enumerate", "--condensed", "-n", "5", "--count-only"]);
    assert_eq!(body(&r.out), vec!["56"]);

    let r = run(&["enumerate", "--derangements", "-n", "3", "--format", "csv"]);
    assert_eq!(
        body(&r.out),
        vec![
            "index,source_of,pairwise,matrix",
            "1,\"2,3,1\",false,0 1 0; 0 0 1; 1 0 0",
            "2,\"3,1,2\",false,0 0 1; 1 0 0; 0 1 0",
        ]
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_error(&run(&["enumerate", "-n", "4"]), 1, "usage");
    assert_error(&run(&["frobnicate"]), 1, "usage");
    assert_error(&run(&["enumerate", "--derangements", "-n", "1"]), 1, "invalid-size");
    assert_error(
        &run(&["design", "-n", "4", "--perm", "1,3,2,4"]),
        1,
        "invalid-permutation",
    );
    let help = run(&["sweep", "--help"]);
    assert_eq!(help.code, 0);
    assert!(help.out.contains("--config"));
}

#[test]
fn design_prints_gains_and_power() {
    let r = run(&["design", "-n", "2", "--perm", "2,1", "--channel-inline", "[[1, 0], [0, 1]]", "--snr", "10"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("\nsigma_e_sq = 0.32\n"), "{}", r.out);
    assert!(r.out.contains("rate station=2 bits=2.04439411936"));
    assert!(r.out.contains("achieved_power = 1\n"));
    for key in ["\nA = ", "\nB = ", "\nG =\n", "# channel\n", "# seed = "] {
        assert!(r.out.contains(key), "missing {key:?}");
    }
}

#[test]
fn design_on_singular_channel_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.txt");
    fs::write(&path, "1+0i 2+0i\n2+0i 4+0i\n").unwrap();
    let r = run(&["design", "-n", "2", "--perm", "2,1", "--channel", path.to_str().unwrap()]);
    assert_error(&r, 2, "singular-channel");
    assert!(r.err.contains("uplink"));

    fs::write(&path, "1 0\n0 1\n\n1 1\n1 1\n").unwrap();
    let r = run(&["design", "-n", "2", "--perm", "2,1", "--channel", path.to_str().unwrap()]);
    assert_error(&r, 2, "singular-channel");
    assert!(r.err.contains("downlink"));
}

#[test]
fn channel_files_parse_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.txt");
    fs::write(&path, "# identity\n1+0i 0+0i\n0+0i 1+0i\n").unwrap();
    let ch = load_channel_file(&path, 1e6).unwrap();
    assert_eq!(ch.h_u(), ChannelRealization::identity(2).h_u());
    assert_eq!(ch.h_d(), &ch.h_u().transpose());

    for reciprocal in [true, false] {
        let mut rng = streams::substream(31, &[streams::TAG_CHANNEL]);
        let drawn = draw_channel(4, &mut rng, reciprocal, 1e6).unwrap().channel;
        let back = parse_channel_text(&channel_to_text(&drawn), 1e6).unwrap();
        assert_eq!(back.h_u(), drawn.h_u());
        assert_eq!(back.h_d(), drawn.h_d());
    }

    match parse_channel_text("1+0i 0\n0 1+0j\n", 1e6).unwrap_err() {
        Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
        e => panic!("{e:?}"),
    }
    let err = load_channel_file(&dir.path().join("missing.txt"), 1e6).unwrap_err();
    assert_eq!(err.kind(), "io");
}

const FIG_DEMAND: &str = "# source destinations label\n1 2,3 a\n2 1 b\n2 3 c\n3 1 d\n3 2 e\n";

#[test]
fn schedule_compiles_demand_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demand.txt");
    fs::write(&path, FIG_DEMAND).unwrap();
    let r = run(&["schedule", "--demand", path.to_str().unwrap(), "-n", "3"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(
        body(&r.out),
        vec![
            "slot 1 [2,3,1] weight=1: 1->3:a 2->1:b 3->2:e",
            "slot 2 [3,1,2] weight=1: 1->2:a 2->3:c 3->1:d",
        ]
    );

    fs::write(&path, "1 2 a\n1 2 b\n").unwrap();
    let r = run(&["schedule", "--demand", path.to_str().unwrap(), "-n", "3"]);
    assert_error(&r, 2, "demand-infeasible");

    fs::write(&path, "1 2,x a\n").unwrap();
    let r = run(&["schedule", "--demand", path.to_str().unwrap(), "-n", "3"]);
    assert_error(&r, 1, "parse");
    assert!(r.err.contains("line 1"), "{}", r.err);
}

const SWEEP_CONFIG: &str = "\
# two-scheme comparison
n = 4
snr_db = 0:20:10
realizations = 40
schemes = basic-real, nc-real
perm = 4,3,2,1
seed = 21
";

#[test]
fn sweep_from_config_writes_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.conf");
    fs::write(&cfg, SWEEP_CONFIG).unwrap();
    let r = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let rows = body(&r.out);
    assert_eq!(rows[0], "snr_db,scheme_or_set,mean_throughput_bits,std_err,realizations,redraws");
    assert_eq!(rows.len(), 1 + 3 * 2);
    assert!(rows[1..].iter().any(|l| l.contains(",basic-real,")));
    assert!(rows[1..].iter().any(|l| l.contains(",nc-real,")));
    assert!(r.out.contains("# seed = 21\n"));

    // flags win over the file
    let out = dir.path().join("out.csv");
    let r2 = run(&["sweep", "--config", cfg.to_str().unwrap(), "--seed", "22", "-o", out.to_str().unwrap()]);
    assert_eq!(r2.code, 0, "{}", r2.err);
    assert!(r2.out.is_empty());
    let written = fs::read_to_string(&out).unwrap();
    assert!(written.contains("# seed = 22\n"));
    assert_ne!(body(&written), body(&r.out));
}

#[test]
fn sweep_header_reproduces_the_run() {
    let r = run(&[
        "sweep", "-n", "4", "--sets", "1,3", "--snr-db", "0,10", "--realizations", "15", "--schemes",
        "random-phase:L=5:M=4", "--seed", "5",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains(",random-phase:L=5:M=4@Q3,"));
    let config: String = r
        .out
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .map(|l| format!("{l}\n"))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.conf");
    fs::write(&path, config).unwrap();
    let replay = run(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(replay.code, 0, "{}", replay.err);
    assert_eq!(replay.out, r.out);
}

#[test]
fn sweep_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "n = 4\nrealisations = 10\n").unwrap();
    let r = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_error(&r, 1, "config");
    assert!(r.err.contains("realisations"));
    assert_error(&run(&["sweep", "-n", "4", "--schemes", "fancy"]), 1, "config");
}

#[test]
fn gain_reads_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let r = run(&[
        "sweep", "-n", "4", "--perm", "4,3,2,1", "--snr-db", "0:20:5", "--realizations", "60", "--schemes",
        "basic-real,nc-real", "--seed", "3", "-o", csv.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let g = run(&["gain", "--csv", csv.to_str().unwrap(), "--base", "basic-real", "--curve", "basic-real"]);
    assert_eq!(g.code, 0, "{}", g.err);
    assert!(g.out.contains("\ngain_db = 0\n"), "{}", g.out);
    let g = run(&[
        "gain", "--csv", csv.to_str().unwrap(), "--base", "basic-real", "--curve", "nc-real",
    ]);
    let value: f64 = g
        .out
        .lines()
        .find_map(|l| l.strip_prefix("gain_db = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(value > 0.0);
    let g = run(&["gain", "--csv", csv.to_str().unwrap(), "--base", "basic-real", "--curve", "nope"]);
    assert_error(&g, 1, "config");
    let g = run(&["gain", "--csv", csv.to_str().unwrap(), "--base", "basic-real", "--curve", "basic-real", "--ref-snr", "40"]);
    assert_eq!(g.code, 2);
}

#[test]
fn verify_reports_pass() {
    let r = run(&["verify", "-n", "3", "--perm", "2,3,1", "--scheme", "nc-real", "--symbols", "100000", "--seed", "4"]);
    assert_eq!(r.code, 0, "{}{}", r.out, r.err);
    assert!(r.out.contains("\nresult = pass\n"));
    assert_eq!(r.out.matches("station=").count(), 3);
}

#[test]
fn binary_exit_codes_and_seed_variable() {
    let bin = env!("CARGO_BIN_EXE_mimo-switch");
    let out = Command::new(bin)
        .args(["enumerate", "--derangements", "-n", "3"])
        .env("MIMO_SWITCH_SEED", "777")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("# seed = 777\n"));

    let out = Command::new(bin).args(["enumerate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    fs::write(&path, "1 2 a\n1 2 b\n").unwrap();
    let out = Command::new(bin)
        .args(["schedule", "--demand", path.to_str().unwrap(), "-n", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
