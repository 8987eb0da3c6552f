use mimo_switch::combinatorics::Permutation;
use mimo_switch::montecarlo::draw_channel;
use mimo_switch::oracle::{simulate_slot, verify_design, Check, SimOptions};
use mimo_switch::relay::{
    self, build_beamformer, compute_gains, solve_sigma_e, ChannelRealization, RelayDesign,
    SchemeConfig, SystemParams,
};
use mimo_switch::streams;

fn setup(n: usize, seed: u64) -> (ChannelRealization, Permutation, SystemParams) {
    let mut rng = streams::substream(seed, &[streams::TAG_CHANNEL]);
    let ch = draw_channel(n, &mut rng, true, 1e6).unwrap().channel;
    let source: Vec<usize> = (0..n).map(|j| (j + n - 1) % n + 1).collect();
    let p = Permutation::derangement_from_one_based(&source).unwrap();
    (ch, p, SystemParams::new(1.0, 0.1, 0.1).unwrap())
}

fn design(ch: &ChannelRealization, p: &Permutation, params: &SystemParams, s: SchemeConfig) -> RelayDesign {
    relay::design(ch, p, params, &s.with_seed(3)).unwrap()
}

#[test]
fn sinr_and_power_match_the_design() {
    for (k, scheme) in [
        SchemeConfig::basic(),
        SchemeConfig::random_phase(10, 8),
        SchemeConfig::nc_real(),
        SchemeConfig::nc_random_phase(10, 8),
    ]
    .into_iter()
    .enumerate()
    {
        let (ch, p, params) = setup(4, 40 + k as u64);
        let d = design(&ch, &p, &params, scheme);
        let mut rng = streams::substream(1, &[streams::TAG_SYMBOLS, k as u64]);
        let report = verify_design(&d, &ch, &params, 200_000, 0.03, &mut rng);
        assert!(report.passed(), "{:?}", report.failures);
        for g in &report.trace.wanted_gain {
            assert!((g - 1.0).norm() < 0.05, "{g}");
        }
    }
}

#[test]
fn noiseless_outputs_carry_no_leakage() {
    let (ch, p, params) = setup(5, 7);
    let d = design(&ch, &p, &params, SchemeConfig::nc_random_phase(10, 8));
    let quiet = SystemParams {
        p: 1.0,
        sigma_sq: 0.0,
        sigma_r_sq: 0.0,
    };
    let mut rng = streams::substream(2, &[streams::TAG_SYMBOLS]);
    let t = simulate_slot(&d, &ch, &quiet, 2048, &mut rng, SimOptions::default());
    for j in 0..5 {
        assert!(t.residual_interference[j] / t.signal_power[j] <= 1e-20);
        assert!(t.self_interference[j] / t.signal_power[j] <= 1e-20);
        assert!(t.noise_interference_power[j] <= 1e-10);
    }
}

#[test]
fn uncancelled_echo_lowers_sinr() {
    let (ch, p, params) = setup(4, 8);
    let zeros = [0.0; 4];
    let sigma_e_sq = solve_sigma_e(&ch, &p, &params, &zeros, 0.5).unwrap();
    let (a, b) = compute_gains(&ch, &p, &params, sigma_e_sq, &zeros, 0.5).unwrap();
    let g = build_beamformer(&ch, &p, &a, &b).unwrap();
    let d = RelayDesign {
        permutation: p.clone(),
        achieved_power: relay::relay_power(&g, &ch, &params),
        a,
        b,
        sigma_e_sq,
        g,
    };
    let run = |cancel_self| {
        let mut rng = streams::substream(4, &[streams::TAG_SYMBOLS]);
        simulate_slot(&d, &ch, &params, 50_000, &mut rng, SimOptions { cancel_self })
    };
    let (on, off) = (run(true), run(false));
    for j in 0..4 {
        assert!(off.sinr[j] < on.sinr[j]);
        assert!(off.self_interference[j] > 0.2);
        assert!(on.self_interference[j] < 1e-3);
    }
}

#[test]
fn cancellation_is_a_no_op_without_echo() {
    let (ch, p, params) = setup(3, 9);
    let d = design(&ch, &p, &params, SchemeConfig::basic());
    let run = |cancel_self| {
        let mut rng = streams::substream(5, &[streams::TAG_SYMBOLS]);
        simulate_slot(&d, &ch, &params, 10_000, &mut rng, SimOptions { cancel_self })
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn perturbed_gains_fail_fairness() {
    let (ch, p, params) = setup(4, 10);
    let mut d = design(&ch, &p, &params, SchemeConfig::basic());
    d.a[0] *= 1.1;
    d.g = build_beamformer(&ch, &p, &d.a, &d.b).unwrap();
    let mut rng = streams::substream(6, &[streams::TAG_SYMBOLS]);
    let report = verify_design(&d, &ch, &params, 200_000, 0.03, &mut rng);
    assert!(report.failures.iter().any(|f| f.check == Check::Fairness));
}

#[test]
fn halved_budget_fails_power_check() {
    let (ch, p, params) = setup(4, 12);
    let d = design(&ch, &p, &params, SchemeConfig::random_phase(10, 8));
    let half = SystemParams::new(0.5, params.sigma_sq, params.sigma_r_sq).unwrap();
    let mut rng = streams::substream(7, &[streams::TAG_SYMBOLS]);
    let report = verify_design(&d, &ch, &half, 100_000, 0.03, &mut rng);
    let f = report
        .failures
        .iter()
        .find(|f| f.check == Check::RelayPower)
        .expect("power failure");
    assert_eq!(f.expected, 0.5);
    assert!((f.observed - 1.0).abs() < 0.03);
}
