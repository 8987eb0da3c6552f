use std::f64::consts::TAU;

use mimo_switch::combinatorics::{enumerate_derangements, is_pairwise, Permutation};
use mimo_switch::montecarlo::draw_channel;
use mimo_switch::relay::power::PowerModel;
use mimo_switch::relay::{self, ChannelRealization, SchemeConfig, SystemParams};
use mimo_switch::{streams, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn channel(n: usize, seed: u64, reciprocal: bool) -> ChannelRealization {
    let mut rng = streams::substream(seed, &[streams::TAG_CHANNEL]);
    draw_channel(n, &mut rng, reciprocal, 1e6).unwrap().channel
}

fn derangement(n: usize, pick: usize) -> Permutation {
    let all = enumerate_derangements(n).unwrap();
    all[pick % all.len()].clone()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `(P + B) H_u^-1` rows and `H_d^-1 A (P+B) H_u^-1` computed from scratch.
struct Direct {
    pb_hu_inv: DMatrix<C64>,
    hd_inv: DMatrix<C64>,
    hu: DMatrix<C64>,
}

impl Direct {
    fn new(ch: &ChannelRealization, p: &Permutation, b: &[C64]) -> Self {
        let n = p.n();
        let hu_inv = ch.h_u().clone().try_inverse().unwrap();
        let hd_inv = ch.h_d().clone().try_inverse().unwrap();
        let mut pb = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            pb[(j, p.source(j))] += C64::new(1.0, 0.0);
            pb[(j, j)] += b[j];
        }
        Self {
            pb_hu_inv: pb * hu_inv,
            hd_inv,
            hu: ch.h_u().clone(),
        }
    }

    fn relay_noise(&self, j: usize, sigma_r_sq: f64) -> f64 {
        sigma_r_sq * self.pb_hu_inv.row(j).norm_squared()
    }

    fn power(&self, a: &[C64], sigma_r_sq: f64) -> f64 {
        let g = &self.hd_inv * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(a)) * &self.pb_hu_inv;
        (&g * &self.hu).norm_squared() + sigma_r_sq * g.norm_squared()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_form_matches_direct_trace(
        n in 2usize..=5,
        seed in any::<u64>(),
        pick in any::<usize>(),
        reciprocal in any::<bool>(),
        phases in prop::collection::vec(0.0..TAU, 5),
        dirs in prop::collection::vec(0.0..TAU, 5),
        beta in 0.0f64..2.0,
        sigma_sq in 0.01f64..1.0,
        sigma_r_sq in 0.0f64..1.0,
        stretch in 0.01f64..10.0,
    ) {
        let ch = channel(n, seed, reciprocal);
        let p = derangement(n, pick);
        let params = SystemParams::new(1.0, sigma_sq, sigma_r_sq).unwrap();
        let model = PowerModel::new(&ch, &p, &params).unwrap();
        let z: Vec<C64> = dirs[..n].iter().map(|&t| C64::from_polar(1.0, t)).collect();
        let form = model.trial(&phases[..n], &z).unwrap().at(beta);

        let b: Vec<C64> = z.iter().map(|z| z * beta).collect();
        let direct = Direct::new(&ch, &p, &b);
        for j in 0..n {
            let c = direct.relay_noise(j, sigma_r_sq);
            prop_assert!((form.noise_floor()[j] - c).abs() <= 1e-9 * (1.0 + c));
        }
        let sigma_e_sq = form.lower() * (1.0 + stretch);
        let m = form.magnitudes(sigma_e_sq);
        let a: Vec<C64> = (0..n)
            .map(|j| {
                let c = direct.relay_noise(j, sigma_r_sq);
                let mag = (sigma_sq / (sigma_e_sq - c)).sqrt();
                prop_assert!(rel(m[j], mag) <= 1e-9);
                Ok(C64::from_polar(mag, phases[j]))
            })
            .collect::<Result<_, TestCaseError>>()?;
        prop_assert!(rel(form.power(sigma_e_sq), direct.power(&a, sigma_r_sq)) <= 1e-9);
    }

    #[test]
    fn designs_are_exact_and_fair(
        n in 2usize..=6,
        seed in any::<u64>(),
        pick in any::<usize>(),
        scheme_ix in 0usize..7,
        snr in prop::sample::select(vec![0.0, 10.0, 20.0]),
        p in 0.5f64..4.0,
    ) {
        let ch = channel(n, seed, true);
        let perm = derangement(n, pick);
        let scheme = [
            SchemeConfig::basic(),
            SchemeConfig::counter_phase().with_fallback(true),
            SchemeConfig::random_phase(10, 8),
            SchemeConfig::random_phase(10, 4),
            SchemeConfig::nc_real(),
            SchemeConfig::nc_random_phase(10, 8),
            SchemeConfig::nc_random_phase(3, 16),
        ][scheme_ix]
            .clone()
            .with_seed(seed);
        let noise = 10f64.powf(-snr / 10.0);
        let params = SystemParams::new(p, noise, noise).unwrap();
        let d = relay::design(&ch, &perm, &params, &scheme).unwrap();
        prop_assert!(d.reconstruction_error(&ch) <= 1e-8);
        prop_assert!(rel(d.relay_power(&ch, &params), p) <= 1e-6);
        for v in d.station_noise(&ch, &params) {
            prop_assert!(rel(v, d.sigma_e_sq) <= 1e-8);
        }
        if !scheme.kind.is_network_coded() {
            prop_assert!(d.b.iter().all(|b| *b == C64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn scheme_dominance(
        n in 2usize..=5,
        seed in any::<u64>(),
        pick in any::<usize>(),
        snr in 0.0f64..25.0,
    ) {
        let ch = channel(n, seed, true);
        let perm = derangement(n, pick);
        let noise = 10f64.powf(-snr / 10.0);
        let params = SystemParams::new(1.0, noise, noise).unwrap();
        let run = |s: SchemeConfig| relay::design(&ch, &perm, &params, &s.with_seed(seed)).unwrap().sigma_e_sq;
        let basic = run(SchemeConfig::basic());
        let nc = run(SchemeConfig::nc_real());
        prop_assert!(nc <= basic);
        prop_assert!(run(SchemeConfig::random_phase(10, 8)) <= basic);
        prop_assert!(run(SchemeConfig::random_phase(30, 8)) <= run(SchemeConfig::random_phase(10, 8)));
        prop_assert!(run(SchemeConfig::nc_random_phase(5, 8)) <= nc);
        if is_pairwise(&perm) {
            let counter = run(SchemeConfig::counter_phase());
            prop_assert!(counter.is_finite() && counter > 0.0);
        }
    }

    #[test]
    fn pruned_search_matches_exhaustive(
        n in 2usize..=4,
        seed in any::<u64>(),
        pick in any::<usize>(),
        snr in 0.0f64..20.0,
        random in any::<bool>(),
    ) {
        let ch = channel(n, seed, true);
        let perm = derangement(n, pick);
        let noise = 10f64.powf(-snr / 10.0);
        let params = SystemParams::new(1.0, noise, noise).unwrap();
        let mut s = if random { SchemeConfig::nc_random_phase(4, 8) } else { SchemeConfig::nc_real() };
        s = s.with_seed(seed);
        let pruned = relay::design(&ch, &perm, &params, &s).unwrap();
        s.prune = false;
        let exhaustive = relay::design(&ch, &perm, &params, &s).unwrap();
        prop_assert_eq!(pruned.sigma_e_sq, exhaustive.sigma_e_sq);
        prop_assert_eq!(pruned.b, exhaustive.b);
    }

    #[test]
    fn power_decreases_through_the_root(
        n in 2usize..=5,
        seed in any::<u64>(),
        pick in any::<usize>(),
        snr in 0.0f64..25.0,
        phases in prop::collection::vec(0.0..TAU, 5),
        beta in 0.0f64..1.0,
    ) {
        let ch = channel(n, seed, true);
        let perm = derangement(n, pick);
        let noise = 10f64.powf(-snr / 10.0);
        let params = SystemParams::new(1.0, noise, noise).unwrap();
        let model = PowerModel::new(&ch, &perm, &params).unwrap();
        let ones = vec![C64::new(1.0, 0.0); n];
        let form = model.trial(&phases[..n], &ones).unwrap().at(beta);
        let root = form.solve().unwrap();
        prop_assert!(rel(form.power(root), 1.0) <= 1e-6);
        let h = root * 1e-6;
        prop_assert!(form.power(root + h) < form.power(root - h));
    }
}

#[test]
fn power_is_infinite_at_the_noise_floor() {
    let ch = channel(3, 5, true);
    let p = derangement(3, 0);
    let params = SystemParams::new(1.0, 0.1, 0.1).unwrap();
    let model = PowerModel::new(&ch, &p, &params).unwrap();
    let form = model.trial(&[0.0; 3], &[C64::new(1.0, 0.0); 3]).unwrap().at(0.0);
    assert_eq!(form.power(form.lower()), f64::INFINITY);
    assert!(form.power(form.lower() * 1.5).is_finite());
}

#[test]
fn nc_real_matches_basic_at_zero_b() {
    let ch = channel(4, 11, true);
    let p = derangement(4, 3);
    let params = SystemParams::new(1.0, 0.1, 0.1).unwrap();
    let mut nc = SchemeConfig::nc_real();
    nc.b_grid = vec![0.0];
    let a = relay::design(&ch, &p, &params, &SchemeConfig::basic()).unwrap();
    let b = relay::design(&ch, &p, &params, &nc).unwrap();
    assert!(rel(a.sigma_e_sq, b.sigma_e_sq) <= 1e-12);
}
