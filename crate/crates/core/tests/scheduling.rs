use mimo_switch::combinatorics::{enumerate_condensed_sets, is_pairwise};
use mimo_switch::scheduling::{compile_schedule, fair_throughput, fair_weights, TrafficDemand};
use mimo_switch::Error;
use proptest::prelude::*;

proptest! {
    #[test]
    fn throughput_ignores_rate_order(mut rates in prop::collection::vec(0.01f64..10.0, 1..8), seed in any::<u64>()) {
        let t = fair_throughput(&rates).unwrap();
        let k = (seed as usize) % rates.len();
        rates.rotate_left(k);
        rates.reverse();
        prop_assert!((fair_throughput(&rates).unwrap() - t).abs() <= 1e-12 * t);
    }

    #[test]
    fn throughput_scales_with_rates(rates in prop::collection::vec(0.01f64..10.0, 1..8), lambda in 0.01f64..100.0) {
        let t = fair_throughput(&rates).unwrap();
        let scaled: Vec<f64> = rates.iter().map(|r| r * lambda).collect();
        prop_assert!((fair_throughput(&scaled).unwrap() - lambda * t).abs() <= 1e-12 * lambda * t);
    }

    #[test]
    fn throughput_times_slots_is_constant(rates in prop::collection::vec(0.01f64..10.0, 1..8), c in 0.01f64..100.0) {
        let t = fair_throughput(&rates).unwrap();
        let slots: f64 = fair_weights(&rates, c).unwrap().iter().sum();
        let want = rates.len() as f64 * c;
        prop_assert!((t * slots - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn throughput_lies_between_min_and_max(rates in prop::collection::vec(0.01f64..10.0, 1..8)) {
        let t = fair_throughput(&rates).unwrap();
        let lo = rates.iter().cloned().fold(f64::MAX, f64::min);
        let hi = rates.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12));
    }
}

#[test]
fn full_unicast_is_served_once_per_pair() {
    for n in 2..=5 {
        let demand = TrafficDemand::full_unicast(n);
        for set in enumerate_condensed_sets(n).unwrap() {
            let s = compile_schedule(&demand, &set, &vec![1.0; n - 1]).unwrap();
            let mut pairs: Vec<(usize, usize)> = s.deliveries().into_iter().map(|(i, j, _)| (i, j)).collect();
            pairs.sort();
            pairs.dedup();
            assert_eq!(pairs.len(), n * (n - 1));
            assert_eq!(s.deliveries().len(), n * (n - 1));
        }
    }
}

#[test]
fn every_four_station_set_has_a_pairwise_member() {
    for set in enumerate_condensed_sets(4).unwrap() {
        assert!(set.members().iter().any(is_pairwise), "{set}");
    }
}

#[test]
fn multicast_without_a_matching_slot_is_idle_elsewhere() {
    let set = &enumerate_condensed_sets(4).unwrap()[0];
    let demand = TrafficDemand::parse("1 * m 2\n", 4).unwrap();
    let s = compile_schedule(&demand, set, &[1.0, 2.0, 4.0]).unwrap();
    for slot in &s.slots {
        assert_eq!(slot.payloads[0].as_deref(), Some("m"));
        assert!(slot.payloads[1..].iter().all(Option::is_none));
    }
    let weights: Vec<f64> = s.slots.iter().map(|s| s.weight).collect();
    assert_eq!(weights, vec![2.0, 1.0, 0.5]);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let set = &enumerate_condensed_sets(3).unwrap()[0];
    let demand = TrafficDemand::full_unicast(4);
    assert!(matches!(
        compile_schedule(&demand, set, &[1.0, 1.0]),
        Err(Error::SizeMismatch { .. })
    ));
    let demand = TrafficDemand::full_unicast(3);
    assert!(compile_schedule(&demand, set, &[1.0]).is_err());
    assert!(compile_schedule(&demand, set, &[1.0, -1.0]).is_err());
}
