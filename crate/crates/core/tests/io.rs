use afpca::data::{Curve, Design};
use afpca::io::{read_curves, write_curves};
use afpca::FunctionalSample;
use proptest::prelude::*;

fn curve_strategy(id: u64) -> impl Strategy<Value = Curve> {
    prop::collection::btree_set(0u64..=(1u64 << 52), 1..20).prop_flat_map(move |ticks| {
        let times: Vec<f64> = ticks.iter().map(|&k| k as f64 / (1u64 << 52) as f64).collect();
        let n = times.len();
        prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, n)
            .prop_map(move |values| Curve::new(id, times.clone(), values).unwrap())
    })
}

proptest! {
    #[test]
    fn curve_files_round_trip_bit_exactly(a in curve_strategy(0), b in curve_strategy(1)) {
        let sample = FunctionalSample::new(vec![a, b], Design::Independent).unwrap();
        let mut buf = Vec::new();
        write_curves(&mut buf, &sample).unwrap();
        let back = read_curves(buf.as_slice()).unwrap();
        for (x, y) in sample.curves().iter().zip(back.curves()) {
            prop_assert_eq!(x.id(), y.id());
            for (p, q) in x.times().iter().zip(y.times()) {
                prop_assert_eq!(p.to_bits(), q.to_bits());
            }
            for (p, q) in x.values().iter().zip(y.values()) {
                prop_assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }
}
