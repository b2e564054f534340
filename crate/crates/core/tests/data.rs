mod common;

use hydrogat::data::{
    denormalize, impute_upstream, normalize, sequential_sampler, synth_basin, Dataset, NormStates, Split,
};
use hydrogat::graph::build_graph;
use proptest::prelude::*;

#[test]
fn imputed_dataset_fills_inputs_but_masks_labels() {
    let s = synth_basin(9, 4, 4, 400).unwrap();
    let g = build_graph(&s.dem, &s.catchment, &s.targets).unwrap();
    let mut raw = s.store.clone();
    let h = raw.horizon;
    let holes: Vec<(usize, usize)> = (0..raw.num_targets()).flat_map(|st| (50..80).map(move |t| (st, t + 7 * st))).collect();
    for &(st, t) in &holes {
        raw.discharge[st * h + t] = None;
    }
    let norm = NormStates::fit(&raw, 0..h).unwrap();
    let plain = Dataset::new(&raw, 12, 6, norm.clone()).unwrap();
    let filled = Dataset::imputed(&raw, &g, 12, 6, norm).unwrap();

    for t0 in [30, 45, 60, 70] {
        let (a, b) = (plain.sample(t0), filled.sample(t0));
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.label_mask, b.label_mask);
        let k = raw.num_targets();
        let masked = (0..k * 6).filter(|&i| a.label_mask.data()[i] == 0.0).count();
        let expected = holes.iter().filter(|&&(_, t)| (t0 + 12..t0 + 18).contains(&t)).count();
        assert_eq!(masked, expected);
        for (st, &node) in filled.targets.iter().enumerate() {
            for j in 0..12 {
                let flag = b.inputs.get(&[node, j, 2]);
                assert_eq!(flag, 1.0, "station {st} step {j}");
                if a.inputs.get(&[node, j, 2]) == 1.0 {
                    assert_eq!(a.inputs.get(&[node, j, 1]), b.inputs.get(&[node, j, 1]));
                }
            }
        }
    }
}

#[test]
fn splits_are_ordered_and_disjoint() {
    let s = synth_basin(3, 3, 3, 500).unwrap();
    let ds = Dataset::new(&s.store, 6, 3, NormStates::fit(&s.store, 0..500).unwrap()).unwrap();
    let w = ds.window_len();
    let [tr, va, te] = [Split::Train, Split::Validation, Split::Test].map(|sp| ds.split_starts(sp));
    assert!(!tr.is_empty() && !va.is_empty() && !te.is_empty());
    assert!(tr.last().unwrap() + w <= va[0]);
    assert!(va.last().unwrap() + w <= te[0]);
}

proptest! {
    #[test]
    fn normalize_round_trip(raw in prop::collection::vec(0.0f64..1e4, 2..200)) {
        prop_assume!(raw.iter().any(|v| *v != raw[0]));
        let (norm, state) = normalize(&raw, None).unwrap();
        prop_assert!(norm.iter().all(|v| (0.0..=1.0).contains(v)));
        for (a, b) in raw.iter().zip(denormalize(&norm, &state)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn sampler_partitions(n in 1usize..500, w in 1usize..16) {
        prop_assume!(w <= n);
        let mut next = 0;
        for id in 0..w {
            let r = sequential_sampler(n, w, id).unwrap();
            prop_assert_eq!(r.start, next);
            prop_assert!(r.len() >= n / w && r.len() <= n / w + 1);
            next = r.end;
        }
        prop_assert_eq!(next, n);
    }

    #[test]
    fn imputation_keeps_observations(
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in 0.1f64..4.0,
        n in 10usize..200,
    ) {
        let down: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 97) as f64 + 1.0).collect();
        let up: Vec<Option<f64>> = down
            .iter()
            .enumerate()
            .map(|(i, d)| ((i as u64 + seed) % 3 != 0).then_some(a + b * d + 1e-3 * (i % 5) as f64))
            .collect();
        let fit = impute_upstream(&up, &down).unwrap();
        for (i, u) in up.iter().enumerate() {
            match u {
                Some(v) => prop_assert_eq!(v.to_bits(), fit.values[i].to_bits()),
                None => prop_assert_eq!(fit.values[i], fit.a + fit.b * down[i]),
            }
        }
    }
}
