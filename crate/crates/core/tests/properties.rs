mod common;

use kvqa::knowledge::validity::{WA, WC};
use kvqa::knowledge::{select_valid, validity_scores};
use kvqa::model::{build_attention_mask, init_model_params, MaskMode, Variant};
use kvqa::nn::{ParamStore, Tensor};
use kvqa::run::transfer_params;
use proptest::prelude::*;

fn sizes() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (0usize..5, 0usize..5, 0usize..6, 1usize..6)
}

proptest! {
    #[test]
    fn dropping_knowledge_rows_gives_the_baseline_mask((l, m, n, d) in sizes()) {
        let with = build_attention_mask(l, m, n, d, MaskMode::Constrained, false).unwrap();
        let without = build_attention_mask(l, m, n, d, MaskMode::NoKnowledge, false).unwrap();
        let s = with.sizes;
        let keep: Vec<usize> = (0..s.total()).filter(|&i| !(s.knw_start()..s.prv_start()).contains(&i)).collect();
        prop_assert_eq!(keep.len(), without.sizes.total());
        for (a, &r) in keep.iter().enumerate() {
            for (b, &c) in keep.iter().enumerate() {
                prop_assert_eq!(with.is_open(r, c), without.is_open(a, b));
            }
        }
    }

    #[test]
    fn wider_modes_only_open_entries((l, m, n, d) in sizes()) {
        let strict = build_attention_mask(l, m, n, d, MaskMode::Constrained, false).unwrap();
        let e = strict.sizes.total();
        for wider in [
            build_attention_mask(l, m, n, d, MaskMode::Constrained, true).unwrap(),
            build_attention_mask(l, m, n, d, MaskMode::ImageLevel, false).unwrap(),
            build_attention_mask(l, m, n, d, MaskMode::Unconstrained, false).unwrap(),
        ] {
            for r in 0..e {
                for c in 0..e {
                    prop_assert!(!strict.is_open(r, c) || wider.is_open(r, c));
                }
            }
        }
    }

    #[test]
    fn inputs_never_see_decoder_rows((l, m, n, d) in sizes(), open in any::<bool>()) {
        for mode in [MaskMode::Constrained, MaskMode::NoKnowledge, MaskMode::ImageLevel] {
            let mask = build_attention_mask(l, m, n, d, mode, open).unwrap();
            let p = mask.sizes.prv_start();
            prop_assert!(mask.is_causal());
            for r in 0..p {
                for c in p..mask.sizes.total() {
                    prop_assert!(!mask.is_open(r, c));
                }
            }
        }
    }

    #[test]
    fn validity_scores_form_a_distribution(
        seed in any::<u64>(),
        k in 1usize..6,
        dim in 1usize..6,
        h in 1usize..5,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.insert(WA, common::normal(&mut rng, &[dim, h], 1.0));
        store.insert(WC, common::normal(&mut rng, &[h, 1], 1.0));
        let cands: Vec<Vec<f64>> = (0..k).map(|_| common::normal(&mut rng, &[dim], 1.0).into_data()).collect();
        let ctx = common::normal(&mut rng, &[dim], 1.0).into_data();
        let p = validity_scores(&cands, &ctx, &store).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let best = select_valid(&p).unwrap();
        prop_assert!(p.iter().all(|&x| x <= p[best]));
    }
}

#[test]
fn baseline_round_trip_keeps_shared_tensors() {
    let full = common::tiny_config(Variant::Ektvqa, 3);
    let base = common::tiny_config(Variant::Tvqa, 3);
    let mut trained = init_model_params(&full, 9).unwrap();
    for (_, t) in trained.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += 0.25);
    }
    let stripped = transfer_params(&trained, &base, 9).unwrap();
    let back = transfer_params(&stripped, &full, 9).unwrap();
    let fresh = init_model_params(&full, 9).unwrap();
    for (name, t) in back.iter() {
        let expected: &Tensor = if stripped.contains(name) {
            trained.get(name).unwrap()
        } else {
            fresh.get(name).unwrap()
        };
        assert_eq!(t, expected, "{name}");
    }
}
